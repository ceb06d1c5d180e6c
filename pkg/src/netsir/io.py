"""CSV and JSON persistence for trajectories, datasets, runs and sweeps.

Floats are written with ``repr`` so files round-trip exactly and identical
inputs give byte-identical files.  Trajectories are clamped to ``[0, 1]``
only at output time; in-memory values are left untouched.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .control import ControlledRun
from .estimation import ErrorSurface, EstimatedTrajectory
from .model import Trajectory
from .stability import GESCertificate
from .testing import TestingDataset

TRAJECTORY_HEADER = ["k", "node", "s", "x", "r"]
ESTIMATED_HEADER = TRAJECTORY_HEADER + ["estimated"]
TESTING_HEADER = ["k", "node", "C", "D", "cumC", "cumD", "active", "c", "d"]
CONTROL_HEADER = TRAJECTORY_HEADER + ["gamma_applied", "contraction", "control_active"]
SURFACE_HEADER = ["T1", "s0_hat", "error_empirical", "error_analytic"]


def _f(v) -> str:
    return repr(float(v))


def _names(names, n):
    return list(names) if names else [str(i) for i in range(n)]


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return path


def _traj_rows(s, x, r, names):
    s, x, r = (np.clip(a, 0.0, 1.0) for a in (s, x, r))
    for k in range(s.shape[0]):
        for i, name in enumerate(names):
            yield [k, name, _f(s[k, i]), _f(x[k, i]), _f(r[k, i])]


def write_trajectory(path, traj: Trajectory, names=()) -> Path:
    return write_csv(path, TRAJECTORY_HEADER, _traj_rows(traj.s, traj.x, traj.r, _names(names, traj.n)))


def read_trajectory(path, names=None) -> Trajectory:
    """Read a ``k,node,s,x,r`` file back; node order follows first appearance unless given."""
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    order = list(names) if names else list(dict.fromkeys(r["node"] for r in rows))
    K = max(int(r["k"]) for r in rows) + 1
    out = {c: np.full((K, len(order)), np.nan) for c in "sxr"}
    col = {name: i for i, name in enumerate(order)}
    for row in rows:
        for c in "sxr":
            out[c][int(row["k"]), col[row["node"]]] = float(row[c])
    return Trajectory(out["s"], out["x"], out["r"])


def write_estimate(path, true_traj: Trajectory | None, estimate: EstimatedTrajectory, names=()) -> Path:
    """True rows (``estimated=0``, if given) followed by estimated rows (``estimated=1``)."""
    names = _names(names, estimate.s_hat.shape[1])
    rows = []
    if true_traj is not None:
        rows += [row + [0] for row in _traj_rows(true_traj.s, true_traj.x, true_traj.r, names)]
    est = estimate.clamped()
    rows += [row + [1] for row in _traj_rows(est.s_hat, est.x_hat, est.r_hat, names)]
    return write_csv(path, ESTIMATED_HEADER, rows)


def write_testing(path, data: TestingDataset, names=()) -> Path:
    names = _names(names, data.n)
    rows = []
    for k in range(data.days):
        for i, name in enumerate(names):
            rows.append([k, name, int(data.C[k, i]), int(data.D[k, i]), _f(data.cum_C[k, i]), _f(data.cum_D[k, i]),
                         _f(data.active[k, i]), _f(data.c[k, i]), _f(data.d[k, i])])
    return write_csv(path, TESTING_HEADER, rows)


def read_testing(path, populations, T1: int, T2: int, mode: str = "expectation", names=None) -> TestingDataset:
    """Load a testing CSV for estimation; window and populations are not stored in the file."""
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    order = list(names) if names else list(dict.fromkeys(r["node"] for r in rows))
    days = max(int(r["k"]) for r in rows) + 1
    col = {name: i for i, name in enumerate(order)}
    arr = {key: np.zeros((days, len(order))) for key in ("C", "D", "cumC", "cumD", "active", "c", "d")}
    for row in rows:
        k, i = int(row["k"]), col[row["node"]]
        for key in arr:
            arr[key][k, i] = float(row[key])
    return TestingDataset(np.asarray(populations), T1, T2, mode, arr["C"].astype(np.int64), arr["D"].astype(np.int64),
                          arr["c"], arr["d"], arr["cumC"], arr["cumD"], arr["active"])


def control_rows(run: ControlledRun, names=(), label=None):
    """Rows of the control schema, optionally prefixed by a group label."""
    traj = run.trajectory
    names = _names(names, traj.n)
    K = run.applied_gamma.shape[0]
    lead = [] if label is None else [label]
    for row in _traj_rows(traj.s, traj.x, traj.r, names):
        k, i = row[0], names.index(row[1])
        if k < K:
            yield lead + row + [_f(run.applied_gamma[k, i]), _f(run.contraction[k]), int(run.active[k])]
        else:
            yield lead + row + ["", "", ""]


def write_control(path, run: ControlledRun, names=()) -> Path:
    return write_csv(path, CONTROL_HEADER, control_rows(run, names))


def write_surface(path, surface: ErrorSurface) -> Path:
    return write_csv(path, SURFACE_HEADER, ([T1, _f(s0), _f(e), _f(a)] for T1, s0, e, a in surface.rows()))


def write_json(path, payload: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return path


def write_certificate(path, cert: GESCertificate) -> Path:
    return write_json(path, cert.to_dict())
