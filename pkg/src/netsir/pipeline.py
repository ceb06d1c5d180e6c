"""Stage orchestration behind the command line.

Stages run in a fixed order and write into one run directory::

    simulate  -> trajectory.csv
    certify   -> certificate.json
    gen-data  -> testing.csv          (needs simulate)
    estimate  -> estimate.csv         (needs gen-data)
    control   -> control_compare.csv
    compare   -> release_compare.csv

A stage whose prerequisite is not selected reuses the prerequisite's file
from the run directory if it is there.  Every run also writes
``manifest.json`` (config hash, seed, versions, output hashes) and
``plot_figures.py``, a standalone matplotlib script that reads only the CSVs.
"""
from __future__ import annotations

import hashlib
import platform
import sys
from dataclasses import replace
from importlib import metadata
from pathlib import Path

import numpy as np

from . import io
from .config import ScenarioConfig
from .control import ControlConfig, check_hypotheses, run_closed_loop
from .estimation import estimate_states, error_sweep
from .model import simulate, validate_network
from .stability import check_ges
from .testing import generate_dataset

STAGES = ("simulate", "certify", "gen-data", "estimate", "control", "compare")
REQUIRES = {"gen-data": "simulate", "estimate": "gen-data"}
OUTPUTS = {
    "simulate": "trajectory.csv",
    "certify": "certificate.json",
    "gen-data": "testing.csv",
    "estimate": "estimate.csv",
    "control": "control_compare.csv",
    "compare": "release_compare.csv",
}
COMPARE_HEADER = ["mode"] + io.CONTROL_HEADER
RELEASE_HEADER = ["window"] + io.CONTROL_HEADER


class StageError(RuntimeError):
    """A stage cannot run: missing prerequisite output or config section."""


def validation_summary(cfg: ScenarioConfig) -> tuple[bool, list[str]]:
    """Well-posedness report plus controller hypotheses (informational)."""
    report = validate_network(cfg.network, cfg.horizon)
    lines = [f"network {cfg.network.name}: {cfg.network.n} nodes ({', '.join(cfg.names)}), h={cfg.network.h}, "
             f"horizon={cfg.horizon}"]
    lines += [f"  {v.message}" for v in report.violations] or ["  well-posedness: ok"]
    if cfg.control is not None and cfg.control.mode != "none":
        hyp = check_hypotheses(cfg.network, cfg.control.epsilon, cfg.control.mode, cfg.horizon)
        lines += [f"  controller {line}" for line in str(hyp).splitlines()]
    return report.ok, lines


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _versions() -> dict:
    try:
        own = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        own = "unknown"
    return {"artifact": own, "numpy": np.__version__, "python": platform.python_version()}


class Pipeline:
    def __init__(self, cfg: ScenarioConfig, out: Path | None = None, log=print):
        self.cfg = cfg
        self.out = Path(out) if out is not None else cfg.output_dir
        self.log = log
        self.results: dict = {}
        self.written: list[Path] = []

    def _path(self, stage):
        return self.out / OUTPUTS[stage]

    def _emit(self, path):
        self.written.append(Path(path))
        self.log(f"wrote {path}")

    def run(self, stages) -> list[Path]:
        order = [s for s in STAGES if s in set(stages)]
        unknown = set(stages) - set(STAGES)
        if unknown:
            raise StageError(f"unknown stages {sorted(unknown)}; choose from {', '.join(STAGES)}")
        for stage in order:
            dep = REQUIRES.get(stage)
            if dep and dep not in order and not self._path(dep).exists():
                raise StageError(f"stage '{stage}' needs stage '{dep}': select it or provide {self._path(dep)}")
        ok, lines = validation_summary(self.cfg)
        if not ok:
            raise StageError("scenario fails validation:\n" + "\n".join(lines))
        self.out.mkdir(parents=True, exist_ok=True)
        for stage in order:
            getattr(self, "stage_" + stage.replace("-", "_"))()
        self._emit(write_plot_script(self.out / "plot_figures.py"))
        self._emit(self.write_manifest(order))
        return self.written

    # stages

    def _trajectory(self):
        if "trajectory" not in self.results:
            self.results["trajectory"] = io.read_trajectory(self._path("simulate"), self.cfg.names)
        return self.results["trajectory"]

    def stage_simulate(self):
        cfg = self.cfg
        self.results["trajectory"] = simulate(cfg.network, cfg.initial, cfg.horizon)
        self._emit(io.write_trajectory(self._path("simulate"), self.results["trajectory"], cfg.names))

    def stage_certify(self):
        cert = check_ges(self.cfg.network, self.cfg.horizon)
        self.results["certificate"] = cert
        self._emit(io.write_certificate(self._path("certify"), cert))

    def _require(self, section, stage):
        value = getattr(self.cfg, section)
        if value is None:
            raise StageError(f"stage '{stage}' needs a '{section}' section in the scenario")
        return value

    def stage_gen_data(self):
        testing = self._require("testing", "gen-data")
        traj = self._trajectory()
        if len(traj) < testing.T2 + 2:
            raise StageError(f"testing window ends at day {testing.T2 + 1} but the trajectory stops at {traj.horizon}")
        net = self.cfg.network
        data = generate_dataset(traj, net.populations, net.gamma_at, net.h, testing)
        self.results["dataset"] = data
        self._emit(io.write_testing(self._path("gen-data"), data, self.cfg.names))

    def stage_estimate(self):
        testing = self._require("testing", "estimate")
        est_cfg = self._require("estimator", "estimate")
        data = self.results.get("dataset")
        if data is None:
            data = io.read_testing(self._path("gen-data"), self.cfg.network.populations, testing.T1, testing.T2,
                                   testing.mode, self.cfg.names)
        est = estimate_states(data, est_cfg)
        self.results["estimate"] = est
        self._emit(io.write_estimate(self._path("estimate"), self._trajectory(), est, self.cfg.names))

    def _controllers(self):
        ctl = self._require("control", "control")
        modes = ["none", "true_state"]
        if self.cfg.estimator is not None:
            modes.append("estimated_state")
        return {m: replace(ctl, mode=m, estimator=self.cfg.estimator) for m in modes}

    def stage_control(self):
        cfg = self.cfg
        rows = []
        runs = {}
        for mode, ctl in self._controllers().items():
            run = run_closed_loop(cfg.network, cfg.initial, ctl, cfg.testing, cfg.horizon)
            runs[mode] = run
            rows += io.control_rows(run, cfg.names, mode)
            for w in dict.fromkeys(run.warnings):
                self.log(f"{mode}: {w}")
        self.results["control"] = runs
        self._emit(io.write_csv(self._path("control"), COMPARE_HEADER, rows))

    def stage_compare(self):
        cfg = self.cfg
        spec = self._require("compare", "compare")
        ctl = self._require("control", "compare")
        rows = []
        runs = {}
        for k_on, k_off in spec.windows:
            label = f"{k_on}-{k_off}"
            for mode in ("true_state", "estimated_state"):
                if mode == "estimated_state" and cfg.estimator is None:
                    continue
                c = ControlConfig(ctl.epsilon, mode, (k_on, k_off), cfg.estimator, ctl.lookahead)
                testing = cfg.testing
                if testing is not None and testing.T2 + 1 > spec.horizon:
                    testing = replace(testing, T2=spec.horizon - 1)
                if c.estimator is not None and c.estimator.T2 != testing.T2:
                    c = replace(c, estimator=replace(c.estimator, T2=testing.T2))
                run = run_closed_loop(cfg.network, cfg.initial, c, testing, spec.horizon)
                runs[(label, mode)] = run
                rows += io.control_rows(run, cfg.names, f"{label}:{mode}")
        self.results["compare"] = runs
        self._emit(io.write_csv(self._path("compare"), RELEASE_HEADER, rows))

    def write_manifest(self, stages) -> Path:
        cfg = self.cfg
        files = {p.name: _sha256(p) for p in sorted(self.written, key=lambda p: p.name)}
        payload = {
            "scenario": cfg.network.name,
            "config_sha256": cfg.digest,
            "seed": cfg.seed,
            "horizon": cfg.horizon,
            "stages": list(stages),
            "versions": _versions(),
            "platform": sys.platform,
            "files": files,
        }
        return io.write_json(self.out / "manifest.json", payload)


def run_sweep(cfg: ScenarioConfig, out: Path, spec=None, log=print) -> list[Path]:
    """Estimation-error surface over start days and initial guesses."""
    spec = spec or cfg.sweep
    if spec is None:
        raise StageError("sweep needs a 'sweep' section in the scenario or explicit grid options")
    if cfg.testing is None:
        raise StageError("sweep needs a 'testing' section for the testing probability")
    p = np.atleast_1d(cfg.testing.p_x)
    p = float(p[spec.node] if p.size > 1 else p[0])
    traj = simulate(cfg.network, cfg.initial, cfg.horizon)
    surface = error_sweep(cfg.network, traj, spec.T1, spec.s0_hat, spec.k_eval, p, spec.node)
    out = Path(out)
    written = [io.write_surface(out / "error_surface.csv", surface), write_plot_script(out / "plot_surface.py")]
    for path in written:
        log(f"wrote {path}")
    log(f"max |empirical - analytic| = {surface.max_discrepancy:.3e}")
    return written


PLOT_SCRIPT = '''"""Render figures from a run directory's CSV files.

Usage: python {name} [run_dir]   (defaults to this file's directory)
Needs matplotlib; reads only the CSV outputs.
"""
import csv
import sys
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

ROOT = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).resolve().parent


def load(name):
    path = ROOT / name
    if not path.exists():
        return None
    with path.open(newline="") as fh:
        return list(csv.DictReader(fh))


def series(rows, col, key=None, node=None):
    out = defaultdict(dict)
    for r in rows:
        if node is not None and r["node"] != node:
            continue
        if r[col] == "":
            continue
        out[r[key] if key else r["node"]][int(r["k"])] = float(r[col])
    return {{g: [v[k] for k in sorted(v)] for g, v in out.items()}}


def average(rows, col, key):
    sums = defaultdict(lambda: defaultdict(list))
    for r in rows:
        sums[r[key]][int(r["k"])].append(float(r[col]))
    return {{g: [sum(v[k]) / len(v[k]) for k in sorted(v)] for g, v in sums.items()}}


def save(fig, name):
    fig.tight_layout()
    fig.savefig(ROOT / name, dpi=150)
    plt.close(fig)
    print("wrote", ROOT / name)


def main():
    traj = load("trajectory.csv")
    if traj:
        fig, axes = plt.subplots(1, 3, figsize=(12, 3.5), sharex=True)
        for ax, col in zip(axes, "sxr"):
            for node, ys in series(traj, col).items():
                ax.plot(ys, label=node)
            ax.set_title(col)
            ax.set_xlabel("k")
        axes[0].legend()
        save(fig, "trajectory.png")

    est = load("estimate.csv")
    if est:
        fig, ax = plt.subplots(figsize=(6, 4))
        for flag, style in (("0", "-"), ("1", "--")):
            rows = [r for r in est if r["estimated"] == flag]
            for node, ys in series(rows, "s").items():
                ax.plot(ys, style, label=f"{{node}} {{'estimate' if flag == '1' else 'true'}}")
        ax.set_xlabel("k")
        ax.set_ylabel("s")
        ax.legend(fontsize=6, ncol=2)
        save(fig, "estimate.png")

    testing = load("testing.csv")
    if testing:
        fig, ax = plt.subplots(figsize=(6, 4))
        for node, ys in series(testing, "C").items():
            ax.plot(ys, label=node)
        ax.set_xlabel("day")
        ax.set_ylabel("confirmed")
        ax.legend()
        save(fig, "testing.png")

    for name, key in (("control_compare.csv", "mode"), ("release_compare.csv", "window")):
        rows = load(name)
        if not rows:
            continue
        fig, axes = plt.subplots(1, 2, figsize=(10, 4))
        for group, ys in average(rows, "x", key).items():
            axes[0].semilogy([max(y, 1e-16) for y in ys], label=group)
        for group, ys in average(rows, "s", key).items():
            axes[1].plot(ys, label=group)
        axes[0].set_title("average infected")
        axes[1].set_title("average susceptible")
        axes[0].legend(fontsize=7)
        save(fig, name.replace(".csv", ".png"))

    surface = load("error_surface.csv")
    if surface:
        t1 = sorted({{int(r["T1"]) for r in surface}})
        s0 = sorted({{float(r["s0_hat"]) for r in surface}})
        grid = {{(int(r["T1"]), float(r["s0_hat"])): float(r["error_empirical"]) for r in surface}}
        z = [[grid[(a, b)] for b in s0] for a in t1]
        fig, ax = plt.subplots(figsize=(6, 4))
        mesh = ax.pcolormesh(s0, t1, z, shading="auto")
        fig.colorbar(mesh, label="|s_hat - s|")
        ax.set_xlabel("s_hat(0)")
        ax.set_ylabel("T1")
        save(fig, "error_surface.png")


if __name__ == "__main__":
    main()
'''


def write_plot_script(path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(PLOT_SCRIPT.format(name=path.name))
    return path
