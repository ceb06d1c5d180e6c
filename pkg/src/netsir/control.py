"""Distributed healing-rate feedback that eradicates the epidemic.

Each node raises its healing rate to its current infection pressure plus a
margin: ``gamma_i = s_i * sum_j beta_ij + eps_i``.  With the true ``s`` every
row of the closed-loop matrix sums to ``1 - h*eps_i``; using an
over-estimate ``s_hat >= s`` only lowers the row sums.  The margin then
gives per-step contraction ``1 - h*min(eps)`` of the (nonnegative) infected
vector.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .estimation import EstimatedTrajectory, EstimatorConfig, OnlineEstimator
from .model import (
    EpidemicNetwork,
    EpidemicState,
    InvalidNetworkError,
    StructuralError,
    Trajectory,
    _advance,
    simulate,
    validate_network,
)
from .stability import build_Mhat, is_irreducible, is_symmetric
from .testing import CaseReporter, TestingDataset, TestingParams

Mode = Literal["true_state", "estimated_state", "none"]
ESTIMATE_SLACK = 1e-9


class EstimateRangeWarning(UserWarning):
    """An estimated susceptible level above one was fed to the controller."""


def _rate(s, B, epsilon):
    B = np.asarray(B, dtype=float)
    s = np.asarray(s, dtype=float)
    epsilon = np.broadcast_to(np.asarray(epsilon, dtype=float), s.shape)
    if B.shape != (s.size, s.size):
        raise StructuralError(f"B has shape {B.shape}, expected {(s.size, s.size)}")
    return s * B.sum(axis=1) + epsilon


def healing_rate_true(s, B, epsilon) -> np.ndarray:
    return _rate(s, B, epsilon)


def healing_rate_estimated(s_hat, B, epsilon) -> np.ndarray:
    """Same law driven by the estimate; warns (but proceeds) if ``s_hat > 1``."""
    s_hat = np.asarray(s_hat, dtype=float)
    if np.any(s_hat > 1 + ESTIMATE_SLACK):
        warnings.warn(f"estimated susceptible level {s_hat.max():.6g} exceeds 1", EstimateRangeWarning, stacklevel=2)
    return _rate(s_hat, B, epsilon)


def contraction_bound(epsilon, h: float) -> float:
    return 1.0 - h * float(np.min(epsilon))


@dataclass
class HypothesisCheck:
    condition: str
    start: int
    passed: bool
    detail: str


@dataclass
class HypothesisReport:
    mode: str
    checks: list[HypothesisCheck] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list[HypothesisCheck]:
        return [c for c in self.checks if not c.passed]

    def __str__(self) -> str:
        lines = [f"{'PASS' if c.passed else 'FAIL'} {c.condition} @ {c.start}: {c.detail}" for c in self.checks]
        return "\n".join(lines + self.notes)


def check_hypotheses(network: EpidemicNetwork, epsilon, mode: Mode = "true_state",
                     horizon: int | None = None) -> HypothesisReport:
    """Check the controller's sufficient conditions on every schedule segment.

    1. infection row sums: ``0 <= h*sum_j beta_ij < 1`` for the true-state
       law; the estimated-state law only needs ``<= 1``.
    2. ``B`` symmetric and irreducible.
    3. ``h*(sum_j beta_ij + eps_i) < 1``, the worst case ``s = 1`` of either
       law, so it covers every reachable state.
    """
    eps = np.broadcast_to(np.asarray(epsilon, dtype=float), (network.n,))
    report = HypothesisReport(mode)
    if np.any(eps <= 0):
        report.checks.append(HypothesisCheck("margin", 0, False, f"epsilon must be positive, got {eps}"))
    h = network.h
    for seg in network.segments(horizon):
        load = h * seg.B.sum(axis=1)
        strict = mode != "estimated_state"
        ok1 = bool(np.all(load >= 0) and (np.all(load < 1) if strict else np.all(load <= 1)))
        report.checks.append(HypothesisCheck(
            "row_sum", seg.start, ok1,
            f"max h*sum(beta) = {load.max():.6g} ({'< 1' if strict else '<= 1'} required)"))
        sym, irr = is_symmetric(seg.B), is_irreducible(seg.B)
        report.checks.append(HypothesisCheck(
            "symmetric_irreducible", seg.start, sym and irr, f"symmetric={sym}, irreducible={irr}"))
        worst = h * (seg.B.sum(axis=1) + eps)
        report.checks.append(HypothesisCheck(
            "rate_bound", seg.start, bool(np.all(worst < 1)), f"max h*(sum(beta) + eps) = {worst.max():.6g} (< 1 required)"))
    report.notes.append("row-sum condition is strict for the true-state law and non-strict for the estimated-state law")
    return report


@dataclass(frozen=True)
class ControlConfig:
    """Controller settings.

    ``window`` is ``[k_on, k_off)``; ``k_off=None`` keeps the control on.
    ``lookahead`` lets the estimated-state law use ``s_hat(k)`` (which needs
    the day ``k+1`` report) instead of the causal ``s_hat(k-1)``.
    """

    epsilon: np.ndarray
    mode: Mode = "true_state"
    window: tuple[int, int | None] = (0, None)
    estimator: EstimatorConfig | None = None
    lookahead: bool = False

    def __post_init__(self):
        eps = np.atleast_1d(np.asarray(self.epsilon, dtype=float))
        if np.any(~(eps > 0)):
            raise ValueError(f"epsilon must be positive, got {eps}")
        object.__setattr__(self, "epsilon", eps)
        if self.mode not in ("true_state", "estimated_state", "none"):
            raise ValueError(f"unknown control mode {self.mode!r}")
        if self.mode == "estimated_state" and self.estimator is None:
            raise ValueError("estimated_state control needs an estimator configuration")
        k_on, k_off = self.window
        if k_on < 0 or (k_off is not None and k_off < k_on):
            raise ValueError(f"bad control window {self.window}")

    def active(self, k: int) -> bool:
        if self.mode == "none":
            return False
        k_on, k_off = self.window
        return k >= k_on and (k_off is None or k < k_off)


@dataclass
class ControlledRun:
    trajectory: Trajectory
    applied_gamma: np.ndarray  # (K, n), rate used at step k
    active: np.ndarray  # (K,) bool
    contraction: np.ndarray  # (K,) ||x(k+1)|| / ||x(k)||, NaN when inactive
    row_sums: np.ndarray  # (K, n) closed-loop row sums, NaN when inactive
    s_hat_used: np.ndarray | None = None
    dataset: TestingDataset | None = None
    estimate: EstimatedTrajectory | None = None
    warnings: list[str] = field(default_factory=list)
    hypotheses: HypothesisReport | None = None

    def average(self, compartment: str = "x") -> np.ndarray:
        return getattr(self.trajectory, compartment).mean(axis=1)


def run_closed_loop(network: EpidemicNetwork, initial: EpidemicState, config: ControlConfig,
                    testing: TestingParams | None = None, horizon: int = 0) -> ControlledRun:
    """Simulate the network with the healing-rate feedback switched on inside the window.

    In ``estimated_state`` mode a report generator and an online estimator
    run alongside the dynamics, and at step ``k`` the controller only sees
    reports up to day ``k`` (or ``k+1`` with ``lookahead``).
    """
    if initial.n != network.n:
        raise StructuralError("initial state does not match network size")
    if config.mode == "none":
        traj = simulate(network, initial, horizon)
        K, n = horizon, network.n
        gam = np.array([network.gamma_at(k) for k in range(K)]).reshape(K, n)
        return ControlledRun(traj, gam, np.zeros(K, bool), np.full(K, np.nan), np.full((K, n), np.nan))

    report = validate_network(network, horizon)
    if not report.ok:
        raise InvalidNetworkError(report)
    hyp = check_hypotheses(network, config.epsilon, config.mode, horizon)
    notes = [f"hypothesis failed: {c.condition} @ {c.start}: {c.detail}" for c in hyp.failures()]

    n, h = network.n, network.h
    eps = np.broadcast_to(config.epsilon, (n,))
    s = np.empty((horizon + 1, n))
    x = np.empty((horizon + 1, n))
    r = np.empty((horizon + 1, n))
    s[0], x[0], r[0] = initial.s, initial.x, initial.r
    gam = np.empty((horizon, n))
    active = np.zeros(horizon, dtype=bool)
    ratio = np.full(horizon, np.nan)
    rows = np.full((horizon, n), np.nan)

    reporter = estimator = None
    s_hat_used = None
    if config.mode == "estimated_state":
        if testing is None:
            raise ValueError("estimated_state control needs testing parameters to generate reports")
        est_cfg = config.estimator
        if (est_cfg.T1, est_cfg.T2) != (testing.T1, testing.T2):
            raise ValueError("estimator and testing windows differ")
        reporter = CaseReporter(network.populations, testing, h)
        estimator = OnlineEstimator(est_cfg, n)
        s_hat_used = np.full((horizon, n), np.nan)
    last_day = testing.last_day if testing is not None else -1

    confirmed = -1  # newest day tested
    processed = -1  # newest day with confirm, infect and remove all done

    def settle(through):
        # day d needs s(d) for its new infections and gamma(d-1) for removals
        nonlocal confirmed, processed
        while processed < min(through, last_day):
            d = processed + 1
            if confirmed < d:
                reporter.confirm(d)
                confirmed = d
            reporter.infect(d, s[d - 1] - s[d] if d >= 1 else np.zeros(n))
            reporter.remove(d, gam[d - 1] if d >= 1 else np.zeros(n))
            processed = d

    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", EstimateRangeWarning)
        for k in range(horizon):
            B = network.B_at(k)
            if reporter is not None:
                settle(k)
                if config.lookahead and confirmed == k and k + 1 <= last_day:
                    reporter.confirm(k + 1)
                    confirmed = k + 1
                c, d, a = _partial(reporter, confirmed)
                estimator.advance(c, d, a, network.populations)
            if config.active(k):
                if config.mode == "true_state":
                    g = healing_rate_true(s[k], B, eps)
                else:
                    s_hat = estimator.value(k if config.lookahead else k - 1)
                    s_hat_used[k] = s_hat
                    g = healing_rate_estimated(s_hat, B, eps)
                active[k] = True
            else:
                g = network.gamma_at(k)
            gam[k] = g
            s[k + 1], x[k + 1], r[k + 1] = _advance(s[k], x[k], r[k], B, g, h)
            if active[k]:
                rows[k] = build_Mhat(B, g, s[k], h).sum(axis=1)
                nx = np.linalg.norm(x[k])
                ratio[k] = np.linalg.norm(x[k + 1]) / nx if nx > 0 else 0.0
        if reporter is not None:
            settle(horizon)
            c, d, a = _partial(reporter, confirmed)
            estimator.advance(c, d, a, network.populations)
    notes += [str(w.message) for w in caught]

    run = ControlledRun(Trajectory(s, x, r, network.name), gam, active, ratio, rows, s_hat_used,
                        warnings=notes, hypotheses=hyp)
    if reporter is not None:
        run.dataset = reporter.dataset()
        run.estimate = estimator.result()
    return run


def _partial(reporter: CaseReporter, through: int):
    """Reports visible so far: confirmed proportions through day ``through``,
    removal proportions and active counts through ``reporter.day``."""
    N = reporter.N.astype(float)
    scale = N if reporter.sampled else 1.0
    c = reporter.C[: through + 1] / scale
    d = reporter.D[: reporter.day + 1] / scale
    active = reporter.active[: reporter.day + 1] * (1.0 if reporter.sampled else N)
    return c, d, active


def gershgorin_ok(run: ControlledRun, epsilon, h: float, tol: float = 1e-12) -> bool:
    """Every realized closed-loop row sum is at most ``1 - h*min(eps)``."""
    bound = contraction_bound(epsilon, h)
    rows = run.row_sums[run.active]
    return bool(np.all(rows <= bound + tol))
