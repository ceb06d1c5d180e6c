"""Recover hidden SIR states from delayed case reports.

The geometric reporting recursion is inverted day by day:
``-Delta s_hat(k) = (c(k+1) - (1-p) c(k)) / p``.  Removals scale the
estimated infected level by the fraction of known active cases that left,
and the infected increment closes the balance so the three estimated
compartments always sum to one.  Before testing starts the estimate stays
at its assumed initial value.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .model import EpidemicNetwork, Trajectory
from .testing import TestingDataset, TestingParams, generate_dataset


@dataclass(frozen=True)
class EstimatorConfig:
    s0_hat: np.ndarray
    x0_hat: np.ndarray
    r0_hat: np.ndarray
    p_x: np.ndarray
    T1: int
    T2: int

    def __post_init__(self):
        arrs = np.broadcast_arrays(*(np.atleast_1d(np.asarray(a, dtype=float))
                                     for a in (self.s0_hat, self.x0_hat, self.r0_hat, self.p_x)))
        s0, x0, r0, p = (a.copy() for a in arrs)
        for a in (s0, x0, r0):
            if np.any((a < 0) | (a > 1)):
                raise ValueError("initial estimates must lie in [0, 1]")
        if np.any(np.abs(s0 + x0 + r0 - 1) > 1e-12):
            raise ValueError("initial estimates must sum to one")
        if np.any(~(p > 0)) or np.any(p > 1):
            raise ValueError(f"testing probability must lie in (0, 1], got {p}")
        if not (0 <= self.T1 <= self.T2):
            raise ValueError(f"estimation window inverted: T1={self.T1}, T2={self.T2}")
        for name, a in zip(("s0_hat", "x0_hat", "r0_hat", "p_x"), (s0, x0, r0, p)):
            object.__setattr__(self, name, a)

    @classmethod
    def from_susceptible(cls, s0_hat, p_x, T1: int, T2: int, n: int | None = None) -> "EstimatorConfig":
        """Assume nobody has recovered yet, so ``x0_hat = 1 - s0_hat``."""
        s0 = np.asarray(s0_hat, dtype=float)
        if n is not None:
            s0 = np.broadcast_to(s0, (n,))
        return cls(s0, 1.0 - s0, np.zeros_like(s0), p_x, T1, T2)

    def per_node(self, n: int):
        b = lambda a: np.broadcast_to(a, (n,)).copy()  # noqa: E731
        return b(self.s0_hat), b(self.x0_hat), b(self.r0_hat), b(self.p_x)


@dataclass
class EstimatedTrajectory:
    """Estimated states for k = 0..last, rows by step.

    ``ds``, ``dx``, ``dr`` hold the increments applied at each step (zero
    before ``T1``).  Raw values are kept even when sampling noise pushes them
    outside ``[0, 1]``; use :meth:`clamped` for a saturated copy.
    """

    s_hat: np.ndarray
    x_hat: np.ndarray
    r_hat: np.ndarray
    ds: np.ndarray
    dx: np.ndarray
    dr: np.ndarray
    config: EstimatorConfig | None = None

    def __len__(self) -> int:
        return self.s_hat.shape[0]

    def clamped(self) -> "EstimatedTrajectory":
        c = lambda a: np.clip(a, 0.0, 1.0)  # noqa: E731
        return EstimatedTrajectory(c(self.s_hat), c(self.x_hat), c(self.r_hat), self.ds, self.dx, self.dr, self.config)

    def out_of_range(self) -> bool:
        return any(np.any((a < 0) | (a > 1)) for a in (self.s_hat, self.x_hat, self.r_hat))


def estimate_delta_s(c, p: float, k: int, T1: int, T2: int) -> float:
    """Estimated new-infection proportion ``-Delta s_hat(k)`` for one node.

    ``c`` is indexed by day and must cover day ``k+1``.  Zero before ``T1``.
    """
    if not p > 0:
        raise ValueError("testing probability must be positive")
    if k < T1:
        return 0.0
    if k > T2:
        raise ValueError(f"step {k} lies beyond the estimation window ending at {T2}")
    return (c[k + 1] - (1.0 - p) * c[k]) / p


class OnlineEstimator:
    """Incremental estimator that advances as far as the data allows.

    Step ``k`` needs confirmed proportions through day ``k+1`` and removals
    through day ``k``.  Used directly by the feedback controller; the batch
    :func:`estimate_states` runs it once over a complete dataset.
    """

    def __init__(self, config: EstimatorConfig, n: int):
        self.config = config
        self.n = n
        s0, x0, r0, self.p = config.per_node(n)
        self.initial = (s0, x0, r0)
        rows = config.T2 + 1
        self.s = np.empty((rows, n))
        self.x = np.empty((rows, n))
        self.r = np.empty((rows, n))
        self.ds = np.zeros((rows, n))
        self.dx = np.zeros((rows, n))
        self.dr = np.zeros((rows, n))
        T1 = config.T1
        self.s[:T1], self.x[:T1], self.r[:T1] = s0, x0, r0
        self.next = T1

    @property
    def latest(self) -> int:
        """Index of the newest estimated step (-1 before any)."""
        return self.next - 1

    def value(self, k: int) -> np.ndarray:
        """Estimated susceptible level at step ``k``, held at the newest value beyond it."""
        if k < 0 or self.next == 0:
            return self.initial[0].copy()
        return self.s[min(k, self.next - 1)].copy()

    def advance(self, c: np.ndarray, d: np.ndarray, active: np.ndarray, populations) -> int:
        """Consume reports (days ``0..len(c)-1``) and return the newest estimated step."""
        cfg = self.config
        N = np.asarray(populations, dtype=float)
        days = c.shape[0]
        while self.next <= cfg.T2 and self.next + 1 < days:
            k = self.next
            if k == 0:
                s_prev, x_prev, r_prev = self.initial
            else:
                s_prev, x_prev, r_prev = self.s[k - 1], self.x[k - 1], self.r[k - 1]
            ds = -(c[k + 1] - (1.0 - self.p) * c[k]) / self.p
            if k == cfg.T1:
                dr = np.zeros(self.n)
            else:
                a_prev = active[k - 1]
                safe = np.where(a_prev > 0, a_prev, 1.0)
                dr = np.where(a_prev > 0, N * d[k] / safe * x_prev, 0.0)
            dx = -ds - dr
            self.ds[k], self.dx[k], self.dr[k] = ds, dx, dr
            self.s[k] = s_prev + ds
            self.x[k] = x_prev + dx
            self.r[k] = r_prev + dr
            self.next += 1
        return self.latest

    def result(self) -> EstimatedTrajectory:
        m = self.next
        return EstimatedTrajectory(self.s[:m].copy(), self.x[:m].copy(), self.r[:m].copy(),
                                   self.ds[:m].copy(), self.dx[:m].copy(), self.dr[:m].copy(), self.config)


def estimate_states(dataset: TestingDataset, config: EstimatorConfig) -> EstimatedTrajectory:
    """Estimated ``(s, x, r)`` for steps ``0..T2`` from a complete dataset."""
    if dataset.T1 != config.T1 or dataset.T2 != config.T2:
        raise ValueError(f"dataset window [{dataset.T1}, {dataset.T2}] does not match estimator window "
                         f"[{config.T1}, {config.T2}]")
    if dataset.days < config.T2 + 2:
        raise ValueError(f"dataset covers days 0..{dataset.days - 1}, estimation needs 0..{config.T2 + 1}")
    est = OnlineEstimator(config, dataset.n)
    est.advance(dataset.c, dataset.d, dataset.active, dataset.populations)
    return est.result()


def analytic_error(s0_hat: float, true_traj: Trajectory, T1: int, node: int, k: int) -> float:
    """Closed-form susceptible estimation error, valid for every ``k >= T1``.

    ``|s0_hat - s(0) - sum_{l=1}^{T1-1} Delta s(l)|``: the initial guess
    error plus the infections missed before testing started.
    """
    if k < T1:
        raise ValueError(f"error formula holds only for k >= T1 (k={k}, T1={T1})")
    s = true_traj.s[:, node]
    missed = float(np.sum(np.diff(s[:T1]))) if T1 >= 2 else 0.0
    return abs(s0_hat - s[0] - missed)


@dataclass
class ErrorSurface:
    T1: np.ndarray
    s0_hat: np.ndarray
    empirical: np.ndarray  # shape (len(T1), len(s0_hat))
    analytic: np.ndarray
    zero_error_s0: np.ndarray  # per T1: the initial guess that cancels the error
    k_eval: int
    node: int
    meta: dict = field(default_factory=dict)

    def rows(self):
        for a, T1 in enumerate(self.T1):
            for b, s0 in enumerate(self.s0_hat):
                yield int(T1), float(s0), float(self.empirical[a, b]), float(self.analytic[a, b])

    @property
    def max_discrepancy(self) -> float:
        return float(np.max(np.abs(self.empirical - self.analytic)))


def error_sweep(network: EpidemicNetwork, true_traj: Trajectory, T1_values: Sequence[int], s0_values: Sequence[float],
                k_eval: int, p: float, node: int = 0, T2: int | None = None) -> ErrorSurface:
    """Susceptible estimation error at ``k_eval`` over a grid of start days and initial guesses.

    Each grid point runs the full estimator on expectation-mode data and is
    paired with :func:`analytic_error`.  Other nodes do not affect the swept
    node's estimate, so only that node is estimated.
    """
    T1_values = np.asarray(T1_values, dtype=int)
    s0_values = np.asarray(s0_values, dtype=float)
    if np.any((s0_values < 0) | (s0_values > 1)):
        raise ValueError("initial susceptible guesses must lie in [0, 1]")
    if T1_values.min() < 0:
        raise ValueError("T1 must be nonnegative")
    if k_eval < T1_values.max():
        raise ValueError(f"k_eval={k_eval} precedes the latest start day {T1_values.max()}")
    if T2 is None:
        T2 = true_traj.horizon - 1
    if k_eval > T2:
        raise ValueError(f"k_eval={k_eval} lies beyond the estimation window ending at {T2}")
    emp = np.empty((T1_values.size, s0_values.size))
    ana = np.empty_like(emp)
    locus = np.empty(T1_values.size)
    s_true = true_traj.s[:, node]
    for a, T1 in enumerate(T1_values):
        params = TestingParams(p, int(T1), T2)
        data = generate_dataset(true_traj, network.populations, network.gamma_at, network.h, params)
        locus[a] = s_true[0] + (np.sum(np.diff(s_true[:T1])) if T1 >= 2 else 0.0)
        # nodes are estimated independently, so the whole guess grid runs as columns of one pass
        m = s0_values.size
        cols = np.full(m, node)
        cfg = EstimatorConfig.from_susceptible(s0_values, p, int(T1), T2)
        est = OnlineEstimator(cfg, m)
        est.advance(data.c[:, cols], data.d[:, cols], data.active[:, cols], np.asarray(network.populations)[cols])
        emp[a] = np.abs(est.s[k_eval] - s_true[k_eval])
        ana[a] = [analytic_error(s0, true_traj, int(T1), node, k_eval) for s0 in s0_values]
    return ErrorSurface(T1_values, s0_values, emp, ana, locus, k_eval, node, {"p": p, "T2": T2})
