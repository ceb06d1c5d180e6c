"""Synthetic testing data: delayed confirmed cases and removals.

An individual infected during step ``l-1 -> l`` (new-infection proportion
``-Delta s(l) = s(l-1) - s(l)``) is tested on each following day with
probability ``p``, so its report delay is geometric; an optional constant
``eta`` shifts every report further.  Testing runs over the window
``[T1+1, T2+1]`` and only infections from step ``T1`` onward are ever
reported.  Known active cases are removed at rate ``h*gamma``.

Two generators share this model: *expectation* mode produces exact expected
proportions, *sampled* mode draws integer counts from a seeded RNG.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from .model import StructuralError, Trajectory


@dataclass(frozen=True)
class TestingParams:
    """Reporting model for one testing campaign.

    ``rounding`` controls how sampled mode turns infection proportions into
    whole people: ``"stochastic"`` (floor plus a Bernoulli on the fraction,
    unbiased) or ``"nearest"``.
    """

    __test__ = False  # not a pytest class

    p_x: np.ndarray
    T1: int
    T2: int
    eta: np.ndarray | int = 0
    mode: Literal["expectation", "sampled"] = "expectation"
    seed: int | None = None
    rounding: Literal["stochastic", "nearest"] = "stochastic"

    def __post_init__(self):
        p = np.atleast_1d(np.asarray(self.p_x, dtype=float))
        if np.any(~(p > 0)) or np.any(p > 1):
            raise ValueError(f"testing probabilities must lie in (0, 1], got {p}")
        eta = np.atleast_1d(np.asarray(self.eta))
        if np.any(eta < 0) or np.any(eta != np.round(eta)):
            raise ValueError("eta must be nonnegative integers")
        if not (0 <= self.T1 <= self.T2):
            raise ValueError(f"testing window inverted or negative: T1={self.T1}, T2={self.T2}")
        if self.mode not in ("expectation", "sampled"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.rounding not in ("stochastic", "nearest"):
            raise ValueError(f"unknown rounding {self.rounding!r}")
        object.__setattr__(self, "p_x", p)
        object.__setattr__(self, "eta", eta.astype(int))

    def per_node(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        p = np.broadcast_to(self.p_x, (n,)).copy()
        eta = np.broadcast_to(self.eta, (n,)).copy()
        return p, eta

    @property
    def last_day(self) -> int:
        return self.T2 + 1


@dataclass
class TestingDataset:
    """Daily reports for days ``0..T2+1`` (rows), one column per node.

    ``c`` and ``d`` are proportions of the node population.  In expectation
    mode they are exact and ``C``/``D`` are rounded for display; in sampled
    mode ``C``/``D`` are the drawn counts.  ``cum_C``, ``cum_D`` and
    ``active`` are counts (real-valued in expectation mode).
    """

    __test__ = False

    populations: np.ndarray
    T1: int
    T2: int
    mode: str
    C: np.ndarray
    D: np.ndarray
    c: np.ndarray
    d: np.ndarray
    cum_C: np.ndarray
    cum_D: np.ndarray
    active: np.ndarray

    @property
    def days(self) -> int:
        return self.c.shape[0]

    @property
    def n(self) -> int:
        return self.c.shape[1]

    @classmethod
    def from_proportions(cls, populations, T1, T2, c, d, mode="expectation", C=None, D=None):
        """Rebuild counts and cumulative series from daily proportions."""
        N = np.asarray(populations, dtype=float)
        c = np.asarray(c, dtype=float)
        d = np.asarray(d, dtype=float)
        cum_C = N * np.cumsum(c, axis=0)
        cum_D = N * np.cumsum(d, axis=0)
        if C is None:
            C = np.rint(N * c).astype(np.int64)
        if D is None:
            D = np.rint(N * d).astype(np.int64)
        return cls(np.asarray(populations), T1, T2, mode, np.asarray(C), np.asarray(D), c, d, cum_C, cum_D, cum_C - cum_D)


def _check_window(trajectory: Trajectory, T2: int):
    if len(trajectory) < T2 + 2:
        raise ValueError(f"trajectory has states 0..{trajectory.horizon}, testing window needs 0..{T2 + 1}")


def new_infections(trajectory: Trajectory) -> np.ndarray:
    """``-Delta s(k) = s(k-1) - s(k)`` per step; row 0 is zero."""
    return -trajectory.delta_s()


def build_transfer_matrix(T1: int, T2: int, p: float | None = None, eta: int = 0,
                          kind: Literal["geometric", "constant"] = "geometric") -> np.ndarray:
    """Map new-infection proportions on ``[T1, T2+1]`` to daily confirmed proportions.

    Rows and columns index days ``T1..T2+1``.  Geometric delay: entry
    ``(a, b)`` is ``p*(1-p)**(a-b-eta-1)`` when ``a - b > eta``.  Constant
    delay: ones at ``(b+eta, b)``; ``p`` is ignored.
    """
    if T1 > T2 or T1 < 0:
        raise ValueError(f"testing window inverted or negative: T1={T1}, T2={T2}")
    if eta < 0:
        raise ValueError("eta must be nonnegative")
    m = T2 - T1 + 2
    lag = np.subtract.outer(np.arange(m), np.arange(m))
    if kind == "constant":
        return (lag == eta).astype(float)
    if kind != "geometric":
        raise ValueError(f"unknown delay kind {kind!r}")
    if p is None or not (0 < p <= 1):
        raise ValueError(f"testing probability must lie in (0, 1], got {p}")
    delay = lag - eta
    phi = np.zeros((m, m))
    mask = delay >= 1
    phi[mask] = p * (1.0 - p) ** (delay[mask] - 1)
    return phi


def confirmed_expectation(trajectory: Trajectory, params: TestingParams) -> np.ndarray:
    """Expected daily confirmed proportions via the one-step recursion.

    ``c(k) = p*(-Delta s(k-1-eta)) + (1-p)*c(k-1)`` on the window, zero
    elsewhere; infections before step ``T1`` never enter.
    """
    _check_window(trajectory, params.T2)
    n = trajectory.n
    p, eta = params.per_node(n)
    T1, last = params.T1, params.last_day
    new = new_infections(trajectory)[: last + 1]
    c = np.zeros((last + 1, n))
    for i in range(n):
        prev = 0.0  # undelayed report stream, zero at day T1
        for k in range(T1 + 1, last + 1 - eta[i]):
            prev = p[i] * new[k - 1, i] + (1.0 - p[i]) * prev
            c[k + eta[i], i] = prev
    return c


def confirmed_via_transfer(trajectory: Trajectory, params: TestingParams,
                           kind: Literal["geometric", "constant"] = "geometric") -> np.ndarray:
    """Confirmed proportions as ``Phi @ Xi``, one transfer matrix per node."""
    _check_window(trajectory, params.T2)
    n = trajectory.n
    p, eta = params.per_node(n)
    T1, last = params.T1, params.last_day
    xi = new_infections(trajectory)[T1: last + 1]
    c = np.zeros((last + 1, n))
    for i in range(n):
        phi = build_transfer_matrix(T1, params.T2, p[i], int(eta[i]), kind)
        c[T1:, i] = phi @ xi[:, i]
    return c


class CaseReporter:
    """Day-by-day generator of confirmed and removed reports.

    Each node keeps a pool of infected individuals not yet tested (whole
    people in sampled mode, proportions in expectation mode).  Call
    :meth:`confirm` for day ``k`` before :meth:`infect` adds the new
    infections of step ``k`` to the pool; :meth:`remove` for day ``k`` needs
    the healing rate applied at step ``k-1``.
    """

    def __init__(self, populations, params: TestingParams, h: float, rng: np.random.Generator | None = None):
        self.N = np.asarray(populations, dtype=np.int64)
        self.params = params
        self.h = h
        self.sampled = params.mode == "sampled"
        if self.sampled and rng is None:
            if params.seed is None:
                raise ValueError("sampled mode requires a seed")
            rng = np.random.default_rng(params.seed)
        self.rng = rng
        n = self.N.size
        self.p, self.eta = params.per_node(n)
        dtype = np.int64 if self.sampled else float
        self.pool = np.zeros(n, dtype=dtype)
        self.pending: dict[int, np.ndarray] = {}
        days = params.last_day + 1
        self.C = np.zeros((days, n), dtype=dtype)
        self.D = np.zeros((days, n), dtype=dtype)
        self.active = np.zeros((days, n), dtype=float)
        self.day = -1  # last day whose confirm+remove are both done

    def _in_window(self, k: int) -> bool:
        return self.params.T1 + 1 <= k <= self.params.last_day

    def _to_people(self, amount: np.ndarray) -> np.ndarray:
        # expectation mode keeps everything in proportions of N
        if not self.sampled:
            return amount
        people = self.N * amount
        if self.params.rounding == "nearest":
            return np.rint(people).astype(np.int64)
        base = np.floor(people)
        return (base + (self.rng.random(people.shape) < people - base)).astype(np.int64)

    def confirm(self, k: int) -> np.ndarray:
        """Test the pool on day ``k`` and return the counts reported that day."""
        if self.sampled:
            tested = self.rng.binomial(self.pool, self.p)
        else:
            tested = self.p * self.pool
        self.pool = self.pool - tested
        for i, lag in enumerate(self.eta):
            self.pending.setdefault(k + lag, np.zeros_like(self.pool))[i] += tested[i]
        reported = self.pending.pop(k, np.zeros_like(self.pool))
        if k < self.C.shape[0]:
            self.C[k] = reported if self._in_window(k) else 0
        return self.C[k] if k < self.C.shape[0] else np.zeros_like(self.pool)

    def infect(self, k: int, amount) -> None:
        """Add the new-infection proportions of step ``k`` to the untested pool."""
        if self.params.T1 <= k <= self.params.T2:
            self.pool = self.pool + self._to_people(np.asarray(amount, dtype=float))

    def remove(self, k: int, gamma_prev) -> np.ndarray:
        """Removals on day ``k`` from the active cases of day ``k-1``."""
        q = self.h * np.asarray(gamma_prev, dtype=float)
        if np.any(q < 0) or np.any(q > 1):
            raise ValueError(f"h*gamma = {q} is not a probability")
        if k >= self.D.shape[0]:
            return np.zeros_like(self.pool)
        prev = self.active[k - 1] if k >= 1 else np.zeros(self.N.size)
        if not self._in_window(k):
            removed = np.zeros_like(self.pool)
        elif self.sampled:
            removed = self.rng.binomial(np.rint(prev).astype(np.int64), q)
        else:
            removed = q * prev
        self.D[k] = removed
        self.active[k] = prev + self.C[k] - removed
        self.day = k
        return removed

    def dataset(self) -> TestingDataset:
        days = self.day + 1
        N = self.N.astype(float)
        if self.sampled:
            C, D = self.C[:days], self.D[:days]
            return TestingDataset(self.N.copy(), self.params.T1, self.params.T2, self.params.mode,
                                  C.copy(), D.copy(), C / N, D / N,
                                  np.cumsum(C, axis=0).astype(float), np.cumsum(D, axis=0).astype(float),
                                  self.active[:days].copy())
        c, d = self.C[:days].copy(), self.D[:days].copy()
        return TestingDataset(self.N.copy(), self.params.T1, self.params.T2, self.params.mode,
                              np.rint(N * c).astype(np.int64), np.rint(N * d).astype(np.int64), c, d,
                              N * np.cumsum(c, axis=0), N * np.cumsum(d, axis=0), N * self.active[:days])


def generate_dataset(trajectory: Trajectory, populations, gammas, h: float, params: TestingParams,
                     rng: np.random.Generator | None = None) -> TestingDataset:
    """Full testing dataset for an already simulated trajectory.

    ``gammas`` holds the healing rate applied at each step, shape ``(K, n)``,
    or a callable ``k -> gamma(k)``.
    """
    _check_window(trajectory, params.T2)
    gamma_at = gammas if callable(gammas) else (lambda k: np.asarray(gammas)[k])
    if trajectory.n != np.size(populations):
        raise StructuralError("populations do not match trajectory width")
    rep = CaseReporter(populations, params, h, rng)
    new = new_infections(trajectory)
    for k in range(params.last_day + 1):
        rep.confirm(k)
        rep.infect(k, new[k])
        rep.remove(k, gamma_at(k - 1) if k >= 1 else np.zeros(trajectory.n))
    return rep.dataset()


def confirmed_sampled(trajectory: Trajectory, params: TestingParams, populations,
                      rng: np.random.Generator | None = None) -> np.ndarray:
    """Integer daily confirmed counts from the per-individual delay model."""
    if params.mode != "sampled":
        raise ValueError("confirmed_sampled needs mode='sampled'")
    _check_window(trajectory, params.T2)
    rep = CaseReporter(populations, params, 1.0, rng)
    new = new_infections(trajectory)
    for k in range(params.last_day + 1):
        rep.confirm(k)
        rep.infect(k, new[k])
    return rep.C.copy()


def removed_data(confirmed: np.ndarray, populations, gammas, h: float, params: TestingParams,
                 rng: np.random.Generator | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Daily removal proportions given daily confirmed reports.

    ``confirmed`` holds proportions in expectation mode and whole counts in
    sampled mode.  Each day's removals come from the active cases of the
    previous day at rate ``h*gamma(k-1)``: their expected value, or a
    binomial draw.  Returns ``(d, active)`` with ``active`` in people.
    """
    gamma_at = gammas if callable(gammas) else (lambda k: np.asarray(gammas)[k])
    rep = CaseReporter(populations, params, h, rng)
    confirmed = np.asarray(confirmed)
    days = min(confirmed.shape[0], rep.C.shape[0])
    for k in range(days):
        rep.C[k] = confirmed[k] if rep._in_window(k) else 0
        rep.remove(k, gamma_at(k - 1) if k >= 1 else np.zeros(rep.N.size))
    data = rep.dataset()
    return data.d, data.active
