"""Networked, time-varying discrete-time SIR dynamics.

Each node ``i`` holds the susceptible, infected and recovered proportions
``(s_i, x_i, r_i)`` of a subpopulation of size ``N_i``.  One Euler step of
size ``h`` advances all nodes at once::

    s+ = s - h * s * (B @ x)
    x+ = x + h * (s * (B @ x) - gamma * x)
    r+ = r + h * gamma * x

Infection matrices ``B(k)`` and healing rates ``gamma(k)`` are
piecewise-constant in the step index ``k`` (see :class:`Schedule`).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

CONSERVATION_TOL = 1e-9
RANGE_TOL = 1e-12


class StructuralError(ValueError):
    """Malformed input: wrong dimensions, schedule gaps, bad breakpoints."""


class InvalidNetworkError(ValueError):
    """Raised when a network violates the well-posedness bounds.

    The offending :class:`ValidationReport` is available as ``.report``.
    """

    def __init__(self, report: "ValidationReport"):
        super().__init__(str(report))
        self.report = report


class Schedule:
    """Piecewise-constant map from step index to a parameter array.

    Parameters
    ----------
    pieces : sequence of (start, value)
        Breakpoints in strictly increasing ``start`` order.  The first piece
        must start at step 0; the last piece holds forever.
    """

    def __init__(self, pieces: Sequence[tuple[int, object]]):
        if len(pieces) == 0:
            raise StructuralError("schedule has no pieces")
        starts = []
        values = []
        for start, value in pieces:
            if int(start) != start or start < 0:
                raise StructuralError(f"breakpoint {start!r} is not a nonnegative integer")
            arr = np.array(value, dtype=float)
            arr.setflags(write=False)
            if not np.all(np.isfinite(arr)):
                raise StructuralError(f"non-finite entries in piece starting at {start}")
            starts.append(int(start))
            values.append(arr)
        if starts[0] != 0:
            raise StructuralError(f"schedule starts at step {starts[0]}; steps [0, {starts[0]}) are uncovered")
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise StructuralError(f"breakpoints must be strictly increasing, got {starts}")
        shapes = {v.shape for v in values}
        if len(shapes) != 1:
            raise StructuralError(f"pieces have inconsistent shapes {sorted(shapes)}")
        self.starts = tuple(starts)
        self.values = tuple(values)

    @classmethod
    def constant(cls, value) -> "Schedule":
        return cls([(0, value)])

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values[0].shape

    def index(self, k: int) -> int:
        if k < 0:
            raise ValueError(f"negative step {k}")
        return int(np.searchsorted(self.starts, k, side="right")) - 1

    def at(self, k: int) -> np.ndarray:
        return self.values[self.index(k)]

    def __len__(self) -> int:
        return len(self.starts)

    def __iter__(self) -> Iterator[tuple[int, np.ndarray]]:
        return iter(zip(self.starts, self.values))

    def __repr__(self) -> str:
        return f"Schedule(starts={list(self.starts)}, shape={self.shape})"


@dataclass(frozen=True)
class Segment:
    """Maximal step range ``[start, stop)`` on which both B and gamma are constant.

    ``stop`` is None for the final, open-ended segment.
    """

    start: int
    stop: int | None
    B: np.ndarray
    gamma: np.ndarray


@dataclass(frozen=True)
class EpidemicNetwork:
    populations: np.ndarray
    beta: Schedule
    gamma: Schedule
    h: float
    names: tuple[str, ...] = ()
    name: str = "network"

    def __post_init__(self):
        pops = np.asarray(self.populations)
        if pops.ndim != 1 or pops.size == 0:
            raise StructuralError("populations must be a nonempty 1-d sequence")
        if np.any(pops <= 0) or np.any(pops != np.round(pops)):
            raise StructuralError("populations must be positive integers")
        pops = pops.astype(np.int64)
        pops.setflags(write=False)
        object.__setattr__(self, "populations", pops)
        n = pops.size
        if not isinstance(self.beta, Schedule):
            object.__setattr__(self, "beta", Schedule(self.beta))
        if not isinstance(self.gamma, Schedule):
            object.__setattr__(self, "gamma", Schedule(self.gamma))
        if self.beta.shape != (n, n):
            raise StructuralError(f"beta pieces have shape {self.beta.shape}, expected {(n, n)}")
        if self.gamma.shape != (n,):
            raise StructuralError(f"gamma pieces have shape {self.gamma.shape}, expected {(n,)}")
        if not (np.isfinite(self.h) and self.h > 0):
            raise StructuralError(f"step size h must be positive, got {self.h}")
        if not self.names:
            object.__setattr__(self, "names", tuple(str(i) for i in range(n)))
        elif len(self.names) != n or len(set(self.names)) != n:
            raise StructuralError("node names must be unique, one per node")

    @classmethod
    def constant(cls, populations, B, gamma, h: float, **kw) -> "EpidemicNetwork":
        return cls(np.asarray(populations), Schedule.constant(B), Schedule.constant(gamma), h, **kw)

    @property
    def n(self) -> int:
        return int(self.populations.size)

    def B_at(self, k: int) -> np.ndarray:
        return self.beta.at(k)

    def gamma_at(self, k: int) -> np.ndarray:
        return self.gamma.at(k)

    def segments(self, horizon: int | None = None) -> list[Segment]:
        """Split ``[0, horizon]`` (or all steps, if None) into constant segments."""
        cuts = sorted(set(self.beta.starts) | set(self.gamma.starts))
        if horizon is not None:
            cuts = [c for c in cuts if c <= horizon]
        out = []
        for i, start in enumerate(cuts):
            if i + 1 < len(cuts):
                stop = cuts[i + 1]
            else:
                stop = None if horizon is None else horizon + 1
            out.append(Segment(start, stop, self.B_at(start), self.gamma_at(start)))
        return out


@dataclass(frozen=True)
class Violation:
    rule: str
    node: int
    start: int
    stop: int | None
    value: float
    message: str


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __str__(self) -> str:
        if self.ok:
            return "ok"
        return "\n".join(v.message for v in self.violations)


def validate_network(network: EpidemicNetwork, horizon: int | None = None) -> ValidationReport:
    """Check the positivity and step-size bounds on every schedule segment.

    Positivity: ``h*gamma_i > 0`` and ``beta_ij >= 0``.
    Step bound: ``h*gamma_i <= 1`` and ``h*sum_j beta_ij <= 1``.
    Structural problems never reach this point; they raise
    :class:`StructuralError` when the network is built.
    """
    if horizon is not None and horizon < 0:
        raise ValueError(f"horizon must be nonnegative, got {horizon}")
    report = ValidationReport()
    h = network.h
    for seg in network.segments(horizon):
        span = f"steps [{seg.start}, {'inf' if seg.stop is None else seg.stop})"

        def add(rule, i, value, text):
            report.violations.append(
                Violation(rule, i, seg.start, seg.stop, float(value), f"{rule}: {text} at node {network.names[i]}, {span}")
            )

        hg = h * seg.gamma
        row = h * seg.B.sum(axis=1)
        for i in range(network.n):
            if not hg[i] > 0:
                add("positivity", i, hg[i], f"h*gamma = {hg[i]:g} <= 0")
            if np.any(seg.B[i] < 0):
                add("positivity", i, seg.B[i].min(), f"negative infection rate {seg.B[i].min():g}")
            if hg[i] > 1:
                add("step_bound", i, hg[i], f"h*gamma = {hg[i]:g} > 1")
            if row[i] > 1:
                add("step_bound", i, row[i], f"h*sum(beta) = {row[i]:g} > 1")
    return report


@dataclass(frozen=True)
class EpidemicState:
    s: np.ndarray
    x: np.ndarray
    r: np.ndarray

    def __post_init__(self):
        arrs = [np.array(a, dtype=float) for a in (self.s, self.x, self.r)]
        if arrs[0].ndim != 1 or any(a.shape != arrs[0].shape for a in arrs):
            raise StructuralError("s, x, r must be 1-d arrays of equal length")
        for name, a in zip("sxr", arrs):
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        total = arrs[0] + arrs[1] + arrs[2]
        if np.any(np.abs(total - 1) > CONSERVATION_TOL):
            raise ValueError(f"s + x + r deviates from 1 by {np.abs(total - 1).max():.3g}")
        if any(np.any((a < -RANGE_TOL) | (a > 1 + RANGE_TOL)) for a in arrs):
            raise ValueError("state proportions must lie in [0, 1]")

    @classmethod
    def from_infected(cls, x, r=None) -> "EpidemicState":
        """Build a state with ``s = 1 - x - r`` (``r`` defaults to zero)."""
        x = np.asarray(x, dtype=float)
        r = np.zeros_like(x) if r is None else np.asarray(r, dtype=float)
        return cls(1.0 - x - r, x, r)

    @property
    def n(self) -> int:
        return self.s.size


def _advance(s, x, r, B, gamma, h):
    infection = h * s * (B @ x)
    healing = h * gamma * x
    return s - infection, x + infection - healing, r + healing


def step(state: EpidemicState, B, gamma, h: float) -> EpidemicState:
    """Advance one step of the discrete-time dynamics."""
    B = np.asarray(B, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    n = state.n
    if B.shape != (n, n) or gamma.shape != (n,):
        raise StructuralError(f"dimension mismatch: state has {n} nodes, B {B.shape}, gamma {gamma.shape}")
    return EpidemicState(*_advance(state.s, state.x, state.r, B, gamma, h))


@dataclass(frozen=True)
class Trajectory:
    """States for k = 0..K stored as ``(K+1, n)`` arrays."""

    s: np.ndarray
    x: np.ndarray
    r: np.ndarray
    network_ref: str = ""

    def __len__(self) -> int:
        return self.s.shape[0]

    @property
    def horizon(self) -> int:
        return len(self) - 1

    @property
    def n(self) -> int:
        return self.s.shape[1]

    def state(self, k: int) -> EpidemicState:
        return EpidemicState(self.s[k], self.x[k], self.r[k])

    @property
    def states(self) -> list[EpidemicState]:
        return [self.state(k) for k in range(len(self))]

    def delta_s(self) -> np.ndarray:
        """Backward differences ``s(k) - s(k-1)``; row 0 is zero."""
        out = np.zeros_like(self.s)
        out[1:] = np.diff(self.s, axis=0)
        return out


def simulate(network: EpidemicNetwork, initial: EpidemicState, horizon: int) -> Trajectory:
    """Iterate :func:`step` for ``horizon`` steps.

    Raises :class:`InvalidNetworkError` (carrying the report) when the
    network breaks the well-posedness bounds on ``[0, horizon]``.
    """
    if initial.n != network.n:
        raise StructuralError(f"initial state has {initial.n} nodes, network has {network.n}")
    report = validate_network(network, horizon)
    if not report.ok:
        raise InvalidNetworkError(report)
    n = network.n
    s = np.empty((horizon + 1, n))
    x = np.empty((horizon + 1, n))
    r = np.empty((horizon + 1, n))
    s[0], x[0], r[0] = initial.s, initial.x, initial.r
    for seg in network.segments(horizon):
        stop = min(seg.stop, horizon) if seg.stop is not None else horizon
        for k in range(seg.start, stop):
            s[k + 1], x[k + 1], r[k + 1] = _advance(s[k], x[k], r[k], seg.B, seg.gamma, network.h)
    return Trajectory(s, x, r, network.name)
