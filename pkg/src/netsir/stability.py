"""Spectral eradication test and diagonal Lyapunov certificates.

The comparison matrix ``M = I - h*diag(gamma) + h*B`` dominates the true
infected-state transition ``M_hat = I + h*(diag(s) @ B - diag(gamma))``
entrywise.  When every ``B(k)`` is symmetric and ``sup_k rho(M(k)) < 1`` the
healthy set is globally exponentially stable, and a positive diagonal
``Q(k)`` with ``M(k)^T Q(k+1) M(k) - Q(k)`` negative definite yields the
quadratic Lyapunov function ``V = x^T Q x`` and a decay-rate bound.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .model import EpidemicNetwork, StructuralError, validate_network

DEFINITE_MARGIN = 1e-10
SYMMETRY_TOL = 1e-12
_EPS = np.finfo(float).eps


class ConvergenceError(RuntimeError):
    """Dominant-eigenvalue iteration hit its cap without converging."""

    def __init__(self, message, estimate, vector, residual):
        super().__init__(message)
        self.estimate = estimate
        self.vector = vector
        self.residual = residual


class LyapunovNotFound(RuntimeError):
    """The diagonal candidate failed verification.

    ``index`` is the offending condition (piece index, or ``(j, j+1)`` for
    a switch) and ``margin`` the smallest eigenvalue of
    ``Q(k) - M^T Q(k+1) M`` that was found.
    """

    def __init__(self, index, margin):
        super().__init__(f"diagonal Lyapunov candidate fails at {index}: margin {margin:.3e}")
        self.index = index
        self.margin = margin


def _square(A, name="matrix") -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise StructuralError(f"{name} must be square, got shape {A.shape}")
    return A


def build_M(B, gamma, h: float) -> np.ndarray:
    B = _square(B, "B")
    gamma = np.asarray(gamma, dtype=float)
    if gamma.shape != (B.shape[0],):
        raise StructuralError(f"gamma has shape {gamma.shape}, expected ({B.shape[0]},)")
    return np.eye(B.shape[0]) - h * np.diag(gamma) + h * B


def build_Mhat(B, gamma, s, h: float) -> np.ndarray:
    """Infected-state transition matrix at susceptible levels ``s``."""
    B = _square(B, "B")
    gamma = np.asarray(gamma, dtype=float)
    s = np.asarray(s, dtype=float)
    if gamma.shape != (B.shape[0],) or s.shape != (B.shape[0],):
        raise StructuralError("gamma and s must have one entry per node")
    return np.eye(B.shape[0]) + h * (s[:, None] * B - np.diag(gamma))


def perron(A, tol: float = 1e-12, max_iter: int = 100_000) -> tuple[float, np.ndarray]:
    """Dominant eigenvalue and eigenvector of a nonnegative matrix.

    Power iteration on ``A + I`` from the all-ones vector.  The shift makes
    ``rho(A) + 1`` the unique eigenvalue of largest modulus, so periodic
    matrices converge too.  While the iterate stays strictly positive the
    Collatz-Wielandt ratios bracket the root and give a rigorous stop;
    otherwise the Rayleigh residual is used.  Tolerances are relative to
    ``rho(A)``, floored at machine precision of the shifted iteration.
    """
    A = _square(A)
    if np.any(A < 0):
        raise ValueError("perron iteration needs a nonnegative matrix")
    n = A.shape[0]
    shifted = A + np.eye(n)
    v = np.full(n, 1.0 / np.sqrt(n))
    lam = 1.0
    resid = np.inf
    for _ in range(max_iter):
        w = shifted @ v
        if np.all(v > 0):
            ratios = w / v
            lo, hi = ratios.min(), ratios.max()
            # midpoint is within tol of rho relative to rho itself, or at machine precision
            if hi - lo <= 2.0 * tol * max(lo - 1.0, 0.0) or hi - lo <= 4.0 * _EPS * hi:
                lam = 0.5 * (lo + hi)
                return lam - 1.0, w / np.linalg.norm(w)
        lam = float(v @ w)
        resid = float(np.linalg.norm(w - lam * v))
        v = w / np.linalg.norm(w)
        if resid <= tol * max(lam - 1.0, 0.0) or resid <= 4.0 * _EPS * lam:
            return lam - 1.0, v
    raise ConvergenceError(
        f"power iteration did not converge in {max_iter} iterations (residual {resid:.3e})",
        lam - 1.0, v, resid,
    )


def spectral_radius(A, tol: float = 1e-12, max_iter: int = 100_000) -> float:
    """Spectral radius of a square nonnegative matrix; see :func:`perron`."""
    return perron(A, tol, max_iter)[0]


def is_symmetric(B, atol: float = SYMMETRY_TOL) -> bool:
    B = np.asarray(B, dtype=float)
    return bool(np.all(np.abs(B - B.T) <= atol))


def is_irreducible(B) -> bool:
    """True iff the digraph with edges ``i -> j`` for ``beta_ij > 0`` is strongly connected.

    A graph is strongly connected iff every node is reachable from node 0
    both along the edges and against them.  A 1x1 matrix counts as
    irreducible only when its entry is positive.
    """
    adj = _square(B, "B") > 0
    n = adj.shape[0]
    if n == 1:
        return bool(adj[0, 0])

    def reaches_all(a):
        seen = np.zeros(n, dtype=bool)
        seen[0] = True
        todo = deque([0])
        while todo:
            i = todo.popleft()
            for j in np.flatnonzero(a[i] & ~seen):
                seen[j] = True
                todo.append(j)
        return seen.all()

    return reaches_all(adj) and reaches_all(adj.T)


def _conditions(n_pieces: int) -> list[tuple[int, int]]:
    # (k, k+1) piece pairs: every piece persists, plus each forward switch
    pairs = [(j, j) for j in range(n_pieces)]
    pairs += [(j, j + 1) for j in range(n_pieces - 1)]
    return pairs


def _decrement(M, q_now, q_next) -> np.ndarray:
    D = np.diag(q_now) - M.T @ (q_next[:, None] * M)
    return 0.5 * (D + D.T)


def lyapunov_margins(M_pieces: Sequence, diagonals: Sequence) -> dict:
    """Smallest eigenvalue of ``Q(k) - M(k)^T Q(k+1) M(k)`` for every condition."""
    return {
        (a, b): float(np.linalg.eigvalsh(_decrement(np.asarray(M_pieces[a], float), diagonals[a], diagonals[b]))[0])
        for a, b in _conditions(len(M_pieces))
    }


@dataclass
class DiagonalLyapunov:
    diagonals: list[np.ndarray]
    margins: dict

    @property
    def min_margin(self) -> float:
        return min(self.margins.values())


def _perron_scaling(M) -> np.ndarray:
    """Candidate ``q = xi / z`` from left and right Perron vectors of a positive perturbation."""
    n = M.shape[0]
    rho = spectral_radius(M)
    eps = max(1.0 - rho, 1e-12) / (4.0 * n)
    for _ in range(60):
        P = M + eps
        if spectral_radius(P) < 1.0:
            break
        eps *= 0.5
    _, z = perron(P)
    _, xi = perron(P.T)
    q = xi / z
    return q / q.max()


def diagonal_lyapunov(M_pieces: Sequence, margin: float = DEFINITE_MARGIN) -> DiagonalLyapunov:
    """Positive diagonal ``Q`` per piece with ``Q(k) - M^T Q(k+1) M`` positive definite.

    Symmetric pieces get ``Q = I``.  Other pieces get the Perron-scaled
    candidate.  Every persistence and switch condition is checked with an
    eigenvalue margin; if the per-piece candidates clash at a switch, each
    candidate is retried as a common ``Q`` before giving up with
    :class:`LyapunovNotFound`.
    """
    Ms = [_square(M) for M in M_pieces]
    if not Ms:
        raise ValueError("no matrices given")
    cands = [np.ones(M.shape[0]) if is_symmetric(M) else _perron_scaling(M) for M in Ms]

    margins = lyapunov_margins(Ms, cands)
    worst = min(margins, key=margins.get)
    if margins[worst] >= margin:
        return DiagonalLyapunov(cands, margins)
    for q in cands:
        common = [q] * len(Ms)
        trial = lyapunov_margins(Ms, common)
        if min(trial.values()) >= margin:
            return DiagonalLyapunov(common, trial)
    raise LyapunovNotFound(worst, margins[worst])


@dataclass
class RateBounds:
    sigma1: float  # min_k lambda_min(Q(k))
    sigma2: float  # max_k lambda_max(Q(k))
    sigma3: float  # max_k lambda_min[Q(k) - M^T Q(k+1) M]
    sigma3_min: float  # same with min over k
    rate: float
    rate_worst: float

    @property
    def alpha(self) -> float:
        return float(np.sqrt(self.sigma2 / self.sigma1))


def rate_bounds(M_pieces: Sequence, diagonals: Sequence) -> RateBounds:
    """Sigma quantities and both decay-rate variants.

    ``rate`` uses the max-over-k ``sigma3``; ``rate_worst`` uses the min, which
    is the one the per-step Lyapunov decrement actually guarantees.  They
    coincide for a single piece.
    """
    margins = list(lyapunov_margins(M_pieces, diagonals).values())
    sigma1 = min(float(np.min(q)) for q in diagonals)
    sigma2 = max(float(np.max(q)) for q in diagonals)
    sigma3, sigma3_min = max(margins), min(margins)
    if sigma3_min <= 0:
        raise ValueError(f"Lyapunov decrement is not positive definite (sigma3 = {sigma3_min:.3e}); certificate invalid")
    return RateBounds(
        sigma1, sigma2, sigma3, sigma3_min,
        float(np.sqrt(max(0.0, 1.0 - sigma3 / sigma2))),
        float(np.sqrt(max(0.0, 1.0 - sigma3_min / sigma2))),
    )


def rate_bound(M_pieces: Sequence, diagonals: Sequence) -> float:
    """``sqrt(1 - sigma3/sigma2)`` with ``sigma3`` maximised over k."""
    return rate_bounds(M_pieces, diagonals).rate


@dataclass
class GESCertificate:
    sup_rho: float
    rho: list[float]
    starts: list[int]
    symmetric: bool
    satisfied: bool
    reasons: list[str] = field(default_factory=list)
    Q: list[np.ndarray] | None = None
    margins: dict | None = None
    bounds: RateBounds | None = None

    @property
    def rate_bound(self) -> float | None:
        return None if self.bounds is None else self.bounds.rate

    def to_dict(self) -> dict:
        out = {
            "satisfied": self.satisfied,
            "sup_rho": self.sup_rho,
            "symmetric": self.symmetric,
            "pieces": [{"start": s, "rho": r} for s, r in zip(self.starts, self.rho)],
            "reasons": list(self.reasons),
            "Q": None if self.Q is None else [q.tolist() for q in self.Q],
            "margins": None if self.margins is None else [
                {"from": a, "to": b, "margin": m} for (a, b), m in self.margins.items()
            ],
        }
        if self.bounds is not None:
            b = self.bounds
            out.update(
                sigma1=b.sigma1, sigma2=b.sigma2, sigma3=b.sigma3, sigma3_min=b.sigma3_min,
                rate_bound=b.rate, rate_bound_worst=b.rate_worst,
            )
        return out


def check_ges(network: EpidemicNetwork, horizon: int | None = None) -> GESCertificate:
    """Evaluate the eradication condition on each constant segment.

    Satisfied iff every ``B`` is symmetric and ``max rho(M) < 1``; then the
    diagonal certificate and rate bounds are attached.  Asymmetric
    infection matrices are never certified.
    """
    report = validate_network(network, horizon)
    segs = network.segments(horizon)
    Ms = [build_M(seg.B, seg.gamma, network.h) for seg in segs]
    reasons = [str(v.message) for v in report.violations]
    rhos = []
    for seg, M in zip(segs, Ms):
        try:
            rhos.append(spectral_radius(M) if np.all(M >= 0) else float(np.max(np.abs(np.linalg.eigvals(M)))))
        except ConvergenceError as exc:
            rhos.append(float(exc.estimate))
            reasons.append(f"spectral radius did not converge on segment starting at {seg.start}")
    sym = all(is_symmetric(seg.B) for seg in segs)
    if not sym:
        reasons.append("symmetry hypothesis violated")
    sup_rho = max(rhos)
    if sup_rho >= 1:
        reasons.append(f"sup rho(M) = {sup_rho:.6g} >= 1")
    cert = GESCertificate(sup_rho, rhos, [seg.start for seg in segs], sym, not reasons, reasons)
    if cert.satisfied:
        try:
            lyap = diagonal_lyapunov(Ms)
        except LyapunovNotFound as exc:
            cert.satisfied = False
            cert.reasons.append(str(exc))
            return cert
        cert.Q = lyap.diagonals
        cert.margins = lyap.margins
        cert.bounds = rate_bounds(Ms, lyap.diagonals)
    return cert
