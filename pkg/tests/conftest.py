"""Shared fixtures and independent reference implementations.

The reference functions here are deliberately naive (explicit loops, exact
fractions or direct sums over delays) so they do not share code paths with
the package under test.
"""
from fractions import Fraction

import numpy as np
import pytest

from netsir import EpidemicNetwork, EpidemicState, Schedule

NAMES = ("G", "L", "I", "F", "S")
B_TABLE = np.array([
    [0.08, 0.15, 0.24, 0.00, 0.06],
    [0.15, 0.12, 0.13, 0.00, 0.00],
    [0.24, 0.13, 0.25, 0.05, 0.04],
    [0.00, 0.00, 0.05, 0.11, 0.15],
    [0.06, 0.00, 0.04, 0.14, 0.09],
])
GAMMA_TABLE = np.array([0.075, 0.115, 0.085, 0.125, 0.1])
N_TABLE = np.array([500000, 160000, 900000, 350000, 300000])
X0_TABLE = np.array([0.01, 0.0, 0.02, 0.0, 0.0])


def table_network(h=1.0):
    return EpidemicNetwork.constant(N_TABLE, B_TABLE, GAMMA_TABLE, h, names=NAMES, name="indiana")


def table_initial():
    return EpidemicState.from_infected(X0_TABLE)


@pytest.fixture
def table_net():
    return table_network(1.0)


@pytest.fixture
def table_init():
    return table_initial()


def ref_step(s, x, r, B, gamma, h):
    """Loop-by-loop evaluation of one SIR step."""
    n = len(s)
    s1, x1, r1 = [0.0] * n, [0.0] * n, [0.0] * n
    for i in range(n):
        pressure = sum(B[i][j] * x[j] for j in range(n))
        s1[i] = s[i] - h * s[i] * pressure
        x1[i] = x[i] + h * (s[i] * pressure - gamma[i] * x[i])
        r1[i] = r[i] + h * gamma[i] * x[i]
    return s1, x1, r1


def ref_step_exact(s, x, r, B, gamma, h):
    """Same step in exact rational arithmetic (inputs converted via str)."""
    q = lambda v: Fraction(str(v))  # noqa: E731
    s, x, r = ([q(v) for v in a] for a in (s, x, r))
    B = [[q(v) for v in row] for row in B]
    gamma = [q(v) for v in gamma]
    return ref_step(s, x, r, B, gamma, q(h))


def ref_confirmed(new_inf, p, T1, T2, eta=0):
    """Expected confirmed proportion by summing the delay pmf directly.

    ``new_inf[l]`` is the new-infection proportion of step ``l``; an
    infection of step ``l >= T1`` reports on day ``l + eta + delta`` with
    probability ``p (1-p)**(delta-1)``; only days in ``[T1+1, T2+1]`` count.
    """
    last = T2 + 1
    c = np.zeros(last + 1)
    for k in range(T1 + 1, last + 1):
        total = 0.0
        for l in range(T1, k):
            delta = k - l - eta
            if delta >= 1:
                total += p * (1 - p) ** (delta - 1) * new_inf[l]
        c[k] = total
    return c


def random_network(rng, n, h=1.0, pieces=1, horizon=200, symmetric=False, stable=False):
    """Random valid network with a piecewise-constant schedule.

    ``stable`` picks gamma above every row sum of B, so each piece has
    spectral radius below one by Gershgorin.
    """
    starts = [0] + sorted(rng.choice(np.arange(1, horizon), size=pieces - 1, replace=False).tolist())
    Bs, gs = [], []
    for _ in starts:
        B = rng.random((n, n)) * (rng.random((n, n)) < 0.7)
        if symmetric:
            B = (B + B.T) / 2
        B *= rng.uniform(0.2, 1.0) / (h * max(B.sum(axis=1).max(), 1e-9))
        if stable:
            rows = B.sum(axis=1)
            g = rows + rng.uniform(0.01, 0.3, n) * (1 / h - rows)
        else:
            g = rng.uniform(0.01, 1.0, n) / h
        Bs.append(B)
        gs.append(g)
    pop = rng.integers(1000, 1_000_000, n)
    return EpidemicNetwork(pop, Schedule(list(zip(starts, Bs))), Schedule(list(zip(starts, gs))), h)


def random_state(rng, n, x_max=0.5):
    x = rng.random(n) * x_max
    r = rng.random(n) * (1 - x) * rng.integers(0, 2, n)
    return EpidemicState(1.0 - x - r, x, r)
