"""Scenario files: a YAML description of network, initial state and pipeline settings.

Schema (keys not listed are rejected)::

    name: indiana
    h: 0.2
    horizon: 300
    seed: 2021
    output_dir: runs/indiana
    nodes:                      # declaration order fixes node indices
      - {name: G, population: 500000}
    beta:                       # piecewise-constant schedule, first start must be 0
      - {start: 0, matrix: [[...], ...]}
    gamma:
      - {start: 0, values: [...]}
    initial:                    # either per-node x (and optional r) by name, or full s/x/r lists
      x: {I: 0.02, G: 0.01}
    testing:  {p: 0.2, T1: 6, T2: null, eta: 0, mode: sampled, rounding: stochastic}
    estimator: {s0_hat: 1.0}    # scalar or per-node mapping; x0_hat = 1 - s0_hat
    control:  {epsilon: 0.05, mode: estimated_state, window: [0, null], lookahead: false}
    sweep:    {node: I, T1: [1, 60], s0_hat: [0.90, 1.00, 0.005], k_eval: 100}
    compare:  {windows: [[20, 50], [20, 150]], horizon: 3000}

``T2: null`` means ``horizon - 1``, the last step whose reports fit in the run.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .control import ControlConfig
from .estimation import EstimatorConfig
from .model import EpidemicNetwork, EpidemicState, Schedule, StructuralError
from .testing import TestingParams

TOP_KEYS = {"name", "h", "horizon", "seed", "output_dir", "nodes", "beta", "gamma", "initial",
            "testing", "estimator", "control", "sweep", "compare"}


class ConfigError(StructuralError):
    """Scenario file is malformed or refers to a missing section."""


@dataclass
class SweepSpec:
    node: int
    T1: np.ndarray
    s0_hat: np.ndarray
    k_eval: int


@dataclass
class CompareSpec:
    windows: list[tuple[int, int]]
    horizon: int


@dataclass
class ScenarioConfig:
    network: EpidemicNetwork
    initial: EpidemicState
    horizon: int
    seed: int = 0
    output_dir: Path = Path("runs")
    testing: TestingParams | None = None
    estimator: EstimatorConfig | None = None
    control: ControlConfig | None = None
    sweep: SweepSpec | None = None
    compare: CompareSpec | None = None
    raw: dict = field(default_factory=dict, repr=False)
    digest: str = ""

    @property
    def names(self) -> tuple[str, ...]:
        return self.network.names

    def with_overrides(self, seed: int | None = None, horizon: int | None = None) -> "ScenarioConfig":
        """Re-resolve the file contents with a different seed or horizon."""
        raw = dict(self.raw)
        if seed is not None:
            raw["seed"] = seed
        if horizon is not None:
            raw["horizon"] = horizon
        cfg = from_dict(raw)
        cfg.digest = self.digest
        return cfg


def _need(d: dict, key: str, where: str):
    if key not in d:
        raise ConfigError(f"{where}: missing required key '{key}'")
    return d[key]


def _per_node(value, names, where, default=None):
    """Scalar, list in node order, or mapping by node name -> array."""
    n = len(names)
    if isinstance(value, dict):
        unknown = set(value) - set(names)
        if unknown:
            raise ConfigError(f"{where}: unknown nodes {sorted(unknown)}")
        if default is None and len(value) != n:
            raise ConfigError(f"{where}: every node needs a value")
        return np.array([float(value.get(name, default)) for name in names])
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return np.full(n, float(arr))
    if arr.shape != (n,):
        raise ConfigError(f"{where}: expected {n} values, got {arr.shape}")
    return arr


def from_dict(raw: dict) -> ScenarioConfig:
    if not isinstance(raw, dict):
        raise ConfigError("scenario must be a mapping")
    extra = set(raw) - TOP_KEYS
    if extra:
        raise ConfigError(f"unknown top-level keys {sorted(extra)}")
    nodes = _need(raw, "nodes", "scenario")
    if not nodes:
        raise ConfigError("scenario: no nodes declared")
    names = tuple(str(_need(nd, "name", "nodes")) for nd in nodes)
    pops = np.array([_need(nd, "population", f"node {nd.get('name')}") for nd in nodes])

    def schedule(key, inner):
        pieces = _need(raw, key, "scenario")
        if not pieces:
            raise ConfigError(f"{key}: no pieces")
        out = []
        for piece in pieces:
            start = _need(piece, "start", key)
            value = _need(piece, inner, f"{key} piece at {start}")
            if key == "gamma":
                value = _per_node(value, names, f"gamma piece at {start}")
            out.append((start, value))
        return Schedule(out)

    network = EpidemicNetwork(pops, schedule("beta", "matrix"), schedule("gamma", "values"),
                              float(_need(raw, "h", "scenario")), names=names, name=str(raw.get("name", "scenario")))
    horizon = int(_need(raw, "horizon", "scenario"))
    if horizon < 0:
        raise ConfigError("horizon must be nonnegative")

    init = _need(raw, "initial", "scenario")
    x0 = _per_node(_need(init, "x", "initial"), names, "initial.x", default=0.0)
    r0 = _per_node(init.get("r", 0.0), names, "initial.r", default=0.0)
    if "s" in init:
        initial = EpidemicState(_per_node(init["s"], names, "initial.s"), x0, r0)
    else:
        initial = EpidemicState.from_infected(x0, r0)

    seed = int(raw.get("seed", 0))
    if seed < 0:
        raise ConfigError("seed must be nonnegative")

    testing = None
    if raw.get("testing") is not None:
        t = raw["testing"]
        T2 = t.get("T2")
        testing = TestingParams(
            _per_node(_need(t, "p", "testing"), names, "testing.p"), int(_need(t, "T1", "testing")),
            horizon - 1 if T2 is None else int(T2), eta=t.get("eta", 0), mode=t.get("mode", "expectation"),
            seed=seed, rounding=t.get("rounding", "stochastic"))

    estimator = None
    if raw.get("estimator") is not None:
        if testing is None:
            raise ConfigError("estimator section requires a testing section")
        e = raw["estimator"]
        s0 = _per_node(e.get("s0_hat", 1.0), names, "estimator.s0_hat", default=1.0)
        estimator = EstimatorConfig.from_susceptible(s0, testing.p_x, testing.T1, testing.T2)

    control = None
    if raw.get("control") is not None:
        c = raw["control"]
        mode = c.get("mode", "true_state")
        if mode == "estimated_state" and estimator is None:
            raise ConfigError("estimated_state control requires an estimator section")
        window = c.get("window", [0, None])
        control = ControlConfig(_per_node(_need(c, "epsilon", "control"), names, "control.epsilon"), mode,
                                (int(window[0]), None if window[1] is None else int(window[1])), estimator,
                                bool(c.get("lookahead", False)))

    sweep = None
    if raw.get("sweep") is not None:
        sw = raw["sweep"]
        node = sw.get("node", names[0])
        if node not in names:
            raise ConfigError(f"sweep: unknown node {node!r}")
        lo, hi = _need(sw, "T1", "sweep")[:2]
        s_lo, s_hi, s_step = _need(sw, "s0_hat", "sweep")
        s0 = np.round(np.arange(s_lo, s_hi + s_step / 2, s_step), 12)
        sweep = SweepSpec(names.index(node), np.arange(int(lo), int(hi) + 1), s0, int(_need(sw, "k_eval", "sweep")))

    compare = None
    if raw.get("compare") is not None:
        cp = raw["compare"]
        compare = CompareSpec([(int(a), int(b)) for a, b in _need(cp, "windows", "compare")],
                              int(cp.get("horizon", horizon)))

    return ScenarioConfig(network, initial, horizon, seed, Path(raw.get("output_dir", "runs")), testing, estimator,
                          control, sweep, compare, raw)


def load(path) -> ScenarioConfig:
    """Parse a scenario file; ``builtin:NAME`` loads a shipped scenario."""
    path = str(path)
    if path.startswith("builtin:"):
        text = resources.files("netsir.scenarios").joinpath(path.split(":", 1)[1] + ".scenario").read_text()
    else:
        text = Path(path).read_text()
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    cfg = from_dict(raw)
    cfg.digest = hashlib.sha256(text.encode()).hexdigest()
    return cfg


def builtin_path(name: str = "indiana") -> Path:
    return Path(str(resources.files("netsir.scenarios").joinpath(name + ".scenario")))

