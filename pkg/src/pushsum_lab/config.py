"""JSON experiment and sweep configuration.

An experiment file looks like::

    {
      "seed": 7,
      "horizon_t": 200,
      "output_path": "runs/demo",
      "topology": {"kind": "Random", "n_nodes": 6},
      "problem": {"kind": "Quadratic", "dim_d": 10, "n_nodes": 6, "noise_sigma": 0.1},
      "optimizer": {"kind": "SGAP", "gamma": 0.05},
      "weighting": {"method": "Moreau", "v": 0.1, "k": 0.01}
    }

Topology and problem seeds fall back to the run seed when omitted.
"""

from __future__ import annotations

import copy
import itertools
import json
import os
from dataclasses import dataclass, field, fields

from .algorithms import OptimizerSpec
from .problems import ProblemSpec
from .topology import GraphSpec
from .weighting import Moreau, MoreauParams, UniformOutDegree

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "SweepConfig",
    "parse_config",
    "load_config",
    "load_sweep",
    "SEED_ENV",
    "MAX_SWEEP_RUNS",
]

SEED_ENV = "PUSHSUM_LAB_SEED"
MAX_SWEEP_RUNS = 10_000


class ConfigError(ValueError):
    """The configuration cannot be parsed or is inconsistent."""


def _seed(value, where):
    try:
        seed = int(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: seed must be an integer, got {value!r}") from None
    if isinstance(value, float) or not 0 <= seed < 2**64:
        raise ConfigError(f"{where}: seed must be a 64-bit unsigned integer, got {value!r}")
    return seed


def _build(cls, data, where, **extra):
    if not isinstance(data, dict):
        raise ConfigError(f"{where} must be an object")
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"{where}: unknown field(s) {sorted(unknown)}")
    try:
        return cls(**{**data, **extra})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _weighting_from(data, gamma):
    data = dict(data or {"method": "Moreau"})
    method = data.pop("method", "Moreau")
    if method == "UniformOutDegree":
        if data:
            raise ConfigError(f"weighting: UniformOutDegree takes no parameters, got {sorted(data)}")
        return UniformOutDegree()
    if method != "Moreau":
        raise ConfigError(f"weighting: unknown method {method!r}")
    unknown = set(data) - {"v", "k", "step_gamma"}
    if unknown:
        raise ConfigError(f"weighting: unknown field(s) {sorted(unknown)}")
    try:
        return Moreau(MoreauParams(data.get("v", 0.1), data.get("k", 0.01), data.get("step_gamma", gamma)))
    except ValueError as exc:
        raise ConfigError(f"weighting: {exc}") from None


@dataclass
class ExperimentConfig:
    topology: dict
    problem: dict
    optimizer: dict
    weighting: dict = field(default_factory=lambda: {"method": "Moreau", "v": 0.1, "k": 0.01})
    horizon_t: int = 100
    seed: int = 0
    output_path: str = "runs/default"
    dump_state: bool = False

    def __post_init__(self):
        self.seed = _seed(self.seed, "seed")
        if not isinstance(self.horizon_t, int) or self.horizon_t < 2:
            raise ConfigError(f"horizon_t must be an integer >= 2, got {self.horizon_t!r}")
        # building the specs validates every section
        g, p = self.graph_spec(), self.problem_spec()
        self.optimizer_spec()
        self.weighting_method()
        if g.n_nodes != p.n_nodes:
            raise ConfigError(f"topology has {g.n_nodes} nodes but problem has {p.n_nodes}")

    def graph_spec(self) -> GraphSpec:
        t = dict(self.topology)
        seed = t.pop("seed", None)
        seed = self.seed if seed is None else _seed(seed, "topology")
        if t.get("cluster_split") is not None:
            t["cluster_split"] = tuple(t["cluster_split"])
        return _build(GraphSpec, t, "topology", seed=seed)

    def problem_spec(self) -> ProblemSpec:
        p = dict(self.problem)
        seed = p.pop("seed", None)
        seed = self.seed if seed is None else _seed(seed, "problem")
        return _build(ProblemSpec, p, "problem", seed=seed)

    def build_problem(self):
        """The objective, with logistic labels split along the topology's clusters."""
        from .problems import make_problem

        return make_problem(self.problem_spec(), self.topology.get("cluster_split"))

    def optimizer_spec(self) -> OptimizerSpec:
        return _build(OptimizerSpec, self.optimizer, "optimizer")

    def weighting_method(self):
        return _weighting_from(self.weighting, float(self.optimizer.get("gamma", 1.0)))

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "horizon_t": self.horizon_t,
            "output_path": self.output_path,
            "dump_state": self.dump_state,
            "topology": copy.deepcopy(self.topology),
            "problem": copy.deepcopy(self.problem),
            "optimizer": copy.deepcopy(self.optimizer),
            "weighting": copy.deepcopy(self.weighting),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _from_dict(data) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    missing = {"topology", "problem", "optimizer"} - set(data)
    if missing:
        raise ConfigError(f"missing section(s): {sorted(missing)}")
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown top-level field(s) {sorted(unknown)}")
    for name in ("topology", "problem", "optimizer", "weighting"):
        if name in data and not isinstance(data[name], dict):
            raise ConfigError(f"{name} must be an object")
    try:
        return ExperimentConfig(**data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def parse_config(text: str, env=None) -> ExperimentConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}") from None
    env = os.environ if env is None else env
    if isinstance(data, dict) and env.get(SEED_ENV):
        data["seed"] = _seed(env[SEED_ENV], SEED_ENV)
    return _from_dict(data)


def load_config(path, env=None) -> ExperimentConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    return parse_config(text, env)


def _set_path(d, dotted, value):
    keys = dotted.split(".")
    for k in keys[:-1]:
        d = d.setdefault(k, {})
    d[keys[-1]] = value


@dataclass
class SweepConfig:
    """A base experiment, override axes, and seeds.

    Axis names are dotted paths into the experiment config (``topology.kind``,
    ``optimizer.gamma``); the special axis ``n_nodes`` sets both the topology
    and problem node counts.
    """

    base: dict
    axes: dict = field(default_factory=dict)
    seeds: list = field(default_factory=lambda: [0])

    def __post_init__(self):
        if not isinstance(self.axes, dict) or any(not isinstance(v, list) or not v for v in self.axes.values()):
            raise ConfigError("axes must map names to non-empty lists")
        if not self.seeds:
            raise ConfigError("seeds must be a non-empty list")
        self.seeds = [_seed(s, "seeds") for s in self.seeds]
        size = len(self.seeds)
        for v in self.axes.values():
            size *= len(v)
        if size > MAX_SWEEP_RUNS:
            raise ConfigError(f"sweep has {size} runs, more than the {MAX_SWEEP_RUNS} limit")
        _from_dict(copy.deepcopy(self.base))

    def runs(self):
        """Yield ``(axis_values, ExperimentConfig)`` for the full cartesian product."""
        names = list(self.axes)
        for combo in itertools.product(*(self.axes[n] for n in names)):
            for seed in self.seeds:
                data = copy.deepcopy(self.base)
                for name, value in zip(names, combo):
                    if name == "n_nodes":
                        data["topology"]["n_nodes"] = value
                        data["problem"]["n_nodes"] = value
                    else:
                        _set_path(data, name, value)
                data["seed"] = seed
                yield dict(zip(names, combo)), _from_dict(data)


def load_sweep(path) -> SweepConfig:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}") from None
    if not isinstance(data, dict) or "base" not in data:
        raise ConfigError("sweep file needs a 'base' experiment")
    unknown = set(data) - {"base", "axes", "seeds"}
    if unknown:
        raise ConfigError(f"unknown sweep field(s) {sorted(unknown)}")
    return SweepConfig(**data)
