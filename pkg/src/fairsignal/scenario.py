"""Scenario definitions: built-in presets and YAML scenario files.

A scenario file is a YAML mapping; every key is optional and falls back to
the named ``base`` preset (default ``poisson-mmpp``)::

    name: my-run
    base: poisson-nhpp            # preset to start from
    sim: {min_green: 7, ...}      # SimConfig fields
    arrivals:                     # either a preset name or per-approach specs
      preset: poisson-nhpp
      # N: {type: mmpp, rate_on: 0.99, p_on_off: 0.28, p_off_on: 0.02}
    agent: {kind: tfc, beta: 0.01, phi_NS: 1.0, phi_WE: 1.5, L: 40}
    controllers:
      sotl: {min_green: 7, queue_threshold: 5, approach_range: [0, 4], approach_window: 50}
      fixed-time: {green_we: 30, green_ns: 30}
    train: {episodes: 50, seeds: [0, 1, 2], learning_rate: 0.001, ...}
    eval: {episodes: 10, seeds: [10000]}
    throughput_window: 100
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Mapping, Optional

import yaml

from .controllers import FixedTimeController, MaxPressureController, SotlController, SotlParams
from .env import AgentSpec
from .rl_engine import TrainConfig
from .sim_core import APPROACHES, ConfigError, SimConfig
from .traffic_gen import preset_arrivals, spec_from_dict, spec_to_dict

DESK_EPISODES = 50
DESK_SEEDS = (0, 1, 2)
FULL_EPISODES = 400
FULL_SEEDS = (0, 1, 2, 3, 4)
FULL_BUFFER = 1_000_000


@dataclass
class EvalSpec:
    episodes: int = 10
    seeds: List[int] = field(default_factory=lambda: [10_000])

    def __post_init__(self):
        if not self.seeds:
            raise ConfigError("evaluation needs at least one seed")
        if self.episodes < 1:
            raise ConfigError("evaluation needs at least one episode")

    def episode_seeds(self) -> List[int]:
        """Arrival seeds shared by every controller (paired comparison)."""
        return [s + i for s in self.seeds for i in range(self.episodes)]


@dataclass
class Scenario:
    name: str
    sim: SimConfig
    arrivals: Dict[str, object]
    agent: AgentSpec
    train: TrainConfig
    train_seeds: List[int]
    eval: EvalSpec
    sotl: SotlParams = field(default_factory=SotlParams)
    fixed_time: Dict[str, int] = field(default_factory=lambda: {"green_we": 30, "green_ns": 30})
    throughput_window: int = 100

    def baseline(self, name: str):
        if name == "sotl":
            return SotlController(self.sotl)
        if name == "max-pressure":
            return MaxPressureController()
        if name == "fixed-time":
            return FixedTimeController(**self.fixed_time)
        raise ConfigError(f"unknown baseline controller {name!r}")

    def full_scale(self) -> "Scenario":
        s = copy.deepcopy(self)
        s.train = replace(s.train, episodes=FULL_EPISODES, buffer_capacity=FULL_BUFFER)
        s.train_seeds = list(FULL_SEEDS)
        return s

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "sim": self.sim.to_dict(),
            "arrivals": {k: spec_to_dict(self.arrivals[k]) for k in APPROACHES},
            "agent": self.agent.to_dict(),
            "controllers": {"sotl": {"min_green": self.sotl.min_green,
                                     "queue_threshold": self.sotl.queue_threshold,
                                     "approach_range": list(self.sotl.approach_range),
                                     "approach_window": self.sotl.approach_window},
                            "fixed-time": dict(self.fixed_time)},
            "train": {**self.train.to_dict(), "seeds": list(self.train_seeds)},
            "eval": {"episodes": self.eval.episodes, "seeds": list(self.eval.seeds)},
            "throughput_window": self.throughput_window,
        }


def _preset(name: str) -> Scenario:
    if name == "poisson-mmpp":
        agent = AgentSpec(kind="dfc", alpha=2.0)
    elif name == "poisson-nhpp":
        agent = AgentSpec(kind="tfc", beta=0.01, phi_NS=1.0, phi_WE=1.5, L=40.0)
    elif name in ("poisson", "empty"):
        agent = AgentSpec(kind="dfc", alpha=0.0)
    else:
        raise ConfigError(f"unknown preset scenario {name!r}; "
                          f"choose from {sorted(PRESETS)} or pass a YAML file")
    return Scenario(name=name, sim=SimConfig(), arrivals=preset_arrivals(name), agent=agent,
                    train=TrainConfig(episodes=DESK_EPISODES), train_seeds=list(DESK_SEEDS),
                    eval=EvalSpec())


PRESETS = ("poisson-mmpp", "poisson-nhpp", "poisson", "empty")


def preset(name: str) -> Scenario:
    return _preset(name)


def from_dict(d: Mapping) -> Scenario:
    d = dict(d)
    base = _preset(d.pop("base", "poisson-mmpp"))
    known = {"name", "sim", "arrivals", "agent", "controllers", "train", "eval", "throughput_window"}
    unknown = set(d) - known
    if unknown:
        raise ConfigError(f"unknown scenario keys: {sorted(unknown)}")
    sc = base
    sc.name = d.get("name", base.name)
    if "sim" in d:
        sc.sim = SimConfig.from_dict({**base.sim.to_dict(), **d["sim"]})
    if "arrivals" in d:
        arr = dict(d["arrivals"])
        specs = preset_arrivals(arr.pop("preset")) if "preset" in arr else dict(base.arrivals)
        for k, v in arr.items():
            if k not in APPROACHES:
                raise ConfigError(f"unknown approach {k!r} in arrivals")
            specs[k] = spec_from_dict(v)
        sc.arrivals = specs
    if "agent" in d:
        sc.agent = AgentSpec(**{**base.agent.to_dict(), **d["agent"]})
    ctrl = d.get("controllers", {}) or {}
    if "sotl" in ctrl:
        sc.sotl = SotlParams(**ctrl["sotl"])
    if "fixed-time" in ctrl:
        ft = {**sc.fixed_time, **ctrl["fixed-time"]}
        FixedTimeController(**ft)
        sc.fixed_time = ft
    if "train" in d:
        t = dict(d["train"])
        seeds = t.pop("seeds", None)
        sc.train = TrainConfig(**{**base.train.to_dict(), **t})
        if seeds is not None:
            sc.train_seeds = [int(s) for s in seeds]
    if "eval" in d:
        sc.eval = EvalSpec(**{"episodes": base.eval.episodes, "seeds": base.eval.seeds, **d["eval"]})
    sc.throughput_window = int(d.get("throughput_window", base.throughput_window))
    if sc.throughput_window < 1:
        raise ConfigError("throughput_window must be >= 1")
    return sc


def load_scenario(ref: str) -> Scenario:
    """A preset name or a path to a YAML scenario file."""
    if ref in PRESETS:
        return preset(ref)
    path = Path(ref)
    if not path.exists():
        raise ConfigError(f"{ref!r} is neither a preset ({', '.join(PRESETS)}) nor a file")
    with open(path) as fh:
        data = yaml.safe_load(fh) or {}
    return from_dict(data)


def dump_scenario(sc: Scenario, path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(sc.to_dict(), fh, sort_keys=False)
