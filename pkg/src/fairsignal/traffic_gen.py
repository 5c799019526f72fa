"""Seeded per-tick arrival processes: Poisson, ON/OFF MMPP and periodic NHPP.

Each process owns a ``numpy.random.Generator`` and is sampled once per
one-second tick. Specs are plain dataclasses so scenarios can declare them in
config files; ``make(rng)`` binds a spec to a generator.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Dict, Mapping, Sequence, Tuple, Union

import numpy as np

from .sim_core import APPROACHES, ConfigError


@dataclass(frozen=True)
class PoissonSpec:
    rate: float

    def validate(self) -> None:
        if self.rate < 0:
            raise ConfigError(f"Poisson rate must be >= 0, got {self.rate}")

    def make(self, rng: np.random.Generator) -> "PoissonArrivals":
        return PoissonArrivals(self, rng)

    @property
    def mean_rate(self) -> float:
        return self.rate


@dataclass(frozen=True)
class MmppSpec:
    rate_on: float
    p_on_off: float
    p_off_on: float
    initial_state: str = "OFF"

    def validate(self) -> None:
        if self.rate_on < 0:
            raise ConfigError(f"MMPP rate_on must be >= 0, got {self.rate_on}")
        for name in ("p_on_off", "p_off_on"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ConfigError(f"MMPP {name} must lie in [0, 1], got {p}")
        if self.initial_state not in ("ON", "OFF"):
            raise ConfigError(f"MMPP initial_state must be ON or OFF, got {self.initial_state!r}")

    def make(self, rng: np.random.Generator) -> "MmppArrivals":
        return MmppArrivals(self, rng)

    @property
    def on_fraction(self) -> float:
        """Stationary probability of the ON state."""
        total = self.p_on_off + self.p_off_on
        if total == 0:
            return 1.0 if self.initial_state == "ON" else 0.0
        return self.p_off_on / total

    @property
    def mean_rate(self) -> float:
        return self.rate_on * self.on_fraction


@dataclass(frozen=True)
class NhppSpec:
    """Piecewise-constant periodic rate. ``schedule`` is ((start, end, rate), ...)."""
    schedule: Tuple[Tuple[float, float, float], ...]
    period: float

    def __post_init__(self):
        object.__setattr__(self, "schedule", tuple(tuple(map(float, seg)) for seg in self.schedule))

    def validate(self) -> None:
        if self.period <= 0:
            raise ConfigError("NHPP period must be > 0")
        segs = sorted(self.schedule)
        if not segs:
            raise ConfigError("NHPP schedule is empty")
        cursor = 0.0
        for start, end, rate in segs:
            if start != cursor:
                raise ConfigError(f"NHPP schedule has a gap or overlap at t={cursor}")
            if end <= start:
                raise ConfigError(f"NHPP interval [{start}, {end}) is empty")
            if rate < 0:
                raise ConfigError(f"NHPP rate must be >= 0, got {rate}")
            cursor = end
        if cursor != self.period:
            raise ConfigError(f"NHPP schedule ends at {cursor}, period is {self.period}")

    def make(self, rng: np.random.Generator) -> "NhppArrivals":
        return NhppArrivals(self, rng)

    @property
    def mean_rate(self) -> float:
        return sum((end - start) * rate for start, end, rate in self.schedule) / self.period


ArrivalSpec = Union[PoissonSpec, MmppSpec, NhppSpec]


def nhpp_rate(schedule: Sequence[Tuple[float, float, float]], t: float, period: float) -> float:
    """Rate of a periodic piecewise-constant schedule at time ``t``."""
    tau = t % period
    for start, end, rate in schedule:
        if start <= tau < end:
            return rate
    raise ConfigError(f"schedule does not cover t={t} (phase {tau})")


class ArrivalProcess:
    """Base for bound processes. ``draws`` counts generator calls."""

    def __init__(self, spec, rng: np.random.Generator):
        spec.validate()
        self.spec = spec
        self.rng = rng
        self.draws = 0

    def arrivals_for_tick(self, t: int) -> int:
        raise NotImplementedError


class PoissonArrivals(ArrivalProcess):
    def arrivals_for_tick(self, t: int) -> int:
        self.draws += 1
        return int(self.rng.poisson(self.spec.rate))


class MmppArrivals(ArrivalProcess):
    def __init__(self, spec: MmppSpec, rng: np.random.Generator):
        super().__init__(spec, rng)
        self.mode = spec.initial_state

    def step_mode(self) -> str:
        u = self.rng.random()
        self.draws += 1
        if self.mode == "ON":
            if u < self.spec.p_on_off:
                self.mode = "OFF"
        elif u < self.spec.p_off_on:
            self.mode = "ON"
        return self.mode

    def arrivals_for_tick(self, t: int) -> int:
        # transition first, then sample in the new mode
        if self.step_mode() == "ON":
            self.draws += 1
            return int(self.rng.poisson(self.spec.rate_on))
        return 0


class NhppArrivals(ArrivalProcess):
    def arrivals_for_tick(self, t: int) -> int:
        self.draws += 1
        return int(self.rng.poisson(nhpp_rate(self.spec.schedule, t, self.spec.period)))


def spec_from_dict(d: Mapping) -> ArrivalSpec:
    d = dict(d)
    kind = d.pop("type", None)
    if kind == "poisson":
        spec = PoissonSpec(**d)
    elif kind == "mmpp":
        spec = MmppSpec(**d)
    elif kind == "nhpp":
        spec = NhppSpec(schedule=tuple(tuple(s) for s in d.pop("schedule")), **d)
    else:
        raise ConfigError(f"unknown arrival process type {kind!r}")
    spec.validate()
    return spec


def spec_to_dict(spec: ArrivalSpec) -> dict:
    kind = {PoissonSpec: "poisson", MmppSpec: "mmpp", NhppSpec: "nhpp"}[type(spec)]
    d = asdict(spec)
    if kind == "nhpp":
        d["schedule"] = [list(seg) for seg in spec.schedule]
    return {"type": kind, **d}


def build_processes(arrivals: Mapping[str, object], seed: int) -> Dict[str, ArrivalProcess]:
    """Bind specs to independent generators spawned from ``seed`` (one per approach)."""
    children = np.random.SeedSequence(seed).spawn(len(APPROACHES))
    out = {}
    for k, ss in zip(APPROACHES, children):
        a = arrivals[k]
        out[k] = a if isinstance(a, ArrivalProcess) else a.make(np.random.default_rng(ss))
    return out


def sample_counts(spec: ArrivalSpec, n_ticks: int, seed: int) -> np.ndarray:
    """Per-tick counts for ticks 1..n_ticks (handy for rate checks)."""
    proc = spec.make(np.random.default_rng(seed))
    return np.array([proc.arrivals_for_tick(t) for t in range(1, n_ticks + 1)], dtype=np.int64)


def mmpp_modes(spec: MmppSpec, n_ticks: int, seed: int) -> np.ndarray:
    """ON indicator per tick, after each tick's transition."""
    proc = MmppArrivals(spec, np.random.default_rng(seed))
    out = np.empty(n_ticks, dtype=bool)
    for i in range(n_ticks):
        out[i] = proc.step_mode() == "ON"
    return out


# Preset demand from the two evaluation scenarios. NS rate_on for the MMPP is an
# assumption: chosen so the long-run NS rate equals the Poisson NS rate.
WE_RATE = 0.2
NS_RATE = 0.066
MMPP_P_ON_OFF = 0.28
MMPP_P_OFF_ON = 0.02
MMPP_RATE_ON = NS_RATE * (MMPP_P_ON_OFF + MMPP_P_OFF_ON) / MMPP_P_OFF_ON
NHPP_PERIOD = 2000.0
NHPP_SCHEDULE = ((0.0, 500.0, 0.25), (500.0, 2000.0, 0.1))


def preset_arrivals(name: str) -> Dict[str, ArrivalSpec]:
    we = PoissonSpec(WE_RATE)
    if name == "poisson":
        ns: ArrivalSpec = PoissonSpec(NS_RATE)
    elif name == "poisson-mmpp":
        ns = MmppSpec(MMPP_RATE_ON, MMPP_P_ON_OFF, MMPP_P_OFF_ON, "OFF")
    elif name == "poisson-nhpp":
        ns = NhppSpec(NHPP_SCHEDULE, NHPP_PERIOD)
    elif name == "empty":
        we = ns = PoissonSpec(0.0)
    else:
        raise ConfigError(f"unknown arrival preset {name!r}")
    return {"N": ns, "E": we, "S": ns, "W": we}


def dispersion_index(counts: np.ndarray) -> float:
    counts = np.asarray(counts, dtype=float)
    return float(counts.var() / counts.mean())

