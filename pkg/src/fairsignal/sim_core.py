"""Discrete-time point-queue model of a two-phase, four-approach intersection.

Vehicles spawn on an approach, travel the link at the speed limit, then join a
FIFO queue at the stop line. A green approach discharges at saturation flow
(``lanes / saturation_headway`` veh/s, fractional credit carried between
ticks). Every tick a vehicle spends in a queue adds one second to its wait.
"""
from __future__ import annotations

import enum
import math
from collections import deque
from dataclasses import asdict, dataclass, field
from typing import Callable, Deque, Dict, List, Mapping, Optional, Tuple

APPROACHES: Tuple[str, ...] = ("N", "E", "S", "W")
NS_APPROACHES = ("N", "S")
WE_APPROACHES = ("E", "W")


class ConfigError(ValueError):
    pass


class IllegalActionError(RuntimeError):
    pass


class Phase(enum.IntEnum):
    GREEN_WE = 0
    GREEN_NS = 1

    @property
    def served(self) -> Tuple[str, ...]:
        return WE_APPROACHES if self is Phase.GREEN_WE else NS_APPROACHES

    @property
    def other(self) -> "Phase":
        return Phase.GREEN_NS if self is Phase.GREEN_WE else Phase.GREEN_WE


def flow_of(approach: str) -> str:
    return "NS" if approach in NS_APPROACHES else "WE"


@dataclass
class SimConfig:
    we_lanes: int = 3
    ns_lanes: int = 2
    we_length: float = 250.0
    ns_length: float = 200.0
    we_speed: float = 50 / 3.6
    ns_speed: float = 30 / 3.6
    yellow_duration: int = 3
    min_green: int = 7
    delta_switch: int = 10
    decision_interval: int = 5
    saturation_headway: float = 2.0
    queue_cap_terminate: int = 100
    max_episode_steps: int = 2000
    vicinity_L: float = 40.0

    def validate(self) -> None:
        if self.delta_switch != self.yellow_duration + self.min_green:
            raise ConfigError(
                f"delta_switch ({self.delta_switch}) must equal yellow_duration + min_green "
                f"({self.yellow_duration} + {self.min_green})"
            )
        if self.decision_interval < 1:
            raise ConfigError("decision_interval must be >= 1")
        if self.yellow_duration < 0 or self.min_green < 0:
            raise ConfigError("yellow_duration and min_green must be non-negative")
        positive = {
            "we_lanes": self.we_lanes,
            "ns_lanes": self.ns_lanes,
            "we_length": self.we_length,
            "ns_length": self.ns_length,
            "we_speed": self.we_speed,
            "ns_speed": self.ns_speed,
            "saturation_headway": self.saturation_headway,
            "queue_cap_terminate": self.queue_cap_terminate,
            "max_episode_steps": self.max_episode_steps,
            "vicinity_L": self.vicinity_L,
        }
        for name, value in positive.items():
            if not value > 0:
                raise ConfigError(f"{name} must be > 0, got {value}")

    def lanes(self, approach: str) -> int:
        return self.ns_lanes if approach in NS_APPROACHES else self.we_lanes

    def length(self, approach: str) -> float:
        return self.ns_length if approach in NS_APPROACHES else self.we_length

    def speed(self, approach: str) -> float:
        return self.ns_speed if approach in NS_APPROACHES else self.we_speed

    def travel_ticks(self, approach: str) -> int:
        # free-flow link traversal, rounded up to whole ticks
        return max(1, math.ceil(self.length(approach) / self.speed(approach) - 1e-9))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping) -> "SimConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown sim config keys: {sorted(unknown)}")
        cfg = cls(**d)
        cfg.validate()
        return cfg


@dataclass
class SignalMachine:
    current_phase: Phase = Phase.GREEN_WE
    in_yellow: bool = False
    time_in_phase: int = 0
    pending_phase: Optional[Phase] = None
    # ticks of actual green in the current phase (excludes yellow)
    green_time: int = 0

    @property
    def target_phase(self) -> Phase:
        """Phase that is green, or about to be green while in yellow."""
        return self.pending_phase if self.in_yellow else self.current_phase

    def green_approaches(self) -> Tuple[str, ...]:
        return () if self.in_yellow else self.current_phase.served


class Vehicle:
    __slots__ = ("id", "approach", "spawn_time", "arrive_at_queue_time",
                 "join_time", "wait_so_far", "depart_time")

    def __init__(self, vid: int, approach: str, spawn_time: int, arrive_at_queue_time: int):
        self.id = vid
        self.approach = approach
        self.spawn_time = spawn_time
        self.arrive_at_queue_time = arrive_at_queue_time
        self.join_time: Optional[int] = None
        self.wait_so_far = 0
        self.depart_time: Optional[int] = None

    @property
    def flow(self) -> str:
        return flow_of(self.approach)

    def __repr__(self) -> str:
        return (f"Vehicle(id={self.id}, {self.approach}, spawn={self.spawn_time}, "
                f"wait={self.wait_so_far}, depart={self.depart_time})")


@dataclass
class TickOutcome:
    clock: int
    departures: List[Vehicle]
    arrivals_joined_queue: Dict[str, int]
    spawned: Dict[str, int]
    terminated_early: bool
    in_yellow: bool
    # green phase, or the incoming one during yellow
    phase: Phase

    @property
    def throughput(self) -> Tuple[int, int]:
        """(T_NS, T_WE) for this tick."""
        ns = sum(1 for v in self.departures if v.approach in NS_APPROACHES)
        return ns, len(self.departures) - ns

    def departures_by_approach(self) -> Dict[str, int]:
        counts = dict.fromkeys(APPROACHES, 0)
        for v in self.departures:
            counts[v.approach] += 1
        return counts


@dataclass
class SimState:
    config: SimConfig
    arrivals: Dict[str, "object"]
    clock: int = 0
    signal: SignalMachine = field(default_factory=SignalMachine)
    traveling: Dict[str, Deque[Vehicle]] = field(
        default_factory=lambda: {k: deque() for k in APPROACHES})
    queues: Dict[str, Deque[Vehicle]] = field(
        default_factory=lambda: {k: deque() for k in APPROACHES})
    departed: List[Vehicle] = field(default_factory=list)
    tick_throughput: Tuple[int, int] = (0, 0)
    discharge_accumulator: Dict[str, float] = field(
        default_factory=lambda: dict.fromkeys(APPROACHES, 0.0))
    spawned_count: int = 0
    terminated: bool = False
    switch_times: List[int] = field(default_factory=list)

    @property
    def done(self) -> bool:
        return self.terminated or self.clock >= self.config.max_episode_steps

    def all_vehicles(self) -> List[Vehicle]:
        out: List[Vehicle] = []
        for k in APPROACHES:
            out.extend(self.traveling[k])
            out.extend(self.queues[k])
        out.extend(self.departed)
        return out


def new_simulation(config: SimConfig, arrivals: Mapping[str, object], seed: int = 0) -> SimState:
    """Fresh state. ``arrivals`` maps approach -> ArrivalSpec (or a built process).

    Specs are instantiated with independent generators spawned from ``seed``, so
    the arrival streams depend only on (spec, seed), never on the controller.
    """
    from .traffic_gen import build_processes

    config.validate()
    missing = set(APPROACHES) - set(arrivals)
    if missing:
        raise ConfigError(f"no arrival process for approaches {sorted(missing)}")
    state = SimState(config=config, arrivals=build_processes(arrivals, seed))
    state.signal = SignalMachine(current_phase=Phase.GREEN_WE,
                                 time_in_phase=config.delta_switch,
                                 green_time=config.delta_switch)
    return state


def tick(state: SimState) -> TickOutcome:
    """Advance one second: spawn, join queues, discharge, accrue waits."""
    if state.terminated:
        raise RuntimeError("simulation already terminated")
    cfg = state.config
    state.clock += 1
    t = state.clock

    spawned = dict.fromkeys(APPROACHES, 0)
    for k in APPROACHES:
        n = int(state.arrivals[k].arrivals_for_tick(t))
        if n:
            travel = cfg.travel_ticks(k)
            for _ in range(n):
                state.spawned_count += 1
                state.traveling[k].append(Vehicle(state.spawned_count, k, t, t + travel))
        spawned[k] = n

    joined = dict.fromkeys(APPROACHES, 0)
    for k in APPROACHES:
        lane = state.traveling[k]
        while lane and lane[0].arrive_at_queue_time <= t:
            v = lane.popleft()
            v.join_time = t
            state.queues[k].append(v)
            joined[k] += 1

    departures: List[Vehicle] = []
    green = state.signal.green_approaches()
    for k in APPROACHES:
        if k not in green:
            state.discharge_accumulator[k] = 0.0
            continue
        q = state.queues[k]
        credit = state.discharge_accumulator[k] + cfg.lanes(k) / cfg.saturation_headway
        n = min(int(math.floor(credit + 1e-12)), len(q))
        for _ in range(n):
            v = q.popleft()
            v.depart_time = t
            departures.append(v)
        credit -= n
        # unused capacity is not banked once the queue clears
        state.discharge_accumulator[k] = credit if q else 0.0
    state.departed.extend(departures)

    for k in APPROACHES:
        for v in state.queues[k]:
            v.wait_so_far += 1

    ns = sum(1 for v in departures if v.approach in NS_APPROACHES)
    state.tick_throughput = (ns, len(departures) - ns)

    terminated = any(len(state.queues[k]) > cfg.queue_cap_terminate for k in APPROACHES)
    state.terminated = terminated
    return TickOutcome(clock=t, departures=departures, arrivals_joined_queue=joined,
                       spawned=spawned, terminated_early=terminated,
                       in_yellow=state.signal.in_yellow, phase=state.signal.target_phase)


def _advance_signal(sig: SignalMachine, yellow_duration: int) -> None:
    sig.time_in_phase += 1
    if sig.in_yellow:
        if sig.time_in_phase >= yellow_duration:
            sig.current_phase = sig.pending_phase
            sig.pending_phase = None
            sig.in_yellow = False
            sig.green_time = 0
    else:
        sig.green_time += 1


def decision_step(state: SimState, command: Phase,
                  on_tick: Optional[Callable[[TickOutcome], None]] = None) -> List[TickOutcome]:
    """Apply one controller decision and run the ticks it spans.

    Keeping the phase runs ``decision_interval`` ticks. Switching runs
    ``yellow_duration`` ticks of yellow then ``min_green`` ticks of the new
    green. The dwell clock restarts when the yellow begins, so the next
    decision point lands exactly ``delta_switch`` seconds after the change.
    Stops early on queue-cap termination or at ``max_episode_steps``.
    ``on_tick`` is called with each outcome while the state reflects that tick.
    """
    cfg = state.config
    sig = state.signal
    command = Phase(command)
    if sig.in_yellow or sig.time_in_phase < cfg.delta_switch:
        raise IllegalActionError(
            f"decision at t={state.clock} with time_in_phase={sig.time_in_phase} "
            f"< delta_switch={cfg.delta_switch}")
    if command == sig.current_phase:
        n_ticks = cfg.decision_interval
    else:
        n_ticks = cfg.delta_switch
        sig.pending_phase = command
        sig.time_in_phase = 0
        state.switch_times.append(state.clock)
        if cfg.yellow_duration > 0:
            sig.in_yellow = True
        else:
            sig.current_phase = command
            sig.pending_phase = None
            sig.green_time = 0

    outcomes = []
    for _ in range(n_ticks):
        if state.done:
            break
        out = tick(state)
        _advance_signal(sig, cfg.yellow_duration)
        outcomes.append(out)
        if on_tick is not None:
            on_tick(out)
    return outcomes


def queue_lengths(state: SimState) -> Tuple[int, int, int, int]:
    return tuple(len(state.queues[k]) for k in APPROACHES)


def vicinity_counts(state: SimState, L: float) -> Tuple[int, int, int, int]:
    """Vehicles within ``L`` meters of the stop line per approach (queued + traveling)."""
    cfg = state.config
    out = []
    for k in APPROACHES:
        if not 0 < L <= cfg.length(k):
            raise ConfigError(f"vicinity L={L} outside (0, {cfg.length(k)}] for approach {k}")
        speed = cfg.speed(k)
        n = len(state.queues[k])
        # travelers are ordered by arrival time, so nearest ones are at the front
        for v in state.traveling[k]:
            if speed * max(0, v.arrive_at_queue_time - state.clock) <= L:
                n += 1
            else:
                break
        out.append(n)
    return tuple(out)


def queued_wait_sums(state: SimState) -> Tuple[int, int, int, int]:
    """Ground-truth sum of partial waits of currently queued vehicles, per approach."""
    return tuple(sum(v.wait_so_far for v in state.queues[k]) for k in APPROACHES)


def queued_waits(state: SimState) -> List[int]:
    return [v.wait_so_far for k in APPROACHES for v in state.queues[k]]
