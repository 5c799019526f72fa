"""Signal controllers. Each exposes ``decide(env) -> Phase`` at a decision point.

``env`` is an ``IntersectionEnv``; baselines read ``env.state`` directly,
RL policies read ``env.observe()``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .rl_engine import DimensionError, QNetwork, epsilon_greedy
from .sim_core import (APPROACHES, ConfigError, Phase, SimState, queue_lengths,
                       vicinity_counts)


@dataclass
class SotlParams:
    min_green: int = 7
    queue_threshold: int = 5
    approach_range: Tuple[int, int] = (0, 4)
    approach_window: float = 50.0

    def __post_init__(self):
        self.approach_range = tuple(self.approach_range)
        low, high = self.approach_range
        if min(self.min_green, self.queue_threshold, low, high, self.approach_window) < 0:
            raise ConfigError("SOTL parameters must be non-negative")
        if low > high:
            raise ConfigError(f"SOTL approach range low {low} > high {high}")


def _by_phase(values: Sequence[int], phase: Phase) -> int:
    return sum(values[i] for i, k in enumerate(APPROACHES) if k in phase.served)


def sotl_rule(time_in_phase: int, red_queue: int, green_approaching: int,
              params: SotlParams) -> bool:
    """True when all three switching conditions hold."""
    low, high = params.approach_range
    return (time_in_phase >= params.min_green
            and red_queue > params.queue_threshold
            and low <= green_approaching <= high)


def sotl_decide(state: SimState, params: SotlParams) -> Phase:
    current = state.signal.current_phase
    red_queue = _by_phase(queue_lengths(state), current.other)
    approaching = _by_phase(vicinity_counts(state, params.approach_window), current)
    if sotl_rule(state.signal.time_in_phase, red_queue, approaching, params):
        return current.other
    return current


def phase_pressures(q: Sequence[int], outgoing: Optional[Sequence[int]] = None) -> Tuple[int, int]:
    """(pressure GreenWE, pressure GreenNS); ``outgoing`` defaults to empty sinks."""
    out = outgoing if outgoing is not None else (0, 0, 0, 0)
    qN, qE, qS, qW = q
    oN, oE, oS, oW = out
    return (qW + qE) - (oW + oE), (qN + qS) - (oN + oS)


def max_pressure_decide(state: SimState, outgoing: Optional[Sequence[int]] = None) -> Phase:
    p = phase_pressures(queue_lengths(state), outgoing)
    current = state.signal.current_phase
    if p[current.other] > p[current]:
        return current.other
    return current


def fixed_time_decide(state: SimState, green_we: int, green_ns: int) -> Phase:
    if green_we <= 0 or green_ns <= 0:
        raise ConfigError("fixed-time green durations must be positive")
    sig = state.signal
    allotted = green_we if sig.current_phase is Phase.GREEN_WE else green_ns
    return sig.current_phase.other if sig.green_time >= allotted else sig.current_phase


def rl_decide(observation, network: QNetwork, epsilon: float,
              rng: Optional[np.random.Generator] = None) -> Phase:
    obs = np.asarray(observation, dtype=float)
    if obs.shape != (network.input_dim,):
        raise DimensionError(f"observation shape {obs.shape} != ({network.input_dim},)")
    rng = rng if rng is not None else np.random.default_rng()
    return Phase(epsilon_greedy(network.forward(obs), epsilon, rng))


class SotlController:
    name = "sotl"

    def __init__(self, params: Optional[SotlParams] = None):
        self.params = params or SotlParams()

    def decide(self, env) -> Phase:
        return sotl_decide(env.state, self.params)


class MaxPressureController:
    name = "max-pressure"

    def decide(self, env) -> Phase:
        return max_pressure_decide(env.state)


class FixedTimeController:
    name = "fixed-time"

    def __init__(self, green_we: int = 30, green_ns: int = 30):
        if green_we <= 0 or green_ns <= 0:
            raise ConfigError("fixed-time green durations must be positive")
        self.green_we, self.green_ns = green_we, green_ns

    def decide(self, env) -> Phase:
        return fixed_time_decide(env.state, self.green_we, self.green_ns)


class RandomController:
    name = "random"

    def __init__(self, seed: int = 0):
        self.seed = seed
        self.rng = np.random.default_rng(seed)

    def reset(self):
        pass

    def decide(self, env) -> Phase:
        return Phase(int(self.rng.integers(2)))


class RLController:
    """Greedy (or epsilon-greedy) policy over a trained Q-network."""

    def __init__(self, network: QNetwork, epsilon: float = 0.0, seed: int = 0, name: str = "rl"):
        self.network = network
        self.epsilon = epsilon
        self.rng = np.random.default_rng(seed)
        self.name = name

    def decide(self, env) -> Phase:
        return rl_decide(env.observe(), self.network, self.epsilon, self.rng)
