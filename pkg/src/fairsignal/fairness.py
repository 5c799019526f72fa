"""Fairness-aware observations, rewards and metrics.

Contains the queue-length based waiting-time estimator, the delay-based
(DFC) and throughput-based (TFC) per-tick rewards, the weighted throughput
deviation, Jain's index and the per-episode wait/throughput statistics.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Deque, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .sim_core import APPROACHES, Phase


class UndefinedMetricError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Waiting-time estimation from queue-length sequences
# ---------------------------------------------------------------------------

@dataclass
class EstimatorState:
    D: List[int] = field(default_factory=lambda: [0, 0, 0, 0])
    D_prev1: List[int] = field(default_factory=lambda: [0, 0, 0, 0])
    D_prev2: List[int] = field(default_factory=lambda: [0, 0, 0, 0])
    q_prev: List[int] = field(default_factory=lambda: [0, 0, 0, 0])
    previous_phase: Optional[Phase] = None


def estimator_update(est: EstimatorState, current_phase: Phase, q: Sequence[int]) -> EstimatorState:
    """One tick of the recursive waiting-time-sum estimator (in place; returns ``est``).

    For each red approach, D = 2*D[-1] - D[-2] + (q - q[-1]), which is the same
    as D[-1] + q: every queued vehicle adds one second. All history is zeroed
    whenever the phase differs from the previous tick's. Green approaches
    report D = 0.
    """
    if any(x < 0 for x in q):
        raise ValueError(f"negative queue length in {tuple(q)}")
    if current_phase != est.previous_phase:
        for i in range(4):
            est.D_prev1[i] = est.D_prev2[i] = est.q_prev[i] = 0
    green = current_phase.served
    for i, k in enumerate(APPROACHES):
        if k in green:
            est.D[i] = 0
            continue
        dq = q[i] - est.q_prev[i]
        est.D[i] = 2 * est.D_prev1[i] - est.D_prev2[i] + dq
        # shift oldest first so D[-2] receives the old D[-1]
        est.D_prev2[i] = est.D_prev1[i]
        est.D_prev1[i] = est.D[i]
        est.q_prev[i] = q[i]
    est.previous_phase = current_phase
    return est


class FifoWaitTracker:
    """Per-vehicle partial waits rebuilt from counts alone.

    Uses only per-approach queue lengths and stop-line departure counts; with
    FIFO service the vehicles that leave are always the oldest ones, so the
    reconstruction matches the simulator's per-vehicle waits exactly.
    """

    def __init__(self):
        self.waits: Dict[str, Deque[int]] = {k: deque() for k in APPROACHES}

    def update(self, q: Sequence[int], departures: Dict[str, int]) -> None:
        for i, k in enumerate(APPROACHES):
            w = self.waits[k]
            n_dep = departures.get(k, 0)
            # joiners enter at the back before this tick's departures leave the front
            joined = q[i] + n_dep - len(w)
            if joined < 0:
                raise ValueError(f"inconsistent counts on approach {k}")
            w.extend([0] * joined)
            for _ in range(n_dep):
                w.popleft()
            for j in range(len(w)):
                w[j] += 1

    def all_waits(self) -> List[int]:
        return [d for k in APPROACHES for d in self.waits[k]]


# ---------------------------------------------------------------------------
# Rewards
# ---------------------------------------------------------------------------

def dfc_reward(partial_waits: Iterable[int], alpha: float) -> float:
    """-sum(1 + alpha*(2d - 1)) over currently waiting vehicles."""
    waits = list(partial_waits)
    n = len(waits)
    return -(n + alpha * (2 * sum(waits) - n))


def dfc_return_contribution(w: float, alpha: float) -> float:
    """Total reward a vehicle with final wait ``w`` contributes to the return."""
    if w < 0:
        raise ValueError("wait must be non-negative")
    return -(w + alpha * w * w)


def fairness_deviation_update(delta_prev: float, T_NS: int, T_WE: int, B: bool,
                              phi_NS: float, phi_WE: float) -> float:
    if T_NS < 0 or T_WE < 0:
        raise ValueError("throughput must be non-negative")
    if not B:
        return delta_prev
    return delta_prev + (T_NS / phi_NS - T_WE / phi_WE)


def both_flows_present(v: Sequence[int]) -> bool:
    """B(t): vehicles on both conflicting flows within the vicinity."""
    vN, vE, vS, vW = v
    return (vN + vS) > 0 and (vE + vW) > 0


def tfc_reward(q: Sequence[int], delta: float, beta: float) -> float:
    return -float(sum(q)) - beta * abs(delta)


@dataclass(frozen=True)
class FairnessWeights:
    phi_NS: float = 1.0
    phi_WE: float = 1.5

    def __post_init__(self):
        if not (self.phi_NS > 0 and self.phi_WE > 0):
            raise ValueError("fairness weights must be positive")


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

def jain_index(values: Sequence[float], flag: Optional[list] = None) -> float:
    """Jain's fairness index; all-zero input returns 1.0 and appends a note to ``flag``."""
    x = np.asarray(values, dtype=float)
    if x.size == 0:
        raise UndefinedMetricError("Jain index of an empty set")
    if np.any(x < 0):
        raise ValueError("Jain index requires non-negative values")
    sq = float(np.dot(x, x))
    if sq == 0.0:
        if flag is not None:
            flag.append("all-zero input; Jain index reported as 1")
        return 1.0
    return float(x.sum()) ** 2 / (x.size * sq)


def nearest_rank_quantile(values: Sequence[float], p: float) -> float:
    x = np.sort(np.asarray(values, dtype=float))
    if x.size == 0:
        raise UndefinedMetricError("quantile of an empty set")
    rank = max(1, math.ceil(p * x.size))
    return float(x[rank - 1])


def empirical_cdf(values: Sequence[float]) -> List[Tuple[float, float]]:
    """(value, fraction <= value) at each distinct value, ascending."""
    x = np.sort(np.asarray(values, dtype=float))
    n = x.size
    out = []
    for i in range(n):
        if i + 1 < n and x[i + 1] == x[i]:
            continue
        out.append((float(x[i]), (i + 1) / n))
    return out


@dataclass
class TickRow:
    t: int
    q: Tuple[int, int, int, int]
    T_NS: int
    T_WE: int
    B: int
    delta: float
    reward: float
    phase: int
    in_yellow: int


@dataclass
class VehicleRow:
    id: int
    approach: str
    flow: str
    spawn_time: int
    join_time: int
    depart_time: int
    wait: int


@dataclass
class EpisodeRecord:
    vehicles: List[VehicleRow] = field(default_factory=list)
    ticks: List[TickRow] = field(default_factory=list)
    decision_rewards: List[float] = field(default_factory=list)
    terminated_early: bool = False
    undeparted: int = 0

    def waits(self, flow: str = "all") -> List[int]:
        if flow == "all":
            return [v.wait for v in self.vehicles]
        return [v.wait for v in self.vehicles if v.flow == flow]

    @property
    def total_reward(self) -> float:
        return float(sum(r.reward for r in self.ticks))

    @property
    def length(self) -> int:
        return len(self.ticks)


@dataclass
class WaitStats:
    n: int
    quantile_95: float
    max: float
    mean: float
    cdf: List[Tuple[float, float]]


def wait_statistics(record: EpisodeRecord, flow: str = "all") -> WaitStats:
    w = record.waits(flow)
    if not w:
        raise UndefinedMetricError(f"no departed vehicles for flow {flow!r}")
    return WaitStats(n=len(w), quantile_95=nearest_rank_quantile(w, 0.95),
                     max=float(max(w)), mean=float(np.mean(w)), cdf=empirical_cdf(w))


@dataclass
class ThroughputTrace:
    window_start: List[int]
    T_NS: List[int]
    T_WE: List[int]
    mean_wait_NS: List[float]
    mean_wait_WE: List[float]


def throughput_trace(record: EpisodeRecord, window: int = 100) -> ThroughputTrace:
    """Non-overlapping window sums of per-flow throughput and mean waits of departures.

    A window with no departures on a flow reports NaN for that flow's mean wait.
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    n = record.length
    n_win = max(1, math.ceil(n / window)) if n else 0
    ns = [0] * n_win
    we = [0] * n_win
    for i, row in enumerate(record.ticks):
        ns[i // window] += row.T_NS
        we[i // window] += row.T_WE
    t0 = record.ticks[0].t if n else 1
    sums = {"NS": [0.0] * n_win, "WE": [0.0] * n_win}
    counts = {"NS": [0] * n_win, "WE": [0] * n_win}
    for v in record.vehicles:
        j = (v.depart_time - t0) // window
        if 0 <= j < n_win:
            sums[v.flow][j] += v.wait
            counts[v.flow][j] += 1

    def means(f):
        return [s / c if c else float("nan") for s, c in zip(sums[f], counts[f])]

    return ThroughputTrace(window_start=[t0 + j * window for j in range(n_win)],
                           T_NS=ns, T_WE=we, mean_wait_NS=means("NS"), mean_wait_WE=means("WE"))
