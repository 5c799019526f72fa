"""Decision-level environment around the simulator.

Wraps a ``SimState`` with the bookkeeping an agent needs: the waiting-time
estimator, the throughput deviation, per-tick rewards summed over each
decision, and an ``EpisodeRecord`` of everything that happened.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Dict, Mapping, Optional, Tuple

import numpy as np

from . import fairness as fm
from .sim_core import (APPROACHES, Phase, SimConfig, decision_step, new_simulation,
                       queue_lengths, queued_wait_sums, queued_waits, vicinity_counts)


@dataclass
class Normalization:
    queue: float = 100.0
    wait_sum: float = 1000.0
    delta: float = 100.0


@dataclass
class AgentSpec:
    """Which controller family the observations/rewards are built for.

    kind: "dfc" (delay-based, parameter ``alpha``) or "tfc" (throughput-based,
    parameters ``beta`` and fairness weights).
    dfc_obs_waits: "estimator" uses the queue-length estimator for the wait
    sums in the observation, "truth" the simulator's exact sums.
    dfc_reward_waits: "truth" uses simulator waits, "estimator" the FIFO
    reconstruction from queue/departure counts.
    reward_scale multiplies the transition reward handed to the learner only;
    recorded per-tick rewards stay unscaled. ``None`` picks 0.01 / (1 + 10*alpha)
    for DFC (the quadratic wait term grows with alpha) and 0.01 for TFC.
    """
    kind: str = "dfc"
    alpha: float = 0.0
    beta: float = 0.01
    phi_NS: float = 1.0
    phi_WE: float = 1.5
    L: Optional[float] = None
    dfc_obs_waits: str = "estimator"
    dfc_reward_waits: str = "truth"
    reward_scale: Optional[float] = None
    norm: Normalization = field(default_factory=Normalization)

    def __post_init__(self):
        if isinstance(self.norm, Mapping):
            self.norm = Normalization(**self.norm)
        if self.kind not in ("dfc", "tfc"):
            raise ValueError(f"unknown agent kind {self.kind!r}")
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be non-negative")
        if self.dfc_obs_waits not in ("estimator", "truth"):
            raise ValueError("dfc_obs_waits must be 'estimator' or 'truth'")
        if self.dfc_reward_waits not in ("estimator", "truth"):
            raise ValueError("dfc_reward_waits must be 'estimator' or 'truth'")
        fm.FairnessWeights(self.phi_NS, self.phi_WE)

    @property
    def label(self) -> str:
        return f"DFC_{self.alpha:g}" if self.kind == "dfc" else "TFC"

    @property
    def effective_reward_scale(self) -> float:
        if self.reward_scale is not None:
            return self.reward_scale
        return 0.01 / (1 + 10 * self.alpha) if self.kind == "dfc" else 0.01

    @property
    def obs_dim(self) -> int:
        return 10 if self.kind == "dfc" else 7

    def to_dict(self) -> dict:
        return asdict(self)


class IntersectionEnv:
    def __init__(self, config: SimConfig, arrivals: Mapping[str, object], agent: AgentSpec):
        config.validate()
        self.config = config
        self.arrival_specs = dict(arrivals)
        self.agent = agent
        self.L = agent.L if agent.L is not None else config.vicinity_L
        self.state = None

    def reset(self, seed: int) -> np.ndarray:
        self.state = new_simulation(self.config, self.arrival_specs, seed)
        self.estimator = fm.EstimatorState()
        self.tracker = fm.FifoWaitTracker()
        self.delta = 0.0
        self.record = fm.EpisodeRecord()
        return self.observe()

    @property
    def done(self) -> bool:
        return self.state.done

    def observe(self) -> np.ndarray:
        st = self.state
        n = self.agent.norm
        onehot = [0.0, 0.0]
        onehot[int(st.signal.target_phase)] = 1.0
        if self.agent.kind == "dfc":
            q = queue_lengths(st)
            if self.agent.dfc_obs_waits == "estimator":
                D = self.estimator.D if self.estimator.previous_phase is not None else [0] * 4
            else:
                D = queued_wait_sums(st)
            feats = [x / n.queue for x in q] + [x / n.wait_sum for x in D] + onehot
        else:
            v = vicinity_counts(st, self.L)
            feats = [x / n.queue for x in v] + [self.delta / n.delta] + onehot
        return np.asarray(feats, dtype=float)

    def _tick_reward(self, q) -> float:
        a = self.agent
        if a.kind == "dfc":
            if a.dfc_reward_waits == "truth":
                waits = queued_waits(self.state)
            else:
                waits = self.tracker.all_waits()
            return fm.dfc_reward(waits, a.alpha)
        return fm.tfc_reward(q, self.delta, a.beta)

    def _on_tick(self, out) -> None:
        st = self.state
        q = queue_lengths(st)
        dep = out.departures_by_approach()
        fm.estimator_update(self.estimator, out.phase, q)
        self.tracker.update(q, dep)
        T_NS, T_WE = out.throughput
        v = vicinity_counts(st, self.L)
        # vehicles that crossed this tick were in the vicinity when it began
        v_pre = tuple(v[i] + dep[k] for i, k in enumerate(APPROACHES))
        B = fm.both_flows_present(v_pre)
        self.delta = fm.fairness_deviation_update(self.delta, T_NS, T_WE, B,
                                                  self.agent.phi_NS, self.agent.phi_WE)
        r = self._tick_reward(q)
        self._decision_reward += r
        self.record.ticks.append(fm.TickRow(
            t=out.clock, q=q, T_NS=T_NS, T_WE=T_WE, B=int(B), delta=self.delta,
            reward=r, phase=int(out.phase), in_yellow=int(out.in_yellow)))

    def step(self, command: Phase) -> Tuple[np.ndarray, float, bool, Dict]:
        """Run one decision; returns (observation, summed reward, done, info)."""
        st = self.state
        self._decision_reward = 0.0
        outcomes = decision_step(st, command, self._on_tick)
        total = self._decision_reward
        self.record.decision_rewards.append(total)
        if st.done:
            self._finalize()
        return self.observe(), total, st.done, {"ticks": len(outcomes),
                                               "terminated": st.terminated}

    def _finalize(self) -> None:
        st = self.state
        self.record.terminated_early = st.terminated
        self.record.vehicles = [
            fm.VehicleRow(id=v.id, approach=v.approach, flow=v.flow, spawn_time=v.spawn_time,
                          join_time=v.join_time, depart_time=v.depart_time, wait=v.wait_so_far)
            for v in st.departed]
        self.record.undeparted = sum(len(st.queues[k]) + len(st.traveling[k]) for k in APPROACHES)


def run_episode(env: IntersectionEnv, controller, seed: int) -> fm.EpisodeRecord:
    """Roll out ``controller`` (anything with ``decide(env) -> Phase``) for one episode."""
    env.reset(seed)
    if hasattr(controller, "reset"):
        controller.reset()
    while not env.done:
        env.step(controller.decide(env))
    return env.record
