from collections import deque

import numpy as np
import pytest

from fairsignal.sim_core import APPROACHES, Phase, SimConfig, Vehicle, new_simulation
from fairsignal.traffic_gen import ArrivalProcess, NhppSpec, PoissonSpec

ACCEPTANCE_RESULTS = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(line)


class ScriptedArrivals(ArrivalProcess):
    """Arrivals from an explicit {tick: count} table (or a callable of t)."""

    class _Spec:
        def validate(self):
            pass

    def __init__(self, table):
        super().__init__(self._Spec(), np.random.default_rng(0))
        self.table = table

    def arrivals_for_tick(self, t):
        self.draws += 1
        if callable(self.table):
            return self.table(t)
        return self.table.get(t, 0)


def scripted(**tables):
    """Per-approach scripted arrivals; unspecified approaches get none."""
    return {k: ScriptedArrivals(tables.get(k, {})) for k in APPROACHES}


def draining_arrivals(rate_we=0.2, rate_ns=0.1, active=400):
    """Poisson arrivals for ``active`` seconds, then none (so the intersection empties)."""
    big = 10 ** 6

    def spec(rate):
        return NhppSpec(((0, active + 1, rate), (active + 1, big, 0.0)), big)

    return {"N": spec(rate_ns), "E": spec(rate_we), "S": spec(rate_ns), "W": spec(rate_we)}


def state_with_queues(q, phase=Phase.GREEN_WE, time_in_phase=10, config=None):
    """Fresh state with ``q`` = (N, E, S, W) vehicles already queued."""
    cfg = config or SimConfig()
    st = new_simulation(cfg, {k: PoissonSpec(0.0) for k in APPROACHES}, 0)
    st.signal.current_phase = phase
    st.signal.time_in_phase = time_in_phase
    st.signal.green_time = time_in_phase
    vid = 0
    for k, n in zip(APPROACHES, q):
        for _ in range(n):
            vid += 1
            v = Vehicle(vid, k, 0, 0)
            v.join_time = 0
            st.queues[k].append(v)
    st.spawned_count = vid
    return st


@pytest.fixture
def cfg():
    return SimConfig()
