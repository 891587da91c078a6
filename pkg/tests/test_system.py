import math

import numpy as np
import pytest

from src.ScenarioConfig import ScenarioConfig
from src.System import LinkRecord, count_unconverged, decode_indicator
from src.systems.ProposedSystem import ProposedSystem
from src.Topology import build_topology


class TestDecodeIndicator:
    def test_busy_pu_always_fails(self):
        assert decode_indicator(0.1, 1 + 0j, 1.0, 1.0, 10.0, 0, 0.5) == 0

    def test_zero_rate_always_decodes(self):
        assert decode_indicator(0.0, 0j, 1.0, 1.0, 0.0, 1, 0.5) == 1

    def test_no_power_fails(self):
        assert decode_indicator(0.1, 1 + 0j, 1.0, 1.0, 0.0, 1, 0.5) == 0

    def test_capacity_boundary(self):
        capacity = 0.5 * math.log2(1.0 + 3.0 * 2.0 * 1.0)
        assert decode_indicator(capacity, 1 + 0j, 2.0, 1.0, 3.0, 1, 0.5) == 1
        assert decode_indicator(capacity * 1.001, 1 + 0j, 2.0, 1.0, 3.0, 1, 0.5) == 0

    def test_partial_bandwidth(self):
        capacity = 0.25 * 0.5 * math.log2(1.0 + 1.0 * 4.0 / 0.5)
        assert decode_indicator(capacity, 2 + 0j, 1.0, 0.5, 1.0, 1, 0.25) == 1


def test_link_record_row():
    record = LinkRecord(
        hop=2, cluster=1, subchannel=0, receiver=4, relay=1,
        rate=0.5, power=2.0, pu_idle=True, decoded=False,
    )
    row = record.as_row()
    assert row["pu_idle"] == 1
    assert row["decoded"] == 0
    assert row["receiver"] == 4


def test_count_unconverged():
    class _Solve:
        def __init__(self, converged):
            self.converged = converged

    assert count_unconverged([_Solve(True), None, _Solve(False)]) == 1


class TestSystemFrame:
    def test_weights_shape_checked(self, small_topology, rng):
        system = ProposedSystem(small_topology)
        with pytest.raises(ValueError, match="Expected 6 weights"):
            system.run_frame(np.ones(4), rng)

    def test_pu_states_held_for_coherence_period(self, rng):
        config = ScenarioConfig(
            M=1, N=2, K0=2, Km=1, pu_coherence_frames=3, max_iter=50
        )
        system = ProposedSystem(build_topology(config, seed=0))
        first = system.sense(rng)
        assert system.sense(rng).S is first.S
        assert system.sense(rng).S is first.S
        assert system.sense(rng).S is not first.S

    def test_fresh_states_every_frame_by_default(self, small_topology, rng):
        system = ProposedSystem(small_topology)
        assert system.sense(rng).S is not system.sense(rng).S
