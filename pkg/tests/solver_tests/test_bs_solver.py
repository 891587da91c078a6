from dataclasses import replace

import numpy as np
import pytest

from src.GoodputCurve import GoodputCurve, build_curve_general
from src.solvers.BsSolver import (
    BsAllocation,
    BsProblem,
    decoupled_objective,
    packet_partition,
    rs_candidate,
    solve_bs,
)
from src.util.oracles import brute_force_oracle, enumerated_relay_objective
from tests.solver_tests.base_solver_test import BaseSolverTest


def _curve() -> GoodputCurve:
    return build_curve_general(
        [(1.0, 2.0), (2.0, 3.0)], plans=[[1.0, 0.0], [1.0, 1.0]]
    )


def _problem(seed: int, n_direct: int = 1) -> BsProblem:
    rng = np.random.default_rng(seed)
    beta = rng.uniform(0.4, 1.0, size=2)
    return BsProblem(
        phi=rng.exponential(2.0, size=(2, 1 + n_direct)),
        weights=rng.uniform(0.5, 2.0, size=n_direct),
        curves=(_curve(),),
        beta=beta,
        interference_coeff=0.5 * (1.0 - beta),
        power_budget=4.0,
        I_bar=1.0,
        epsilon=0.05,
    )


class TestRsCandidate:
    def test_scan_example(self):
        curve = build_curve_general([(2.0, 4.0)])
        r, p, value = rs_candidate(
            curve, nu=0.01, eta=0.0, beta=1.0, phi=3.0, tau=1.0, epsilon=0.0
        )
        assert r == pytest.approx(2.0)
        assert p == pytest.approx(5.0)
        assert value == pytest.approx(4.0 - 0.01 * 15.0 / 3.0)
        assert value == pytest.approx(3.95)

    def test_power_cap_limits_rate(self):
        curve = build_curve_general([(2.0, 4.0)])
        r, p, value = rs_candidate(
            curve, 0.01, 0.0, 1.0, 3.0, 1.0, 0.0, power_cap=1.0
        )
        assert r == pytest.approx(1.0)
        assert p == pytest.approx(1.0)
        assert value == pytest.approx(1.99)

    def test_stationary_point_inside_segment(self):
        curve = build_curve_general([(4.0, 4.0)])
        # Stationary point g*log2(g*phi/(price*ln2)) = 0.5*log2(8)
        price = 0.5 / (np.log(2) * 8.0)
        r, _, _ = rs_candidate(curve, price, 0.0, 1.0, 1.0, 1.0, 0.0)
        assert r == pytest.approx(1.5)

    def test_worthless_relay(self):
        r, p, value = rs_candidate(GoodputCurve.zero(), 0.1, 0.0, 1.0, 3.0, 1.0, 0.0)
        assert (r, p, value) == (0.0, 0.0, 0.0)


class TestPacketPartition:
    def test_fractions_follow_plan(self):
        curve = _curve()
        assert packet_partition(curve, 1.0) == pytest.approx([1.0, 0.0])
        assert packet_partition(curve, 2.0) == pytest.approx([0.5, 0.5])
        assert packet_partition(curve, 1.5) == pytest.approx([2 / 3, 1 / 3])

    def test_past_saturation(self):
        curve = _curve()
        assert packet_partition(curve, 9.0) == pytest.approx([0.5, 0.5])

    def test_sums_to_at_most_one(self):
        curve = _curve()
        for r in np.linspace(0.1, 3.0, 15):
            assert packet_partition(curve, r).sum() <= 1.0

    def test_zero_and_negative(self):
        assert packet_partition(_curve(), 0.0).tolist() == [0.0, 0.0]
        with pytest.raises(ValueError, match="non-negative"):
            packet_partition(_curve(), -0.5)


class TestDecoupledObjective:
    def _allocation(self, rs_rate: np.ndarray, ms_rate: np.ndarray) -> BsAllocation:
        N, M = rs_rate.shape
        empty = BsAllocation.empty(N, M, ms_rate.shape[1], 2)
        return replace(empty, rs_rate=rs_rate, ms_rate=ms_rate)

    def test_matches_enumeration_with_one_subchannel_per_relay(self):
        curves = (_curve(), build_curve_general([(3.0, 2.0)]))
        beta = np.array([0.9, 0.5, 0.7])
        rs_rate = np.array([[1.5, 0.0], [0.0, 0.0], [0.0, 2.5]])
        ms_rate = np.array([[0.0], [1.2], [0.0]])
        allocation = self._allocation(rs_rate, ms_rate)
        weights = np.array([1.3])
        decoupled = decoupled_objective(allocation, curves, beta, 0.1, weights)
        enumerated = enumerated_relay_objective(allocation, curves, beta, 0.1, weights)
        assert decoupled == pytest.approx(enumerated, rel=1e-12, abs=1e-12)

    def test_overestimates_when_relay_holds_two_subchannels(self):
        curves = (_curve(),)
        beta = np.array([0.8, 0.8])
        allocation = self._allocation(np.array([[1.5], [1.5]]), np.zeros((2, 0)))
        decoupled = decoupled_objective(allocation, curves, beta, 0.0, np.zeros(0))
        enumerated = enumerated_relay_objective(
            allocation, curves, beta, 0.0, np.zeros(0)
        )
        assert decoupled > enumerated

    def test_enumeration_limit(self):
        allocation = self._allocation(np.zeros((13, 1)), np.zeros((13, 0)))
        with pytest.raises(ValueError, match="Too many subchannels"):
            enumerated_relay_objective(
                allocation, (_curve(),), np.ones(13), 0.0, np.zeros(0)
            )


class TestSolveBs(BaseSolverTest):
    @pytest.mark.parametrize("seed", range(20))
    def test_feasible_and_near_oracle(self, seed):
        problem = _problem(seed)
        allocation = solve_bs(problem)
        self.assert_bs_feasible(problem, allocation)
        self.assert_near_oracle(allocation.objective, brute_force_oracle(problem), 0.02)

    def test_partitions_follow_granted_rate(self):
        problem = _problem(1)
        allocation = solve_bs(problem)
        for n in np.flatnonzero(allocation.rs_rate[:, 0] > 0.0):
            expected = packet_partition(problem.curves[0], allocation.rs_rate[n, 0])
            assert allocation.partitions[0, n] == pytest.approx(expected)
        idle = allocation.rs_rate[:, 0] == 0.0
        assert np.all(allocation.partitions[0, idle] == 0.0)

    def _greedy_relay_problem(self) -> BsProblem:
        return BsProblem(
            phi=np.full((2, 1), 50.0),
            weights=np.zeros(0),
            curves=(build_curve_general([(10.0, 10.0)]),),
            beta=np.ones(2),
            interference_coeff=np.zeros(2),
            power_budget=100.0,
            I_bar=1.0,
            epsilon=0.0,
        )

    def test_relay_on_two_subchannels_warns(self, caplog):
        allocation = solve_bs(self._greedy_relay_problem())
        assert allocation.relay_subchannel_counts().tolist() == [2]
        assert "more than one subchannel" in caplog.text

    def test_relay_on_two_subchannels_can_raise(self):
        with pytest.raises(RuntimeError, match="more than one subchannel"):
            solve_bs(self._greedy_relay_problem(), policy="error")

    def test_no_power(self):
        problem = replace(_problem(0), power_budget=0.0)
        allocation = solve_bs(problem)
        assert allocation.total_power == 0.0
        assert allocation.partitions.shape == (1, 2, 2)

    def test_gain_table_must_match(self):
        with pytest.raises(ValueError, match="receivers"):
            BsProblem(
                phi=np.ones((2, 3)),
                weights=np.ones(1),
                curves=(_curve(),),
                beta=np.ones(2),
                interference_coeff=np.zeros(2),
                power_budget=1.0,
                I_bar=1.0,
                epsilon=0.1,
            )

    def test_trace(self):
        trace: list = []
        solve_bs(_problem(2), trace=trace)
        assert trace
        assert trace[0]["iteration"] == 1
