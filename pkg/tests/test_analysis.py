import math

import numpy as np
import pytest

from src.Analysis import (
    HopCounts,
    aggregate,
    gating_factor_no_rs,
    gating_factor_relay,
    goodput_cdf,
    goodput_histogram,
    no_relay_pfs_throughput,
    pfs_user_selection_asymptotic,
    relay_pfs_throughput,
    relay_pfs_throughput_quadrature,
)
from src.Channel import draw_fading
from src.Sensing import draw_pu_states
from src.System import FrameOutcome, LinkRecord
from src.UserStats import UserStats, update_pfs


def _link(hop: int, pu_idle: bool, decoded: bool) -> LinkRecord:
    return LinkRecord(
        hop=hop, cluster=0, subchannel=0, receiver=0, relay=0,
        rate=1.0, power=1.0, pu_idle=pu_idle, decoded=decoded,
    )


def _frame(goodput, scheduled, served, links=(), average_rate=None) -> FrameOutcome:
    return FrameOutcome(
        scheduled_rates=np.asarray(scheduled, dtype=float),
        goodput=np.asarray(goodput, dtype=float),
        served=np.asarray(served, dtype=bool),
        edge_users=np.array([False, True, True]),
        links=list(links),
        feedback_reals=4,
        average_rate=average_rate,
    )


class TestAggregate:
    def test_means_and_access(self):
        frames = [
            _frame([1.0, 0.0, 2.0], [1.0, 0.0, 2.0], [True, False, True]),
            _frame([0.0, 1.0, 0.0], [1.0, 1.0, 0.0], [True, True, False]),
        ]
        metrics = aggregate(frames)
        assert metrics.frames == 2
        assert metrics.mean_goodput.tolist() == [0.5, 0.5, 1.0]
        assert metrics.mean_scheduled.tolist() == [1.0, 0.5, 1.0]
        assert metrics.access_probability.tolist() == [1.0, 0.5, 0.5]
        assert metrics.edge_access_probability == pytest.approx(0.5)
        assert metrics.centre_access_probability == pytest.approx(1.0)
        assert metrics.edge_mean_goodput == pytest.approx(0.75)
        assert metrics.feedback_reals == 8

    def test_log_utility_uses_final_average(self):
        frames = [
            _frame([1, 1, 1], [1, 1, 1], [1, 1, 1]),
            _frame([1, 1, 1], [1, 1, 1], [1, 1, 1], average_rate=np.array([1, 2, 0])),
        ]
        metrics = aggregate(frames)
        assert metrics.log_utility == pytest.approx(math.log(2) + math.log(1e-6))

    def test_log_utility_without_average(self):
        metrics = aggregate([_frame([0, 0, 0], [2, 2, 2], [1, 1, 1])])
        assert metrics.log_utility == pytest.approx(3 * math.log(2))

    def test_hop_counts(self):
        links = [
            _link(1, True, True),
            _link(1, True, False),
            _link(1, False, False),
            _link(2, True, True),
        ]
        metrics = aggregate([_frame([0, 0, 0], [0, 0, 0], [0, 0, 0], links)])
        assert metrics.hops[1] == HopCounts(scheduled=3, pu_idle=2, failed=1)
        assert metrics.hops[1].error_rate == pytest.approx(0.5)
        assert metrics.hops[2].error_rate == 0.0

    def test_scalar_row(self):
        metrics = aggregate([_frame([1, 0, 0], [1, 0, 0], [1, 0, 0])])
        row = metrics.scalar_row()
        assert row["cell_goodput"] == 1.0
        assert row["feedback_reals_per_frame"] == 4.0
        assert row["hop1_scheduled"] == 0
        assert math.isnan(row["hop2_per"])

    def test_empty(self):
        with pytest.raises(ValueError, match="empty"):
            aggregate([])

    def test_no_edge_users(self):
        frame = _frame([1, 1, 1], [1, 1, 1], [1, 1, 1])
        frame.edge_users = np.zeros(3, dtype=bool)
        metrics = aggregate([frame])
        assert math.isnan(metrics.edge_access_probability)
        assert math.isnan(metrics.edge_mean_goodput)


class TestDistanceTables:
    def test_histogram(self):
        table = goodput_histogram(
            [100.0, 600.0, 2400.0, 6000.0], [1.0, 2.0, 3.0, 4.0], 5, 5000.0
        )
        assert table["users"].tolist() == [2, 0, 1, 0, 1]
        assert table["users"].sum() == 4
        assert table["mean_goodput"][0] == pytest.approx(1.5)
        assert math.isnan(table["mean_goodput"][1])
        assert table["upper_m"].iloc[-1] == 5000.0

    @pytest.mark.parametrize("bins, radius", [(0, 100.0), (3, 0.0)])
    def test_histogram_validation(self, bins, radius):
        with pytest.raises(ValueError):
            goodput_histogram([1.0], [1.0], bins, radius)

    def test_cdf(self):
        table = goodput_cdf([3.0, 1.0, 2.0])
        assert table["goodput"].tolist() == [1.0, 2.0, 3.0]
        assert table["cdf"].tolist() == pytest.approx([1 / 3, 2 / 3, 1.0])


class TestThroughputLaws:
    def test_relay_law_value(self):
        value = relay_pfs_throughput(4, 0.3, 1000, 40.0, 1.0)
        expected = 2.77732 / 4000 * math.log2(1 + 10 * math.log(1000))
        assert value == pytest.approx(expected, rel=1e-5)
        assert value == pytest.approx(4.257e-3, rel=1e-3)

    def test_relay_law_identity(self):
        N, q, K_c, P, l = 4, 0.2, 50, 8.0, 0.5
        value = relay_pfs_throughput(N, q, K_c, P, l)
        scaled = value * K_c / (N * gating_factor_relay(q, N))
        assert scaled == pytest.approx(0.25 * math.log2(1 + P / N * l * math.log(K_c)))

    def test_gating_ratio(self):
        ratio = gating_factor_no_rs(0.3, 6) / gating_factor_relay(0.3, 4)
        assert gating_factor_no_rs(0.3, 6) == pytest.approx(0.082354, abs=1e-6)
        assert ratio == pytest.approx(0.1186, abs=1e-4)

    def test_no_relay_law(self):
        value = no_relay_pfs_throughput(4, 0.3, 10, 6, 40.0, 1.0)
        expected = 0.7**7 * 4 / 60 * math.log2(1 + 10 * math.log(60))
        assert value == pytest.approx(expected)

    def test_quadrature_small_snr(self):
        # Largest of two unit exponentials: mean 1.5, second moment 3.5
        snr = 1e-2
        value = relay_pfs_throughput_quadrature(1, 0.0, 2, snr, 1.0)
        expected = (snr * 1.5 - snr**2 * 3.5 / 2) / math.log(2) / 8
        assert value == pytest.approx(expected, rel=1e-3)

    def test_quadrature_tracks_asymptotic_law(self):
        asymptotic = relay_pfs_throughput(4, 0.3, 1000, 40.0, 1.0)
        finite = relay_pfs_throughput_quadrature(4, 0.3, 1000, 40.0, 1.0)
        assert finite == pytest.approx(asymptotic, rel=0.05)

    @pytest.mark.parametrize(
        "N, q, K_c, message",
        [(0, 0.3, 10, "N"), (4, 1.5, 10, "q_act"), (4, 0.3, 1, "K_c")],
    )
    def test_domain_errors(self, N, q, K_c, message):
        with pytest.raises(ValueError, match=message):
            relay_pfs_throughput(N, q, K_c, 1.0, 1.0)

    def test_no_relay_needs_clusters(self):
        with pytest.raises(ValueError, match="M must"):
            no_relay_pfs_throughput(4, 0.3, 10, 0, 1.0, 1.0)

    def test_strongest_user(self):
        assert pfs_user_selection_asymptotic([0.1, 2.0, 0.5]) == 1
        assert pfs_user_selection_asymptotic([1j, -3.0, 2.0]) == 1
        assert pfs_user_selection_asymptotic([1.0, 1.0]) == 0
        with pytest.raises(ValueError):
            pfs_user_selection_asymptotic([])


def _simulate_relay_cluster(K_c: int, frames: int, warmup: int = 200):
    """
    One relay cluster with unlimited backhaul whenever a cluster-0 subchannel
    is idle, equal long-term gains and perfect CSIT, scheduled by PFS.

    Returns the per-user throughput and the share of subchannel decisions on
    which PFS picked the strongest fading magnitude.
    """
    N, q, P_m, l, gm = 4, 0.3, 40.0, 1.0, 0.25
    snr = P_m / N * l
    # Separate streams keep the PU sequence identical across cluster sizes
    pu_rng = np.random.default_rng(5)
    fading_rng = np.random.default_rng(6)

    stats = UserStats.initial(K_c)
    stats.average_rate[:] = relay_pfs_throughput(N, q, K_c, P_m, l)
    delivered, agree, decisions = 0.0, 0, 0
    for frame in range(warmup + frames):
        S = draw_pu_states([q, q], N, pu_rng)
        H, _ = draw_fading((N, K_c), 0.0, fading_rng)
        rates = gm * np.log2(1.0 + snr * np.abs(H) ** 2)
        served = np.zeros(K_c)
        for n in range(N):
            winner = int(np.argmax(stats.weights * rates[n]))
            if frame >= warmup:
                decisions += 1
                agree += int(winner == pfs_user_selection_asymptotic(H[n]))
            if S[0].any() and S[1, n]:
                served[winner] += rates[n, winner]
        # Long window: the averages stay at their common steady-state level
        update_pfs(stats, served, t_s=1e6)
        if frame >= warmup:
            delivered += served.sum()
    return delivered / (K_c * frames), agree / decisions


class TestSimulatedRelayCluster:
    def test_law_sharpens_with_cluster_size(self):
        small, _ = _simulate_relay_cluster(25, frames=2000)
        large, _ = _simulate_relay_cluster(200, frames=2000)
        small_ratio = small / relay_pfs_throughput(4, 0.3, 25, 40.0, 1.0)
        large_ratio = large / relay_pfs_throughput(4, 0.3, 200, 40.0, 1.0)
        assert abs(large_ratio - 1.0) < abs(small_ratio - 1.0)

    def test_quadrature_matches_simulation(self):
        simulated, _ = _simulate_relay_cluster(25, frames=2000)
        finite = relay_pfs_throughput_quadrature(4, 0.3, 25, 40.0, 1.0)
        assert simulated == pytest.approx(finite, rel=0.03)

    def test_strongest_user_rule_matches_pfs(self):
        _, agreement = _simulate_relay_cluster(200, frames=500)
        assert agreement >= 0.9
