import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.special import i0e
from scipy.stats import ncx2

from src.Channel import (
    conditional_csit,
    draw_channel,
    draw_fading,
    effective_gain_phi,
    noncentral_chi2_inv_cdf,
)
from src.ScenarioConfig import CsitModel, ScenarioConfig
from src.Topology import build_topology


def _ncx2_density(x: float, lam: float) -> float:
    # Two degrees of freedom; i0e keeps the Bessel term finite
    root = math.sqrt(lam * x)
    return 0.5 * math.exp(-(x + lam) / 2.0 + root) * i0e(root)


class TestInverseCdf:
    def test_central_case_is_exponential(self):
        assert noncentral_chi2_inv_cdf(0.0, 0.3) == pytest.approx(
            -2.0 * math.log(0.7)
        )

    def test_round_trip(self):
        x = noncentral_chi2_inv_cdf(5.0, 0.05)
        assert ncx2.cdf(x, 2, 5.0) == pytest.approx(0.05, abs=1e-9)

    def test_matches_density_quadrature(self):
        x = noncentral_chi2_inv_cdf(10.0, 0.05)
        mass, _ = quad(_ncx2_density, 0.0, x, args=(10.0,), epsabs=1e-13)
        assert mass == pytest.approx(0.05, rel=1e-6)

    @pytest.mark.parametrize("prob", [0.0, 1.0, -0.1])
    def test_rejects_bad_probability(self, prob):
        with pytest.raises(ValueError, match="Probability"):
            noncentral_chi2_inv_cdf(1.0, prob)

    def test_rejects_negative_noncentrality(self):
        with pytest.raises(ValueError, match="Noncentrality"):
            noncentral_chi2_inv_cdf(-1.0, 0.5)


class TestEffectiveGain:
    def test_zero_estimate(self):
        assert effective_gain_phi(0.0, 1.0, 1.0, 0.05) == pytest.approx(
            0.051293, abs=1e-6
        )

    def test_perfect_csit(self):
        assert effective_gain_phi(1 + 1j, 0.5, 0.0, 0.05) == pytest.approx(1.0)

    def test_small_error_approaches_perfect_csit(self):
        phi = effective_gain_phi(1.0 + 0.0j, 1.0, 1e-8, 0.05)
        assert phi == pytest.approx(1.0, rel=1e-3)

    def test_matches_scalar_inverse(self):
        hhat = 0.8 - 0.3j
        sigma_e2 = 0.2
        lam = abs(hhat) ** 2 / (sigma_e2 / 2)
        expected = 0.5 * 2.0 * sigma_e2 * noncentral_chi2_inv_cdf(lam, 0.1)
        assert effective_gain_phi(hhat, 2.0, sigma_e2, 0.1) == pytest.approx(
            expected, rel=1e-8
        )

    def test_monotone(self):
        mags = np.array([0.1, 0.5, 1.0, 2.0])
        phi = effective_gain_phi(mags.astype(complex), 1.0, 0.1, 0.05)
        assert np.all(np.diff(phi) >= 0.0)
        assert effective_gain_phi(1.0, 1.0, 0.1, 0.01) <= effective_gain_phi(
            1.0, 1.0, 0.1, 0.1
        )

    @pytest.mark.parametrize("l", [0.1, 1.0, 5.0])
    @pytest.mark.parametrize("sigma_e2", [0.01, 0.1, 0.5])
    @pytest.mark.parametrize("epsilon", [0.01, 0.05, 0.2])
    def test_outage_calibration(self, l, sigma_e2, epsilon):
        rng = np.random.default_rng(2024)
        hhat = complex(0.6, -0.4)
        phi = effective_gain_phi(hhat, l, sigma_e2, epsilon)
        scale = math.sqrt(sigma_e2 / 2.0)
        n = 100_000
        H = hhat + scale * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
        outage = np.mean(l * np.abs(H) ** 2 < phi)
        assert outage == pytest.approx(epsilon, abs=0.01)


class TestForwardModelCalibration:
    @staticmethod
    def _draws(sigma_e2: float) -> tuple[np.ndarray, np.ndarray]:
        rng = np.random.default_rng(77)
        return draw_fading((400_000,), sigma_e2, rng, CsitModel.FORWARD)

    def test_conditional_law(self):
        hhat = np.array([1.0 + 1.0j])
        mean, variance = conditional_csit(hhat, 0.25, CsitModel.FORWARD)
        assert mean == pytest.approx([0.8 + 0.8j])
        assert variance == pytest.approx(0.2)
        mean, variance = conditional_csit(hhat, 0.25, CsitModel.ESTIMATE_CENTRED)
        assert mean == pytest.approx(hhat)
        assert variance == 0.25

    @pytest.mark.parametrize("sigma_e2", [0.01, 0.1])
    def test_outage_in_every_estimate_bin(self, sigma_e2):
        H, Hhat = self._draws(sigma_e2)
        mean, variance = conditional_csit(Hhat, sigma_e2, CsitModel.FORWARD)
        phi = effective_gain_phi(mean, 1.0, variance, 0.05)
        lost = np.abs(H) ** 2 < phi

        power = np.abs(Hhat) ** 2
        edges = np.quantile(power, [0.0, 0.25, 0.5, 0.75, 1.0])
        bins = np.clip(np.searchsorted(edges, power, side="right") - 1, 0, 3)
        for b in range(4):
            assert lost[bins == b].mean() == pytest.approx(0.05, abs=0.01)

    def test_estimate_as_mean_overshoots_for_strong_links(self):
        # Strong estimates are biased upwards under the forward model
        H, Hhat = self._draws(0.01)
        power = np.abs(Hhat) ** 2
        strong = power > np.quantile(power, 0.75)
        phi = effective_gain_phi(Hhat[strong], 1.0, 0.01, 0.05)
        assert np.mean(np.abs(H[strong]) ** 2 < phi) > 0.06


class TestFading:
    def test_perfect_csit_estimate_is_exact(self, rng):
        H, Hhat = draw_fading((4, 5), 0.0, rng)
        assert np.array_equal(H, Hhat)

    def test_unit_variance(self, rng):
        H, _ = draw_fading((1_000_000,), 0.01, rng)
        assert np.mean(np.abs(H) ** 2) == pytest.approx(1.0, abs=0.01)

    def test_error_variance(self, rng):
        H, Hhat = draw_fading((200_000,), 0.01, rng)
        assert np.var(Hhat - H) == pytest.approx(0.01, rel=0.05)

    def test_estimate_centred_keeps_unit_variance(self, rng):
        H, Hhat = draw_fading((200_000,), 0.2, rng, CsitModel.ESTIMATE_CENTRED)
        assert np.mean(np.abs(H) ** 2) == pytest.approx(1.0, abs=0.02)
        assert np.mean(np.abs(Hhat) ** 2) == pytest.approx(0.8, abs=0.02)


class TestDrawChannel:
    def test_cluster_shapes(self, small_topology, rng):
        snapshot = draw_channel(small_topology, rng)
        assert snapshot.n_clusters == 3
        assert snapshot.H[0].shape == (2, 4)
        assert snapshot.phi[1].shape == (2, 2)
        assert all(np.all(phi >= 0.0) for phi in snapshot.phi)

    def test_direct_snapshot(self, small_topology, rng):
        snapshot = draw_channel(small_topology, rng, direct=True)
        assert snapshot.n_clusters == 1
        assert snapshot.H[0].shape == (2, 6)

    def test_naive_gain_ignores_margin(self, small_topology, rng):
        snapshot = draw_channel(small_topology, rng, outage_margin=False)
        expected = snapshot.gains[1][None, :] * np.abs(snapshot.Hhat[1]) ** 2
        assert snapshot.phi[1] == pytest.approx(expected)

    def test_perfect_csit_phi(self, rng):
        config = ScenarioConfig(M=1, N=2, K0=2, Km=2, sigma_e2=0.0)
        topology = build_topology(config, seed=1)
        snapshot = draw_channel(topology, rng)
        expected = snapshot.gains[0][None, :] * np.abs(snapshot.H[0]) ** 2
        assert snapshot.phi[0] == pytest.approx(expected)

    def test_forward_model_phi_uses_conditional_law(self, small_topology, rng):
        config = small_topology.config
        snapshot = draw_channel(small_topology, rng)
        shrink = 1.0 + config.sigma_e2
        expected = effective_gain_phi(
            snapshot.Hhat[1] / shrink,
            snapshot.gains[1][None, :],
            config.sigma_e2 / shrink,
            config.epsilon,
        )
        assert snapshot.phi[1] == pytest.approx(expected)
