"""
Channel.py
==========

Per-frame small-scale fading, imperfect CSIT and the outage-margin gain.

Every transmitter schedules against an effective gain phi chosen so that a
packet sent at rate g*log2(1 + p*phi) is lost with probability epsilon given
the CSIT. With Hhat the estimate, l the long-term gain and sigma_e2 the CSIT
error variance,

    phi = (1/2) * l * sigma_e2 * F^-1(epsilon; 2, |Hhat|^2 / (sigma_e2/2))

where F^-1 is the inverse CDF of the noncentral chi-square law with two
degrees of freedom. Perfect CSIT (sigma_e2 = 0) reduces to phi = l*|Hhat|^2.

The formula assumes H | Hhat ~ CN(Hhat, sigma_e2), which is the law under the
estimate-centred CSIT model. Under the forward model (Hhat = H + dH) the
estimate overstates the channel: H | Hhat ~ CN(Hhat / (1 + sigma_e2),
sigma_e2 / (1 + sigma_e2)). ``draw_channel`` feeds that conditional mean and
variance into the same formula, so the outage stays at epsilon for either
model.

Fading is i.i.d. CN(0, 1) across clusters, subchannels, receivers and
frames and quasi-static within a frame.
"""

import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy.optimize import brentq
from scipy.stats import chi2, ncx2

from src.ScenarioConfig import CsitModel
from src.Topology import Topology

ArrayOrFloat = Union[float, np.ndarray]


@dataclass(frozen=True)
class ChannelSnapshot:
    # One (N, K_m) array per cluster, receivers in cluster channel order
    H: tuple[np.ndarray, ...]
    Hhat: tuple[np.ndarray, ...]
    phi: tuple[np.ndarray, ...]
    gains: tuple[np.ndarray, ...]

    @property
    def n_clusters(self) -> int:
        return len(self.H)


def _complex_normal(
    shape: tuple[int, ...], variance: float, rng: np.random.Generator
) -> np.ndarray:
    scale = math.sqrt(variance / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def draw_fading(
    shape: tuple[int, ...],
    sigma_e2: float,
    rng: np.random.Generator,
    model: CsitModel = CsitModel.FORWARD,
) -> tuple[np.ndarray, np.ndarray]:
    """Draw (H, Hhat) with unit-variance true fading."""
    if model is CsitModel.FORWARD:
        H = _complex_normal(shape, 1.0, rng)
        error = _complex_normal(shape, sigma_e2, rng) if sigma_e2 > 0 else 0.0
        return H, H + error
    Hhat = _complex_normal(shape, 1.0 - sigma_e2, rng)
    error = _complex_normal(shape, sigma_e2, rng) if sigma_e2 > 0 else 0.0
    return Hhat + error, Hhat


def conditional_csit(
    Hhat: np.ndarray, sigma_e2: float, model: CsitModel = CsitModel.FORWARD
) -> tuple[np.ndarray, float]:
    """Mean and variance of the true fading given the CSIT."""
    if model is CsitModel.FORWARD:
        shrink = 1.0 + sigma_e2
        return Hhat / shrink, sigma_e2 / shrink
    return Hhat, sigma_e2


def noncentral_chi2_inv_cdf(noncentrality: float, prob: float) -> float:
    """
    Inverse CDF of the noncentral chi-square law with two degrees of freedom.

    The root of CDF(x) = prob is bracketed on [0, lam + 50 + 20*sqrt(lam + 25)]
    (widened if needed) and refined with Brent's method.

    Raises:
        ValueError: if prob is outside (0, 1) or noncentrality is negative
    """
    if not 0.0 < prob < 1.0:
        raise ValueError(f"Probability must lie in (0, 1), got {prob}")
    if noncentrality < 0.0:
        raise ValueError(
            f"Noncentrality must be non-negative, got {noncentrality}"
        )

    if noncentrality == 0.0:
        return -2.0 * math.log1p(-prob)

    def excess(x: float) -> float:
        return float(ncx2.cdf(x, 2, noncentrality)) - prob

    upper = noncentrality + 50.0 + 20.0 * math.sqrt(noncentrality + 25.0)
    while excess(upper) < 0.0:
        upper *= 2.0
    return float(brentq(excess, 0.0, upper, xtol=1e-14, rtol=1e-14, maxiter=200))


def effective_gain_phi(
    Hhat: Union[complex, np.ndarray],
    l: ArrayOrFloat,
    sigma_e2: float,
    epsilon: float,
) -> ArrayOrFloat:
    """
    Outage-margin effective gain for every CSIT entry (broadcasts over arrays).
    """
    power = np.abs(np.asarray(Hhat)) ** 2
    gain = np.asarray(l, dtype=float)
    if sigma_e2 == 0.0:
        phi = gain * power
    else:
        half = sigma_e2 / 2.0
        noncentrality = power / half
        central = noncentrality == 0.0
        quantile = np.where(
            central,
            chi2.ppf(epsilon, 2),
            ncx2.ppf(epsilon, 2, np.where(central, 1.0, noncentrality)),
        )
        phi = gain * half * np.maximum(quantile, 0.0)
    return float(phi) if np.ndim(phi) == 0 else phi


def draw_channel(
    topology: Topology,
    rng: np.random.Generator,
    direct: bool = False,
    outage_margin: bool = True,
) -> ChannelSnapshot:
    """
    Draw one frame of fading for every cluster.

    With ``direct`` the snapshot holds a single cluster: the BS towards every
    mobile of the cell (used by the systems without relays). Without
    ``outage_margin`` phi is the naive l*|Hhat|^2.
    """
    config = topology.config
    if direct:
        gain_sets: tuple[np.ndarray, ...] = (topology.bs_user_gains,)
    else:
        gain_sets = topology.cluster_gains

    H, Hhat, phi = [], [], []
    for gains in gain_sets:
        h, hhat = draw_fading(
            (config.N, gains.size), config.sigma_e2, rng, config.csit_model
        )
        if outage_margin:
            mean, variance = conditional_csit(
                hhat, config.sigma_e2, config.csit_model
            )
            margin = effective_gain_phi(
                mean, gains[None, :], variance, config.epsilon
            )
        else:
            margin = gains[None, :] * np.abs(hhat) ** 2
        H.append(h)
        Hhat.append(hhat)
        phi.append(np.asarray(margin, dtype=float).reshape(config.N, gains.size))

    return ChannelSnapshot(
        H=tuple(H), Hhat=tuple(Hhat), phi=tuple(phi), gains=tuple(gain_sets)
    )
