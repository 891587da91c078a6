"""
Topology.py
===========

Node placement and long-term channel gains of one cell.

Layout
------
- The BS sits at the origin and serves cluster 0 (a disk of radius
  ``cluster0_radius_m``).
- M relays are evenly spaced on the ring of radius ``rs_ring_radius_m``,
  relay m at angle 2*pi*m/M. Relay m serves cluster m, a disk of radius
  ``rs_cluster_radius_m`` centred on the relay.
- Mobiles are uniform in their cluster disk but never closer than
  ``guard_distance_m`` to their server. Each cluster holds one PU,
  uniform in the cluster disk under the same guard.

Gains
-----
Long-term gains are linear power gains 10^(-(PL + X)/10), with PL from the
access (BS-MS, RS-MS, server-PU) or backhaul (BS-RS) path loss model and
X ~ N(0, shadowing_sigma_dB^2) in dB. Noise power is 1, so gains multiply
linear transmit powers directly.

User Indexing
-------------
Mobiles are numbered globally: cluster-0 mobiles first, then the Km mobiles
of relay 1, relay 2, and so on. Cluster 0's receivers (channel index order)
are the M relays followed by its mobiles.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Optional, Union

import numpy as np
from loguru import logger

from src.ScenarioConfig import ScenarioConfig

ArrayOrFloat = Union[float, np.ndarray]


class LinkType(str, Enum):
    ACCESS = "access"
    BACKHAUL = "backhaul"


# (intercept dB, slope dB/decade) with distance in km
PATH_LOSS_MODELS: dict[LinkType, tuple[float, float]] = {
    LinkType.ACCESS: (128.1, 37.6),
    LinkType.BACKHAUL: (128.1, 28.8),
}


def path_gain_dB(distance_km: ArrayOrFloat, link: LinkType) -> ArrayOrFloat:
    """
    Path loss in dB (before shadowing) at ``distance_km``.

    Raises:
        ValueError: if any distance is not strictly positive
    """
    distance = np.asarray(distance_km, dtype=float)
    if np.any(distance <= 0.0):
        raise ValueError(f"Distance must be positive, got {distance_km}")
    intercept, slope = PATH_LOSS_MODELS[LinkType(link)]
    loss = intercept + slope * np.log10(distance)
    return float(loss) if loss.ndim == 0 else loss


def apply_shadowing(
    path_loss_dB: ArrayOrFloat,
    rng: np.random.Generator,
    sigma_dB: float = 8.0,
) -> ArrayOrFloat:
    loss = np.asarray(path_loss_dB, dtype=float)
    if sigma_dB > 0.0:
        loss = loss + rng.normal(0.0, sigma_dB, size=loss.shape)
    gain = np.power(10.0, -loss / 10.0)
    return float(gain) if gain.ndim == 0 else gain


@dataclass(frozen=True)
class Topology:
    config: ScenarioConfig
    rs_positions: np.ndarray      # (M, 2)
    user_positions: np.ndarray    # (U, 2)
    user_cluster: np.ndarray      # (U,) cluster index of every mobile
    pu_positions: np.ndarray      # (M+1, 2)
    cluster_gains: tuple[np.ndarray, ...]   # per cluster, server -> receivers
    tau: np.ndarray               # (M+1,) server m -> PU m
    bs_user_gains: np.ndarray     # (U,) BS -> every mobile
    bs_pu_gains: np.ndarray       # (M+1,) BS -> every PU

    @property
    def n_users(self) -> int:
        return int(self.user_cluster.size)

    @property
    def n_clusters(self) -> int:
        return self.config.M + 1

    @property
    def user_distance_m(self) -> np.ndarray:
        return np.hypot(self.user_positions[:, 0], self.user_positions[:, 1])

    @property
    def edge_users(self) -> np.ndarray:
        return self.user_cluster > 0

    def cluster_users(self, m: int) -> np.ndarray:
        """Global indices of the mobiles of cluster m."""
        return np.flatnonzero(self.user_cluster == m)

    def server_position(self, m: int) -> np.ndarray:
        if m == 0:
            return np.zeros(2)
        return self.rs_positions[m - 1]


def _uniform_in_annulus(
    centre: np.ndarray,
    inner: float,
    outer: float,
    count: int,
    rng: np.random.Generator,
) -> np.ndarray:
    radius = np.sqrt(rng.uniform(inner**2, outer**2, size=count))
    angle = rng.uniform(0.0, 2.0 * np.pi, size=count)
    offsets = np.column_stack((radius * np.cos(angle), radius * np.sin(angle)))
    return centre[None, :] + offsets


def _gain(
    distance_m: np.ndarray,
    link: LinkType,
    sigma_dB: float,
    rng: np.random.Generator,
) -> np.ndarray:
    loss = path_gain_dB(np.atleast_1d(distance_m) / 1000.0, link)
    return np.minimum(np.atleast_1d(apply_shadowing(loss, rng, sigma_dB)), 1.0)


def build_topology(
    config: ScenarioConfig,
    seed: Optional[Union[int, np.random.SeedSequence]] = None,
) -> Topology:
    """
    Place all nodes and draw long-term gains.

    The result depends only on ``config`` and ``seed`` (``config.seed`` when
    no seed is given).
    """
    rng = np.random.default_rng(config.seed if seed is None else seed)
    sigma = config.shadowing_sigma_dB
    guard = config.guard_distance_m
    M = config.M

    angles = 2.0 * np.pi * np.arange(M) / max(M, 1)
    rs_positions = config.rs_ring_radius_m * np.column_stack(
        (np.cos(angles), np.sin(angles))
    )
    servers = [np.zeros(2)] + [rs_positions[m] for m in range(M)]
    radii = [config.cluster0_radius_m] + [config.rs_cluster_radius_m] * M
    counts = [config.direct_users] + [config.Km] * M

    positions, clusters = [], []
    for m in range(M + 1):
        positions.append(
            _uniform_in_annulus(servers[m], guard, radii[m], counts[m], rng)
        )
        clusters.append(np.full(counts[m], m, dtype=int))
    user_positions = np.vstack(positions)
    user_cluster = np.concatenate(clusters)

    pu_positions = np.vstack(
        [
            _uniform_in_annulus(servers[m], guard, radii[m], 1, rng)
            for m in range(M + 1)
        ]
    )

    rs_distance = np.hypot(rs_positions[:, 0], rs_positions[:, 1])
    backhaul = (
        _gain(rs_distance, LinkType.BACKHAUL, sigma, rng) if M else np.zeros(0)
    )

    cluster_gains = []
    for m in range(M + 1):
        members = np.flatnonzero(user_cluster == m)
        offsets = user_positions[members] - servers[m][None, :]
        distance = np.hypot(offsets[:, 0], offsets[:, 1])
        access = _gain(distance, LinkType.ACCESS, sigma, rng)
        cluster_gains.append(
            np.concatenate((backhaul, access)) if m == 0 else access
        )

    pu_offsets = pu_positions - np.vstack(servers)
    pu_distance = np.hypot(pu_offsets[:, 0], pu_offsets[:, 1])
    tau = _gain(pu_distance, LinkType.ACCESS, sigma, rng)

    bs_user_gains = cluster_gains[0][M:].copy()
    if M:
        outer = user_cluster > 0
        distance = np.hypot(user_positions[outer, 0], user_positions[outer, 1])
        bs_user_gains = np.concatenate(
            (bs_user_gains, _gain(distance, LinkType.ACCESS, sigma, rng))
        )
        bs_pu_gains = np.concatenate(
            (
                tau[:1],
                _gain(
                    np.hypot(pu_positions[1:, 0], pu_positions[1:, 1]),
                    LinkType.ACCESS,
                    sigma,
                    rng,
                ),
            )
        )
    else:
        bs_pu_gains = tau.copy()

    logger.debug(
        "Built topology: {} relays, {} mobiles, seed={}",
        M,
        user_cluster.size,
        config.seed if seed is None else seed,
    )
    return Topology(
        config=config,
        rs_positions=rs_positions,
        user_positions=user_positions,
        user_cluster=user_cluster,
        pu_positions=pu_positions,
        cluster_gains=tuple(cluster_gains),
        tau=tau,
        bs_user_gains=bs_user_gains,
        bs_pu_gains=bs_pu_gains,
    )
