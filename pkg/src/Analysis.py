"""
Analysis.py
===========

Run metrics and closed-form throughput laws.

Responsibilities
----------------
- Reduce the frames of one replication to a ``RunMetrics`` record: per-user
  average goodput, the PFS objective sum_k log R_k, cell-edge and centre
  access probabilities, per-hop packet counts (scheduled, PU idle, failed)
  and the feedback and non-convergence counters.
- Bin users by their distance to the BS (goodput histogram) and build the
  empirical goodput CDF.
- Evaluate the asymptotic per-user throughput under proportional fair
  scheduling with and without relays, plus the finite-population integral
  form of the relay law.

Throughput Laws
---------------
With relays (K_c users per relay cluster):

    N (1 - q)(1 - q^N) / (4 K_c) * log2(1 + (P/N) * l * ln K_c)

Without relays (M clusters' worth of users served by the BS):

    (1 - q)^(M+1) * N / (M K_c) * log2(1 + (P0/N) * l * ln(K_c M))

The finite-K_c form replaces ln K_c by the expectation over the largest of
K_c unit exponentials, computed with ``scipy.integrate.quad``.

Error Handling
--------------
Every function raises ``ValueError`` on inputs outside its domain (empty
frame list, K_c < 2, non-positive bin count or radius).
"""

import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np
import pandas as pd
from numpy.typing import ArrayLike
from scipy.integrate import quad

from src.System import FrameOutcome

_LOG_FLOOR = 1e-6


@dataclass(frozen=True)
class HopCounts:
    scheduled: int = 0
    pu_idle: int = 0
    failed: int = 0

    @property
    def error_rate(self) -> float:
        """Failed share of the packets sent while the PU was idle."""
        if self.pu_idle == 0:
            return float("nan")
        return self.failed / self.pu_idle


@dataclass(frozen=True, eq=False)
class RunMetrics:
    frames: int
    mean_goodput: np.ndarray          # (U,) bits/frame
    mean_scheduled: np.ndarray        # (U,) bits/frame
    access_probability: np.ndarray    # (U,) share of frames served
    edge_users: np.ndarray            # (U,)
    log_utility: float
    hops: dict[int, HopCounts] = field(default_factory=dict)
    feedback_reals: int = 0
    unconverged_solves: int = 0

    @property
    def edge_access_probability(self) -> float:
        if not self.edge_users.any():
            return float("nan")
        return float(self.access_probability[self.edge_users].mean())

    @property
    def centre_access_probability(self) -> float:
        centre = ~self.edge_users
        if not centre.any():
            return float("nan")
        return float(self.access_probability[centre].mean())

    @property
    def edge_mean_goodput(self) -> float:
        if not self.edge_users.any():
            return float("nan")
        return float(self.mean_goodput[self.edge_users].mean())

    def scalar_row(self) -> dict[str, Any]:
        row: dict[str, Any] = {
            "frames": self.frames,
            "cell_goodput": float(self.mean_goodput.sum()),
            "mean_user_goodput": float(self.mean_goodput.mean()),
            "edge_mean_goodput": self.edge_mean_goodput,
            "log_utility": self.log_utility,
            "edge_access_probability": self.edge_access_probability,
            "centre_access_probability": self.centre_access_probability,
            "feedback_reals_per_frame": self.feedback_reals / self.frames,
            "unconverged_solves": self.unconverged_solves,
        }
        for hop in (1, 2):
            counts = self.hops.get(hop, HopCounts())
            row[f"hop{hop}_scheduled"] = counts.scheduled
            row[f"hop{hop}_pu_idle"] = counts.pu_idle
            row[f"hop{hop}_failed"] = counts.failed
            row[f"hop{hop}_per"] = counts.error_rate
        return row


def aggregate(frames: Sequence[FrameOutcome]) -> RunMetrics:
    """
    Summarise the frames of one run.

    The PFS objective uses the averaged throughput after the last frame
    (``FrameOutcome.average_rate``), or the mean scheduled rate when the
    frames carry none. A user has access in a frame when it was scheduled on
    at least one subchannel.

    Raises:
        ValueError: if ``frames`` is empty
    """
    if not frames:
        raise ValueError("Cannot aggregate an empty frame list")

    count = len(frames)
    goodput = np.sum([f.goodput for f in frames], axis=0) / count
    scheduled = np.sum([f.scheduled_rates for f in frames], axis=0) / count
    access = np.sum([f.served for f in frames], axis=0) / count

    final = frames[-1].average_rate
    averaged = scheduled if final is None else final
    log_utility = float(np.sum(np.log(np.maximum(averaged, _LOG_FLOOR))))

    tallies: dict[int, list[int]] = {}
    for frame in frames:
        for link in frame.links:
            tally = tallies.setdefault(link.hop, [0, 0, 0])
            tally[0] += 1
            if link.pu_idle:
                tally[1] += 1
                if not link.decoded:
                    tally[2] += 1

    return RunMetrics(
        frames=count,
        mean_goodput=goodput,
        mean_scheduled=scheduled,
        access_probability=access,
        edge_users=np.asarray(frames[-1].edge_users, dtype=bool),
        log_utility=log_utility,
        hops={hop: HopCounts(*tally) for hop, tally in sorted(tallies.items())},
        feedback_reals=sum(f.feedback_reals for f in frames),
        unconverged_solves=sum(f.unconverged_solves for f in frames),
    )


def goodput_histogram(
    distances: ArrayLike,
    goodput: ArrayLike,
    bins: int,
    radius: float,
) -> pd.DataFrame:
    """
    Mean goodput of the users in each of ``bins`` equal distance bins over
    [0, radius]; users beyond the radius fall in the last bin.
    """
    if bins < 1:
        raise ValueError(f"Need at least one bin, got {bins}")
    if radius <= 0.0:
        raise ValueError(f"Radius must be positive, got {radius}")
    distances = np.asarray(distances, dtype=float)
    goodput = np.asarray(goodput, dtype=float)

    index = np.clip((distances / radius * bins).astype(int), 0, bins - 1)
    users = np.bincount(index, minlength=bins)
    totals = np.bincount(index, weights=goodput, minlength=bins)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = np.where(users > 0, totals / users, np.nan)

    edges = np.linspace(0.0, radius, bins + 1)
    return pd.DataFrame(
        {
            "bin": np.arange(bins),
            "lower_m": edges[:-1],
            "upper_m": edges[1:],
            "users": users,
            "mean_goodput": mean,
        }
    )


def goodput_cdf(goodput: ArrayLike) -> pd.DataFrame:
    values = np.sort(np.asarray(goodput, dtype=float).ravel())
    cdf = np.arange(1, values.size + 1) / max(values.size, 1)
    return pd.DataFrame({"goodput": values, "cdf": cdf})


# --- Throughput laws ---


def gating_factor_relay(q_act: float, N: int) -> float:
    return (1.0 - q_act) * (1.0 - q_act**N)


def gating_factor_no_rs(q_act: float, M: int) -> float:
    return (1.0 - q_act) ** (M + 1)


def _check_law_inputs(N: int, q_act: float, K_c: int) -> None:
    if N < 1:
        raise ValueError(f"N must be positive, got {N}")
    if not 0.0 <= q_act <= 1.0:
        raise ValueError(f"q_act must lie in [0, 1], got {q_act}")
    if K_c < 2:
        raise ValueError(f"K_c must be at least 2, got {K_c}")


def relay_pfs_throughput(
    N: int, q_act: float, K_c: int, P_m: float, l_mk: float
) -> float:
    """Asymptotic per-user throughput of a relay cluster under PFS."""
    _check_law_inputs(N, q_act, K_c)
    snr = P_m / N * l_mk
    return (
        N * gating_factor_relay(q_act, N) / (4.0 * K_c)
        * math.log2(1.0 + snr * math.log(K_c))
    )


def _expected_log_max_exponential(K_c: int, snr: float) -> float:
    # E[log2(1 + snr * X)] with X the largest of K_c unit exponentials
    def integrand(x: float) -> float:
        with np.errstate(divide="ignore"):
            log_pdf = (
                math.log(K_c) - x + (K_c - 1) * np.log1p(-math.exp(-x))
            )
        return math.log2(1.0 + snr * x) * math.exp(log_pdf)

    peak = math.log(K_c)
    upper = peak + 50.0
    value, _ = quad(integrand, 0.0, upper, points=[peak], limit=200)
    return float(value)


def relay_pfs_throughput_quadrature(
    N: int, q_act: float, K_c: int, P_m: float, l: float
) -> float:
    """Finite-K_c form of ``relay_pfs_throughput``."""
    _check_law_inputs(N, q_act, K_c)
    snr = P_m / N * l
    return (
        N * gating_factor_relay(q_act, N) / (4.0 * K_c)
        * _expected_log_max_exponential(K_c, snr)
    )


def no_relay_pfs_throughput(
    N: int, q_act: float, K_c: int, M: int, P_0: float, l_b: float
) -> float:
    """Asymptotic per-user throughput of the BS-only cell under PFS."""
    _check_law_inputs(N, q_act, K_c)
    if M < 1:
        raise ValueError(f"M must be at least 1, got {M}")
    snr = P_0 / N * l_b
    return (
        gating_factor_no_rs(q_act, M) * N / (M * K_c)
        * math.log2(1.0 + snr * math.log(K_c * M))
    )


def pfs_user_selection_asymptotic(magnitudes: ArrayLike) -> int:
    """Index of the strongest fading magnitude (lowest index on ties)."""
    values = np.abs(np.asarray(magnitudes))
    if values.size == 0:
        raise ValueError("Need at least one user")
    return int(np.argmax(values))
