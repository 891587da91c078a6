"""
UserStats.py
============

Proportional-fair bookkeeping of every mobile across the frames of a run.

The exponentially averaged throughput follows

    R'(t) = (1 - 1/t_s) * R(t-1) + (1/t_s) * sum_n r(t)

starting from, and never dropping below, ``floor``; the PFS weight of a
mobile is 1 / R. By default r is the scheduled rate; the run can average
realized goodput instead (``pfs_average_goodput``).
"""

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike


@dataclass
class UserStats:
    average_rate: np.ndarray       # (U,) R, bits/frame
    cumulative_goodput: np.ndarray
    access_frames: np.ndarray      # frames with at least one subchannel
    frames: int = 0
    floor: float = 1e-6

    @classmethod
    def initial(cls, n_users: int, floor: float = 1e-6) -> "UserStats":
        if floor <= 0.0:
            raise ValueError(f"PFS floor must be positive, got {floor}")
        return cls(
            average_rate=np.full(n_users, floor),
            cumulative_goodput=np.zeros(n_users),
            access_frames=np.zeros(n_users, dtype=int),
            floor=floor,
        )

    @property
    def weights(self) -> np.ndarray:
        return 1.0 / np.maximum(self.average_rate, self.floor)

    def record(self, goodput: ArrayLike, served: ArrayLike) -> None:
        self.cumulative_goodput += np.asarray(goodput, dtype=float)
        self.access_frames += np.asarray(served, dtype=bool).astype(int)
        self.frames += 1


def update_pfs(stats: UserStats, rates: ArrayLike, t_s: float) -> np.ndarray:
    """
    Fold this frame's per-user rates into ``stats`` and return the new weights.

    Raises:
        ValueError: if t_s < 1 or the rate vector has the wrong length
    """
    if t_s < 1.0:
        raise ValueError(f"PFS window t_s must be at least 1, got {t_s}")
    rates = np.asarray(rates, dtype=float)
    if rates.shape != stats.average_rate.shape:
        raise ValueError(
            f"Expected {stats.average_rate.size} rates, got shape {rates.shape}"
        )
    updated = (1.0 - 1.0 / t_s) * stats.average_rate + rates / t_s
    stats.average_rate = np.maximum(updated, stats.floor)
    return stats.weights
