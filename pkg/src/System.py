"""
System.py
=========

Defines the abstract base class `System`, the interface every simulated
downlink (the relay-assisted proposal and its baselines) implements, and the
records a frame produces.

Responsibilities
----------------
- Enforce one entry point, ``run_frame(weights, rng)``, that schedules a
  single frame for given per-user weights and returns a ``FrameOutcome``.
- Hold the PU states across frames when ``pu_coherence_frames`` > 1.
- Provide ``decode_indicator``, the rule deciding whether a scheduled packet
  is received on the realized channel.

User Indexing
-------------
Every per-user array is in the topology's global mobile order: the direct
mobiles of cluster 0 first, then the mobiles of relay cluster 1, 2, ...

Usage
-----
To implement a new system:
1. Subclass `System`.
2. Implement ``cluster_activity()`` and ``_schedule(weights, sensing, rng)``.
3. Register it in ``Replication.make_system``.
"""

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Optional, Sequence, Union

import numpy as np

from src.GoodputCurve import GoodputCurve
from src.ScenarioConfig import ScenarioConfig
from src.Sensing import SensingSnapshot, sense_cell
from src.solvers.BsSolver import BsAllocation
from src.solvers.RsSolver import RsAllocation
from src.solvers.Subgradient import SolverSettings
from src.Topology import Topology

_DECODE_TOL = 1e-12


class SystemKind(str, Enum):
    PROPOSED = "proposed"
    NAIVE = "baseline0"
    SSA = "baseline1"
    NO_RS_EQUAL = "baseline2"
    NO_RS_LOW = "baseline3"


@dataclass(frozen=True)
class LinkRecord:
    hop: int          # 1 = BS transmission, 2 = relay transmission
    cluster: int
    subchannel: int
    receiver: int     # global mobile index, or -1 for a relay backhaul link
    relay: int        # relay index (1..M) of the link, 0 when none
    rate: float
    power: float
    pu_idle: bool
    decoded: bool

    def as_row(self) -> dict[str, Any]:
        return {
            "hop": self.hop,
            "cluster": self.cluster,
            "subchannel": self.subchannel,
            "receiver": self.receiver,
            "relay": self.relay,
            "rate": self.rate,
            "power": self.power,
            "pu_idle": int(self.pu_idle),
            "decoded": int(self.decoded),
        }


@dataclass
class FrameOutcome:
    scheduled_rates: np.ndarray   # (U,) bits scheduled to each mobile
    goodput: np.ndarray           # (U,) bits received by each mobile
    served: np.ndarray            # (U,) at least one subchannel this frame
    edge_users: np.ndarray        # (U,) mobiles outside cluster 0
    links: list[LinkRecord] = field(default_factory=list)
    decode_indicators: np.ndarray = field(
        default_factory=lambda: np.zeros((0, 0), dtype=int)
    )
    feedback_reals: int = 0
    unconverged_solves: int = 0
    curves: tuple[GoodputCurve, ...] = ()
    bs_allocation: Optional[BsAllocation] = None
    rs_allocations: tuple[Optional[RsAllocation], ...] = ()
    average_rate: Optional[np.ndarray] = None

    @property
    def total_goodput(self) -> float:
        return float(self.goodput.sum())


def decode_indicator(
    r_scheduled: float,
    H: complex,
    l: float,
    alpha: float,
    power: float,
    S: int,
    g: float,
) -> int:
    """
    1 iff the PU is idle and r <= g*alpha*log2(1 + p*l*|H|^2/alpha).

    A zero rate is always decodable.
    """
    if S != 1:
        return 0
    if r_scheduled <= 0.0:
        return 1
    if alpha <= 0.0 or power <= 0.0:
        return 0
    capacity = g * alpha * math.log2(1.0 + power * l * abs(H) ** 2 / alpha)
    return int(r_scheduled <= capacity + _DECODE_TOL * max(1.0, capacity))


class System(ABC):
    kind: SystemKind

    def __init__(self, topology: Topology) -> None:
        self.topology = topology
        self.config: ScenarioConfig = topology.config
        self.settings = SolverSettings.from_config(self.config)
        self.power_budgets = self.config.power_budgets()
        self._held_states: Optional[np.ndarray] = None
        self._frames_held = 0
        # Dual-loop iteration rows of every solve, kept only when set to a list
        self.solver_trace: Optional[list[dict[str, Any]]] = None

    @property
    def n_users(self) -> int:
        return self.topology.n_users

    @abstractmethod
    def cluster_activity(self) -> Sequence[float]:
        """PU-active probability of every cluster, cluster 0 first."""

    @abstractmethod
    def _schedule(
        self, weights: np.ndarray, sensing: SensingSnapshot, rng: np.random.Generator
    ) -> FrameOutcome:
        pass

    def sense(self, rng: np.random.Generator) -> SensingSnapshot:
        """Sense the cell, redrawing the PU states every coherence period."""
        held = None
        if self._held_states is not None:
            if self._frames_held < self.config.pu_coherence_frames:
                held = self._held_states
        snapshot = sense_cell(self.topology, self.cluster_activity(), rng, held)
        if held is None:
            self._held_states = snapshot.S
            self._frames_held = 0
        self._frames_held += 1
        return snapshot

    def run_frame(
        self, weights: np.ndarray, rng: np.random.Generator
    ) -> FrameOutcome:
        weights = np.asarray(weights, dtype=float)
        if weights.shape != (self.n_users,):
            raise ValueError(
                f"Expected {self.n_users} weights, got shape {weights.shape}"
            )
        return self._schedule(weights, self.sense(rng), rng)

    def _new_trace(self) -> Optional[list[dict[str, Any]]]:
        return None if self.solver_trace is None else []

    def _keep_trace(
        self, rows: Optional[list[dict[str, Any]]], solver: str, cluster: int
    ) -> None:
        if self.solver_trace is None or rows is None:
            return
        self.solver_trace += [
            {"record": "dual", "solver": solver, "cluster": cluster, **row}
            for row in rows
        ]

    def _empty_outcome(self) -> FrameOutcome:
        U = self.n_users
        return FrameOutcome(
            scheduled_rates=np.zeros(U),
            goodput=np.zeros(U),
            served=np.zeros(U, dtype=bool),
            edge_users=self.topology.edge_users,
        )


def count_unconverged(
    allocations: Sequence[Optional[Union[BsAllocation, RsAllocation]]],
) -> int:
    return sum(1 for a in allocations if a is not None and not a.converged)
