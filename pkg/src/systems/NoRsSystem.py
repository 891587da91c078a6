"""
NoRsSystem.py
=============

Cognitive OFDMA downlink without relays (baselines 2 and 3).

The BS serves every mobile of the cell directly in a single phase. Its
coverage spans all M+1 primary users, so a subchannel carries a packet only
when every PU is idle; the scheduler uses the product of the cluster
posteriors as the availability and keeps the average interference towards
every PU under the threshold.

Variants
--------
- ``equal``: PU activity q_act in every cluster (baseline 2).
- ``low``: q_act in cluster 0 and 1 - (1 - q_act)^(1/6) in the relay-cluster
  areas (baseline 3).
"""

from typing import Literal

import numpy as np

from src.Channel import ChannelSnapshot, draw_channel
from src.Sensing import SensingSnapshot, interference_level
from src.solvers.BsSolver import BsAllocation, BsProblem, solve_bs
from src.System import (
    FrameOutcome,
    LinkRecord,
    System,
    SystemKind,
    count_unconverged,
    decode_indicator,
)
from src.Topology import Topology

Variant = Literal["equal", "low"]


class NoRsSystem(System):
    outage_margin = True

    def __init__(self, topology: Topology, variant: Variant = "equal") -> None:
        if variant not in ("equal", "low"):
            raise ValueError(f"Unknown no-relay variant '{variant}'")
        super().__init__(topology)
        self.variant = variant
        self.kind = (
            SystemKind.NO_RS_LOW if variant == "low" else SystemKind.NO_RS_EQUAL
        )

    def cluster_activity(self) -> list[float]:
        return self.config.cluster_activity(low_rs_activity=self.variant == "low")

    def coupling(self, sensing: SensingSnapshot) -> np.ndarray:
        """
        Per-subchannel interference coefficient of the BS: the largest
        gain^e * (1 - beta) over all PUs, so one cap protects every PU.
        """
        levels = interference_level(
            1.0,
            self.topology.bs_pu_gains[:, None],
            sensing.beta,
            self.config.interference_tau_exponent,
        )
        return np.asarray(levels).max(axis=0)

    def bs_problem(
        self,
        weights: np.ndarray,
        sensing: SensingSnapshot,
        channel: ChannelSnapshot,
    ) -> BsProblem:
        P0, _ = self.power_budgets
        return BsProblem(
            phi=channel.phi[0],
            weights=weights,
            curves=(),
            beta=sensing.composite_beta,
            interference_coeff=self.coupling(sensing),
            power_budget=P0,
            I_bar=self.config.I_bar,
            epsilon=self.config.epsilon,
            g=self.config.g0,
        )

    def _schedule(
        self,
        weights: np.ndarray,
        sensing: SensingSnapshot,
        rng: np.random.Generator,
    ) -> FrameOutcome:
        channel = draw_channel(
            self.topology, rng, direct=True, outage_margin=self.outage_margin
        )
        bs_trace = self._new_trace()
        allocation = solve_bs(
            self.bs_problem(weights, sensing, channel),
            self.settings,
            policy=self.config.rs_subchannel_policy,
            trace=bs_trace,
        )
        self._keep_trace(bs_trace, "bs", 0)
        outcome = self._empty_outcome()
        self._transmit(allocation, sensing, channel, outcome)
        outcome.bs_allocation = allocation
        outcome.unconverged_solves = count_unconverged([allocation])
        return outcome

    def _transmit(
        self,
        allocation: BsAllocation,
        sensing: SensingSnapshot,
        channel: ChannelSnapshot,
        outcome: FrameOutcome,
    ) -> None:
        H, gains = channel.H[0], channel.gains[0]
        for n, k in enumerate(allocation.winners()):
            if k < 0 or allocation.ms_rate[n, k] <= 0.0:
                continue
            rate = float(allocation.ms_rate[n, k])
            power = float(allocation.ms_power[n, k])
            idle = int(sensing.composite_S[n])
            decoded = decode_indicator(
                rate, H[n, k], gains[k], 1.0, power, idle, self.config.g0
            )
            outcome.scheduled_rates[k] += rate
            outcome.goodput[k] += rate * decoded
            outcome.served[k] = True
            outcome.links.append(
                LinkRecord(
                    hop=1,
                    cluster=int(self.topology.user_cluster[k]),
                    subchannel=n,
                    receiver=k,
                    relay=0,
                    rate=rate,
                    power=power,
                    pu_idle=bool(idle),
                    decoded=bool(decoded),
                )
            )
