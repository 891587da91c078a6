"""
ProposedSystem.py
=================

The relay-assisted cognitive OFDMA downlink, one frame at a time.

Frame Flow
----------
1. Every cluster senses its PU; the reports are fused into beta per cluster.
2. Backward recursion: each relay builds its goodput curve from its local
   CSIT and availability and feeds it back to the BS.
3. Phase one: the BS solves its allocation over the direct mobiles and the
   relay backhaul links and transmits; every scheduled packet is decoded
   against the true channel, giving the relay decode indicators t[n, m].
4. Phase two: every relay that decoded data solves its allocation with rate
   budgets R_k = sum_n d[n, k] * t[n, m] * r[n, m] and transmits.

Direct mobiles collect goodput in phase one and relayed mobiles in phase
two; backhaul bits never count as goodput.
"""

from typing import Optional

import numpy as np

from src.Channel import ChannelSnapshot, draw_channel
from src.GoodputCurve import (
    GoodputCurve,
    build_curve_general,
    build_curve_pfs,
    compute_class_points,
)
from src.ScenarioConfig import CurveMode
from src.Sensing import SensingSnapshot, interference_level
from src.solvers.BsSolver import BsAllocation, BsProblem, solve_bs
from src.solvers.RsSolver import RelayProblem, RsAllocation, solve_rs
from src.System import (
    FrameOutcome,
    LinkRecord,
    System,
    SystemKind,
    count_unconverged,
    decode_indicator,
)


class ProposedSystem(System):
    kind = SystemKind.PROPOSED

    def cluster_activity(self) -> list[float]:
        return self.config.cluster_activity(low_rs_activity=False)

    def _coupling(self, m: int, beta: np.ndarray) -> np.ndarray:
        return np.asarray(
            interference_level(
                1.0,
                self.topology.tau[m],
                beta,
                self.config.interference_tau_exponent,
            )
        )

    def relay_problem(
        self,
        m: int,
        weights: np.ndarray,
        sensing: SensingSnapshot,
        channel: ChannelSnapshot,
    ) -> RelayProblem:
        """Phase-two problem of relay cluster m with unlimited backhaul."""
        users = self.topology.cluster_users(m)
        _, Pm = self.power_budgets
        return RelayProblem(
            phi=channel.phi[m],
            beta=sensing.beta[m],
            weights=weights[users],
            interference_coeff=self._coupling(m, sensing.beta[m]),
            power_budget=Pm,
            I_bar=self.config.I_bar,
            budgets=np.full(users.size, np.inf),
            epsilon=self.config.epsilon,
            g=self.config.gm,
        )

    def build_curve(
        self, problem: RelayProblem, channel: ChannelSnapshot, m: int
    ) -> GoodputCurve:
        config = self.config
        if config.curve_mode is CurveMode.GENERAL:
            classes = [[k] for k in range(problem.n_users)]
            points, plans = compute_class_points(
                problem, classes, self.settings, include_joint=True
            )
            return build_curve_general(points, plans)
        long_term = channel.gains[m][None, :] if config.pfs_literal_l else None
        return build_curve_pfs(
            problem.phi,
            problem.beta,
            problem.weights,
            problem.power_budget,
            config.epsilon,
            g=config.gm,
            long_term_gains=long_term,
        )

    def bs_problem(
        self,
        weights: np.ndarray,
        sensing: SensingSnapshot,
        channel: ChannelSnapshot,
        curves: tuple[GoodputCurve, ...],
    ) -> BsProblem:
        P0, _ = self.power_budgets
        direct = self.topology.cluster_users(0)
        return BsProblem(
            phi=channel.phi[0],
            weights=weights[direct],
            curves=curves,
            beta=sensing.beta[0],
            interference_coeff=self._coupling(0, sensing.beta[0]),
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
        config = self.config
        topology = self.topology
        M = config.M
        channel = draw_channel(topology, rng)
        outcome = self._empty_outcome()

        # Backward recursion
        relay_problems = [
            self.relay_problem(m, weights, sensing, channel)
            for m in range(1, M + 1)
        ]
        curves = tuple(
            self.build_curve(problem, channel, m)
            for m, problem in enumerate(relay_problems, start=1)
        )
        outcome.curves = curves
        outcome.feedback_reals = sum(c.feedback_reals() for c in curves)

        # Phase one
        bs_trace = self._new_trace()
        bs = solve_bs(
            self.bs_problem(weights, sensing, channel, curves),
            self.settings,
            policy=config.rs_subchannel_policy,
            trace=bs_trace,
        )
        self._keep_trace(bs_trace, "bs", 0)
        t = self._phase_one(bs, sensing, channel, outcome)

        # Phase two
        rs_allocations: list[Optional[RsAllocation]] = []
        for m, problem in enumerate(relay_problems, start=1):
            budgets = np.einsum(
                "nk,n,n->k",
                bs.partitions[m - 1, :, : problem.n_users],
                t[:, m - 1],
                bs.rs_rate[:, m - 1],
            )
            if not np.any(budgets > 0.0):
                rs_allocations.append(None)
                continue
            rs_trace = self._new_trace()
            allocation = solve_rs(
                problem.with_budgets(budgets), self.settings, trace=rs_trace
            )
            self._keep_trace(rs_trace, "rs", m)
            self._phase_two(m, allocation, sensing, channel, outcome)
            rs_allocations.append(allocation)

        outcome.decode_indicators = t
        outcome.bs_allocation = bs
        outcome.rs_allocations = tuple(rs_allocations)
        outcome.unconverged_solves = count_unconverged([bs, *rs_allocations])
        return outcome

    def _phase_one(
        self,
        bs: BsAllocation,
        sensing: SensingSnapshot,
        channel: ChannelSnapshot,
        outcome: FrameOutcome,
    ) -> np.ndarray:
        """Transmit the BS allocation; returns the relay decode indicators."""
        M = self.config.M
        g0 = self.config.g0
        direct = self.topology.cluster_users(0)
        t = np.zeros((self.config.N, M), dtype=int)
        H, gains = channel.H[0], channel.gains[0]

        for n, column in enumerate(bs.winners()):
            if column < 0 or bs.rate[n, column] <= 0.0:
                continue
            rate = float(bs.rate[n, column])
            power = float(bs.power[n, column])
            idle = int(sensing.S[0, n])
            decoded = decode_indicator(
                rate, H[n, column], gains[column], 1.0, power, idle, g0
            )
            if column < M:
                t[n, column] = decoded
                receiver, relay = -1, column + 1
            else:
                receiver, relay = int(direct[column - M]), 0
                outcome.scheduled_rates[receiver] += rate
                outcome.goodput[receiver] += rate * decoded
                outcome.served[receiver] = True
            outcome.links.append(
                LinkRecord(
                    hop=1,
                    cluster=0,
                    subchannel=n,
                    receiver=receiver,
                    relay=relay,
                    rate=rate,
                    power=power,
                    pu_idle=bool(idle),
                    decoded=bool(decoded),
                )
            )
        return t

    def _phase_two(
        self,
        m: int,
        allocation: RsAllocation,
        sensing: SensingSnapshot,
        channel: ChannelSnapshot,
        outcome: FrameOutcome,
    ) -> None:
        users = self.topology.cluster_users(m)
        gm = self.config.gm
        H, gains = channel.H[m], channel.gains[m]
        for n, k in enumerate(allocation.winners()):
            if k < 0 or allocation.rate[n, k] <= 0.0:
                continue
            rate = float(allocation.rate[n, k])
            power = float(allocation.power[n, k])
            idle = int(sensing.S[m, n])
            decoded = decode_indicator(rate, H[n, k], gains[k], 1.0, power, idle, gm)
            receiver = int(users[k])
            outcome.scheduled_rates[receiver] += rate
            outcome.goodput[receiver] += rate * decoded
            outcome.served[receiver] = True
            outcome.links.append(
                LinkRecord(
                    hop=2,
                    cluster=m,
                    subchannel=n,
                    receiver=receiver,
                    relay=m,
                    rate=rate,
                    power=power,
                    pu_idle=bool(idle),
                    decoded=bool(decoded),
                )
            )
