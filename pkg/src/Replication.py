"""
Replication.py
==============

One Monte Carlo replication: a topology, a system and ``frames_per_trial``
frames of proportional fair scheduling.

Seeding
-------
A replication is identified by its ``seed_key`` (master seed, replication
index). ``np.random.SeedSequence(seed_key)`` spawns one stream for the
topology and one for the frames, so every system run under the same key
sees the same node placement and long-term gains, and every replication is
independent of the order in which replications are executed.

Trace Levels
------------
- 0: metrics only.
- 1: one row per scheduled link.
- 2: additionally the curve breakpoints of every relay and one row per
  dual-loop iteration of every BS and relay solve.
"""

from dataclasses import dataclass, field
from typing import Any, Sequence, Union

import numpy as np
from loguru import logger

from src.Analysis import RunMetrics, aggregate
from src.ScenarioConfig import ScenarioConfig
from src.System import System, SystemKind
from src.systems.NaiveSystem import NaiveSystem
from src.systems.NoRsSystem import NoRsSystem
from src.systems.ProposedSystem import ProposedSystem
from src.Topology import Topology, build_topology
from src.UserStats import UserStats, update_pfs


@dataclass
class ReplicationResult:
    kind: SystemKind
    seed_key: tuple[int, ...]
    metrics: RunMetrics
    distances: np.ndarray
    trace_rows: list[dict[str, Any]] = field(default_factory=list)


def make_system(kind: Union[SystemKind, str], topology: Topology) -> System:
    """
    Raises:
        ValueError: for an unknown kind or the reserved baseline 1
    """
    kind = SystemKind(kind)
    if kind is SystemKind.PROPOSED:
        return ProposedSystem(topology)
    if kind is SystemKind.NAIVE:
        return NaiveSystem(topology)
    if kind is SystemKind.NO_RS_EQUAL:
        return NoRsSystem(topology, variant="equal")
    if kind is SystemKind.NO_RS_LOW:
        return NoRsSystem(topology, variant="low")
    raise ValueError(
        f"System '{kind.value}' (subchannel-sharing baseline) is reserved and "
        "not implemented"
    )


def run_replication(
    config: ScenarioConfig,
    kind: Union[SystemKind, str],
    seed_key: Sequence[int],
    trace: int = 0,
) -> ReplicationResult:
    key = tuple(int(k) for k in seed_key)
    topology_seed, frame_seed = np.random.SeedSequence(list(key)).spawn(2)
    topology = build_topology(config, topology_seed)
    system = make_system(kind, topology)
    rng = np.random.default_rng(frame_seed)
    if trace >= 2:
        system.solver_trace = []

    stats = UserStats.initial(topology.n_users, config.pfs_floor)
    frames = []
    trace_rows: list[dict[str, Any]] = []
    for index in range(config.frames_per_trial):
        outcome = system.run_frame(stats.weights, rng)
        averaged = (
            outcome.goodput if config.pfs_average_goodput else outcome.scheduled_rates
        )
        update_pfs(stats, averaged, config.t_s)
        stats.record(outcome.goodput, outcome.served)
        outcome.average_rate = stats.average_rate.copy()
        if trace >= 1:
            trace_rows += [
                {"record": "link", "frame": index, **link.as_row()}
                for link in outcome.links
            ]
        if trace >= 2 and system.solver_trace is not None:
            for m, curve in enumerate(outcome.curves, start=1):
                trace_rows += [
                    {"record": "curve", "frame": index, **row}
                    for row in curve.trace_rows(m)
                ]
            trace_rows += [{"frame": index, **row} for row in system.solver_trace]
            system.solver_trace = []
        frames.append(outcome)

    metrics = aggregate(frames)
    if metrics.unconverged_solves:
        logger.warning(
            "{} replication {}: {} dual solves hit the iteration limit",
            system.kind.value,
            key,
            metrics.unconverged_solves,
        )
    logger.debug(
        "{} replication {}: cell goodput {:.4g} bits/frame",
        system.kind.value,
        key,
        float(metrics.mean_goodput.sum()),
    )
    return ReplicationResult(
        kind=system.kind,
        seed_key=key,
        metrics=metrics,
        distances=topology.user_distance_m,
        trace_rows=trace_rows,
    )
