"""
Sensing.py
==========

Primary-user activity, imperfect spectrum sensing and availability fusion.

Responsibilities
----------------
- Draw the true availability S[m, n] (1 = PU idle) of every cluster and
  subchannel.
- Draw each mobile's binary report Shat (false alarm q_f, detection q_d).
- Fuse the reports of a cluster into the posterior availability
  beta[m, n] = E[S[m, n] | reports] with independent-report Bayes fusion
  against the prior 1 - q_act.
- Evaluate the conditional average interference
  (sum of powers) * tau * (1 - beta) against the threshold I_bar.

Composite Availability
----------------------
Systems without relays transmit from the BS, whose coverage spans every
PU. A subchannel is then usable only when all M+1 PUs are idle. Reports of
different clusters carry information about their own PU only and the PUs
are independent, so the composite posterior is the product of the cluster
posteriors.

Error Handling
--------------
A degenerate likelihood product (both hypotheses impossible under the
given q_f/q_d) falls back to the prior and is logged as a warning.
"""

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from loguru import logger
from numpy.typing import ArrayLike

from src.Topology import Topology

ArrayOrFloat = Union[float, np.ndarray]


@dataclass(frozen=True)
class SensingSnapshot:
    S: np.ndarray                    # (M+1, N) true availability
    reports: tuple[np.ndarray, ...]  # per cluster, (N, J_m) binary reports
    beta: np.ndarray                 # (M+1, N) posterior availability
    prior: np.ndarray                # (M+1,) prior availability 1 - q_act
    composite_S: np.ndarray          # (N,) all PUs idle
    composite_beta: np.ndarray       # (N,)
    degenerate: int = 0

    @property
    def n_clusters(self) -> int:
        return int(self.S.shape[0])


def draw_pu_states(
    q_act: ArrayLike,
    n_subchannels: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """
    Draw S for every cluster in ``q_act`` (one activity probability per
    cluster) and every subchannel. Returns an int array (len(q_act), N).
    """
    q = np.atleast_1d(np.asarray(q_act, dtype=float))
    if np.any((q < 0.0) | (q > 1.0)):
        raise ValueError(f"PU activity must lie in [0, 1], got {q_act}")
    draws = rng.random((q.size, n_subchannels))
    return (draws >= q[:, None]).astype(int)


def draw_reports(
    S: ArrayLike,
    n_users: int,
    q_f: float,
    q_d: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """
    Draw the (N, n_users) reports of one cluster given its availability row.

    Pr(Shat = 0 | S = 1) = q_f and Pr(Shat = 1 | S = 0) = 1 - q_d,
    independently across users.
    """
    state = np.asarray(S, dtype=int)
    draws = rng.random((state.size, n_users))
    idle = state[:, None] == 1
    return np.where(idle, draws >= q_f, draws >= q_d).astype(int)


def _likelihoods(
    reports: np.ndarray, q_f: float, q_d: float
) -> tuple[np.ndarray, np.ndarray]:
    ones = reports.sum(axis=-1)
    zeros = reports.shape[-1] - ones
    idle = np.power(1.0 - q_f, ones) * np.power(q_f, zeros)
    busy = np.power(1.0 - q_d, ones) * np.power(q_d, zeros)
    return idle, busy


def fuse_reports(
    reports: ArrayLike,
    prior: float,
    q_f: float,
    q_d: float,
) -> tuple[np.ndarray, np.ndarray]:
    """
    Posterior availability of every subchannel from its (N, J) reports.

    Returns (beta, degenerate) where ``degenerate`` marks subchannels whose
    likelihood products both vanished; those keep the prior.
    """
    table = np.asarray(reports, dtype=int)
    if table.ndim == 1:
        table = table[None, :]
    idle, busy = _likelihoods(table, q_f, q_d)
    numerator = prior * idle
    denominator = numerator + (1.0 - prior) * busy
    degenerate = denominator <= 0.0
    beta = np.divide(
        numerator,
        denominator,
        out=np.full(denominator.shape, float(prior)),
        where=~degenerate,
    )
    return np.clip(beta, 0.0, 1.0), degenerate


def posterior_beta(
    reports: ArrayLike,
    prior_avail: float,
    q_f: float,
    q_d: float,
) -> float:
    """Bayes fusion of one subchannel's reports (any number, including none)."""
    beta, degenerate = fuse_reports(
        np.asarray(reports, dtype=int).reshape(1, -1), prior_avail, q_f, q_d
    )
    if degenerate[0]:
        logger.warning(
            "Degenerate sensing likelihoods (q_f={}, q_d={}); keeping prior {}",
            q_f,
            q_d,
            prior_avail,
        )
    return float(beta[0])


def interference_level(
    total_power: ArrayOrFloat,
    tau: ArrayOrFloat,
    beta: ArrayOrFloat,
    tau_exponent: int = 1,
) -> ArrayOrFloat:
    level = (
        np.asarray(total_power, dtype=float)
        * np.power(np.asarray(tau, dtype=float), tau_exponent)
        * (1.0 - np.asarray(beta, dtype=float))
    )
    return float(level) if level.ndim == 0 else level


def sense_cell(
    topology: Topology,
    q_by_cluster: ArrayLike,
    rng: np.random.Generator,
    held_states: Optional[np.ndarray] = None,
) -> SensingSnapshot:
    """
    One frame of sensing for the whole cell.

    The mobiles of each cluster report on their own cluster's PU. When
    ``held_states`` is given the PU states are reused (PU coherence longer
    than a frame) and only the reports are redrawn.
    """
    config = topology.config
    q = np.atleast_1d(np.asarray(q_by_cluster, dtype=float))
    if q.size != topology.n_clusters:
        raise ValueError(
            f"Expected {topology.n_clusters} activity values, got {q.size}"
        )

    if held_states is None:
        S = draw_pu_states(q, config.N, rng)
    else:
        S = np.asarray(held_states, dtype=int)

    prior = 1.0 - q
    reports, beta_rows = [], []
    degenerate = 0
    for m in range(topology.n_clusters):
        n_reporters = topology.cluster_users(m).size
        cluster_reports = draw_reports(
            S[m], n_reporters, config.q_f, config.q_d, rng
        )
        beta, flags = fuse_reports(
            cluster_reports, prior[m], config.q_f, config.q_d
        )
        reports.append(cluster_reports)
        beta_rows.append(beta)
        degenerate += int(flags.sum())

    if degenerate:
        logger.warning("{} degenerate sensing fusions kept the prior", degenerate)

    beta_table = np.vstack(beta_rows)
    return SensingSnapshot(
        S=S,
        reports=tuple(reports),
        beta=beta_table,
        prior=prior,
        composite_S=S.all(axis=0).astype(int),
        composite_beta=beta_table.prod(axis=0),
        degenerate=degenerate,
    )
