"""
oracles.py
==========

Exhaustive reference solutions for tiny allocation instances.

Responsibilities
----------------
- ``brute_force_oracle``: best conditional weighted goodput of a relay or BS
  instance with at most two subchannels and two receivers per cluster,
  enumerating every subchannel assignment and every split of a power grid.
- ``enumerated_relay_objective``: expectation of the BS objective over all
  2^N relay decode patterns, each subchannel decoding independently with
  probability (1 - eps) * beta_n.

Power Grid
----------
Each scheduled subchannel tries ``grid_points`` evenly spaced powers in
[0, P], plus the points where a constraint starts to bind: the interference
cap, the least power that exhausts a mobile's rate budget and, for relay
links, the least power reaching each curve breakpoint. Splits over the
total budget are rejected.

Error Handling
--------------
Instances beyond the enumeration limits raise ``ValueError``.
"""

import itertools
from typing import Sequence, Union

import numpy as np

from src.GoodputCurve import GoodputCurve
from src.solvers.BsSolver import BsAllocation, BsProblem
from src.solvers.RsSolver import RelayProblem

MAX_SUBCHANNELS = 2
MAX_RECEIVERS = 2
MAX_PATTERN_SUBCHANNELS = 12


def _caps(coeff: np.ndarray, I_bar: float) -> np.ndarray:
    return np.divide(
        I_bar, coeff, out=np.full(coeff.shape, np.inf), where=coeff > 0.0
    )


def _power_for_rate(rate: float, phi: float, g: float) -> float:
    if phi <= 0.0 or not np.isfinite(rate):
        return np.inf
    return float(np.expm1(rate / g * np.log(2.0)) / phi)


def _candidates(
    limit: float, budget: float, grid_points: int, extra: Sequence[float]
) -> np.ndarray:
    grid = np.linspace(0.0, budget, grid_points)
    points = np.concatenate((grid, np.asarray(extra, dtype=float)))
    points = points[np.isfinite(points) & (points >= 0.0)]
    return np.unique(np.minimum(points, limit))


def _check_size(n_subchannels: int, *receivers: int) -> None:
    if n_subchannels > MAX_SUBCHANNELS or any(
        r > MAX_RECEIVERS for r in receivers
    ):
        raise ValueError(
            f"Instance too large for enumeration: {n_subchannels} subchannels, "
            f"receivers {list(receivers)} (limits {MAX_SUBCHANNELS} and "
            f"{MAX_RECEIVERS})"
        )


def _relay_value(problem: RelayProblem, rates: np.ndarray) -> float:
    # Budgets bind per user: keep the bits of its most valuable subchannels
    per_bit = problem.value_per_bit
    total = 0.0
    for k in range(problem.n_users):
        remaining = problem.budgets[k]
        for n in np.argsort(-per_bit[:, k], kind="stable"):
            bits = min(rates[n, k], remaining)
            total += per_bit[n, k] * bits
            remaining -= bits
    return total


def _oracle_rs(problem: RelayProblem, grid_points: int) -> float:
    N, K = problem.n_subchannels, problem.n_users
    _check_size(N, K)
    P = problem.power_budget
    if P <= 0.0 or K == 0:
        return 0.0
    caps = _caps(problem.interference_coeff, problem.I_bar)

    best = 0.0
    for assignment in itertools.product(range(-1, K), repeat=N):
        options = []
        for n, k in enumerate(assignment):
            if k < 0:
                options.append(np.zeros(1))
                continue
            hit = _power_for_rate(problem.budgets[k], problem.phi[n, k], problem.g)
            options.append(
                _candidates(min(P, caps[n]), P, grid_points, [caps[n], hit])
            )
        for powers in itertools.product(*options):
            if sum(powers) > P * (1.0 + 1e-12):
                continue
            rates = np.zeros((N, K))
            for n, k in enumerate(assignment):
                if k >= 0:
                    rates[n, k] = problem.g * np.log2(
                        1.0 + powers[n] * problem.phi[n, k]
                    )
            best = max(best, _relay_value(problem, rates))
    return best


def _oracle_bs(problem: BsProblem, grid_points: int) -> float:
    N, M, K_d = problem.n_subchannels, problem.n_relays, problem.n_direct
    _check_size(N, M, K_d, *(c.n_users for c in problem.curves))
    P = problem.power_budget
    if P <= 0.0 or M + K_d == 0:
        return 0.0
    caps = _caps(problem.interference_coeff, problem.I_bar)
    availability = (1.0 - problem.epsilon) * problem.beta
    per_bit = problem.ms_value_per_bit

    def link_value(n: int, entity: int, power: float) -> float:
        rate = problem.g * np.log2(1.0 + power * problem.phi[n, entity])
        if entity < M:
            return float(availability[n] * problem.curves[entity].eval(rate))
        return float(per_bit[n, entity - M] * rate)

    best = 0.0
    for assignment in itertools.product(range(-1, M + K_d), repeat=N):
        options = []
        for n, entity in enumerate(assignment):
            if entity < 0:
                options.append(np.zeros(1))
                continue
            extra = [caps[n]]
            if entity < M:
                extra += [
                    _power_for_rate(r, problem.phi[n, entity], problem.g)
                    for r in problem.curves[entity].rates
                ]
            options.append(_candidates(min(P, caps[n]), P, grid_points, extra))
        for powers in itertools.product(*options):
            if sum(powers) > P * (1.0 + 1e-12):
                continue
            value = sum(
                link_value(n, entity, powers[n])
                for n, entity in enumerate(assignment)
                if entity >= 0
            )
            best = max(best, value)
    return best


def brute_force_oracle(
    problem: Union[RelayProblem, BsProblem], grid_points: int = 51
) -> float:
    """
    Best conditional weighted goodput of a tiny instance on the power grid.

    Raises:
        ValueError: if the instance exceeds two subchannels or two receivers
            in any cluster, or the grid has fewer than two points
    """
    if grid_points < 2:
        raise ValueError(f"Power grid needs at least 2 points, got {grid_points}")
    if isinstance(problem, RelayProblem):
        return _oracle_rs(problem, grid_points)
    return _oracle_bs(problem, grid_points)


def enumerated_relay_objective(
    allocation: BsAllocation,
    curves: Sequence[GoodputCurve],
    beta: np.ndarray,
    epsilon: float,
    weights_ms: np.ndarray,
) -> float:
    """
    Expected BS objective over every relay decode pattern.

    The direct-mobile part is linear in the decode probabilities and is
    evaluated in closed form; relay m earns G_m(sum_n t_n * r[n, m]).
    """
    beta = np.asarray(beta, dtype=float)
    N = beta.size
    if N > MAX_PATTERN_SUBCHANNELS:
        raise ValueError(
            f"Too many subchannels to enumerate decode patterns: {N} > "
            f"{MAX_PATTERN_SUBCHANNELS}"
        )
    success = (1.0 - epsilon) * beta
    weights_ms = np.asarray(weights_ms, dtype=float)
    direct = float(np.sum(success[:, None] * weights_ms[None, :] * allocation.ms_rate))

    relayed = 0.0
    for pattern in itertools.product((0, 1), repeat=N):
        t = np.asarray(pattern, dtype=float)
        probability = float(np.prod(np.where(t > 0.0, success, 1.0 - success)))
        if probability == 0.0:
            continue
        delivered = t @ allocation.rs_rate
        relayed += probability * sum(
            float(curve.eval(delivered[m])) for m, curve in enumerate(curves)
        )
    return direct + relayed
