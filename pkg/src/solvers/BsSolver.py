"""
BsSolver.py
===========

Phase-one allocation at the base station over its direct mobiles and the
relay backhaul links.

Objective
---------
The BS maximises the decoupled objective

    sum_{n,k} (1-eps)*beta_n*w_k*r_{n,k}  +  sum_{m,n} (1-eps)*beta_n*G_m(r_{n,m})

where the first sum runs over the direct mobiles and G_m is relay m's
goodput curve. Each relay link on a subchannel is valued on its own, which
is exact while every relay holds at most one subchannel.

Method
------
The same dual loop as the relay solver (``Subgradient.DualSolver``) with
subchannel, power and interference multipliers. A direct mobile's value on
a subchannel comes from the closed-form power; a relay's value is its best
response along its curve (``rs_candidate``): breakpoints, the stationary
point inside each segment, and the largest rate the per-subchannel power
cap allows. For frozen winners the powers are recovered by bisection on a
single power price.

Packet Partition
----------------
A relay granted r backhaul bits splits the packet between its users in
proportion to the planned phase-two rates interpolated along its curve
(``packet_partition``); the fractions sum to at most one.
"""

from dataclasses import dataclass, replace
from typing import Any, Literal, Optional, Sequence

import numpy as np
from loguru import logger

from src.GoodputCurve import GoodputCurve
from src.solvers.Subgradient import (
    LN2,
    ConstraintResiduals,
    DualSolver,
    DualState,
    InnerSolution,
    Recovery,
    SolverSettings,
    assigned_winners,
    rate_of,
    water_level,
)

_PRICE_STEPS = 80


@dataclass(frozen=True, eq=False)
class BsProblem:
    phi: np.ndarray                  # (N, M + K_d) cluster-0 gains, relays first
    weights: np.ndarray              # (K_d,) direct-mobile weights
    curves: tuple[GoodputCurve, ...]
    beta: np.ndarray                 # (N,)
    interference_coeff: np.ndarray   # (N,)
    power_budget: float
    I_bar: float
    epsilon: float
    g: float = 0.5

    def __post_init__(self) -> None:
        phi = np.atleast_2d(np.asarray(self.phi, dtype=float))
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=float))
        object.__setattr__(self, "curves", tuple(self.curves))
        object.__setattr__(self, "beta", np.asarray(self.beta, dtype=float))
        object.__setattr__(
            self,
            "interference_coeff",
            np.broadcast_to(
                np.asarray(self.interference_coeff, dtype=float), (phi.shape[0],)
            ).copy(),
        )
        if phi.shape[1] != len(self.curves) + self.weights.size:
            raise ValueError(
                f"Gain table has {phi.shape[1]} receivers, expected "
                f"{len(self.curves)} relays + {self.weights.size} mobiles"
            )

    @property
    def n_subchannels(self) -> int:
        return int(self.phi.shape[0])

    @property
    def n_relays(self) -> int:
        return len(self.curves)

    @property
    def n_direct(self) -> int:
        return int(self.weights.size)

    @property
    def ms_value_per_bit(self) -> np.ndarray:
        return (1.0 - self.epsilon) * self.beta[:, None] * self.weights[None, :]


@dataclass(frozen=True, eq=False)
class BsAllocation:
    ms_alpha: np.ndarray   # (N, K_d)
    ms_power: np.ndarray
    ms_rate: np.ndarray
    rs_alpha: np.ndarray   # (N, M)
    rs_power: np.ndarray
    rs_rate: np.ndarray
    partitions: np.ndarray  # (M, N, K_m) packet fractions
    objective: float
    dual_bound: float
    duals: DualState
    converged: bool
    iterations: int

    @classmethod
    def empty(
        cls, n_subchannels: int, n_relays: int, n_direct: int, relay_users: int
    ) -> "BsAllocation":
        ms = np.zeros((n_subchannels, n_direct))
        rs = np.zeros((n_subchannels, n_relays))
        return cls(
            ms_alpha=ms.astype(int),
            ms_power=ms,
            ms_rate=ms.copy(),
            rs_alpha=rs.astype(int),
            rs_power=rs,
            rs_rate=rs.copy(),
            partitions=np.zeros((n_relays, n_subchannels, relay_users)),
            objective=0.0,
            dual_bound=0.0,
            duals=DualState.zeros(n_subchannels, 0),
            converged=True,
            iterations=0,
        )

    @property
    def alpha(self) -> np.ndarray:
        """(N, M + K_d) in cluster-0 receiver order."""
        return np.hstack((self.rs_alpha, self.ms_alpha))

    @property
    def power(self) -> np.ndarray:
        return np.hstack((self.rs_power, self.ms_power))

    @property
    def rate(self) -> np.ndarray:
        return np.hstack((self.rs_rate, self.ms_rate))

    @property
    def total_power(self) -> float:
        return float(self.ms_power.sum() + self.rs_power.sum())

    def winners(self) -> np.ndarray:
        alpha = self.alpha
        if alpha.shape[1] == 0:
            return np.full(alpha.shape[0], -1)
        return np.where(alpha.any(axis=1), alpha.argmax(axis=1), -1)

    def relay_subchannel_counts(self) -> np.ndarray:
        return np.count_nonzero(self.rs_rate > 0.0, axis=0)


def _relay_best_response(
    curve: GoodputCurve,
    gain: np.ndarray,
    phi: np.ndarray,
    price: np.ndarray,
    caps: np.ndarray,
    g: float,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Best (rate, power, value) of one relay on every subchannel, where
    value = gain * G(r) - price * p(r) and p(r) = (2^(r/g) - 1) / phi.
    Ties go to the smaller rate.
    """
    rates, values = curve.rates, curve.values
    slopes = curve.slopes
    with np.errstate(all="ignore"):
        r_cap = np.where(phi > 0.0, g * np.log2(1.0 + caps * phi), 0.0)
        ratio = (
            gain[:, None] * slopes[None, :] * g * phi[:, None]
            / (price[:, None] * LN2)
        )
        stationary = np.where(
            (price[:, None] > 0.0) & (ratio > 1.0), g * np.log2(ratio), np.nan
        )
    inside = (stationary > rates[None, :-1]) & (stationary < rates[None, 1:])
    stationary = np.where(inside, stationary, np.nan)

    n = phi.size
    candidates = np.concatenate(
        (np.broadcast_to(rates, (n, rates.size)), stationary, r_cap[:, None]),
        axis=1,
    )
    feasible = np.isfinite(candidates) & (candidates <= r_cap[:, None])
    candidates = np.where(feasible, candidates, 0.0)
    with np.errstate(all="ignore"):
        power = np.where(
            candidates > 0.0,
            np.expm1(candidates / g * LN2) / phi[:, None],
            0.0,
        )
    worth = gain[:, None] * np.interp(candidates, rates, values)
    score = np.where(feasible, worth - price[:, None] * power, -np.inf)

    best = score.max(axis=1)
    near = score >= best[:, None] - 1e-12 * np.maximum(1.0, np.abs(best[:, None]))
    pick = np.argmin(np.where(near, candidates, np.inf), axis=1)
    rows = np.arange(n)
    return candidates[rows, pick], power[rows, pick], score[rows, pick]


def rs_candidate(
    curve: GoodputCurve,
    nu: float,
    eta: float,
    beta: float,
    phi: float,
    tau: float,
    epsilon: float,
    g: float = 0.5,
    power_cap: float = np.inf,
    tau_exponent: int = 1,
) -> tuple[float, float, float]:
    """
    Best backhaul rate for one relay on one subchannel at the given prices.

    Returns (r, p, value) with value = (1-eps)*beta*G(r) - price*p(r).
    """
    price = nu + eta * tau**tau_exponent * (1.0 - beta)
    r, p, value = _relay_best_response(
        curve,
        np.array([(1.0 - epsilon) * beta]),
        np.array([float(phi)]),
        np.array([price]),
        np.array([power_cap]),
        g,
    )
    return float(r[0]), float(p[0]), float(max(value[0], 0.0))


def packet_partition(curve: GoodputCurve, r: float) -> np.ndarray:
    """
    Fractions of a backhaul packet of r bits destined to each relay user.

    Rates past saturation are treated as the saturation rate.

    Raises:
        ValueError: if r is negative
    """
    if r < 0.0:
        raise ValueError(f"Granted rate must be non-negative, got {r}")
    plan = curve.plan_at(min(r, curve.saturation_rate))
    total = float(plan.sum())
    if r == 0.0 or total <= 0.0:
        return np.zeros(curve.n_users)
    fractions = plan / (total * (1.0 + 1e-12))
    return np.clip(fractions, 0.0, 1.0)


def decoupled_objective(
    allocation: BsAllocation,
    curves: Sequence[GoodputCurve],
    beta: np.ndarray,
    epsilon: float,
    weights_ms: np.ndarray,
) -> float:
    beta = np.asarray(beta, dtype=float)
    availability = (1.0 - epsilon) * beta
    per_bit = availability[:, None] * np.asarray(weights_ms, dtype=float)[None, :]
    direct = float(np.sum(per_bit * allocation.ms_rate))
    relayed = sum(
        float(np.sum(availability * curve.eval(allocation.rs_rate[:, m])))
        for m, curve in enumerate(curves)
    )
    return direct + relayed


class _BsDualSolver(DualSolver):
    def __init__(self, problem: BsProblem, settings: SolverSettings) -> None:
        M = problem.n_relays
        availability = (1.0 - problem.epsilon) * problem.beta
        ms_per_bit = problem.ms_value_per_bit
        first_slopes = np.array(
            [c.slopes[0] if c.slopes.size else 0.0 for c in problem.curves]
        )
        scale = max(
            float(ms_per_bit.max(initial=0.0)),
            float((availability[:, None] * first_slopes[None, :]).max(initial=0.0)),
        )
        super().__init__(settings, problem.n_subchannels, 0, scale)
        budget = problem.power_budget
        self.problem = problem
        self.n_relays = M
        self.ms_base = ms_per_bit / scale
        self.gain = availability / scale
        self.phi = problem.phi * budget
        coeff = problem.interference_coeff
        self.raw_caps = np.divide(
            problem.I_bar,
            coeff * budget,
            out=np.full(coeff.shape, np.inf),
            where=coeff > 0.0,
        )
        self.caps = np.minimum(self.raw_caps, 1.0)
        self.g = problem.g
        self.rows = np.arange(problem.n_subchannels)
        self.equivalent_weight = np.hstack(
            (self.gain[:, None] * first_slopes[None, :], self.ms_base)
        )

    def initial_nu(self) -> float:
        if self.equivalent_weight.shape[1] == 0:
            return 0.0
        proxy = np.argmax(self.equivalent_weight * np.log2(1.0 + self.phi), axis=1)
        a = self.g * self.equivalent_weight[self.rows, proxy] / LN2
        level = water_level(a, self.phi[self.rows, proxy], self.caps, 1.0)
        return 1.0 / level if 0.0 < level < np.inf else 0.0

    def entity_response(
        self, price: np.ndarray
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(power, rate, value) of every (subchannel, entity) at ``price``."""
        M = self.n_relays
        n = self.n_subchannels
        width = self.phi.shape[1]
        power = np.zeros((n, width))
        rate = np.zeros((n, width))
        value = np.zeros((n, width))

        for m, curve in enumerate(self.problem.curves):
            r, p, v = _relay_best_response(
                curve, self.gain, self.phi[:, m], price, self.caps, self.g
            )
            power[:, m], rate[:, m], value[:, m] = p, r, np.maximum(v, 0.0)

        phi = self.phi[:, M:]
        if phi.shape[1]:
            useful = (self.ms_base > 0.0) & (phi > 0.0)
            price_col = price[:, None]
            with np.errstate(all="ignore"):
                stationary = self.g * self.ms_base / (LN2 * price_col) - 1.0 / phi
                stationary = np.where(price_col > 0.0, stationary, np.inf)
                p = np.clip(stationary, 0.0, self.caps[:, None])
                p = np.where(useful, p, 0.0)
                r = rate_of(p, phi, self.g)
                v = self.ms_base * r - price[:, None] * p
            power[:, M:] = p
            rate[:, M:] = r
            value[:, M:] = np.where(useful, np.maximum(v, 0.0), 0.0)
        return power, rate, value

    def inner(self, duals: DualState) -> InnerSolution:
        power, _, values = self.entity_response(duals.nu + duals.eta)
        winners = assigned_winners(values, duals.lambda_)
        active = winners >= 0
        chosen = np.where(active, winners, 0)
        p_sel = np.where(active, power[self.rows, chosen], 0.0)
        residuals = ConstraintResiduals(
            subchannel=1.0 - active.astype(float),
            power=1.0 - float(p_sel.sum()),
            interference=self.raw_caps - p_sel,
            flow=np.zeros(0),
        )
        if values.shape[1]:
            best = values.max(axis=1)
        else:
            best = np.zeros(self.n_subchannels)
        finite = np.isfinite(self.raw_caps)
        bound = (
            float(np.maximum(duals.lambda_, best).sum())
            + duals.nu
            + float(np.sum(duals.eta[finite] * self.raw_caps[finite]))
        )
        return InnerSolution(values, winners, residuals, bound)

    def _fixed(
        self, winners: np.ndarray, price: float
    ) -> tuple[np.ndarray, np.ndarray, float]:
        """Powers, rates and normalised objective of frozen winners at one price."""
        n = self.n_subchannels
        prices = np.full(n, price)
        power = np.zeros(n)
        rate = np.zeros(n)
        objective = 0.0
        M = self.n_relays

        for m, curve in enumerate(self.problem.curves):
            rows = np.flatnonzero(winners == m)
            if rows.size == 0:
                continue
            r, p, _ = _relay_best_response(
                curve,
                self.gain[rows],
                self.phi[rows, m],
                prices[rows],
                self.caps[rows],
                self.g,
            )
            power[rows], rate[rows] = p, r
            objective += float(np.sum(self.gain[rows] * curve.eval(r)))

        rows = np.flatnonzero(winners >= M)
        if rows.size:
            columns = winners[rows] - M
            base = self.ms_base[rows, columns]
            phi = self.phi[rows, M + columns]
            if price > 0.0:
                with np.errstate(all="ignore"):
                    level = self.g * base / (LN2 * price) - 1.0 / phi
            else:
                level = np.full(rows.size, np.inf)
            p = np.clip(level, 0.0, self.caps[rows])
            p = np.where((base > 0.0) & (phi > 0.0), p, 0.0)
            r = rate_of(p, phi, self.g)
            power[rows], rate[rows] = p, r
            objective += float(np.sum(base * r))
        return power, rate, objective

    def recover(self, winners: np.ndarray) -> Recovery:
        power, rate, objective = self._fixed(winners, 0.0)
        if power.sum() <= 1.0:
            return Recovery(objective, power, rate)

        hi = 1.0
        for _ in range(_PRICE_STEPS * 4):
            if self._fixed(winners, hi)[0].sum() <= 1.0:
                break
            hi *= 2.0
        lo = 0.0
        for _ in range(_PRICE_STEPS):
            mid = 0.5 * (lo + hi)
            if self._fixed(winners, mid)[0].sum() > 1.0:
                lo = mid
            else:
                hi = mid
        power, rate, objective = self._fixed(winners, hi)
        return Recovery(objective, power, rate)


def solve_bs(
    problem: BsProblem,
    settings: Optional[SolverSettings] = None,
    policy: Literal["warn", "error"] = "warn",
    trace: Optional[list[dict[str, Any]]] = None,
) -> BsAllocation:
    """
    Allocate the BS subchannels between direct mobiles and relay backhaul.

    Raises:
        RuntimeError: when ``policy`` is "error" and a relay ends up holding
            more than one subchannel
    """
    settings = settings or SolverSettings()
    N, M, K_d = problem.n_subchannels, problem.n_relays, problem.n_direct
    relay_users = max((c.n_users for c in problem.curves), default=0)
    empty = BsAllocation.empty(N, M, K_d, relay_users)
    if problem.power_budget <= 0.0 or N == 0 or M + K_d == 0:
        return empty

    solver = _BsDualSolver(problem, settings)
    if solver.value_scale <= 0.0:
        return empty
    outcome = solver.solve(trace)

    winners = outcome.winners
    recovery = outcome.recovery
    active = np.flatnonzero((winners >= 0) & (recovery.rate > 0.0))
    alpha = np.zeros((N, M + K_d), dtype=int)
    power = np.zeros((N, M + K_d))
    rate = np.zeros((N, M + K_d))
    alpha[active, winners[active]] = 1
    power[active, winners[active]] = recovery.power[active] * problem.power_budget
    rate[active, winners[active]] = recovery.rate[active]

    partitions = np.zeros((M, N, relay_users))
    for n in active:
        m = winners[n]
        if m < M:
            partitions[m, n, : problem.curves[m].n_users] = packet_partition(
                problem.curves[m], rate[n, m]
            )

    allocation = BsAllocation(
        ms_alpha=alpha[:, M:],
        ms_power=power[:, M:],
        ms_rate=rate[:, M:],
        rs_alpha=alpha[:, :M],
        rs_power=power[:, :M],
        rs_rate=rate[:, :M],
        partitions=partitions,
        objective=0.0,
        dual_bound=outcome.bound * solver.value_scale,
        duals=outcome.duals.scaled(
            solver.value_scale, problem.power_budget, problem.interference_coeff
        ),
        converged=outcome.converged,
        iterations=outcome.iterations,
    )
    objective = decoupled_objective(
        allocation, problem.curves, problem.beta, problem.epsilon, problem.weights
    )
    allocation = replace(allocation, objective=objective)

    counts = allocation.relay_subchannel_counts()
    if np.any(counts > 1):
        message = (
            f"Relays {np.flatnonzero(counts > 1).tolist()} hold more than one "
            "subchannel; the decoupled objective is no longer exact"
        )
        if policy == "error":
            raise RuntimeError(message)
        logger.warning(message)

    logger.debug(
        "BS solve: objective={:.6g} bound={:.6g} iterations={} converged={}",
        objective,
        allocation.dual_bound,
        outcome.iterations,
        outcome.converged,
    )
    return allocation
