"""
RsSolver.py
===========

Phase-two allocation at one relay: subchannel, power and rate per user.

The relay maximises its cluster's conditional weighted goodput

    sum_{n,k} (1 - eps) * beta_n * w_k * r_{n,k},   r = g * log2(1 + p * phi)

subject to one user per subchannel, its total power budget, the average
interference threshold towards its cluster's PU on every subchannel, and
flow balance: user k cannot receive more than the R_k bits the relay
decoded for it in phase one.

Method
------
Lagrangian dual decomposition with projected subgradient updates on the
subchannel (lambda), power (nu), interference (eta) and flow (mu)
multipliers. At fixed multipliers every (n, k) pair has a closed-form power
and a marginal benefit X; each subchannel goes to the user with the largest
positive X. After the loop, the winners are frozen and the exact best
powers for them are found by capped water-filling (users whose budget
binds are held at the least power reaching it), then a short local search
over reassignments polishes the result.

Key Functions
-------------
- ``power_closed_form`` / ``marginal_benefit`` / ``assign_subchannel``
- ``solve_rs(problem, settings, trace) -> RsAllocation``

Non-convergence is not an error: the allocation is feasible regardless and
``converged`` is False.
"""

from dataclasses import dataclass, replace
from typing import Any, Optional, Union

import numpy as np
from loguru import logger
from numpy.typing import ArrayLike

from src.solvers.Subgradient import (
    LN2,
    ConstraintResiduals,
    DualSolver,
    DualState,
    InnerSolution,
    Recovery,
    SolverSettings,
    assigned_winners,
    min_power_for_rate,
    rate_of,
    water_level,
    weighted_water_fill,
)

ArrayOrFloat = Union[float, np.ndarray]


@dataclass(frozen=True, eq=False)
class RelayProblem:
    phi: np.ndarray                 # (N, K) effective gains
    beta: np.ndarray                # (N,) availability posterior
    weights: np.ndarray             # (K,)
    interference_coeff: np.ndarray  # (N,) tau^e * (1 - beta)
    power_budget: float
    I_bar: float
    budgets: np.ndarray             # (K,) phase-one bits, inf for unlimited
    epsilon: float
    g: float = 0.25

    def __post_init__(self) -> None:
        phi = np.atleast_2d(np.asarray(self.phi, dtype=float))
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "beta", np.asarray(self.beta, dtype=float))
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=float))
        object.__setattr__(
            self,
            "interference_coeff",
            np.broadcast_to(
                np.asarray(self.interference_coeff, dtype=float), (phi.shape[0],)
            ).copy(),
        )
        object.__setattr__(
            self,
            "budgets",
            np.broadcast_to(
                np.asarray(self.budgets, dtype=float), (phi.shape[1],)
            ).copy(),
        )

    @property
    def n_subchannels(self) -> int:
        return int(self.phi.shape[0])

    @property
    def n_users(self) -> int:
        return int(self.phi.shape[1])

    @property
    def value_per_bit(self) -> np.ndarray:
        return (1.0 - self.epsilon) * self.beta[:, None] * self.weights[None, :]

    def with_weights(
        self, weights: ArrayLike, budgets: Optional[ArrayLike] = None
    ) -> "RelayProblem":
        return replace(
            self,
            weights=np.asarray(weights, dtype=float),
            budgets=self.budgets if budgets is None else np.asarray(budgets),
        )

    def with_budgets(self, budgets: ArrayLike) -> "RelayProblem":
        return replace(self, budgets=np.asarray(budgets, dtype=float))


@dataclass(frozen=True, eq=False)
class RsAllocation:
    alpha: np.ndarray  # (N, K) winner indicators
    power: np.ndarray  # (N, K)
    rate: np.ndarray   # (N, K) scheduled rate with outage margin
    objective: float
    dual_bound: float
    duals: DualState
    converged: bool
    iterations: int

    @classmethod
    def empty(cls, n_subchannels: int, n_users: int) -> "RsAllocation":
        zeros = np.zeros((n_subchannels, n_users))
        return cls(
            alpha=zeros.astype(int),
            power=zeros,
            rate=zeros.copy(),
            objective=0.0,
            dual_bound=0.0,
            duals=DualState.zeros(n_subchannels, n_users),
            converged=True,
            iterations=0,
        )

    @property
    def user_rates(self) -> np.ndarray:
        return self.rate.sum(axis=0)

    @property
    def total_power(self) -> float:
        return float(self.power.sum())

    def winners(self) -> np.ndarray:
        """Scheduled user of every subchannel, -1 where none."""
        if self.alpha.shape[1] == 0:
            return np.full(self.alpha.shape[0], -1)
        return np.where(self.alpha.any(axis=1), self.alpha.argmax(axis=1), -1)


def power_closed_form(
    alpha: ArrayOrFloat,
    beta: ArrayOrFloat,
    w: ArrayOrFloat,
    mu_k: ArrayOrFloat,
    nu: ArrayOrFloat,
    eta_n: ArrayOrFloat,
    tau: ArrayOrFloat,
    phi: ArrayOrFloat,
    epsilon: float,
    g: float = 0.25,
    tau_exponent: int = 1,
) -> ArrayOrFloat:
    """
    Lagrangian-optimal power of one (n, k) pair:

        p = alpha * ( g*((1-eps)*beta*w - mu) / (ln2*(nu + eta*tau^e*(1-beta)))
                      - 1/phi )^+

    Zero when phi is zero, the price is zero or the marginal value is not
    positive.
    """
    beta = np.asarray(beta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    value = (1.0 - epsilon) * beta * np.asarray(w, dtype=float) - np.asarray(mu_k)
    coupling = np.power(np.asarray(tau, dtype=float), tau_exponent) * (1.0 - beta)
    price = np.asarray(nu, dtype=float) + np.asarray(eta_n, dtype=float) * coupling
    with np.errstate(divide="ignore", invalid="ignore"):
        level = g * value / (LN2 * price) - 1.0 / phi
    valid = (phi > 0.0) & (price > 0.0) & (value > 0.0)
    power = np.asarray(alpha, dtype=float) * np.where(
        valid, np.maximum(np.nan_to_num(level, nan=0.0), 0.0), 0.0
    )
    return float(power) if power.ndim == 0 else power


def marginal_benefit(
    alpha: ArrayOrFloat,
    p: ArrayOrFloat,
    phi: ArrayOrFloat,
    beta: ArrayOrFloat,
    w: ArrayOrFloat,
    mu_k: ArrayOrFloat,
    epsilon: float,
    g: float = 0.25,
) -> ArrayOrFloat:
    """Marginal benefit of the bandwidth of one subchannel (alpha = 1 form)."""
    alpha = np.asarray(alpha, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        snr = np.where(
            alpha > 0.0,
            np.asarray(p, dtype=float) * np.asarray(phi, dtype=float) / alpha,
            0.0,
        )
    value = (1.0 - epsilon) * np.asarray(beta, dtype=float) * np.asarray(
        w, dtype=float
    ) - np.asarray(mu_k, dtype=float)
    bracket = np.log2(1.0 + snr) - snr / (LN2 * (1.0 + snr))
    benefit = g * value * bracket
    return float(benefit) if benefit.ndim == 0 else benefit


def assign_subchannel(X: ArrayLike) -> Optional[int]:
    """Index of the largest positive X (lowest index on ties), else None."""
    values = np.asarray(X, dtype=float)
    if values.size == 0:
        return None
    best = int(np.argmax(values))
    return best if values[best] > 0.0 else None


class _RelayDualSolver(DualSolver):
    def __init__(self, problem: RelayProblem, settings: SolverSettings) -> None:
        per_bit = problem.value_per_bit
        scale = float(per_bit.max())
        super().__init__(settings, problem.n_subchannels, problem.n_users, scale)
        budget = problem.power_budget
        self.problem = problem
        self.base = per_bit / scale
        self.phi = problem.phi * budget
        coeff = problem.interference_coeff
        self.raw_caps = np.divide(
            problem.I_bar,
            coeff * budget,
            out=np.full(coeff.shape, np.inf),
            where=coeff > 0.0,
        )
        self.caps = np.minimum(self.raw_caps, 1.0)
        self.budgets = problem.budgets
        self.g = problem.g
        self.rows = np.arange(problem.n_subchannels)

    def initial_nu(self) -> float:
        proxy = np.argmax(self.base * np.log2(1.0 + self.phi), axis=1)
        a = self.g * self.base[self.rows, proxy] / LN2
        level = water_level(a, self.phi[self.rows, proxy], self.caps, 1.0)
        return 1.0 / level if 0.0 < level < np.inf else 0.0

    def _powers(self, duals: DualState) -> tuple[np.ndarray, np.ndarray]:
        price = duals.nu + duals.eta[:, None]
        value = self.base - duals.mu[None, :]
        useful = (value > 0.0) & (self.phi > 0.0)
        with np.errstate(all="ignore"):
            stationary = self.g * value / (LN2 * price) - 1.0 / self.phi
            stationary = np.where(price > 0.0, stationary, np.inf)
            power = np.where(
                useful, np.clip(stationary, 0.0, self.caps[:, None]), 0.0
            )
            gain = self.g * value * np.log2(1.0 + power * self.phi) - price * power
        return power, np.where(useful, np.maximum(gain, 0.0), 0.0)

    def inner(self, duals: DualState) -> InnerSolution:
        power, values = self._powers(duals)
        winners = assigned_winners(values, duals.lambda_)
        active = winners >= 0
        chosen = np.where(active, winners, 0)
        p_sel = np.where(active, power[self.rows, chosen], 0.0)
        r_sel = np.where(
            active, rate_of(p_sel, self.phi[self.rows, chosen], self.g), 0.0
        )
        usage = np.bincount(
            chosen[active], weights=r_sel[active], minlength=self.n_flows
        )
        residuals = ConstraintResiduals(
            subchannel=1.0 - active.astype(float),
            power=1.0 - float(p_sel.sum()),
            interference=self.raw_caps - p_sel,
            flow=self.budgets - usage,
        )
        best = values.max(axis=1)
        finite_caps = np.isfinite(self.raw_caps)
        finite_budgets = np.isfinite(self.budgets)
        bound = (
            float(np.maximum(duals.lambda_, best).sum())
            + duals.nu
            + float(np.sum(duals.eta[finite_caps] * self.raw_caps[finite_caps]))
            + float(np.sum(duals.mu[finite_budgets] * self.budgets[finite_budgets]))
        )
        return InnerSolution(values, winners, residuals, bound)

    def recover(self, winners: np.ndarray) -> Recovery:
        n_subchannels = self.n_subchannels
        power = np.zeros(n_subchannels)
        rate = np.zeros(n_subchannels)
        active = np.flatnonzero(winners >= 0)
        if active.size == 0:
            return Recovery(0.0, power, rate)

        users = winners[active]
        base = self.base[active, users]
        phi = self.phi[active, users]
        caps = self.caps[active]
        a = self.g * base / LN2

        p = np.zeros(active.size)
        frozen = np.zeros(active.size, dtype=bool)
        frozen_users = np.zeros(self.n_flows, dtype=bool)
        remaining = 1.0
        for _ in range(self.n_flows + 1):
            free = ~frozen
            p[free] = weighted_water_fill(a[free], phi[free], caps[free], remaining)
            usage = np.bincount(
                users, weights=rate_of(p, phi, self.g), minlength=self.n_flows
            )
            over = (usage > self.budgets) & ~frozen_users
            if not np.any(over):
                break
            for k in np.flatnonzero(over):
                mine = users == k
                p[mine] = min_power_for_rate(
                    phi[mine], caps[mine], self.budgets[k], self.g
                )
                frozen |= mine
                frozen_users[k] = True
            remaining = max(0.0, 1.0 - float(p[frozen].sum()))

        total = p.sum()
        if total > 1.0:
            p = p / total
        power[active] = p
        rate[active] = rate_of(p, phi, self.g)
        return Recovery(float(base @ rate[active]), power, rate)


def solve_rs(
    problem: RelayProblem,
    settings: Optional[SolverSettings] = None,
    trace: Optional[list[dict[str, Any]]] = None,
) -> RsAllocation:
    """
    Allocate one relay cluster's subchannels, powers and rates.

    Raises:
        ValueError: if a rate budget is negative
    """
    settings = settings or SolverSettings()
    if np.any(problem.budgets < 0.0):
        raise ValueError("Rate budgets must be non-negative")

    n_subchannels, n_users = problem.n_subchannels, problem.n_users
    if (
        problem.power_budget <= 0.0
        or n_users == 0
        or n_subchannels == 0
        or not np.any(problem.budgets > 0.0)
        or float(problem.value_per_bit.max()) <= 0.0
    ):
        return RsAllocation.empty(n_subchannels, n_users)

    solver = _RelayDualSolver(problem, settings)
    outcome = solver.solve(trace)

    winners = outcome.winners
    recovery = outcome.recovery
    active = np.flatnonzero((winners >= 0) & (recovery.rate > 0.0))
    alpha = np.zeros((n_subchannels, n_users), dtype=int)
    power = np.zeros((n_subchannels, n_users))
    rate = np.zeros((n_subchannels, n_users))
    alpha[active, winners[active]] = 1
    power[active, winners[active]] = recovery.power[active] * problem.power_budget
    rate[active, winners[active]] = recovery.rate[active]

    objective = float(np.sum(problem.value_per_bit * rate))
    dual_bound = outcome.bound * solver.value_scale
    logger.debug(
        "Relay solve: objective={:.6g} bound={:.6g} iterations={} converged={}",
        objective,
        dual_bound,
        outcome.iterations,
        outcome.converged,
    )
    return RsAllocation(
        alpha=alpha,
        power=power,
        rate=rate,
        objective=objective,
        dual_bound=dual_bound,
        duals=outcome.duals.scaled(
            solver.value_scale, problem.power_budget, problem.interference_coeff
        ),
        converged=outcome.converged,
        iterations=outcome.iterations,
    )
