"""
Subgradient.py
==============

Machinery shared by the relay and base-station dual solvers.

Responsibilities
----------------
- Hold the Lagrange multipliers (``DualState``) and the constraint
  residuals they are driven by (``ConstraintResiduals``).
- Perform one projected subgradient step with the diminishing step size
  step0 / sqrt(i).
- Provide the water-filling primitives used for the warm start and for
  primal recovery once the subchannel winners are frozen.
- Carry the solver settings taken from ``ScenarioConfig``.

Residual Convention
-------------------
Every residual is written as (budget - usage) and every multiplier is
updated as [multiplier - step * residual]^+, so overuse raises the price
and an unbounded budget (infinite residual) projects its multiplier to 0.

Units
-----
The solvers work in normalised units: powers are fractions of the budget
and objective values are divided by the largest weight-per-bit in the
problem. ``DualState`` instances returned to callers are converted back.
"""

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, replace
from typing import Any, Optional

import numpy as np

from src.ScenarioConfig import ScenarioConfig

LN2 = math.log(2.0)
_BISECTION_STEPS = 100


@dataclass(frozen=True)
class SolverSettings:
    step0: float = 1.0
    max_iter: int = 5000
    tol: float = 1e-5
    gap_tol: float = 1e-3
    polish_candidates: int = 3
    check_every: int = 50

    @classmethod
    def from_config(cls, config: ScenarioConfig) -> "SolverSettings":
        return cls(
            step0=config.step0,
            max_iter=config.max_iter,
            tol=config.tol,
            gap_tol=config.gap_tol,
            polish_candidates=config.polish_candidates,
        )


@dataclass(frozen=True)
class DualState:
    lambda_: np.ndarray  # (N,) subchannel
    nu: float            # total power
    eta: np.ndarray      # (N,) interference
    mu: np.ndarray       # (K,) flow balance (empty at the BS)
    iteration: int = 0
    step0: float = 1.0

    @classmethod
    def zeros(
        cls, n_subchannels: int, n_users: int, step0: float = 1.0
    ) -> "DualState":
        return cls(
            lambda_=np.zeros(n_subchannels),
            nu=0.0,
            eta=np.zeros(n_subchannels),
            mu=np.zeros(n_users),
            step0=step0,
        )

    def max_change(self, other: "DualState") -> float:
        changes = [abs(self.nu - other.nu)]
        for mine, theirs in (
            (self.lambda_, other.lambda_),
            (self.eta, other.eta),
            (self.mu, other.mu),
        ):
            if mine.size:
                changes.append(float(np.max(np.abs(mine - theirs))))
        return max(changes)

    def scaled(
        self,
        value_scale: float,
        power_scale: float,
        eta_scale: Optional[np.ndarray] = None,
    ) -> "DualState":
        """Convert normalised multipliers back to physical units."""
        eta = self.eta * value_scale / power_scale
        if eta_scale is not None:
            eta = np.divide(
                eta, eta_scale, out=np.zeros_like(eta), where=eta_scale > 0
            )
        return replace(
            self,
            lambda_=self.lambda_ * value_scale,
            nu=self.nu * value_scale / power_scale,
            eta=eta,
            mu=self.mu * value_scale,
        )


@dataclass(frozen=True)
class ConstraintResiduals:
    subchannel: np.ndarray    # 1 - sum_k alpha
    power: float              # budget - total power
    interference: np.ndarray  # cap - subchannel power
    flow: np.ndarray          # rate budget - scheduled rate


def step_size(step0: float, i: int) -> float:
    return step0 / math.sqrt(i)


def _project(values: np.ndarray, step: float, residual: np.ndarray) -> np.ndarray:
    with np.errstate(invalid="ignore"):
        updated = values - step * residual
    return np.maximum(np.nan_to_num(updated, nan=0.0, neginf=0.0), 0.0)


def subgradient_step(
    duals: DualState,
    residuals: ConstraintResiduals,
    i: int,
) -> DualState:
    """
    One projected subgradient update at iteration ``i`` (1-based).

    Raises:
        ValueError: if i < 1
    """
    if i < 1:
        raise ValueError(f"Iteration index must be >= 1, got {i}")
    step = step_size(duals.step0, i)
    nu = _project(np.array([duals.nu]), step, np.array([residuals.power]))
    return DualState(
        lambda_=_project(duals.lambda_, step, residuals.subchannel),
        nu=float(nu[0]),
        eta=_project(duals.eta, step, residuals.interference),
        mu=_project(duals.mu, step, residuals.flow),
        iteration=i,
        step0=duals.step0,
    )


def _fill(
    a: np.ndarray, inv_phi: np.ndarray, caps: np.ndarray, level: float
) -> np.ndarray:
    return np.clip(a * level - inv_phi, 0.0, caps)


def _inverse_gain(phi: np.ndarray) -> np.ndarray:
    return np.divide(
        1.0, phi, out=np.full(phi.shape, np.inf), where=phi > 0.0
    )


def weighted_water_fill(
    a: np.ndarray,
    phi: np.ndarray,
    caps: np.ndarray,
    budget: float,
) -> np.ndarray:
    """
    Powers p_n = clip(a_n * L - 1/phi_n, 0, cap_n) with the level L chosen
    so the total equals ``budget`` (or every entry sits at its cap).

    The returned powers never exceed the budget.
    """
    a = np.asarray(a, dtype=float)
    phi = np.asarray(phi, dtype=float)
    caps = np.broadcast_to(np.asarray(caps, dtype=float), a.shape)
    if a.size == 0 or budget <= 0.0:
        return np.zeros(a.shape)

    inv_phi = _inverse_gain(phi)
    useful = (a > 0.0) & np.isfinite(inv_phi) & (caps > 0.0)
    if not np.any(useful):
        return np.zeros(a.shape)
    # No single entry can exceed the budget
    ceiling = np.where(useful, np.minimum(caps, budget), 0.0)
    if ceiling.sum() <= budget:
        return ceiling.copy()

    a_u = np.where(useful, a, 0.0)
    inv_u = np.where(useful, inv_phi, 0.0)
    hi = float(np.max((ceiling[useful] + inv_u[useful]) / a_u[useful]))
    lo = 0.0
    for _ in range(_BISECTION_STEPS):
        mid = 0.5 * (lo + hi)
        if _fill(a_u, inv_u, ceiling, mid).sum() > budget:
            hi = mid
        else:
            lo = mid
    return _fill(a_u, inv_u, ceiling, lo)


def water_level(
    a: np.ndarray, phi: np.ndarray, caps: np.ndarray, budget: float
) -> float:
    """Level L reached by ``weighted_water_fill`` (inf when every cap binds)."""
    powers = weighted_water_fill(a, phi, caps, budget)
    active = powers > 0.0
    if not np.any(active):
        return 0.0
    caps = np.broadcast_to(np.asarray(caps, dtype=float), powers.shape)
    interior = active & (powers < caps)
    if not np.any(interior):
        return math.inf
    inv_phi = _inverse_gain(np.asarray(phi, dtype=float))
    n = int(np.flatnonzero(interior)[0])
    return float((powers[n] + inv_phi[n]) / np.asarray(a, dtype=float)[n])


def rate_of(power: np.ndarray, phi: np.ndarray, g: float) -> np.ndarray:
    return g * np.log2(1.0 + power * phi)


def min_power_for_rate(
    phi: np.ndarray,
    caps: np.ndarray,
    target: float,
    g: float,
) -> np.ndarray:
    """
    Least total power delivering ``target`` bits over the given subchannels.

    Returns the caps when even they fall short of the target. The delivered
    rate never exceeds the target.
    """
    phi = np.asarray(phi, dtype=float)
    caps = np.broadcast_to(np.asarray(caps, dtype=float), phi.shape)
    if phi.size == 0 or target <= 0.0:
        return np.zeros(phi.shape)
    if rate_of(caps, phi, g).sum() <= target:
        return caps.copy()

    ones = np.ones(phi.shape)
    inv_phi = _inverse_gain(phi)
    finite = np.isfinite(inv_phi)
    inv_u = np.where(finite, inv_phi, 0.0)
    with np.errstate(over="ignore"):
        alone = np.expm1(target / g * LN2) * inv_u
    ceiling = np.where(finite, np.minimum(caps, alone), 0.0)
    hi = float(np.max(ceiling + inv_u))
    lo = 0.0
    for _ in range(_BISECTION_STEPS):
        mid = 0.5 * (lo + hi)
        if rate_of(_fill(ones, inv_u, ceiling, mid), phi, g).sum() > target:
            hi = mid
        else:
            lo = mid
    return _fill(ones, inv_u, ceiling, lo)


@dataclass(frozen=True)
class InnerSolution:
    """Maximiser of the Lagrangian at fixed multipliers (normalised units)."""

    values: np.ndarray  # (N, E) Lagrangian value of giving n to entity e
    winners: np.ndarray  # (N,) winning entity, -1 for none
    residuals: ConstraintResiduals
    bound: float


@dataclass(frozen=True)
class Recovery:
    objective: float
    power: np.ndarray  # (N,) power of each subchannel's winner
    rate: np.ndarray  # (N,)


@dataclass(frozen=True)
class DualOutcome:
    winners: np.ndarray
    recovery: Recovery
    bound: float
    duals: DualState
    converged: bool
    iterations: int


class DualSolver(ABC):
    """
    Projected-subgradient dual loop with primal recovery.

    Subclasses describe one problem through ``inner`` (the Lagrangian
    maximiser at given multipliers) and ``recover`` (the best feasible
    powers and rates once the subchannel winners are fixed).
    """

    def __init__(
        self,
        settings: SolverSettings,
        n_subchannels: int,
        n_flows: int,
        value_scale: float = 1.0,
    ) -> None:
        self.settings = settings
        self.n_subchannels = n_subchannels
        self.n_flows = n_flows
        self.value_scale = value_scale
        self._cache: dict[bytes, Recovery] = {}

    @abstractmethod
    def inner(self, duals: DualState) -> InnerSolution:
        pass

    @abstractmethod
    def recover(self, winners: np.ndarray) -> Recovery:
        pass

    def initial_nu(self) -> float:
        return 0.0

    def evaluate(self, winners: np.ndarray) -> Recovery:
        key = np.asarray(winners, dtype=np.int64).tobytes()
        if key not in self._cache:
            self._cache[key] = self.recover(np.asarray(winners, dtype=int))
        return self._cache[key]

    def solve(self, trace: Optional[list[dict[str, Any]]] = None) -> DualOutcome:
        settings = self.settings
        duals = replace(
            DualState.zeros(self.n_subchannels, self.n_flows, settings.step0),
            nu=self.initial_nu(),
        )
        best_inner: Optional[InnerSolution] = None
        best_duals = duals
        best_primal: Optional[tuple[float, np.ndarray]] = None
        converged = False
        iteration = 0
        inner = self.inner(duals)

        for iteration in range(1, settings.max_iter + 1):
            inner = self.inner(duals)
            if best_inner is None or inner.bound < best_inner.bound:
                best_inner, best_duals = inner, duals
            if trace is not None:
                trace.append(self._trace_row(iteration, duals, inner))

            if iteration % settings.check_every == 0:
                recovered = self.evaluate(inner.winners)
                if best_primal is None or recovered.objective > best_primal[0]:
                    best_primal = (recovered.objective, inner.winners)
                gap = best_inner.bound - best_primal[0]
                if gap <= settings.gap_tol * max(abs(best_inner.bound), 1e-12):
                    converged = True
                    break

            updated = subgradient_step(duals, inner.residuals, iteration)
            change = updated.max_change(duals)
            duals = updated
            if change < settings.tol:
                converged = True
                break

        if best_inner is None:
            best_inner = inner

        starts = [best_inner.winners, inner.winners]
        if best_primal is not None:
            starts.append(best_primal[1])
        start = max(starts, key=lambda w: self.evaluate(w).objective)
        winners = self.polish(start, best_inner.values)
        return DualOutcome(
            winners=winners,
            recovery=self.evaluate(winners),
            bound=best_inner.bound,
            duals=best_duals,
            converged=converged,
            iterations=iteration,
        )

    def polish(self, winners: np.ndarray, values: np.ndarray) -> np.ndarray:
        """
        Local search over single-subchannel reassignments (to one of the
        best ``polish_candidates`` entities, or to nobody) and pairwise
        swaps, accepting strict improvements only.
        """
        winners = np.array(winners, dtype=int)
        n_subchannels = winners.size
        top = np.argsort(-values, axis=1, kind="stable")
        top = top[:, : self.settings.polish_candidates]
        best = self.evaluate(winners).objective

        for _ in range(n_subchannels + 1):
            improved = False
            for n in range(n_subchannels):
                for entity in [*top[n].tolist(), -1]:
                    if entity == winners[n]:
                        continue
                    trial = winners.copy()
                    trial[n] = entity
                    objective = self.evaluate(trial).objective
                    if objective > best + 1e-12:
                        winners, best, improved = trial, objective, True
            for first in range(n_subchannels):
                for second in range(first + 1, n_subchannels):
                    if winners[first] == winners[second]:
                        continue
                    trial = winners.copy()
                    trial[[first, second]] = trial[[second, first]]
                    objective = self.evaluate(trial).objective
                    if objective > best + 1e-12:
                        winners, best, improved = trial, objective, True
            if not improved:
                break
        return winners

    def _trace_row(
        self, iteration: int, duals: DualState, inner: InnerSolution
    ) -> dict[str, Any]:
        return {
            "iteration": iteration,
            "dual_bound": inner.bound * self.value_scale,
            "nu": duals.nu,
            "lambda_max": float(duals.lambda_.max(initial=0.0)),
            "eta_max": float(duals.eta.max(initial=0.0)),
            "mu_max": float(duals.mu.max(initial=0.0)),
            "power_residual": inner.residuals.power,
            "assigned": int(np.count_nonzero(inner.winners >= 0)),
        }


def assigned_winners(values: np.ndarray, lambda_: np.ndarray) -> np.ndarray:
    """Best entity per subchannel when its value beats the subchannel price."""
    if values.shape[1] == 0:
        return np.full(values.shape[0], -1)
    best = np.argmax(values, axis=1)
    top = values[np.arange(values.shape[0]), best]
    return np.where((top > 0.0) & (top > lambda_), best, -1)
