"""
GoodputCurve.py
===============

Relay value functions fed back to the base station each frame.

A ``GoodputCurve`` maps the backhaul bits r granted to a relay to the
largest conditional weighted goodput G(r) its cluster can deliver with
them. It is concave, nondecreasing, piecewise linear, starts at the origin
and is flat after its last breakpoint.

Construction
------------
- ``build_curve_general``: upper concave envelope of per-class operating
  points (each point is the best a single QoS class can do with unlimited
  backhaul). Points below the envelope or past the first maximum are
  dropped.
- ``build_curve_pfs``: the two-segment shortcut for proportional fair
  weights with many users per cluster (equal power per subchannel in
  proportion to availability, best-weighted-rate user per subchannel).

Plans
-----
Every breakpoint records the per-user phase-two rates of the allocation
that produced it. ``plan_at`` interpolates them along the curve; the base
station uses it to split a relay's backhaul packet between users.

Feedback
--------
A curve is fed back as its breakpoint list, two reals per non-origin
breakpoint.
"""

from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from numpy.typing import ArrayLike

from src.solvers.RsSolver import RelayProblem, solve_rs
from src.solvers.Subgradient import SolverSettings

ArrayOrFloat = Union[float, np.ndarray]
_CONCAVITY_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class GoodputCurve:
    rates: np.ndarray
    values: np.ndarray
    plans: np.ndarray = field(default_factory=lambda: np.zeros((1, 0)))

    def __post_init__(self) -> None:
        rates = np.asarray(self.rates, dtype=float).ravel()
        values = np.asarray(self.values, dtype=float).ravel()
        plans = np.asarray(self.plans, dtype=float)
        if plans.ndim != 2 or plans.shape[0] != rates.size:
            plans = np.zeros((rates.size, plans.shape[-1] if plans.ndim else 0))
        object.__setattr__(self, "rates", rates)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "plans", plans)
        self._validate()

    def _validate(self) -> None:
        if self.rates.size == 0 or self.rates.size != self.values.size:
            raise ValueError("A curve needs matching, non-empty breakpoint lists")
        if self.rates[0] != 0.0 or self.values[0] != 0.0:
            raise ValueError("A curve must start at the origin")
        if np.any(np.diff(self.rates) <= 0.0):
            raise ValueError("Breakpoint rates must be strictly increasing")
        if np.any(np.diff(self.values) < 0.0):
            raise ValueError("Breakpoint values must be nondecreasing")
        slopes = self.slopes
        if slopes.size > 1:
            tolerance = _CONCAVITY_TOL * np.maximum(1.0, np.abs(slopes[:-1]))
            if np.any(slopes[1:] > slopes[:-1] + tolerance):
                raise ValueError("Curve segments must have decreasing slopes")

    @classmethod
    def zero(cls, n_users: int = 0) -> "GoodputCurve":
        return cls(np.zeros(1), np.zeros(1), np.zeros((1, n_users)))

    # --- Shape ---

    @property
    def slopes(self) -> np.ndarray:
        return np.diff(self.values) / np.diff(self.rates)

    @property
    def breakpoints(self) -> list[tuple[float, float]]:
        return [(float(r), float(g)) for r, g in zip(self.rates, self.values)]

    @property
    def saturation_rate(self) -> float:
        return float(self.rates[-1])

    @property
    def max_value(self) -> float:
        return float(self.values[-1])

    @property
    def n_users(self) -> int:
        return int(self.plans.shape[1])

    def is_zero(self) -> bool:
        return self.max_value <= 0.0

    # --- Evaluation ---

    def eval(self, r: ArrayLike) -> ArrayOrFloat:
        rate = np.asarray(r, dtype=float)
        if np.any(rate < 0.0):
            raise ValueError(f"Rate must be non-negative, got {r}")
        result = np.interp(rate, self.rates, self.values)
        return float(result) if np.ndim(result) == 0 else result

    def slope(self, r: float) -> float:
        """Right-derivative at r (0 past saturation)."""
        if r < 0.0:
            raise ValueError(f"Rate must be non-negative, got {r}")
        index = int(np.searchsorted(self.rates, r, side="right")) - 1
        slopes = self.slopes
        if index >= slopes.size:
            return 0.0
        return float(slopes[index])

    def plan_at(self, r: float) -> np.ndarray:
        """Per-user planned rates at r, interpolated between breakpoints."""
        rate = min(max(r, 0.0), self.saturation_rate)
        index = int(np.searchsorted(self.rates, rate, side="right")) - 1
        if index >= self.rates.size - 1:
            return self.plans[-1].copy()
        left, right = self.rates[index], self.rates[index + 1]
        weight = (rate - left) / (right - left)
        return (1.0 - weight) * self.plans[index] + weight * self.plans[index + 1]

    # --- Export ---

    def feedback_reals(self) -> int:
        return 2 * (self.rates.size - 1)

    def trace_rows(self, cluster: int) -> list[dict[str, float]]:
        return [
            {"cluster": cluster, "breakpoint": i, "rate": r, "value": g}
            for i, (r, g) in enumerate(self.breakpoints)
        ]


def _scaled_plan(plan: np.ndarray, rate: float) -> np.ndarray:
    total = plan.sum()
    if total <= 0.0:
        return np.zeros_like(plan)
    return plan * (rate / total)


Point = tuple[float, float]


def _cross(o: Point, a: Point, b: Point) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def build_curve_general(
    class_points: Sequence[tuple[float, float]],
    plans: Optional[Sequence[ArrayLike]] = None,
) -> GoodputCurve:
    """
    Upper concave envelope of the origin and the class points, flat after
    the first point reaching the largest value.

    ``plans`` (one per point) are the per-user rates of each class
    allocation; without them every point is its own single pseudo-user.
    """
    points = [(float(r), float(g)) for r, g in class_points]
    if plans is None:
        plan_rows = [np.array([r]) for r, _ in points]
    else:
        plan_rows = [np.asarray(p, dtype=float).ravel() for p in plans]
        if len(plan_rows) != len(points):
            raise ValueError("Need one plan per class point")
    n_users = plan_rows[0].size if plan_rows else 0

    useful = [i for i, (r, g) in enumerate(points) if r > 0.0 and g > 0.0]
    if not useful:
        return GoodputCurve.zero(n_users)

    # Largest value per rate, then cut at the first point with the overall max
    useful.sort(key=lambda i: (points[i][0], -points[i][1]))
    best_per_rate: dict[float, int] = {}
    for i in useful:
        best_per_rate.setdefault(points[i][0], i)
    ordered = sorted(best_per_rate.values(), key=lambda i: points[i][0])
    peak = max(points[i][1] for i in ordered)
    cut = next(k for k, i in enumerate(ordered) if points[i][1] >= peak)
    ordered = ordered[: cut + 1]

    hull: list[int] = []
    origin = (0.0, 0.0)
    for i in ordered:
        while hull:
            before = points[hull[-2]] if len(hull) > 1 else origin
            if _cross(before, points[hull[-1]], points[i]) >= 0.0:
                hull.pop()
            else:
                break
        hull.append(i)

    rates = np.array([0.0] + [points[i][0] for i in hull])
    values = np.array([0.0] + [points[i][1] for i in hull])
    rows = [np.zeros(n_users)]
    rows += [_scaled_plan(plan_rows[i], points[i][0]) for i in hull]
    return GoodputCurve(rates, values, np.vstack(rows))


def compute_class_points(
    problem: RelayProblem,
    classes: Sequence[ArrayLike],
    settings: Optional[SolverSettings] = None,
    include_joint: bool = False,
) -> tuple[list[tuple[float, float]], list[np.ndarray]]:
    """
    Best (total rate, weighted goodput) of every QoS class on its own.

    Each class is solved with unlimited backhaul and every other user's
    weight set to zero. With ``include_joint`` the all-users point is
    appended. Returns the points and the per-user rate plan of each.
    """
    settings = settings or SolverSettings()
    unlimited = np.full(problem.n_users, np.inf)
    members = [np.asarray(c, dtype=int).ravel() for c in classes]
    if include_joint:
        members.append(np.arange(problem.n_users))

    points: list[tuple[float, float]] = []
    plans: list[np.ndarray] = []
    for users in members:
        weights = np.zeros(problem.n_users)
        weights[users] = problem.weights[users]
        allocation = solve_rs(
            problem.with_weights(weights, unlimited), settings
        )
        rates = allocation.user_rates
        points.append((float(rates.sum()), allocation.objective))
        plans.append(rates)
    return points, plans


def build_curve_pfs(
    phi: np.ndarray,
    beta: np.ndarray,
    weights: np.ndarray,
    power_budget: float,
    epsilon: float,
    g: float = 0.25,
    long_term_gains: Optional[np.ndarray] = None,
) -> GoodputCurve:
    """
    Two-segment proportional-fair curve of one relay cluster.

    Power is spread over subchannels in proportion to availability; each
    subchannel goes to the user with the largest weighted rate (lowest index
    on ties). ``long_term_gains`` multiplies the effective gain once more
    for the literal form of the shortcut.
    """
    phi = np.atleast_2d(np.asarray(phi, dtype=float))
    beta = np.asarray(beta, dtype=float)
    weights = np.asarray(weights, dtype=float)
    n_users = phi.shape[1]
    if n_users == 0:
        return GoodputCurve.zero(0)

    total_beta = beta.sum()
    if total_beta > 0.0:
        power = beta * power_budget / total_beta
    else:
        power = np.zeros_like(beta)

    gain = phi if long_term_gains is None else phi * long_term_gains
    rates = g * np.log2(1.0 + power[:, None] * gain)
    winners = np.argmax(weights[None, :] * rates, axis=1)
    winner_rates = rates[np.arange(rates.shape[0]), winners]

    plan = np.bincount(winners, weights=winner_rates, minlength=n_users)
    total_rate = float(winner_rates.sum())
    max_value = float(
        np.sum(weights[winners] * beta * (1.0 - epsilon) * winner_rates)
    )
    if total_rate <= 0.0 or max_value <= 0.0:
        return GoodputCurve.zero(n_users)
    return GoodputCurve(
        np.array([0.0, total_rate]),
        np.array([0.0, max_value]),
        np.vstack((np.zeros(n_users), plan)),
    )
