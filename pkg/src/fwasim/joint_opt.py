"""Hour-scale joint radio/energy optimization.

The objective is the hourly energy cost minus the RB revenue earned by the
slow loop over the same hour.  The binary storage-mode decisions relax to
[0, 1]; a majorize-minimize scheme adds a quadratic proximal penalty
around the previous iterate and minimizes the convex surrogate by
projected gradient descent on the box.  The relaxed solution rounds at
0.5 and is repaired against the energy model's feasibility rules.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .energy import (
    EnergyLedger,
    InfeasibleHourError,
    PriceConfig,
    StorageLimits,
    dispatch_hour,
    energy_cost,
)


@dataclass
class MmTrace:
    objective_values: list[float] = field(default_factory=list)
    step_norms: list[float] = field(default_factory=list)
    converged: bool = False

    @property
    def iterations(self) -> int:
        return len(self.objective_values)


@dataclass(frozen=True)
class HourInputs:
    """Frozen per-hour snapshot feeding the joint problem."""

    hour: int
    solar_kwh: float
    demand_kwh: float
    stored_level_kwh: float
    rb_revenue_mean: float


@dataclass
class JointProblem:
    """Relaxed storage decisions over a horizon of hours.

    Cost is affine in each hour's relaxed decision: z blends the
    pass-through cost (mode 0) with the discharge cost (mode 0 cost when
    discharge is infeasible, locking that hour to pass-through).
    """

    hours: list[HourInputs]
    prices: PriceConfig
    limits: StorageLimits
    penalty: float = 1.0
    cost_mode0: np.ndarray = field(init=False)
    cost_mode1: np.ndarray = field(init=False)
    discharge_ok: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        n = len(self.hours)
        self.cost_mode0 = np.zeros(n)
        self.cost_mode1 = np.zeros(n)
        self.discharge_ok = np.zeros(n, dtype=bool)
        for j, h in enumerate(self.hours):
            grid = max(h.demand_kwh - h.solar_kwh, 0.0)
            leftover = max(h.solar_kwh - h.demand_kwh, 0.0)
            charge = min(leftover, self.limits.charge_max_kwh - h.stored_level_kwh)
            surplus = leftover - charge
            self.cost_mode0[j] = energy_cost(grid, surplus, self.prices)
            ok = (
                h.stored_level_kwh >= h.demand_kwh
                and h.demand_kwh <= self.limits.discharge_max_kwh
                and h.demand_kwh > 0
            )
            self.discharge_ok[j] = ok
            self.cost_mode1[j] = 0.0 if ok else self.cost_mode0[j]

    def energy_cost_relaxed(self, z: np.ndarray) -> np.ndarray:
        return (1.0 - z) * self.cost_mode0 + z * self.cost_mode1

    def objective(self, z: np.ndarray) -> float:
        costs = self.energy_cost_relaxed(z)
        return float(
            sum(
                hourly_utility(costs[j], h.rb_revenue_mean, self.prices.rb_price)
                for j, h in enumerate(self.hours)
            )
        )

    def gradient(self, z: np.ndarray) -> np.ndarray:
        return self.cost_mode1 - self.cost_mode0


def hourly_utility(energy_cost_value: float, rb_revenue_mean: float, rb_price: float) -> float:
    """Joint figure of merit for one hour: cost minus RB revenue (to minimize)."""
    return energy_cost_value - rb_price * rb_revenue_mean


def joint_objective(
    z: np.ndarray | float,
    problem: JointProblem,
) -> float:
    """Energy cost minus RB revenue at the (possibly relaxed) decision."""
    z_arr = np.atleast_1d(np.asarray(z, dtype=float))
    if z_arr.shape[0] != len(problem.hours):
        raise ValueError("decision vector length must match the horizon")
    if np.any(z_arr < 0) or np.any(z_arr > 1):
        raise ValueError("decisions must lie in [0, 1]")
    return problem.objective(z_arr)


def mm_surrogate(
    z: np.ndarray,
    anchor: np.ndarray,
    penalty: float,
    objective: Callable[[np.ndarray], float],
    gradient: Callable[[np.ndarray], np.ndarray],
) -> tuple[float, np.ndarray]:
    """Proximal upper bound: objective + (penalty/2) ||z - anchor||^2.

    Equals the objective exactly at the anchor and majorizes it elsewhere
    for convex objectives; the gradient gains the penalty pull-back term.
    """
    if penalty <= 0:
        raise ValueError("penalty must be positive")
    diff = z - anchor
    value = objective(z) + 0.5 * penalty * float(diff @ diff)
    grad = gradient(z) + penalty * diff
    return value, grad


def _project_box(z: np.ndarray) -> np.ndarray:
    return np.clip(z, 0.0, 1.0)


def mm_solve(
    objective: Callable[[np.ndarray], float],
    gradient: Callable[[np.ndarray], np.ndarray],
    z0: np.ndarray,
    penalty: float = 1.0,
    max_iter: int = 200,
    tol: float = 1e-6,
    inner_iter: int = 100,
) -> tuple[np.ndarray, MmTrace]:
    """Majorize-minimize over the unit box.

    Each outer iteration anchors the quadratic surrogate at the current
    point and minimizes it by projected gradient descent with backtracking
    line search.  The penalty doubles if a step ever fails to descend
    (safeguard; cannot trigger for convex objectives).  Stops when the
    objective improves by less than ``tol``.
    """
    z = _project_box(np.asarray(z0, dtype=float).copy())
    trace = MmTrace()
    f_current = objective(z)

    for _ in range(max_iter):
        anchor = z.copy()

        zj = z.copy()
        for _ in range(inner_iter):
            val, grad = mm_surrogate(zj, anchor, penalty, objective, gradient)
            step = 1.0
            improved = False
            for _ in range(30):
                candidate = _project_box(zj - step * grad)
                cand_val, _ = mm_surrogate(candidate, anchor, penalty, objective, gradient)
                if cand_val <= val - 1e-12 * max(1.0, abs(val)):
                    zj = candidate
                    improved = True
                    break
                step *= 0.5
            if not improved:
                break

        f_next = objective(zj)
        if f_next > f_current + 1e-9:
            penalty *= 2.0
            trace.objective_values.append(f_current)
            trace.step_norms.append(0.0)
            continue

        trace.objective_values.append(f_next)
        trace.step_norms.append(float(np.linalg.norm(zj - z)))
        converged = abs(f_next - f_current) < tol
        z, f_current = zj, f_next
        if converged:
            trace.converged = True
            break

    return z, trace


def round_decisions(problem: JointProblem, z: np.ndarray) -> np.ndarray:
    """Threshold the relaxed decisions at 0.5 and repair infeasible hours."""
    binary = (np.asarray(z) >= 0.5).astype(int)
    for j in range(len(binary)):
        if binary[j] == 1 and not problem.discharge_ok[j]:
            binary[j] = 0
    return binary


@dataclass(frozen=True)
class HourSolution:
    hour: int
    storage_mode: int
    objective: float
    energy_cost: float
    rb_revenue_mean: float
    iterations: int
    converged: bool
    ledger: EnergyLedger


def solve_hour(
    inputs: HourInputs,
    prices: PriceConfig,
    limits: StorageLimits,
    penalty: float = 1.0,
    max_iter: int = 200,
    tol: float = 1e-6,
) -> HourSolution:
    """Optimize one hour's storage mode and execute the dispatch.

    Raises ``InfeasibleHourError`` if even the repaired rounding cannot be
    dispatched.
    """
    problem = JointProblem([inputs], prices, limits, penalty)
    # feasible start at pass-through, so a cost tie keeps solar usable
    z0 = np.array([0.0])
    z_star, trace = mm_solve(
        problem.objective, problem.gradient, z0, penalty, max_iter, tol
    )
    mode = int(round_decisions(problem, z_star)[0])
    try:
        ledger = dispatch_hour(
            inputs.hour,
            inputs.solar_kwh,
            inputs.demand_kwh,
            inputs.stored_level_kwh,
            prices,
            limits,
            force_mode=mode,
        )
    except InfeasibleHourError:
        raise
    objective = hourly_utility(ledger.cost, inputs.rb_revenue_mean, prices.rb_price)
    return HourSolution(
        hour=inputs.hour,
        storage_mode=ledger.storage_mode,
        objective=objective,
        energy_cost=ledger.cost,
        rb_revenue_mean=inputs.rb_revenue_mean,
        iterations=trace.iterations,
        converged=trace.converged,
        ledger=ledger,
    )
