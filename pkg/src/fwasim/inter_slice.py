"""Slow closed loop: RB distribution to vO-DUs and slices.

Runs every 10 ms to 1 s.  The total RB pool splits equally across vO-DUs;
slices are placed round-robin and seeded with their profile grants.  Each
epoch the loop classifies every slice's grant-minus-demand gap, rescales
grants with the scaling factor reported by the fast loop, and trims
proportionally whenever the scaled grants overflow the vO-DU budget.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

from .domain import ServiceProfile
from .intra_slice import Loop1Report, PenaltyWeights


class Loop2Action(enum.Enum):
    SCALE_UP = "scale_up"
    SCALE_DOWN = "scale_down"
    TERMINATE = "terminate"
    KEEP = "keep"


LOOP2_ACTIONS = (
    Loop2Action.SCALE_UP,
    Loop2Action.SCALE_DOWN,
    Loop2Action.TERMINATE,
    Loop2Action.KEEP,
)


@dataclass
class VoduBudget:
    """One vO-DU's RB budget and its per-slice grants."""

    vodu_id: int
    rb_budget: int
    slice_grants: dict[int, int] = field(default_factory=dict)
    utilization_history: list[float] = field(default_factory=list)

    def granted_total(self) -> int:
        return sum(self.slice_grants.values())

    def utilization(self) -> float:
        if self.rb_budget <= 0:
            return 0.0
        return self.granted_total() / self.rb_budget


@dataclass(frozen=True)
class Loop2Report:
    epoch: int
    vodu_id: int
    slice_id: int
    grant: int
    utilization: float
    reward_vodu: float
    reward_main: float
    action: Loop2Action


def initial_distribution(
    total_rb: int,
    vodu_ids: Sequence[int],
    services: dict[int, ServiceProfile],
) -> tuple[list[VoduBudget], dict[int, tuple[int, int]]]:
    """Equal RB split across vO-DUs with cyclic slice placement.

    Slice c of service c lands on vO-DU ``vodu_ids[c mod D]`` and opens
    with the service profile's initial grant.  Returns the budgets and the
    slice -> (service, vodu) map.  Grants exceeding a budget are a
    configuration error, not silently clamped.
    """
    if not vodu_ids:
        raise ValueError("at least one vO-DU required")
    share = total_rb // len(vodu_ids)
    budgets = {d: VoduBudget(vodu_id=d, rb_budget=share) for d in vodu_ids}
    slice_map: dict[int, tuple[int, int]] = {}
    for idx, service_id in enumerate(sorted(services)):
        vodu_id = vodu_ids[idx % len(vodu_ids)]
        grant = services[service_id].initial_rb
        budgets[vodu_id].slice_grants[idx] = grant
        slice_map[idx] = (service_id, vodu_id)
    for budget in budgets.values():
        if budget.granted_total() > budget.rb_budget:
            raise ValueError(
                f"vodu {budget.vodu_id}: initial grants {budget.granted_total()} "
                f"exceed budget {budget.rb_budget}"
            )
    return [budgets[d] for d in vodu_ids], slice_map


def select_vodu_action(rb_gap: int, grant: int) -> Loop2Action:
    """Classify a slice's grant-minus-demand gap.

    Negative gap: demand outgrew the grant, scale up.  Gap equal to the
    whole grant: nothing was used, terminate.  Zero gap: exact fit, keep.
    Any other positive gap: slack, scale down.
    """
    if rb_gap < 0:
        return Loop2Action.SCALE_UP
    if rb_gap == grant:
        return Loop2Action.TERMINATE
    if rb_gap == 0:
        return Loop2Action.KEEP
    return Loop2Action.SCALE_DOWN


def apply_vodu_action(
    budget: VoduBudget,
    slice_id: int,
    action: Loop2Action,
    scale: float,
) -> VoduBudget:
    """Rescale one slice's grant, then hold the budget cap.

    Scale up/down multiply by the fast loop's scaling factor (floored),
    terminate zeroes the grant, keep leaves it.  If the grants then
    overflow the budget they are proportionally floor-trimmed, with the
    remaining RBs handed out one each in ascending slice id.
    """
    grants = dict(budget.slice_grants)
    if slice_id not in grants:
        raise KeyError(f"slice {slice_id} not hosted by vO-DU {budget.vodu_id}")
    if action in (Loop2Action.SCALE_UP, Loop2Action.SCALE_DOWN):
        grants[slice_id] = math.floor(scale * grants[slice_id])
    elif action is Loop2Action.TERMINATE:
        grants[slice_id] = 0
    total = sum(grants.values())
    if total > budget.rb_budget:
        grants = _proportional_trim(grants, budget.rb_budget)
    return VoduBudget(
        vodu_id=budget.vodu_id,
        rb_budget=budget.rb_budget,
        slice_grants=grants,
        utilization_history=budget.utilization_history,
    )


def _proportional_trim(grants: dict[int, int], cap: int) -> dict[int, int]:
    total = sum(grants.values())
    trimmed = {c: math.floor(g * cap / total) for c, g in grants.items()}
    leftover = cap - sum(trimmed.values())
    for c in sorted(trimmed):
        if leftover <= 0:
            break
        if trimmed[c] < grants[c]:
            trimmed[c] += 1
            leftover -= 1
    return trimmed


def reward_loop2(
    mean_utilization: float,
    active_slices: int,
    rb_budget: int,
    granted_total: int,
    rb_gap: int,
    delta_slice: float = 1.0,
    delta_rb: float = 1.0,
) -> float:
    """Slow-loop reward: utilization plus slice-count and budget slack terms."""
    return (
        mean_utilization
        + delta_slice * (1.0 - active_slices)
        + delta_rb * (rb_budget - granted_total + rb_gap)
    )


def main_reward(reward_vodu: float, reward_slice: float, balance: float) -> float:
    """Blend of the two loop rewards; ``balance`` weighs the vO-DU side."""
    if not 0.0 <= balance <= 1.0:
        raise ValueError(f"balance must lie in [0, 1], got {balance}")
    return balance * reward_vodu + (1.0 - balance) * reward_slice


def run_loop2_epoch(
    budgets: list[VoduBudget],
    loop1_reports: list[Loop1Report],
    epoch: int,
    balance: float = 0.5,
    delta_slice: float = 1.0,
    delta_rb: float = 1.0,
    initial_grants: dict[int, int] | None = None,
    choose_action: Callable[[VoduBudget, int, Loop1Report], Loop2Action] | None = None,
    learner_step: Callable[[], None] | None = None,
) -> tuple[list[VoduBudget], list[Loop2Report]]:
    """One slow-loop epoch: act on every reported slice, then learn.

    Without fast-loop feedback every budget stays untouched.  A terminated
    slice (grant 0) whose fast loop reports renewed pressure (scaling
    factor above 1) is revived with its initial grant, capped by the free
    budget; termination is temporary by design.
    """
    by_vodu: dict[int, VoduBudget] = {b.vodu_id: b for b in budgets}
    reports: list[Loop2Report] = []

    for rep in sorted(loop1_reports, key=lambda r: (r.vodu_id, r.slice_id)):
        budget = by_vodu.get(rep.vodu_id)
        if budget is None or rep.slice_id not in budget.slice_grants:
            continue
        grant = budget.slice_grants[rep.slice_id]
        if grant == 0 and rep.scale > 1.0 and initial_grants:
            seed = initial_grants.get(rep.slice_id, 0)
            free = budget.rb_budget - budget.granted_total()
            revived = min(seed, free)
            if revived > 0:
                budget.slice_grants[rep.slice_id] = revived
                grant = revived
        action = choose_action(budget, rep.slice_id, rep) if choose_action else None
        if action is None:
            action = select_vodu_action(rep.rb_gap, grant)
        budget = apply_vodu_action(budget, rep.slice_id, action, rep.scale)
        # Liveness: an exactly-filled pool reports zero gap, so the table
        # keeps a grant that the fast loop is asking to raise, and integer
        # floors can stall small grants.  Under pressure (scaling factor
        # above 1) the grant must make progress while free budget exists.
        if rep.scale > 1.0 and action is not Loop2Action.TERMINATE:
            new_grant = budget.slice_grants[rep.slice_id]
            free = budget.rb_budget - budget.granted_total()
            if new_grant <= grant and free > 0:
                target = min(math.ceil(rep.scale * max(grant, 1)), grant + free)
                budget.slice_grants[rep.slice_id] = max(new_grant, target)
        by_vodu[rep.vodu_id] = budget

        utilization = budget.utilization()
        budget.utilization_history.append(utilization)
        active = sum(1 for g in budget.slice_grants.values() if g > 0)
        reward_vodu = reward_loop2(
            utilization,
            active,
            budget.rb_budget,
            budget.granted_total(),
            rep.rb_gap,
            delta_slice,
            delta_rb,
        )
        reward_main = main_reward(reward_vodu, rep.reward, balance)
        reports.append(
            Loop2Report(
                epoch=epoch,
                vodu_id=budget.vodu_id,
                slice_id=rep.slice_id,
                grant=budget.slice_grants[rep.slice_id],
                utilization=utilization,
                reward_vodu=reward_vodu,
                reward_main=reward_main,
                action=action,
            )
        )

    if learner_step is not None and loop1_reports:
        learner_step()

    return [by_vodu[b.vodu_id] for b in budgets], reports
