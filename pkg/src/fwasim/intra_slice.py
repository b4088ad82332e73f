"""Fast closed loop: per-vO-DU intra-slice RB allocation to CPEs.

Runs once per scheduling window (sub-10 ms).  Each slice sizes per-CPE RB
demands from its windowed traffic, picks one of four zero-touch actions
(scale up / scale down / terminate / keep), applies the resulting scaling
factor to the grants under the slice pool, and reports the scaling factor,
the grant-minus-demand gap and its reward upstream.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .domain import FronthaulLink, RbConfig, ServiceProfile
from .radio import compute_data_rate, delay_satisfaction, required_rbs
from .workload import ArrivalEvent, FlowQueues


class Loop1Action(enum.Enum):
    SCALE_UP = "scale_up"
    SCALE_DOWN = "scale_down"
    TERMINATE = "terminate"
    KEEP = "keep"


LOOP1_ACTIONS = (
    Loop1Action.SCALE_UP,
    Loop1Action.SCALE_DOWN,
    Loop1Action.TERMINATE,
    Loop1Action.KEEP,
)


@dataclass(frozen=True)
class PenaltyWeights:
    """Signed penalty weights for the fast-loop reward terms."""

    fronthaul: float = 1.0
    allocation: float = 1.0
    capacity: float = 1.0


@dataclass(frozen=True)
class SliceAllocState:
    """Allocation snapshot of one slice at one vO-DU."""

    slice_id: int
    vodu_id: int
    rb_pool: int
    cpe_allocs: dict[int, tuple[int, int]] = field(default_factory=dict)
    scale: float = 1.0
    rb_gap: int = 0
    last_phi: float = 1.0

    def granted_total(self) -> int:
        return sum(rb for y, rb in self.cpe_allocs.values() if y)


@dataclass(frozen=True)
class Loop1Report:
    """What the fast loop publishes upstream after each window."""

    epoch: int
    slice_id: int
    vodu_id: int
    scale: float
    rb_gap: int
    phi: float
    reward: float
    action: Loop1Action
    offered_bits: float = 0.0


def action_scale(
    action: Loop1Action, capacity_pkts: float, threshold_pkts: float
) -> float:
    """Scaling factor implied by each zero-touch action."""
    if action is Loop1Action.SCALE_UP:
        return capacity_pkts / threshold_pkts
    if action is Loop1Action.SCALE_DOWN:
        return threshold_pkts / capacity_pkts
    if action is Loop1Action.TERMINATE:
        return 0.0
    return 1.0


def select_action(
    queue_signal: float,
    threshold_pkts: float,
    capacity_pkts: float,
    phi: float,
    utilization: float,
) -> tuple[Loop1Action, float]:
    """Zero-touch rule table.

    Terminate when the headroom signal pins at the buffer capacity (no
    expected demand); scale up when it pins at the threshold with unmet
    delay budgets; scale down on under-utilization; otherwise keep.  Guard
    overlaps resolve in that order, terminate being the most specific.
    """
    if threshold_pkts >= capacity_pkts:
        raise ValueError("buffer threshold must be below capacity")
    if queue_signal >= capacity_pkts:
        action = Loop1Action.TERMINATE
    elif queue_signal <= threshold_pkts and phi < 1.0:
        action = Loop1Action.SCALE_UP
    elif queue_signal > threshold_pkts and utilization < 1.0:
        action = Loop1Action.SCALE_DOWN
    else:
        action = Loop1Action.KEEP
    return action, action_scale(action, capacity_pkts, threshold_pkts)


def apply_allocation(
    state: SliceAllocState,
    action: Loop1Action,
    scale: float,
    demands: dict[int, int],
) -> SliceAllocState:
    """Grant scaled RB demands greedily in ascending CPE id.

    Each CPE's effective demand is floor(scale * demand); a CPE whose full
    effective demand no longer fits the remaining pool is starved (y = 0).
    Shortage is represented in the allocation map, never raised.
    """
    remaining = state.rb_pool
    allocs: dict[int, tuple[int, int]] = {}
    for cpe_id in sorted(demands):
        effective = math.floor(scale * demands[cpe_id])
        if effective > 0 and effective <= remaining:
            allocs[cpe_id] = (1, effective)
            remaining -= effective
        else:
            allocs[cpe_id] = (0, 0)
    granted = state.rb_pool - remaining
    return replace(
        state,
        cpe_allocs=allocs,
        scale=scale,
        rb_gap=state.rb_pool - granted,
    )


def reward_loop1(
    mean_phi: float,
    fronthaul_capacity_bps: float,
    offered_load_bps: float,
    allocated_count: int,
    rb_gap: int,
    weights: PenaltyWeights = PenaltyWeights(),
) -> float:
    """Fast-loop reward: windowed satisfaction plus three signed slack terms.

    The fronthaul term rewards capacity slack (negative once offered load
    exceeds it), the allocation term anchors at one granted CPE, and the
    capacity term tracks the grant-minus-demand gap.
    """
    return (
        mean_phi
        + weights.fronthaul * (fronthaul_capacity_bps - offered_load_bps)
        + weights.allocation * (1.0 - allocated_count)
        + weights.capacity * rb_gap
    )


@dataclass
class SliceRuntime:
    """Mutable simulation state of one slice: queues, links, allocation."""

    profile: ServiceProfile
    alloc: SliceAllocState
    queues: FlowQueues
    fronthaul: FronthaulLink
    cpe_snr: dict[int, float]
    rb_bandwidth_hz: float
    bandwidth_fraction: float = 1.0
    demand_headroom: float = 1.25
    min_demand_rate_bps: float = 0.0
    satisfied_samples: int = field(init=False, default=0)
    total_samples: int = field(init=False, default=0)
    window_bits: float = field(init=False, default=0.0)
    pending_action: Loop1Action | None = field(init=False, default=None)
    eligible_cpes: tuple[int, ...] = field(init=False, default=())
    lam_at_alloc: np.ndarray | None = field(init=False, default=None)

    @property
    def slice_id(self) -> int:
        return self.alloc.slice_id

    def push_tick(self, events: list[ArrivalEvent]) -> None:
        self.window_bits += self.queues.push_arrivals(events)

    def service_rates_bps(self) -> np.ndarray:
        """Per-member wireless rate from the current RB grants."""
        rates = np.zeros(len(self.queues.member_cpes))
        for i, cpe_id in enumerate(self.queues.member_cpes):
            y, rb = self.alloc.cpe_allocs.get(cpe_id, (0, 0))
            if y and rb > 0:
                rates[i] = compute_data_rate(
                    self.bandwidth_fraction,
                    rb * self.rb_bandwidth_hz,
                    self.cpe_snr[cpe_id],
                )
        return rates

    def drain_tick(self) -> None:
        self.queues.drain(self.service_rates_bps())

    def rb_demands(self, rb_cfg: RbConfig) -> dict[int, int]:
        """Size per-CPE RB demand from windowed traffic.

        Any flow with queued or recent traffic demands at least the
        slice's minimum rate (keyed to its delay budget), and one RB.
        """
        demands: dict[int, int] = {}
        rates = self.queues.demand_rate_bps()
        expected = self.queues.expected_arrivals_pkts()
        for i, cpe_id in enumerate(self.queues.member_cpes):
            active = expected[i] > 0 or self.queues.occupancy_bits[i] > 0
            if not active:
                demands[cpe_id] = 0
                continue
            target = max(self.demand_headroom * rates[i], self.min_demand_rate_bps)
            demands[cpe_id] = max(2, required_rbs(target, rb_cfg))
        return demands

    def measure_phi(self, delay_fn: Callable[[int, float], float]) -> float:
        """Delay-budget satisfaction over the flows the window served.

        Samples the members that were active when RBs were allocated
        (``eligible_cpes``); flows whose first packet lands mid-window are
        measured from the next window, once an allocation could exist.
        ``delay_fn(cpe_id, rate_bps)`` returns end-to-end delay in ms (inf
        for an unstable queue).  An idle slice is vacuously satisfied.
        """
        rates = self.service_rates_bps()
        samples: list[tuple[int, float, float]] = []
        for cpe_id in self.eligible_cpes:
            i = self.queues._index[cpe_id]
            y, _rb = self.alloc.cpe_allocs.get(cpe_id, (0, 0))
            if not y or rates[i] <= 0:
                samples.append((0, math.inf, self.profile.delay_budget_ms))
                continue
            delay_ms = delay_fn(cpe_id, float(rates[i]))
            samples.append((1, delay_ms, self.profile.delay_budget_ms))
        phi = delay_satisfaction(samples)
        self.total_samples += len(samples)
        self.satisfied_samples += sum(
            1 for y, d, b in samples if y and d <= b
        )
        return phi


def run_loop1_epoch(
    runtimes: list[SliceRuntime],
    window_events: list[dict[int, list[ArrivalEvent]]],
    rb_cfg: RbConfig,
    epoch: int,
    weights: PenaltyWeights,
    vodu_utilization: float = 1.0,
    choose_action: Callable[[SliceRuntime, dict[int, int], float], tuple[Loop1Action, float]] | None = None,
    queue_mode: str = "stable",
) -> list[Loop1Report]:
    """One fast-loop window over the slices of a single vO-DU.

    Sizes demands, picks and applies one action per slice (rule table when
    ``choose_action`` is None or raises), steps the queues through the
    window's ticks, then measures satisfaction and rewards.
    ``vodu_utilization`` is the hosting vO-DU's grant ratio from the slow
    loop, feeding the scale-down guard.
    """
    reports: list[Loop1Report] = []

    for rt in runtimes:
        rt.window_bits = 0.0
        demands = rt.rb_demands(rb_cfg)
        rt.eligible_cpes = tuple(c for c, d in sorted(demands.items()) if d > 0)
        rt.lam_at_alloc = rt.queues.arrival_rate_pps()
        queue_signal = rt.queues.slice_queue_signal()
        action = None
        scale = 1.0
        if choose_action is not None:
            try:
                chosen = choose_action(rt, demands, queue_signal)
            except Exception:
                chosen = None  # unavailable policy: fall back to the rule table
            if chosen is not None:
                action, scale = chosen
        if action is None:
            action, scale = select_action(
                queue_signal,
                rt.profile.buffer_threshold_pkts,
                rt.profile.buffer_capacity_pkts,
                rt.alloc.last_phi,
                vodu_utilization,
            )
        rt.alloc = apply_allocation(rt.alloc, action, scale, demands)
        rt.pending_action = action  # consumed below after the ticks

    for tick_events in window_events:
        for rt in runtimes:
            rt.push_tick(tick_events.get(rt.slice_id, []))
            rt.drain_tick()

    for rt in runtimes:
        # rates as dimensioned at allocation time, so the self-assessment
        # matches what the controller actually provisioned for
        lam = rt.lam_at_alloc if rt.lam_at_alloc is not None else rt.queues.arrival_rate_pps()
        pkt_bits = rt.queues.mean_packet_bits

        def delay_fn(cpe_id: int, rate_bps: float, rt=rt, lam=lam, pkt=pkt_bits) -> float:
            i = rt.queues._index[cpe_id]
            mu = rate_bps / max(pkt[i], 1.0)
            gap = (mu - lam[i]) if queue_mode == "stable" else (lam[i] - mu)
            if gap <= 0:
                return math.inf
            queueing_ms = 1e3 / gap
            wireless_ms = 1e3 * pkt[i] / rate_bps
            fronthaul_ms = 1e3 * rt.window_bits / rt.fronthaul.capacity_bps
            prop_ms = 1e3 * rt.fronthaul.fiber_length_m / rt.fronthaul.propagation_speed_mps
            return queueing_ms + wireless_ms + fronthaul_ms + prop_ms

        phi = rt.measure_phi(delay_fn)
        rt.alloc = replace(rt.alloc, last_phi=phi)

        allocated = sum(y for y, _ in rt.alloc.cpe_allocs.values())
        offered_bps = float(
            sum(
                lam[rt.queues._index[c]] * pkt_bits[rt.queues._index[c]]
                for c, (y, _) in rt.alloc.cpe_allocs.items()
                if y
            )
        )
        reward = reward_loop1(
            phi,
            rt.fronthaul.capacity_bps,
            offered_bps,
            allocated,
            rt.alloc.rb_gap,
            weights,
        )
        reports.append(
            Loop1Report(
                epoch=epoch,
                slice_id=rt.slice_id,
                vodu_id=rt.alloc.vodu_id,
                scale=rt.alloc.scale,
                rb_gap=rt.alloc.rb_gap,
                phi=phi,
                reward=reward,
                action=rt.pending_action,
                offered_bits=rt.window_bits,
            )
        )
    return reports
