"""Closed-form wireless and transport math.

SNR, Shannon rate on the granted spectrum, RB sizing by inverting the
per-RB reference throughput (carrier-aggregated layers x modulation x
code rate x 12 subcarriers per symbol, minus control overhead), the four
delay components, and the two feedback ratios: delay-budget satisfaction
and RB utilization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .domain import FronthaulLink, RbConfig
from .workload import QueueState, queueing_delay


class StarvedCpeError(ValueError):
    """Raised when a delay is requested for a CPE with no serving rate."""


@dataclass(frozen=True)
class ChannelSample:
    """Channel gain as estimated CSI plus estimation error."""

    estimated_csi: float = 1.0
    csi_error: float = 0.0

    @property
    def realized_csi(self) -> float:
        return self.estimated_csi + self.csi_error

    @property
    def gain(self) -> float:
        """|h|^2 of the realized channel."""
        return abs(self.realized_csi) ** 2


@dataclass(frozen=True)
class DelayBreakdown:
    queueing_ms: float
    wireless_tx_ms: float
    fronthaul_tx_ms: float
    propagation_ms: float

    @property
    def end_to_end_ms(self) -> float:
        return (
            self.queueing_ms
            + self.wireless_tx_ms
            + self.fronthaul_tx_ms
            + self.propagation_ms
        )


def compute_snr(
    active: int,
    channel: ChannelSample,
    tx_power_w: float,
    noise_w: float,
    distance_m: float,
    pathloss_exp: float = 2.0,
) -> float:
    """Received SNR: active * |h|^2 * power / (noise * distance^pathloss)."""
    if noise_w <= 0:
        raise ValueError(f"noise power must be positive, got {noise_w}")
    if distance_m <= 0:
        raise ValueError(f"distance must be positive, got {distance_m}")
    if active == 0:
        return 0.0
    gain = abs(channel.realized_csi) ** 2
    return active * gain * tx_power_w / (noise_w * distance_m**pathloss_exp)


def compute_data_rate(fraction: float, bandwidth_hz: float, snr: float) -> float:
    """Shannon rate in bps over the allocated fraction of the bandwidth."""
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"bandwidth fraction must lie in [0, 1], got {fraction}")
    return fraction * bandwidth_hz * math.log2(1.0 + snr)


def per_rb_reference_rate_bps(rb: RbConfig) -> float:
    """Peak throughput one RB can carry under the reference 5G model.

    Sums layers * modulation bits * scaling * 12 subcarriers * max code
    rate * (1 - overhead) over aggregated carriers, divided by the symbol
    duration of the numerology.
    """
    per_symbol_bits = rb.carriers * (
        rb.mimo_layers
        * rb.modulation_order
        * rb.scaling
        * 12
        * rb.max_code_rate
        * (1.0 - rb.overhead)
    )
    if per_symbol_bits <= 0:
        raise ValueError("RB config yields a zero per-RB rate denominator")
    return per_symbol_bits / rb.symbol_duration_s


def required_rbs(target_rate_bps: float, rb: RbConfig) -> int:
    """RBs needed to carry ``target_rate_bps`` under the reference model.

    Floor semantics: the result n satisfies
    n * per_rb_rate <= target < (n + 1) * per_rb_rate.
    """
    if target_rate_bps < 0:
        raise ValueError(f"target rate must be nonnegative, got {target_rate_bps}")
    per_symbol_bits = rb.carriers * (
        rb.mimo_layers
        * rb.modulation_order
        * rb.scaling
        * 12
        * rb.max_code_rate
        * (1.0 - rb.overhead)
    )
    if per_symbol_bits <= 0:
        raise ValueError("RB config yields a zero denominator")
    # target in Mbps; the 1e6 cancels the Mbps->bps conversion.
    target_mbps = target_rate_bps / 1e6
    return int(1e6 * target_mbps * rb.symbol_duration_s / per_symbol_bits)


def delay_breakdown(
    packet_bits: float,
    rate_bps: float,
    fronthaul: FronthaulLink,
    queue: QueueState,
    cohort_bits: float,
    queue_mode: str = "stable",
) -> DelayBreakdown:
    """End-to-end delay components for one service flow, all in ms.

    ``cohort_bits`` is the summed payload of every CPE sharing the
    fronthaul in the same window.  Queue rates are packets per second, so
    the queueing term converts seconds to ms.
    """
    if rate_bps <= 0:
        raise StarvedCpeError("starved CPE: no wireless rate allocated")
    if fronthaul.capacity_bps <= 0:
        raise ValueError("fronthaul capacity must be positive")
    queueing_ms = 1e3 * queueing_delay(queue, mode=queue_mode)
    wireless_ms = 1e3 * packet_bits / rate_bps
    fronthaul_ms = 1e3 * cohort_bits / fronthaul.capacity_bps
    propagation_ms = 1e3 * fronthaul.fiber_length_m / fronthaul.propagation_speed_mps
    return DelayBreakdown(queueing_ms, wireless_ms, fronthaul_ms, propagation_ms)


def delay_satisfaction(samples: list[tuple[int, float, float]]) -> float:
    """Fraction of a slice's CPEs whose end-to-end delay meets the budget.

    ``samples`` holds (allocated, end_to_end_ms, budget_ms) per member CPE.
    An empty slice is vacuously satisfied (1.0).  A starved member
    (allocated = 0) counts against the slice.
    """
    if not samples:
        return 1.0
    hits = sum(y for y, delay_ms, budget_ms in samples if delay_ms <= budget_ms)
    return hits / len(samples)


def rb_utilization(allocations: list[tuple[int, int]], vodu_rb: int) -> float:
    """Granted-over-available RB ratio at one vO-DU.

    ``allocations`` holds (active, granted_rb) per slice.  Values above 1
    are returned as-is: an over-allocation signal, never clamped.
    """
    if vodu_rb <= 0:
        raise ValueError(f"vO-DU RB budget must be positive, got {vodu_rb}")
    return sum(x * g for x, g in allocations) / vodu_rb
