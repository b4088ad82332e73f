"""Traffic generation and per-slice queue accounting.

Arrivals are Poisson per (CPE, service) pair; packet sizes draw uniformly
from the service's configured range.  Queue state tracks occupancy against
a finite buffer, estimates the expected arrival rate over a sliding window,
and exposes the buffer-headroom signal that drives the zero-touch actions.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .domain import ServiceProfile


class CriticalQueueError(ArithmeticError):
    """Arrival rate equals service rate: the delay formula has a pole."""


@dataclass(frozen=True)
class ArrivalEvent:
    tick_ms: int
    cpe_id: int
    service_id: int
    bits: float


@dataclass
class QueueState:
    """Snapshot of one flow's queue, rates in packets per second."""

    arrival_rate_pps: float
    service_rate_pps: float
    occupancy_pkts: float
    expected_arrivals_pkts: float
    buffer_capacity_pkts: float
    buffer_threshold_pkts: float


def queue_status(q: QueueState) -> float:
    """Buffer headroom signal: max(capacity - expected arrivals, threshold)."""
    return max(q.buffer_capacity_pkts - q.expected_arrivals_pkts, q.buffer_threshold_pkts)


def queueing_delay(q: QueueState, mode: str = "stable") -> float:
    """Mean queueing delay in units of 1/rate (seconds when rates are pps).

    ``stable`` returns 1 / (mu - lambda); ``paper_literal`` keeps the
    inverted sign 1 / (lambda - mu), which is negative for a stable queue
    and exists only for comparison runs.
    """
    if mode not in ("stable", "paper_literal"):
        raise ValueError(f"unknown queueing mode {mode!r}")
    gap = q.service_rate_pps - q.arrival_rate_pps
    if gap == 0:
        raise CriticalQueueError("critically loaded queue: arrival rate equals service rate")
    return 1.0 / gap if mode == "stable" else -1.0 / gap


def generate_arrivals(
    rng: np.random.Generator,
    tick_ms: int,
    memberships: list[tuple[int, int]],
    profiles: dict[int, ServiceProfile],
    tick_duration_s: float = 1e-3,
) -> list[ArrivalEvent]:
    """Poisson arrivals for one tick across every (cpe, service) membership.

    The stream is a pure function of the generator state, so a reseeded
    generator replays the identical event list.
    """
    events: list[ArrivalEvent] = []
    for cpe_id, service_id in memberships:
        profile = profiles[service_id]
        mean = profile.arrival_rate_pps * tick_duration_s
        if mean <= 0:
            continue
        count = rng.poisson(mean)
        for _ in range(count):
            bits = rng.uniform(profile.packet_min_bits, profile.packet_max_bits)
            events.append(ArrivalEvent(tick_ms, cpe_id, service_id, bits))
    return events


def load_arrivals_csv(path: str | Path) -> list[ArrivalEvent]:
    """Replay a recorded workload from `tick_ms,cpe_id,service_id,bits`."""
    events = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            events.append(
                ArrivalEvent(
                    int(row["tick_ms"]), int(row["cpe_id"]),
                    int(row["service_id"]), float(row["bits"]),
                )
            )
    return events


@dataclass
class FlowQueues:
    """Vectorized queue bank for one slice's member CPEs.

    Occupancy is capped at the buffer; overflow packets are dropped and
    counted, never silently lost.  The expected-arrival estimate is a
    sliding-window mean over the most recent ``window_ticks`` ticks.
    """

    member_cpes: list[int]
    profile: ServiceProfile
    window_ticks: int = 100
    tick_duration_s: float = 1e-3

    occupancy_pkts: np.ndarray = field(init=False)
    occupancy_bits: np.ndarray = field(init=False)
    window_counts: np.ndarray = field(init=False)
    window_pos: int = field(init=False, default=0)
    drops_pkts: int = field(init=False, default=0)
    mean_packet_bits: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        n = len(self.member_cpes)
        self._index = {cpe: i for i, cpe in enumerate(self.member_cpes)}
        self.occupancy_pkts = np.zeros(n)
        self.occupancy_bits = np.zeros(n)
        self.window_counts = np.zeros((self.window_ticks, n))
        midpoint = 0.5 * (self.profile.packet_min_bits + self.profile.packet_max_bits)
        self.mean_packet_bits = np.full(n, midpoint)

    def push_arrivals(self, events: list[ArrivalEvent]) -> float:
        """Enqueue one tick of arrivals; returns the accepted bits."""
        counts = np.zeros(len(self.member_cpes))
        accepted_bits = 0.0
        for ev in events:
            i = self._index[ev.cpe_id]
            counts[i] += 1
            if self.occupancy_pkts[i] + 1 > self.profile.buffer_capacity_pkts:
                self.drops_pkts += 1
                continue
            self.occupancy_pkts[i] += 1
            self.occupancy_bits[i] += ev.bits
            accepted_bits += ev.bits
            # running mean of packet size actually seen on this flow
            self.mean_packet_bits[i] += 0.1 * (ev.bits - self.mean_packet_bits[i])
        self.window_counts[self.window_pos] = counts
        self.window_pos = (self.window_pos + 1) % self.window_ticks
        return accepted_bits

    def drain(self, rates_bps: np.ndarray) -> None:
        """Serve each flow for one tick at its allocated rate."""
        served_bits = np.minimum(rates_bps * self.tick_duration_s, self.occupancy_bits)
        self.occupancy_bits -= served_bits
        pkt_bits = np.maximum(self.mean_packet_bits, 1.0)
        self.occupancy_pkts = np.minimum(
            self.occupancy_pkts, np.ceil(self.occupancy_bits / pkt_bits)
        )

    def expected_arrivals_pkts(self) -> np.ndarray:
        """Windowed arrival count per flow, scaled to the full window."""
        return self.window_counts.sum(axis=0)

    def arrival_rate_pps(self) -> np.ndarray:
        window_s = self.window_ticks * self.tick_duration_s
        return self.window_counts.sum(axis=0) / window_s

    def demand_rate_bps(self) -> np.ndarray:
        return self.arrival_rate_pps() * self.mean_packet_bits

    def queue_state(self, cpe_id: int, service_rate_pps: float) -> QueueState:
        i = self._index[cpe_id]
        return QueueState(
            arrival_rate_pps=float(self.arrival_rate_pps()[i]),
            service_rate_pps=service_rate_pps,
            occupancy_pkts=float(self.occupancy_pkts[i]),
            expected_arrivals_pkts=float(self.expected_arrivals_pkts()[i]),
            buffer_capacity_pkts=self.profile.buffer_capacity_pkts,
            buffer_threshold_pkts=self.profile.buffer_threshold_pkts,
        )

    def slice_queue_signal(self) -> float:
        """Aggregate headroom signal over the slice's whole queue bank."""
        total_expected = float(self.expected_arrivals_pkts().sum())
        return max(
            self.profile.buffer_capacity_pkts - total_expected,
            self.profile.buffer_threshold_pkts,
        )
