"""Core data model: services, topology, RB grid configuration.

All physical quantities carry their unit in the field name (ms, bits, bps,
W, kWh, m).  Unit conversions happen at module boundaries only.  Identities
are dense integer indexes assigned in load order, so a scenario loaded twice
produces identical ids.
"""

from __future__ import annotations

from dataclasses import dataclass, field


def symbol_duration_s(numerology: int) -> float:
    """Average OFDM symbol duration for a numerology index (14 symbols per
    subframe slot of 1 ms / 2^i)."""
    if numerology < 0:
        raise ValueError(f"numerology must be >= 0, got {numerology}")
    return 1e-3 / (14 * 2**numerology)


@dataclass(frozen=True)
class ServiceProfile:
    """One home service type and the slice parameters derived from its 5QI."""

    service_id: int
    fiveqi: int
    delay_budget_ms: float
    packet_min_bits: float
    packet_max_bits: float
    initial_rb: int
    buffer_capacity_pkts: float
    buffer_threshold_pkts: float
    arrival_rate_pps: float = 4.0

    def validate(self) -> list[str]:
        errs = []
        if self.delay_budget_ms <= 0:
            errs.append(f"service {self.service_id}: delay budget must be positive")
        if not (0 < self.buffer_threshold_pkts < self.buffer_capacity_pkts):
            errs.append(
                f"service {self.service_id}: buffer threshold must sit strictly "
                f"between 0 and capacity"
            )
        if self.initial_rb < 0:
            errs.append(f"service {self.service_id}: initial RB count negative")
        if not (0 < self.packet_min_bits <= self.packet_max_bits):
            errs.append(f"service {self.service_id}: bad packet size range")
        return errs


@dataclass(frozen=True)
class FronthaulLink:
    """Wired fronthaul between an O-RU and its vO-DUs."""

    capacity_bps: float
    fiber_length_m: float
    propagation_speed_mps: float = 2.0e8

    def validate(self) -> list[str]:
        errs = []
        if self.capacity_bps <= 0:
            errs.append("fronthaul capacity must be positive")
        if self.fiber_length_m <= 0:
            errs.append("fronthaul fiber length must be positive")
        if self.propagation_speed_mps <= 0:
            errs.append("fronthaul propagation speed must be positive")
        return errs


@dataclass(frozen=True)
class CpeDescriptor:
    """One house's rooftop terminal, fixed for the whole run."""

    cpe_id: int
    serving_oru: int
    distance_m: float
    tx_power_w: float = 1.0
    noise_w: float = 4e-9


@dataclass(frozen=True)
class OruDescriptor:
    oru_id: int
    fronthaul: FronthaulLink


@dataclass(frozen=True)
class VoduDescriptor:
    vodu_id: int
    host_server: int


@dataclass(frozen=True)
class ServerDescriptor:
    server_id: int
    base_power_w: float
    vnf_power_w: tuple[float, ...]
    vnf_count: int


@dataclass(frozen=True)
class RbConfig:
    """Resource-block grid and the per-carrier terms of the throughput model."""

    total_rb: int = 273
    numerology: int = 3
    scs_khz: float = 120.0
    rb_bandwidth_hz: float = 12 * 120e3
    carriers: int = 1
    mimo_layers: int = 1
    modulation_order: int = 8
    scaling: float = 1.0
    overhead: float = 0.14
    max_code_rate: float = 948 / 1024
    subband_count: int = 1
    tti_count: int = 1

    @property
    def symbol_duration_s(self) -> float:
        return symbol_duration_s(self.numerology)

    def validate(self) -> list[str]:
        errs = []
        if self.total_rb <= 0:
            errs.append("total RB count must be positive")
        if not (0 <= self.overhead < 1):
            errs.append("overhead must lie in [0, 1)")
        if not (0 < self.scaling <= 1):
            errs.append("scaling factor must lie in (0, 1]")
        if self.carriers < 1 or self.mimo_layers < 1 or self.modulation_order < 1:
            errs.append("carriers, layers and modulation order must be >= 1")
        if self.max_code_rate <= 0:
            errs.append("max code rate must be positive")
        return errs


@dataclass(frozen=True)
class Topology:
    """Static world: CPEs, O-RUs, vO-DUs, servers and the slice -> vO-DU map.

    ``slice_map`` takes a slice id to ``(service_id, vodu_id)``; a slice may
    live at exactly one vO-DU.
    """

    cpes: tuple[CpeDescriptor, ...]
    orus: tuple[OruDescriptor, ...]
    vodus: tuple[VoduDescriptor, ...]
    servers: tuple[ServerDescriptor, ...]
    slice_map: dict[int, tuple[int, int]] = field(default_factory=dict)

    def slices_of_vodu(self, vodu_id: int) -> list[int]:
        return sorted(c for c, (_, d) in self.slice_map.items() if d == vodu_id)


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, message: str) -> None:
        self.violations.append(message)


@dataclass(frozen=True)
class MetricFrame:
    """One closed-loop epoch's worth of feedback signals."""

    epoch: int
    slice_phi: dict[int, float]
    slice_scale: dict[int, float]
    slice_rb_gap: dict[int, int]
    slice_reward: dict[int, float]
    slice_action: dict[int, str]
    vodu_utilization: dict[int, float] = field(default_factory=dict)
    vodu_reward: dict[int, float] = field(default_factory=dict)
    main_reward: float = 0.0


def validate_topology(
    topology: Topology,
    rb: RbConfig,
    services: dict[int, ServiceProfile] | None = None,
) -> ValidationReport:
    """Check every structural invariant of a loaded scenario.

    Empty topology is vacuously valid.  Besides per-type invariants this
    enforces: unique ids, slice-to-one-vO-DU multiplicity, CPEs referencing
    existing O-RUs, positive distances, and initial slice grants per vO-DU
    not exceeding the equal split floor(total_rb / D).
    """
    report = ValidationReport()
    report.violations.extend(rb.validate())

    for group, items in (
        ("cpe", [c.cpe_id for c in topology.cpes]),
        ("oru", [o.oru_id for o in topology.orus]),
        ("vodu", [d.vodu_id for d in topology.vodus]),
        ("server", [s.server_id for s in topology.servers]),
    ):
        seen: set[int] = set()
        for ident in items:
            if ident in seen:
                report.add(f"duplicate {group} id {ident}")
            seen.add(ident)

    oru_ids = {o.oru_id for o in topology.orus}
    vodu_ids = {d.vodu_id for d in topology.vodus}
    server_ids = {s.server_id for s in topology.servers}

    for cpe in topology.cpes:
        if cpe.serving_oru not in oru_ids:
            report.add(f"cpe {cpe.cpe_id} references missing O-RU {cpe.serving_oru}")
        if cpe.distance_m <= 0:
            report.add(f"cpe {cpe.cpe_id} has nonpositive distance")
        if cpe.noise_w <= 0:
            report.add(f"cpe {cpe.cpe_id} has nonpositive noise power")

    for oru in topology.orus:
        for err in oru.fronthaul.validate():
            report.add(f"oru {oru.oru_id}: {err}")

    for vodu in topology.vodus:
        if vodu.host_server not in server_ids:
            report.add(f"vodu {vodu.vodu_id} references missing server {vodu.host_server}")

    # Slice multiplicity is structural here: the dict keys are unique slice
    # ids, so the remaining check is that the target vO-DU exists.
    for slice_id, (service_id, vodu_id) in topology.slice_map.items():
        if vodu_id not in vodu_ids:
            report.add(f"slice {slice_id} mapped to missing vO-DU {vodu_id}")
        if services is not None and service_id not in services:
            report.add(f"slice {slice_id} references unknown service {service_id}")

    if services is not None:
        for profile in services.values():
            report.violations.extend(profile.validate())
        if topology.vodus:
            budget = rb.total_rb // len(topology.vodus)
            for vodu in topology.vodus:
                granted = sum(
                    services[svc].initial_rb
                    for c, (svc, d) in topology.slice_map.items()
                    if d == vodu.vodu_id and svc in services
                )
                if granted > budget:
                    report.add(
                        f"vodu {vodu.vodu_id}: initial slice grants {granted} exceed "
                        f"equal-split budget {budget}"
                    )

    return report


def check_slice_multiplicity(assignments: list[tuple[int, int]]) -> ValidationReport:
    """Explicit multiplicity check over raw (slice_id, vodu_id) pairs, for
    inputs that have not been folded into a ``Topology`` yet."""
    report = ValidationReport()
    seen: dict[int, int] = {}
    for slice_id, vodu_id in assignments:
        if slice_id in seen and seen[slice_id] != vodu_id:
            report.add(
                f"slice multiplicity: slice {slice_id} mapped to vO-DUs "
                f"{seen[slice_id]} and {vodu_id}"
            )
        seen.setdefault(slice_id, vodu_id)
    return report
