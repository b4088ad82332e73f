"""Scenario assembly: the default world, JSON loading, trace handling.

A scenario file is one JSON document with sections ``topology``,
``rb_config``, ``services``, ``prices``, ``rl`` and ``sim``.  Setting
``"paper_defaults": true`` expands to the reference configuration: 65
houses behind one O-RU, three vO-DUs on four edge servers, seven 5QI
services sliced one-to-one, 273 RBs at numerology 3, 6 Gbps fronthaul,
and the published energy/RB prices.  Any explicitly given keys overlay
the expanded defaults.

Solar and server-power traces are synthetic diurnal curves by default;
CSV traces (``timestamp,watts`` / ``timestamp,server_id,watts``) can be
supplied and are upsampled by integral-preserving linear interpolation.
"""

from __future__ import annotations

import copy
import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .domain import (
    CpeDescriptor,
    FronthaulLink,
    OruDescriptor,
    RbConfig,
    ServerDescriptor,
    ServiceProfile,
    Topology,
    ValidationReport,
    VoduDescriptor,
    validate_topology,
)
from .energy import PriceConfig, StorageLimits

SUBSTREAMS = {
    "topology": 0,
    "membership": 1,
    "traffic": 2,
    "channel": 3,
    "rl-init": 4,
    "exploration": 5,
    "solar": 6,
}


def substream(seed: int, name: str) -> np.random.Generator:
    """Named child generator so components draw independent, replayable
    randomness from one master seed."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(SUBSTREAMS[name],)))


class ScenarioError(ValueError):
    pass


# 5QI rows with their delay budgets; initial grants follow the deployed
# slice layout (33/23/22 on the first vO-DU, 23/28 on the last).  Packet
# sizes are service-typical: small for voice/gaming, large for streaming.
DEFAULT_SERVICES = [
    {"fiveqi": 1, "delay_budget_ms": 100.0, "initial_rb": 33,
     "packet_min_bits": 5e4, "packet_max_bits": 2e5},
    {"fiveqi": 2, "delay_budget_ms": 150.0, "initial_rb": 26,
     "packet_min_bits": 2e5, "packet_max_bits": 8e5},
    {"fiveqi": 3, "delay_budget_ms": 50.0, "initial_rb": 23,
     "packet_min_bits": 5e4, "packet_max_bits": 1.5e5},
    {"fiveqi": 4, "delay_budget_ms": 300.0, "initial_rb": 23,
     "packet_min_bits": 3e5, "packet_max_bits": 1e6},
    {"fiveqi": 7, "delay_budget_ms": 100.0, "initial_rb": 25,
     "packet_min_bits": 1e5, "packet_max_bits": 4e5},
    {"fiveqi": 70, "delay_budget_ms": 200.0, "initial_rb": 28,
     "packet_min_bits": 2e5, "packet_max_bits": 6e5},
    {"fiveqi": 76, "delay_budget_ms": 500.0, "initial_rb": 22,
     "packet_min_bits": 3e5, "packet_max_bits": 1e6},
]


def default_config(seed: int = 42) -> dict:
    return {
        "seed": seed,
        "topology": {
            "cpe_count": 65,
            "oru_count": 1,
            "vodu_count": 3,
            "server_count": 4,
            "distance_range_m": [200.0, 2000.0],
            "tx_power_w": 1.0,
            "noise_w": 4e-9,
            "pathloss_exp": 2.0,
            "fronthaul": {
                "capacity_bps": 6e9,
                "fiber_length_m": 2000.0,
                "propagation_speed_mps": 2.0e8,
            },
            "server_base_w": 150.0,
            "server_vnf_w": 100.0,
            "vnf_per_server": 2,
        },
        "rb_config": {
            "total_rb": 273,
            "numerology": 3,
            "scs_khz": 120.0,
            "rb_bandwidth_hz": 12 * 120e3,
            "carriers": 1,
            "mimo_layers": 1,
            "modulation_order": 8,
            "scaling": 1.0,
            "overhead": 0.14,
            "max_code_rate": 948 / 1024,
        },
        "services": [
            {
                **row,
                "buffer_capacity_pkts": 4.0,
                "buffer_threshold_pkts": 3.0,
                "arrival_rate_pps": 5.0,
            }
            for row in DEFAULT_SERVICES
        ],
        "prices": {"buy_per_kwh": 0.073, "sell_per_kwh": 0.070, "rb_price": 6.0},
        "rl": {
            "layers": [3, 64, 64, 4],
            "gamma": 0.99,
            "train_steps": 100_000,
            "memory_capacity": 50_000,
            "batch_size": 64,
            "n_steps": 3,
            "target_sync": 500,
            "lr": 1e-3,
            "priority_exponent": 0.6,
            "importance_exponent": 0.4,
            "epsilon_start": 1.0,
            "epsilon_end": 0.05,
            "epsilon_anneal_steps": 50_000,
            "learn_every": 4,
            "min_fill": 1_000,
            "log_interval": 1_000,
            "reward_scale": 0.25,
        },
        "sim": {
            "tick_ms": 1,
            "loop1_window_ms": 9,
            "loop2_period_ms": 100,
            "epochs_per_hour": 60,
            "hours": 1,
            "membership_prob": 0.25,
            "demand_headroom": 1.8,
            "min_rate_factor": 8.0,
            "bandwidth_fraction": 1.0,
            "queue_mode": "stable",
            "balance": 0.5,
            "penalties": {
                "fronthaul": 1e-10,
                "allocation": 0.005,
                "capacity": 0.002,
                "slice": 0.01,
                "rb": 0.002,
            },
            "energy": {
                "charge_max_kwh": 10.0,
                "discharge_max_kwh": 5.0,
                "grid_max_kwh": 50.0,
                "solar_max_kwh": 50.0,
                "solar_peak_w": 4000.0,
                "solar_trace": None,
                "server_trace": None,
            },
        },
    }


@dataclass
class ScenarioSpec:
    """Fully resolved scenario: raw config plus the derived objects."""

    raw: dict
    seed: int
    topology: Topology
    rb: RbConfig
    services: dict[int, ServiceProfile]
    prices: PriceConfig
    limits: StorageLimits
    memberships: list[tuple[int, int]] = field(default_factory=list)

    @property
    def sim(self) -> dict:
        return self.raw["sim"]

    @property
    def rl(self) -> dict:
        return self.raw["rl"]

    def validation(self) -> ValidationReport:
        return validate_topology(self.topology, self.rb, self.services)


def _deep_merge(base: dict, overlay: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in overlay.items():
        if key == "paper_defaults":
            continue
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def build_spec(config: dict) -> ScenarioSpec:
    if config.get("paper_defaults"):
        config = _deep_merge(default_config(config.get("seed", 42)), config)
    seed = int(config.get("seed", 42))
    topo_cfg = config["topology"]
    rng = substream(seed, "topology")

    fronthaul = FronthaulLink(**topo_cfg["fronthaul"])
    orus = tuple(
        OruDescriptor(oru_id=i, fronthaul=fronthaul) for i in range(topo_cfg["oru_count"])
    )
    lo, hi = topo_cfg["distance_range_m"]
    cpes = tuple(
        CpeDescriptor(
            cpe_id=i,
            serving_oru=i % topo_cfg["oru_count"],
            distance_m=float(rng.uniform(lo, hi)),
            tx_power_w=topo_cfg["tx_power_w"],
            noise_w=topo_cfg["noise_w"],
        )
        for i in range(topo_cfg["cpe_count"])
    )
    servers = tuple(
        ServerDescriptor(
            server_id=i,
            base_power_w=topo_cfg["server_base_w"],
            vnf_power_w=tuple([topo_cfg["server_vnf_w"]] * topo_cfg["vnf_per_server"]),
            vnf_count=topo_cfg["vnf_per_server"],
        )
        for i in range(topo_cfg["server_count"])
    )
    vodus = tuple(
        VoduDescriptor(vodu_id=i, host_server=i % topo_cfg["server_count"])
        for i in range(topo_cfg["vodu_count"])
    )

    services: dict[int, ServiceProfile] = {}
    for idx, svc in enumerate(config["services"]):
        services[idx] = ServiceProfile(service_id=idx, **svc)

    slice_map = {
        idx: (idx, vodus[idx % len(vodus)].vodu_id) for idx in sorted(services)
    }
    topology = Topology(
        cpes=cpes, orus=orus, vodus=vodus, servers=servers, slice_map=slice_map
    )

    member_rng = substream(seed, "membership")
    prob = config["sim"]["membership_prob"]
    memberships = [
        (cpe.cpe_id, svc_id)
        for cpe in cpes
        for svc_id in sorted(services)
        if member_rng.random() < prob
    ]

    energy_cfg = config["sim"]["energy"]
    limits = StorageLimits(
        charge_max_kwh=energy_cfg["charge_max_kwh"],
        discharge_max_kwh=energy_cfg["discharge_max_kwh"],
        grid_max_kwh=energy_cfg["grid_max_kwh"],
        solar_max_kwh=energy_cfg["solar_max_kwh"],
    )

    return ScenarioSpec(
        raw=config,
        seed=seed,
        topology=topology,
        rb=RbConfig(**config["rb_config"]),
        services=services,
        prices=PriceConfig(**config["prices"]),
        limits=limits,
        memberships=memberships,
    )


def load_scenario(path: str | Path) -> ScenarioSpec:
    """Parse, expand and validate a scenario file."""
    path = Path(path)
    if not path.exists():
        raise ScenarioError(f"scenario file not found: {path}")
    try:
        config = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    spec = build_spec(config)
    for key in ("solar_trace", "server_trace"):
        trace = spec.sim["energy"].get(key)
        if trace and not Path(trace).exists():
            raise ScenarioError(f"{path}: {key} file not found: {trace}")
    report = spec.validation()
    if not report.ok:
        raise ScenarioError(f"{path}: invalid scenario: " + "; ".join(report.violations))
    return spec


def serialize_scenario(spec: ScenarioSpec) -> str:
    return json.dumps(spec.raw, indent=2, sort_keys=True)


def write_scenario(spec: ScenarioSpec, path: str | Path) -> None:
    Path(path).write_text(serialize_scenario(spec) + "\n")


def augment_trace(
    timestamps_s: np.ndarray,
    watts: np.ndarray,
    cadence_s: float = 1.0,
    jitter_std_w: float = 0.0,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Upsample a power trace to a fixed cadence by linear interpolation.

    Optional seeded jitter is de-meaned per segment so the trapezoidal
    energy integral stays within 0.1% of the raw trace's.
    """
    timestamps_s = np.asarray(timestamps_s, dtype=float)
    watts = np.asarray(watts, dtype=float)
    if np.any(np.diff(timestamps_s) <= 0):
        raise ValueError("trace timestamps must be strictly increasing")
    if timestamps_s[-1] - timestamps_s[0] < cadence_s:
        return timestamps_s.copy(), watts.copy()
    out_t = np.arange(timestamps_s[0], timestamps_s[-1] + 0.5 * cadence_s, cadence_s)
    out_w = np.interp(out_t, timestamps_s, watts)
    if jitter_std_w > 0:
        rng = rng or np.random.default_rng(0)
        jitter = rng.normal(0.0, jitter_std_w, size=len(out_w))
        jitter -= jitter.mean()
        out_w = np.maximum(out_w + jitter, 0.0)
    return out_t, out_w


def synth_solar_watts(hours: int, peak_w: float, seed: int = 42) -> np.ndarray:
    """Clear-sky diurnal curve: zero at night, sine bump from 06:00 to 18:00,
    with small seeded day-to-day variation."""
    rng = substream(seed, "solar")
    out = np.zeros(hours)
    for h in range(hours):
        tod = h % 24
        if 6 <= tod <= 18:
            shape = np.sin(np.pi * (tod - 6) / 12.0)
            daily = 1.0 + 0.1 * rng.standard_normal()
            out[h] = max(peak_w * shape * daily, 0.0)
    return out


def load_power_trace(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """Read a `timestamp,watts` CSV."""
    ts, watts = [], []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            ts.append(float(row["timestamp"]))
            watts.append(float(row["watts"]))
    if not ts:
        raise ScenarioError(f"empty trace: {path}")
    return np.asarray(ts), np.asarray(watts)


def solar_kwh_by_hour(spec: ScenarioSpec, hours: int) -> np.ndarray:
    """Hourly solar energy, from the configured trace or the synthetic curve."""
    energy_cfg = spec.sim["energy"]
    trace_path = energy_cfg.get("solar_trace")
    if trace_path:
        ts, watts = load_power_trace(trace_path)
        ts, watts = augment_trace(ts, watts, cadence_s=1.0)
        out = np.zeros(hours)
        for h in range(hours):
            mask = (ts >= h * 3600.0) & (ts < (h + 1) * 3600.0)
            if mask.any():
                out[h] = watts[mask].mean() / 1000.0
        return out
    return synth_solar_watts(hours, energy_cfg["solar_peak_w"], spec.seed) / 1000.0
