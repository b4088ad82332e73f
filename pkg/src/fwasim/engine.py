"""Multi-timescale simulation engine.

Composes the three loops over one world: millisecond ticks feed 9 ms
fast-loop windows, eleven windows make one 100 ms slow-loop epoch, and a
configurable number of epochs (default 60) folds into one simulated hour,
at which point the energy dispatch and the joint optimizer run.  All
randomness flows from one master seed through named substreams, so a
seeded run is bit-reproducible.
"""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import rl
from .domain import ServiceProfile
from .energy import ServerPower, StorageState, total_power
from .forecast import SolutionSeries
from .intra_slice import (
    LOOP1_ACTIONS,
    Loop1Action,
    Loop1Report,
    PenaltyWeights,
    SliceAllocState,
    SliceRuntime,
    action_scale,
    run_loop1_epoch,
)
from .inter_slice import (
    LOOP2_ACTIONS,
    Loop2Action,
    Loop2Report,
    VoduBudget,
    initial_distribution,
    run_loop2_epoch,
)
from .joint_opt import HourInputs, HourSolution, solve_hour
from .radio import compute_snr
from .scenario import ScenarioSpec, solar_kwh_by_hour, substream
from .workload import ArrivalEvent, FlowQueues

log = logging.getLogger("fwasim")

POLICIES = ("rules", "rl", "dqn", "random")


@dataclass
class RunReport:
    """Everything a finished run exposes for reporting and assertions."""

    seed: int
    policy: str
    hours: int
    slice_satisfaction: dict[int, tuple[int, int]] = field(default_factory=dict)
    slice_fiveqi: dict[int, int] = field(default_factory=dict)
    slice_budget_ms: dict[int, float] = field(default_factory=dict)
    loop1_rows: list[tuple] = field(default_factory=list)
    loop2_rows: list[tuple] = field(default_factory=list)
    ledger_rows: list[tuple] = field(default_factory=list)
    solution_rows: list[tuple] = field(default_factory=list)
    reward_curve: list[tuple[int, float]] = field(default_factory=list)
    rb_history: list[float] = field(default_factory=list)
    cost_history: list[float] = field(default_factory=list)
    dropped_pkts: int = 0
    invariant_violations: list[str] = field(default_factory=list)
    wall_clock_s: float = 0.0

    @property
    def aggregate_satisfaction(self) -> float:
        satisfied = sum(s for s, _ in self.slice_satisfaction.values())
        total = sum(t for _, t in self.slice_satisfaction.values())
        return satisfied / total if total else 1.0

    @property
    def total_samples(self) -> int:
        return sum(t for _, t in self.slice_satisfaction.values())

    @property
    def mean_main_reward(self) -> float:
        if not self.reward_curve:
            return 0.0
        return float(np.mean([r for _, r in self.reward_curve]))

    def per_slice_fraction(self) -> dict[int, float]:
        return {
            c: (s / t if t else 1.0)
            for c, (s, t) in sorted(self.slice_satisfaction.items())
        }

    def write_outputs(self, out_dir: str | Path) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_csv(
            out / "loop1.csv",
            "epoch,slice,omega,nu,phi,reward,action",
            self.loop1_rows,
        )
        _write_csv(
            out / "loop2.csv",
            "epoch,vodu,slice,grant,utilization,reward_d,reward_main,action",
            self.loop2_rows,
        )
        _write_csv(
            out / "energy.csv",
            "hour,g,h_plus,h_minus,charge,discharge,level,L_cons,L,H",
            self.ledger_rows,
        )
        _write_csv(
            out / "solutions.csv",
            "hour,z,F,H,rb_revenue,iterations,converged",
            self.solution_rows,
        )
        _write_csv(
            out / "rewards.csv",
            "epoch,reward_main",
            self.reward_curve,
        )
        sat_rows = [
            (
                c,
                self.slice_fiveqi.get(c, -1),
                self.slice_budget_ms.get(c, 0.0),
                s,
                t,
                (s / t if t else 1.0),
            )
            for c, (s, t) in sorted(self.slice_satisfaction.items())
        ]
        _write_csv(
            out / "satisfaction.csv",
            "slice,fiveqi,budget_ms,satisfied,total,fraction",
            sat_rows,
        )
        summary = {
            "seed": self.seed,
            "policy": self.policy,
            "hours": self.hours,
            "aggregate_satisfaction": self.aggregate_satisfaction,
            "total_samples": self.total_samples,
            "mean_main_reward": self.mean_main_reward,
            "dropped_pkts": self.dropped_pkts,
            "invariant_violations": self.invariant_violations,
            "wall_clock_s": self.wall_clock_s,
        }
        (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_csv(path: Path, header: str, rows: list[tuple]) -> None:
    lines = [header]
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


class ActorBridge:
    """Policy hook: how each loop picks actions, and what happens to the
    per-epoch feedback.  The base bridge defers to the rule tables."""

    def choose_loop1(self, runtime, demands, queue_signal):
        return None  # rule table

    def choose_loop2(self, budget, slice_id, report):
        return None  # rule table

    def observe_loop1(self, reports: list[Loop1Report], sim: "Simulation") -> None:
        pass

    def observe_loop2(self, reports: list[Loop2Report], sim: "Simulation") -> None:
        pass


class RandomBridge(ActorBridge):
    def __init__(self, rng: np.random.Generator) -> None:
        self.rng = rng

    def choose_loop1(self, runtime, demands, queue_signal):
        action = LOOP1_ACTIONS[int(self.rng.integers(len(LOOP1_ACTIONS)))]
        return action, action_scale(
            action,
            runtime.profile.buffer_capacity_pkts,
            runtime.profile.buffer_threshold_pkts,
        )

    def choose_loop2(self, budget, slice_id, report):
        return LOOP2_ACTIONS[int(self.rng.integers(len(LOOP2_ACTIONS)))]


class GreedyNetBridge(ActorBridge):
    """Evaluation-time policy: greedy over the trained Q-network."""

    def __init__(self, net: rl.QNet, sim: "Simulation") -> None:
        self.net = net
        self.sim = sim
        self._greedy_rng = np.random.default_rng(0)  # epsilon 0: never consulted

    def choose_loop1(self, runtime, demands, queue_signal):
        state = self.sim.encode_loop1_state(runtime, demands, queue_signal)
        idx = rl.act(self.net, state, 0.0, self._greedy_rng)
        action = LOOP1_ACTIONS[idx]
        return action, action_scale(
            action,
            runtime.profile.buffer_capacity_pkts,
            runtime.profile.buffer_threshold_pkts,
        )

    def choose_loop2(self, budget, slice_id, report):
        state = self.sim.encode_loop2_state(budget)
        return LOOP2_ACTIONS[rl.act(self.net, state, 0.0, self._greedy_rng)]


class Simulation:
    """One seeded world stepped epoch by epoch."""

    def __init__(
        self,
        spec: ScenarioSpec,
        seed: int | None = None,
        policy: str = "rules",
        net: rl.QNet | None = None,
        bridge: ActorBridge | None = None,
        enable_energy: bool = True,
    ) -> None:
        if policy not in POLICIES:
            raise ValueError(f"unknown policy {policy!r}, expected one of {POLICIES}")
        self.spec = spec
        self.seed = spec.seed if seed is None else seed
        self.policy = policy
        self.enable_energy = enable_energy

        sim_cfg = spec.sim
        self.tick_s = sim_cfg["tick_ms"] / 1e3
        self.window_ticks = max(1, round(sim_cfg["loop1_window_ms"] / sim_cfg["tick_ms"]))
        self.windows_per_epoch = max(
            1, round(sim_cfg["loop2_period_ms"] / sim_cfg["loop1_window_ms"])
        )
        self.epochs_per_hour = sim_cfg["epochs_per_hour"]
        self.queue_mode = sim_cfg["queue_mode"]
        self.balance = sim_cfg["balance"]
        pen = sim_cfg["penalties"]
        self.weights = PenaltyWeights(
            fronthaul=pen["fronthaul"],
            allocation=pen["allocation"],
            capacity=pen["capacity"],
        )
        self.delta_slice = pen["slice"]
        self.delta_rb = pen["rb"]

        self.rng_traffic = substream(self.seed, "traffic")
        self.rng_channel = substream(self.seed, "channel")
        self.rng_explore = substream(self.seed, "exploration")

        vodu_ids = [d.vodu_id for d in spec.topology.vodus]
        self.budgets, slice_map = initial_distribution(
            spec.rb.total_rb, vodu_ids, spec.services
        )
        self.slice_map = slice_map
        self.initial_grants = {
            c: spec.services[svc].initial_rb for c, (svc, _) in slice_map.items()
        }

        self.cpe_snr = {
            cpe.cpe_id: compute_snr(
                1,
                _channel_sample(),
                cpe.tx_power_w,
                cpe.noise_w,
                cpe.distance_m,
                spec.raw["topology"]["pathloss_exp"],
            )
            for cpe in spec.topology.cpes
        }

        members_by_service: dict[int, list[int]] = {k: [] for k in spec.services}
        for cpe_id, svc_id in spec.memberships:
            members_by_service[svc_id].append(cpe_id)

        fronthaul = spec.topology.orus[0].fronthaul
        min_rate_factor = sim_cfg.get("min_rate_factor", 8.0)
        self.runtimes: dict[int, SliceRuntime] = {}
        for c, (svc_id, vodu_id) in slice_map.items():
            profile = spec.services[svc_id]
            members = sorted(members_by_service[svc_id])
            grant = next(b for b in self.budgets if b.vodu_id == vodu_id).slice_grants[c]
            mean_pkt = 0.5 * (profile.packet_min_bits + profile.packet_max_bits)
            min_rate = min_rate_factor * mean_pkt / (profile.delay_budget_ms / 1e3)
            self.runtimes[c] = SliceRuntime(
                profile=profile,
                alloc=SliceAllocState(slice_id=c, vodu_id=vodu_id, rb_pool=grant),
                queues=FlowQueues(
                    member_cpes=members,
                    profile=profile,
                    window_ticks=100,
                    tick_duration_s=self.tick_s,
                ),
                fronthaul=fronthaul,
                cpe_snr={m: self.cpe_snr[m] for m in members},
                rb_bandwidth_hz=spec.rb.rb_bandwidth_hz,
                bandwidth_fraction=sim_cfg["bandwidth_fraction"],
                demand_headroom=sim_cfg["demand_headroom"],
                min_demand_rate_bps=min_rate,
            )

        self.vodu_slices = {
            d: [c for c, (_, vd) in slice_map.items() if vd == d] for d in vodu_ids
        }
        self.slice_service = {c: svc for c, (svc, _) in slice_map.items()}

        if policy == "random" and bridge is None:
            bridge = RandomBridge(self.rng_explore)
        elif policy in ("rl", "dqn") and bridge is None:
            if net is None:
                log.warning("policy %s without a network: falling back to rules", policy)
            else:
                bridge = GreedyNetBridge(net, self)
        self.bridge = bridge or ActorBridge()

        self.storage = StorageState(level_kwh=0.0)
        self.epoch = 0
        self.window_index = 0
        self.power_samples: list[float] = []
        self.rb_grant_samples: list[float] = []
        self.report = RunReport(seed=self.seed, policy=policy, hours=0)
        for c in self.runtimes:
            svc = spec.services[self.slice_service[c]]
            self.report.slice_fiveqi[c] = svc.fiveqi
            self.report.slice_budget_ms[c] = svc.delay_budget_ms

    # -- state encoding (shared with the RL bridges) ---------------------

    def encode_loop1_state(self, runtime: SliceRuntime, demands: dict[int, int], queue_signal: float) -> np.ndarray:
        profile = runtime.profile
        return rl.encode_state(
            1,
            {
                "pool_rb": runtime.alloc.rb_pool,
                "demand_rb": sum(demands.values()),
                "scale": runtime.alloc.scale,
                "scale_max": profile.buffer_capacity_pkts / profile.buffer_threshold_pkts,
                "queue_signal": queue_signal,
                "threshold_pkts": profile.buffer_threshold_pkts,
                "capacity_pkts": profile.buffer_capacity_pkts,
            },
        )

    def encode_loop2_state(self, budget: VoduBudget) -> np.ndarray:
        granted_all = sum(b.granted_total() for b in self.budgets)
        mean_util = float(np.mean([b.utilization() for b in self.budgets]))
        return rl.encode_state(
            2,
            {
                "total_rb": self.spec.rb.total_rb,
                "granted_total_rb": granted_all,
                "mean_utilization": mean_util,
                "vodu_budget_rb": budget.rb_budget,
                "vodu_granted_rb": budget.granted_total(),
            },
        )

    # -- stepping ---------------------------------------------------------

    def _window_events(self) -> list[dict[int, list[ArrivalEvent]]]:
        """Arrivals for one window: per tick, a slice -> events map."""
        out: list[dict[int, list[ArrivalEvent]]] = []
        memberships = self.spec.memberships
        profiles = self.spec.services
        lam = np.array(
            [profiles[svc].arrival_rate_pps * self.tick_s for _, svc in memberships]
        )
        for t in range(self.window_ticks):
            counts = self.rng_traffic.poisson(lam)
            tick_map: dict[int, list[ArrivalEvent]] = {}
            if counts.any():
                tick_ms = (self.window_index * self.window_ticks + t) * self.spec.sim["tick_ms"]
                for j in np.nonzero(counts)[0]:
                    cpe_id, svc_id = memberships[j]
                    profile = profiles[svc_id]
                    for _ in range(counts[j]):
                        bits = float(
                            self.rng_traffic.uniform(
                                profile.packet_min_bits, profile.packet_max_bits
                            )
                        )
                        tick_map.setdefault(svc_id, []).append(
                            ArrivalEvent(tick_ms, cpe_id, svc_id, bits)
                        )
            out.append(tick_map)
        return out

    def step_epoch(self) -> tuple[list[Loop1Report], list[Loop2Report]]:
        """One slow-loop epoch: windows_per_epoch fast-loop windows, then the
        slow-loop action pass."""
        period_reports: list[Loop1Report] = []
        for _ in range(self.windows_per_epoch):
            events = self._window_events()
            for budget in self.budgets:
                slices = [self.runtimes[c] for c in self.vodu_slices[budget.vodu_id]]
                reports = run_loop1_epoch(
                    slices,
                    events,
                    self.spec.rb,
                    epoch=self.window_index,
                    weights=self.weights,
                    vodu_utilization=budget.utilization(),
                    choose_action=self.bridge.choose_loop1,
                    queue_mode=self.queue_mode,
                )
                period_reports.extend(reports)
            self.window_index += 1
        self.bridge.observe_loop1(period_reports, self)

        merged = self._merge_reports(period_reports)
        self.budgets, l2_reports = run_loop2_epoch(
            self.budgets,
            merged,
            epoch=self.epoch,
            balance=self.balance,
            delta_slice=self.delta_slice,
            delta_rb=self.delta_rb,
            initial_grants=self.initial_grants,
            choose_action=self.bridge.choose_loop2,
        )
        self.bridge.observe_loop2(l2_reports, self)
        self._sync_pools()
        self._record_epoch(period_reports, l2_reports)
        self.epoch += 1
        return period_reports, l2_reports

    def _merge_reports(self, reports: list[Loop1Report]) -> list[Loop1Report]:
        """Collapse a period's fast-loop reports to one per slice: latest
        coupling signals, mean reward."""
        by_slice: dict[int, list[Loop1Report]] = {}
        for rep in reports:
            by_slice.setdefault(rep.slice_id, []).append(rep)
        merged = []
        for c in sorted(by_slice):
            seq = by_slice[c]
            last = seq[-1]
            merged.append(
                Loop1Report(
                    epoch=self.epoch,
                    slice_id=c,
                    vodu_id=last.vodu_id,
                    scale=last.scale,
                    rb_gap=last.rb_gap,
                    phi=float(np.mean([r.phi for r in seq])),
                    reward=float(np.mean([r.reward for r in seq])),
                    action=last.action,
                    offered_bits=float(np.sum([r.offered_bits for r in seq])),
                )
            )
        return merged

    def _sync_pools(self) -> None:
        from dataclasses import replace

        for budget in self.budgets:
            for c in self.vodu_slices[budget.vodu_id]:
                rt = self.runtimes[c]
                grant = budget.slice_grants[c]
                if rt.alloc.rb_pool == grant:
                    continue
                allocs = dict(rt.alloc.cpe_allocs)
                granted = sum(g for y, g in allocs.values() if y)
                # a shrunk grant revokes CPE allocations, highest id first
                for cpe_id in sorted(allocs, reverse=True):
                    if granted <= grant:
                        break
                    y, g = allocs[cpe_id]
                    if y:
                        allocs[cpe_id] = (0, 0)
                        granted -= g
                rt.alloc = replace(
                    rt.alloc,
                    rb_pool=grant,
                    cpe_allocs=allocs,
                    rb_gap=grant - granted,
                )

    def _record_epoch(self, l1: list[Loop1Report], l2: list[Loop2Report]) -> None:
        for rep in l1:
            self.report.loop1_rows.append(
                (
                    rep.epoch,
                    rep.slice_id,
                    float(rep.scale),
                    rep.rb_gap,
                    float(rep.phi),
                    float(rep.reward),
                    rep.action.value,
                )
            )
        main_rewards = []
        for rep in l2:
            self.report.loop2_rows.append(
                (
                    rep.epoch,
                    rep.vodu_id,
                    rep.slice_id,
                    rep.grant,
                    float(rep.utilization),
                    float(rep.reward_vodu),
                    float(rep.reward_main),
                    rep.action.value,
                )
            )
            main_rewards.append(rep.reward_main)
        if main_rewards:
            self.report.reward_curve.append((self.epoch, float(np.mean(main_rewards))))
        self._check_invariants()
        self.power_samples.append(self._current_power_w())
        self.rb_grant_samples.append(
            float(sum(b.granted_total() for b in self.budgets))
        )

    def _check_invariants(self) -> None:
        total = 0
        for budget in self.budgets:
            granted = budget.granted_total()
            total += budget.rb_budget
            if granted > budget.rb_budget:
                self.report.invariant_violations.append(
                    f"epoch {self.epoch}: vodu {budget.vodu_id} grants {granted} "
                    f"exceed budget {budget.rb_budget}"
                )
            for c in self.vodu_slices[budget.vodu_id]:
                rt = self.runtimes[c]
                if rt.alloc.granted_total() > rt.alloc.rb_pool:
                    self.report.invariant_violations.append(
                        f"epoch {self.epoch}: slice {c} CPE grants exceed its pool"
                    )
        if total > self.spec.rb.total_rb:
            self.report.invariant_violations.append(
                f"epoch {self.epoch}: vodu budgets {total} exceed total {self.spec.rb.total_rb}"
            )

    def _current_power_w(self) -> float:
        """Site power from the current allocation and flow rates."""
        loads: dict[int, list[float]] = {s.server_id: [] for s in self.spec.topology.servers}
        host = {d.vodu_id: d.host_server for d in self.spec.topology.vodus}
        for c, rt in self.runtimes.items():
            server = host[rt.alloc.vodu_id]
            rates = rt.service_rates_bps()
            lam = rt.queues.arrival_rate_pps()
            pkt = np.maximum(rt.queues.mean_packet_bits, 1.0)
            vnf_count = max(
                s.vnf_count for s in self.spec.topology.servers if s.server_id == server
            )
            for i, cpe_id in enumerate(rt.queues.member_cpes):
                y, _ = rt.alloc.cpe_allocs.get(cpe_id, (0, 0))
                if y and rates[i] > 0:
                    mu = rates[i] / pkt[i]
                    loads[server].append(lam[i] / (vnf_count * mu))
        servers = [
            ServerPower(
                base_w=s.base_power_w,
                vnf_w=s.vnf_power_w,
                vnf_count=s.vnf_count,
                cpe_load_ratios=tuple(loads[s.server_id]),
            )
            for s in self.spec.topology.servers
        ]
        return total_power(servers)

    def _hour_step(self, hour: int, solar_kwh: float) -> HourSolution:
        mean_power_w = float(np.mean(self.power_samples)) if self.power_samples else 0.0
        demand_kwh = mean_power_w / 1000.0
        rb_mean = float(np.mean(self.rb_grant_samples)) if self.rb_grant_samples else 0.0
        self.power_samples.clear()
        self.rb_grant_samples.clear()

        solution = solve_hour(
            HourInputs(
                hour=hour,
                solar_kwh=solar_kwh,
                demand_kwh=demand_kwh,
                stored_level_kwh=self.storage.level_kwh,
                rb_revenue_mean=rb_mean,
            ),
            self.spec.prices,
            self.spec.limits,
        )
        ledger = solution.ledger
        self.storage.level_kwh = ledger.stored_level_kwh
        self.storage.history.append(ledger)
        self.report.ledger_rows.append(
            (
                hour,
                float(ledger.solar_kwh),
                float(ledger.grid_in_kwh),
                float(ledger.surplus_next_kwh),
                float(ledger.charge_kwh),
                float(ledger.discharge_kwh),
                float(ledger.stored_level_kwh),
                float(ledger.consumption_kwh),
                float(ledger.available_kwh),
                float(ledger.cost),
            )
        )
        self.report.solution_rows.append(
            (
                hour,
                solution.storage_mode,
                float(solution.objective),
                float(solution.energy_cost),
                float(solution.rb_revenue_mean),
                solution.iterations,
                int(solution.converged),
            )
        )
        self.report.rb_history.append(rb_mean)
        self.report.cost_history.append(float(solution.energy_cost))
        return solution

    def run(self, hours: int | None = None) -> RunReport:
        hours = hours if hours is not None else self.spec.sim["hours"]
        start = time.perf_counter()
        solar = solar_kwh_by_hour(self.spec, hours) if self.enable_energy else None
        for hour in range(hours):
            for _ in range(self.epochs_per_hour):
                self.step_epoch()
            if self.enable_energy:
                self._hour_step(hour, float(solar[hour]))
        self._collect_satisfaction()
        self.report.hours = hours
        self.report.wall_clock_s = time.perf_counter() - start
        return self.report

    def _collect_satisfaction(self) -> None:
        drops = 0
        for c, rt in self.runtimes.items():
            self.report.slice_satisfaction[c] = (rt.satisfied_samples, rt.total_samples)
            drops += rt.queues.drops_pkts
        self.report.dropped_pkts = drops


def _channel_sample():
    from .radio import ChannelSample

    return ChannelSample(estimated_csi=1.0, csi_error=0.0)


def run_simulation(
    spec: ScenarioSpec,
    seed: int | None = None,
    hours: int | None = None,
    policy: str = "rules",
    net: rl.QNet | None = None,
) -> RunReport:
    """Convenience wrapper: build a simulation, run it, return the report."""
    if seed is not None and seed != spec.seed:
        spec = _reseeded(spec, seed)
    sim = Simulation(spec, policy=policy, net=net)
    return sim.run(hours)


def _reseeded(spec: ScenarioSpec, seed: int) -> ScenarioSpec:
    from .scenario import build_spec

    raw = dict(spec.raw)
    raw["seed"] = seed
    return build_spec(raw)
