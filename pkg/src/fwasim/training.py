"""Actor/learner training harness.

Actors run seeded simulation copies, turning each slice decision into an
n-step transition; one learner owns the network and consumes prioritized
batches.  The deterministic mode interleaves actors round-robin in a
single thread (the schedule the tests rely on); with ``parallel_actors``
above one and determinism off, actor threads feed the learner over an
ordered queue and read versioned parameter snapshots.
"""

from __future__ import annotations

import queue
import threading
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import rl
from .engine import ActorBridge, Simulation
from .intra_slice import LOOP1_ACTIONS, action_scale
from .inter_slice import LOOP2_ACTIONS
from .scenario import ScenarioSpec, substream

ALGOS = ("apex", "dqn")


@dataclass
class TrainConfig:
    algo: str = "apex"
    steps: int = 100_000
    parallel_actors: int = 1
    deterministic: bool = True
    log_interval: int = 1_000
    snapshot_every: int = 200


@dataclass
class TrainResult:
    net: rl.QNet
    curve_rows: list[tuple[int, float, float, float]] = field(default_factory=list)
    final_epsilon: float = 0.0
    total_steps: int = 0

    def write_curve(self, path) -> None:
        lines = ["step,loss,mean_reward,epsilon"]
        lines.extend(
            f"{s},{loss!r},{mr!r},{eps!r}" for s, loss, mr, eps in self.curve_rows
        )
        from pathlib import Path

        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


class TrainingBridge(ActorBridge):
    """Epsilon-greedy acting plus per-stream n-step experience recording."""

    def __init__(
        self,
        trainer: "Trainer",
        actor_id: int,
        rng: np.random.Generator,
        net: rl.QNet,
    ) -> None:
        self.trainer = trainer
        self.actor_id = actor_id
        self.rng = rng
        self.net = net
        self.seq = 0
        n, gamma = trainer.n_steps, trainer.gamma
        self._acc: dict[tuple, rl.NStepAccumulator] = {}
        self._pending: dict[tuple, tuple[np.ndarray, int]] = {}
        self._rewarded: dict[tuple, tuple[np.ndarray, int, float]] = {}
        self._make_acc = lambda: rl.NStepAccumulator(n, gamma)

    def _advance(self, stream: tuple, state: np.ndarray) -> None:
        prev = self._rewarded.pop(stream, None)
        if prev is not None:
            acc = self._acc.setdefault(stream, self._make_acc())
            for exp in acc.push(prev[0], prev[1], prev[2], state):
                self._emit(exp)

    def _emit(self, exp: rl.Experience) -> None:
        self.seq += 1
        self.trainer.submit(self.actor_id, self.seq, exp)

    def _choose(self, state: np.ndarray) -> int:
        eps = self.trainer.epsilon()
        return rl.act(self.net, state, eps, self.rng)

    def choose_loop1(self, runtime, demands, queue_signal):
        sim = self.trainer.sims[self.actor_id]
        state = sim.encode_loop1_state(runtime, demands, queue_signal)
        stream = ("l1", runtime.slice_id)
        self._advance(stream, state)
        idx = self._choose(state)
        self._pending[stream] = (state, idx)
        self.trainer.count_step(self.actor_id)
        action = LOOP1_ACTIONS[idx]
        return action, action_scale(
            action,
            runtime.profile.buffer_capacity_pkts,
            runtime.profile.buffer_threshold_pkts,
        )

    def choose_loop2(self, budget, slice_id, report):
        sim = self.trainer.sims[self.actor_id]
        state = sim.encode_loop2_state(budget)
        stream = ("l2", budget.vodu_id, slice_id)
        self._advance(stream, state)
        idx = self._choose(state)
        self._pending[stream] = (state, idx)
        self.trainer.count_step(self.actor_id)
        return LOOP2_ACTIONS[idx]

    def observe_loop1(self, reports, sim) -> None:
        # merge to per-slice mean reward so the reward matches the decision cadence
        scale = self.trainer.reward_scale
        rewards: dict[int, list[float]] = {}
        for rep in reports:
            rewards.setdefault(rep.slice_id, []).append(rep.reward)
        for slice_id, vals in rewards.items():
            stream = ("l1", slice_id)
            pending = self._pending.pop(stream, None)
            if pending is not None:
                self._rewarded[stream] = (pending[0], pending[1], scale * float(np.mean(vals)))

    def observe_loop2(self, reports, sim) -> None:
        scale = self.trainer.reward_scale
        for rep in reports:
            stream = ("l2", rep.vodu_id, rep.slice_id)
            pending = self._pending.pop(stream, None)
            if pending is not None:
                self._rewarded[stream] = (pending[0], pending[1], scale * rep.reward_main)
            self.trainer.record_reward(rep.reward_main)

    def flush(self) -> None:
        for stream, acc in self._acc.items():
            prev = self._rewarded.pop(stream, None)
            if prev is not None:
                for exp in acc.push(prev[0], prev[1], prev[2], np.zeros(3)):
                    self._emit(exp)
            for exp in acc.flush():
                self._emit(exp)


class Trainer:
    """Owns the learner, the replay memory and the actor simulations."""

    def __init__(self, spec: ScenarioSpec, seed: int, cfg: TrainConfig) -> None:
        if cfg.algo not in ALGOS:
            raise ValueError(f"unknown algo {cfg.algo!r}, expected one of {ALGOS}")
        self.spec = spec
        self.cfg = cfg
        rl_cfg = spec.rl
        self.gamma = rl_cfg["gamma"]
        self.n_steps = rl_cfg["n_steps"] if cfg.algo == "apex" else 1
        self.learn_every = rl_cfg["learn_every"]
        self.min_fill = rl_cfg["min_fill"]

        net = rl.QNet(tuple(rl_cfg["layers"]), rng=substream(seed, "rl-init"))
        self.learner = rl.Learner(
            net,
            rl.LearnerConfig(
                batch_size=rl_cfg["batch_size"],
                lr=rl_cfg["lr"],
                gamma=self.gamma,
                target_sync_every=rl_cfg["target_sync"],
                double_q=(cfg.algo == "apex"),
            ),
        )
        prioritized = cfg.algo == "apex"
        self.memory = rl.ReplayMemory(
            capacity=rl_cfg["memory_capacity"],
            priority_exponent=rl_cfg["priority_exponent"] if prioritized else 0.0,
            importance_exponent=rl_cfg["importance_exponent"] if prioritized else 0.0,
        )
        self._beta_start = rl_cfg["importance_exponent"] if prioritized else 0.0
        self.schedule = rl.EpsilonSchedule(
            rl_cfg["epsilon_start"], rl_cfg["epsilon_end"], rl_cfg["epsilon_anneal_steps"]
        )
        self.rng_sample = substream(seed, "rl-init")

        self.total_steps = 0
        self.last_loss = float("nan")
        self.recent_rewards: deque[float] = deque(maxlen=500)
        self.curve_rows: list[tuple[int, float, float, float]] = []
        self._queue: queue.Queue | None = None
        self._lock = threading.Lock()

        self.sims: dict[int, Simulation] = {}
        self.bridges: dict[int, TrainingBridge] = {}
        for a in range(cfg.parallel_actors):
            actor_seed = seed + 7919 * a
            actor_spec = spec if a == 0 else _with_seed(spec, actor_seed)
            bridge = TrainingBridge(
                self, a, substream(actor_seed, "exploration"), self.learner.net
            )
            sim = Simulation(
                actor_spec,
                policy="dqn" if cfg.algo == "dqn" else "rl",
                bridge=bridge,
                enable_energy=False,
            )
            self.sims[a] = sim
            self.bridges[a] = bridge

    # -- callbacks from bridges -----------------------------------------

    def epsilon(self) -> float:
        return self.schedule.value(self.total_steps)

    def count_step(self, actor_id: int) -> None:
        with self._lock:
            self.total_steps += 1
            frac = min(self.total_steps / self.cfg.steps, 1.0)
            self.memory.importance_exponent = (
                self._beta_start + frac * (1.0 - self._beta_start)
                if self._beta_start > 0
                else 0.0
            )
            if self.total_steps % self.cfg.log_interval == 0:
                mean_r = float(np.mean(self.recent_rewards)) if self.recent_rewards else 0.0
                self.curve_rows.append(
                    (self.total_steps, self.last_loss, mean_r, self.epsilon())
                )

    def record_reward(self, reward: float) -> None:
        self.recent_rewards.append(reward)

    def submit(self, actor_id: int, seq: int, exp: rl.Experience) -> None:
        if self._queue is not None:
            self._queue.put((actor_id, seq, exp))
        else:
            self.memory.add(exp)

    # -- driving ----------------------------------------------------------

    def _learner_step(self) -> None:
        loss = self.learner.step(self.memory, self.rng_sample)
        if not np.isfinite(loss) or not self.learner.net.is_finite():
            raise ArithmeticError(
                f"training diverged at step {self.total_steps}: loss {loss}"
            )
        self.last_loss = loss

    def run(self) -> TrainResult:
        if self.cfg.steps <= 0:
            return TrainResult(
                net=self.learner.net, curve_rows=[], final_epsilon=self.epsilon()
            )
        if self.cfg.deterministic or self.cfg.parallel_actors == 1:
            self._run_round_robin()
        else:
            self._run_threaded()
        for bridge in self.bridges.values():
            bridge.flush()
        return TrainResult(
            net=self.learner.net,
            curve_rows=self.curve_rows,
            final_epsilon=self.epsilon(),
            total_steps=self.total_steps,
        )

    def _run_round_robin(self) -> None:
        actor_ids = sorted(self.sims)
        while self.total_steps < self.cfg.steps:
            for a in actor_ids:
                self.sims[a].step_epoch()
            # hold one learner step per learn_every environment steps
            if len(self.memory) >= self.min_fill:
                while self.learner.step_count < self.total_steps // self.learn_every:
                    self._learner_step()

    def _run_threaded(self) -> None:
        self._queue = queue.Queue(maxsize=10_000)
        stop = threading.Event()

        def actor_loop(a: int) -> None:
            while not stop.is_set() and self.total_steps < self.cfg.steps:
                self.sims[a].step_epoch()
                if self.total_steps % self.cfg.snapshot_every == 0:
                    with self._lock:
                        self.bridges[a].net = self.learner.net.clone()

        threads = [
            threading.Thread(target=actor_loop, args=(a,), daemon=True)
            for a in sorted(self.sims)
        ]
        for t in threads:
            t.start()
        learner_steps_due = 0
        while self.total_steps < self.cfg.steps or not self._queue.empty():
            try:
                _actor, _seq, exp = self._queue.get(timeout=0.1)
            except queue.Empty:
                if all(not t.is_alive() for t in threads):
                    break
                continue
            self.memory.add(exp)
            learner_steps_due += 1
            if len(self.memory) >= self.min_fill and learner_steps_due >= self.learn_every:
                learner_steps_due = 0
                loss = self.learner.step(self.memory, self.rng_sample)
                self.last_loss = loss
        stop.set()
        for t in threads:
            t.join(timeout=5.0)
        self._queue = None


def _with_seed(spec: ScenarioSpec, seed: int) -> ScenarioSpec:
    from .scenario import build_spec

    raw = dict(spec.raw)
    raw["seed"] = seed
    return build_spec(raw)


def train(
    spec: ScenarioSpec,
    seed: int | None = None,
    algo: str = "apex",
    steps: int | None = None,
    parallel_actors: int = 1,
    deterministic: bool = True,
    log_interval: int | None = None,
) -> TrainResult:
    seed = spec.seed if seed is None else seed
    if seed != spec.seed:
        spec = _with_seed(spec, seed)
    cfg = TrainConfig(
        algo=algo,
        steps=steps if steps is not None else spec.rl["train_steps"],
        parallel_actors=max(1, parallel_actors),
        deterministic=deterministic,
        log_interval=log_interval or spec.rl["log_interval"],
    )
    trainer = Trainer(spec, seed, cfg)
    return trainer.run()
