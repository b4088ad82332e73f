"""Learner-side math: n-step returns, the TD loss, and the update step."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .qnet import QNet
from .replay import PRIORITY_FLOOR, ReplayMemory


def n_step_return(rewards: Sequence[float], gamma: float, bootstrap_q: float) -> float:
    """Discounted n-step return with a bootstrap tail.

    sum_k gamma^k * r_k + gamma^n * bootstrap_q; terminal windows pass
    bootstrap_q = 0.
    """
    if len(rewards) == 0:
        raise ValueError("empty reward window")
    if not 0.0 <= gamma < 1.0:
        raise ValueError(f"gamma must lie in [0, 1), got {gamma}")
    total = 0.0
    for k, r in enumerate(rewards):
        total += (gamma**k) * r
    return total + gamma ** len(rewards) * bootstrap_q


def td_loss(target_return: float, q_estimate: float) -> float:
    """Half squared TD error; d(loss)/d(q) = q - target."""
    err = target_return - q_estimate
    return 0.5 * err * err


def double_q_bootstrap(
    online: QNet, target: QNet, states: np.ndarray
) -> np.ndarray:
    """Value of the online argmax action under the target network."""
    q_online = online.forward(states)
    greedy = np.argmax(q_online, axis=1)
    q_target = target.forward(states)
    return q_target[np.arange(len(greedy)), greedy]


@dataclass
class LearnerConfig:
    batch_size: int = 64
    lr: float = 1e-3
    gamma: float = 0.99
    target_sync_every: int = 500
    grad_clip_norm: float = 10.0
    double_q: bool = True
    priority_floor: float = PRIORITY_FLOOR


class Learner:
    """Owns the online and target networks and applies sampled updates."""

    def __init__(self, net: QNet, config: LearnerConfig | None = None) -> None:
        self.net = net
        self.target = net.clone()
        self.config = config or LearnerConfig()
        self.step_count = 0

    def step(self, memory: ReplayMemory, rng: np.random.Generator) -> float:
        """One prioritized gradient step; returns the weighted batch loss.

        Sampled priorities refresh to |TD| + floor, and the target network
        re-syncs every ``target_sync_every`` steps.
        """
        cfg = self.config
        idx, batch = memory.sample(cfg.batch_size, rng)
        states = batch["states"]
        actions = batch["actions"]
        weights = batch["weights"]

        if cfg.double_q:
            bootstrap = double_q_bootstrap(self.net, self.target, batch["bootstrap_states"])
        else:
            bootstrap = self.target.forward(batch["bootstrap_states"]).max(axis=1)
        targets = batch["rewards"] + batch["discount"] * np.where(
            batch["done"], 0.0, bootstrap
        )

        q_all, activations = self.net.forward_cached(states)
        rows = np.arange(len(actions))
        td = targets - q_all[rows, actions]
        loss = float(np.mean(weights * 0.5 * td**2))

        d_out = np.zeros_like(q_all)
        d_out[rows, actions] = weights * (q_all[rows, actions] - targets) / len(actions)
        d_w, d_b = self.net.gradients(activations, d_out)
        self.net.apply_gradients(d_w, d_b, cfg.lr, cfg.grad_clip_norm)

        memory.update_priorities(idx, np.abs(td) + cfg.priority_floor)

        self.step_count += 1
        if self.step_count % cfg.target_sync_every == 0:
            self.target.copy_from(self.net)
        return loss
