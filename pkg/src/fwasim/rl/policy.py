"""Actor-side helpers: state encoding and the epsilon-greedy policy."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .qnet import QNet


def _clip01(x: float) -> float:
    return min(max(x, 0.0), 1.0)


def encode_state(loop: int, raw: dict[str, float]) -> np.ndarray:
    """Normalize a loop observation into the 3-vector the network expects.

    Fast loop (1): demand pressure against the slice pool, the scaling
    factor against its maximum, and the queue-headroom signal between
    threshold and capacity.  Slow loop (2): free fraction of the total RB
    pool, mean vO-DU utilization, and the vO-DU's granted budget fraction.
    """
    if loop == 1:
        pool = raw["pool_rb"]
        demand = raw["demand_rb"]
        first = _clip01(demand / pool) if pool > 0 else (1.0 if demand > 0 else 0.0)
        scale_max = raw.get("scale_max", 1.0)
        second = _clip01(raw["scale"] / scale_max) if scale_max > 0 else 0.0
        span = raw["capacity_pkts"] - raw["threshold_pkts"]
        third = _clip01((raw["queue_signal"] - raw["threshold_pkts"]) / span) if span > 0 else 0.0
    elif loop == 2:
        total = raw["total_rb"]
        first = _clip01((total - raw["granted_total_rb"]) / total) if total > 0 else 0.0
        second = _clip01(raw["mean_utilization"])
        budget = raw["vodu_budget_rb"]
        third = _clip01(raw["vodu_granted_rb"] / budget) if budget > 0 else 0.0
    else:
        raise ValueError(f"loop must be 1 or 2, got {loop}")
    return np.array([first, second, third])


def act(net: QNet, state: np.ndarray, epsilon: float, rng: np.random.Generator) -> int:
    """Epsilon-greedy action; argmax ties break toward the lowest index."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must lie in [0, 1], got {epsilon}")
    if epsilon > 0 and rng.random() < epsilon:
        return int(rng.integers(net.n_actions))
    q = net.forward(state)[0]
    return int(np.argmax(q))


@dataclass(frozen=True)
class EpsilonSchedule:
    """Linear anneal from start to end over a fixed number of steps."""

    start: float = 1.0
    end: float = 0.05
    anneal_steps: int = 50_000

    def value(self, step: int) -> float:
        if step >= self.anneal_steps:
            return self.end
        frac = step / self.anneal_steps
        return self.start + frac * (self.end - self.start)
