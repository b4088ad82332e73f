"""Prioritized replay memory and the actor-side n-step accumulator."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

PRIORITY_FLOOR = 1e-6


@dataclass(frozen=True)
class Experience:
    """One n-step transition ready for the learner.

    ``n_step_reward`` is the discounted sum of the first n rewards and
    ``discount`` the factor gamma^n applied to the bootstrap value (0 for
    terminal transitions, mirrored by ``done``).
    """

    state: np.ndarray
    action: int
    n_step_reward: float
    bootstrap_state: np.ndarray
    done: bool
    discount: float
    priority: float = 1.0


class ReplayMemory:
    """Circular buffer sampling transitions proportionally to priority^alpha."""

    def __init__(
        self,
        capacity: int = 50_000,
        state_dim: int = 3,
        priority_exponent: float = 0.6,
        importance_exponent: float = 0.4,
    ) -> None:
        if capacity <= 0:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.priority_exponent = priority_exponent
        self.importance_exponent = importance_exponent
        self._states = np.zeros((capacity, state_dim))
        self._actions = np.zeros(capacity, dtype=np.int64)
        self._rewards = np.zeros(capacity)
        self._bootstrap = np.zeros((capacity, state_dim))
        self._done = np.zeros(capacity, dtype=bool)
        self._discount = np.zeros(capacity)
        self._priorities = np.zeros(capacity)
        self._size = 0
        self._pos = 0

    def __len__(self) -> int:
        return self._size

    def add(self, exp: Experience) -> None:
        if not np.isfinite(exp.n_step_reward):
            raise ValueError("non-finite n-step reward")
        i = self._pos
        self._states[i] = exp.state
        self._actions[i] = exp.action
        self._rewards[i] = exp.n_step_reward
        self._bootstrap[i] = exp.bootstrap_state
        self._done[i] = exp.done
        self._discount[i] = exp.discount
        self._priorities[i] = max(exp.priority, PRIORITY_FLOOR)
        self._pos = (self._pos + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def sample_probabilities(self) -> np.ndarray:
        p = self._priorities[: self._size] ** self.priority_exponent
        return p / p.sum()

    def sample(
        self, batch_size: int, rng: np.random.Generator
    ) -> tuple[np.ndarray, dict[str, np.ndarray]]:
        """Draw a batch; returns indices and columns incl. importance weights."""
        if self._size == 0:
            raise ValueError("cannot sample from empty memory")
        probs = self.sample_probabilities()
        idx = rng.choice(self._size, size=batch_size, p=probs)
        weights = (self._size * probs[idx]) ** (-self.importance_exponent)
        weights = weights / weights.max()
        return idx, {
            "states": self._states[idx],
            "actions": self._actions[idx],
            "rewards": self._rewards[idx],
            "bootstrap_states": self._bootstrap[idx],
            "done": self._done[idx],
            "discount": self._discount[idx],
            "weights": weights,
        }

    def update_priorities(self, idx: np.ndarray, priorities: np.ndarray) -> None:
        self._priorities[idx] = np.maximum(priorities, PRIORITY_FLOOR)


class NStepAccumulator:
    """Folds a per-stream reward window into n-step transitions.

    One accumulator per experience stream (slice or vO-DU actor).  Emits a
    transition once n rewards have accumulated past a state; flushing at
    stream end emits the shorter tails with done=True and zero bootstrap.
    """

    def __init__(self, n_steps: int, gamma: float) -> None:
        if n_steps < 1:
            raise ValueError("n_steps must be >= 1")
        if not 0.0 <= gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        self.n_steps = n_steps
        self.gamma = gamma
        self._pending: deque[tuple[np.ndarray, int, float]] = deque()

    def push(
        self, state: np.ndarray, action: int, reward: float, next_state: np.ndarray
    ) -> list[Experience]:
        self._pending.append((np.asarray(state, dtype=float), action, reward))
        out: list[Experience] = []
        if len(self._pending) >= self.n_steps:
            s0, a0, _ = self._pending[0]
            g = 0.0
            for k, (_, _, r) in enumerate(self._pending):
                g += (self.gamma**k) * r
            self._pending.popleft()
            out.append(
                Experience(
                    state=s0,
                    action=a0,
                    n_step_reward=g,
                    bootstrap_state=np.asarray(next_state, dtype=float),
                    done=False,
                    discount=self.gamma**self.n_steps,
                )
            )
        return out

    def flush(self) -> list[Experience]:
        """Emit the remaining tail transitions as terminal."""
        out: list[Experience] = []
        pending = list(self._pending)
        self._pending.clear()
        for i, (s, a, _) in enumerate(pending):
            g = 0.0
            for k in range(i, len(pending)):
                g += (self.gamma ** (k - i)) * pending[k][2]
            out.append(
                Experience(
                    state=s,
                    action=a,
                    n_step_reward=g,
                    bootstrap_state=np.zeros_like(s),
                    done=True,
                    discount=0.0,
                )
            )
        return out
