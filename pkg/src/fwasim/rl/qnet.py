"""Small fully-connected Q-network with hand-rolled backprop.

Default shape 3-64-64-4: three normalized state components in, one Q-value
per action out.  ReLU hidden activations, linear output.  Parameters are
plain numpy arrays so the learner can clip and apply gradients directly.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

CHECKPOINT_HEADER = "fwa-qnet-v1"


class QNet:
    def __init__(
        self,
        layer_sizes: tuple[int, ...] = (3, 64, 64, 4),
        rng: np.random.Generator | None = None,
    ) -> None:
        if len(layer_sizes) < 2:
            raise ValueError("need at least input and output layers")
        self.layer_sizes = tuple(int(n) for n in layer_sizes)
        rng = rng or np.random.default_rng(0)
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for n_in, n_out in zip(self.layer_sizes, self.layer_sizes[1:]):
            scale = np.sqrt(2.0 / n_in)
            self.weights.append(rng.normal(0.0, scale, size=(n_in, n_out)))
            self.biases.append(np.zeros(n_out))

    @property
    def n_actions(self) -> int:
        return self.layer_sizes[-1]

    def forward(self, states: np.ndarray) -> np.ndarray:
        """Q-values for a batch of states, shape (batch, n_actions)."""
        x = np.atleast_2d(np.asarray(states, dtype=float))
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            x = np.maximum(x @ w + b, 0.0)
        return x @ self.weights[-1] + self.biases[-1]

    def forward_cached(self, states: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
        """Forward pass keeping layer activations for backprop."""
        x = np.atleast_2d(np.asarray(states, dtype=float))
        activations = [x]
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            x = np.maximum(x @ w + b, 0.0)
            activations.append(x)
        out = x @ self.weights[-1] + self.biases[-1]
        return out, activations

    def gradients(
        self, activations: list[np.ndarray], d_out: np.ndarray
    ) -> tuple[list[np.ndarray], list[np.ndarray]]:
        """Backpropagate d(loss)/d(output) into per-parameter gradients."""
        d_w = [np.zeros_like(w) for w in self.weights]
        d_b = [np.zeros_like(b) for b in self.biases]
        delta = d_out
        for layer in range(len(self.weights) - 1, -1, -1):
            d_w[layer] = activations[layer].T @ delta
            d_b[layer] = delta.sum(axis=0)
            if layer > 0:
                delta = (delta @ self.weights[layer].T) * (activations[layer] > 0)
        return d_w, d_b

    def apply_gradients(
        self,
        d_w: list[np.ndarray],
        d_b: list[np.ndarray],
        lr: float,
        clip_norm: float = 10.0,
    ) -> None:
        """One SGD step with global gradient-norm clipping."""
        sq = sum(float((g**2).sum()) for g in d_w) + sum(
            float((g**2).sum()) for g in d_b
        )
        norm = np.sqrt(sq)
        factor = clip_norm / norm if norm > clip_norm else 1.0
        for w, g in zip(self.weights, d_w):
            w -= lr * factor * g
        for b, g in zip(self.biases, d_b):
            b -= lr * factor * g

    def copy_from(self, other: "QNet") -> None:
        if other.layer_sizes != self.layer_sizes:
            raise ValueError("layer shapes differ")
        self.weights = [w.copy() for w in other.weights]
        self.biases = [b.copy() for b in other.biases]

    def clone(self) -> "QNet":
        net = QNet.__new__(QNet)
        net.layer_sizes = self.layer_sizes
        net.weights = [w.copy() for w in self.weights]
        net.biases = [b.copy() for b in self.biases]
        return net

    def is_finite(self) -> bool:
        return all(np.isfinite(w).all() for w in self.weights) and all(
            np.isfinite(b).all() for b in self.biases
        )


def save_checkpoint(net: QNet, path: str | Path) -> None:
    """Plain-text dump: header, layer sizes, then row-major weights and
    biases per layer."""
    lines = [CHECKPOINT_HEADER, " ".join(str(n) for n in net.layer_sizes)]
    for w, b in zip(net.weights, net.biases):
        lines.append(" ".join(f"{v:.17g}" for v in w.ravel(order="C")))
        lines.append(" ".join(f"{v:.17g}" for v in b))
    Path(path).write_text("\n".join(lines) + "\n")


def load_checkpoint(path: str | Path) -> QNet:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != CHECKPOINT_HEADER:
        raise ValueError(f"not a {CHECKPOINT_HEADER} checkpoint: {path}")
    layer_sizes = tuple(int(n) for n in lines[1].split())
    net = QNet(layer_sizes)
    row = 2
    for layer, (n_in, n_out) in enumerate(zip(layer_sizes, layer_sizes[1:])):
        w = np.array([float(v) for v in lines[row].split()]).reshape(n_in, n_out)
        b = np.array([float(v) for v in lines[row + 1].split()])
        net.weights[layer] = w
        net.biases[layer] = b
        row += 2
    return net
