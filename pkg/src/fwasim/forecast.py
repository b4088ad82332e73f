"""Incremental forecaster over the hourly solution records.

One model instance per series (RB grants, energy cost): a 100-lag window
feeding a single hidden layer and one linear output, trained on squared
error by plain mini-batch gradient descent.  Increments retrain on the
newly arrived records mixed with a bounded replay of recent history, so
earlier behaviour degrades gracefully instead of being overwritten.
Persistence and moving-average baselines ship alongside for comparison.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

CHECKPOINT_HEADER = "fwa-clnet-v1"
REPLAY_CAPACITY = 500


class InsufficientHistoryError(ValueError):
    """Series shorter than the model's input window."""


@dataclass
class ClConfig:
    window: int = 100
    hidden: int = 100
    epochs: int = 100
    batch_size: int = 32
    lr: float = 0.05
    increment_epochs: int = 20
    seed: int = 0


@dataclass
class SolutionSeries:
    """Hourly solver outputs, forward-filled over any ingestion gaps."""

    values: np.ndarray
    filled_gaps: int = 0

    @classmethod
    def from_records(cls, hours: np.ndarray, values: np.ndarray) -> "SolutionSeries":
        hours = np.asarray(hours, dtype=int)
        values = np.asarray(values, dtype=float)
        if len(hours) != len(values) or len(hours) == 0:
            raise ValueError("hours and values must be equally sized and nonempty")
        if np.any(np.diff(hours) <= 0):
            raise ValueError("timestamps must be strictly increasing")
        span = hours[-1] - hours[0] + 1
        out = np.empty(span)
        filled = 0
        pos = 0
        for h in range(hours[0], hours[-1] + 1):
            if pos < len(hours) and hours[pos] == h:
                out[h - hours[0]] = values[pos]
                pos += 1
            else:
                out[h - hours[0]] = out[h - hours[0] - 1]
                filled += 1
        return cls(values=out, filled_gaps=filled)


class ClModel:
    """Window-to-next-value regressor with a replay buffer for increments."""

    def __init__(self, cfg: ClConfig) -> None:
        self.cfg = cfg
        rng = np.random.default_rng(cfg.seed)
        w, h = cfg.window, cfg.hidden
        self.w1 = rng.normal(0.0, 1.0 / np.sqrt(w), size=(w, h))
        self.b1 = np.zeros(h)
        self.w2 = rng.normal(0.0, 1.0 / np.sqrt(h), size=(h, 1))
        self.b2 = np.zeros(1)
        self.x_mean = 0.0
        self.x_scale = 1.0
        self.epoch_losses: list[float] = []
        self.replay_x = np.zeros((0, w))
        self.replay_y = np.zeros(0)
        self.context = np.zeros(0)

    # -- internals -----------------------------------------------------

    def _normalize(self, x: np.ndarray) -> np.ndarray:
        return (x - self.x_mean) / self.x_scale

    def _denormalize(self, x: np.ndarray) -> np.ndarray:
        return x * self.x_scale + self.x_mean

    def _forward(self, xn: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        hidden = np.tanh(xn @ self.w1 + self.b1)
        return hidden @ self.w2 + self.b2, hidden

    def predict_next(self, window_values: np.ndarray) -> float:
        xn = self._normalize(np.asarray(window_values, dtype=float))[None, :]
        out, _ = self._forward(xn)
        return float(self._denormalize(out)[0, 0])

    def _train(self, x: np.ndarray, y: np.ndarray, epochs: int) -> None:
        xn = self._normalize(x)
        yn = self._normalize(y)[:, None]
        lr = self.cfg.lr
        n = len(xn)
        prev_loss = np.inf
        for _ in range(epochs):
            for start in range(0, n, self.cfg.batch_size):
                xb = xn[start : start + self.cfg.batch_size]
                yb = yn[start : start + self.cfg.batch_size]
                out, hidden = self._forward(xb)
                err = out - yb
                d_out = 2.0 * err / len(xb)
                d_w2 = hidden.T @ d_out
                d_b2 = d_out.sum(axis=0)
                d_hidden = (d_out @ self.w2.T) * (1.0 - hidden**2)
                d_w1 = xb.T @ d_hidden
                d_b1 = d_hidden.sum(axis=0)
                self.w2 -= lr * d_w2
                self.b2 -= lr * d_b2
                self.w1 -= lr * d_w1
                self.b1 -= lr * d_b1
            out, _ = self._forward(xn)
            loss = float(np.mean((out - yn) ** 2))
            self.epoch_losses.append(loss)
            if loss > prev_loss:
                lr *= 0.5
            prev_loss = loss

    def _remember(self, x: np.ndarray, y: np.ndarray) -> None:
        self.replay_x = np.vstack([self.replay_x, x])[-REPLAY_CAPACITY:]
        self.replay_y = np.concatenate([self.replay_y, y])[-REPLAY_CAPACITY:]

    def mse(self, series: np.ndarray) -> float:
        x, y = sliding_windows(series, self.cfg.window)
        out, _ = self._forward(self._normalize(x))
        return float(np.mean((self._denormalize(out)[:, 0] - y) ** 2))


def sliding_windows(series: np.ndarray, window: int) -> tuple[np.ndarray, np.ndarray]:
    series = np.asarray(series, dtype=float)
    if len(series) < window + 1:
        raise InsufficientHistoryError(
            f"need at least {window + 1} records, have {len(series)}"
        )
    n = len(series) - window
    x = np.stack([series[i : i + window] for i in range(n)])
    y = series[window:]
    return x, y


def fit_initial(series: np.ndarray, cfg: ClConfig | None = None) -> ClModel:
    """Train a fresh model on the historical range by windowed MSE descent."""
    cfg = cfg or ClConfig()
    model = ClModel(cfg)
    x, y = sliding_windows(series, cfg.window)
    model.x_mean = float(np.mean(series))
    model.x_scale = float(np.std(series)) or 1.0
    model._train(x, y, cfg.epochs)
    model._remember(x, y)
    model.context = np.asarray(series[-cfg.window :], dtype=float).copy()
    return model


def update_increment(model: ClModel, new_records: np.ndarray) -> ClModel:
    """Fold newly arrived records into the model without full retraining.

    Trains on windows spanning the stored context plus the new records,
    mixed with the replay buffer; an empty increment is a no-op.
    Normalization stats stay frozen so parameters remain comparable.
    """
    new_records = np.asarray(new_records, dtype=float)
    if new_records.size == 0:
        return model
    if model.context.size < model.cfg.window:
        raise InsufficientHistoryError("model has no training context yet")
    extended = np.concatenate([model.context, new_records])
    x_new, y_new = sliding_windows(extended, model.cfg.window)
    x = np.vstack([x_new, model.replay_x]) if len(model.replay_x) else x_new
    y = np.concatenate([y_new, model.replay_y]) if len(model.replay_y) else y_new
    model._train(x, y, model.cfg.increment_epochs)
    model._remember(x_new, y_new)
    model.context = extended[-model.cfg.window :].copy()
    return model


def predict(model: ClModel, series: np.ndarray, horizon: int, max_horizon: int = 168) -> np.ndarray:
    """Recursive multi-step forecast: each output feeds the next window."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if horizon > max_horizon:
        raise ValueError(f"horizon {horizon} exceeds configured max {max_horizon}")
    series = np.asarray(series, dtype=float)
    if len(series) < model.cfg.window:
        raise InsufficientHistoryError(
            f"need {model.cfg.window} records to seed the window"
        )
    window = series[-model.cfg.window :].copy()
    out = np.empty(horizon)
    for t in range(horizon):
        nxt = model.predict_next(window)
        out[t] = nxt
        window = np.concatenate([window[1:], [nxt]])
    return out


def persistence_forecast(series: np.ndarray, horizon: int) -> np.ndarray:
    """Last observed value carried flat over the horizon."""
    series = np.asarray(series, dtype=float)
    if series.size == 0:
        raise InsufficientHistoryError("empty series")
    return np.full(horizon, series[-1])


def moving_average_forecast(series: np.ndarray, horizon: int, span: int = 24) -> np.ndarray:
    """Mean of the trailing span carried flat over the horizon."""
    series = np.asarray(series, dtype=float)
    if series.size == 0:
        raise InsufficientHistoryError("empty series")
    return np.full(horizon, float(np.mean(series[-span:])))


def forecast_mse(predicted: np.ndarray, actual: np.ndarray) -> float:
    predicted = np.asarray(predicted, dtype=float)
    actual = np.asarray(actual, dtype=float)
    return float(np.mean((predicted - actual) ** 2))


def apply_forecast(
    rb_forecast: dict[int, float],
    current_grants: dict[int, int],
    vodu_budget: dict[int, int],
    slice_vodu: dict[int, int],
) -> tuple[dict[int, int], list[str]]:
    """Turn RB forecasts into a grant patch for the slow loop.

    Values clamp to [0, hosting vO-DU budget]; negative forecasts clamp to
    zero with a warning; non-finite forecasts are rejected.  Slices whose
    clamped forecast equals the current grant drop out of the patch.
    """
    patch: dict[int, int] = {}
    warnings: list[str] = []
    for slice_id, value in sorted(rb_forecast.items()):
        if not np.isfinite(value):
            raise ValueError(f"non-finite forecast for slice {slice_id}")
        clamped = value
        if clamped < 0:
            warnings.append(f"slice {slice_id}: negative forecast clamped to 0")
            clamped = 0.0
        budget = vodu_budget[slice_vodu[slice_id]]
        if clamped > budget:
            warnings.append(
                f"slice {slice_id}: forecast {clamped:.1f} clamped to budget {budget}"
            )
            clamped = float(budget)
        grant = int(round(clamped))
        if grant != current_grants.get(slice_id):
            patch[slice_id] = grant
    return patch, warnings


def save_cl_checkpoint(model: ClModel, path: str | Path) -> None:
    lines = [
        CHECKPOINT_HEADER,
        f"{model.cfg.window} {model.cfg.hidden}",
        f"{model.x_mean:.17g} {model.x_scale:.17g}",
        " ".join(f"{v:.17g}" for v in model.w1.ravel()),
        " ".join(f"{v:.17g}" for v in model.b1),
        " ".join(f"{v:.17g}" for v in model.w2.ravel()),
        " ".join(f"{v:.17g}" for v in model.b2),
        " ".join(f"{v:.17g}" for v in model.context),
    ]
    Path(path).write_text("\n".join(lines) + "\n")


def load_cl_checkpoint(path: str | Path) -> ClModel:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != CHECKPOINT_HEADER:
        raise ValueError(f"not a {CHECKPOINT_HEADER} checkpoint: {path}")
    window, hidden = (int(v) for v in lines[1].split())
    model = ClModel(ClConfig(window=window, hidden=hidden))
    model.x_mean, model.x_scale = (float(v) for v in lines[2].split())
    model.w1 = np.array([float(v) for v in lines[3].split()]).reshape(window, hidden)
    model.b1 = np.array([float(v) for v in lines[4].split()])
    model.w2 = np.array([float(v) for v in lines[5].split()]).reshape(hidden, 1)
    model.b2 = np.array([float(v) for v in lines[6].split()])
    model.context = np.array([float(v) for v in lines[7].split()]) if lines[7].strip() else np.zeros(0)
    return model
