"""Fixed-architecture multilayer perceptron on (frequency, per-core loads)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import KHZ_PER_GHZ, ModelKind, PowerModel
from ..errors import InsufficientData, MissingPerCoreData, NonFiniteLoss

LAYER_SIZES = (5, 128, 64, 32, 16, 1)
N_CORES = LAYER_SIZES[0] - 1
MIN_RECORDS = 50


@dataclass(frozen=True, eq=False)
class MlpModel:
    """ReLU hidden layers, identity output; inputs are standardized first."""

    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]
    input_mean: np.ndarray
    input_std: np.ndarray
    layer_sizes: tuple[int, ...] = LAYER_SIZES

    def __post_init__(self):
        if tuple(self.layer_sizes) != LAYER_SIZES:
            raise ValueError(f"layer sizes must be {LAYER_SIZES}")
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (LAYER_SIZES[k], LAYER_SIZES[k + 1]) or b.shape != (LAYER_SIZES[k + 1],):
                raise ValueError(f"layer {k} has wrong shape")
        if np.any(np.asarray(self.input_std) <= 0):
            raise ValueError("normalization stddevs must be positive")

    def predict_batch(self, inputs) -> np.ndarray:
        """Raw (unstandardized) inputs ``[freq_ghz, u0..u3]`` per row."""
        x = (np.asarray(inputs, dtype=np.float64) - self.input_mean) / self.input_std
        return forward(self.weights, self.biases, x)[-1][:, 0]

    def predict_one(self, freq_ghz, per_core) -> float:
        if len(per_core) != N_CORES:
            raise MissingPerCoreData(f"Mlp models need exactly {N_CORES} per-core utilizations")
        return float(self.predict_batch([[freq_ghz, *per_core]])[0])


def forward(weights, biases, x):
    """Activations of every layer, input first."""
    acts = [x]
    last = len(weights) - 1
    for k, (w, b) in enumerate(zip(weights, biases)):
        z = acts[-1] @ w + b
        acts.append(z if k == last else np.maximum(z, 0.0))
    return acts


def loss_and_grads(weights, biases, x, y):
    """Mean squared error and its gradients with respect to every weight and bias."""
    acts = forward(weights, biases, x)
    n = x.shape[0]
    err = acts[-1][:, 0] - y
    loss = float(np.mean(err**2))
    delta = (2.0 / n) * err[:, None]
    gw, gb = [None] * len(weights), [None] * len(weights)
    for k in range(len(weights) - 1, -1, -1):
        gw[k] = acts[k].T @ delta
        gb[k] = delta.sum(axis=0)
        if k:
            delta = (delta @ weights[k].T) * (acts[k] > 0)
    return loss, gw, gb


def init_params(rng, output_bias=0.0):
    weights, biases = [], []
    for fan_in, fan_out in zip(LAYER_SIZES, LAYER_SIZES[1:]):
        weights.append(rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    biases[-1][:] = output_bias
    return weights, biases


def mlp_inputs(dataset) -> np.ndarray:
    rows = []
    for r in dataset:
        per_core = r.utilization.per_core
        if per_core is None or len(per_core) != N_CORES:
            raise MissingPerCoreData(
                f"record at {r.freq_khz} kHz lacks {N_CORES} per-core utilizations"
            )
        rows.append([r.freq_khz / KHZ_PER_GHZ, *per_core])
    return np.array(rows, dtype=np.float64)


def train(x, y, epochs, learning_rate, seed):
    """Full-batch gradient descent; returns (weights, biases, loss history)."""
    rng = np.random.default_rng(seed)
    weights, biases = init_params(rng, float(np.mean(y)))
    history = []
    for epoch in range(epochs):
        with np.errstate(over="ignore", invalid="ignore"):  # divergence is checked below
            loss, gw, gb = loss_and_grads(weights, biases, x, y)
        if not np.isfinite(loss):
            raise NonFiniteLoss(f"loss diverged at epoch {epoch}; lower the learning rate")
        history.append(loss)
        for k in range(len(weights)):
            weights[k] -= learning_rate * gw[k]
            biases[k] -= learning_rate * gb[k]
    return weights, biases, history


def fit_mlp(dataset, config=None) -> PowerModel:
    epochs = config.mlp_epochs if config else 4000
    lr = config.mlp_learning_rate if config else 1e-3
    seed = config.mlp_seed if config else 0
    dataset = list(dataset)
    inputs = mlp_inputs(dataset)
    if len(dataset) < MIN_RECORDS:
        raise InsufficientData(f"Mlp needs >= {MIN_RECORDS} records, got {len(dataset)}")
    y = np.array([r.power_w for r in dataset], dtype=np.float64)
    mean = inputs.mean(axis=0)
    std = inputs.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    weights, biases, _ = train((inputs - mean) / std, y, epochs, lr, seed)
    model = MlpModel(tuple(weights), tuple(biases), mean, std)
    table = tuple(sorted({int(r.freq_khz) for r in dataset}))
    return PowerModel(ModelKind.MLP, model, table)
