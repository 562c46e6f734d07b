"""Feedforward trunk with a logit or embedding head, hand-written backprop and momentum SGD."""

import json
import math
from enum import StrEnum
from pathlib import Path
from typing import Any, Dict, List, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .errors import InvalidInputError, NumericalError

CHECKPOINT_FORMAT = "ood-lab-checkpoint"
CHECKPOINT_VERSION = 1
_NORM_FLOOR = 1e-12


class HeadKind(StrEnum):
    LOGITS = "logits"
    EMBEDDING = "embedding"


class NetworkConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    input_dim: int = Field(ge=1)
    hidden_sizes: Tuple[int, ...] = (64, 64)
    head: HeadKind
    output_dim: int = Field(ge=1)
    normalize_embeddings: bool = False

    @model_validator(mode="after")
    def _check(self) -> "NetworkConfig":
        if any(size < 1 for size in self.hidden_sizes):
            raise ValueError("hidden layer sizes must be >= 1")
        if self.normalize_embeddings and self.head is not HeadKind.EMBEDDING:
            raise ValueError("normalize_embeddings only applies to an embedding head")
        return self

    @property
    def layer_sizes(self) -> List[int]:
        return [self.input_dim, *self.hidden_sizes, self.output_dim]


class OptimizerConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    lr: float = Field(gt=0)
    momentum: float = Field(default=0.9, ge=0, lt=1)
    weight_decay: float = Field(default=5e-4, ge=0)
    epochs: int = Field(default=40, ge=1)
    batch_size: int = Field(default=64, ge=2)


class ForwardCache:
    """Activations kept by `Network.forward_with_cache` for the backward pass."""

    def __init__(self, inputs: List[np.ndarray], pre_activations: List[np.ndarray]):
        self.inputs = inputs
        self.pre_activations = pre_activations
        self.raw_output: np.ndarray | None = None
        self.output_norm: np.ndarray | None = None


class Network:
    def __init__(
        self,
        config: NetworkConfig,
        weights: Sequence[np.ndarray],
        biases: Sequence[np.ndarray],
    ):
        sizes = config.layer_sizes
        if len(weights) != len(sizes) - 1 or len(biases) != len(sizes) - 1:
            raise InvalidInputError(
                f"expected {len(sizes) - 1} layers, got {len(weights)} weights / {len(biases)} biases"
            )
        self.config = config
        self.weights: List[np.ndarray] = []
        self.biases: List[np.ndarray] = []
        for i, (w, b) in enumerate(zip(weights, biases)):
            w = np.array(w, dtype=np.float64, copy=True)
            b = np.array(b, dtype=np.float64, copy=True)
            if w.shape != (sizes[i], sizes[i + 1]) or b.shape != (sizes[i + 1],):
                raise InvalidInputError(
                    f"layer {i}: expected weight {(sizes[i], sizes[i + 1])} and bias "
                    f"{(sizes[i + 1],)}, got {w.shape} and {b.shape}"
                )
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise NumericalError(f"layer {i} has non-finite parameters")
            self.weights.append(w)
            self.biases.append(b)

    @classmethod
    def initialize(cls, config: NetworkConfig, rng: np.random.Generator) -> "Network":
        """Scaled uniform init, U(-sqrt(6/(fan_in+fan_out)), +...), zero biases."""
        sizes = config.layer_sizes
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            limit = math.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(config, weights, biases)

    @classmethod
    def zeros(cls, config: NetworkConfig) -> "Network":
        sizes = config.layer_sizes
        return cls(
            config,
            [np.zeros((a, b)) for a, b in zip(sizes[:-1], sizes[1:])],
            [np.zeros(b) for b in sizes[1:]],
        )

    @property
    def num_layers(self) -> int:
        return len(self.weights)

    def parameters(self) -> List[np.ndarray]:
        """Parameter arrays in (W0, b0, W1, b1, ...) order; updated in place by the optimizer."""
        params = []
        for w, b in zip(self.weights, self.biases):
            params.extend([w, b])
        return params

    def copy(self) -> "Network":
        return Network(self.config, self.weights, self.biases)

    def _check_batch(self, batch) -> np.ndarray:
        batch = np.asarray(batch, dtype=np.float64)
        if batch.ndim == 1:
            batch = batch[None, :]
        if batch.ndim != 2 or batch.shape[1] != self.config.input_dim:
            raise InvalidInputError(
                f"batch must be (N, {self.config.input_dim}), got shape {batch.shape}"
            )
        return batch

    def forward_with_cache(self, batch) -> Tuple[np.ndarray, ForwardCache]:
        h = self._check_batch(batch)
        cache = ForwardCache(inputs=[], pre_activations=[])
        last = self.num_layers - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            cache.inputs.append(h)
            z = h @ w + b
            if i < last:
                cache.pre_activations.append(z)
                h = np.maximum(z, 0.0)
            else:
                h = z
        if self.config.normalize_embeddings:
            norms = np.maximum(np.linalg.norm(h, axis=1, keepdims=True), _NORM_FLOOR)
            cache.raw_output = h
            cache.output_norm = norms
            h = h / norms
        return h, cache

    def forward(self, batch) -> np.ndarray:
        """Logits (N, C) or embeddings (N, ED) for a batch of inputs."""
        return self.forward_with_cache(batch)[0]

    def backward(self, cache: ForwardCache, grad_outputs: np.ndarray) -> List[np.ndarray]:
        """Gradients for `parameters()` given dLoss/dOutputs."""
        g = np.asarray(grad_outputs, dtype=np.float64)
        batch_size = cache.inputs[0].shape[0]
        if g.shape != (batch_size, self.config.output_dim):
            raise InvalidInputError(
                f"output gradient must be {(batch_size, self.config.output_dim)}, got {g.shape}"
            )
        if not np.all(np.isfinite(g)):
            raise NumericalError("output gradient contains non-finite values")
        if self.config.normalize_embeddings:
            y = cache.raw_output / cache.output_norm
            g = (g - y * np.sum(y * g, axis=1, keepdims=True)) / cache.output_norm

        grads: List[np.ndarray] = [None] * (2 * self.num_layers)
        for i in reversed(range(self.num_layers)):
            grads[2 * i] = cache.inputs[i].T @ g
            grads[2 * i + 1] = g.sum(axis=0)
            if i > 0:
                g = (g @ self.weights[i].T) * (cache.pre_activations[i - 1] > 0.0)
        return grads

    def to_dict(self) -> Dict[str, Any]:
        return {
            "config": self.config.model_dump(mode="json"),
            "layers": [
                {
                    "weight_shape": list(w.shape),
                    "weight": w.ravel(order="C").tolist(),
                    "bias": b.tolist(),
                }
                for w, b in zip(self.weights, self.biases)
            ],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Network":
        config = NetworkConfig.model_validate(data["config"])
        weights, biases = [], []
        for layer in data["layers"]:
            shape = tuple(layer["weight_shape"])
            weights.append(np.asarray(layer["weight"], dtype=np.float64).reshape(shape))
            biases.append(np.asarray(layer["bias"], dtype=np.float64))
        return cls(config, weights, biases)


class MomentumSGD:
    """SGD with heavy-ball momentum and L2 weight decay folded into the gradient.

    v <- momentum * v + (g + weight_decay * w);  w <- w - lr * v
    """

    def __init__(self, momentum: float = 0.9, weight_decay: float = 5e-4):
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.velocities: List[np.ndarray] | None = None

    @classmethod
    def from_config(cls, config: OptimizerConfig) -> "MomentumSGD":
        return cls(momentum=config.momentum, weight_decay=config.weight_decay)

    def step(self, params: Sequence[np.ndarray], grads: Sequence[np.ndarray], lr: float):
        if len(params) != len(grads):
            raise InvalidInputError(f"{len(params)} parameters but {len(grads)} gradients")
        for index, grad in enumerate(grads):
            if not np.all(np.isfinite(grad)):
                bad = int(np.sum(~np.isfinite(grad)))
                raise NumericalError(
                    f"gradient for parameter {index} (shape {np.shape(grad)}) has "
                    f"{bad} non-finite entries"
                )
        if self.velocities is None:
            self.velocities = [np.zeros_like(p) for p in params]
        for param, grad, velocity in zip(params, grads, self.velocities):
            velocity *= self.momentum
            velocity += grad + self.weight_decay * param
            param -= lr * velocity


def backward_apply(
    net: Network,
    cache: ForwardCache,
    grad_outputs: np.ndarray,
    optimizer: MomentumSGD,
    lr: float,
    extra_params: Sequence[np.ndarray] = (),
    extra_grads: Sequence[np.ndarray] = (),
) -> List[np.ndarray]:
    """Backpropagate output gradients and take one optimizer step.

    ``extra_params`` (e.g. a prototype bank) are stepped with the same optimizer.
    Returns the network parameter gradients.
    """
    grads = net.backward(cache, grad_outputs)
    optimizer.step(
        [*net.parameters(), *extra_params], [*grads, *extra_grads], lr
    )
    return grads


def cosine_lr(t: int | float, total: int, lr0: float) -> float:
    """Cosine annealing without restarts and with a zero floor."""
    if total < 1:
        raise InvalidInputError(f"total epochs must be >= 1, got {total}")
    if not 0 <= t <= total:
        raise InvalidInputError(f"epoch {t} outside [0, {total}]")
    return 0.5 * lr0 * (1.0 + math.cos(math.pi * t / total))


def save_checkpoint(
    path: str | Path, net: Network, extras: Dict[str, Any] | None = None
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "network": net.to_dict(),
        "extras": extras or {},
    }
    path.write_text(json.dumps(payload, allow_nan=False) + "\n", encoding="utf-8")
    return path


def load_checkpoint(path: str | Path) -> Tuple[Network, Dict[str, Any]]:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise InvalidInputError(f"{path} is not an ood-lab checkpoint")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise InvalidInputError(
            f"unsupported checkpoint version {payload.get('version')} in {path}"
        )
    return Network.from_dict(payload["network"]), payload.get("extras", {})
