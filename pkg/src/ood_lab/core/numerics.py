"""Dense float64 primitives shared by every other module.

Randomness
----------
All draws come from numpy's Philox4x64-10 counter-based bit generator, keyed
explicitly instead of through ``SeedSequence`` hashing::

    key = seed + (stream << 64)      counter starts at 0

``seed`` is the 64-bit run seed (``base_seed + run_index``) and ``stream`` is
one of :class:`Stream`, so data generation, weight init and training each
get their own reproducible stream for a given run.
"""

from enum import IntEnum
from typing import Callable, Sequence

import numpy as np

from .errors import InvalidInputError, NumericalError

UINT64_LIMIT = 1 << 64

LossFn = Callable[[list[np.ndarray]], tuple[float, list[np.ndarray]]]


class Stream(IntEnum):
    DATA_ID = 0
    DATA_NEAR = 1
    DATA_FAR = 2
    SPLIT = 3
    INIT = 4
    TRAIN = 5
    DATA_VAL_NEAR = 6


def run_seed(base_seed: int, run_index: int) -> int:
    return base_seed + run_index


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Generator over Philox keyed by (seed, stream); identical inputs give identical draws."""
    if not 0 <= seed < UINT64_LIMIT:
        raise InvalidInputError(f"Seed must be in [0, 2**64), got {seed}")
    if not 0 <= stream < UINT64_LIMIT:
        raise InvalidInputError(f"Stream must be in [0, 2**64), got {stream}")
    return np.random.Generator(np.random.Philox(key=seed + (int(stream) << 64)))


def as_vector(values, name: str = "vector") -> np.ndarray:
    array = np.asarray(values, dtype=np.float64)
    if array.ndim != 1:
        raise InvalidInputError(f"{name} must be one-dimensional, got shape {array.shape}")
    if not np.all(np.isfinite(array)):
        raise InvalidInputError(f"{name} contains non-finite values")
    return array


def as_matrix(values, name: str = "matrix") -> np.ndarray:
    array = np.asarray(values, dtype=np.float64)
    if array.ndim != 2:
        raise InvalidInputError(f"{name} must be two-dimensional, got shape {array.shape}")
    if not np.all(np.isfinite(array)):
        raise InvalidInputError(f"{name} contains non-finite values")
    return array


def softmax(logits) -> np.ndarray:
    """Normalized probabilities over a single logit vector (max-subtracted)."""
    logits = as_vector(logits, "logits")
    if logits.size == 0:
        raise InvalidInputError("softmax needs at least one logit")
    shifted = np.exp(logits - logits.max())
    return shifted / shifted.sum()


def softmax_rows(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax of an (N, C) matrix."""
    logits = as_matrix(logits, "logits")
    if logits.shape[1] == 0:
        raise InvalidInputError("softmax needs at least one logit per row")
    shifted = np.exp(logits - logits.max(axis=1, keepdims=True))
    return shifted / shifted.sum(axis=1, keepdims=True)


def log_softmax_rows(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def squared_euclidean(u, v) -> float:
    u = as_vector(u, "u")
    v = as_vector(v, "v")
    if u.shape != v.shape:
        raise InvalidInputError(f"Dimension mismatch: {u.shape[0]} vs {v.shape[0]}")
    diff = u - v
    return float(np.sum(diff * diff))


def pairwise_squared_distances(
    a: np.ndarray, b: np.ndarray, chunk_size: int = 1024
) -> np.ndarray:
    """(len(a), len(b)) matrix of squared Euclidean distances.

    Computed from explicit differences rather than the ||a||^2 + ||b||^2 - 2ab
    expansion, so each entry equals ``squared_euclidean`` on the same pair.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise InvalidInputError(
            f"Cannot compare embeddings of shape {a.shape} and {b.shape}"
        )
    out = np.empty((a.shape[0], b.shape[0]), dtype=np.float64)
    for start in range(0, a.shape[0], chunk_size):
        diff = a[start : start + chunk_size, None, :] - b[None, :, :]
        out[start : start + chunk_size] = np.sum(diff * diff, axis=-1)
    return out


def grad_check(loss_fn: LossFn, params: Sequence[np.ndarray], eps: float = 1e-5) -> float:
    """Largest |analytic - central difference| / max(1, |central difference|).

    ``loss_fn`` maps a list of parameter arrays to ``(loss, grads)`` where
    ``grads`` has one array per parameter. Parameters are perturbed on copies.
    """
    if eps <= 0:
        raise InvalidInputError(f"eps must be positive, got {eps}")
    params = [np.array(p, dtype=np.float64, copy=True) for p in params]
    loss, analytic = loss_fn(params)
    if not np.isfinite(loss):
        raise NumericalError("Loss is not finite at the evaluation point")

    worst = 0.0
    for index, param in enumerate(params):
        flat = param.reshape(-1)
        grad_flat = np.asarray(analytic[index], dtype=np.float64).reshape(-1)
        for k in range(flat.size):
            original = flat[k]
            flat[k] = original + eps
            plus, _ = loss_fn(params)
            flat[k] = original - eps
            minus, _ = loss_fn(params)
            flat[k] = original
            if not (np.isfinite(plus) and np.isfinite(minus)):
                raise NumericalError(
                    f"Loss became non-finite while probing parameter {index}[{k}]"
                )
            numeric = (plus - minus) / (2.0 * eps)
            error = abs(grad_flat[k] - numeric) / max(1.0, abs(numeric))
            worst = max(worst, error)
    return worst
