"""Training objectives: cross-entropy, triplet, prototype (DCE + center) and one-vs-all AP.

Every loss returns its value together with gradients on the network outputs
(and on the prototype bank where one exists); the network module chains them
into parameter gradients.
"""

from dataclasses import dataclass
from enum import StrEnum
from typing import Annotated, List, Literal, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .errors import InvalidInputError
from .network import HeadKind
from .numerics import log_softmax_rows, pairwise_squared_distances, softmax_rows


class Mining(StrEnum):
    RANDOM = "random"
    SEMI_HARD = "semi_hard"


class CrossEntropyObjective(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["ce"] = "ce"

    @property
    def head(self) -> HeadKind:
        return HeadKind.LOGITS

    @property
    def title(self) -> str:
        return "Cross-Entropy Loss"


class TripletObjective(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["triplet"] = "triplet"
    margin: float = Field(default=1.0, gt=0)
    mining: Mining = Mining.RANDOM

    @property
    def head(self) -> HeadKind:
        return HeadKind.EMBEDDING

    @property
    def title(self) -> str:
        return "Triplet Loss"


class PrototypeObjective(BaseModel):
    model_config = ConfigDict(frozen=True, populate_by_name=True)

    kind: Literal["prototype"] = "prototype"
    lam: float = Field(default=0.01, ge=0, alias="lambda")
    tau: float = Field(default=0.1, gt=0)

    @property
    def head(self) -> HeadKind:
        return HeadKind.EMBEDDING

    @property
    def title(self) -> str:
        return "Prototype Loss"


class AveragePrecisionObjective(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["ap"] = "ap"
    delta: float = Field(default=1.0, gt=0)

    @property
    def head(self) -> HeadKind:
        return HeadKind.LOGITS

    @property
    def title(self) -> str:
        return "AP Loss"


ObjectiveConfig = Annotated[
    Union[
        CrossEntropyObjective,
        TripletObjective,
        PrototypeObjective,
        AveragePrecisionObjective,
    ],
    Field(discriminator="kind"),
]

OBJECTIVE_TITLES = {
    model.model_fields["kind"].default: model().title
    for model in (
        CrossEntropyObjective,
        TripletObjective,
        PrototypeObjective,
        AveragePrecisionObjective,
    )
}


# Cross-entropy


def ce_loss(logits, label: int) -> Tuple[float, np.ndarray]:
    """-log softmax(logits)[label] and its gradient p - onehot(label)."""
    logits = np.asarray(logits, dtype=np.float64)
    if not 0 <= label < logits.shape[0]:
        raise InvalidInputError(f"label {label} outside [0, {logits.shape[0]})")
    loss, grad = ce_loss_batch(logits[None, :], np.array([label]))
    return loss, grad[0]


def ce_loss_batch(logits: np.ndarray, labels: np.ndarray) -> Tuple[float, np.ndarray]:
    """Batch-mean cross-entropy; gradient already divided by N."""
    n = logits.shape[0]
    rows = np.arange(n)
    log_probs = log_softmax_rows(logits)
    loss = float(-log_probs[rows, labels].mean())
    grad = softmax_rows(logits)
    grad[rows, labels] -= 1.0
    return loss, grad / n


# Triplet


@dataclass(frozen=True)
class Triplet:
    anchor: int
    positive: int
    negative: int
    d_ap: float
    d_an: float
    fallback: bool = False


def triplet_loss(
    e_a, e_p, e_n, margin: float = 1.0
) -> Tuple[float, Tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """max(0, d_ap - d_an + margin) on squared distances; zero subgradient at the kink."""
    e_a, e_p, e_n = (np.asarray(e, dtype=np.float64) for e in (e_a, e_p, e_n))
    if not e_a.shape == e_p.shape == e_n.shape:
        raise InvalidInputError("anchor, positive and negative must share a dimension")
    ap = e_a - e_p
    an = e_a - e_n
    value = float(ap @ ap - an @ an + margin)
    if value <= 0.0:
        zero = np.zeros_like(e_a)
        return 0.0, (zero, zero.copy(), zero.copy())
    return value, (2.0 * (e_n - e_p), -2.0 * ap, 2.0 * an)


def _pick_in_rows(mask: np.ndarray, u: np.ndarray) -> np.ndarray:
    """For each row, the column of its k-th True entry with k = floor(u * count)."""
    counts = mask.sum(axis=1)
    k = np.floor(u * counts).astype(np.int64)
    return np.argmax(np.cumsum(mask, axis=1) > k[:, None], axis=1)


def mine_triplets(
    embeddings: np.ndarray,
    labels: np.ndarray,
    strategy: Mining,
    margin: float,
    rng: np.random.Generator,
) -> List[Triplet]:
    """One triplet per ordered (anchor, positive) pair, anchors then positives ascending.

    Draws per anchor: ``random`` takes ``integers(0, |N|, |P|)``; ``semi_hard``
    takes ``random(|P|)`` for the in-band choice, then ``integers`` for rows
    that had to fall back to a random negative.
    """
    labels = np.asarray(labels)
    if np.unique(labels).size < 2:
        return []
    distances = pairwise_squared_distances(embeddings, embeddings)
    index = np.arange(labels.size)
    triplets: List[Triplet] = []
    for a in range(labels.size):
        same = labels == labels[a]
        positives = index[same & (index != a)]
        negatives = index[~same]
        if positives.size == 0 or negatives.size == 0:
            continue
        d_ap = distances[a, positives]
        d_an = distances[a, negatives]
        fallback = np.zeros(positives.size, dtype=bool)

        if strategy is Mining.RANDOM:
            chosen = rng.integers(0, negatives.size, size=positives.size)
        else:
            beyond = d_an[None, :] > d_ap[:, None]
            band = beyond & (d_an[None, :] < d_ap[:, None] + margin)
            chosen = _pick_in_rows(band, rng.random(positives.size))
            empty = ~band.any(axis=1)
            if empty.any():
                fallback[empty] = True
                beyond_d = np.where(beyond, d_an[None, :], np.inf)
                has_beyond = beyond.any(axis=1)
                hardest = np.argmin(beyond_d, axis=1)
                use_hardest = empty & has_beyond
                chosen[use_hardest] = hardest[use_hardest]
                use_random = empty & ~has_beyond
                if use_random.any():
                    chosen[use_random] = rng.integers(
                        0, negatives.size, size=int(use_random.sum())
                    )

        for row, p in enumerate(positives):
            n = negatives[chosen[row]]
            triplets.append(
                Triplet(
                    anchor=a,
                    positive=int(p),
                    negative=int(n),
                    d_ap=float(d_ap[row]),
                    d_an=float(d_an[chosen[row]]),
                    fallback=bool(fallback[row]),
                )
            )
    return triplets


def triplet_batch_loss(
    embeddings: np.ndarray, triplets: Sequence[Triplet], margin: float
) -> Tuple[float, np.ndarray]:
    """Mean hinge over triplets with the gradient scattered back onto the batch embeddings."""
    grad = np.zeros_like(embeddings)
    if not triplets:
        return 0.0, grad
    a = np.fromiter((t.anchor for t in triplets), dtype=np.int64)
    p = np.fromiter((t.positive for t in triplets), dtype=np.int64)
    n = np.fromiter((t.negative for t in triplets), dtype=np.int64)
    ap = embeddings[a] - embeddings[p]
    an = embeddings[a] - embeddings[n]
    values = np.sum(ap * ap, axis=1) - np.sum(an * an, axis=1) + margin
    active = values > 0.0
    count = len(triplets)
    scale = (2.0 / count) * active[:, None]
    np.add.at(grad, a, scale * (embeddings[n] - embeddings[p]))
    np.add.at(grad, p, -scale * ap)
    np.add.at(grad, n, scale * an)
    return float(np.where(active, values, 0.0).sum() / count), grad


# Prototype (GCPL)


def _dce_terms(embeddings, prototypes, labels, tau):
    embeddings = np.asarray(embeddings, dtype=np.float64)
    prototypes = np.asarray(prototypes, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if tau <= 0:
        raise InvalidInputError(f"tau must be positive, got {tau}")
    if labels.size and (labels.min() < 0 or labels.max() >= prototypes.shape[0]):
        raise InvalidInputError("labels must index the prototype bank")
    n = embeddings.shape[0]
    rows = np.arange(n)
    diff = embeddings[:, None, :] - prototypes[None, :, :]
    distances = np.sum(diff * diff, axis=-1)
    logits = -tau * distances
    loss = float(-log_softmax_rows(logits)[rows, labels].mean())
    coeff = softmax_rows(logits)
    coeff[rows, labels] -= 1.0
    coeff /= n
    # d logit_k / d e = -2 tau (e - m_k);  d logit_k / d m_k = +2 tau (e - m_k)
    weighted = coeff[:, :, None] * diff
    grad_e = -2.0 * tau * weighted.sum(axis=1)
    grad_m = 2.0 * tau * weighted.sum(axis=0)
    return loss, grad_e, grad_m


def dce_loss(
    embedding, prototypes, label: int, tau: float
) -> Tuple[float, np.ndarray, np.ndarray]:
    """Distance-based cross-entropy for one example; gradients on it and on every prototype."""
    loss, grad_e, grad_m = _dce_terms(
        np.asarray(embedding, dtype=np.float64)[None, :], prototypes, [label], tau
    )
    return loss, grad_e[0], grad_m


def dce_batch_loss(embeddings, prototypes, labels, tau: float):
    return _dce_terms(embeddings, prototypes, labels, tau)


def center_loss(embeddings, prototypes, labels) -> Tuple[float, np.ndarray, np.ndarray]:
    """(1/N) sum ||e_i - m_{y_i}||^2 with gradients on embeddings and assigned prototypes."""
    embeddings = np.asarray(embeddings, dtype=np.float64)
    prototypes = np.asarray(prototypes, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n = embeddings.shape[0]
    diff = embeddings - prototypes[labels]
    loss = float(np.sum(diff * diff) / n)
    grad_e = 2.0 * diff / n
    grad_m = np.zeros_like(prototypes)
    np.add.at(grad_m, labels, -grad_e)
    return loss, grad_e, grad_m


def prototype_total(
    embeddings, prototypes, labels, lam: float, tau: float
) -> Tuple[float, np.ndarray, np.ndarray]:
    """Batch-mean DCE + lam * center loss."""
    dce, dce_e, dce_m = dce_batch_loss(embeddings, prototypes, labels, tau)
    center, center_e, center_m = center_loss(embeddings, prototypes, labels)
    return dce + lam * center, dce_e + lam * center_e, dce_m + lam * center_m


# Average precision


def smooth_step(x: np.ndarray, delta: float) -> np.ndarray:
    """0 below -delta, 1 above delta, linear x/(2 delta) + 1/2 in between."""
    return np.clip(np.asarray(x) / (2.0 * delta) + 0.5, 0.0, 1.0)


def ranking_classes(labels: np.ndarray, num_classes: int) -> np.ndarray:
    """Classes with at least one positive and one negative in the batch."""
    labels = np.asarray(labels, dtype=np.int64)
    counts = np.bincount(labels[labels >= 0], minlength=num_classes)[:num_classes]
    return np.flatnonzero((counts > 0) & (counts < len(labels)))


def ap_loss(scores, labels, delta: float = 1.0) -> Tuple[float, np.ndarray]:
    """Sum over classes of one-vs-all smoothed 1 - AP, with the error-driven score gradient.

    For class c with positives P and negatives N on column c, the primary
    terms L_ij = H(s_j - s_i) / rank(i) (i in P, j in N) are assigned as the
    update of x_ij = s_j - s_i, normalised by |P|. Classes lacking either
    polarity contribute nothing.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if delta <= 0:
        raise InvalidInputError(f"delta must be positive, got {delta}")
    if scores.ndim != 2 or scores.shape[0] != labels.shape[0]:
        raise InvalidInputError(
            f"scores must be (N, C) matching {labels.shape[0]} labels, got {scores.shape}"
        )
    grad = np.zeros_like(scores)
    total = 0.0
    for c in ranking_classes(labels, scores.shape[1]):
        s = scores[:, c]
        pos = labels == c
        pos_idx = np.flatnonzero(pos)
        n_pos = pos_idx.size
        steps = smooth_step(s[None, :] - s[pos_idx, None], delta)
        steps[np.arange(n_pos), pos_idx] = 0.0
        rank = 1.0 + steps.sum(axis=1)
        rank_pos = 1.0 + steps[:, pos].sum(axis=1)
        total += 1.0 - float(np.mean(rank_pos / rank))

        primary = steps[:, ~pos] / rank[:, None]
        grad[~pos, c] += primary.sum(axis=0) / n_pos
        grad[pos_idx, c] -= primary.sum(axis=1) / n_pos
    return total, grad


def ap_brute_force(scores_c, labels_c) -> float:
    """Exact 1 - AP for one column with a hard step; score ties broken by lower index first."""
    scores_c = np.asarray(scores_c, dtype=np.float64)
    positive = np.asarray(labels_c).astype(bool)
    if not positive.any():
        raise InvalidInputError("AP needs at least one positive")
    order = np.lexsort((np.arange(scores_c.size), -scores_c))
    hits = 0
    precision_sum = 0.0
    for position, i in enumerate(order, start=1):
        if positive[i]:
            hits += 1
            precision_sum += hits / position
    return 1.0 - precision_sum / hits
