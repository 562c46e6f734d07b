"""Inference and OOD scoring. Every score follows one convention: higher means more OOD."""

from dataclasses import dataclass
from enum import StrEnum
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, Optional, Tuple

import numpy as np
import pandas as pd

from .datasets import Dataset, Role
from .errors import ConfigurationError, InvalidInputError, InvalidStateError
from .network import HeadKind
from .numerics import as_vector, pairwise_squared_distances, softmax, softmax_rows

if TYPE_CHECKING:
    from .objectives import ObjectiveConfig
    from .training import TrainedModel

SCORE_COLUMNS = ["example_id", "role", "score", "pred", "true_label"]


class ScorerRule(StrEnum):
    MSP = "msp"
    ENTROPY = "entropy"
    KNN = "knn"
    AUTO = "auto"


def predict_argmax(p) -> int:
    """Most probable class; ties go to the lowest index."""
    return int(np.argmax(as_vector(p, "probabilities")))


def msp_score(p) -> float:
    return -float(np.max(as_vector(p, "probabilities")))


def _entropy_rows(probs: np.ndarray) -> np.ndarray:
    safe = np.where(probs > 0.0, probs, 1.0)
    return -np.sum(probs * np.log(safe), axis=-1)


def entropy_score(p) -> float:
    """Natural-log entropy with 0 ln 0 = 0."""
    return float(_entropy_rows(as_vector(p, "probabilities")))


@dataclass(frozen=True)
class TrainEmbeddingIndex:
    """Exhaustive 1-NN index over the training embeddings."""

    embeddings: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        embeddings = np.asarray(self.embeddings, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if embeddings.ndim != 2 or embeddings.shape[0] == 0:
            raise InvalidStateError("train embedding index is empty")
        if labels.shape != (embeddings.shape[0],):
            raise InvalidInputError("index needs exactly one label per embedding")
        object.__setattr__(self, "embeddings", embeddings)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return self.embeddings.shape[0]

    def query(self, queries: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Nearest-neighbour labels and squared distances; ties go to the lowest train index."""
        distances = pairwise_squared_distances(np.atleast_2d(queries), self.embeddings)
        nearest = np.argmin(distances, axis=1)
        return self.labels[nearest], distances[np.arange(nearest.size), nearest]


def knn_predict_and_score(embedding, index: Optional[TrainEmbeddingIndex]) -> Tuple[int, float]:
    if index is None or len(index) == 0:
        raise InvalidStateError("nearest-neighbour scoring needs a non-empty train index")
    labels, distances = index.query(as_vector(embedding, "embedding")[None, :])
    return int(labels[0]), float(distances[0])


def _prototype_distances(embeddings: np.ndarray, bank: np.ndarray) -> np.ndarray:
    return pairwise_squared_distances(np.atleast_2d(embeddings), np.asarray(bank))


def prototype_probs(embedding, bank, tau: float) -> np.ndarray:
    """p_c proportional to exp(-tau * ||f(x) - m_c||^2)."""
    if tau <= 0:
        raise InvalidInputError(f"tau must be positive, got {tau}")
    distances = _prototype_distances(as_vector(embedding, "embedding")[None, :], bank)[0]
    return softmax(-tau * distances)


def prototype_predict(embedding, bank) -> int:
    """Nearest prototype; ties go to the lowest class index."""
    distances = _prototype_distances(as_vector(embedding, "embedding")[None, :], bank)[0]
    return int(np.argmin(distances))


def ap_probs(scores) -> np.ndarray:
    """Per-class AP scores treated as logits."""
    return softmax(scores)


def resolve_scorer(
    rule: ScorerRule,
    objective: "ObjectiveConfig",
    selected: Optional[ScorerRule] = None,
) -> ScorerRule:
    """Turn `auto` into a concrete rule.

    ``selected`` is the validation-chosen rule recorded with a preset; without
    it, triplet models use 1-NN distance and every other objective entropy.
    """
    rule = ScorerRule(rule)
    if rule is not ScorerRule.AUTO:
        return rule
    if selected is not None and ScorerRule(selected) is not ScorerRule.AUTO:
        return ScorerRule(selected)
    return ScorerRule.KNN if objective.kind == "triplet" else ScorerRule.ENTROPY


def scorer_problem(objective: "ObjectiveConfig", head: HeadKind, rule: ScorerRule) -> Optional[str]:
    """Why `rule` cannot score a model of this objective/head, or None when it can."""
    if rule is ScorerRule.KNN and head is not HeadKind.EMBEDDING:
        return "knn scoring needs an embedding head; use msp or entropy for logit models"
    if rule in (ScorerRule.MSP, ScorerRule.ENTROPY) and objective.kind == "triplet":
        return (
            f"{rule} scoring needs class probabilities, which triplet models do not "
            "produce; use knn (1-NN distance)"
        )
    return None


@dataclass(frozen=True)
class ScoreSet:
    scores: np.ndarray
    predictions: np.ndarray
    true_labels: np.ndarray
    role: Role
    scorer: ScorerRule

    def __len__(self) -> int:
        return self.scores.shape[0]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "example_id": np.arange(len(self)),
                "role": str(self.role),
                "score": self.scores,
                "pred": self.predictions,
                "true_label": self.true_labels,
            },
            columns=SCORE_COLUMNS,
        )


def probabilities(model: "TrainedModel", outputs: np.ndarray) -> np.ndarray:
    if model.head is HeadKind.LOGITS:
        return softmax_rows(outputs)
    if model.prototypes is None:
        raise ConfigurationError(
            f"{model.objective.title} models have no class probabilities"
        )
    tau = model.objective.tau
    return softmax_rows(-tau * _prototype_distances(outputs, model.prototypes))


def predict_labels(model: "TrainedModel", outputs: np.ndarray) -> np.ndarray:
    """Objective-appropriate prediction: argmax, nearest prototype or nearest train embedding."""
    if model.head is HeadKind.LOGITS:
        return np.argmax(outputs, axis=1)
    if model.prototypes is not None:
        return np.argmin(_prototype_distances(outputs, model.prototypes), axis=1)
    if model.train_index is None:
        raise InvalidStateError("embedding model has neither prototypes nor a train index")
    return model.train_index.query(outputs)[0]


def score_dataset(
    model: "TrainedModel",
    dataset: Dataset,
    scorer_rule: ScorerRule = ScorerRule.AUTO,
    selected: Optional[ScorerRule] = None,
) -> ScoreSet:
    rule = resolve_scorer(scorer_rule, model.objective, selected)
    problem = scorer_problem(model.objective, model.head, rule)
    if problem:
        raise ConfigurationError(problem)

    outputs = model.outputs(dataset.features)
    predictions = predict_labels(model, outputs)
    if rule is ScorerRule.KNN:
        if model.train_index is None:
            raise InvalidStateError("knn scoring needs the stored train embeddings")
        _, scores = model.train_index.query(outputs)
    else:
        probs = probabilities(model, outputs)
        if rule is ScorerRule.MSP:
            scores = -probs.max(axis=1)
        else:
            scores = _entropy_rows(probs)
    return ScoreSet(
        scores=np.asarray(scores, dtype=np.float64),
        predictions=np.asarray(predictions, dtype=np.int64),
        true_labels=dataset.labels.copy(),
        role=dataset.role,
        scorer=rule,
    )


def export_scores(score_sets: Iterable[ScoreSet], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.concat([s.to_frame() for s in score_sets], ignore_index=True)
    frame.to_csv(path, index=False, lineterminator="\n")
    return path


def load_scores(path: str | Path) -> dict[Role, pd.DataFrame]:
    frame = pd.read_csv(path, float_precision="round_trip")
    missing = set(SCORE_COLUMNS) - set(frame.columns)
    if missing:
        raise InvalidInputError(f"{path} lacks columns {sorted(missing)}")
    return {Role(role): group for role, group in frame.groupby("role", sort=False)}
