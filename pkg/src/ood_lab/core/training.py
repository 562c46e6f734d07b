import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from pydantic import TypeAdapter

from .datasets import Dataset
from .errors import ConfigurationError, InvalidInputError
from .network import (
    HeadKind,
    MomentumSGD,
    Network,
    OptimizerConfig,
    backward_apply,
    cosine_lr,
    load_checkpoint,
    save_checkpoint,
)
from .objectives import (
    AveragePrecisionObjective,
    CrossEntropyObjective,
    ObjectiveConfig,
    PrototypeObjective,
    TripletObjective,
    ap_loss,
    ce_loss_batch,
    mine_triplets,
    prototype_total,
    ranking_classes,
    triplet_batch_loss,
)
from .scoring import TrainEmbeddingIndex

logger = logging.getLogger(__name__)

_objective_adapter = TypeAdapter(ObjectiveConfig)


@dataclass
class TrainingDiagnostics:
    epoch_losses: List[Optional[float]] = field(default_factory=list)
    epoch_lrs: List[float] = field(default_factory=list)
    skipped_batches: int = 0
    mined_triplets: int = 0
    fallback_triplets: int = 0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "epoch_losses": self.epoch_losses,
            "epoch_lrs": self.epoch_lrs,
            "skipped_batches": self.skipped_batches,
            "mined_triplets": self.mined_triplets,
            "fallback_triplets": self.fallback_triplets,
        }


@dataclass
class TrainedModel:
    """Network plus the state its objective needs at inference time."""

    net: Network
    objective: ObjectiveConfig
    prototypes: Optional[np.ndarray] = None
    train_index: Optional[TrainEmbeddingIndex] = None
    diagnostics: TrainingDiagnostics = field(default_factory=TrainingDiagnostics)

    @property
    def head(self) -> HeadKind:
        return self.net.config.head

    def outputs(self, features: np.ndarray) -> np.ndarray:
        return self.net.forward(features)

    def save(self, path: str | Path) -> Path:
        extras: Dict[str, Any] = {
            "objective": _objective_adapter.dump_python(
                self.objective, mode="json", by_alias=True
            ),
        }
        if self.prototypes is not None:
            extras["prototypes"] = self.prototypes.tolist()
        if self.train_index is not None:
            extras["train_index"] = {
                "embeddings": self.train_index.embeddings.tolist(),
                "labels": self.train_index.labels.tolist(),
            }
        return save_checkpoint(path, self.net, extras)

    @classmethod
    def load(cls, path: str | Path) -> "TrainedModel":
        net, extras = load_checkpoint(path)
        objective = _objective_adapter.validate_python(extras["objective"])
        prototypes = extras.get("prototypes")
        index = extras.get("train_index")
        return cls(
            net=net,
            objective=objective,
            prototypes=None if prototypes is None else np.asarray(prototypes, dtype=np.float64),
            train_index=None
            if index is None
            else TrainEmbeddingIndex(
                np.asarray(index["embeddings"], dtype=np.float64),
                np.asarray(index["labels"], dtype=np.int64),
            ),
        )


def init_prototypes(net: Network, dataset: Dataset) -> np.ndarray:
    """Class means of the untrained embeddings; a class absent from the data gets the global mean."""
    embeddings = net.forward(dataset.features)
    overall = embeddings.mean(axis=0)
    prototypes = np.empty((dataset.num_classes, embeddings.shape[1]))
    for k in range(dataset.num_classes):
        members = embeddings[dataset.labels == k]
        prototypes[k] = members.mean(axis=0) if len(members) else overall
    return prototypes


def make_batches(order: np.ndarray, batch_size: int) -> List[np.ndarray]:
    """Consecutive chunks of `order`; a trailing singleton is folded into the previous batch."""
    batches = [order[i : i + batch_size] for i in range(0, order.size, batch_size)]
    if len(batches) > 1 and batches[-1].size < 2:
        tail = batches.pop()
        batches[-1] = np.concatenate([batches[-1], tail])
    return batches


def check_compatible(net: Network, objective: ObjectiveConfig, num_classes: int):
    if net.config.head is not objective.head:
        raise ConfigurationError(
            f"{objective.title} needs a {objective.head} head, network has {net.config.head}"
        )
    if objective.head is HeadKind.LOGITS and net.config.output_dim != num_classes:
        raise ConfigurationError(
            f"logit head has {net.config.output_dim} outputs for {num_classes} classes"
        )


def objective_step(
    objective: ObjectiveConfig,
    outputs: np.ndarray,
    labels: np.ndarray,
    prototypes: Optional[np.ndarray],
    rng: np.random.Generator,
    diagnostics: TrainingDiagnostics,
) -> Optional[Tuple[float, np.ndarray, Optional[np.ndarray]]]:
    """Batch loss, gradient on outputs and on the prototype bank; None when the batch is skipped."""
    match objective:
        case CrossEntropyObjective():
            loss, grad = ce_loss_batch(outputs, labels)
            return loss, grad, None
        case TripletObjective(margin=margin, mining=mining):
            triplets = mine_triplets(outputs, labels, mining, margin, rng)
            if not triplets:
                return None
            diagnostics.mined_triplets += len(triplets)
            diagnostics.fallback_triplets += sum(t.fallback for t in triplets)
            loss, grad = triplet_batch_loss(outputs, triplets, margin)
            return loss, grad, None
        case PrototypeObjective(lam=lam, tau=tau):
            loss, grad, grad_m = prototype_total(outputs, prototypes, labels, lam, tau)
            return loss, grad, grad_m
        case AveragePrecisionObjective(delta=delta):
            if ranking_classes(labels, outputs.shape[1]).size == 0:
                return None
            loss, grad = ap_loss(outputs, labels, delta)
            return loss, grad, None
    raise ConfigurationError(f"unknown objective {objective!r}")


def train(
    net: Network,
    dataset: Dataset,
    objective: ObjectiveConfig,
    opt_config: OptimizerConfig,
    rng: np.random.Generator,
) -> TrainedModel:
    """Mini-batch momentum SGD over `opt_config.epochs` epochs with per-epoch cosine lr.

    The input network is not modified. ``rng`` is consumed by one permutation
    per epoch and by triplet mining, in that order.
    """
    if len(dataset) < 2:
        raise InvalidInputError("training needs at least 2 examples")
    check_compatible(net, objective, dataset.num_classes)
    net = net.copy()
    optimizer = MomentumSGD.from_config(opt_config)
    diagnostics = TrainingDiagnostics()
    prototypes = (
        init_prototypes(net, dataset)
        if isinstance(objective, PrototypeObjective)
        else None
    )
    extra = [prototypes] if prototypes is not None else []

    for epoch in range(opt_config.epochs):
        lr = cosine_lr(epoch, opt_config.epochs, opt_config.lr)
        losses = []
        for batch in make_batches(rng.permutation(len(dataset)), opt_config.batch_size):
            labels = dataset.labels[batch]
            outputs, cache = net.forward_with_cache(dataset.features[batch])
            step = objective_step(objective, outputs, labels, prototypes, rng, diagnostics)
            if step is None:
                diagnostics.skipped_batches += 1
                logger.warning(
                    "Epoch %d: skipped a batch of %d examples with no usable %s structure",
                    epoch,
                    batch.size,
                    objective.kind,
                )
                continue
            loss, grad_outputs, grad_prototypes = step
            backward_apply(
                net,
                cache,
                grad_outputs,
                optimizer,
                lr,
                extra_params=extra,
                extra_grads=[grad_prototypes] if extra else [],
            )
            losses.append(loss)
        diagnostics.epoch_lrs.append(lr)
        diagnostics.epoch_losses.append(float(np.mean(losses)) if losses else None)
        logger.debug("Epoch %d: lr=%.6g loss=%s", epoch, lr, diagnostics.epoch_losses[-1])

    train_index = None
    if net.config.head is HeadKind.EMBEDDING:
        train_index = TrainEmbeddingIndex(net.forward(dataset.features), dataset.labels)
    return TrainedModel(
        net=net,
        objective=objective,
        prototypes=prototypes,
        train_index=train_index,
        diagnostics=diagnostics,
    )
