"""Desk-scale analogues of the published per-dataset hyperparameter choices.

Each family carries the learning rate, embedding dimension, prototype
lambda/tau, triplet mining and validation-selected OOD score of one benchmark;
the data, network and schedule are the shared desk-scale defaults. The
"-analog" suffix marks that the datasets differ from the originals.
"""

from typing import Dict, List

from .config import ExperimentConfig, NetworkSettings, build_config
from .errors import ConfigurationError

OBJECTIVE_KEYS = ("ce", "triplet", "prototype", "ap")
DEFAULT_FAMILY = "cifar10-analog"

DESK_EPOCHS = 40
DESK_BATCH_SIZE = 64

_FAMILIES = {
    "cifar10-analog": {
        "ap": {"lr": 0.08, "scorer": "entropy"},
        "ce": {"lr": 0.10, "scorer": "entropy"},
        "prototype": {"lr": 0.10, "ed": 64, "lambda": 0.01, "tau": 0.1, "scorer": "entropy"},
        "triplet": {"lr": 0.005, "ed": 32, "mining": "random", "scorer": "knn"},
    },
    "cifar100-analog": {
        "ap": {"lr": 0.08, "scorer": "entropy"},
        "ce": {"lr": 0.08, "scorer": "entropy"},
        "prototype": {"lr": 0.10, "ed": 128, "lambda": 0.001, "tau": 0.1, "scorer": "msp"},
        "triplet": {"lr": 0.0004, "ed": 256, "mining": "semi_hard", "scorer": "knn"},
    },
    "imagenet200-analog": {
        "ap": {"lr": 0.10, "scorer": "entropy"},
        "ce": {"lr": 0.08, "scorer": "entropy"},
        "prototype": {"lr": 0.10, "ed": 128, "lambda": 0.001, "tau": 0.1, "scorer": "msp"},
        "triplet": {"lr": 0.0009, "ed": 512, "mining": "semi_hard", "scorer": "knn"},
    },
}


def _objective(key: str, row: dict) -> dict:
    if key == "triplet":
        return {"kind": "triplet", "margin": 1.0, "mining": row["mining"]}
    if key == "prototype":
        return {"kind": "prototype", "lambda": row["lambda"], "tau": row["tau"]}
    if key == "ap":
        return {"kind": "ap", "delta": 1.0}
    return {"kind": "ce"}


def _build(family: str, key: str) -> ExperimentConfig:
    row = _FAMILIES[family][key]
    return build_config(
        name=f"{family}/{key}",
        objective=_objective(key, row),
        network=NetworkSettings(embedding_dim=row.get("ed", 64)),
        optimizer={
            "lr": row["lr"],
            "epochs": DESK_EPOCHS,
            "batch_size": DESK_BATCH_SIZE,
        },
        scorer="auto",
        selected_scorer=row["scorer"],
    )


PRESETS: Dict[str, ExperimentConfig] = {
    f"{family}/{key}": _build(family, key)
    for family in _FAMILIES
    for key in OBJECTIVE_KEYS
}


def preset_names() -> List[str]:
    return list(PRESETS)


def get_preset(name: str) -> ExperimentConfig:
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigurationError(
            f"unknown preset '{name}'; choose one of: {', '.join(PRESETS)}"
        ) from None


def default_comparison() -> List[ExperimentConfig]:
    return [PRESETS[f"{DEFAULT_FAMILY}/{key}"] for key in OBJECTIVE_KEYS]
