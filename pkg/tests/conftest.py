import numpy as np
import pytest

from ood_lab.core.config import ExperimentConfig, build_config
from ood_lab.core.numerics import make_rng


@pytest.fixture
def rng() -> np.random.Generator:
    return make_rng(1234)


def small_config(objective: dict, **overrides) -> ExperimentConfig:
    """A few-second experiment on a shrunken synthetic benchmark."""
    fields = {
        "name": f"small-{objective['kind']}",
        "dataset": {
            "kind": "synthetic",
            "train_per_class": 40,
            "val_per_class": 5,
            "test_per_class": 15,
            "near": 30,
            "far": 30,
        },
        "objective": objective,
        "network": {"hidden_sizes": [16], "embedding_dim": 8},
        "optimizer": {"lr": 0.05, "epochs": 4, "batch_size": 32},
        "seed": 7,
        "runs": 2,
    }
    fields.update(overrides)
    return build_config(**fields)


@pytest.fixture
def ce_config() -> ExperimentConfig:
    return small_config({"kind": "ce"})


@pytest.fixture
def triplet_config() -> ExperimentConfig:
    return small_config(
        {"kind": "triplet", "mining": "semi_hard"},
        optimizer={"lr": 0.01, "epochs": 3, "batch_size": 32},
    )


@pytest.fixture
def prototype_config() -> ExperimentConfig:
    return small_config({"kind": "prototype", "lambda": 0.01, "tau": 0.5})


@pytest.fixture
def out_dir(tmp_path):
    return tmp_path / "runs"
