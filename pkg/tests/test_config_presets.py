import pytest

from ood_lab.core.config import (
    CsvSource,
    ExperimentConfig,
    build_config,
    load_config,
    parse_config,
    save_config,
    with_overrides,
)
from ood_lab.core.errors import ConfigurationError
from ood_lab.core.network import HeadKind
from ood_lab.core.objectives import Mining, PrototypeObjective, TripletObjective
from ood_lab.core.presets import PRESETS, default_comparison, get_preset, preset_names
from ood_lab.core.scoring import ScorerRule

OPTIMIZER = {"lr": 0.1}


class TestCompatibility:
    @pytest.mark.parametrize(
        "objective, network, scorer",
        [
            ({"kind": "ce"}, {"head": "embedding"}, "auto"),
            ({"kind": "ap"}, {"head": "embedding"}, "auto"),
            ({"kind": "triplet"}, {"head": "logits"}, "auto"),
            ({"kind": "prototype"}, {"head": "logits"}, "auto"),
            ({"kind": "ce"}, {}, "knn"),
            ({"kind": "ap"}, {}, "knn"),
            ({"kind": "triplet"}, {}, "msp"),
            ({"kind": "triplet"}, {}, "entropy"),
        ],
    )
    def test_incompatible_combinations_are_rejected(self, objective, network, scorer):
        with pytest.raises(ConfigurationError) as info:
            build_config(objective=objective, network=network, optimizer=OPTIMIZER, scorer=scorer)
        message = str(info.value)
        assert "head" in message or "scor" in message

    @pytest.mark.parametrize(
        "objective, scorer",
        [
            ({"kind": "ce"}, "msp"),
            ({"kind": "ap"}, "entropy"),
            ({"kind": "triplet"}, "knn"),
            ({"kind": "prototype"}, "msp"),
            ({"kind": "prototype"}, "entropy"),
            ({"kind": "prototype"}, "knn"),
        ],
    )
    def test_compatible_combinations(self, objective, scorer):
        config = build_config(objective=objective, optimizer=OPTIMIZER, scorer=scorer)
        assert config.resolved_scorer is ScorerRule(scorer)

    def test_head_follows_objective(self):
        assert build_config(objective={"kind": "ap"}, optimizer=OPTIMIZER).head is HeadKind.LOGITS
        config = build_config(objective={"kind": "triplet"}, optimizer=OPTIMIZER)
        assert config.head is HeadKind.EMBEDDING
        assert config.resolved_scorer is ScorerRule.KNN

    def test_message_suggests_the_fix(self):
        with pytest.raises(ConfigurationError, match="set network.head to logits"):
            build_config(objective={"kind": "ce"}, network={"head": "embedding"}, optimizer=OPTIMIZER)

    def test_field_validation(self):
        with pytest.raises(ConfigurationError, match="optimizer.lr"):
            build_config(objective={"kind": "ce"}, optimizer={"lr": -1.0})
        with pytest.raises(ConfigurationError, match="objective"):
            build_config(objective={"kind": "hinge"}, optimizer=OPTIMIZER)


class TestSerialization:
    def test_round_trip(self):
        for config in PRESETS.values():
            assert parse_config(config.to_json()) == config

    def test_csv_source_round_trip(self, tmp_path):
        config = build_config(
            dataset={"kind": "csv", "id_path": "id.csv", "near_path": "near.csv", "far_path": "far.csv"},
            objective={"kind": "prototype", "lambda": 0.5},
            optimizer=OPTIMIZER,
        )
        assert isinstance(config.dataset, CsvSource)
        assert config.objective.lam == 0.5
        assert load_config(save_config(config, tmp_path / "config.json")) == config

    def test_lambda_key_in_json(self):
        assert '"lambda": 0.01' in get_preset("cifar10-analog/prototype").to_json()

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigurationError, match="does not exist"):
            load_config(tmp_path / "missing.json")

    def test_invalid_json(self):
        with pytest.raises(ConfigurationError):
            parse_config("{not json")

    def test_overrides(self):
        config = with_overrides(get_preset("cifar10-analog/ce"), seed=100, runs=2)
        assert (config.seed, config.runs) == (100, 2)
        with pytest.raises(ConfigurationError):
            with_overrides(config, runs=0)


class TestPresets:
    def test_twelve_presets(self):
        assert len(preset_names()) == 12
        assert all(name.split("/")[0].endswith("-analog") for name in preset_names())

    def test_cifar10_prototype(self):
        config = get_preset("cifar10-analog/prototype")
        assert isinstance(config.objective, PrototypeObjective)
        assert config.optimizer.lr == 0.10
        assert config.network.embedding_dim == 64
        assert config.objective.lam == 0.01
        assert config.objective.tau == 0.1
        assert config.resolved_scorer is ScorerRule.ENTROPY

    def test_cifar100_triplet(self):
        config = get_preset("cifar100-analog/triplet")
        assert isinstance(config.objective, TripletObjective)
        assert config.optimizer.lr == 0.0004
        assert config.network.embedding_dim == 256
        assert config.objective.mining is Mining.SEMI_HARD
        assert config.resolved_scorer is ScorerRule.KNN

    def test_cifar100_prototype_uses_msp(self):
        assert get_preset("cifar100-analog/prototype").resolved_scorer is ScorerRule.MSP

    def test_shared_desk_defaults(self):
        for config in PRESETS.values():
            assert config.runs == 5
            assert config.optimizer.momentum == 0.9
            assert config.optimizer.weight_decay == 5e-4
            assert config.network.hidden_sizes == (64, 64)
            assert config.dataset.num_classes == 4

    def test_presets_are_immutable(self):
        config = get_preset("cifar10-analog/ce")
        with pytest.raises(Exception):
            config.seed = 3
        assert isinstance(config, ExperimentConfig)

    def test_unknown_preset(self):
        with pytest.raises(ConfigurationError, match="unknown preset"):
            get_preset("cifar10/ce")

    def test_default_comparison(self):
        kinds = [c.objective.kind for c in default_comparison()]
        assert kinds == ["ce", "triplet", "prototype", "ap"]
