import logging

import numpy as np
import pytest
from numpy.testing import assert_allclose

from ood_lab.core.config import build_config
from ood_lab.core.datasets import Dataset, MixtureSpec, Role, gen_id
from ood_lab.core.errors import ConfigurationError, InvalidInputError
from ood_lab.core.experiment import train_run
from ood_lab.core.network import HeadKind, Network, NetworkConfig, OptimizerConfig
from ood_lab.core.numerics import make_rng
from ood_lab.core.objectives import (
    AveragePrecisionObjective,
    CrossEntropyObjective,
    PrototypeObjective,
)
from ood_lab.core.presets import get_preset, preset_names
from ood_lab.core.training import init_prototypes, make_batches, train


def logit_net(num_classes=4, hidden=(16,), seed=1):
    config = NetworkConfig(
        input_dim=2, hidden_sizes=hidden, head=HeadKind.LOGITS, output_dim=num_classes
    )
    return Network.initialize(config, make_rng(seed))


def embedding_net(dim=8, seed=1):
    config = NetworkConfig(input_dim=2, hidden_sizes=(16,), head=HeadKind.EMBEDDING, output_dim=dim)
    return Network.initialize(config, make_rng(seed))


class TestMakeBatches:
    def test_covers_every_index_once(self):
        order = np.arange(10)
        batches = make_batches(order, 4)
        assert [b.size for b in batches] == [4, 4, 2]
        assert sorted(np.concatenate(batches).tolist()) == list(range(10))

    def test_trailing_singleton_is_folded(self):
        assert [b.size for b in make_batches(np.arange(9), 4)] == [4, 5]


class TestTrain:
    def test_separable_classes_are_fit_exactly(self):
        spec = MixtureSpec.on_circle(num_classes=2, sigma=1e-3, n_per_class=50)
        data = gen_id(spec, make_rng(0))
        optimizer = OptimizerConfig(lr=0.1, epochs=5, batch_size=10)
        model = train(logit_net(num_classes=2), data, CrossEntropyObjective(), optimizer, make_rng(2))
        predictions = np.argmax(model.outputs(data.features), axis=1)
        assert (predictions == data.labels).mean() == 1.0

    @pytest.mark.parametrize("seed", range(5))
    def test_full_batch_loss_does_not_increase_early(self, seed):
        data = gen_id(MixtureSpec.on_circle(n_per_class=50), make_rng(seed))
        optimizer = OptimizerConfig(lr=0.05, epochs=10, batch_size=len(data))
        model = train(logit_net(seed=seed + 10), data, CrossEntropyObjective(), optimizer, make_rng(seed))
        first = model.diagnostics.epoch_losses[:3]
        assert all(later <= earlier for earlier, later in zip(first, first[1:])), first

    @pytest.mark.parametrize("name", preset_names())
    def test_every_preset_has_finite_epoch_losses(self, name):
        fields = get_preset(name).model_dump(by_alias=True)
        fields["optimizer"]["epochs"] = 3
        trained, _ = train_run(build_config(**fields), 0)
        losses = trained.diagnostics.epoch_losses
        assert len(losses) == 3
        assert all(loss is not None and np.isfinite(loss) for loss in losses), losses

    def test_input_network_is_not_modified(self):
        data = gen_id(MixtureSpec.on_circle(n_per_class=20), make_rng(0))
        net = logit_net()
        before = net.forward(data.features)
        train(net, data, CrossEntropyObjective(), OptimizerConfig(lr=0.1, epochs=2), make_rng(3))
        assert_allclose(net.forward(data.features), before)

    def test_cosine_schedule_is_recorded(self):
        data = gen_id(MixtureSpec.on_circle(n_per_class=20), make_rng(0))
        optimizer = OptimizerConfig(lr=0.1, epochs=4, batch_size=16)
        model = train(logit_net(), data, CrossEntropyObjective(), optimizer, make_rng(3))
        lrs = model.diagnostics.epoch_lrs
        assert lrs[0] == pytest.approx(0.1)
        assert all(later < earlier for earlier, later in zip(lrs, lrs[1:]))

    def test_head_mismatch(self):
        data = gen_id(MixtureSpec.on_circle(n_per_class=10), make_rng(0))
        with pytest.raises(ConfigurationError, match="head"):
            train(embedding_net(), data, CrossEntropyObjective(), OptimizerConfig(lr=0.1), make_rng(0))

    def test_needs_two_examples(self):
        data = Dataset(np.zeros((1, 2)), np.zeros(1), Role.ID_TRAIN, 4)
        with pytest.raises(InvalidInputError):
            train(logit_net(), data, CrossEntropyObjective(), OptimizerConfig(lr=0.1), make_rng(0))


class TestSkippedBatches:
    def test_single_class_batches_are_skipped_with_a_warning(self, caplog):
        data = Dataset(
            make_rng(0).standard_normal((20, 2)), np.zeros(20), Role.ID_TRAIN, num_classes=2
        )
        optimizer = OptimizerConfig(lr=0.1, epochs=2, batch_size=10)
        with caplog.at_level(logging.WARNING, logger="ood_lab.core.training"):
            model = train(
                logit_net(num_classes=2), data, AveragePrecisionObjective(), optimizer, make_rng(1)
            )
        assert model.diagnostics.skipped_batches == 4
        assert model.diagnostics.epoch_losses == [None, None]
        warnings = [r for r in caplog.records if r.name == "ood_lab.core.training"]
        assert len(warnings) == 4
        assert "skipped a batch" in warnings[0].getMessage()

    def test_mixed_batches_are_not_skipped(self, caplog):
        data = gen_id(MixtureSpec.on_circle(n_per_class=20), make_rng(0))
        optimizer = OptimizerConfig(lr=0.05, epochs=2, batch_size=40)
        with caplog.at_level(logging.WARNING, logger="ood_lab.core.training"):
            model = train(logit_net(), data, AveragePrecisionObjective(), optimizer, make_rng(1))
        assert model.diagnostics.skipped_batches == 0
        assert not [r for r in caplog.records if r.name == "ood_lab.core.training"]


class TestPrototypes:
    def test_initialised_at_class_means_of_untrained_embeddings(self):
        data = gen_id(MixtureSpec.on_circle(n_per_class=15), make_rng(0))
        net = embedding_net()
        embeddings = net.forward(data.features)
        expected = np.stack([embeddings[data.labels == k].mean(axis=0) for k in range(4)])
        assert_allclose(init_prototypes(net, data), expected)

    def test_absent_class_gets_the_global_mean(self):
        data = gen_id(MixtureSpec.on_circle(n_per_class=10), make_rng(0))
        subset = Dataset(data.features[:20], data.labels[:20], Role.ID_TRAIN, num_classes=4)
        net = embedding_net()
        prototypes = init_prototypes(net, subset)
        assert_allclose(prototypes[3], net.forward(subset.features).mean(axis=0))

    def test_trained_bank_has_one_row_per_class(self):
        data = gen_id(MixtureSpec.on_circle(n_per_class=20), make_rng(0))
        model = train(
            embedding_net(),
            data,
            PrototypeObjective(tau=0.5),
            OptimizerConfig(lr=0.05, epochs=2, batch_size=16),
            make_rng(4),
        )
        assert model.prototypes.shape == (4, 8)
        assert model.train_index is not None and len(model.train_index) == len(data)
