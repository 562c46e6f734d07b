import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from ood_lab.core.errors import InvalidInputError, NumericalError
from ood_lab.core.network import (
    HeadKind,
    MomentumSGD,
    Network,
    NetworkConfig,
    cosine_lr,
    load_checkpoint,
    save_checkpoint,
)
from ood_lab.core.numerics import grad_check, make_rng
from ood_lab.core.objectives import ce_loss_batch


def logit_config(**kwargs) -> NetworkConfig:
    fields = {"input_dim": 3, "hidden_sizes": (5, 4), "head": HeadKind.LOGITS, "output_dim": 3}
    fields.update(kwargs)
    return NetworkConfig(**fields)


def rebuild(config: NetworkConfig, params) -> Network:
    return Network(config, params[0::2], params[1::2])


class TestForward:
    def test_zero_network_gives_zero_logits(self, rng):
        net = Network.zeros(logit_config())
        assert_array_equal(net.forward(rng.standard_normal((4, 3))), np.zeros((4, 3)))

    def test_identity_layers_rectify_input(self):
        config = NetworkConfig(
            input_dim=3, hidden_sizes=(3,), head=HeadKind.EMBEDDING, output_dim=3
        )
        net = Network(config, [np.eye(3), np.eye(3)], [np.zeros(3), np.zeros(3)])
        x = np.array([[1.0, -2.0, 0.5]])
        assert_array_equal(net.forward(x), [[1.0, 0.0, 0.5]])

    def test_deterministic(self, rng):
        net = Network.initialize(logit_config(), make_rng(1))
        x = rng.standard_normal((6, 3))
        assert_array_equal(net.forward(x), net.forward(x))

    def test_initialization_is_seeded(self):
        a = Network.initialize(logit_config(), make_rng(1))
        b = Network.initialize(logit_config(), make_rng(1))
        for left, right in zip(a.parameters(), b.parameters()):
            assert_array_equal(left, right)

    def test_dimension_mismatch(self):
        net = Network.zeros(logit_config())
        with pytest.raises(InvalidInputError):
            net.forward(np.zeros((2, 4)))

    def test_normalized_embeddings_have_unit_norm(self, rng):
        config = logit_config(head=HeadKind.EMBEDDING, output_dim=6, normalize_embeddings=True)
        net = Network.initialize(config, make_rng(2))
        norms = np.linalg.norm(net.forward(rng.standard_normal((5, 3))), axis=1)
        assert_allclose(norms, np.ones(5))


class TestBackward:
    def test_logit_network_gradients(self, rng):
        config = logit_config()
        net = Network.initialize(config, make_rng(3))
        x = rng.standard_normal((5, 3))
        labels = np.array([0, 1, 2, 1, 0])

        def loss(params):
            candidate = rebuild(config, params)
            outputs, cache = candidate.forward_with_cache(x)
            value, grad = ce_loss_batch(outputs, labels)
            return value, candidate.backward(cache, grad)

        assert grad_check(loss, net.parameters(), eps=1e-6) <= 1e-5

    def test_normalized_embedding_gradients(self, rng):
        config = logit_config(head=HeadKind.EMBEDDING, output_dim=4, normalize_embeddings=True)
        net = Network.initialize(config, make_rng(4))
        x = rng.standard_normal((3, 3))
        weights = rng.standard_normal((3, 4))

        def loss(params):
            candidate = rebuild(config, params)
            outputs, cache = candidate.forward_with_cache(x)
            return float(np.sum(outputs * weights)), candidate.backward(cache, weights)

        assert grad_check(loss, net.parameters(), eps=1e-6) <= 1e-5

    def test_rejects_non_finite_output_gradient(self):
        net = Network.zeros(logit_config())
        _, cache = net.forward_with_cache(np.zeros((2, 3)))
        with pytest.raises(NumericalError):
            net.backward(cache, np.full((2, 3), np.nan))


class TestMomentumSGD:
    def test_zero_gradient_applies_only_weight_decay(self):
        w = np.array([2.0, -1.0])
        MomentumSGD(momentum=0.9, weight_decay=0.1).step([w], [np.zeros(2)], lr=0.5)
        assert_allclose(w, [2.0 - 0.5 * 0.1 * 2.0, -1.0 + 0.5 * 0.1 * 1.0])

    def test_half_square_step(self):
        w = np.array([1.0])
        MomentumSGD(momentum=0.0, weight_decay=0.0).step([w], [w.copy()], lr=0.1)
        assert w[0] == pytest.approx(0.9)

    def test_momentum_accumulates(self):
        w = np.array([0.0])
        optimizer = MomentumSGD(momentum=0.5, weight_decay=0.0)
        optimizer.step([w], [np.array([1.0])], lr=1.0)
        optimizer.step([w], [np.array([1.0])], lr=1.0)
        assert w[0] == pytest.approx(-1.0 - 1.5)

    def test_non_finite_gradient(self):
        with pytest.raises(NumericalError, match="parameter 0"):
            MomentumSGD().step([np.zeros(2)], [np.array([np.inf, 0.0])], lr=0.1)


class TestCosineSchedule:
    def test_endpoints_and_midpoint(self):
        assert cosine_lr(0, 40, 0.1) == pytest.approx(0.1)
        assert cosine_lr(40, 40, 0.1) == pytest.approx(0.0, abs=1e-15)
        assert cosine_lr(20, 40, 0.1) == pytest.approx(0.05)

    def test_past_the_end(self):
        with pytest.raises(InvalidInputError):
            cosine_lr(41, 40, 0.1)


class TestCheckpoint:
    def test_restores_parameters_exactly(self, tmp_path):
        net = Network.initialize(logit_config(head=HeadKind.EMBEDDING, output_dim=2), make_rng(5))
        path = save_checkpoint(tmp_path / "net.json", net, {"note": "x"})
        restored, extras = load_checkpoint(path)
        assert restored.config == net.config
        assert extras == {"note": "x"}
        for left, right in zip(restored.parameters(), net.parameters()):
            assert_array_equal(left, right)

    def test_rejects_foreign_file(self, tmp_path):
        path = tmp_path / "other.json"
        path.write_text('{"format": "something-else"}')
        with pytest.raises(InvalidInputError):
            load_checkpoint(path)
