"""
Tests for SGD, Adam, AdamW and LAMB: first-step arithmetic, convergence on a quadratic
bowl, state serialization and error handling.
"""

import numpy as np
import pytest

from src.io_schemas.config_schemas import OptimizerConfig
from src.optim import LAMB, SGD, Adam, AdamW, build_optimizer, step
from src.tensor_core import Tensor
from src.utils.custom_exceptions import CheckpointError, MissingGradError


def parameter(values):
    return Tensor(np.asarray(values, dtype=float), dtype="f64", requires_grad=True)


def set_grad(tensor, values):
    tensor.grad = Tensor(np.asarray(values, dtype=float), dtype="f64")


def quadratic_grads(params, optimum):
    # f(w) = ||w - w*||^2
    for name, tensor in params.items():
        set_grad(tensor, 2.0 * (tensor.data - optimum[name]))


def run_quadratic(optimizer, start, optimum, steps=500):
    params = {"w": parameter(start)}
    best = np.inf
    for _ in range(steps):
        quadratic_grads(params, {"w": np.asarray(optimum)})
        optimizer.step(params)
        best = min(best, float(np.linalg.norm(params["w"].data - optimum)))
    return best


# =============================================================================
# First steps
# =============================================================================


class TestFirstStep:
    def test_sgd(self):
        params = {"w": parameter([1.0])}
        set_grad(params["w"], [2.0])
        SGD(0.1).step(params)
        assert params["w"].data[0] == pytest.approx(0.8)

    def test_sgd_momentum_accumulates(self):
        params = {"w": parameter([0.0])}
        optimizer = SGD(0.1, momentum=0.5)
        for _ in range(2):
            set_grad(params["w"], [1.0])
            optimizer.step(params)
        # velocities 1.0 then 1.5
        assert params["w"].data[0] == pytest.approx(-0.25)

    def test_adam(self):
        params = {"w": parameter([0.0])}
        set_grad(params["w"], [1.0])
        Adam(0.01).step(params)
        assert params["w"].data[0] == pytest.approx(-0.01 / (1.0 + 1e-8), rel=1e-12)

    def test_adamw_decay_is_decoupled(self):
        params = {"w": parameter([1.0])}
        set_grad(params["w"], [0.0])
        AdamW(0.1, weight_decay=0.5).step(params)
        assert params["w"].data[0] == pytest.approx(0.95)

    def test_lamb_zero_weights_matches_adamw(self):
        lamb_params, adamw_params = {"w": parameter([0.0, 0.0])}, {"w": parameter([0.0, 0.0])}
        set_grad(lamb_params["w"], [0.3, -2.0])
        set_grad(adamw_params["w"], [0.3, -2.0])
        LAMB(0.01).step(lamb_params)
        AdamW(0.01, eps=1e-6).step(adamw_params)
        np.testing.assert_allclose(lamb_params["w"].data, adamw_params["w"].data, rtol=1e-12)

    def test_lamb_trust_ratio(self):
        assert LAMB.trust_ratio(np.zeros(3), np.ones(3)) == 1.0
        assert LAMB.trust_ratio(np.ones(3), np.zeros(3)) == 1.0
        assert LAMB.trust_ratio(np.full(4, 3.0), np.full(4, 1.5)) == pytest.approx(2.0)

    def test_lamb_step_length_is_lr_times_weight_norm(self):
        params = {"w": parameter([3.0, 4.0])}
        set_grad(params["w"], [0.7, -0.2])
        LAMB(0.01, weight_decay=0.0).step(params)
        moved = np.linalg.norm(params["w"].data - np.array([3.0, 4.0]))
        assert moved == pytest.approx(0.01 * 5.0)

    def test_step_counter(self):
        params = {"w": parameter([1.0])}
        optimizer = Adam(0.01)
        for _ in range(3):
            set_grad(params["w"], [1.0])
            step(optimizer, params)
        assert optimizer.t == 3
        assert optimizer.slots["w"]["m"].shape == (1,)


# =============================================================================
# Convergence
# =============================================================================


class TestQuadraticConvergence:
    @pytest.mark.parametrize(
        "optimizer",
        [SGD(0.1), Adam(0.05), AdamW(0.05, weight_decay=1e-4)],
        ids=["sgd", "adam", "adamw"],
    )
    def test_reaches_optimum(self, optimizer):
        assert run_quadratic(optimizer, [0.0, 0.0, 0.0], [1.0, -2.0, 0.5]) < 1e-3

    def test_lamb_reaches_optimum(self):
        optimizer = LAMB(0.01, beta1=0.0, beta2=0.999)
        assert run_quadratic(optimizer, [0.05, 0.0, 0.04], [0.02, -0.03, 0.01]) < 1e-3


# =============================================================================
# Behavior
# =============================================================================


class TestBehavior:
    def test_missing_grad_updates_nothing(self):
        params = {"a": parameter([1.0]), "b": parameter([2.0])}
        set_grad(params["a"], [1.0])
        optimizer = SGD(0.1)
        with pytest.raises(MissingGradError, match="'b'"):
            optimizer.step(params)
        assert params["a"].data[0] == 1.0
        assert optimizer.t == 0

    def test_iteration_order_does_not_matter(self, rng):
        values = {name: rng.standard_normal(4) for name in "abc"}
        grads = {name: rng.standard_normal(4) for name in "abc"}
        results = []
        for order in ("abc", "cba"):
            params = {name: parameter(values[name]) for name in order}
            for name in order:
                set_grad(params[name], grads[name])
            LAMB(0.01).step(params)
            results.append({name: params[name].data for name in "abc"})
        for name in "abc":
            assert np.array_equal(results[0][name], results[1][name])

    def test_clip_norm(self):
        params = {"w": parameter([0.0, 0.0])}
        set_grad(params["w"], [6.0, 8.0])
        SGD(1.0, clip_norm=1.0).step(params)
        np.testing.assert_allclose(params["w"].data, [-0.6, -0.8])

    @pytest.mark.parametrize(
        "name,expected,eps",
        [("sgd", SGD, None), ("adam", Adam, 1e-8), ("adamw", AdamW, 1e-8), ("lamb", LAMB, 1e-6)],
    )
    def test_build_from_config(self, name, expected, eps):
        optimizer = build_optimizer(OptimizerConfig(name=name, lr=0.02))
        assert type(optimizer) is expected
        assert optimizer.lr == 0.02
        if eps is not None:
            assert optimizer.eps == eps


# =============================================================================
# State
# =============================================================================


class TestSerialization:
    @staticmethod
    def _params(rng):
        return {
            "layer.weight": parameter(rng.standard_normal((2, 3))),
            "layer.bias": parameter(rng.standard_normal(3)),
        }

    @staticmethod
    def _train(optimizer, params, steps, rng_seed):
        grad_rng = np.random.default_rng(rng_seed)
        for _ in range(steps):
            for tensor in params.values():
                set_grad(tensor, grad_rng.standard_normal(tensor.shape))
            optimizer.step(params)

    @pytest.mark.parametrize(
        "factory",
        [lambda: SGD(0.1, momentum=0.9), lambda: Adam(0.01), lambda: LAMB(0.01)],
        ids=["sgd", "adam", "lamb"],
    )
    def test_resume_is_bit_exact(self, factory, rng):
        params = self._params(rng)
        start = {name: tensor.data.copy() for name, tensor in params.items()}

        uninterrupted = factory()
        self._train(uninterrupted, params, 3, rng_seed=1)
        blob = uninterrupted.serialize()
        snapshot = {name: tensor.data.copy() for name, tensor in params.items()}
        self._train(uninterrupted, params, 2, rng_seed=2)
        expected = {name: tensor.data.copy() for name, tensor in params.items()}

        resumed_params = {name: parameter(snapshot[name]) for name in start}
        resumed = factory()
        resumed.restore(blob, resumed_params)
        self._train(resumed, resumed_params, 2, rng_seed=2)
        for name in expected:
            assert np.array_equal(resumed_params[name].data, expected[name])
        assert resumed.t == 5

    def test_renamed_parameter(self, rng):
        params = self._params(rng)
        optimizer = Adam(0.01)
        self._train(optimizer, params, 1, rng_seed=0)
        renamed = {"other.weight" if name == "layer.weight" else name: t for name, t in params.items()}
        with pytest.raises(CheckpointError):
            Adam(0.01).restore(optimizer.serialize(), renamed)

    def test_shape_mismatch(self, rng):
        params = self._params(rng)
        optimizer = Adam(0.01)
        self._train(optimizer, params, 1, rng_seed=0)
        params["layer.bias"] = parameter(np.zeros(4))
        with pytest.raises(CheckpointError):
            Adam(0.01).restore(optimizer.serialize(), params)

    def test_other_optimizer(self, rng):
        params = self._params(rng)
        optimizer = Adam(0.01)
        self._train(optimizer, params, 1, rng_seed=0)
        with pytest.raises(CheckpointError):
            LAMB(0.01).restore(optimizer.serialize(), params)

    def test_empty_state_round_trip(self):
        blob = Adam(0.01).serialize()
        restored = Adam(0.01)
        restored.restore(blob, {})
        assert restored.t == 0 and restored.slots == {}
        assert restored.serialize() == blob
