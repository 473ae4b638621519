import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mfsurrogate import benchmarks
from mfsurrogate.data import LabeledDataset
from mfsurrogate.exceptions import ContractError, TrainingDivergedError
from mfsurrogate.nn import (Adam, MlpSpec, dnn_train, flatten, init_params, mlp_forward, mlp_grad,
                            unflatten)


def fd_gradient_error(spec, loss, seed, n_probes=20, h=1e-5):
    """Largest relative gap between reverse-mode and central-difference derivatives."""
    rng = np.random.default_rng(seed)
    params = rng.normal(0, 0.7, spec.n_params)
    X, y = rng.uniform(-1, 1, (12, spec.d)), rng.standard_normal(12)
    _, grad = mlp_grad(params, spec, X, y, loss, sigma=0.8)
    worst = 0.0
    for i in rng.choice(spec.n_params, n_probes, replace=False):
        e = np.zeros(spec.n_params)
        e[i] = h
        up = mlp_grad(params + e, spec, X, y, loss, sigma=0.8)[0]
        down = mlp_grad(params - e, spec, X, y, loss, sigma=0.8)[0]
        fd = (up - down) / (2 * h)
        worst = max(worst, abs(fd - grad[i]) / max(abs(fd), abs(grad[i]), 1e-6))
    return worst


def test_zero_params_give_zero_output():
    spec = MlpSpec((3, 5, 4, 1))
    assert np.array_equal(mlp_forward(np.zeros(spec.n_params), spec, np.ones((4, 3))), np.zeros(4))


def test_single_tanh_unit():
    spec = MlpSpec((1, 1, 1), "tanh")
    out = mlp_forward(np.array([1.0, 0.0, 1.0, 0.0]), spec, [[0.5]])
    assert out[0] == pytest.approx(math.tanh(0.5), rel=1e-15)
    assert math.tanh(0.5) == pytest.approx(0.46212, abs=1e-5)


def test_relu_dead_units_return_final_bias():
    spec = MlpSpec((2, 3, 1), "relu")
    W0, b0 = -np.ones((2, 3)), -np.ones(3)
    W1, b1 = np.ones((3, 1)), np.array([0.7])
    params = flatten([(W0, b0), (W1, b1)])
    np.testing.assert_array_equal(mlp_forward(params, spec, np.random.default_rng(0).random((5, 2))),
                                  np.full(5, 0.7))


def test_layout_is_documented_order():
    spec = MlpSpec((2, 3, 1))
    params = np.arange(spec.n_params, dtype=float)
    (W0, b0), (W1, b1) = unflatten(params, spec)
    np.testing.assert_array_equal(W0, np.arange(6.0).reshape(2, 3))
    np.testing.assert_array_equal(b0, [6.0, 7.0, 8.0])
    np.testing.assert_array_equal(W1[:, 0], [9.0, 10.0, 11.0])
    assert b1[0] == 12.0 and spec.n_params == 13


def test_spec_validation():
    with pytest.raises(ContractError):
        MlpSpec((2, 1))
    with pytest.raises(ContractError):
        MlpSpec((2, 4, 2))
    with pytest.raises(ContractError):
        MlpSpec((2, 4, 1), "sigmoid")
    with pytest.raises(ContractError):
        mlp_forward(np.zeros(3), MlpSpec((2, 4, 1)), np.zeros((1, 2)))


@pytest.mark.parametrize("activation", ["tanh", "relu"])
@pytest.mark.parametrize("loss", ["mse", "gaussian-nll"])
def test_gradient_matches_finite_differences(activation, loss):
    spec = MlpSpec((2, 6, 5, 1), activation)
    assert max(fd_gradient_error(spec, loss, seed) for seed in range(3)) <= 1e-4


def test_zero_residual_gives_zero_gradient():
    spec = MlpSpec((2, 4, 4, 1))
    rng = np.random.default_rng(1)
    params, X = rng.standard_normal(spec.n_params), rng.random((6, 2))
    value, grad = mlp_grad(params, spec, X, mlp_forward(params, spec, X))
    assert value == 0.0 and np.all(grad == 0.0)


def test_gradient_linear_in_targets_when_output_is_zero():
    spec = MlpSpec((2, 4, 4, 1))
    rng = np.random.default_rng(2)
    params = rng.standard_normal(spec.n_params)
    W_last, b_last = unflatten(params, spec)[-1]
    W_last[...] = 0.0
    b_last[...] = 0.0
    X, y = rng.random((6, 2)), rng.standard_normal(6)
    np.testing.assert_allclose(mlp_grad(params, spec, X, 2 * y)[1], 2 * mlp_grad(params, spec, X, y)[1],
                               rtol=1e-14, atol=1e-15)


def test_adam_first_step_moves_by_learning_rate():
    params, grad = np.zeros(3), np.array([0.5, -2.0, 1e-3])
    Adam(3, lr=0.01).step(params, grad)
    np.testing.assert_allclose(params, -0.01 * grad / (np.abs(grad) + 1e-8), rtol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(1, 6), min_size=1, max_size=3), st.integers(1, 4),
       st.integers(0, 2**32 - 1))
def test_flatten_unflatten_round_trip(hidden, d, seed):
    spec = MlpSpec((d, *hidden, 1))
    params = np.random.default_rng(seed).standard_normal(spec.n_params)
    assert np.array_equal(flatten(unflatten(params, spec)), params)


def test_init_is_glorot_bounded_with_zero_bias():
    spec = MlpSpec((3, 50, 1), seed=4)
    (W0, b0), (W1, b1) = unflatten(init_params(spec), spec)
    assert np.all(np.abs(W0) <= math.sqrt(6 / 53)) and np.all(np.abs(W1) <= math.sqrt(6 / 51))
    assert not b0.any() and not b1.any()


def test_fits_straight_line():
    X = np.linspace(0, 1, 50)[:, None]
    data = LabeledDataset(X, 2 * X[:, 0], "low")
    model = dnn_train(data, MlpSpec((1, 50, 50, 1)), lr=1e-3, epochs=5000)
    assert np.mean((model.predict(X) - data.y) ** 2) <= 1e-4


def test_zero_epochs_returns_initial_network():
    spec = MlpSpec((1, 8, 1), seed=3)
    data = LabeledDataset(np.linspace(0, 1, 5), np.arange(5.0), "low")
    model = dnn_train(data, spec, epochs=0, standardize=False)
    assert np.array_equal(model.params, init_params(spec))


def test_training_is_deterministic():
    rng = np.random.default_rng(0)
    data = LabeledDataset(rng.random((40, 2)), rng.standard_normal(40), "low")
    spec = MlpSpec((2, 10, 10, 1), seed=7)
    a = dnn_train(data, spec, epochs=200, batch_size=16)
    b = dnn_train(data, spec, epochs=200, batch_size=16)
    assert np.array_equal(a.params, b.params)


def test_divergence_reports_epoch():
    data = LabeledDataset(np.linspace(0, 1, 10), np.linspace(0, 1, 10) ** 2, "low")
    with np.errstate(all="ignore"), pytest.raises(TrainingDivergedError) as info:
        dnn_train(data, MlpSpec((1, 4, 1), "relu"), lr=1e200, epochs=50)
    assert 0 <= info.value.epoch < 50


def test_meng_1d_lf2_dense_accuracy():
    fn = benchmarks.get("meng_1d")
    X = np.linspace(0, 1, 201)[:, None]
    data = LabeledDataset(X, benchmarks.evaluate(fn, "lf2", X), "low")
    model = dnn_train(data, MlpSpec((1, 50, 50, 1)), lr=1e-3, epochs=10000)
    Xq = np.linspace(0, 1, 1000)[:, None]
    truth = benchmarks.evaluate(fn, "lf2", Xq)
    assert np.linalg.norm(model.predict(Xq) - truth) / np.linalg.norm(truth) <= 0.05
