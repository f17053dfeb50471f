"""Classifier numerics: backprop vs finite differences, update rule,
snapshot policy, and persistence round-trips."""

import math

import numpy as np
import pytest

from noisesift import (
    GridSpec,
    Model,
    TrainConfig,
    evaluate,
    forward,
    generate_base,
    init_model,
    input_gradient,
    train_with_tracing,
)
from noisesift.errors import ConfigurationError, TrainingDivergedError
from noisesift.mlp import (
    _backward,
    forward_batch,
    load_model,
    load_traces,
    save_model,
    save_traces,
)


def _batch_loss(model, X, y):
    probs, _ = forward_batch(model, X)
    return float(-np.log(probs[np.arange(len(y)), y]).mean())


def _param_grads(model, X, y):
    probs, _, acts = forward_batch(model, X, return_cache=True)
    dlogits = probs.copy()
    dlogits[np.arange(len(y)), y] -= 1.0
    dlogits /= len(y)
    gw, gb, _ = _backward(model, acts, dlogits)
    return gw, gb


def test_backprop_matches_central_finite_differences(rng):
    d, K, N = 3, 4, 5
    model = init_model(d, [4, 3], 3, K, seed=7)
    X = rng.standard_normal((N, d))
    y = rng.integers(0, K, size=N)
    gw, gb = _param_grads(model, X, y)
    eps = 1e-6
    for li in range(len(model.weights)):
        for arr, grad in ((model.weights[li], gw[li]), (model.biases[li], gb[li])):
            flat = arr.reshape(-1)
            for j in range(flat.size):
                orig = flat[j]
                flat[j] = orig + eps
                up = _batch_loss(model, X, y)
                flat[j] = orig - eps
                down = _batch_loss(model, X, y)
                flat[j] = orig
                numeric = (up - down) / (2 * eps)
                analytic = grad.reshape(-1)[j]
                denom = max(abs(numeric), abs(analytic), 1e-8)
                assert abs(numeric - analytic) / denom < 1e-4


def test_input_gradient_matches_central_finite_differences(rng):
    d, K, N = 4, 3, 3
    model = init_model(d, [5], 4, K, seed=2)
    X = rng.standard_normal((N, d))
    y = rng.integers(0, K, size=N)
    analytic = input_gradient(model, X, y)
    eps = 1e-6
    for i in range(N):
        for j in range(d):
            up, down = X.copy(), X.copy()
            up[i, j] += eps
            down[i, j] -= eps
            pu, _ = forward_batch(model, up)
            pd, _ = forward_batch(model, down)
            numeric = (
                -math.log(pu[i, y[i]]) - (-math.log(pd[i, y[i]]))
            ) / (2 * eps)
            denom = max(abs(numeric), abs(analytic[i, j]), 1e-8)
            assert abs(numeric - analytic[i, j]) / denom < 1e-4


def test_zero_hidden_model_is_linear_softmax(rng):
    d = K = 3
    model = init_model(d, [], d, K, seed=1)
    X = rng.standard_normal((5, d))
    logits = X @ model.weights[0] + model.biases[0]
    e = np.exp(logits - logits.max(axis=1, keepdims=True))
    expected = e / e.sum(axis=1, keepdims=True)
    probs, feats = forward_batch(model, X)
    np.testing.assert_allclose(probs, expected, rtol=1e-12)
    np.testing.assert_array_equal(feats, X)  # feature layer passes through


def test_one_epoch_full_batch_matches_manual_sgd_update(small_train):
    cfg = TrainConfig(
        epochs=1,
        batch_size=len(small_train),
        learning_rate=0.1,
        momentum=0.9,
        weight_decay=0.01,
        seed=0,
    )
    model = init_model(small_train.d, [6], 4, small_train.K, seed=3)
    # Manual update: velocity starts at zero, so after one step
    # w <- w - lr * (grad + wd * w) and b <- b - lr * grad_b.
    gw, gb = _param_grads(model, small_train.X, small_train.y_assigned)
    expected_w = [
        w - cfg.learning_rate * (g + cfg.weight_decay * w)
        for w, g in zip(model.weights, gw)
    ]
    expected_b = [b - cfg.learning_rate * g for b, g in zip(model.biases, gb)]
    trained, _ = train_with_tracing(model, small_train, cfg)
    for w, ew in zip(trained.weights, expected_w):
        np.testing.assert_allclose(w, ew, rtol=1e-12)
    for b, eb in zip(trained.biases, expected_b):
        np.testing.assert_allclose(b, eb, rtol=1e-12)


def test_training_is_deterministic(small_train):
    cfg = TrainConfig(epochs=3, seed=11)
    m1 = init_model(small_train.d, [8], 4, small_train.K, seed=5)
    m2 = init_model(small_train.d, [8], 4, small_train.K, seed=5)
    t1, tr1 = train_with_tracing(m1, small_train, cfg)
    t2, tr2 = train_with_tracing(m2, small_train, cfg)
    for w1, w2 in zip(t1.weights, t2.weights):
        np.testing.assert_array_equal(w1, w2)
    np.testing.assert_array_equal(tr1.loss, tr2.loss)


def test_mid_snapshot_at_first_epoch_reaching_half_accuracy(small_train):
    cfg = TrainConfig(epochs=30, learning_rate=0.05, seed=0)
    model = init_model(small_train.d, [16], 8, small_train.K, seed=0)
    _, traces = train_with_tracing(model, small_train, cfg)
    t = traces.mid_epoch
    assert traces.train_acc[t - 1] >= 0.5
    assert np.all(traces.train_acc[: t - 1] < 0.5)


def test_mid_snapshot_falls_back_to_half_horizon():
    # Identical inputs split over three labels cap accuracy at 1/3 < 0.5.
    from noisesift.data import Dataset

    N = 30
    ds = Dataset(
        ids=np.arange(N),
        X=np.ones((N, 2)),
        y_true=np.arange(N) % 3,
        y_assigned=np.arange(N) % 3,
        h=np.zeros(N, dtype=np.int64),
        n=np.zeros(N, dtype=np.int64),
        base_id=np.full(N, -1),
        K=3,
        d=2,
        levels=1,
        classes_per_cell=3,
        class_cells={0: (0, 0), 1: (0, 0), 2: (0, 0)},
    )
    cfg = TrainConfig(epochs=7, learning_rate=0.001, seed=0)
    model = init_model(2, [4], 3, 3, seed=0)
    _, traces = train_with_tracing(model, ds, cfg)
    assert traces.mid_epoch == math.ceil(7 / 2)
    assert np.all(traces.train_acc < 0.5)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_raises(small_train):
    model = init_model(small_train.d, [8], 4, small_train.K, seed=0)
    with pytest.raises(TrainingDivergedError):
        train_with_tracing(
            model, small_train, TrainConfig(epochs=3, learning_rate=1e30, seed=0)
        )


def test_trace_shapes_and_probability_identities(small_train):
    cfg = TrainConfig(epochs=4, seed=0)
    model = init_model(small_train.d, [8], 4, small_train.K, seed=0)
    _, traces = train_with_tracing(model, small_train, cfg)
    N = len(small_train)
    assert traces.loss.shape == (4, N)
    assert traces.features_mid.shape == (N, 4)
    # p_pred is the max probability, so it dominates the runner-up, and
    # loss is the negative log of p_assigned.
    assert np.all(traces.p_pred >= traces.p_runner_up)
    np.testing.assert_allclose(traces.loss, -np.log(traces.p_assigned), rtol=1e-12)
    agree = traces.pred == traces.y_assigned[None, :]
    np.testing.assert_array_equal(
        traces.p_max_other < traces.p_assigned, agree
    )


def test_evaluate_scores_test_sets_against_true_labels(small_train):
    model = init_model(small_train.d, [8], 4, small_train.K, seed=0)
    test = small_train.copy()
    test.kind = "test"
    test.y_assigned = (test.y_true + 1) % test.K  # corrupt assigned labels
    acc_true, _ = evaluate(model, test)
    probs, _ = forward_batch(model, test.X)
    expected = float(np.mean(np.argmax(probs, axis=1) == test.y_true))
    assert acc_true == expected


def test_model_save_load_roundtrip(tmp_path, small_train):
    model = init_model(small_train.d, [8], 4, small_train.K, seed=0)
    save_model(model, tmp_path / "model")
    loaded = load_model(tmp_path / "model")
    for w1, w2 in zip(model.weights, loaded.weights):
        np.testing.assert_array_equal(w1, w2)
    assert (loaded.d, loaded.m, loaded.K) == (model.d, model.m, model.K)


def test_traces_save_load_roundtrip(tmp_path, small_train):
    cfg = TrainConfig(epochs=3, seed=0)
    model = init_model(small_train.d, [8], 4, small_train.K, seed=0)
    _, traces = train_with_tracing(model, small_train, cfg)
    save_traces(traces, tmp_path)
    loaded = load_traces(tmp_path)
    np.testing.assert_array_equal(loaded.loss, traces.loss)
    np.testing.assert_array_equal(loaded.pred, traces.pred)
    np.testing.assert_array_equal(loaded.features_mid, traces.features_mid)
    np.testing.assert_array_equal(loaded.features_end, traces.features_end)
    np.testing.assert_array_equal(loaded.train_acc, traces.train_acc)
    assert loaded.mid_epoch == traces.mid_epoch


def test_init_model_rejects_bad_shapes():
    with pytest.raises(ConfigurationError):
        init_model(4, [0], 2, 3)
    with pytest.raises(ConfigurationError):
        init_model(4, [], 2, 3)  # passthrough requires m == d
