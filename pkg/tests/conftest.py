"""Shared fixtures: a tiny grid for fast unit tests and one fully trained
default-grid imbalance run reused by the partition/evaluation tests."""

import numpy as np
import pytest

from noisesift import (
    GridSpec,
    NoiseSpec,
    TrainConfig,
    apply_imbalance,
    compute_metric_table,
    generate_base,
    ground_truth_partition,
    init_model,
    inject_label_noise,
    train_with_tracing,
)


@pytest.fixture
def small_spec():
    return GridSpec(
        levels=3,
        classes_per_cell=1,
        per_class_count=16,
        input_dim=4,
        seed=0,
    )


@pytest.fixture
def small_train(small_spec):
    train, _ = generate_base(small_spec)
    return train


@pytest.fixture(scope="session")
def imbalance_run():
    """Seed-0 default-grid imbalance run: (dataset, ground truth, model,
    traces, metric table).  Session-scoped because training dominates the
    suite's runtime."""
    seed = 0
    spec = GridSpec(seed=seed)
    train, test = generate_base(spec)
    train = apply_imbalance(train, seed=seed + 1)
    train = inject_label_noise(train, NoiseSpec(delta=0.4, seed=seed + 2))
    gt = ground_truth_partition(train, h_threshold=4)
    model = init_model(train.d, [32], 16, train.K, seed=seed)
    model, traces = train_with_tracing(model, train, TrainConfig(seed=seed))
    table = compute_metric_table(traces)
    return {
        "train": train,
        "test": test,
        "ground_truth": gt,
        "model": model,
        "traces": traces,
        "table": table,
    }


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
