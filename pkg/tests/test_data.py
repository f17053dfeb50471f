"""Dataset generation: cell allocation, blob geometry, and file round-trips."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from noisesift import GridSpec, allocate_cells, generate_base
from noisesift.data import load_dataset, save_dataset
from noisesift.errors import ConfigurationError


def test_allocate_cells_matches_index_arithmetic():
    # Independent oracle: invert c = P*(L*(L-1-n) + h) + beta by integer
    # arithmetic and compare against the allocation map.
    spec = GridSpec()
    cells = allocate_cells(spec)
    L, P = spec.levels, spec.classes_per_cell
    assert sorted(cells) == list(range(P * L * L))
    for c, (h, n) in cells.items():
        cell_index = c // P
        assert h == cell_index % L
        assert n == L - 1 - cell_index // L


@given(
    levels=st.integers(min_value=1, max_value=6),
    per_cell=st.integers(min_value=1, max_value=4),
)
@settings(max_examples=30, deadline=None)
def test_allocate_cells_is_a_bijection_onto_the_grid(levels, per_cell):
    spec = GridSpec(
        levels=levels,
        classes_per_cell=per_cell,
        per_class_count=2 ** max(levels - 1, 3),
    )
    cells = allocate_cells(spec)
    assert len(cells) == spec.n_classes
    counts = {}
    for h, n in cells.values():
        assert 0 <= h < levels and 0 <= n < levels
        counts[(h, n)] = counts.get((h, n), 0) + 1
    assert all(v == per_cell for v in counts.values())
    assert len(counts) == levels * levels


def test_generate_base_counts_and_labels(small_spec):
    train, test = generate_base(small_spec)
    K, X = small_spec.n_classes, small_spec.per_class_count
    assert len(train) == K * X
    assert len(test) == K * small_spec.resolved_test_per_class()
    assert np.array_equal(train.y_true, train.y_assigned)
    assert len(np.unique(train.ids)) == len(train)
    np.testing.assert_array_equal(np.bincount(train.y_true, minlength=K), X)
    # Every sample carries the (h, n) cell of its class.
    for c, (h, n) in train.class_cells.items():
        mask = train.y_true == c
        assert np.all(train.h[mask] == h)
        assert np.all(train.n[mask] == n)
    assert train.kind == "train" and test.kind == "test"


def test_center_spacing_controls_nearest_class_distance():
    # With a tiny cluster std the class means approximate the centers, so
    # the nearest pair of class means should sit at ~spacing * std... of
    # the *configured* std; here spacing dominates.
    spec = GridSpec(
        levels=2,
        classes_per_cell=2,
        per_class_count=64,
        input_dim=6,
        cluster_std=0.01,
        center_spacing=5.0,
        seed=3,
    )
    train, _ = generate_base(spec)
    means = np.array([train.X[train.y_true == c].mean(axis=0) for c in range(spec.n_classes)])
    diff = means[:, None, :] - means[None, :, :]
    pair = np.linalg.norm(diff, axis=2)
    np.fill_diagonal(pair, np.inf)
    target = spec.center_spacing * spec.cluster_std
    assert abs(pair.min() - target) < 0.05 * target


def test_generate_base_is_deterministic(small_spec):
    a, _ = generate_base(small_spec)
    b, _ = generate_base(small_spec)
    np.testing.assert_array_equal(a.X, b.X)
    np.testing.assert_array_equal(a.y_true, b.y_true)


def test_save_load_roundtrip_is_bit_exact(tmp_path, small_train):
    save_dataset(small_train, tmp_path, "train")
    loaded = load_dataset(tmp_path, "train")
    np.testing.assert_array_equal(loaded.X, small_train.X)
    np.testing.assert_array_equal(loaded.ids, small_train.ids)
    np.testing.assert_array_equal(loaded.y_assigned, small_train.y_assigned)
    np.testing.assert_array_equal(loaded.h, small_train.h)
    np.testing.assert_array_equal(loaded.n, small_train.n)
    assert loaded.class_cells == small_train.class_cells
    assert loaded.kind == small_train.kind


def test_take_restricts_rows(small_train):
    mask = small_train.y_true == 0
    sub = small_train.take(mask)
    assert len(sub) == int(mask.sum())
    assert np.all(sub.y_true == 0)
    assert sub.K == small_train.K


@pytest.mark.parametrize(
    "kwargs",
    [
        {"levels": 0},
        {"input_dim": 0},
        {"cluster_std": 0.0},
        {"center_spacing": -1.0},
        {"per_class_count": 8, "levels": 5},  # 8 < 2^4
    ],
)
def test_invalid_grid_specs_are_rejected(kwargs):
    with pytest.raises(ConfigurationError):
        GridSpec(**kwargs).validate()
