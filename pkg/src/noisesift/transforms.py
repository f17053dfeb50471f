"""Hardness and noisiness transformations of a base dataset.

Three alternative hardness types (imbalance, diversification, boundary
closeness) and the label-noise injection that follows them, plus the
ground-truth easy/hard/noisy partition of the result.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .errors import ConfigurationError


@dataclass(frozen=True)
class NoiseSpec:
    """Maximum label-noise level delta; per-sample flip probability is
    delta * n / (L-1)."""

    delta: float = 0.4
    seed: int = 0

    def validate(self) -> None:
        if not 0.0 <= self.delta <= 1.0:
            raise ConfigurationError("delta must be in [0, 1]")


@dataclass(frozen=True)
class EpsSchedule:
    """Per-hardness-level perturbation magnitude for the boundary shift."""

    eps_by_h: tuple[float, ...]

    def validate(self, levels: int) -> None:
        if len(self.eps_by_h) != levels:
            raise ConfigurationError(
                f"eps schedule length {len(self.eps_by_h)} != levels {levels}"
            )
        if any(e < 0 for e in self.eps_by_h):
            raise ConfigurationError("eps values must be non-negative")
        if any(b < a for a, b in zip(self.eps_by_h, self.eps_by_h[1:])):
            raise ConfigurationError("eps schedule must be non-decreasing in h")

    @staticmethod
    def linear(levels: int, eps_max: float) -> "EpsSchedule":
        if levels == 1:
            return EpsSchedule((0.0,))
        return EpsSchedule(
            tuple(h * eps_max / (levels - 1) for h in range(levels))
        )


@dataclass
class GroundTruthPartition:
    """Disjoint noisy/hard/easy id sets covering the train set."""

    noisy_ids: set[int]
    hard_ids: set[int]
    easy_ids: set[int]
    h_threshold: int = 4

    def all_ids(self) -> set[int]:
        return self.noisy_ids | self.hard_ids | self.easy_ids


def _per_class_rng(seed: int, class_idx: int) -> np.random.Generator:
    return np.random.default_rng([seed, class_idx])


def apply_imbalance(dataset: Dataset, seed: int = 0) -> Dataset:
    """Keep floor(X / 2^h) samples per class, seeded per class."""
    counts = dataset.class_counts()
    keep = np.zeros(len(dataset), dtype=bool)
    for c, (h, _n) in dataset.class_cells.items():
        target = counts[c] // (2**h)
        if target < 1:
            raise ConfigurationError(
                f"class {c}: {counts[c]} samples / 2^{h} leaves no samples"
            )
        rows = np.flatnonzero(dataset.y_assigned == c)
        rng = _per_class_rng(seed, c)
        keep[rng.choice(rows, size=target, replace=False)] = True
    return dataset.take(keep)


def apply_diversification(
    dataset: Dataset, jitter_std: float = 0.1, seed: int = 0
) -> Dataset:
    """Keep floor(X / 2^(L-1-h)) distinct samples per class and add
    2^(L-1-h) - 1 jittered copies of each, so classes stay balanced."""
    L = dataset.levels
    counts = dataset.class_counts()
    keep = np.zeros(len(dataset), dtype=bool)
    copy_plan: list[tuple[np.ndarray, int, int]] = []  # (rows, copies, class)
    for c, (h, _n) in sorted(dataset.class_cells.items()):
        factor = 2 ** (L - 1 - h)
        distinct = counts[c] // factor
        if distinct < 1:
            raise ConfigurationError(
                f"class {c}: {counts[c]} samples / 2^{L - 1 - h} leaves no bases"
            )
        rows = np.flatnonzero(dataset.y_assigned == c)
        rng = _per_class_rng(seed, c)
        picked = np.sort(rng.choice(rows, size=distinct, replace=False))
        keep[picked] = True
        copy_plan.append((picked, factor - 1, c))

    base = dataset.take(keep)
    next_id = int(dataset.ids.max()) + 1
    new_X, new_ids, new_yt, new_ya, new_h, new_n, new_base = [], [], [], [], [], [], []
    for picked, copies, c in copy_plan:
        if copies == 0:
            continue
        rng = _per_class_rng(seed + 1, c)
        for row in picked:
            jit = jitter_std * rng.standard_normal((copies, dataset.d))
            new_X.append(dataset.X[row] + jit)
            new_ids.extend(range(next_id, next_id + copies))
            next_id += copies
            new_yt.extend([dataset.y_true[row]] * copies)
            new_ya.extend([dataset.y_assigned[row]] * copies)
            new_h.extend([dataset.h[row]] * copies)
            new_n.extend([dataset.n[row]] * copies)
            new_base.extend([dataset.ids[row]] * copies)

    if not new_X:
        return base
    out = base.copy()
    out.ids = np.concatenate([base.ids, np.asarray(new_ids, dtype=np.int64)])
    out.X = np.vstack([base.X] + new_X)
    out.y_true = np.concatenate([base.y_true, np.asarray(new_yt, dtype=np.int64)])
    out.y_assigned = np.concatenate([base.y_assigned, np.asarray(new_ya, dtype=np.int64)])
    out.h = np.concatenate([base.h, np.asarray(new_h, dtype=np.int64)])
    out.n = np.concatenate([base.n, np.asarray(new_n, dtype=np.int64)])
    out.base_id = np.concatenate([base.base_id, np.asarray(new_base, dtype=np.int64)])
    return out


def apply_boundary_shift(dataset: Dataset, oracle, schedule: EpsSchedule) -> Dataset:
    """Push samples toward the oracle's decision boundary with a single
    signed-gradient step of size eps(h), then drop samples whose oracle
    prediction no longer equals their true label.

    The oracle must expose predict(X) -> class indices and
    input_gradient(X, y) -> d(loss)/d(x) arrays.
    """
    schedule.validate(dataset.levels)
    if getattr(oracle, "d", dataset.d) != dataset.d:
        raise ConfigurationError("oracle input dimension mismatch")
    eps = np.asarray(schedule.eps_by_h)[dataset.h]
    grads = oracle.input_gradient(dataset.X, dataset.y_true)
    shifted = dataset.X + eps[:, None] * np.sign(grads)
    out = dataset.copy()
    out.X = shifted
    preds = oracle.predict(shifted)
    return out.take(preds == dataset.y_true)


def inject_label_noise(dataset: Dataset, spec: NoiseSpec) -> Dataset:
    """Redraw each sample's assigned label with probability
    delta * n / (L-1), uniformly over the classes in the same n-stratum
    (the redraw may land back on the true class)."""
    spec.validate()
    L = dataset.levels
    out = dataset.copy()
    rng = np.random.default_rng(spec.seed)
    strata: dict[int, np.ndarray] = {}
    for n in range(L):
        strata[n] = np.asarray(
            sorted(c for c, (_h, cn) in dataset.class_cells.items() if cn == n),
            dtype=np.int64,
        )
    # Sequential per-sample draws keep the RNG stream order-stable.
    u = rng.random(len(dataset))
    if L == 1:
        q = np.zeros(len(dataset))
    else:
        q = spec.delta * out.n / (L - 1)
    flips = np.flatnonzero(u < q)
    for i in flips:
        out.y_assigned[i] = rng.choice(strata[int(out.n[i])])
    return out


def ground_truth_partition(dataset: Dataset, h_threshold: int = 4) -> GroundTruthPartition:
    """Noisy = mislabeled; hard = correctly labeled with h >= threshold;
    easy = the rest."""
    mislabeled = dataset.y_assigned != dataset.y_true
    hard = ~mislabeled & (dataset.h >= h_threshold)
    easy = ~mislabeled & ~hard
    return GroundTruthPartition(
        noisy_ids=set(dataset.ids[mislabeled].tolist()),
        hard_ids=set(dataset.ids[hard].tolist()),
        easy_ids=set(dataset.ids[easy].tolist()),
        h_threshold=h_threshold,
    )
