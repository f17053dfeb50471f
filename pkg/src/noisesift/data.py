"""Synthetic labeled vector datasets with a controlled hardness/noisiness grid.

Each class is a Gaussian blob around a center on a hypersphere, and every
class is allocated to one (h, n) cell of an L x L grid: h grades how hard
the class will be made to learn, n how noisy its labels will become.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigurationError


@dataclass(frozen=True)
class GridSpec:
    """Parameters of the base dataset and its (h, n) cell grid."""

    levels: int = 5
    classes_per_cell: int = 2
    per_class_count: int = 256
    input_dim: int = 8
    cluster_std: float = 1.0
    # Nearest-center distance between class blobs, in units of cluster_std.
    center_spacing: float = 3.0
    test_per_class: int | None = None
    seed: int = 0

    @property
    def n_classes(self) -> int:
        return self.classes_per_cell * self.levels * self.levels

    def resolved_test_per_class(self) -> int:
        if self.test_per_class is not None:
            return self.test_per_class
        return max(self.per_class_count // 4, 8)

    def validate(self) -> None:
        if self.levels < 1:
            raise ConfigurationError("levels must be >= 1")
        if self.classes_per_cell < 1:
            raise ConfigurationError("classes_per_cell must be >= 1")
        if self.input_dim < 1:
            raise ConfigurationError("input_dim must be >= 1")
        if self.cluster_std <= 0:
            raise ConfigurationError("cluster_std must be > 0")
        if self.center_spacing <= 0:
            raise ConfigurationError("center_spacing must be > 0")
        if self.per_class_count < 2 ** (self.levels - 1):
            raise ConfigurationError(
                "per_class_count must be >= 2^(levels-1) so every "
                "subsampling level keeps at least one sample"
            )
        if self.resolved_test_per_class() < 1:
            raise ConfigurationError("test_per_class must be >= 1")


@dataclass
class Dataset:
    """Column-oriented sample store.

    Arrays are parallel: row i describes sample ids[i].  base_id is -1 for
    samples that are not augmented copies of another sample.
    """

    ids: np.ndarray
    X: np.ndarray
    y_true: np.ndarray
    y_assigned: np.ndarray
    h: np.ndarray
    n: np.ndarray
    base_id: np.ndarray
    K: int
    d: int
    levels: int
    classes_per_cell: int
    class_cells: dict[int, tuple[int, int]]
    kind: str = "train"

    def __len__(self) -> int:
        return len(self.ids)

    def copy(self) -> "Dataset":
        return Dataset(
            ids=self.ids.copy(),
            X=self.X.copy(),
            y_true=self.y_true.copy(),
            y_assigned=self.y_assigned.copy(),
            h=self.h.copy(),
            n=self.n.copy(),
            base_id=self.base_id.copy(),
            K=self.K,
            d=self.d,
            levels=self.levels,
            classes_per_cell=self.classes_per_cell,
            class_cells=dict(self.class_cells),
            kind=self.kind,
        )

    def take(self, mask_or_index: np.ndarray) -> "Dataset":
        """New Dataset restricted to the given boolean mask or index array."""
        sel = mask_or_index
        return Dataset(
            ids=self.ids[sel].copy(),
            X=self.X[sel].copy(),
            y_true=self.y_true[sel].copy(),
            y_assigned=self.y_assigned[sel].copy(),
            h=self.h[sel].copy(),
            n=self.n[sel].copy(),
            base_id=self.base_id[sel].copy(),
            K=self.K,
            d=self.d,
            levels=self.levels,
            classes_per_cell=self.classes_per_cell,
            class_cells=dict(self.class_cells),
            kind=self.kind,
        )

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.y_assigned, minlength=self.K)


def allocate_cells(spec: GridSpec) -> dict[int, tuple[int, int]]:
    """Map every class index to its (h, n) cell.

    Class c = P*(L*(L-1-n) + h) + beta for beta in [0, P), so each cell
    owns exactly P consecutive-by-beta classes.
    """
    spec.validate()
    L, P = spec.levels, spec.classes_per_cell
    cells: dict[int, tuple[int, int]] = {}
    for n in range(L):
        for h in range(L):
            for beta in range(P):
                c = P * (L * (L - 1 - n) + h) + beta
                cells[c] = (h, n)
    return cells


def _class_centers(spec: GridSpec, rng: np.random.Generator) -> np.ndarray:
    """K centers with nearest-pair distance == center_spacing * cluster_std.

    Unit directions are picked by greedy farthest-point selection from a
    random candidate pool, then scaled so the realized minimum pairwise
    distance hits the requested spacing.
    """
    K, d = spec.n_classes, spec.input_dim
    if K == 1:
        return np.zeros((1, d))
    pool = max(8 * K, 64)
    cand = rng.standard_normal((pool, d))
    cand /= np.linalg.norm(cand, axis=1, keepdims=True)
    chosen = [0]
    dists = np.linalg.norm(cand - cand[0], axis=1)
    for _ in range(K - 1):
        nxt = int(np.argmax(dists))
        chosen.append(nxt)
        dists = np.minimum(dists, np.linalg.norm(cand - cand[nxt], axis=1))
    centers = cand[chosen]
    diff = centers[:, None, :] - centers[None, :, :]
    pair = np.linalg.norm(diff, axis=2)
    np.fill_diagonal(pair, np.inf)
    min_dist = pair.min()
    target = spec.center_spacing * spec.cluster_std
    return centers * (target / min_dist)


def generate_base(spec: GridSpec) -> tuple[Dataset, Dataset]:
    """Clean balanced train/test pair: X train samples per class, Gaussian
    blobs around hypersphere centers, y_assigned == y_true everywhere."""
    spec.validate()
    cells = allocate_cells(spec)
    rng = np.random.default_rng(spec.seed)
    centers = _class_centers(spec, rng)
    K, d, X = spec.n_classes, spec.input_dim, spec.per_class_count
    tc = spec.resolved_test_per_class()

    def _make(count_per_class: int, kind: str) -> Dataset:
        N = K * count_per_class
        coords = np.empty((N, d))
        y = np.empty(N, dtype=np.int64)
        hh = np.empty(N, dtype=np.int64)
        nn = np.empty(N, dtype=np.int64)
        row = 0
        for c in range(K):
            pts = centers[c] + spec.cluster_std * rng.standard_normal(
                (count_per_class, d)
            )
            coords[row : row + count_per_class] = pts
            y[row : row + count_per_class] = c
            hh[row : row + count_per_class], nn[row : row + count_per_class] = cells[c]
            row += count_per_class
        return Dataset(
            ids=np.arange(N, dtype=np.int64),
            X=coords,
            y_true=y,
            y_assigned=y.copy(),
            h=hh,
            n=nn,
            base_id=np.full(N, -1, dtype=np.int64),
            K=K,
            d=d,
            levels=spec.levels,
            classes_per_cell=spec.classes_per_cell,
            class_cells=cells,
            kind=kind,
        )

    train = _make(X, "train")
    test = _make(tc, "test")
    return train, test


def save_dataset(dataset: Dataset, directory: str | Path, prefix: str) -> None:
    """Write <prefix>.json manifest and <prefix>.csv sample table.

    Floats are written with repr (shortest round-trip representation) so a
    load reproduces the arrays bit-exactly.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = {
        "K": dataset.K,
        "d": dataset.d,
        "L": dataset.levels,
        "P": dataset.classes_per_cell,
        "kind": dataset.kind,
        "class_cells": {str(c): list(hn) for c, hn in sorted(dataset.class_cells.items())},
    }
    (directory / f"{prefix}.json").write_text(json.dumps(manifest, indent=2))
    with open(directory / f"{prefix}.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(
            ["id", "y_true", "y_assigned", "h", "n", "base_id"]
            + [f"x_{j}" for j in range(dataset.d)]
        )
        for i in range(len(dataset)):
            w.writerow(
                [
                    int(dataset.ids[i]),
                    int(dataset.y_true[i]),
                    int(dataset.y_assigned[i]),
                    int(dataset.h[i]),
                    int(dataset.n[i]),
                    int(dataset.base_id[i]),
                ]
                + [repr(float(v)) for v in dataset.X[i]]
            )


def load_dataset(directory: str | Path, prefix: str) -> Dataset:
    directory = Path(directory)
    manifest = json.loads((directory / f"{prefix}.json").read_text())
    with open(directory / f"{prefix}.csv", newline="") as f:
        rows = list(csv.reader(f))
    header, rows = rows[0], rows[1:]
    d = manifest["d"]
    N = len(rows)
    ids = np.empty(N, dtype=np.int64)
    y_true = np.empty(N, dtype=np.int64)
    y_assigned = np.empty(N, dtype=np.int64)
    h = np.empty(N, dtype=np.int64)
    n = np.empty(N, dtype=np.int64)
    base_id = np.empty(N, dtype=np.int64)
    X = np.empty((N, d))
    for i, r in enumerate(rows):
        ids[i], y_true[i], y_assigned[i], h[i], n[i], base_id[i] = map(int, r[:6])
        X[i] = [float(v) for v in r[6 : 6 + d]]
    return Dataset(
        ids=ids,
        X=X,
        y_true=y_true,
        y_assigned=y_assigned,
        h=h,
        n=n,
        base_id=base_id,
        K=manifest["K"],
        d=d,
        levels=manifest["L"],
        classes_per_cell=manifest["P"],
        class_cells={int(c): tuple(hn) for c, hn in manifest["class_cells"].items()},
        kind=manifest["kind"],
    )
