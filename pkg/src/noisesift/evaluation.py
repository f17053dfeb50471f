"""Scoring of partitions against ground truth, validity statistics, and
the retrain-on-filtered harness."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

from .data import Dataset
from .errors import ConfigurationError
from .mlp import TrainConfig, evaluate, init_model, train_with_tracing
from .partition import Partition
from .transforms import GroundTruthPartition


@dataclass
class EvalReport:
    method_name: str
    clean_size: int
    correct_label_fraction: float
    precision_n: float | None
    recall_n: float | None
    recall_h: float | None
    estimated_lnl: float
    test_accuracy_mean: float | None = None
    test_accuracy_std: float | None = None
    test_loss_mean: float | None = None

    def as_row(self) -> dict:
        return {
            "method": self.method_name,
            "clean_size": self.clean_size,
            "correct_label_fraction": self.correct_label_fraction,
            "precision_n": self.precision_n,
            "recall_n": self.recall_n,
            "recall_h": self.recall_h,
            "estimated_lnl": self.estimated_lnl,
            "test_accuracy_mean": self.test_accuracy_mean,
            "test_accuracy_std": self.test_accuracy_std,
            "test_loss_mean": self.test_loss_mean,
        }


def score_partition(
    partition: Partition, ground_truth: GroundTruthPartition, dataset: Dataset
) -> EvalReport:
    """Precision/recall of the noisy subset, recall of hard samples kept
    clean, correct-label fraction of the clean subset, and estimated
    label-noise level 1 - |clean|/|all|."""
    all_ids = set(dataset.ids.tolist())
    part_ids = partition.clean_ids | partition.noisy_ids
    if part_ids != all_ids:
        raise ConfigurationError("partition ids do not match the dataset")
    if ground_truth.all_ids() != all_ids:
        raise ConfigurationError("ground truth ids do not match the dataset")
    s_n, s_h = ground_truth.noisy_ids, ground_truth.hard_ids
    est_n, est_c = partition.noisy_ids, partition.clean_ids
    caught = len(est_n & s_n)
    precision_n = caught / len(est_n) if est_n else None
    recall_n = caught / len(s_n) if s_n else None
    recall_h = len(est_c & s_h) / len(s_h) if s_h else None
    correct = dataset.y_assigned == dataset.y_true
    clean_mask = np.isin(dataset.ids, np.fromiter(est_c, dtype=np.int64, count=len(est_c)))
    correct_frac = float(correct[clean_mask].mean()) if est_c else 0.0
    return EvalReport(
        method_name=partition.method_name,
        clean_size=len(est_c),
        correct_label_fraction=correct_frac,
        precision_n=precision_n,
        recall_n=recall_n,
        recall_h=recall_h,
        estimated_lnl=1.0 - len(est_c) / len(all_ids),
    )


def anova_f(
    values: np.ndarray, groups: np.ndarray
) -> tuple[float, int, int, float]:
    """Classic one-way ANOVA: (F, df_between, df_within, p_value).

    The p-value is the F survival function, evaluated through the
    regularized incomplete beta function.
    """
    values = np.asarray(values, dtype=float)
    groups = np.asarray(groups)
    labels = np.unique(groups)
    if len(labels) < 2:
        raise ConfigurationError("ANOVA needs at least two groups")
    if len(values) <= len(labels):
        raise ConfigurationError("ANOVA needs more values than groups")
    grand = values.mean()
    ss_between = 0.0
    ss_within = 0.0
    for g in labels:
        v = values[groups == g]
        if len(v) == 0:
            raise ConfigurationError(f"group {g!r} is empty")
        ss_between += len(v) * (v.mean() - grand) ** 2
        ss_within += ((v - v.mean()) ** 2).sum()
    df_between = len(labels) - 1
    df_within = len(values) - len(labels)
    if ss_within == 0.0:
        if ss_between == 0.0:
            raise ConfigurationError("zero variance everywhere: F undefined")
        return float("inf"), df_between, df_within, 0.0
    f_stat = (ss_between / df_between) / (ss_within / df_within)
    # sf of F(d1, d2) at x = I_{d2/(d2 + d1 x)}(d2/2, d1/2)
    x = df_within / (df_within + df_between * f_stat)
    p = float(special.betainc(df_within / 2.0, df_between / 2.0, x))
    return float(f_stat), df_between, df_within, p


def _average_ranks(xs: np.ndarray) -> np.ndarray:
    order = np.argsort(xs, kind="mergesort")
    ranks = np.empty(len(xs), dtype=float)
    i = 0
    sorted_xs = xs[order]
    while i < len(xs):
        j = i
        while j + 1 < len(xs) and sorted_xs[j + 1] == sorted_xs[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman_rho(xs: np.ndarray, ys: np.ndarray) -> float:
    """Pearson correlation of average ranks (ties averaged)."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if len(xs) != len(ys) or len(xs) < 2:
        raise ConfigurationError("need two equal-length sequences of length >= 2")
    rx, ry = _average_ranks(xs), _average_ranks(ys)
    sx, sy = rx.std(), ry.std()
    if sx == 0 or sy == 0:
        raise ConfigurationError("zero rank variance")
    return float(((rx - rx.mean()) * (ry - ry.mean())).mean() / (sx * sy))


def retrain_on_subset(
    dataset: Dataset,
    partition: Partition,
    train_cfg: TrainConfig,
    test_set: Dataset,
    seeds: tuple[int, ...] = (0, 1, 2),
    hidden_sizes: tuple[int, ...] = (32,),
    feature_width: int = 16,
) -> tuple[float, float, float]:
    """Train fresh models on the estimated clean subset, one per seed, and
    report (mean test accuracy, std, mean test loss) on the clean test set."""
    if not partition.clean_ids:
        raise ConfigurationError("estimated clean subset is empty")
    mask = np.isin(
        dataset.ids,
        np.fromiter(partition.clean_ids, dtype=np.int64, count=len(partition.clean_ids)),
    )
    subset = dataset.take(mask)
    accs, losses = [], []
    for seed in seeds:
        model = init_model(
            dataset.d, list(hidden_sizes), feature_width, dataset.K, seed=seed
        )
        cfg = TrainConfig(
            epochs=train_cfg.epochs,
            batch_size=train_cfg.batch_size,
            learning_rate=train_cfg.learning_rate,
            momentum=train_cfg.momentum,
            weight_decay=train_cfg.weight_decay,
            seed=seed,
        )
        model, _ = train_with_tracing(model, subset, cfg)
        acc, loss = evaluate(model, test_set)
        accs.append(acc)
        losses.append(loss)
    return float(np.mean(accs)), float(np.std(accs)), float(np.mean(losses))
