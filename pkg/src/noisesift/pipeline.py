"""Run-directory pipeline: gen -> train -> metrics -> partition -> eval
-> report, with a checksummed manifest and seeded reproducibility."""

from __future__ import annotations

import csv
import hashlib
import json
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import transforms
from .data import Dataset, GridSpec, generate_base, load_dataset, save_dataset
from .errors import ConfigurationError, StageError
from .evaluation import EvalReport, retrain_on_subset, score_partition
from .gmm import GmmConfig
from .metrics import compute_metric_table, load_metric_table, save_metric_table
from .mlp import (
    TrainConfig,
    init_model,
    load_model,
    load_traces,
    save_model,
    save_traces,
    train_with_tracing,
)
from .partition import (
    lookup_method,
    load_partition,
    run_method,
    save_partition,
)

STAGES = ("gen", "train", "metrics", "partition", "eval", "report")

HARDNESS_TYPES = ("none", "imbalance", "diversification", "boundary")

DEFAULT_CONFIG = {
    "seed": 0,
    "grid": {},
    "hardness": {"type": "imbalance", "jitter_std": 0.1, "eps_max": 0.5},
    "noise": {"delta": 0.4},
    "train": {
        "epochs": 80,
        "batch_size": 64,
        "learning_rate": 0.01,
        "momentum": 0.9,
        "weight_decay": 5e-4,
        "hidden_sizes": [32],
        "feature_width": 16,
    },
    "oracle": {"epochs": 30},
    "methods": ["2d-GMM_acc-SCD"],
    "eval": {"retrain": False, "retrain_seeds": [0, 1, 2], "h_threshold": 4},
}


def _deep_merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _deep_merge(out[k], v)
        else:
            out[k] = v
    return out


def load_config(path: str | Path, seed_override: int | None = None) -> dict:
    raw = json.loads(Path(path).read_text())
    cfg = _deep_merge(DEFAULT_CONFIG, raw)
    if seed_override is not None:
        cfg["seed"] = seed_override
    validate_config(cfg)
    return cfg


def validate_config(cfg: dict) -> None:
    h = cfg["hardness"]
    if h["type"] not in HARDNESS_TYPES:
        raise ConfigurationError(f"unknown hardness type {h['type']!r}")
    if not 0.0 <= cfg["noise"]["delta"] <= 1.0:
        raise ConfigurationError("noise delta must be in [0, 1]")
    grid = GridSpec(**{**cfg["grid"], "seed": cfg["seed"]})
    grid.validate()
    if "eps_by_h" in h:
        transforms.EpsSchedule(tuple(h["eps_by_h"])).validate(grid.levels)
    for name in cfg["methods"]:
        lookup_method(name)


def config_digest(cfg: dict) -> str:
    return hashlib.sha256(
        json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()
    ).hexdigest()


def default_out_root() -> Path:
    return Path(os.environ.get("NOISESIFT_OUT", "runs"))


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class Run:
    """A run directory with its config and manifest."""

    directory: Path
    config: dict
    manifest: dict = field(default_factory=dict)

    @staticmethod
    def open(directory: str | Path, config: dict | None = None) -> "Run":
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        cfg_path = directory / "config.json"
        if config is not None:
            cfg_path.write_text(json.dumps(config, indent=2, sort_keys=True))
        elif cfg_path.exists():
            config = json.loads(cfg_path.read_text())
        else:
            raise StageError("init", f"no config in {directory}")
        man_path = directory / "manifest.json"
        if man_path.exists():
            manifest = json.loads(man_path.read_text())
            if manifest.get("config_digest") != config_digest(config):
                raise StageError("init", "run directory holds a different config")
        else:
            manifest = {
                "run_id": config_digest(config)[:12],
                "config_digest": config_digest(config),
                "seed": config["seed"],
                "stages": {},
                "timestamps": {},
            }
        return Run(directory=directory, config=config, manifest=manifest)

    # -- manifest bookkeeping -------------------------------------------------

    def _write_manifest(self) -> None:
        tmp = self.directory / "manifest.json.tmp"
        tmp.write_text(json.dumps(self.manifest, indent=2, sort_keys=True))
        tmp.replace(self.directory / "manifest.json")

    def stage_complete(self, stage: str) -> bool:
        return self.manifest["stages"].get(stage, {}).get("complete", False)

    def mark_complete(self, stage: str, files: list[Path]) -> None:
        self.manifest["stages"][stage] = {
            "complete": True,
            "files": {
                str(p.relative_to(self.directory)): _sha256(p) for p in files
            },
        }
        self.manifest["timestamps"][stage] = time.strftime(
            "%Y-%m-%dT%H:%M:%S", time.gmtime()
        )
        self._write_manifest()

    def require_stage(self, stage: str, needed_by: str) -> None:
        entry = self.manifest["stages"].get(stage)
        if not entry or not entry.get("complete"):
            raise StageError(needed_by, f"stage {stage!r} has not completed")
        for rel, digest in entry["files"].items():
            p = self.directory / rel
            if not p.exists():
                raise StageError(needed_by, f"artifact {rel} is missing")
            if _sha256(p) != digest:
                raise StageError(needed_by, f"artifact {rel} fails its checksum")

    # -- derived config objects ------------------------------------------------

    def grid_spec(self) -> GridSpec:
        return GridSpec(**{**self.config["grid"], "seed": self.config["seed"]})

    def train_config(self, seed: int | None = None, epochs: int | None = None) -> TrainConfig:
        t = self.config["train"]
        return TrainConfig(
            epochs=epochs if epochs is not None else t["epochs"],
            batch_size=t["batch_size"],
            learning_rate=t["learning_rate"],
            momentum=t["momentum"],
            weight_decay=t["weight_decay"],
            seed=self.config["seed"] if seed is None else seed,
        )

    def _model_for(self, dataset: Dataset, seed: int):
        t = self.config["train"]
        return init_model(
            dataset.d, list(t["hidden_sizes"]), t["feature_width"], dataset.K, seed=seed
        )

    def _partition_prefix(self, method_name: str) -> str:
        return "partition_" + method_name.replace("/", "_")


# ---------------------------------------------------------------------------
# stages


def stage_gen(run: Run) -> None:
    cfg = run.config
    seed = cfg["seed"]
    spec = run.grid_spec()
    train, test = generate_base(spec)
    files: list[Path] = []

    htype = cfg["hardness"]["type"]
    provenance = [{"transform": "generate_base", "seed": seed}]
    if htype == "imbalance":
        train = transforms.apply_imbalance(train, seed=seed + 1)
        provenance.append({"transform": "imbalance", "seed": seed + 1})
    elif htype == "diversification":
        jitter = cfg["hardness"].get("jitter_std", 0.1)
        train = transforms.apply_diversification(train, jitter_std=jitter, seed=seed + 1)
        provenance.append(
            {"transform": "diversification", "jitter_std": jitter, "seed": seed + 1}
        )
    elif htype == "boundary":
        oracle_cfg = TrainConfig(
            epochs=cfg["oracle"].get("epochs", 30),
            batch_size=cfg["train"]["batch_size"],
            learning_rate=cfg["train"]["learning_rate"],
            momentum=cfg["train"]["momentum"],
            weight_decay=cfg["train"]["weight_decay"],
            seed=seed + 7,
        )
        oracle = run._model_for(train, seed=seed + 7)
        oracle, _ = train_with_tracing(oracle, train, oracle_cfg)
        save_model(oracle, run.directory / "oracle")
        files += [run.directory / "oracle.npz", run.directory / "oracle.json"]
        if "eps_by_h" in cfg["hardness"]:
            schedule = transforms.EpsSchedule(tuple(cfg["hardness"]["eps_by_h"]))
        else:
            schedule = transforms.EpsSchedule.linear(
                spec.levels, cfg["hardness"].get("eps_max", 0.5)
            )
        train = transforms.apply_boundary_shift(train, oracle, schedule)
        provenance.append(
            {"transform": "boundary", "eps_by_h": list(schedule.eps_by_h), "seed": seed + 7}
        )

    noise = transforms.NoiseSpec(delta=cfg["noise"]["delta"], seed=seed + 2)
    train = transforms.inject_label_noise(train, noise)
    provenance.append({"transform": "noise", "delta": noise.delta, "seed": seed + 2})

    gt = transforms.ground_truth_partition(train, cfg["eval"].get("h_threshold", 4))
    save_dataset(train, run.directory, "train")
    save_dataset(test, run.directory, "test")
    (run.directory / "ground_truth.json").write_text(
        json.dumps(
            {
                "noisy_ids": sorted(gt.noisy_ids),
                "hard_ids": sorted(gt.hard_ids),
                "easy_ids": sorted(gt.easy_ids),
                "h_threshold": gt.h_threshold,
            }
        )
    )
    run.manifest["provenance"] = provenance
    files += [
        run.directory / "train.csv",
        run.directory / "train.json",
        run.directory / "test.csv",
        run.directory / "test.json",
        run.directory / "ground_truth.json",
    ]
    run.mark_complete("gen", files)


def stage_train(run: Run) -> None:
    run.require_stage("gen", "train")
    train = load_dataset(run.directory, "train")
    model = run._model_for(train, seed=run.config["seed"])
    model, traces = train_with_tracing(model, train, run.train_config())
    save_model(model, run.directory / "model")
    save_traces(traces, run.directory)
    run.mark_complete(
        "train",
        [
            run.directory / "model.npz",
            run.directory / "model.json",
            run.directory / "traces.json",
            run.directory / "traces_records.csv",
            run.directory / "traces_features_mid.csv",
            run.directory / "traces_features_end.csv",
            run.directory / "traces_train_acc.npy",
            run.directory / "traces_y_assigned.npy",
        ],
    )


def stage_metrics(run: Run) -> None:
    run.require_stage("train", "metrics")
    traces = load_traces(run.directory)
    table = compute_metric_table(traces)
    save_metric_table(table, run.directory)
    run.mark_complete(
        "metrics", [run.directory / "metrics.csv", run.directory / "metrics.json"]
    )


def stage_partition(run: Run) -> None:
    run.require_stage("metrics", "partition")
    table = load_metric_table(run.directory)
    traces = load_traces(run.directory)
    gmm_cfg = GmmConfig(seed=run.config["seed"])
    files: list[Path] = []
    for name in run.config["methods"]:
        spec = lookup_method(name)
        part = run_method(spec, table, traces, gmm_cfg)
        prefix = run._partition_prefix(name)
        save_partition(part, run.directory, prefix)
        files += [run.directory / f"{prefix}.csv", run.directory / f"{prefix}.json"]
    run.mark_complete("partition", files)


def _load_ground_truth(run: Run) -> transforms.GroundTruthPartition:
    data = json.loads((run.directory / "ground_truth.json").read_text())
    return transforms.GroundTruthPartition(
        noisy_ids=set(data["noisy_ids"]),
        hard_ids=set(data["hard_ids"]),
        easy_ids=set(data["easy_ids"]),
        h_threshold=data["h_threshold"],
    )


def stage_eval(run: Run) -> None:
    run.require_stage("partition", "eval")
    cfg = run.config
    train = load_dataset(run.directory, "train")
    test = load_dataset(run.directory, "test")
    gt = _load_ground_truth(run)
    do_retrain = cfg["eval"].get("retrain", False)
    seeds = tuple(cfg["eval"].get("retrain_seeds", [0, 1, 2]))
    hidden = tuple(cfg["train"]["hidden_sizes"])
    fw = cfg["train"]["feature_width"]

    reports: list[EvalReport] = []
    # Baseline row: the untouched dataset.
    from .partition import Partition

    baseline = Partition(
        clean_ids=set(train.ids.tolist()),
        noisy_ids=set(),
        method_name="Original dataset",
    )
    reports.append(_eval_one(run, baseline, gt, train, test, do_retrain, seeds, hidden, fw))
    for name in cfg["methods"]:
        part = load_partition(run.directory, run._partition_prefix(name))
        reports.append(_eval_one(run, part, gt, train, test, do_retrain, seeds, hidden, fw))

    path = run.directory / "eval.json"
    path.write_text(json.dumps([r.as_row() for r in reports], indent=2))
    run.mark_complete("eval", [path])


def _eval_one(run, part, gt, train, test, do_retrain, seeds, hidden, fw) -> EvalReport:
    report = score_partition(part, gt, train)
    if do_retrain:
        acc, std, loss = retrain_on_subset(
            train, part, run.train_config(), test,
            seeds=seeds, hidden_sizes=hidden, feature_width=fw,
        )
        report.test_accuracy_mean = acc
        report.test_accuracy_std = std
        report.test_loss_mean = loss
    return report


REPORT_COLUMNS = (
    "method",
    "clean_size",
    "correct_label_fraction",
    "precision_n",
    "recall_n",
    "recall_h",
    "estimated_lnl",
    "test_accuracy_mean",
    "test_accuracy_std",
    "test_loss_mean",
)

CELL_METRICS = ("loss_end", "confidence_end", "scd", "acd", "acc_over_training")


def _sig4(v) -> str:
    if v is None or v == "":
        return "NA"
    if isinstance(v, str):
        return v
    if isinstance(v, int):
        return str(v)
    return f"{v:.4g}"


def stage_report(run: Run) -> None:
    run.require_stage("eval", "report")
    rows = json.loads((run.directory / "eval.json").read_text())
    files = []

    report_csv = run.directory / "report.csv"
    with open(report_csv, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(REPORT_COLUMNS)
        for r in rows:
            w.writerow(
                ["" if r[c] is None else (r[c] if isinstance(r[c], (str, int)) else repr(float(r[c])))
                 for c in REPORT_COLUMNS]
            )
    files.append(report_csv)

    md = run.directory / "report.md"
    header = (
        "| Method | |S̃_c| | Correct Label % | Precision_n | Recall_n | Recall_h "
        "| Estimated LNL | Test Acc (mean) | Test Acc (std) | Test Loss |\n"
    )
    sep = "|" + "---|" * 10 + "\n"
    lines = [header, sep]
    for r in rows:
        lines.append(
            "| " + " | ".join(_sig4(r[c]) for c in REPORT_COLUMNS) + " |\n"
        )
    md.write_text("".join(lines))
    files.append(md)

    # Per-cell aggregates for plotting metric-vs-(h, n) behavior.
    table = load_metric_table(run.directory)
    train = load_dataset(run.directory, "train")
    id_to_row = {int(i): j for j, i in enumerate(table.ids)}
    order = np.array([id_to_row[int(i)] for i in train.ids])
    cells_csv = run.directory / "cells.csv"
    with open(cells_csv, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["h", "n", "count"] + [f"mean_{m}" for m in CELL_METRICS])
        for h in range(train.levels):
            for n in range(train.levels):
                mask = (train.h == h) & (train.n == n)
                row = [h, n, int(mask.sum())]
                for m in CELL_METRICS:
                    vals = table.values[m][order][mask]
                    row.append(repr(float(vals.mean())) if len(vals) else "")
                w.writerow(row)
    files.append(cells_csv)
    run.mark_complete("report", files)


STAGE_FUNCS = {
    "gen": stage_gen,
    "train": stage_train,
    "metrics": stage_metrics,
    "partition": stage_partition,
    "eval": stage_eval,
    "report": stage_report,
}


def run_stage(run: Run, stage: str, force: bool = False) -> bool:
    """Execute one stage; returns False if skipped as already complete."""
    if stage not in STAGE_FUNCS:
        raise StageError(stage, "unknown stage")
    if run.stage_complete(stage) and not force:
        return False
    STAGE_FUNCS[stage](run)
    return True


def run_pipeline(
    config_path: str | Path,
    out_dir: str | Path | None = None,
    seed: int | None = None,
    force: bool = False,
    stage: str | None = None,
) -> Path:
    """Run the full pipeline (or one stage) and return the run directory."""
    cfg = load_config(config_path, seed_override=seed)
    if out_dir is None:
        out_dir = default_out_root() / f"run-{config_digest(cfg)[:12]}"
    run = Run.open(out_dir, cfg)
    stages = [stage] if stage else list(STAGES)
    for s in stages:
        run_stage(run, s, force=force)
    return run.directory
