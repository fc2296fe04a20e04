"""One complete run: data, training, evaluation, artifacts."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .config import RunConfig
from .data import LabeledBatch, StandardizationStats, compute_stats, generate_synthetic, load_dataset, standardize
from .eval import metrics_from_logits, pairwise_crosstabs
from .model import M3colModel, init_model, predict_logits, save_checkpoint, train_epochs

logger = logging.getLogger(__name__)

REPORT_NAME = "report.json"
CURVES_NAME = "curves.csv"
CHECKPOINT_NAME = "checkpoint.npz"


def load_data(rc: RunConfig) -> tuple:
    if rc.synthetic is not None:
        return generate_synthetic(rc.synthetic)
    return load_dataset(rc.manifest)


def seed_streams(seed: int) -> tuple:
    init_ss, train_ss, probe_ss = np.random.SeedSequence(seed).spawn(3)
    return init_ss, np.random.default_rng(train_ss), np.random.default_rng(probe_ss)


def model_inputs(batch: LabeledBatch, stats: StandardizationStats, standardized: bool) -> LabeledBatch:
    if not standardized:
        return batch
    out, _ = standardize(batch, batch, stats)
    return out


def evaluate(model: M3colModel, batch: LabeledBatch) -> dict:
    """Fused-head metrics, unimodal-head metrics and pairwise error crosstabs.

    ``batch`` must already be in the model's input space.
    """
    fused, uni = predict_logits(model, batch)
    c = batch.num_classes
    return {
        "fused": metrics_from_logits(fused, batch.labels, c).to_dict(),
        "unimodal": {name: metrics_from_logits(u, batch.labels, c).to_dict() for name, u in zip(batch.names, uni)},
        "crosstabs": [t.to_dict() for t in pairwise_crosstabs(uni, fused, batch.labels, batch.names)],
    }


@dataclass
class RunOutcome:
    config: RunConfig
    model: M3colModel
    log: list
    stats: StandardizationStats
    train: LabeledBatch
    test: LabeledBatch
    metrics: dict
    rng: np.random.Generator

    def report(self) -> dict:
        return {
            "tool": "m3col",
            "report_version": 1,
            "config": self.config.raw,
            "seed": self.config.seed,
            "dataset": {
                "modalities": list(self.train.names),
                "widths": self.train.widths,
                "num_classes": int(self.train.num_classes),
                "n_train": len(self.train),
                "n_test": len(self.test),
            },
            "curves": self.log,
            "metrics": self.metrics,
        }


def run(rc: RunConfig, data: Optional[tuple] = None, callback=None) -> RunOutcome:
    train_raw, test_raw = data if data is not None else load_data(rc)
    stats = compute_stats(train_raw)
    train = model_inputs(train_raw, stats, rc.standardize)
    test = model_inputs(test_raw, stats, rc.standardize)
    init_seed, rng, _ = seed_streams(rc.seed)
    model = init_model(rc.dims_for(train.widths, train.num_classes), init_seed)
    result = train_epochs(model, train, rc.train, rng, callback)
    metrics = {"test": evaluate(model, test), "train": evaluate(model, train)["fused"]}
    return RunOutcome(rc, model, result.log, stats, train_raw, test_raw, metrics, rng)


def write_curves(path: Path, log: list):
    keys: list = []
    for rec in log:
        keys.extend(k for k in rec if k not in keys)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=keys or ["epoch"])
        writer.writeheader()
        writer.writerows(log)


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_artifacts(outcome: RunOutcome, out_dir) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"checkpoint": out / CHECKPOINT_NAME, "curves": out / CURVES_NAME, "report": out / REPORT_NAME}
    save_checkpoint(paths["checkpoint"], outcome.model, outcome.stats, outcome.rng,
                    extra={"standardized": outcome.config.standardize, "modalities": list(outcome.train.names),
                           "num_classes": int(outcome.train.num_classes)})
    write_curves(paths["curves"], outcome.log)
    paths["report"].write_text(dump_json(outcome.report()))
    return paths
