"""Training-variant sweeps over seeds."""

from __future__ import annotations

import copy
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import config as config_mod
from .pipeline import run

# row order of the published comparison: weakest variant first, full method last
ABLATION_MODES = {
    "mixup": {"mode": "none", "mixup_targets": True},
    "no-unimodal": {"mode": "scheduled", "unimodal_supervision": False},
    "only-multisclip": {"mode": "only-multisclip"},
    "only-m3co": {"mode": "only-m3co"},
    "full": {"mode": "scheduled"},
}
EXTRA_MODES = {
    # cross-entropy heads only, no contrastive term and no mixing
    "concat": {"mode": "none"},
}
METRICS = ("acc", "f1_binary", "auc", "macro_f1", "weighted_f1")


def mode_config(cfg: dict, mode: str, seed: int) -> dict:
    settings = {**ABLATION_MODES, **EXTRA_MODES}[mode]
    out = copy.deepcopy(cfg)
    out["contrastive"].update({"mode": "scheduled", "unimodal_supervision": True, "mixup_targets": False})
    out["contrastive"].update(settings)
    out["seed"] = int(seed)
    if out["dataset"].get("synthetic") is not None:
        out["dataset"]["synthetic"] = {**out["dataset"]["synthetic"], "seed": int(seed)}
    out["name"] = f"{cfg['name']}-{mode}-s{seed}"
    return out


def run_one(args) -> dict:
    cfg, mode, seed = args
    outcome = run(config_mod.build(mode_config(cfg, mode, seed)))
    fused = outcome.metrics["test"]["fused"]
    return {"mode": mode, "seed": int(seed), **{k: fused[k] for k in METRICS}}


@dataclass
class AblationTable:
    rows: list
    modes: list

    def summary(self) -> dict:
        out = {}
        for mode in self.modes:
            recs = [r for r in self.rows if r["mode"] == mode]
            out[mode] = {}
            for k in METRICS:
                vals = [r[k] for r in recs if r[k] is not None]
                if vals:
                    out[mode][k] = {"mean": float(np.mean(vals)), "std": float(np.std(vals))}
        return out

    def format(self) -> str:
        summ = self.summary()
        cols = [k for k in METRICS if any(k in summ[m] for m in self.modes)]
        head = f"{'mode':<18}" + "".join(f"{k:>20}" for k in cols)
        lines = [head, "-" * len(head)]
        for mode in self.modes:
            cells = []
            for k in cols:
                s = summ[mode].get(k)
                cells.append(f"{100 * s['mean']:>11.2f} ± {100 * s['std']:<5.2f}" if s else f"{'-':>20}")
            lines.append(f"{mode:<18}" + "".join(cells))
        return "\n".join(lines)


def run_ablation(cfg: dict, seeds, modes=None, jobs: int = 1) -> AblationTable:
    modes = list(modes or ABLATION_MODES)
    tasks = [(cfg, mode, seed) for mode in modes for seed in seeds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(run_one, tasks))
    else:
        rows = [run_one(t) for t in tasks]
    return AblationTable(rows, modes)
