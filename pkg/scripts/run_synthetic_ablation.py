#!/usr/bin/env python3
"""All training variants plus the concat baseline on the default synthetic data.

    python scripts/run_synthetic_ablation.py --seeds 0,1,2,3,4 --out runs/synthetic-ablation
"""

import argparse
import json
import time
from pathlib import Path

from m3col import config as config_mod
from m3col.ablation import ABLATION_MODES, EXTRA_MODES, run_ablation
from m3col.pipeline import dump_json


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", default="0,1,2,3,4")
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--epochs", type=int, help="override the preset's epoch count")
    ap.add_argument("--out", type=Path, default=Path("runs/synthetic-ablation"))
    args = ap.parse_args()

    overrides = [f"train.epochs={args.epochs}"] if args.epochs is not None else []
    cfg = config_mod.resolve("preset:synthetic", overrides, out=str(args.out))
    seeds = [int(s) for s in args.seeds.split(",")]
    modes = [*EXTRA_MODES, *ABLATION_MODES]

    start = time.perf_counter()
    table = run_ablation(cfg, seeds, modes, jobs=args.jobs)
    elapsed = time.perf_counter() - start
    print(table.format())
    print(f"\n{len(table.rows)} runs in {elapsed:.0f}s")

    args.out.mkdir(parents=True, exist_ok=True)
    doc = {"config": cfg, "seeds": seeds, "modes": modes, "runs": table.rows,
           "summary": table.summary(), "seconds": round(elapsed, 1)}
    (args.out / "ablation.json").write_text(dump_json(doc))
    print(json.dumps({m: round(100 * s["acc"]["mean"], 2) for m, s in doc["summary"].items()}))


if __name__ == "__main__":
    main()
