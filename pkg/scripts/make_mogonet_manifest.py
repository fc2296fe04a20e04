#!/usr/bin/env python3
"""Write manifest.json for a directory holding the public multi-omics release.

Expected files: 1_tr.csv 2_tr.csv 3_tr.csv labels_tr.csv and the same with
_te. Row counts are checked against the known split sizes on load.

    python scripts/make_mogonet_manifest.py data/ROSMAP ROSMAP
    python scripts/make_mogonet_manifest.py data/BRCA BRCA
"""

import argparse
import json
import sys
from pathlib import Path

from m3col.data import MOGONET_DATASETS, load_dataset, mogonet_manifest
from m3col.errors import IngestionError


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("directory", type=Path)
    ap.add_argument("dataset", choices=sorted(MOGONET_DATASETS))
    args = ap.parse_args(argv)

    manifest = mogonet_manifest(args.directory.resolve(), args.dataset)
    # store paths relative to the manifest so the directory can be moved
    for split in manifest["splits"].values():
        split["features"] = {k: Path(v).name for k, v in split["features"].items()}
        split["labels"] = Path(split["labels"]).name
    path = args.directory / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n")
    try:
        train, test = load_dataset(path)
    except IngestionError as exc:
        print(f"manifest written but the data does not load: {exc}", file=sys.stderr)
        return 2
    print(f"{path}: {len(train)} train / {len(test)} test, widths {train.widths}, {train.num_classes} classes")
    return 0


if __name__ == "__main__":
    sys.exit(main())
