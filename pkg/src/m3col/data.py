"""Dataset ingestion, feature standardization and synthetic data.

On-disk layout: each modality's features live in a comma-separated file with
one sample per row and no header. Labels are one integer per line. A JSON
manifest ties the files together::

    {
      "format": 1,
      "modalities": ["mRNA", "miRNA", "DNA"],
      "num_classes": 2,
      "splits": {
        "train": {"features": {"mRNA": "1_tr.csv", ...}, "labels": "labels_tr.csv"},
        "test":  {"features": {"mRNA": "1_te.csv", ...}, "labels": "labels_te.csv"}
      },
      "expect": {"train": 245, "test": 106}
    }

Relative paths resolve against the manifest's directory. ``expect`` is
optional; when present the loaded row counts must agree with it.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import IngestionError, LabelError, ParameterError, ShapeError

MANIFEST_FORMAT = 1
STD_EPS = 1e-8


@dataclass
class LabeledBatch:
    modalities: list
    labels: np.ndarray
    names: list = field(default_factory=list)
    num_classes: Optional[int] = None

    def __post_init__(self):
        self.modalities = [np.asarray(x, dtype=np.float64) for x in self.modalities]
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if not self.names:
            self.names = [f"m{i}" for i in range(len(self.modalities))]
        n = self.labels.shape[0]
        for name, x in zip(self.names, self.modalities):
            if x.ndim != 2 or x.shape[0] != n:
                raise ShapeError(f"modality '{name}' has shape {x.shape}, expected {n} rows")
        if self.num_classes is None:
            self.num_classes = int(self.labels.max()) + 1 if n else 0
        if n and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise LabelError(f"labels must lie in [0, {self.num_classes})")

    def __len__(self):
        return int(self.labels.shape[0])

    @property
    def num_modalities(self) -> int:
        return len(self.modalities)

    @property
    def widths(self) -> list:
        return [x.shape[1] for x in self.modalities]

    def subset(self, idx) -> "LabeledBatch":
        return LabeledBatch([x[idx] for x in self.modalities], self.labels[idx], list(self.names), self.num_classes)

    def replace(self, modalities) -> "LabeledBatch":
        return LabeledBatch(list(modalities), self.labels, list(self.names), self.num_classes)


@dataclass
class StandardizationStats:
    means: list
    stds: list

    def to_dict(self) -> dict:
        return {"means": [m.tolist() for m in self.means], "stds": [s.tolist() for s in self.stds]}

    @classmethod
    def from_dict(cls, d) -> "StandardizationStats":
        return cls([np.asarray(m, dtype=np.float64) for m in d["means"]],
                   [np.asarray(s, dtype=np.float64) for s in d["stds"]])


def compute_stats(batch: LabeledBatch) -> StandardizationStats:
    means, stds = [], []
    for x in batch.modalities:
        mu = x.mean(axis=0)
        sd = x.std(axis=0)
        means.append(mu)
        stds.append(np.where(sd < STD_EPS, 1.0, sd))
    return StandardizationStats(means, stds)


def standardize(train: LabeledBatch, apply_to: LabeledBatch,
                stats: Optional[StandardizationStats] = None) -> tuple:
    """Z-score ``apply_to`` column-wise using statistics of ``train``.

    Pass ``stats`` to reuse previously computed statistics; ``train`` is
    then ignored.
    """
    if stats is None:
        stats = compute_stats(train)
    if len(stats.means) != apply_to.num_modalities:
        raise ShapeError(f"stats cover {len(stats.means)} modalities, batch has {apply_to.num_modalities}")
    out = []
    for x, mu, sd in zip(apply_to.modalities, stats.means, stats.stds):
        if x.shape[1] != mu.shape[0]:
            raise ShapeError(f"feature width {x.shape[1]} does not match stats width {mu.shape[0]}")
        out.append((x - mu) / sd)
    return apply_to.replace(out), stats


# ------------------------------------------------------------------ files


def _read_matrix(path: Path) -> np.ndarray:
    if not path.is_file():
        raise IngestionError("file not found", path)
    rows, width = [], None
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                raise IngestionError("blank line", path, lineno)
            cells = line.split(",")
            try:
                row = [float(c) for c in cells]
            except ValueError:
                raise IngestionError(f"non-numeric cell in '{line[:40]}'", path, lineno) from None
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise IngestionError(f"expected {width} columns, found {len(row)}", path, lineno)
            rows.append(row)
    if not rows:
        raise IngestionError("file is empty", path)
    return np.array(rows, dtype=np.float64)


def _read_labels(path: Path) -> np.ndarray:
    if not path.is_file():
        raise IngestionError("file not found", path)
    labels = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            text = line.strip()
            try:
                value = float(text)
            except ValueError:
                raise IngestionError(f"label '{text}' is not an integer", path, lineno) from None
            if value != int(value) or value < 0:
                raise IngestionError(f"label '{text}' is not a nonnegative integer", path, lineno)
            labels.append(int(value))
    if not labels:
        raise IngestionError("label file is empty", path)
    return np.array(labels, dtype=np.int64)


def _write_matrix(path: Path, x: np.ndarray):
    with open(path, "w") as fh:
        for row in x:
            fh.write(",".join(format(v, ".17g") for v in row) + "\n")


def _write_labels(path: Path, y: np.ndarray):
    with open(path, "w") as fh:
        fh.writelines(f"{int(v)}\n" for v in y)


def read_manifest(path) -> dict:
    path = Path(path)
    try:
        manifest = json.loads(path.read_text())
    except FileNotFoundError:
        raise IngestionError("manifest not found", path) from None
    except json.JSONDecodeError as exc:
        raise IngestionError(f"manifest is not valid JSON ({exc.msg})", path, exc.lineno) from None
    for key in ("modalities", "splits"):
        if key not in manifest:
            raise IngestionError(f"manifest lacks '{key}'", path)
    return manifest


def _load_split(base: Path, manifest: dict, split: str, manifest_path) -> LabeledBatch:
    spec = manifest["splits"].get(split)
    if spec is None:
        raise IngestionError(f"manifest has no '{split}' split", manifest_path)
    names = list(manifest["modalities"])
    labels_path = base / spec["labels"]
    labels = _read_labels(labels_path)
    mats = []
    for name in names:
        try:
            fpath = base / spec["features"][name]
        except KeyError:
            raise IngestionError(f"split '{split}' lists no file for modality '{name}'", manifest_path) from None
        x = _read_matrix(fpath)
        if x.shape[0] != labels.shape[0]:
            raise IngestionError(
                f"{x.shape[0]} feature rows but {labels.shape[0]} labels in {labels_path.name}", fpath)
        mats.append(x)
    num_classes = manifest.get("num_classes")
    if num_classes is not None and labels.max() >= num_classes:
        bad = int(np.argmax(labels >= num_classes)) + 1
        raise IngestionError(f"label {labels[bad - 1]} outside [0, {num_classes})", labels_path, bad)
    expected = manifest.get("expect", {}).get(split)
    if expected is not None and expected != labels.shape[0]:
        raise IngestionError(f"expected {expected} samples in split '{split}', found {labels.shape[0]}",
                             manifest_path)
    return LabeledBatch(mats, labels, names, num_classes)


def load_dataset(manifest_path) -> tuple:
    """Load the (train, test) pair described by a manifest."""
    manifest_path = Path(manifest_path)
    manifest = read_manifest(manifest_path)
    base = manifest_path.parent
    train = _load_split(base, manifest, "train", manifest_path)
    test = _load_split(base, manifest, "test", manifest_path)
    if train.widths != test.widths:
        raise IngestionError(f"train widths {train.widths} differ from test widths {test.widths}", manifest_path)
    c = max(train.num_classes, test.num_classes)
    train.num_classes = test.num_classes = c
    return train, test


def write_dataset(out_dir, train: LabeledBatch, test: LabeledBatch, extra: Optional[dict] = None) -> Path:
    """Write both splits plus a manifest; returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    splits = {}
    for split, batch in (("train", train), ("test", test)):
        feats = {}
        for k, (name, x) in enumerate(zip(batch.names, batch.modalities)):
            fname = f"{k + 1}_{split}.csv"
            _write_matrix(out_dir / fname, x)
            feats[name] = fname
        _write_labels(out_dir / f"labels_{split}.csv", batch.labels)
        splits[split] = {"features": feats, "labels": f"labels_{split}.csv"}
    manifest = {
        "format": MANIFEST_FORMAT,
        "modalities": list(train.names),
        "num_classes": int(max(train.num_classes, test.num_classes)),
        "splits": splits,
        "expect": {"train": len(train), "test": len(test)},
    }
    if extra:
        manifest.update(extra)
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n")
    return path


MOGONET_DATASETS = {
    # name: (modalities, classes, train rows, test rows)
    "ROSMAP": (("mRNA", "meth", "miRNA"), 2, 245, 106),
    "BRCA": (("mRNA", "meth", "miRNA"), 5, 612, 263),
}


def mogonet_manifest(directory, dataset: str) -> dict:
    """Manifest for the public multi-omics release layout: ``{1,2,3}_{tr,te}.csv``
    plus ``labels_{tr,te}.csv`` in one directory."""
    if dataset not in MOGONET_DATASETS:
        raise ParameterError(f"unknown dataset '{dataset}', have {sorted(MOGONET_DATASETS)}")
    names, c, n_tr, n_te = MOGONET_DATASETS[dataset]
    directory = Path(directory)
    splits = {}
    for split, tag in (("train", "tr"), ("test", "te")):
        feats = {name: str(directory / f"{k + 1}_{tag}.csv") for k, name in enumerate(names)}
        splits[split] = {"features": feats, "labels": str(directory / f"labels_{tag}.csv")}
    return {"format": MANIFEST_FORMAT, "modalities": list(names), "num_classes": c,
            "splits": splits, "expect": {"train": n_tr, "test": n_te}}


# -------------------------------------------------------------- synthetic


@dataclass
class SyntheticConfig:
    """Class-clustered latent factors observed through per-modality linear maps.

    A fraction ``shared_prob`` of samples also carries a component drawn
    from a pool that is reused across classes.
    """

    num_classes: int = 4
    num_modalities: int = 2
    dims: Sequence[int] = (64, 64)
    samples_per_class: int = 200
    latent_dim: int = 16
    signal: float = 1.0
    noise: float = 1.0
    shared_prob: float = 0.3
    shared_pool: int = 4
    train_fraction: float = 0.7
    seed: int = 0

    def __post_init__(self):
        self.dims = tuple(int(d) for d in self.dims)
        if len(self.dims) == 1 and self.num_modalities > 1:
            self.dims = self.dims * self.num_modalities
        counts = (self.num_classes, self.num_modalities, self.samples_per_class, self.latent_dim, self.shared_pool)
        if min(counts) < 1 or len(self.dims) != self.num_modalities or min(self.dims) < 1:
            raise ParameterError("synthetic config needs positive counts and one width per modality")
        if self.signal < 0 or self.noise < 0:
            raise ParameterError("signal and noise must be nonnegative")
        if not 0 <= self.shared_prob <= 1:
            raise ParameterError(f"shared_prob must lie in [0, 1], got {self.shared_prob}")
        if not 0 < self.train_fraction < 1:
            raise ParameterError("train_fraction must lie in (0, 1)")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["dims"] = list(self.dims)
        return d


def stratified_split(labels, train_fraction: float, rng: np.random.Generator) -> tuple:
    labels = np.asarray(labels)
    train_idx, test_idx = [], []
    for c in np.unique(labels):
        idx = rng.permutation(np.flatnonzero(labels == c))
        k = int(round(train_fraction * idx.size))
        train_idx.append(idx[:k])
        test_idx.append(idx[k:])
    return np.sort(np.concatenate(train_idx)), np.sort(np.concatenate(test_idx))


def generate_synthetic(config: SyntheticConfig) -> tuple:
    rng = np.random.default_rng(config.seed)
    c, k = config.num_classes, config.latent_dim
    centers = config.signal * rng.standard_normal((c, k))
    pool = config.signal * rng.standard_normal((config.shared_pool, k))
    maps = [rng.standard_normal((k, d)) / np.sqrt(k) for d in config.dims]

    labels = np.repeat(np.arange(c), config.samples_per_class)
    n = labels.size
    latent = centers[labels] + config.noise * rng.standard_normal((n, k))
    carries = rng.random(n) < config.shared_prob
    picks = rng.integers(0, config.shared_pool, size=n)
    latent = latent + carries[:, None] * pool[picks]

    mods = [latent @ a + config.noise * rng.standard_normal((n, a.shape[1])) for a in maps]
    names = [f"m{i}" for i in range(config.num_modalities)]
    full = LabeledBatch(mods, labels, names, c)
    tr, te = stratified_split(labels, config.train_fraction, rng)
    return full.subset(tr), full.subset(te)
