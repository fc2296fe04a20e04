"""Encoders, classifiers, optimizer and the training loop.

Each modality m has an encoder ``linear(d_m -> h) -> ReLU -> linear(h -> e)``
and a unimodal head ``linear(e -> h_c) -> ReLU -> dropout -> linear(h_c -> C)``.
The fusion head applies the same head shape to the concatenation of all
embeddings. Only the fusion head is used for prediction; the unimodal
heads exist to add supervision during training.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .data import LabeledBatch, StandardizationStats
from .errors import ContractError, NumericalError, ParameterError, ShapeError
from .losses import ContrastiveConfig, LossBreakdown, Phase, phase_for, total_objective
from .mixup import DEFAULT_ALPHA, MixupPlan, make_mixtures, make_plan, mixed_onehot_targets
from .numgrad import Tape, Tensor, add, backward, concat_columns, dropout, matmul, relu

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "m3col-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass
class ModelDims:
    input_dims: tuple
    hidden: int = 1000
    embed: int = 1000
    cls_hidden: int = 1000
    num_classes: int = 2
    dropout: float = 0.5
    # False gives purely affine encoders (used to check mixing commutes)
    encoder_activation: bool = True

    def __post_init__(self):
        self.input_dims = tuple(int(d) for d in self.input_dims)
        sizes = self.input_dims + (self.hidden, self.embed, self.cls_hidden, self.num_classes)
        if not self.input_dims or min(sizes) < 1:
            raise ParameterError(f"all model dimensions must be positive, got {self}")
        if not 0 <= self.dropout < 1:
            raise ParameterError(f"dropout must lie in [0, 1), got {self.dropout}")

    @property
    def num_modalities(self) -> int:
        return len(self.input_dims)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["input_dims"] = list(self.input_dims)
        return d


class M3colModel:
    """Parameter container. ``params`` maps names to float64 arrays."""

    def __init__(self, dims: ModelDims, params: dict):
        self.dims = dims
        self.params = params

    def bind(self, tape: Optional[Tape] = None) -> dict:
        if tape is None:
            return {k: Tensor(v) for k, v in self.params.items()}
        return {k: tape.leaf(v) for k, v in self.params.items()}

    def copy(self) -> "M3colModel":
        return M3colModel(self.dims, {k: v.copy() for k, v in self.params.items()})

    def num_parameters(self) -> int:
        return sum(v.size for v in self.params.values())


def _layer_shapes(dims: ModelDims):
    for m, d in enumerate(dims.input_dims):
        yield f"enc{m}.l1", d, dims.hidden
        yield f"enc{m}.l2", dims.hidden, dims.embed
    for m in range(dims.num_modalities):
        yield f"uni{m}.l1", dims.embed, dims.cls_hidden
        yield f"uni{m}.l2", dims.cls_hidden, dims.num_classes
    yield "fusion.l1", dims.num_modalities * dims.embed, dims.cls_hidden
    yield "fusion.l2", dims.cls_hidden, dims.num_classes


def init_model(dims: ModelDims, seed: int = 0) -> M3colModel:
    """Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), zero biases."""
    rng = np.random.default_rng(seed)
    params = {}
    for name, fan_in, fan_out in _layer_shapes(dims):
        bound = np.sqrt(1.0 / fan_in)
        params[f"{name}.w"] = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        params[f"{name}.b"] = np.zeros((1, fan_out))
    return M3colModel(dims, params)


def _linear(p: dict, name: str, x: Tensor) -> Tensor:
    return add(matmul(x, p[f"{name}.w"]), p[f"{name}.b"])


def encode(p: dict, dims: ModelDims, m: int, x: Tensor) -> Tensor:
    h = _linear(p, f"enc{m}.l1", x)
    if dims.encoder_activation:
        h = relu(h)
    return _linear(p, f"enc{m}.l2", h)


def classify(p: dict, dims: ModelDims, head: str, z: Tensor, training: bool, rng) -> Tensor:
    h = relu(_linear(p, f"{head}.l1", z))
    h = dropout(h, dims.dropout, training, rng)
    return _linear(p, f"{head}.l2", h)


@dataclass
class ForwardOutputs:
    embeddings: list
    mixed: Optional[list]
    uni_logits: list
    fused_logits: Tensor
    params: dict = field(repr=False, default_factory=dict)


def _modalities(batch) -> list:
    return batch.modalities if isinstance(batch, LabeledBatch) else list(batch)


def forward(model: M3colModel, batch, plan: Optional[MixupPlan] = None, training: bool = False,
            rng: Optional[np.random.Generator] = None, tape: Optional[Tape] = None) -> ForwardOutputs:
    """Run encoders and heads. With ``plan`` the mixed inputs go through the
    same encoder parameters as the clean ones."""
    dims = model.dims
    xs = _modalities(batch)
    if len(xs) != dims.num_modalities:
        raise ShapeError(f"model expects {dims.num_modalities} modalities, batch has {len(xs)}")
    for m, (x, d) in enumerate(zip(xs, dims.input_dims)):
        if np.shape(x)[1] != d:
            raise ShapeError(f"modality {m} has width {np.shape(x)[1]}, model expects {d}")
    return run_network(model.bind(tape), dims, xs, plan, training, rng)


def run_network(p: dict, dims: ModelDims, xs, plan=None, training=False, rng=None) -> ForwardOutputs:
    """Forward pass over already-bound parameter tensors ``p``."""
    xs = [x if isinstance(x, Tensor) else Tensor(x) for x in xs]
    emb = [encode(p, dims, m, x) for m, x in enumerate(xs)]
    mixed = None
    if plan is not None:
        mixed = [encode(p, dims, m, make_mixtures(x, plan, m)) for m, x in enumerate(xs)]
    uni = [classify(p, dims, f"uni{m}", e, training, rng) for m, e in enumerate(emb)]
    fused = classify(p, dims, "fusion", concat_columns(emb), training, rng)
    return ForwardOutputs(emb, mixed, uni, fused, p)


def predict_logits(model: M3colModel, batch) -> tuple:
    """Evaluation-mode (fused, unimodal) logits as arrays."""
    out = forward(model, batch, training=False)
    return out.fused_logits.value, [t.value for t in out.uni_logits]


# --------------------------------------------------------------- optimizer


@dataclass
class AdamState:
    lr: float
    weight_decay: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(state: AdamState, params: dict, grads: dict, lr: Optional[float] = None) -> dict:
    """In-place bias-corrected Adam update. Weight decay is added to the
    gradient before the moment updates."""
    lr = state.lr if lr is None else lr
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for name, w in params.items():
        g = grads[name]
        if g.shape != w.shape:
            raise ShapeError(f"gradient for '{name}' has shape {g.shape}, parameter has {w.shape}")
        if state.weight_decay:
            g = g + state.weight_decay * w
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(w)
            state.v[name] = np.zeros_like(w)
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        buf = np.square(g)
        buf *= 1.0 - state.beta2
        v += buf
        # w -= lr * (m / c1) / (sqrt(v / c2) + eps), reusing one scratch buffer
        denom = np.sqrt(v, out=buf)
        denom *= 1.0 / np.sqrt(c2)
        denom += state.eps
        np.divide(m, denom, out=denom)
        denom *= lr / c1
        w -= denom
    return params


def step_decay_lr(base_lr: float, epoch: int, step_size: int, gamma: float) -> float:
    if step_size < 1 or not 0 < gamma <= 1:
        raise ParameterError(f"need step_size >= 1 and 0 < gamma <= 1, got {step_size}, {gamma}")
    return base_lr * gamma ** (epoch // step_size)


# ----------------------------------------------------------------- training


@dataclass
class TrainConfig:
    epochs: int = 500
    lr: float = 5e-3
    weight_decay: float = 1e-3
    step_size: int = 250
    gamma: float = 0.1
    alpha: float = DEFAULT_ALPHA
    # None means one full-batch step per epoch
    batch_size: Optional[int] = None
    batch_gradient: Optional[int] = None
    contrastive: ContrastiveConfig = field(default_factory=ContrastiveConfig)

    def __post_init__(self):
        if isinstance(self.contrastive, dict):
            self.contrastive = ContrastiveConfig(**self.contrastive)
        if self.epochs < 0:
            raise ParameterError("epochs must be nonnegative")
        if self.batch_size is not None and self.batch_size < 1:
            raise ParameterError("batch_size must be positive")


@dataclass
class TrainResult:
    model: M3colModel
    log: list
    optimizer: AdamState


def _loss_on(model, batch: LabeledBatch, cfg: TrainConfig, epoch: int, rng, tape) -> tuple:
    cc = cfg.contrastive
    phase = phase_for(cc, epoch, cfg.epochs)
    n, m = len(batch), batch.num_modalities
    if cc.mixup_targets:
        # one partner per sample across modalities so the mixed label is well defined
        plan = make_plan(n, m, cfg.alpha, rng).shared(0)
        mixed_inputs = [make_mixtures(x, plan, k).value for k, x in enumerate(batch.modalities)]
        outputs = forward(model, mixed_inputs, None, True, rng, tape)
        targets = mixed_onehot_targets(batch.labels, plan, batch.num_classes, 0)
        bd = total_objective(outputs, batch.labels, plan, cc, epoch, cfg.epochs, soft_targets=targets)
        return bd, outputs.params
    plan = make_plan(n, m, cfg.alpha, rng) if phase is Phase.M3CO else None
    outputs = forward(model, batch, plan, True, rng, tape)
    return total_objective(outputs, batch.labels, plan, cc, epoch, cfg.epochs), outputs.params


def _check_finite(breakdown: LossBreakdown, epoch: int):
    for name, t in breakdown.terms().items():
        v = t.item()
        if not np.isfinite(v):
            raise NumericalError(epoch, name, v)


def _minibatches(n: int, cfg: TrainConfig, rng) -> list:
    if cfg.batch_size is None or cfg.batch_size >= n:
        return [np.arange(n)]
    order = rng.permutation(n)
    return [order[i:i + cfg.batch_size] for i in range(0, n, cfg.batch_size)]


def train_epochs(model: M3colModel, train: LabeledBatch, cfg: TrainConfig,
                 rng: np.random.Generator, callback=None) -> TrainResult:
    """Train in place; one log record per epoch.

    With ``batch_size`` set, gradients of consecutive micro-batches are
    averaged until ``batch_gradient`` samples have been seen, then one
    optimizer step is taken.
    """
    if train.num_modalities != model.dims.num_modalities:
        raise ShapeError("dataset and model disagree on the number of modalities")
    opt = AdamState(lr=cfg.lr, weight_decay=cfg.weight_decay)
    accum = 1
    if cfg.batch_size is not None and cfg.batch_gradient:
        accum = max(1, cfg.batch_gradient // cfg.batch_size)
    names = list(model.params)
    log = []
    for epoch in range(cfg.epochs):
        lr = step_decay_lr(cfg.lr, epoch, cfg.step_size, cfg.gamma)
        sums: dict = {}
        pending = {k: np.zeros_like(v) for k, v in model.params.items()}
        n_pending = 0
        chunks = _minibatches(len(train), cfg, rng)
        for ci, idx in enumerate(chunks):
            batch = train if idx.size == len(train) else train.subset(idx)
            tape = Tape()
            bd, bound = _loss_on(model, batch, cfg, epoch, rng, tape)
            _check_finite(bd, epoch)
            grads = backward(tape, bd.total)
            for k in names:
                pending[k] += grads[bound[k].node]
            n_pending += 1
            for key, val in bd.as_dict().items():
                if key == "phase":
                    sums[key] = val
                else:
                    sums[key] = sums.get(key, 0.0) + val / len(chunks)
            if n_pending == accum or ci == len(chunks) - 1:
                adam_step(opt, model.params, {k: g / n_pending for k, g in pending.items()}, lr)
                for g in pending.values():
                    g.fill(0.0)
                n_pending = 0
        fused, _ = predict_logits(model, train)
        record = {"epoch": epoch, "lr": lr, **sums,
                  "train_acc": float(np.mean(fused.argmax(axis=1) == train.labels))}
        log.append(record)
        if callback is not None:
            callback(record)
    return TrainResult(model, log, opt)


# --------------------------------------------------------------- checkpoints


def save_checkpoint(path, model: M3colModel, stats: Optional[StandardizationStats] = None,
                    rng: Optional[np.random.Generator] = None, extra: Optional[dict] = None) -> Path:
    """Write an ``.npz`` archive: ``meta`` holds a JSON document (format tag,
    version, dims, standardization stats, RNG state); every parameter is
    stored under ``param/<name>``."""
    path = Path(path)
    meta = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "dims": model.dims.to_dict(),
        "param_names": list(model.params),
        "stats": stats.to_dict() if stats is not None else None,
        "rng_state": rng.bit_generator.state if rng is not None else None,
        "extra": extra or {},
    }
    arrays = {f"param/{k}": v for k, v in model.params.items()}
    with open(path, "wb") as fh:
        np.savez(fh, meta=np.array(json.dumps(meta, sort_keys=True)), **arrays)
    return path


def load_checkpoint(path) -> tuple:
    """Returns ``(model, stats, meta)``."""
    with np.load(path, allow_pickle=False) as z:
        meta = json.loads(str(z["meta"]))
        if meta.get("format") != CHECKPOINT_FORMAT:
            raise ContractError(f"{path} is not a checkpoint written by this package")
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ContractError(f"unsupported checkpoint version {meta.get('version')}")
        params = {k: np.array(z[f"param/{k}"]) for k in meta["param_names"]}
    model = M3colModel(ModelDims(**meta["dims"]), params)
    stats = StandardizationStats.from_dict(meta["stats"]) if meta["stats"] else None
    return model, stats, meta
