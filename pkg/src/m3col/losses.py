"""Contrastive and supervised objectives, and the phase schedule between them.

All contrastive terms reduce to weighted sums over row-wise log-softmax
matrices of temperature-scaled cosine similarities. Writing
``logp(a, b)[r, c] = log softmax_c(a_r . b_c / tau)``, the single-anchor loss
``l_sim(a_r, b; c)`` is ``-logp(a, b)[r, c]``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Optional, Sequence

import numpy as np

from .errors import ContractError, LabelError, ParameterError, ShapeError
from .mixup import MixupPlan, one_hot
from .numgrad import (
    Tensor,
    add,
    log_softmax_rows,
    matmul,
    mul,
    row_l2_normalize,
    scale,
    softmax_rows,
    transpose,
    weighted_sum,
)

UNIT_TOL = 1e-6


class Phase(str, enum.Enum):
    M3CO = "m3co"
    MULTISCLIP = "multisclip"


class Mode(str, enum.Enum):
    SCHEDULED = "scheduled"
    ONLY_M3CO = "only-m3co"
    ONLY_MULTISCLIP = "only-multisclip"
    NONE = "none"


@dataclass
class ContrastiveConfig:
    tau: float = 0.1
    beta: float = 0.1
    schedule_fraction: float = 1.0 / 3.0
    mode: Mode = Mode.SCHEDULED
    # ablation switches
    unimodal_supervision: bool = True
    mixup_targets: bool = False

    def __post_init__(self):
        self.mode = Mode(self.mode)
        if not self.tau > 0:
            raise ParameterError(f"temperature must be positive, got {self.tau}")
        if self.beta < 0:
            raise ParameterError(f"beta must be nonnegative, got {self.beta}")
        if not 0 < self.schedule_fraction <= 1:
            raise ParameterError(f"schedule fraction must lie in (0, 1], got {self.schedule_fraction}")


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _similarity_logprobs(anchors: Tensor, candidates: Tensor, tau: float) -> Tensor:
    return log_softmax_rows(scale(matmul(anchors, transpose(candidates)), 1.0 / tau))


def _check_same_shape(*tensors: Tensor):
    shape = tensors[0].shape
    for t in tensors[1:]:
        if t.shape != shape:
            raise ShapeError(f"embedding shapes differ: {shape} vs {t.shape}")
    if shape[0] < 1:
        raise ShapeError("empty embedding batch")


def l_sim(anchor, candidates, m: int, tau: float) -> Tensor:
    """Cross-entropy of picking candidate ``m`` for one unit-norm anchor.

    Inputs must already be unit rows; anything else is rejected rather than
    silently normalized.
    """
    anchor, candidates = _as_tensor(anchor), _as_tensor(candidates)
    if anchor.rows != 1:
        raise ShapeError(f"anchor must be a single row, got {anchor.shape}")
    if anchor.cols != candidates.cols:
        raise ShapeError(f"anchor width {anchor.cols} differs from candidate width {candidates.cols}")
    if not 0 <= m < candidates.rows:
        raise IndexError(f"target index {m} outside [0, {candidates.rows})")
    for name, t in (("anchor", anchor), ("candidates", candidates)):
        norms = np.linalg.norm(t.value, axis=1)
        if np.any(np.abs(norms - 1.0) > UNIT_TOL):
            raise ContractError(f"{name} rows must be L2-normalized")
    logp = _similarity_logprobs(anchor, candidates, tau)
    w = np.zeros(logp.shape)
    w[0, m] = -1.0
    return weighted_sum(logp, w)


def conventional_contrastive(p1, p2, tau: float) -> Tensor:
    """Mean InfoNCE over rows of ``p1`` with positives on the diagonal."""
    p1, p2 = _as_tensor(p1), _as_tensor(p2)
    _check_same_shape(p1, p2)
    n = p1.rows
    logp = _similarity_logprobs(row_l2_normalize(p1), row_l2_normalize(p2), tau)
    return weighted_sum(logp, -np.eye(n) / n)


def _m3co_direction(mixed: Tensor, other: Tensor, lam: np.ndarray, perm: np.ndarray, tau: float) -> Tensor:
    """One modality's half of the mixup loss; inputs already normalized.

    Forward part: mixed anchor i targets other[i] (weight lam_i) and
    other[perm_i] (weight 1 - lam_i). Reverse part: anchor other[i] targets
    mixed[i] with weight lam_i, and anchor other[perm_i] targets mixed[i]
    with weight 1 - lam_i.
    """
    n = mixed.rows
    idx = np.arange(n)
    w_fwd = np.zeros((n, n))
    np.add.at(w_fwd, (idx, idx), lam)
    np.add.at(w_fwd, (idx, perm), 1.0 - lam)
    w_rev = np.zeros((n, n))
    np.add.at(w_rev, (idx, idx), lam)
    np.add.at(w_rev, (perm, idx), 1.0 - lam)
    fwd = weighted_sum(_similarity_logprobs(mixed, other, tau), -w_fwd / n)
    rev = weighted_sum(_similarity_logprobs(other, mixed, tau), -w_rev / n)
    return add(fwd, rev)


def m3co_pair(p1, p2, p1_mixed, p2_mixed, plan: MixupPlan, tau: float, modalities=(0, 1)) -> Tensor:
    """Bidirectional mixup contrastive loss for one modality pair.

    ``modalities`` selects which of the plan's partner permutations belong
    to ``p1`` and ``p2``.
    """
    p1, p2, p1_mixed, p2_mixed = (_as_tensor(t) for t in (p1, p2, p1_mixed, p2_mixed))
    _check_same_shape(p1, p2, p1_mixed, p2_mixed)
    if plan.size != p1.rows:
        raise ShapeError(f"plan covers {plan.size} samples, embeddings have {p1.rows}")
    a, b = modalities
    q1, q2 = row_l2_normalize(p1), row_l2_normalize(p2)
    q1m, q2m = row_l2_normalize(p1_mixed), row_l2_normalize(p2_mixed)
    first = _m3co_direction(q1m, q2, plan.lam, plan.perms[a], tau)
    second = _m3co_direction(q2m, q1, plan.lam, plan.perms[b], tau)
    return scale(add(first, second), 0.5)


def multisclip_weights(p, tau: float) -> np.ndarray:
    """Soft targets: row-softmax of within-modality similarities."""
    q = row_l2_normalize(_as_tensor(p))
    return softmax_rows(scale(matmul(q, transpose(q)), 1.0 / tau)).value


def _multisclip_direction(q_self: Tensor, logp_other_self: Tensor, logp_self_other: Tensor, tau: float) -> Tensor:
    # sum_{i,l} w[i,l] * (l_sim(other_i, self; l) + l_sim(self_l, other; i))
    n = q_self.rows
    w = softmax_rows(scale(matmul(q_self, transpose(q_self)), 1.0 / tau))
    terms = add(logp_other_self, transpose(logp_self_other))
    return weighted_sum(mul(w, terms), -np.ones((n, n)) / n)


def multisclip_pair(p1, p2, tau: float) -> Tensor:
    """Bidirectional soft-target contrastive loss for one modality pair."""
    p1, p2 = _as_tensor(p1), _as_tensor(p2)
    _check_same_shape(p1, p2)
    q1, q2 = row_l2_normalize(p1), row_l2_normalize(p2)
    logp21 = _similarity_logprobs(q2, q1, tau)
    logp12 = _similarity_logprobs(q1, q2, tau)
    first = _multisclip_direction(q1, logp21, logp12, tau)
    second = _multisclip_direction(q2, logp12, logp21, tau)
    return scale(add(first, second), 0.5)


def multi_modal_contrastive(
    embeddings: Sequence,
    mixed: Optional[Sequence],
    plan: Optional[MixupPlan],
    tau: float,
    phase: Phase,
) -> Tensor:
    """Sum of the pairwise loss over all unordered modality pairs."""
    phase = Phase(phase)
    m = len(embeddings)
    if m < 2:
        raise ContractError(f"contrastive alignment needs at least two modalities, got {m}")
    if phase is Phase.M3CO:
        if mixed is None or plan is None:
            raise ContractError("the mixup phase needs mixed embeddings and a plan")
        if len(mixed) != m or plan.num_modalities != m:
            raise ShapeError(f"{m} modalities but {len(mixed)} mixed sets and a plan for {plan.num_modalities}")
    total = None
    for a, b in combinations(range(m), 2):
        if phase is Phase.M3CO:
            term = m3co_pair(embeddings[a], embeddings[b], mixed[a], mixed[b], plan, tau, modalities=(a, b))
        else:
            term = multisclip_pair(embeddings[a], embeddings[b], tau)
        total = term if total is None else add(total, term)
    return total


def cross_entropy(logits, labels) -> Tensor:
    logits = _as_tensor(logits)
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (logits.rows,):
        raise ShapeError(f"{labels.shape} labels for {logits.rows} rows of logits")
    if labels.size and (labels.min() < 0 or labels.max() >= logits.cols):
        raise LabelError(f"labels must lie in [0, {logits.cols})")
    targets = one_hot(labels, logits.cols)
    return weighted_sum(log_softmax_rows(logits), -targets / logits.rows)


def soft_cross_entropy(logits, targets) -> Tensor:
    logits = _as_tensor(logits)
    targets = np.asarray(targets, dtype=np.float64)
    if targets.shape != logits.shape:
        raise ShapeError(f"targets {targets.shape} do not match logits {logits.shape}")
    if np.any(targets < 0) or np.any(np.abs(targets.sum(axis=1) - 1.0) > 1e-6):
        raise ContractError("every target row must be a probability distribution")
    return weighted_sum(log_softmax_rows(logits), -targets / logits.rows)


def schedule_phase(epoch: int, total_epochs: int, fraction: float) -> Phase:
    # rounding guards against 0.7 * 10 -> 7.000000000000001
    cutoff = math.ceil(round(fraction * total_epochs, 9))
    return Phase.M3CO if epoch < cutoff else Phase.MULTISCLIP


def phase_for(config: ContrastiveConfig, epoch: int, total_epochs: int) -> Optional[Phase]:
    """Phase selected by the config's mode; ``None`` when the contrastive term is off."""
    if config.mode is Mode.NONE or config.mixup_targets:
        return None
    if config.mode is Mode.ONLY_M3CO:
        return Phase.M3CO
    if config.mode is Mode.ONLY_MULTISCLIP:
        return Phase.MULTISCLIP
    return schedule_phase(epoch, total_epochs, config.schedule_fraction)


@dataclass
class LossBreakdown:
    total: Tensor
    contrastive: Optional[Tensor]
    ce_uni: list = field(default_factory=list)
    ce_multi: Optional[Tensor] = None
    phase: Optional[Phase] = None
    beta: float = 0.0

    def as_dict(self) -> dict:
        out = {
            "phase": self.phase.value if self.phase is not None else "none",
            "total": self.total.item(),
            "contrastive": self.contrastive.item() if self.contrastive is not None else 0.0,
            "ce_multi": self.ce_multi.item(),
        }
        for m, t in enumerate(self.ce_uni):
            out[f"ce_uni_{m}"] = t.item()
        return out

    def terms(self) -> dict:
        """Every named scalar term, for finiteness checks."""
        out = {"total": self.total, "ce_multi": self.ce_multi}
        if self.contrastive is not None:
            out["contrastive"] = self.contrastive
        for m, t in enumerate(self.ce_uni):
            out[f"ce_uni_{m}"] = t
        return out


def total_objective(outputs, labels, plan, config: ContrastiveConfig, epoch: int, total_epochs: int,
                    soft_targets=None) -> LossBreakdown:
    """Weighted contrastive term plus unimodal and fused cross-entropies.

    ``outputs`` is anything with ``embeddings``, ``mixed``, ``uni_logits`` and
    ``fused_logits`` attributes. With ``config.mixup_targets`` the three CE
    terms use ``soft_targets`` (mixed one-hot rows) and no contrastive term
    is added.
    """
    phase = phase_for(config, epoch, total_epochs)
    contrastive = None
    if phase is not None:
        contrastive = multi_modal_contrastive(outputs.embeddings, outputs.mixed, plan, config.tau, phase)

    if config.mixup_targets:
        if soft_targets is None:
            raise ContractError("mixup-target training needs soft targets")
        ce = lambda logits: soft_cross_entropy(logits, soft_targets)  # noqa: E731
    else:
        ce = lambda logits: cross_entropy(logits, labels)  # noqa: E731

    ce_uni = [ce(lg) for lg in outputs.uni_logits] if config.unimodal_supervision else []
    ce_multi = ce(outputs.fused_logits)

    total = ce_multi
    for t in ce_uni:
        total = add(total, t)
    if contrastive is not None:
        total = add(total, scale(contrastive, config.beta))
    return LossBreakdown(total, contrastive, ce_uni, ce_multi, phase, config.beta)
