"""Mixing coefficients, partner permutations and convex mixtures."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import EmptyBatchError, LabelError, ParameterError, ShapeError
from .numgrad import Tensor, mix_rows

DEFAULT_ALPHA = 0.15


def sample_beta(alpha: float, rng: np.random.Generator) -> float:
    """One Beta(alpha, alpha) draw as ``X / (X + Y)`` with X, Y ~ Gamma(alpha)."""
    if not alpha > 0:
        raise ParameterError(f"alpha must be positive, got {alpha}")
    while True:
        x = rng.gamma(alpha)
        y = rng.gamma(alpha)
        # both variates can underflow to 0 for tiny shapes
        if x + y > 0:
            return float(x / (x + y))


@dataclass(frozen=True)
class MixupPlan:
    """Per-sample mixing weights shared by all modalities, and one partner
    permutation per modality (``perms[0]`` gives index j, ``perms[1]`` index k)."""

    lam: np.ndarray
    perms: tuple
    alpha: float = DEFAULT_ALPHA

    def __post_init__(self):
        lam = np.asarray(self.lam, dtype=np.float64)
        n = lam.shape[0]
        if lam.ndim != 1 or n == 0:
            raise EmptyBatchError("a plan needs at least one sample")
        if np.any(lam < 0) or np.any(lam > 1):
            raise ParameterError("mixing weights must lie in [0, 1]")
        perms = tuple(np.asarray(p, dtype=np.int64) for p in self.perms)
        for p in perms:
            if p.shape != (n,) or not np.array_equal(np.sort(p), np.arange(n)):
                raise ParameterError(f"partner index vector is not a permutation of range({n})")
        lam.setflags(write=False)
        for p in perms:
            p.setflags(write=False)
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "perms", perms)

    @property
    def size(self) -> int:
        return self.lam.shape[0]

    @property
    def num_modalities(self) -> int:
        return len(self.perms)

    @classmethod
    def identity(cls, n: int, num_modalities: int) -> "MixupPlan":
        """lambda = 1 everywhere with identity partners: mixing is a no-op."""
        return cls(np.ones(n), tuple(np.arange(n) for _ in range(num_modalities)))

    def reorder_modalities(self, order: Sequence[int]) -> "MixupPlan":
        return MixupPlan(self.lam, tuple(self.perms[m] for m in order), self.alpha)

    def shared(self, source: int = 0) -> "MixupPlan":
        """Copy in which every modality uses the partner permutation of ``source``."""
        return MixupPlan(self.lam, tuple(self.perms[source] for _ in self.perms), self.alpha)


def make_plan(n: int, num_modalities: int, alpha: float, rng: np.random.Generator) -> MixupPlan:
    if n < 1:
        raise EmptyBatchError("cannot build a mixing plan for an empty batch")
    if num_modalities < 1:
        raise ParameterError("need at least one modality")
    lam = np.array([sample_beta(alpha, rng) for _ in range(n)])
    # independent partners per modality; fixed points are allowed
    perms = tuple(rng.permutation(n) for _ in range(num_modalities))
    return MixupPlan(lam, perms, alpha)


def make_mixtures(features, plan: MixupPlan, modality: int) -> Tensor:
    """Convex combinations ``lam_i * x_i + (1 - lam_i) * x_perm(i)`` for one modality."""
    if not isinstance(features, Tensor):
        features = Tensor(features)
    if not 0 <= modality < plan.num_modalities:
        raise ShapeError(f"modality {modality} outside plan with {plan.num_modalities} modalities")
    if features.rows != plan.size:
        raise ShapeError(f"features have {features.rows} rows but the plan covers {plan.size}")
    return mix_rows(features, plan.lam, plan.perms[modality])


def one_hot(labels, num_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise LabelError(f"labels must lie in [0, {num_classes})")
    out = np.zeros((labels.shape[0], num_classes))
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


def mixed_onehot_targets(labels, plan: MixupPlan, num_classes: int, modality: int = 0) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (plan.size,):
        raise ShapeError(f"{labels.shape[0]} labels for a plan of size {plan.size}")
    onehot = one_hot(labels, num_classes)
    lam = plan.lam[:, None]
    return lam * onehot + (1.0 - lam) * onehot[plan.perms[modality]]
