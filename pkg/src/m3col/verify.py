"""Finite-difference checks of every loss on a frozen micro-batch."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .losses import (
    ContrastiveConfig,
    Phase,
    conventional_contrastive,
    cross_entropy,
    l_sim,
    m3co_pair,
    multi_modal_contrastive,
    multisclip_pair,
    soft_cross_entropy,
    total_objective,
)
from .mixup import make_plan, mixed_onehot_targets
from .model import ModelDims, init_model, run_network
from .numgrad import add, finite_diff_gradcheck, row_l2_normalize

DEFAULT_TOL = 1e-4


@dataclass
class CheckRow:
    name: str
    error: float
    tol: float

    @property
    def ok(self) -> bool:
        return self.error < self.tol


def _micro(seed: int):
    rng = np.random.default_rng(seed)
    n, e, c = 5, 4, 3
    emb = [rng.standard_normal((n, e)) for _ in range(3)]
    mixed = [rng.standard_normal((n, e)) for _ in range(3)]
    plan = make_plan(n, 3, 0.4, rng)
    labels = rng.integers(0, c, size=n)
    logits = [rng.standard_normal((n, c)) for _ in range(3)]
    return rng, emb, mixed, plan, labels, logits


def _full_model_check(seed: int, phase_epoch: int, h: float) -> float:
    """Gradient of the complete objective w.r.t. every network parameter."""
    rng = np.random.default_rng(seed + 1)
    n = 6
    xs = [rng.standard_normal((n, 5)), rng.standard_normal((n, 4))]
    labels = np.array([0, 1, 2, 0, 1, 2])
    dims = ModelDims((5, 4), hidden=6, embed=5, cls_hidden=6, num_classes=3, dropout=0.3)
    model = init_model(dims, seed)
    # nonzero biases keep every tiny-width embedding row away from zero
    for k, v in model.params.items():
        if k.endswith(".b"):
            v[:] = rng.uniform(0.1, 0.5, size=v.shape)
    names = list(model.params)
    plan = make_plan(n, 2, 0.4, rng)
    cfg = ContrastiveConfig(tau=0.5, beta=0.7)
    total_epochs = 3

    def f(ts):
        p = dict(zip(names, ts))
        # reseeded per call so the dropout masks stay frozen
        out = run_network(p, dims, xs, plan, training=True, rng=np.random.default_rng(seed + 2))
        return total_objective(out, labels, plan, cfg, phase_epoch, total_epochs).total

    return finite_diff_gradcheck(f, [model.params[k] for k in names], h)


def gradcheck_suite(tol: float = DEFAULT_TOL, seed: int = 0, h: float = 1e-5) -> list:
    rng, emb, mixed, plan, labels, logits = _micro(seed)
    tau = 0.5
    two = plan.reorder_modalities([0, 1])
    soft = mixed_onehot_targets(labels, plan, 3, 0)

    checks = {
        "conventional_contrastive": (lambda t: conventional_contrastive(t[0], t[1], tau), emb[:2]),
        "l_sim": (lambda t: l_sim(row_l2_normalize(t[0]), row_l2_normalize(t[1]), 2, tau),
                  [emb[0][:1], emb[1]]),
        "m3co_pair": (lambda t: m3co_pair(t[0], t[1], t[2], t[3], two, tau), emb[:2] + mixed[:2]),
        "multisclip_pair": (lambda t: multisclip_pair(t[0], t[1], tau), emb[:2]),
        "multi_modal_contrastive[m3co]": (
            lambda t: multi_modal_contrastive(t[:3], t[3:], plan, tau, Phase.M3CO), emb + mixed),
        "multi_modal_contrastive[multisclip]": (
            lambda t: multi_modal_contrastive(t, None, None, tau, Phase.MULTISCLIP), emb),
        "cross_entropy_unimodal": (
            lambda t: add(add(cross_entropy(t[0], labels), cross_entropy(t[1], labels)), cross_entropy(t[2], labels)),
            logits),
        "cross_entropy_fused": (lambda t: cross_entropy(t[0], labels), logits[:1]),
        "soft_cross_entropy": (lambda t: soft_cross_entropy(t[0], soft), logits[:1]),
    }
    rows = [CheckRow(name, finite_diff_gradcheck(f, params, h), tol) for name, (f, params) in checks.items()]
    rows.append(CheckRow("total_objective[m3co]", _full_model_check(seed, 0, h), tol))
    rows.append(CheckRow("total_objective[multisclip]", _full_model_check(seed, 2, h), tol))
    return rows
