"""Mixup-based multimodal contrastive training over vector-feature modalities."""

from .losses import (
    ContrastiveConfig,
    LossBreakdown,
    Mode,
    Phase,
    conventional_contrastive,
    cross_entropy,
    l_sim,
    m3co_pair,
    multi_modal_contrastive,
    multisclip_pair,
    schedule_phase,
    soft_cross_entropy,
    total_objective,
)
from .mixup import MixupPlan, make_mixtures, make_plan, mixed_onehot_targets, sample_beta
from .model import ModelDims, TrainConfig, forward, init_model, train_epochs

__version__ = "0.1.0"
