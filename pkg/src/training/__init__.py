"""Losses, checkpoints and the multi-stage training pipeline."""
from src.training.checkpoint import Checkpoint, Provenance, StageRecord, load_checkpoint, save_checkpoint
from src.training.config import TrainConfig
from src.training.evaluation import EvalReport, evaluate
from src.training.losses import (
    LossWeights,
    ProxyFeatureExtractor,
    enhance_loss,
    kd_loss,
    l1_loss,
    perceptual_proxy_loss,
    total_loss_dgf,
)
from src.training.trainer import (
    dgf_finetune,
    kd_finetune,
    run_pipeline,
    run_training,
    selfsup_pretrain,
    train_supervised,
)

__all__ = [
    "Checkpoint",
    "EvalReport",
    "LossWeights",
    "Provenance",
    "ProxyFeatureExtractor",
    "StageRecord",
    "TrainConfig",
    "dgf_finetune",
    "enhance_loss",
    "evaluate",
    "kd_finetune",
    "kd_loss",
    "l1_loss",
    "load_checkpoint",
    "perceptual_proxy_loss",
    "run_pipeline",
    "run_training",
    "save_checkpoint",
    "selfsup_pretrain",
    "total_loss_dgf",
    "train_supervised",
]
