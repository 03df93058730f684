"""Multi-stage training: self-supervised init, supervised, distillation and DGF fine-tuning.

Each stage runs Adam over fixed-size batches. A batch's gradient is the mean
of per-sample gradients, accumulated one tape at a time to bound memory.
Any non-finite loss or gradient aborts the stage after writing the last good
weights next to the requested output.
"""
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

from src.data.dataset import DatasetIndex, PairedSample, PrefetchLoader, batches, epoch_order, scan_dataset
from src.errors import NonFiniteError, TrainingDiverged
from src.models.config import CpgaConfig
from src.models.cpga import CpgaNet, EnhancedOutput
from src.models.efficiency import param_count
from src.models.layers import freeze, load_weights, state_dict
from src.tensor.core import Tape, Tensor
from src.tensor.optim import AdamState, adam_step
from src.training.checkpoint import Checkpoint, Provenance, StageRecord, load_checkpoint, save_checkpoint
from src.training.config import TrainConfig
from src.training.evaluation import validation_psnr
from src.training.losses import ProxyFeatureExtractor, enhance_loss, total_loss_dgf

logger = logging.getLogger(__name__)

LossFn = Callable[[CpgaNet, PairedSample], Tensor]


@dataclass
class EpochLog:
    epoch: int
    mean_loss: float
    val_psnr: Optional[float] = None


@dataclass
class StageResult:
    checkpoint: Checkpoint
    path: Path
    history: list[EpochLog] = field(default_factory=list)
    steps: int = 0

    @property
    def epoch_losses(self) -> list[float]:
        return [e.mean_loss for e in self.history]


# ── Core loop ───────────────────────────────────────────────────────


def train_step(net: CpgaNet, batch: list[PairedSample], loss_fn: LossFn, state: AdamState, lr: float) -> float:
    """One Adam step on the mean loss of ``batch``; returns that mean."""
    params = {n: p for n, p in net.parameters().items() if p.requires_grad}
    for p in params.values():
        p.zero_grad()
    scale = 1.0 / len(batch)
    total = 0.0
    for sample in batch:
        with Tape() as tape:
            loss = loss_fn(net, sample)
            scaled = loss * scale
        tape.backward(scaled)
        value = loss.item()
        if not math.isfinite(value):
            raise NonFiniteError("loss", f"sample '{sample.id}'")
        total += value
    adam_step(params, {n: p.grad for n, p in params.items()}, state, lr)
    return total * scale


def _diverged_path(output: Path) -> Path:
    return output.with_name(f"{output.stem}.last_good{output.suffix}")


def run_stage(
    net: CpgaNet,
    index: DatasetIndex,
    cfg: TrainConfig,
    loss_fn: LossFn,
    provenance: Provenance,
    val_index: Optional[DatasetIndex] = None,
) -> StageResult:
    """Train ``net`` in place for one stage and write the stage checkpoint to ``cfg.output``.

    With a validation set the weights with the best mean PSNR are kept;
    otherwise the final weights are.

    Args:
        net: Network to train; its parameters are updated in place.
        index: Training pairs.
        cfg: Stage settings (epochs, lr, batch, crop, seed, output path).
        loss_fn: Per-sample loss built from the network and one pair.
        provenance: History the new stage record is appended to.
        val_index: Optional held-out pairs for best-PSNR selection.

    Returns:
        The written checkpoint, its path, per-epoch history and the step count.

    Raises:
        TrainingDiverged: a loss or gradient went non-finite; the last good
            weights were written to ``<stem>.last_good<suffix>``.
    """
    if cfg.output is None:
        raise ValueError(f"stage '{cfg.stage}' needs an output path")
    if len(index) == 0:
        raise ValueError(f"stage '{cfg.stage}': dataset {index.root} is empty")

    state = AdamState()
    history: list[EpochLog] = []
    best_psnr, best_weights = -math.inf, None
    last_good = state_dict(net)
    steps = 0
    logger.info(
        f"Stage {cfg.stage}: {len(index)} pairs, {cfg.epochs} epochs, lr {cfg.lr:g}, "
        f"batch {cfg.batch}, crop {cfg.crop}, {param_count(net)} params"
    )

    for epoch in range(cfg.epochs):
        order = epoch_order(len(index), cfg.seed, epoch)
        loader = PrefetchLoader(index, order, crop=cfg.crop, seed=cfg.seed, epoch=epoch, depth=cfg.prefetch)
        losses = []
        for batch in batches(iter(loader), cfg.batch):
            try:
                losses.append(train_step(net, batch, loss_fn, state, cfg.lr))
            except NonFiniteError as e:
                load_weights(net, last_good)
                path = save_checkpoint(
                    Checkpoint(net.config, last_good, provenance),
                    _diverged_path(cfg.output),
                )
                logger.error(f"Stage {cfg.stage} diverged at step {steps + 1}: {e}")
                raise TrainingDiverged(f"stage '{cfg.stage}' diverged at step {steps + 1}: {e}", path) from e
            last_good = state_dict(net)
            steps += 1
            logger.debug(f"epoch {epoch + 1} step {steps}: loss {losses[-1]:.6f}")
            if cfg.max_steps is not None and steps >= cfg.max_steps:
                break

        if not losses:
            raise ValueError(f"stage '{cfg.stage}': no readable samples in epoch {epoch + 1}")
        log = EpochLog(epoch + 1, sum(losses) / len(losses))
        if val_index is not None:
            log.val_psnr = validation_psnr(net, val_index, cfg.threads)
            if log.val_psnr > best_psnr:
                best_psnr, best_weights = log.val_psnr, state_dict(net)
        history.append(log)
        val = f", val PSNR {log.val_psnr:.2f} dB" if log.val_psnr is not None else ""
        logger.info(f"Stage {cfg.stage} epoch {log.epoch}/{cfg.epochs}: loss {log.mean_loss:.5f}{val}")
        if cfg.max_steps is not None and steps >= cfg.max_steps:
            logger.info(f"Reached max_steps={cfg.max_steps}")
            break

    if best_weights is not None:
        load_weights(net, best_weights)
    record = StageRecord(
        stage=cfg.stage,
        epochs=len(history),
        steps=steps,
        lr=cfg.lr,
        final_loss=history[-1].mean_loss,
        best_psnr=best_psnr if best_weights is not None else None,
    )
    ckpt = Checkpoint.from_net(net, provenance.with_stage(record))
    path = save_checkpoint(ckpt, cfg.output)
    logger.info(f"Stage {cfg.stage} finished after {steps} steps; checkpoint {path}")
    return StageResult(ckpt, path, history, steps)


# ── Stages ──────────────────────────────────────────────────────────


def _initial_net(cfg: TrainConfig, init: Optional[Checkpoint]) -> tuple[CpgaNet, Provenance]:
    if init is not None:
        return init.build(), init.provenance
    if cfg.resume is not None:
        ckpt = load_checkpoint(cfg.resume)
        return ckpt.build(), ckpt.provenance
    return CpgaNet(cfg.model, seed=cfg.seed), Provenance(seed=cfg.seed)


def _indices(cfg: TrainConfig) -> tuple[DatasetIndex, Optional[DatasetIndex]]:
    if cfg.data is None:
        raise ValueError(f"stage '{cfg.stage}' needs a data root")
    index = scan_dataset(cfg.data, split="train")
    val_index = scan_dataset(cfg.val_data, split="test") if cfg.val_data is not None else None
    return index, val_index


def selfsup_pretrain(cfg: TrainConfig, init: Optional[Checkpoint] = None) -> StageResult:
    """Learn a near-identity mapping by using each low-light input as its own target."""
    net, provenance = _initial_net(cfg, init)
    index, val_index = _indices(cfg)
    weights, extractor = cfg.loss_weights, ProxyFeatureExtractor()

    def loss_fn(model: CpgaNet, sample: PairedSample):
        return enhance_loss(model.enhance(sample.low), sample.low, weights, extractor)

    return run_stage(net, index, cfg, loss_fn, provenance, val_index)


def train_supervised(cfg: TrainConfig, init: Optional[Checkpoint] = None) -> StageResult:
    net, provenance = _initial_net(cfg, init)
    index, val_index = _indices(cfg)
    weights, extractor = cfg.loss_weights, ProxyFeatureExtractor()

    def loss_fn(model: CpgaNet, sample: PairedSample):
        return enhance_loss(model.enhance(sample.low), sample.gt, weights, extractor)

    return run_stage(net, index, cfg, loss_fn, provenance, val_index)


def kd_finetune(cfg: TrainConfig, teacher: Checkpoint, student: Optional[Checkpoint] = None) -> StageResult:
    """Fine-tune the student on enhancement loss plus distillation from a frozen teacher.

    The student runs at full resolution here; the guided filter joins in the
    DGF stage.

    Args:
        cfg: Stage settings; ``cfg.model`` sizes a fresh student when none is given.
        teacher: Trained teacher, frozen for the whole stage.
        student: Trained student to start from. Its provenance is extended.

    Returns:
        The distilled student.
    """
    teacher_net = freeze(teacher.build())
    net, provenance = _initial_net(cfg, student)
    if param_count(teacher_net) <= param_count(net):
        logger.warning(
            f"Teacher ({param_count(teacher_net)} params) is not larger than the student "
            f"({param_count(net)} params); distilling anyway"
        )
    index, val_index = _indices(cfg)
    weights, extractor = cfg.loss_weights, ProxyFeatureExtractor()

    def loss_fn(model: CpgaNet, sample: PairedSample):
        target: EnhancedOutput = teacher_net.forward(sample.low)
        return total_loss_dgf(model.forward(sample.low), sample.gt, target, weights, extractor)

    return run_stage(net, index, cfg, loss_fn, provenance, val_index)


def dgf_finetune(cfg: TrainConfig, init: Optional[Checkpoint] = None) -> StageResult:
    """Fine-tune end to end through the guided filter (gradients reach the low-resolution net)."""
    net, provenance = _initial_net(cfg, init)
    if not net.config.use_dgf:
        logger.info("Switching the network to the guided-filter (DGF) path")
        net = net.as_dgf()
    index, val_index = _indices(cfg)
    weights, extractor = cfg.loss_weights, ProxyFeatureExtractor()

    def loss_fn(model: CpgaNet, sample: PairedSample):
        return enhance_loss(model.forward_dgf(sample.low), sample.gt, weights, extractor)

    return run_stage(net, index, cfg, loss_fn, provenance, val_index)


STAGES = {
    "selfsup": selfsup_pretrain,
    "supervised": train_supervised,
    "dgf": dgf_finetune,
}


def run_training(cfg: TrainConfig) -> StageResult:
    """Dispatch one stage from a TrainConfig (the ``train`` command).

    Args:
        cfg: Stage settings; ``output`` must be set and ``kd`` needs ``teacher``.

    Returns:
        The finished stage.
    """
    if cfg.output is None:
        raise ValueError(f"stage '{cfg.stage}' needs an output path")
    if cfg.stage == "kd":
        if cfg.teacher is None:
            raise ValueError("stage 'kd' needs a teacher checkpoint")
        return kd_finetune(cfg, load_checkpoint(cfg.teacher))
    return STAGES[cfg.stage](cfg)


def run_pipeline(cfg: TrainConfig, student_model: Optional[CpgaConfig] = None) -> dict[str, StageResult]:
    """Run the full regime and write every stage checkpoint beside ``cfg.output``.

    The teacher (``cfg.model``) and the student are each trained from scratch
    with selfsup then supervised. The student is then distilled from the
    teacher and finally fine-tuned through the guided filter.

    Args:
        cfg: Shared settings; ``stage``, ``epochs``, ``lr`` and ``resume`` are
            replaced per stage.
        student_model: Student architecture, by default the 8-channel DGF config.

    Returns:
        Results keyed ``selfsup``, ``supervised`` (teacher), ``student.selfsup``,
        ``student.supervised``, ``kd`` and ``dgf``. Each is written to
        ``<stem>.<key>.ckpt``.
    """
    if cfg.output is None:
        raise ValueError("pipeline needs an output path")
    student_model = (student_model or CpgaConfig.dgf()).model_copy(update={"use_dgf": False})
    out_dir, stem = cfg.output.parent, cfg.output.stem
    results: dict[str, StageResult] = {}

    def staged(stage: str, model: CpgaConfig, key: Optional[str] = None) -> TrainConfig:
        values = cfg.model_dump()
        values.update(
            stage=stage, epochs=None, lr=None, model=model.model_dump(), resume=None,
            output=out_dir / f"{stem}.{key or stage}.ckpt",
        )
        # re-validate so the stage's own epoch/lr defaults apply
        return TrainConfig.model_validate(values)

    results["selfsup"] = selfsup_pretrain(staged("selfsup", cfg.model))
    results["supervised"] = train_supervised(staged("supervised", cfg.model), results["selfsup"].checkpoint)

    results["student.selfsup"] = selfsup_pretrain(staged("selfsup", student_model, "student.selfsup"))
    results["student.supervised"] = train_supervised(
        staged("supervised", student_model, "student.supervised"), results["student.selfsup"].checkpoint
    )
    results["kd"] = kd_finetune(
        staged("kd", student_model), results["supervised"].checkpoint, results["student.supervised"].checkpoint
    )
    results["dgf"] = dgf_finetune(staged("dgf", results["kd"].checkpoint.config), results["kd"].checkpoint)
    for key, result in results.items():
        logger.info(f"Pipeline {key}: {result.path}")
    return results
