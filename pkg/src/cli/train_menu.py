"""CLI commands for training stages and evaluation."""
import logging
import math

import click
from rich.console import Console
from rich.table import Table

from src.config import ABLATION_PRESETS, STAGE_ALIASES, STAGE_DEFAULTS

logger = logging.getLogger(__name__)

console = Console()

STAGE_CHOICES = sorted([*STAGE_DEFAULTS, *STAGE_ALIASES])


def _parse_crop(value):
    if value is None:
        return None
    if value.lower() == "none":
        return "none"
    try:
        return int(value)
    except ValueError:
        raise click.BadParameter(f"expected an integer or 'none', got {value!r}", param_hint="--crop")


def _print_history(result) -> None:
    table = Table(show_header=True, header_style="bold magenta")
    table.add_column("Epoch", justify="right")
    table.add_column("Loss", justify="right")
    table.add_column("Val PSNR", justify="right")
    for log in result.history:
        val = "-" if log.val_psnr is None else ("inf" if math.isinf(log.val_psnr) else f"{log.val_psnr:.2f}")
        table.add_row(str(log.epoch), f"{log.mean_loss:.5f}", val)
    console.print(table)


@click.command()
@click.option('--stage', type=click.Choice(STAGE_CHOICES), help='Training stage')
@click.option('--config', 'config_path', type=click.Path(exists=True, dir_okay=False),
              help='JSON file mirroring TrainConfig; flags override it')
@click.option('--data', type=click.Path(file_okay=False), help='Training root with low/ and high/')
@click.option('--val-data', type=click.Path(file_okay=False), help='Held-out root for best-PSNR selection')
@click.option('--resume', type=click.Path(dir_okay=False), help='Checkpoint to start from')
@click.option('--teacher', type=click.Path(dir_okay=False), help='Frozen teacher checkpoint (kd stage)')
@click.option('--output', type=click.Path(dir_okay=False), help='Checkpoint to write (stage files go beside it with --pipeline)')
@click.option('--epochs', type=click.IntRange(min=1), help='Override the stage default')
@click.option('--lr', type=float, help='Override the stage default')
@click.option('--batch', type=click.IntRange(min=1))
@click.option('--seed', type=int)
@click.option('--max-steps', type=click.IntRange(min=1), help='Stop after this many optimizer steps')
@click.option('--crop', help="Training crop size, or 'none' for full frames")
@click.option('--no-perceptual', is_flag=True, help='Train with L1 only')
@click.option('--preset', type=click.Choice(sorted(ABLATION_PRESETS)), help='Architecture ablation preset')
@click.option('--dgf-student', is_flag=True, help='Use the 8-channel DGF student architecture')
@click.option('--pipeline', is_flag=True, help='Run selfsup, supervised, kd and dgf in sequence')
@click.pass_context
def train(ctx, stage, config_path, data, val_data, resume, teacher, output, epochs, lr, batch, seed,
          max_steps, crop, no_perceptual, preset, dgf_student, pipeline):
    """Run one training stage (or the whole pipeline)."""
    from src.models.config import CpgaConfig
    from src.training.config import TrainConfig
    from src.training.trainer import run_pipeline, run_training

    crop = _parse_crop(crop)
    model = None
    if preset:
        model = CpgaConfig.from_preset(preset)
    elif dgf_student:
        model = CpgaConfig.dgf()

    overrides = dict(
        stage=stage, data=data, val_data=val_data, resume=resume, teacher=teacher, output=output,
        epochs=epochs, lr=lr, batch=batch, seed=seed, max_steps=max_steps, model=model,
        threads=ctx.obj.get("threads") if ctx.obj else None,
        perceptual=False if no_perceptual else None,
    )
    cfg = TrainConfig.load(config_path, **overrides) if config_path else TrainConfig.from_values(**overrides)
    if crop is not None:
        cfg = TrainConfig.model_validate({**cfg.model_dump(), "crop": None if crop == "none" else crop})
    if cfg.output is None:
        raise click.UsageError("train needs --output (or 'output' in the --config file)")

    if pipeline:
        results = run_pipeline(cfg)
        for name, result in results.items():
            console.print(f"[green]✓[/green] {name:<18} -> [cyan]{result.path}[/cyan]")
        return

    console.print(
        f"[bold cyan]Stage {cfg.stage}[/bold cyan]: {cfg.epochs} epochs, lr {cfg.lr:g}, "
        f"batch {cfg.batch}, crop {cfg.crop or 'full'}"
    )
    result = run_training(cfg)
    _print_history(result)
    console.print(f"[green]✓[/green] Checkpoint written to [cyan]{result.path}[/cyan] after {result.steps} steps")


@click.command()
@click.option('--checkpoint', type=click.Path(dir_okay=False), help='Checkpoint to evaluate')
@click.option('--data', required=True, type=click.Path(file_okay=False), help='Root with low/ and high/')
@click.option('--report', 'report_path', type=click.Path(dir_okay=False), help='JSON report (a .txt table is written beside it)')
@click.option('--baseline', type=click.Choice(['low', 'gt']), help='Score raw inputs or ground truth instead of a model')
@click.option('--dgf', is_flag=True, help='Evaluate through the fast guided filter')
@click.pass_context
def evaluate_command(ctx, checkpoint, data, report_path, baseline, dgf):
    """Score a checkpoint (or a baseline) with PSNR/SSIM."""
    from src.analytics.reports import render_eval_report, write_eval_report
    from src.data.dataset import scan_dataset
    from src.training.checkpoint import load_net
    from src.training.evaluation import evaluate

    if checkpoint is None and baseline is None:
        raise click.UsageError("eval needs --checkpoint or --baseline")

    net = None
    if checkpoint:
        net, _ = load_net(checkpoint)
        if dgf:
            net = net.as_dgf()
    index = scan_dataset(data, split="test")
    with console.status(f"[cyan]Evaluating {len(index)} pairs...[/cyan]"):
        report = evaluate(
            net if baseline is None else None,
            index,
            baseline=baseline,
            threads=ctx.obj.get("threads") if ctx.obj else None,
            checkpoint=checkpoint,
        )
    render_eval_report(report, console)
    if report_path:
        json_path, text_path = write_eval_report(report, report_path)
        console.print(f"[green]✓[/green] Report written to [cyan]{json_path}[/cyan] and [cyan]{text_path}[/cyan]")
