"""Evaluation reporting with Rich formatting, plus JSON and plain-text files."""
import io
import logging
import math
from pathlib import Path
from typing import Optional, Union

from rich.console import Console
from rich.table import Table

from src.training.evaluation import EvalReport

logger = logging.getLogger(__name__)


def _db(value: Optional[float]) -> str:
    if value is None:
        return "-"
    return "inf" if math.isinf(value) else f"{value:.2f}"


def _ssim(value: Optional[float]) -> str:
    return "-" if value is None else f"{value:.4f}"


def build_eval_table(report: EvalReport) -> Table:
    table = Table(show_header=True, header_style="bold magenta")
    table.add_column("Image", style="cyan")
    table.add_column("PSNR (dB)", justify="right")
    table.add_column("SSIM", justify="right")
    table.add_column("Time (s)", justify="right")

    for score in report.images:
        table.add_row(score.id, _db(score.psnr), _ssim(score.ssim), f"{score.seconds:.3f}")
    table.add_section()
    mean_seconds = "-" if report.mean_seconds is None else f"{report.mean_seconds:.3f}"
    table.add_row("[bold]mean[/bold]", _db(report.mean_psnr), _ssim(report.mean_ssim), mean_seconds)
    return table


def render_eval_report(report: EvalReport, console: Optional[Console] = None) -> None:
    """Print the per-image table and the efficiency summary."""
    if console is None:
        console = Console()

    source = report.checkpoint or f"baseline: {report.baseline}"
    console.print(f"\n[bold cyan]═══ Evaluation: {source} ═══[/bold cyan]")
    console.print(f"[dim]{report.data}[/dim]\n")
    console.print(build_eval_table(report))

    if report.param_count is not None:
        h, w = report.flops_size
        console.print(
            f"\nParameters: [green]{report.param_count:,}[/green] "
            f"({report.param_count / 1e6:.3f}M)   "
            f"FLOPs @ {w}x{h}: [green]{report.flops / 1e9:.2f}G[/green]"
        )
    if report.missing:
        console.print(f"[yellow]Missing or unreadable pairs ({len(report.missing)}): {', '.join(report.missing)}[/yellow]")


def format_eval_text(report: EvalReport, width: int = 100) -> str:
    """Aligned plain-text rendering (no colour codes)."""
    buffer = io.StringIO()
    render_eval_report(report, Console(file=buffer, width=width, no_color=True, highlight=False, emoji=False))
    return buffer.getvalue()


def write_eval_report(report: EvalReport, path: Union[str, Path]) -> tuple[Path, Path]:
    """Write the report as JSON plus an aligned plain-text table.

    Args:
        report: Evaluation result.
        path: JSON destination; the table goes to the same path with ``.txt``.

    Returns:
        The JSON and text paths.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(report.model_dump_json(indent=2))
    text_path = path.with_suffix(".txt")
    text_path.write_text(format_eval_text(report))
    logger.info(f"Wrote report {path} and {text_path}")
    return path, text_path
