"""Main CLI entry point."""
import logging
import sys
from typing import Optional, Sequence

import click
from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table

from src.config import ABLATION_PRESETS, EFFICIENCY_SIZE, LOG_LEVEL, resolve_threads

# Setup logging
logging.basicConfig(
    level=LOG_LEVEL,
    format="%(message)s",
    handlers=[RichHandler(rich_tracebacks=True, show_path=False)]
)
logger = logging.getLogger(__name__)

console = Console()


@click.group()
@click.option('--debug', is_flag=True, help='Enable debug logging')
@click.option('--threads', type=click.IntRange(min=1), default=None,
              help='Worker threads (default: CPGA_THREADS or logical cores)')
@click.pass_context
def cli(ctx, debug, threads):
    """CPGA-Net low-light image enhancement."""
    if debug:
        logging.getLogger().setLevel(logging.DEBUG)
    ctx.ensure_object(dict)
    ctx.obj["threads"] = resolve_threads(threads)


@cli.command()
@click.option('--checkpoint', type=click.Path(dir_okay=False), help='Checkpoint to describe')
@click.option('--preset', type=click.Choice(sorted(ABLATION_PRESETS)), help='Ablation preset to describe')
@click.option('--dgf', is_flag=True, help='Describe the 8-channel DGF student')
def info(checkpoint, preset, dgf):
    """Show parameter count and FLOPs of a network."""
    from src.models import CpgaConfig, CpgaNet, flops_estimate, param_count
    from src.training.checkpoint import load_net

    if checkpoint:
        net, ckpt = load_net(checkpoint)
        stages = " -> ".join(s.stage for s in ckpt.provenance.stages) or "untrained"
        console.print(f"[dim]Stages: {stages}[/dim]")
    elif preset:
        net = CpgaNet(CpgaConfig.from_preset(preset))
    else:
        net = CpgaNet(CpgaConfig.dgf() if dgf else CpgaConfig())

    h, w = EFFICIENCY_SIZE
    cfg = net.config
    table = Table(show_header=False)
    table.add_column("Field", style="cyan")
    table.add_column("Value", justify="right")
    table.add_row("Ã-branch channels", str(cfg.base_channels))
    table.add_row("t input", cfg.t_input)
    table.add_row("Ã net", cfg.a_net)
    table.add_row("γ net", cfg.g_net)
    table.add_row("Fusion", cfg.fusion)
    table.add_row("DGF", f"yes (÷{cfg.dgf_downsample})" if cfg.use_dgf else "no")
    table.add_row("Parameters", f"{param_count(net):,}")
    table.add_row(f"FLOPs @ {w}x{h}", f"{flops_estimate(net, h, w) / 1e9:.2f}G")
    console.print(table)


# Import and register enhancement commands
from src.cli.enhance_menu import enhance, priors  # noqa: E402
cli.add_command(enhance)
cli.add_command(priors)

# Import and register training commands
from src.cli.train_menu import evaluate_command, train  # noqa: E402
cli.add_command(train)
cli.add_command(evaluate_command, name='eval')


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Run the CLI and map the outcome to an exit code: 0 ok, 1 usage error, 2 runtime failure."""
    try:
        result = cli.main(args=list(argv) if argv is not None else None, prog_name="cpga", standalone_mode=False)
    except click.UsageError as e:
        e.show()
        return 1
    except click.Abort:
        console.print("[yellow]Aborted[/yellow]")
        return 1
    except click.ClickException as e:
        e.show()
        return 2
    except Exception as e:
        logger.debug("Command failed", exc_info=True)
        console.print(f"[red]Error: {e}[/red]")
        return 2
    return result if isinstance(result, int) else 0


def main() -> None:
    sys.exit(run())


if __name__ == '__main__':
    main()
