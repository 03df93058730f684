"""CLI commands for enhancing images and inspecting channel priors."""
import logging
from pathlib import Path

import click
import numpy as np
from rich.console import Console

from src.imaging.io import load_image, save_image
from src.imaging.priors import PatchSpec, bright_channel_patch, dark_channel_patch, luminance_y
from src.models.cpga import EnhancedOutput

logger = logging.getLogger(__name__)

console = Console()

COMPONENT_BRIGHTEN = 1.4  # t and Ã dumps are brightened for visibility


def dump_components(out: EnhancedOutput, directory: Path) -> list[Path]:
    """Write every interpretable component of ``out`` into ``directory``."""
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for name, tensor in out.components().items():
        data = tensor.data
        if name in ("t", "a_tilde"):
            data = data * COMPONENT_BRIGHTEN
        written.append(save_image(np.asarray(data), directory / f"{name}.png"))
    if out.priors is not None:
        for name, plane in out.priors.as_dict().items():
            written.append(save_image(plane, directory / f"prior_{name}.png"))
    gamma_path = directory / "gamma.txt"
    gamma_path.write_text(f"{out.gamma.item():.6f}\n")
    written.append(gamma_path)
    return written


@click.command()
@click.option('--input', 'input_path', required=True, type=click.Path(dir_okay=False), help='Low-light PNG')
@click.option('--output', 'output_path', required=True, type=click.Path(dir_okay=False), help='Enhanced PNG to write')
@click.option('--checkpoint', required=True, type=click.Path(dir_okay=False), help='Trained checkpoint')
@click.option('--dgf', is_flag=True, help='Run through the fast guided filter at reduced resolution')
@click.option('--dump-components', 'dump_dir', type=click.Path(file_okay=False),
              help='Also write R, R^γ, t, Ã, intersection, priors and γ here')
def enhance(input_path, output_path, checkpoint, dgf, dump_dir):
    """Enhance one low-light image."""
    from src.training.checkpoint import load_net

    net, _ = load_net(checkpoint)
    if dgf:
        net = net.as_dgf()
    img = load_image(input_path)

    with console.status(f"[cyan]Enhancing {Path(input_path).name}...[/cyan]"):
        out = net.enhance(img)
    save_image(out.r_hat, output_path)
    console.print(
        f"[green]✓[/green] Wrote [cyan]{output_path}[/cyan] "
        f"({img.shape[2]}x{img.shape[1]}, γ = {out.gamma.item():.3f})"
    )

    if dump_dir:
        files = dump_components(out, Path(dump_dir))
        console.print(f"[green]✓[/green] Dumped {len(files)} component files to [cyan]{dump_dir}[/cyan]")


@click.command()
@click.option('--input', 'input_path', required=True, type=click.Path(dir_okay=False), help='RGB PNG')
@click.option('--output-dir', required=True, type=click.Path(file_okay=False), help='Directory for the prior maps')
@click.option('--patch-radius', type=click.IntRange(min=0), default=0, show_default=True,
              help='Window radius for the patch priors (0 = per-pixel)')
def priors(input_path, output_dir, patch_radius):
    """Write the dark, bright and luminance prior maps of an image."""
    img = load_image(input_path)
    patch = PatchSpec(radius=patch_radius)
    out_dir = Path(output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    planes = {
        "dark": dark_channel_patch(img, patch),
        "bright": bright_channel_patch(img, patch),
        "y": luminance_y(img),
    }
    for name, plane in planes.items():
        path = save_image(plane, out_dir / f"{name}.png")
        console.print(f"[green]✓[/green] {name:<6} -> [cyan]{path}[/cyan]")
