from pathlib import Path
from typing import Optional

import click
import typer

from ..core.experiment import export_embeddings, run_paths, saved_run_datasets
from ..utils import console, fail, goodbye, resolve_config, resolve_out

app = typer.Typer()


@app.command(
    name="export-embeddings",
    help="Export network outputs of id_test, near-OOD and far-OOD data for visualisation.",
)
def export_command(
    config: Optional[Path] = typer.Option(None, "--config", "-c", help="Experiment config JSON"),
    preset: Optional[str] = typer.Option(None, "--preset", "-p", help="Named preset"),
    seed: Optional[int] = typer.Option(None, "--seed", help="Base seed override"),
    run_index: int = typer.Option(0, "--run", min=0, help="Trained run to export"),
    out: Optional[Path] = typer.Option(None, "--out", "-o", help="Output directory"),
    output: Optional[Path] = typer.Option(
        None, "--output", help="CSV path (default: <run dir>/embeddings.csv)"
    ),
):
    """
    Write one row per example with embedding (or logit) columns, role tag and label.
    """
    try:
        experiment = resolve_config(config, preset, seed=seed)
        paths = run_paths(resolve_out(out), experiment, run_index)
        target = output or paths.run_dir / "embeddings.csv"

        with console.status("[bold blue]📤 Exporting embeddings...", spinner="dots"):
            trained, data = saved_run_datasets(paths)
            table = export_embeddings(trained, data.evaluation_sets, target)

        counts = table["role"].value_counts()
        console.print(
            f"✅ Exported {len(table)} rows "
            f"(id {counts.get('id', 0)}, near {counts.get('near', 0)}, far {counts.get('far', 0)}) "
            f"to {target}",
            style="green bold",
        )

    except (click.exceptions.Abort, KeyboardInterrupt):
        goodbye()
    except Exception as e:
        fail(e, "export-embeddings")
