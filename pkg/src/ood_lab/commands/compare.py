from pathlib import Path
from typing import List, Optional

import click
import typer
from rich.table import Table

from ..core.evaluation import ComparisonReport, METRICS
from ..core.experiment import COMPARISON_DIR, RunFailure, compare
from ..utils import console, fail, goodbye, resolve_configs, resolve_out

app = typer.Typer()


def display_report(report: ComparisonReport, titles: Optional[dict] = None):
    """Summary table with (**) next to means that differ significantly from the next row."""
    titles = titles or {}
    for table_data in report.tables:
        table = Table(title=f"🏆 {table_data.title}", show_header=True, header_style="bold blue")
        table.add_column("Rank", style="cyan", width=5)
        table.add_column("Objective", style="green")
        table.add_column("Mean ± std (%)", style="yellow", justify="right")
        table.add_column("p vs next", style="magenta", justify="right")
        table.add_column("", style="red bold", width=5)
        for rank, row in enumerate(table_data.rows, start=1):
            comparison = (
                table_data.comparisons[rank - 1] if rank <= len(table_data.comparisons) else None
            )
            table.add_row(
                str(rank),
                titles.get(row.objective, row.objective),
                f"{100 * row.mean:.2f} ± {100 * row.std:.2f}",
                f"{comparison.welch.p_value:.4f}" if comparison else "",
                comparison.marker if comparison else "",
            )
        console.print(table)
    for note in report.notes:
        console.print(f"⚠️ {note}", style="yellow")
    for footnote in report.footnotes:
        console.print(f"❗ {footnote}", style="red")


@app.command(name="compare", help="Run one experiment per objective and compare them.")
def compare_command(
    config: Optional[List[Path]] = typer.Option(
        None, "--config", "-c", help="Experiment config JSON (repeatable)"
    ),
    preset: Optional[List[str]] = typer.Option(
        None, "--preset", "-p", help="Named preset (repeatable)"
    ),
    family: Optional[str] = typer.Option(
        None, "--family", "-f", help="Compare the four objectives of one preset family"
    ),
    seed: Optional[int] = typer.Option(None, "--seed", help="Base seed override"),
    runs: Optional[int] = typer.Option(None, "--runs", min=1, help="Runs per objective"),
    out: Optional[Path] = typer.Option(None, "--out", "-o", help="Output directory"),
):
    """
    Train, score and evaluate each objective, then write the Welch-marked report.
    """
    try:
        configs = resolve_configs(config, preset, family, seed=seed, runs=runs)
        out_dir = resolve_out(out)
        console.print(
            f"⚖️ Comparing {len(configs)} objectives: "
            + ", ".join(c.objective.title for c in configs),
            style="blue bold",
        )

        def progress(experiment, run_index, outcome):
            if isinstance(outcome, RunFailure):
                console.print(
                    f"⚠️ {experiment.name} run {run_index} failed: {outcome.message}",
                    style="yellow",
                )
            else:
                console.print(f"✅ {experiment.name} run {run_index}", style="dim")

        with console.status("[bold blue]🚀 Running experiments...", spinner="dots"):
            report, _ = compare(configs, out_dir, on_run=progress)

        display_report(report, {c.objective.kind: c.objective.title for c in configs})
        console.print(
            f"\n📄 Report written to {out_dir / COMPARISON_DIR / 'report.md'} "
            f"({len(METRICS)} metric tables)",
            style="green",
        )

    except (click.exceptions.Abort, KeyboardInterrupt):
        goodbye()
    except Exception as e:
        fail(e, "compare")
