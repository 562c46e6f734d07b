from pathlib import Path
from typing import List, Optional

import click
import typer

from ..core.experiment import COMPARISON_DIR, report_from_registry
from ..core.objectives import OBJECTIVE_TITLES
from ..utils import console, fail, goodbye, resolve_out
from .compare import display_report

app = typer.Typer()


@app.command(name="report", help="Rebuild the comparison report from the run registry.")
def report_command(
    experiment: Optional[List[str]] = typer.Option(
        None, "--experiment", "-e", help="Restrict to these experiments (repeatable)"
    ),
    out: Optional[Path] = typer.Option(None, "--out", "-o", help="Output directory"),
):
    """
    Aggregate recorded runs per objective and write report.md / report.json / runs.csv.
    """
    try:
        out_dir = resolve_out(out)
        report = report_from_registry(out_dir, experiment)
        display_report(report, OBJECTIVE_TITLES)
        console.print(
            f"\n📄 Report written to {out_dir / COMPARISON_DIR / 'report.md'}", style="green"
        )

    except (click.exceptions.Abort, KeyboardInterrupt):
        goodbye()
    except Exception as e:
        fail(e, "report")
