import typer
from dotenv import load_dotenv

from . import __version__
from .commands import (
    compare,
    eval,
    export,
    gen_data,
    presets,
    report,
    run,
    score,
    select_scorer,
    train,
)
from .utils import console, setup_logging

load_dotenv()

app = typer.Typer(
    name="ood-lab",
    help="""[bold blue]🧪 Desk-scale comparison of training objectives for OOD detection.

    Generate data, train, score, evaluate and compare objectives across seeds.""",
    rich_markup_mode="rich",
    no_args_is_help=True,
    add_completion=False,
)

app.add_typer(gen_data.app)
app.add_typer(train.app)
app.add_typer(score.app)
app.add_typer(select_scorer.app)
app.add_typer(eval.app)
app.add_typer(run.app)
app.add_typer(compare.app)
app.add_typer(export.app)
app.add_typer(report.app)
app.add_typer(presets.app)


@app.callback()
def main(
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Show debug logging"),
):
    """
    🧪 Desk-scale comparison of training objectives for OOD detection.

    Generate data, train, score, evaluate and compare objectives across seeds.
    """
    setup_logging(verbose)


@app.command(name="version", help="Show version information")
def version():
    """Show version information."""
    console.print(f"🧪 ood-lab version {__version__}", style="blue bold")
    console.print("📊 OOD detection objective comparison", style="dim")


if __name__ == "__main__":
    app()
