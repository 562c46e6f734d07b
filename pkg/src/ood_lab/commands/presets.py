from typing import Optional

import typer
from rich.table import Table

from ..core.network import HeadKind
from ..core.objectives import PrototypeObjective, TripletObjective
from ..core.presets import PRESETS
from ..utils import console

app = typer.Typer()


@app.command(name="presets", help="List the named experiment presets.")
def presets_command(
    show: Optional[str] = typer.Option(None, "--show", "-s", help="Print one preset as config JSON"),
):
    """
    List presets, or print one as a config file to start from.
    """
    if show is not None:
        if show not in PRESETS:
            console.print(f"❌ Unknown preset '{show}'", style="red")
            raise typer.Exit(code=2)
        typer.echo(PRESETS[show].to_json(), nl=False)
        return

    table = Table(title="🧰 Presets", show_header=True, header_style="bold blue")
    table.add_column("Name", style="green")
    table.add_column("LR", style="yellow", justify="right")
    table.add_column("ED", style="cyan", justify="right")
    table.add_column("Objective settings", style="magenta")
    table.add_column("Scorer", style="blue")

    for name, config in PRESETS.items():
        objective = config.objective
        if isinstance(objective, PrototypeObjective):
            settings = f"λ={objective.lam:g}, τ={objective.tau:g}"
        elif isinstance(objective, TripletObjective):
            settings = f"margin={objective.margin:g}, {objective.mining}"
        else:
            settings = ""
        embedding_dim = str(config.network.embedding_dim) if config.head is HeadKind.EMBEDDING else "-"
        table.add_row(
            name,
            f"{config.optimizer.lr:g}",
            embedding_dim,
            settings,
            str(config.resolved_scorer),
        )

    console.print(table)
    console.print(f"\n📊 Total: {len(PRESETS)} presets", style="dim")
