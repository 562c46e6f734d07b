from functools import lru_cache
from pathlib import Path
from typing import List, Optional, Sequence

from sqlalchemy import UniqueConstraint
from sqlmodel import (
    Field,
    Session,
    SQLModel,
    create_engine,
    select,
)

REGISTRY_FILE = "runs.db"


class RunMetrics(SQLModel):
    """Metrics of one training run, stored in [0, 1]."""

    experiment: str = Field(index=True)
    objective: str = Field(index=True)
    scorer: str
    seed: int
    run_index: int = 0
    id_accuracy: float = Field(ge=0.0, le=1.0)
    near_auroc: float = Field(ge=0.0, le=1.0)
    far_auroc: float = Field(ge=0.0, le=1.0)


class RunRecord(RunMetrics, table=True):
    __table_args__ = (UniqueConstraint("experiment", "seed"),)

    id: Optional[int] = Field(default=None, primary_key=True)

    def to_metrics(self) -> RunMetrics:
        return RunMetrics.model_validate(self.model_dump(exclude={"id"}))


def get_database_path(out_dir: str | Path) -> Path:
    """Registry database inside the output directory."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    return out_dir / REGISTRY_FILE


@lru_cache(maxsize=None)
def _engine(db_path: str):
    return create_engine(f"sqlite:///{db_path}")


def get_session(out_dir: str | Path) -> Session:
    """Get a registry session, creating the tables on first use."""
    engine = _engine(str(get_database_path(out_dir).resolve()))
    SQLModel.metadata.create_all(engine)
    return Session(engine)


def record_runs(out_dir: str | Path, runs: Sequence[RunMetrics]) -> int:
    """Insert runs, replacing any earlier record of the same (experiment, seed)."""
    with get_session(out_dir) as session:
        for run in runs:
            statement = select(RunRecord).where(
                RunRecord.experiment == run.experiment, RunRecord.seed == run.seed
            )
            for stale in session.exec(statement).all():
                session.delete(stale)
        # deletes must reach the database before the unique (experiment, seed) inserts
        session.flush()
        for run in runs:
            session.add(RunRecord.model_validate(run.model_dump()))
        session.commit()
    return len(runs)


def list_runs(
    out_dir: str | Path, experiments: Optional[Sequence[str]] = None
) -> List[RunMetrics]:
    """Registry contents ordered by experiment then seed."""
    with get_session(out_dir) as session:
        statement = select(RunRecord).order_by(RunRecord.experiment, RunRecord.seed)
        if experiments:
            statement = statement.where(RunRecord.experiment.in_(list(experiments)))
        return [record.to_metrics() for record in session.exec(statement).all()]
