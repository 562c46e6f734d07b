"""Multi-seed experiment orchestration and on-disk layout.

    <out>/<experiment>/run_<r>/config.json       experiment config (seed = base seed)
                               checkpoint.json   network + prototypes / train embeddings
                               training.json     per-epoch loss and lr, diagnostics
                               scores.csv        example_id,role,score,pred,true_label
                               metrics.json      RunMetrics
    <out>/<experiment>/metrics.json, metrics.csv all successful runs
    <out>/comparison/report.md, report.json, runs.csv
    <out>/runs.db                                run registry

Run r uses seed base_seed + r for data, initialisation and training streams.
"""

import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from pydantic import TypeAdapter

from .config import CsvSource, ExperimentConfig, SyntheticSource, load_config, save_config
from .datasets import (
    Dataset,
    MixtureSpec,
    Role,
    gen_far_ood,
    gen_id,
    gen_near_ood,
    load_csv,
    split,
)
from .errors import ConfigurationError, InvalidStateError
from .evaluation import ComparisonReport, aggregate, auroc, id_accuracy, render_markdown
from .models import RunMetrics, list_runs, record_runs
from .network import Network
from .numerics import Stream, make_rng, run_seed
from .objectives import OBJECTIVE_TITLES
from .scoring import (
    ScorerRule,
    ScoreSet,
    export_scores,
    load_scores,
    score_dataset,
    scorer_problem,
)
from .training import TrainedModel, train

logger = logging.getLogger(__name__)

_UNSAFE = re.compile(r"[^A-Za-z0-9_.\-/]")
_runs_adapter = TypeAdapter(List[RunMetrics])
_report_adapter = TypeAdapter(ComparisonReport)

COMPARISON_DIR = "comparison"
SCORER_CANDIDATES = (ScorerRule.MSP, ScorerRule.ENTROPY, ScorerRule.KNN)


@dataclass(frozen=True)
class ExperimentData:
    train: Dataset
    val: Dataset
    test: Dataset
    near: Dataset
    far: Dataset

    @property
    def evaluation_sets(self) -> List[Dataset]:
        return [self.test, self.near, self.far]


@dataclass(frozen=True)
class RunFailure:
    experiment: str
    seed: int
    stage: str
    message: str

    def __str__(self) -> str:
        return f"{self.experiment} seed {self.seed}: {self.stage} failed: {self.message}"


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    metrics: List[RunMetrics] = field(default_factory=list)
    failures: List[RunFailure] = field(default_factory=list)


@dataclass(frozen=True)
class RunPaths:
    run_dir: Path

    @property
    def config(self) -> Path:
        return self.run_dir / "config.json"

    @property
    def checkpoint(self) -> Path:
        return self.run_dir / "checkpoint.json"

    @property
    def training(self) -> Path:
        return self.run_dir / "training.json"

    @property
    def scores(self) -> Path:
        return self.run_dir / "scores.csv"

    @property
    def metrics(self) -> Path:
        return self.run_dir / "metrics.json"

    @property
    def run_index(self) -> int:
        return int(self.run_dir.name.removeprefix("run_"))


def experiment_dir(out_dir: str | Path, config: ExperimentConfig) -> Path:
    name = _UNSAFE.sub("_", config.name).strip("/")
    if not name or any(part in ("", ".", "..") for part in name.split("/")):
        raise ConfigurationError(f"experiment name '{config.name}' cannot be used as a path")
    return Path(out_dir) / name


def run_paths(out_dir: str | Path, config: ExperimentConfig, run_index: int) -> RunPaths:
    return RunPaths(experiment_dir(out_dir, config) / f"run_{run_index}")


def discover_runs(exp_dir: str | Path) -> List[RunPaths]:
    exp_dir = Path(exp_dir)
    runs = [RunPaths(p) for p in exp_dir.glob("run_*") if p.is_dir() and p.name[4:].isdigit()]
    if not runs:
        raise InvalidStateError(f"no run directories under {exp_dir}")
    return sorted(runs, key=lambda paths: paths.run_index)


def _mixture(source: SyntheticSource) -> MixtureSpec:
    return MixtureSpec.on_circle(
        num_classes=source.num_classes,
        dim=source.dim,
        radius=source.radius,
        sigma=source.sigma,
        n_per_class=source.train_per_class + source.val_per_class + source.test_per_class,
    )


def prepare_data(config: ExperimentConfig, seed: int) -> ExperimentData:
    """Generate or load the datasets of one run; deterministic in (config.dataset, seed)."""
    source = config.dataset
    split_rng = make_rng(seed, Stream.SPLIT)
    if isinstance(source, SyntheticSource):
        spec = _mixture(source)
        per_class = spec.n_per_class
        pool = gen_id(spec, make_rng(seed, Stream.DATA_ID))
        fractions = (
            source.train_per_class / per_class,
            source.val_per_class / per_class,
            source.test_per_class / per_class,
        )
        train_set, val_set, test_set = split(pool, fractions, split_rng)
        near = gen_near_ood(spec, source.near, make_rng(seed, Stream.DATA_NEAR), mix=source.near_mix)
        far = gen_far_ood(
            spec,
            source.far,
            make_rng(seed, Stream.DATA_FAR),
            radius_scale=source.far_radius_scale,
            thickness=source.far_thickness,
        )
        return ExperimentData(train_set, val_set, test_set, near, far)

    assert isinstance(source, CsvSource)
    pool = load_csv(source.id_path, Role.ID_TRAIN, source.num_classes)
    train_set, val_set, test_set = split(pool, source.fractions, split_rng)
    near = load_csv(source.near_path, Role.NEAR_OOD, pool.num_classes)
    far = load_csv(source.far_path, Role.FAR_OOD, pool.num_classes)
    for ood in (near, far):
        if ood.dim != pool.dim:
            raise ConfigurationError(
                f"{ood.name} has {ood.dim} features but the ID data has {pool.dim}"
            )
    return ExperimentData(train_set, val_set, test_set, near, far)


def train_run(config: ExperimentConfig, run_index: int) -> tuple[TrainedModel, ExperimentData]:
    seed = run_seed(config.seed, run_index)
    data = prepare_data(config, seed)
    net = Network.initialize(
        config.network_config(data.train.dim, data.train.num_classes),
        make_rng(seed, Stream.INIT),
    )
    trained = train(net, data.train, config.objective, config.optimizer, make_rng(seed, Stream.TRAIN))
    return trained, data


def score_run(
    config: ExperimentConfig, trained: TrainedModel, data: ExperimentData
) -> List[ScoreSet]:
    return [
        score_dataset(trained, dataset, config.scorer, config.selected_scorer)
        for dataset in data.evaluation_sets
    ]


def metrics_from_frames(
    config: ExperimentConfig, run_index: int, frames: Dict[Role, pd.DataFrame]
) -> RunMetrics:
    for role in (Role.ID_TEST, Role.NEAR_OOD, Role.FAR_OOD):
        if role not in frames:
            raise InvalidStateError(f"scores lack the {role} examples")
    test = frames[Role.ID_TEST]
    return RunMetrics(
        experiment=config.name,
        objective=config.objective.kind,
        scorer=str(config.resolved_scorer),
        seed=run_seed(config.seed, run_index),
        run_index=run_index,
        id_accuracy=id_accuracy(test["pred"].to_numpy(), test["true_label"].to_numpy()),
        near_auroc=auroc(test["score"].to_numpy(), frames[Role.NEAR_OOD]["score"].to_numpy()),
        far_auroc=auroc(test["score"].to_numpy(), frames[Role.FAR_OOD]["score"].to_numpy()),
    )


def _write_json(path: Path, payload) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, allow_nan=False) + "\n", encoding="utf-8")
    return path


def save_training(paths: RunPaths, config: ExperimentConfig, trained: TrainedModel):
    save_config(config, paths.config)
    trained.save(paths.checkpoint)
    _write_json(paths.training, trained.diagnostics.to_dict())


def run_single(config: ExperimentConfig, run_index: int, out_dir: str | Path) -> RunMetrics:
    """Generate data, train, score and evaluate one seed; every artifact is written to disk."""
    paths = run_paths(out_dir, config, run_index)
    trained, data = train_run(config, run_index)
    save_training(paths, config, trained)
    export_scores(score_run(config, trained, data), paths.scores)
    metrics = metrics_from_frames(config, run_index, load_scores(paths.scores))
    paths.metrics.write_text(metrics.model_dump_json(indent=2) + "\n", encoding="utf-8")
    return metrics


def write_experiment_metrics(exp_dir: Path, metrics: Sequence[RunMetrics]):
    exp_dir.mkdir(parents=True, exist_ok=True)
    (exp_dir / "metrics.json").write_bytes(_runs_adapter.dump_json(list(metrics), indent=2) + b"\n")
    frame = pd.DataFrame([m.model_dump() for m in metrics], columns=list(RunMetrics.model_fields))
    frame.to_csv(exp_dir / "metrics.csv", index=False, lineterminator="\n")


def run_experiment(
    config: ExperimentConfig,
    out_dir: str | Path,
    on_run: Optional[Callable[[int, RunMetrics | RunFailure], None]] = None,
) -> ExperimentResult:
    """All `config.runs` seeds; a failing run is recorded and the rest still run."""
    result = ExperimentResult(config=config)
    for run_index in range(config.runs):
        seed = run_seed(config.seed, run_index)
        try:
            outcome: RunMetrics | RunFailure = run_single(config, run_index, out_dir)
            result.metrics.append(outcome)
        except Exception as e:
            outcome = RunFailure(config.name, seed, "run", str(e))
            result.failures.append(outcome)
            logger.error("Run %d of %s failed: %s", run_index, config.name, e)
        if on_run:
            on_run(run_index, outcome)

    write_experiment_metrics(experiment_dir(out_dir, config), result.metrics)
    record_runs(out_dir, result.metrics)
    return result


def check_comparable(configs: Sequence[ExperimentConfig]):
    if len(configs) < 2:
        raise ConfigurationError("a comparison needs at least 2 objectives")
    kinds = [c.objective.kind for c in configs]
    duplicates = sorted({k for k in kinds if kinds.count(k) > 1})
    if duplicates:
        raise ConfigurationError(f"duplicate objective entries: {', '.join(duplicates)}")


def objective_titles(configs: Sequence[ExperimentConfig]) -> Dict[str, str]:
    return {c.objective.kind: c.objective.title for c in configs}


def write_report(
    out_dir: str | Path,
    report: ComparisonReport,
    runs: Sequence[RunMetrics],
    titles: Optional[Dict[str, str]] = None,
) -> Path:
    target = Path(out_dir) / COMPARISON_DIR
    target.mkdir(parents=True, exist_ok=True)
    (target / "report.md").write_text(render_markdown(report, titles), encoding="utf-8")
    (target / "report.json").write_bytes(_report_adapter.dump_json(report, indent=2) + b"\n")
    frame = pd.DataFrame([m.model_dump() for m in runs], columns=list(RunMetrics.model_fields))
    frame.to_csv(target / "runs.csv", index=False, lineterminator="\n")
    return target


def compare(
    configs: Sequence[ExperimentConfig],
    out_dir: str | Path,
    on_run: Optional[Callable[[ExperimentConfig, int, RunMetrics | RunFailure], None]] = None,
) -> tuple[ComparisonReport, List[ExperimentResult]]:
    """Run one experiment per objective and aggregate them into a Welch-marked report."""
    check_comparable(configs)
    results = []
    for config in configs:
        callback = (lambda r, outcome, c=config: on_run(c, r, outcome)) if on_run else None
        results.append(run_experiment(config, out_dir, callback))

    runs = [m for result in results for m in result.metrics]
    footnotes = [str(f) for result in results for f in result.failures]
    report = aggregate(runs, expected=[c.objective.kind for c in configs], footnotes=footnotes)
    write_report(out_dir, report, runs, objective_titles(configs))
    return report, results


def report_from_registry(
    out_dir: str | Path, experiments: Optional[Sequence[str]] = None
) -> ComparisonReport:
    """Rebuild the comparison from the persisted run registry."""
    runs = list_runs(out_dir, experiments)
    if not runs:
        raise InvalidStateError(f"no recorded runs in {out_dir}")
    owners: Dict[str, set] = {}
    for run in runs:
        owners.setdefault(run.objective, set()).add(run.experiment)
    shared = {k: sorted(v) for k, v in owners.items() if len(v) > 1}
    if shared:
        objective, names = next(iter(sorted(shared.items())))
        raise ConfigurationError(
            f"experiments {', '.join(names)} all train {objective}; select one per objective"
        )
    report = aggregate(runs)
    write_report(out_dir, report, runs, OBJECTIVE_TITLES)
    return report


def export_embeddings(
    trained: TrainedModel, datasets: Sequence[Dataset], path: str | Path
) -> pd.DataFrame:
    """One row per example: network outputs (embeddings or logits), role tag and label."""
    blocks = []
    for dataset in datasets:
        outputs = trained.outputs(dataset.features)
        frame = pd.DataFrame(outputs, columns=[f"e{i}" for i in range(outputs.shape[1])])
        frame["role"] = dataset.role.short
        frame["label"] = dataset.labels
        blocks.append(frame)
    table = pd.concat(blocks, ignore_index=True)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    table.to_csv(path, index=False, lineterminator="\n")
    return table


def load_run(paths: RunPaths) -> tuple[ExperimentConfig, TrainedModel]:
    if not paths.checkpoint.exists():
        raise InvalidStateError(f"{paths.run_dir} has no checkpoint; run `train` first")
    return load_config(paths.config), TrainedModel.load(paths.checkpoint)


def score_saved_run(paths: RunPaths) -> Path:
    config, trained = load_run(paths)
    data = prepare_data(config, run_seed(config.seed, paths.run_index))
    return export_scores(score_run(config, trained, data), paths.scores)


def evaluate_saved_run(paths: RunPaths) -> RunMetrics:
    if not paths.scores.exists():
        raise InvalidStateError(f"{paths.run_dir} has no scores; run `score` first")
    config = load_config(paths.config)
    metrics = metrics_from_frames(config, paths.run_index, load_scores(paths.scores))
    paths.metrics.write_text(metrics.model_dump_json(indent=2) + "\n", encoding="utf-8")
    return metrics


def saved_run_datasets(paths: RunPaths) -> tuple[TrainedModel, ExperimentData]:
    config, trained = load_run(paths)
    return trained, prepare_data(config, run_seed(config.seed, paths.run_index))


def validation_near_ood(config: ExperimentConfig, seed: int) -> Dataset:
    """Near-OOD data for scorer selection; synthetic sources draw it from a stream of its own."""
    source = config.dataset
    if isinstance(source, SyntheticSource):
        return gen_near_ood(
            _mixture(source),
            source.near,
            make_rng(seed, Stream.DATA_VAL_NEAR),
            mix=source.near_mix,
        )
    # CSV sources have a single near-OOD file
    return load_csv(source.near_path, Role.NEAR_OOD, source.num_classes)


def validate_scorers(paths: RunPaths) -> Dict[ScorerRule, float]:
    """AUROC of id_val against validation near-OOD data for every rule the model supports."""
    config, trained = load_run(paths)
    seed = run_seed(config.seed, paths.run_index)
    data = prepare_data(config, seed)
    near = validation_near_ood(config, seed)
    results = {}
    for rule in SCORER_CANDIDATES:
        if scorer_problem(config.objective, trained.head, rule):
            continue
        if rule is ScorerRule.KNN and trained.train_index is None:
            continue
        val_scores = score_dataset(trained, data.val, rule).scores
        near_scores = score_dataset(trained, near, rule).scores
        results[rule] = auroc(val_scores, near_scores)
    return results


def select_scorer(
    per_run: Sequence[Dict[ScorerRule, float]],
) -> tuple[ScorerRule, Dict[ScorerRule, float]]:
    """Rule with the best mean validation AUROC over runs; ties keep candidate order."""
    if not per_run:
        raise InvalidStateError("no validation results to select a scorer from")
    rules = [rule for rule in SCORER_CANDIDATES if all(rule in run for run in per_run)]
    means = {rule: float(np.mean([run[rule] for run in per_run])) for rule in rules}
    best = max(rules, key=lambda rule: means[rule])
    return best, means
