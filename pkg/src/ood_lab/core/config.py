import os
from pathlib import Path
from typing import Annotated, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .errors import ConfigurationError
from .network import HeadKind, NetworkConfig, OptimizerConfig
from .objectives import ObjectiveConfig
from .scoring import ScorerRule, resolve_scorer, scorer_problem

DEFAULT_OUT = "runs"


def default_out_dir() -> Path:
    """Output root; `OOD_LAB_OUT` (environment or .env) overrides ./runs."""
    return Path(os.getenv("OOD_LAB_OUT", DEFAULT_OUT))


class SyntheticSource(BaseModel):
    """Gaussian mixture on a circle plus generated near/far OOD sets."""

    model_config = ConfigDict(frozen=True)

    kind: Literal["synthetic"] = "synthetic"
    num_classes: int = Field(default=4, ge=2)
    dim: int = Field(default=2, ge=2)
    radius: float = Field(default=1.0, gt=0)
    sigma: float = Field(default=0.3, gt=0)
    train_per_class: int = Field(default=250, ge=1)
    val_per_class: int = Field(default=25, ge=1)
    test_per_class: int = Field(default=100, ge=1)
    near: int = Field(default=400, ge=1)
    far: int = Field(default=400, ge=1)
    near_mix: float = Field(default=0.5, gt=0, lt=1)
    far_radius_scale: float = Field(default=4.0, ge=1)
    far_thickness: float = Field(default=0.25, ge=0)


class CsvSource(BaseModel):
    """ID file split by `fractions` plus separate near/far OOD files."""

    model_config = ConfigDict(frozen=True)

    kind: Literal["csv"] = "csv"
    id_path: Path
    near_path: Path
    far_path: Path
    num_classes: Optional[int] = Field(default=None, ge=2)
    fractions: Tuple[float, float, float] = (0.8, 0.1, 0.1)


DatasetSource = Annotated[Union[SyntheticSource, CsvSource], Field(discriminator="kind")]


class NetworkSettings(BaseModel):
    model_config = ConfigDict(frozen=True)

    hidden_sizes: Tuple[int, ...] = (64, 64)
    head: Optional[HeadKind] = None
    embedding_dim: int = Field(default=64, ge=1)
    normalize_embeddings: bool = False


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str = "experiment"
    dataset: DatasetSource = SyntheticSource()
    objective: ObjectiveConfig
    network: NetworkSettings = NetworkSettings()
    optimizer: OptimizerConfig
    scorer: ScorerRule = ScorerRule.AUTO
    selected_scorer: Optional[ScorerRule] = None
    seed: int = Field(default=0, ge=0)
    runs: int = Field(default=5, ge=1)

    @model_validator(mode="after")
    def _check_compatibility(self) -> "ExperimentConfig":
        problems = []
        head = self.head
        if head is not self.objective.head:
            problems.append(
                f"{self.objective.title} trains a {self.objective.head} head, "
                f"not a {head} head; set network.head to {self.objective.head!s}"
            )
        if self.selected_scorer is ScorerRule.AUTO:
            problems.append("selected_scorer must be a concrete rule (msp, entropy or knn)")
        problem = scorer_problem(self.objective, head, self.resolved_scorer)
        if problem:
            problems.append(f"scorer {self.resolved_scorer!s}: {problem}")
        if self.network.normalize_embeddings and head is not HeadKind.EMBEDDING:
            problems.append("normalize_embeddings only applies to an embedding head")
        if problems:
            raise ValueError("; ".join(problems))
        return self

    @property
    def head(self) -> HeadKind:
        return self.network.head or self.objective.head

    @property
    def resolved_scorer(self) -> ScorerRule:
        return resolve_scorer(self.scorer, self.objective, self.selected_scorer)

    def network_config(self, input_dim: int, num_classes: int) -> NetworkConfig:
        output_dim = num_classes if self.head is HeadKind.LOGITS else self.network.embedding_dim
        return NetworkConfig(
            input_dim=input_dim,
            hidden_sizes=self.network.hidden_sizes,
            head=self.head,
            output_dim=output_dim,
            normalize_embeddings=self.network.normalize_embeddings,
        )

    def to_json(self) -> str:
        return self.model_dump_json(indent=2, by_alias=True) + "\n"


def _describe(error: ValidationError) -> str:
    parts = []
    for item in error.errors():
        location = ".".join(str(part) for part in item["loc"])
        message = item["msg"].removeprefix("Value error, ")
        parts.append(f"{location}: {message}" if location else message)
    return "; ".join(parts)


def parse_config(text: str) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate_json(text)
    except ValidationError as e:
        raise ConfigurationError(f"invalid experiment config: {_describe(e)}") from e


def build_config(**fields) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(fields)
    except ValidationError as e:
        raise ConfigurationError(f"invalid experiment config: {_describe(e)}") from e


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"config file {path} does not exist")
    return parse_config(path.read_text(encoding="utf-8"))


def save_config(config: ExperimentConfig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(config.to_json(), encoding="utf-8")
    return path


def with_overrides(
    config: ExperimentConfig, seed: Optional[int] = None, runs: Optional[int] = None
) -> ExperimentConfig:
    """Copy with CLI overrides applied and re-validated."""
    data = config.model_dump(by_alias=True)
    if seed is not None:
        data["seed"] = seed
    if runs is not None:
        data["runs"] = runs
    return build_config(**data)
