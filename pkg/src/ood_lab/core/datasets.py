import math
import re
from dataclasses import dataclass, field
from enum import StrEnum
from pathlib import Path
from typing import Iterator, List, NamedTuple, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .errors import ConfigurationError, DatasetParseError, InvalidInputError

OOD_LABEL = -1
_INTEGER = re.compile(r"-?\d+")
_BAD_FIELDS = re.compile(r"line (\d+)")


class Role(StrEnum):
    ID_TRAIN = "id_train"
    ID_VAL = "id_val"
    ID_TEST = "id_test"
    NEAR_OOD = "near_ood"
    FAR_OOD = "far_ood"

    @property
    def is_ood(self) -> bool:
        return self in (Role.NEAR_OOD, Role.FAR_OOD)

    @property
    def short(self) -> str:
        """Tag used in exported tables: id, near or far."""
        if self is Role.NEAR_OOD:
            return "near"
        if self is Role.FAR_OOD:
            return "far"
        return "id"


class Example(NamedTuple):
    x: np.ndarray
    y: int


@dataclass(frozen=True)
class Dataset:
    """Labeled feature vectors sharing one role.

    ``features`` is (N, d) float64, ``labels`` is (N,) int64 with -1 for OOD
    examples. Both arrays are read-only.
    """

    features: np.ndarray
    labels: np.ndarray
    role: Role
    num_classes: int
    name: str = field(default="")

    def __post_init__(self):
        features = np.array(self.features, dtype=np.float64, copy=True)
        labels = np.array(self.labels, dtype=np.int64, copy=True).reshape(-1)
        if features.ndim != 2:
            raise InvalidInputError(f"Features must be (N, d), got shape {features.shape}")
        if features.shape[0] != labels.shape[0]:
            raise InvalidInputError(
                f"{features.shape[0]} feature rows but {labels.shape[0]} labels"
            )
        if not np.all(np.isfinite(features)):
            raise InvalidInputError("Features contain non-finite values")
        if self.num_classes < 1:
            raise InvalidInputError(f"num_classes must be >= 1, got {self.num_classes}")
        role = Role(self.role)
        if role.is_ood:
            if np.any(labels != OOD_LABEL):
                raise InvalidInputError(f"{role} datasets may only carry label {OOD_LABEL}")
        elif labels.size and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise InvalidInputError(
                f"{role} labels must lie in [0, {self.num_classes}), "
                f"got range [{labels.min()}, {labels.max()}]"
            )
        features.flags.writeable = False
        labels.flags.writeable = False
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "role", role)

    def __len__(self) -> int:
        return self.features.shape[0]

    def __iter__(self) -> Iterator[Example]:
        for x, y in zip(self.features, self.labels):
            yield Example(x, int(y))

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def take(self, indices: np.ndarray, role: Role | None = None) -> "Dataset":
        return Dataset(
            features=self.features[indices],
            labels=self.labels[indices],
            role=role or self.role,
            num_classes=self.num_classes,
            name=self.name,
        )


class MixtureSpec(BaseModel):
    """Isotropic Gaussian mixture: one mean per class, shared stddev, n draws per class."""

    model_config = ConfigDict(frozen=True)

    means: List[List[float]]
    sigma: float = Field(gt=0)
    n_per_class: int = Field(ge=1)

    @field_validator("means")
    @classmethod
    def _check_means(cls, means: List[List[float]]) -> List[List[float]]:
        if len(means) < 2:
            raise ValueError("a mixture needs at least 2 class means")
        dims = {len(mean) for mean in means}
        if len(dims) != 1 or 0 in dims:
            raise ValueError("class means must share one positive dimension")
        if not all(math.isfinite(v) for mean in means for v in mean):
            raise ValueError("class means must be finite")
        return means

    @property
    def num_classes(self) -> int:
        return len(self.means)

    @property
    def dim(self) -> int:
        return len(self.means[0])

    def mean_array(self) -> np.ndarray:
        return np.asarray(self.means, dtype=np.float64)

    @classmethod
    def on_circle(
        cls,
        num_classes: int = 4,
        dim: int = 2,
        radius: float = 1.0,
        sigma: float = 0.3,
        n_per_class: int = 250,
    ) -> "MixtureSpec":
        """Means evenly spaced on a circle in the first two coordinates."""
        if dim < 2:
            raise InvalidInputError("on_circle needs dim >= 2")
        means = []
        for k in range(num_classes):
            angle = 2.0 * math.pi * k / num_classes
            mean = [0.0] * dim
            mean[0] = radius * math.cos(angle)
            mean[1] = radius * math.sin(angle)
            means.append(mean)
        return cls(means=means, sigma=sigma, n_per_class=n_per_class)


def gen_id(spec: MixtureSpec, rng: np.random.Generator) -> Dataset:
    """C * n examples, class-major order, class k drawn from N(mean_k, sigma^2 I)."""
    means = spec.mean_array()
    labels = np.repeat(np.arange(spec.num_classes), spec.n_per_class)
    noise = rng.standard_normal((labels.size, spec.dim))
    features = means[labels] + spec.sigma * noise
    return Dataset(features, labels, Role.ID_TRAIN, spec.num_classes, name="synthetic")


def adjacent_pairs(num_classes: int) -> List[Tuple[int, int]]:
    if num_classes < 2:
        raise InvalidInputError("near-OOD generation needs at least 2 classes")
    if num_classes == 2:
        return [(0, 1)]
    return [(k, (k + 1) % num_classes) for k in range(num_classes)]


def gen_near_ood(
    spec: MixtureSpec, m: int, rng: np.random.Generator, mix: float = 0.5
) -> Dataset:
    """Gaussians centred between adjacent class means (``mix=0.5`` is the midpoint)."""
    if m < 1:
        raise InvalidInputError(f"m must be >= 1, got {m}")
    if not 0.0 < mix < 1.0:
        raise InvalidInputError(f"mix must lie in (0, 1), got {mix}")
    means = spec.mean_array()
    pairs = np.asarray(adjacent_pairs(spec.num_classes))
    centres = (1.0 - mix) * means[pairs[:, 0]] + mix * means[pairs[:, 1]]
    chosen = rng.integers(0, len(pairs), size=m)
    noise = rng.standard_normal((m, spec.dim))
    features = centres[chosen] + spec.sigma * noise
    return Dataset(
        features, np.full(m, OOD_LABEL), Role.NEAR_OOD, spec.num_classes, name="synthetic"
    )


def far_shell_radius(spec: MixtureSpec, radius_scale: float = 4.0) -> float:
    max_norm = float(np.linalg.norm(spec.mean_array(), axis=1).max())
    return radius_scale * max_norm + 4.0 * spec.sigma


def gen_far_ood(
    spec: MixtureSpec,
    m: int,
    rng: np.random.Generator,
    radius_scale: float = 4.0,
    thickness: float = 0.25,
) -> Dataset:
    """Points uniform in the shell r_in <= |x| <= r_in * (1 + thickness).

    r_in = radius_scale * max ||mean_k|| + 4 sigma.
    """
    if m < 1:
        raise InvalidInputError(f"m must be >= 1, got {m}")
    if radius_scale < 1.0 or thickness < 0.0:
        raise InvalidInputError("radius_scale must be >= 1 and thickness >= 0")
    d = spec.dim
    inner = far_shell_radius(spec, radius_scale)
    outer = inner * (1.0 + thickness)
    directions = rng.standard_normal((m, d))
    norms = np.linalg.norm(directions, axis=1, keepdims=True)
    # a zero draw has probability 0 but would divide by zero
    norms[norms == 0.0] = 1.0
    u = rng.random(m)
    radii = (inner**d + u * (outer**d - inner**d)) ** (1.0 / d)
    features = directions / norms * radii[:, None]
    return Dataset(
        features, np.full(m, OOD_LABEL), Role.FAR_OOD, spec.num_classes, name="synthetic"
    )


def _parse_floats(column: pd.Series, name: str) -> np.ndarray:
    try:
        values = np.array(column.tolist(), dtype=np.float64)
    except (TypeError, ValueError):
        values = None
    if values is not None and np.all(np.isfinite(values)):
        return values
    for row, cell in enumerate(column.tolist()):
        try:
            value = float(cell)
        except (TypeError, ValueError):
            raise DatasetParseError(f"{name}={cell!r} is not a number", line=row + 2)
        if not math.isfinite(value):
            raise DatasetParseError(f"{name}={cell!r} is not finite", line=row + 2)
    raise DatasetParseError(f"could not parse column {name}")


def load_csv(
    path: str | Path, role: Role = Role.ID_TRAIN, num_classes: int | None = None
) -> Dataset:
    """Parse a ``x0,...,x{d-1},y`` CSV file, rows kept in file order."""
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"dataset file {path} does not exist")
    try:
        frame = pd.read_csv(
            path,
            dtype=str,
            keep_default_na=False,
            na_filter=False,
            encoding="utf-8",
        )
    except pd.errors.EmptyDataError:
        raise DatasetParseError("file is empty", line=1)
    except pd.errors.ParserError as e:
        match = _BAD_FIELDS.search(str(e))
        raise DatasetParseError(
            "wrong number of fields", line=int(match.group(1)) if match else None
        )

    columns = [str(c) for c in frame.columns]
    d = len(columns) - 1
    expected = [f"x{i}" for i in range(d)] + ["y"]
    if d < 1 or columns != expected:
        raise DatasetParseError(
            f"header must be {','.join(expected) if d >= 1 else 'x0,...,y'}, "
            f"got {','.join(columns)}",
            line=1,
        )

    for row, cells in enumerate(frame.itertuples(index=False)):
        if any(not isinstance(cell, str) or cell == "" for cell in cells):
            raise DatasetParseError("missing field", line=row + 2)

    features = np.column_stack(
        [_parse_floats(frame[f"x{i}"], f"x{i}") for i in range(d)]
    ) if len(frame) else np.empty((0, d))

    labels = np.empty(len(frame), dtype=np.int64)
    for row, cell in enumerate(frame["y"].tolist()):
        if not _INTEGER.fullmatch(cell.strip()):
            raise DatasetParseError(f"label {cell!r} is not an integer", line=row + 2)
        labels[row] = int(cell)

    role = Role(role)
    if num_classes is None:
        num_classes = int(labels.max()) + 1 if labels.size and labels.max() >= 0 else 1
    for row, label in enumerate(labels):
        if role.is_ood and label != OOD_LABEL:
            raise DatasetParseError(
                f"label {label} in an OOD file (expected {OOD_LABEL})", line=row + 2
            )
        if not role.is_ood and not 0 <= label < num_classes:
            raise DatasetParseError(
                f"label {label} outside [0, {num_classes})", line=row + 2
            )

    return Dataset(features, labels, role, num_classes, name=path.stem)


def save_csv(dataset: Dataset, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(
        dataset.features, columns=[f"x{i}" for i in range(dataset.dim)]
    )
    frame["y"] = dataset.labels
    frame.to_csv(path, index=False, lineterminator="\n", encoding="utf-8")
    return path


def _round_half_up(value: float) -> int:
    return int(math.floor(value + 0.5))


def split(
    dataset: Dataset, fractions: Sequence[float], rng: np.random.Generator
) -> Tuple[Dataset, Dataset, Dataset]:
    """Seeded permutation partition into (train, val, test); rounding remainder goes to train."""
    if dataset.role.is_ood:
        raise InvalidInputError("only ID datasets can be split")
    if len(fractions) != 3 or any(f <= 0 for f in fractions):
        raise InvalidInputError(f"need three positive fractions, got {list(fractions)}")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise InvalidInputError(f"fractions must sum to 1, got {sum(fractions)}")

    n = len(dataset)
    n_val = _round_half_up(n * fractions[1])
    n_test = _round_half_up(n * fractions[2])
    n_train = n - n_val - n_test
    if n_train < 0:
        raise InvalidInputError(f"{n} examples cannot be split as {list(fractions)}")

    order = rng.permutation(n)
    return (
        dataset.take(order[:n_train], Role.ID_TRAIN),
        dataset.take(order[n_train : n_train + n_val], Role.ID_VAL),
        dataset.take(order[n_train + n_val :], Role.ID_TEST),
    )
