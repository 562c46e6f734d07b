"""ID accuracy, AUROC, Welch's t-test and multi-run comparison reports."""

import logging
import math
from collections import defaultdict
from typing import Dict, List, Optional, Sequence

import numpy as np
from pydantic import BaseModel

from .errors import InvalidInputError, NumericalError
from .models import RunMetrics

logger = logging.getLogger(__name__)

SIGNIFICANCE = 0.05
METRICS = {
    "id_accuracy": "ID Accuracy",
    "near_auroc": "Near-OOD AUROC",
    "far_auroc": "Far-OOD AUROC",
}
_CF_EPS = 1e-15
_CF_TINY = 1e-300
_CF_MAX_ITER = 500


def id_accuracy(predictions, labels) -> float:
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if predictions.shape != labels.shape or predictions.size == 0:
        raise InvalidInputError("predictions and labels must be non-empty and equally long")
    return float(np.mean(predictions == labels))


def auroc(id_scores, ood_scores) -> float:
    """P(ood > id) + P(tie) / 2 over all pairs, via the Mann-Whitney rank sum.

    Ranks are kept doubled so the tie midranks stay integers and the result is
    exactly (2 * wins + ties) / (2 * n_id * n_ood).
    """
    id_scores = np.asarray(id_scores, dtype=np.float64).ravel()
    ood_scores = np.asarray(ood_scores, dtype=np.float64).ravel()
    if id_scores.size == 0 or ood_scores.size == 0:
        raise InvalidInputError("AUROC needs at least one ID and one OOD score")
    combined = np.concatenate([id_scores, ood_scores])
    if not np.all(np.isfinite(combined)):
        raise InvalidInputError("AUROC scores must be finite")

    order = np.argsort(combined, kind="stable")
    ordered = combined[order]
    starts = np.flatnonzero(np.r_[True, ordered[1:] != ordered[:-1]])
    ends = np.r_[starts[1:], ordered.size]
    # positions start+1 .. end share the midrank (start + 1 + end) / 2
    doubled_group_rank = starts + 1 + ends
    doubled = np.empty(combined.size, dtype=np.int64)
    doubled[order] = np.repeat(doubled_group_rank, ends - starts)

    n_id, n_ood = id_scores.size, ood_scores.size
    doubled_u = int(doubled[n_id:].sum()) - n_ood * (n_ood + 1)
    return doubled_u / (2 * n_id * n_ood)


def _continued_fraction(x: float, a: float, b: float) -> float:
    """Lentz evaluation of the incomplete beta continued fraction."""
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = 1.0 / (d if abs(d) > _CF_TINY else _CF_TINY)
    h = d
    for m in range(1, _CF_MAX_ITER + 1):
        m2 = 2 * m
        for aa in (
            m * (b - m) * x / ((qam + m2) * (a + m2)),
            -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2)),
        ):
            d = 1.0 + aa * d
            d = 1.0 / (d if abs(d) > _CF_TINY else _CF_TINY)
            c = 1.0 + aa / c
            c = c if abs(c) > _CF_TINY else _CF_TINY
            step = d * c
            h *= step
        if abs(step - 1.0) < _CF_EPS:
            return h
    raise NumericalError(f"incomplete beta did not converge for x={x}, a={a}, b={b}")


def regularized_incomplete_beta(x: float, a: float, b: float) -> float:
    """I_x(a, b) for a, b > 0 and x in [0, 1]."""
    if a <= 0 or b <= 0:
        raise InvalidInputError(f"beta parameters must be positive, got a={a}, b={b}")
    if not 0.0 <= x <= 1.0:
        raise InvalidInputError(f"x must lie in [0, 1], got {x}")
    if x == 0.0 or x == 1.0:
        return x
    log_front = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log1p(-x)
    )
    if x < (a + 1.0) / (a + b + 2.0):
        return math.exp(log_front) * _continued_fraction(x, a, b) / a
    return 1.0 - math.exp(log_front) * _continued_fraction(1.0 - x, b, a) / b


def student_t_two_sided_p(t: float, df: float) -> float:
    """P(|T| >= |t|) for Student's t with `df` degrees of freedom."""
    if df <= 0:
        raise InvalidInputError(f"degrees of freedom must be positive, got {df}")
    if math.isinf(t):
        return 0.0
    return min(1.0, regularized_incomplete_beta(df / (df + t * t), df / 2.0, 0.5))


class WelchResult(BaseModel):
    t: float
    df: float
    p_value: float
    significant: bool


def welch_t_test(sample_a, sample_b, alpha: float = SIGNIFICANCE) -> WelchResult:
    """Two-sided unequal-variance t-test with Welch-Satterthwaite degrees of freedom."""
    a = np.asarray(sample_a, dtype=np.float64)
    b = np.asarray(sample_b, dtype=np.float64)
    n_a, n_b = a.size, b.size
    if n_a < 2 or n_b < 2:
        raise InvalidInputError("each sample needs at least 2 observations")
    mean_a, mean_b = float(a.mean()), float(b.mean())
    se_a = float(a.var(ddof=1)) / n_a
    se_b = float(b.var(ddof=1)) / n_b
    se = se_a + se_b

    if se == 0.0:
        df = float(n_a + n_b - 2)
        if mean_a == mean_b:
            return WelchResult(t=0.0, df=df, p_value=1.0, significant=False)
        logger.warning(
            "Both samples have zero variance but different means (%g vs %g); p set to 0",
            mean_a,
            mean_b,
        )
        return WelchResult(
            t=math.copysign(math.inf, mean_a - mean_b), df=df, p_value=0.0, significant=True
        )

    t = (mean_a - mean_b) / math.sqrt(se)
    df = se**2 / (se_a**2 / (n_a - 1) + se_b**2 / (n_b - 1))
    p = student_t_two_sided_p(t, df)
    return WelchResult(t=t, df=df, p_value=p, significant=p < alpha)


class MetricSummary(BaseModel):
    objective: str
    mean: float
    std: float
    n: int


class AdjacentComparison(BaseModel):
    upper: str
    lower: str
    welch: WelchResult

    @property
    def marker(self) -> str:
        return "(**)" if self.welch.significant else ""


class MetricTable(BaseModel):
    metric: str
    title: str
    rows: List[MetricSummary]
    comparisons: List[AdjacentComparison]


class ComparisonReport(BaseModel):
    objectives: List[str]
    tables: List[MetricTable]
    notes: List[str] = []
    footnotes: List[str] = []

    def table(self, metric: str) -> MetricTable:
        for table in self.tables:
            if table.metric == metric:
                return table
        raise KeyError(metric)

    def summary(self, objective: str, metric: str) -> MetricSummary:
        for row in self.table(metric).rows:
            if row.objective == objective:
                return row
        raise KeyError(objective)


def aggregate(
    runs: Sequence[RunMetrics],
    expected: Optional[Sequence[str]] = None,
    footnotes: Sequence[str] = (),
) -> ComparisonReport:
    """Mean and sample std per objective and metric, sorted tables, adjacent Welch tests."""
    by_objective: Dict[str, List[RunMetrics]] = defaultdict(list)
    for run in runs:
        by_objective[run.objective].append(run)

    notes = []
    for name in expected or []:
        if name not in by_objective:
            notes.append(f"{name}: no runs recorded")
    objectives = []
    for name in sorted(by_objective):
        if len(by_objective[name]) < 2:
            notes.append(f"{name}: only {len(by_objective[name])} run(s), needs at least 2")
        else:
            objectives.append(name)

    tables = []
    for metric, title in METRICS.items():
        samples = {
            name: np.array([getattr(run, metric) for run in by_objective[name]])
            for name in objectives
        }
        rows = sorted(
            (
                MetricSummary(
                    objective=name,
                    mean=float(values.mean()),
                    std=float(values.std(ddof=1)),
                    n=int(values.size),
                )
                for name, values in samples.items()
            ),
            key=lambda row: (-row.mean, row.objective),
        )
        comparisons = [
            AdjacentComparison(
                upper=upper.objective,
                lower=lower.objective,
                welch=welch_t_test(samples[upper.objective], samples[lower.objective]),
            )
            for upper, lower in zip(rows, rows[1:])
        ]
        tables.append(
            MetricTable(metric=metric, title=title, rows=rows, comparisons=comparisons)
        )
    return ComparisonReport(
        objectives=objectives, tables=tables, notes=notes, footnotes=list(footnotes)
    )


def _percent(row: MetricSummary) -> str:
    return f"{100 * row.mean:.2f} ± {100 * row.std:.2f}"


def render_markdown(report: ComparisonReport, titles: Optional[Dict[str, str]] = None) -> str:
    """Summary table (best bold, second underlined) plus one sorted table per metric."""
    titles = titles or {}
    lines = ["# Objective comparison", ""]
    if not report.objectives:
        lines.append("No objective has enough runs to compare.")
    else:
        header = ["Objective", *METRICS.values()]
        lines.append("| " + " | ".join(header) + " |")
        lines.append("|" + "---|" * len(header))
        for objective in report.objectives:
            cells = [titles.get(objective, objective)]
            for metric in METRICS:
                table = report.table(metric)
                row = report.summary(objective, metric)
                text = _percent(row)
                position = table.rows.index(row)
                if position == 0:
                    text = f"**{text}**"
                elif position == 1:
                    text = f"<u>{text}</u>"
                cells.append(text)
            lines.append("| " + " | ".join(cells) + " |")

        for table in report.tables:
            lines += ["", f"## {table.title}", ""]
            lines.append("| Rank | Objective | Mean ± std (%) | p vs next | |")
            lines.append("|---|---|---|---|---|")
            for rank, row in enumerate(table.rows, start=1):
                comparison = table.comparisons[rank - 1] if rank <= len(table.comparisons) else None
                p_text = f"{comparison.welch.p_value:.4f}" if comparison else ""
                marker = comparison.marker if comparison else ""
                lines.append(
                    f"| {rank} | {titles.get(row.objective, row.objective)} | "
                    f"{_percent(row)} | {p_text} | {marker} |"
                )

    lines.append("")
    lines.append(
        f"(**) adjacent methods differ significantly (Welch's t-test, p < {SIGNIFICANCE})."
    )
    if report.notes:
        lines += ["", "## Notes", ""] + [f"- {note}" for note in report.notes]
    if report.footnotes:
        lines += ["", "## Failed runs", ""]
        lines += [f"[^{i}]: {text}" for i, text in enumerate(report.footnotes, start=1)]
    return "\n".join(lines) + "\n"
