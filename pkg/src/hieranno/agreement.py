"""Inter-annotator agreement statistics over complete rating designs.

The three reported metrics share one observed-agreement quantity: the mean
over items of the fraction of agreeing rater pairs,

    P_i = sum_j n_ij (n_ij - 1) / (n (n - 1)),     Pbar = mean_i P_i.

Percent agreement is Pbar itself. Fleiss' kappa corrects Pbar by the
chance agreement implied by the observed category marginals
(Pe = sum_j p_j^2); Randolph's free-marginal kappa corrects by a uniform
chance term (Pe = 1/k), which is the better fit when raters have no prior
over the category distribution. Since sum_j p_j^2 >= 1/k always, Randolph
can never fall below Fleiss on the same matrix.

Unequal rater counts per item are not massaged into generalized formulas:
strict mode rejects them, drop_incomplete excludes the offending items.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import IntegrityError, MatrixError
from .scheme import (
    AnnotationRecord,
    Attitude,
    BinaryLabel,
    ProtectedGroupRegistry,
    Strategy,
    derive_binary,
)


class MatrixPolicy(str, enum.Enum):
    STRICT = "strict"
    DROP_INCOMPLETE = "drop_incomplete"


@dataclass(frozen=True)
class RatingMatrix:
    """Items x categories count table for a complete design.

    Every row sums to the constant rater count n >= 2; k >= 2 categories.
    """

    items: tuple[str, ...]
    categories: tuple[str, ...]
    counts: np.ndarray  # shape (N, k), non-negative ints
    raters_per_item: int

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.ndim != 2:
            raise MatrixError("counts must be a 2-D table")
        n_items, n_cats = counts.shape
        if n_items != len(self.items) or n_cats != len(self.categories):
            raise MatrixError("counts shape does not match items/categories")
        if n_items < 1:
            raise MatrixError("need at least one item")
        if n_cats < 2:
            raise MatrixError("need at least two categories")
        if self.raters_per_item < 2:
            raise MatrixError("need at least two raters per item")
        if (counts < 0).any():
            raise MatrixError("counts must be non-negative")
        bad = np.nonzero(counts.sum(axis=1) != self.raters_per_item)[0]
        if bad.size:
            raise MatrixError(
                "row sums must equal raters_per_item",
                items=[self.items[i] for i in bad],
            )

    @property
    def n_items(self) -> int:
        return len(self.items)


@dataclass(frozen=True)
class AgreementReport:
    """The three agreement statistics plus the design they came from."""

    percent: float
    fleiss_kappa: float | None  # None = undefined (degenerate marginals)
    randolph_kappa: float
    n: int
    N: int
    k: int
    categories: tuple[str, ...]
    marginals: tuple[float, ...]

    def to_dict(self) -> dict:
        return {
            "percent": self.percent,
            "fleiss_kappa": self.fleiss_kappa,
            "randolph_kappa": self.randolph_kappa,
            "n": self.n,
            "N": self.N,
            "k": self.k,
            "categories": list(self.categories),
            "marginals": list(self.marginals),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, sort_keys=True)


@dataclass
class BuildResult:
    matrix: RatingMatrix
    excluded_items: list[str] = field(default_factory=list)


def build_matrix(
    labels: Mapping[tuple[str, str], str],
    policy: MatrixPolicy = MatrixPolicy.STRICT,
    categories: Sequence[str] | None = None,
) -> BuildResult:
    """Turn (item, rater) -> category labels into a counts matrix.

    Categories are the declared list (in order) plus any observed labels
    not declared, appended in sorted order. The rater count per item must
    be constant: under the strict policy any item off the modal count is
    an error naming the items; under drop_incomplete those items are
    excluded and reported.
    """
    if not labels:
        raise MatrixError("no labels given")
    by_item: dict[str, dict[str, str]] = {}
    for (item, rater), category in labels.items():
        raters = by_item.setdefault(str(item), {})
        if str(rater) in raters:
            raise IntegrityError(f"duplicate label for item {item!r}, rater {rater!r}")
        raters[str(rater)] = str(category)

    observed = sorted({c for raters in by_item.values() for c in raters.values()})
    declared = [str(c) for c in categories] if categories else []
    cats = declared + [c for c in observed if c not in declared]
    if len(cats) < 2:
        raise MatrixError(
            f"need at least two categories, observed only {cats!r}; declare the "
            "full category list to build a matrix from unanimous labels"
        )

    rater_counts = [len(r) for r in by_item.values()]
    # Modal rater count; ties broken toward the larger count.
    frequency: dict[int, int] = {}
    for count in rater_counts:
        frequency[count] = frequency.get(count, 0) + 1
    mode = max(frequency, key=lambda c: (frequency[c], c))

    off_mode = sorted(i for i, r in by_item.items() if len(r) != mode)
    if off_mode and policy is MatrixPolicy.STRICT:
        raise MatrixError(
            f"items with rater count != {mode} under strict policy", items=off_mode
        )
    retained = sorted(i for i in by_item if i not in set(off_mode))
    if not retained:
        raise MatrixError("no items retained after dropping incomplete ones")

    cat_index = {c: j for j, c in enumerate(cats)}
    counts = np.zeros((len(retained), len(cats)), dtype=np.int64)
    for row, item in enumerate(retained):
        for category in by_item[item].values():
            counts[row, cat_index[category]] += 1
    matrix = RatingMatrix(
        items=tuple(retained),
        categories=tuple(cats),
        counts=counts,
        raters_per_item=mode,
    )
    return BuildResult(matrix=matrix, excluded_items=off_mode)


def _observed_agreement(m: RatingMatrix) -> float:
    counts = m.counts.astype(float)
    n = m.raters_per_item
    per_item = ((counts * counts).sum(axis=1) - n) / (n * (n - 1))
    return float(per_item.mean())


def _marginals(m: RatingMatrix) -> np.ndarray:
    counts = m.counts.astype(float)
    return counts.sum(axis=0) / (m.n_items * m.raters_per_item)


def percent_agreement(m: RatingMatrix) -> float:
    """Mean over items of the fraction of agreeing rater pairs."""
    return _observed_agreement(m)


def fleiss_kappa(m: RatingMatrix) -> float | None:
    """Fleiss' kappa; None when all ratings fall in a single category.

    The degenerate case (chance agreement Pe = 1) has no defined value and
    is signaled explicitly rather than returned as NaN or 0.
    """
    p_bar = _observed_agreement(m)
    p_e = float((_marginals(m) ** 2).sum())
    if p_e >= 1.0:
        return None
    return (p_bar - p_e) / (1.0 - p_e)


def randolph_kappa(m: RatingMatrix) -> float:
    """Free-marginal kappa with uniform chance term 1/k; always defined."""
    p_bar = _observed_agreement(m)
    p_e = 1.0 / len(m.categories)
    return (p_bar - p_e) / (1.0 - p_e)


def agreement_report(m: RatingMatrix) -> AgreementReport:
    marginals = _marginals(m)
    return AgreementReport(
        percent=percent_agreement(m),
        fleiss_kappa=fleiss_kappa(m),
        randolph_kappa=randolph_kappa(m),
        n=m.raters_per_item,
        N=m.n_items,
        k=len(m.categories),
        categories=m.categories,
        marginals=tuple(float(p) for p in marginals),
    )


# --- Level-by-level reports for the multi-level scheme --------------------------


@dataclass(frozen=True)
class LevelReport:
    """Agreement at one level of the scheme, or why it is not computable."""

    level: str
    report: AgreementReport | None
    retained_items: int
    excluded_items: tuple[str, ...] = ()
    reason: str | None = None

    @property
    def computable(self) -> bool:
        return self.report is not None

    def to_dict(self) -> dict:
        return {
            "level": self.level,
            "report": self.report.to_dict() if self.report else None,
            "retained_items": self.retained_items,
            "excluded_items": list(self.excluded_items),
            "reason": self.reason,
        }


def binary_projection(
    records: Sequence[AnnotationRecord], registry: ProtectedGroupRegistry
) -> dict[tuple[str, str], str]:
    """Per-record binary labels keyed by (comment, annotator).

    The output feeds build_matrix with the two binary categories declared.
    Unknown group names propagate as errors; resolve the registry first.
    """
    labels: dict[tuple[str, str], str] = {}
    for record in records:
        key = (record.comment_id, record.annotator_id)
        if key in labels:
            raise IntegrityError(f"duplicate record for {key}")
        labels[key] = derive_binary(record, registry).value
    return labels


BINARY_CATEGORIES = (BinaryLabel.HATE_SPEECH.value, BinaryLabel.NOT_HATE_SPEECH.value)


def _level_from_labels(
    level: str,
    labels: Mapping[tuple[str, str], str],
    categories: Sequence[str],
) -> LevelReport:
    if not labels:
        return LevelReport(level, None, 0, reason="no rater reached this level")
    try:
        built = build_matrix(labels, MatrixPolicy.DROP_INCOMPLETE, categories)
    except MatrixError as exc:
        return LevelReport(level, None, 0, reason=str(exc))
    matrix = built.matrix
    if matrix.n_items < 2:
        return LevelReport(
            level,
            None,
            matrix.n_items,
            tuple(built.excluded_items),
            reason="fewer than 2 items retained",
        )
    return LevelReport(
        level,
        agreement_report(matrix),
        matrix.n_items,
        tuple(built.excluded_items),
    )


def per_level_agreement(
    records: Sequence[AnnotationRecord], registry: ProtectedGroupRegistry
) -> list[LevelReport]:
    """Agreement reports per scheme level.

    Levels: the attitude question over everyone (k = 3); the target kind
    among raters who were asked it (k = 2); and presence/absence of each
    of the seven strategies among raters who reached the strategy question
    (k = 2 each). Gated levels keep the modal rater count per item and
    drop the rest, reporting how many items survived.
    """
    q1_labels: dict[tuple[str, str], str] = {}
    q2_labels: dict[tuple[str, str], str] = {}
    q3_answered: list[AnnotationRecord] = []
    for record in records:
        key = (record.comment_id, record.annotator_id)
        if record.attitude is not None:
            q1_labels[key] = record.attitude.value
        if record.target is not None:
            q2_labels[key] = record.target.kind.value
        if record.strategies:
            q3_answered.append(record)

    reports = [
        _level_from_labels(
            "Q1_Attitude",
            q1_labels,
            [Attitude.POSITIVE.value, Attitude.NEGATIVE.value, Attitude.NEUTRAL.value],
        ),
        _level_from_labels(
            "Q2_TargetKind", q2_labels, ["Individual", "Group"]
        ),
    ]
    for strategy in Strategy:
        labels = {
            (r.comment_id, r.annotator_id): (
                "present" if strategy in r.strategies else "absent"
            )
            for r in q3_answered
        }
        reports.append(
            _level_from_labels(f"Q3_{strategy.value}", labels, ["present", "absent"])
        )
    return reports


def render_table(
    columns: Mapping[str, AgreementReport | None], title: str | None = None
) -> str:
    """Plain-text metric table, metrics as rows and schemes as columns.

    Formatting is frozen (percent to one decimal, kappas to two) so that
    reruns with identical inputs render byte-identical reports. A missing
    column renders "-", an undefined Fleiss kappa renders "n/a".
    """
    names = list(columns)
    width = max([11] + [len(n) + 2 for n in names])

    def fmt_cell(value: str) -> str:
        return value.rjust(width)

    lines = []
    if title:
        lines.append(title)
    lines.append("Metric".ljust(14) + "".join(fmt_cell(n) for n in names))
    rows = [
        ("Percent agr.", lambda r: f"{100.0 * r.percent:.1f}%"),
        ("Fleiss' k", lambda r: "n/a" if r.fleiss_kappa is None else f"{r.fleiss_kappa:.2f}"),
        ("Randolph's k", lambda r: f"{r.randolph_kappa:.2f}"),
    ]
    for label, fmt in rows:
        cells = []
        for name in names:
            report = columns[name]
            cells.append(fmt_cell("-" if report is None else fmt(report)))
        lines.append(label.ljust(14) + "".join(cells))
    return "\n".join(lines) + "\n"
