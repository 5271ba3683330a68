"""The multi-level annotation scheme: types, gating, routing, derivations.

An annotation walks a fixed conditional question flow:

    Q1 attitude -> (negative?) Q2 target -> Q2a affiliation / Q2x group name
    -> Q3 strategies -> (suggestion?) Q3a violence call -> complete

Later answers are only legal when earlier answers open their gate, and a
completed record deterministically projects onto two label systems: a
binary hate-speech decision (negative + protected group + suggestion or
threat) and a four-point severity category.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

from .corpus import fold_diacritics
from .errors import (
    InsufficientRatersError,
    IntegrityError,
    RoutingError,
    UnknownGroupError,
)


class Attitude(str, enum.Enum):
    POSITIVE = "Positive"
    NEGATIVE = "Negative"
    NEUTRAL = "Neutral"


class TargetKind(str, enum.Enum):
    INDIVIDUAL = "Individual"
    GROUP = "Group"


class Strategy(str, enum.Enum):
    """The seven communicative strategies. Closed set: annotators never get
    a free-text escape hatch, so responses stay groupable."""

    DEROGATORY_TERM = "DerogatoryTerm"
    GENERALISATION = "Generalisation"
    INSULT = "Insult"
    SARCASM = "Sarcasm"
    STEREOTYPING = "Stereotyping"
    SUGGESTION = "Suggestion"
    THREAT = "Threat"


class CorteseCategory(str, enum.Enum):
    NOT_APPLICABLE = "NotApplicable"
    DISCRIMINATION_1_2 = "Discrimination12"
    INCITEMENT_HATRED = "IncitementHatred"
    INCITEMENT_VIOLENCE = "IncitementViolence"


#: Severity order used by monotonicity checks.
CORTESE_SEVERITY = {
    CorteseCategory.NOT_APPLICABLE: 0,
    CorteseCategory.DISCRIMINATION_1_2: 1,
    CorteseCategory.INCITEMENT_HATRED: 2,
    CorteseCategory.INCITEMENT_VIOLENCE: 3,
}


class DiscriminationRefinement(str, enum.Enum):
    """Aggregate-level refinement of the two lowest severity points."""

    CONSCIOUS = "Conscious"
    UNINTENTIONAL = "Unintentional"
    NOT_APPLICABLE = "NotApplicable"


class BinaryLabel(str, enum.Enum):
    HATE_SPEECH = "HateSpeech"
    NOT_HATE_SPEECH = "NotHateSpeech"


class AggregateOutcome(str, enum.Enum):
    HATE_SPEECH = "HateSpeech"
    NOT_HATE_SPEECH = "NotHateSpeech"
    ESCALATED = "Escalated"


class TieBreak(str, enum.Enum):
    NOT_HATE_SPEECH = "NotHateSpeech"
    ESCALATE = "Escalate"


class QuestionId(str, enum.Enum):
    Q1_ATTITUDE = "Q1_Attitude"
    Q2_TARGET = "Q2_Target"
    Q2A_AFFILIATION = "Q2a_Affiliation"
    Q2X_NAME_GROUP = "Q2x_NameGroup"
    Q3_STRATEGIES = "Q3_Strategies"
    Q3A_VIOLENCE = "Q3a_Violence"
    COMPLETE = "Complete"


@dataclass(frozen=True)
class Target:
    """Who a negative attitude is aimed at.

    `via_group_affiliation` is meaningful only for individuals ("is the
    individual targeted because of their affiliation to a group?"); it is
    None while Q2a is unanswered and must never be set for groups.
    """

    kind: TargetKind
    via_group_affiliation: bool | None = None

    def __post_init__(self):
        if self.kind is TargetKind.GROUP and self.via_group_affiliation is not None:
            raise ValueError("via_group_affiliation only applies to individual targets")

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "via_group_affiliation": self.via_group_affiliation}

    @classmethod
    def from_dict(cls, data: dict) -> "Target":
        return cls(
            kind=TargetKind(data["kind"]),
            via_group_affiliation=data.get("via_group_affiliation"),
        )


@dataclass(frozen=True)
class AnnotationRecord:
    """One annotator's multi-level judgment of one comment.

    Unanswered questions are None (or an empty strategy set). The gating
    invariants (see `validate`) say exactly which combinations make a
    well-formed completed record.
    """

    comment_id: str
    annotator_id: str
    attitude: Attitude | None = None
    target: Target | None = None
    group_name: str | None = None
    strategies: frozenset[Strategy] = frozenset()
    violence_call: bool | None = None
    submitted_at: str | None = None

    def group_named(self) -> bool:
        return self.group_name is not None

    def to_dict(self) -> dict:
        return {
            "comment_id": self.comment_id,
            "annotator_id": self.annotator_id,
            "attitude": self.attitude.value if self.attitude else None,
            "target": self.target.to_dict() if self.target else None,
            "group_name": self.group_name,
            "strategies": sorted(s.value for s in self.strategies),
            "violence_call": self.violence_call,
            "submitted_at": self.submitted_at,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "AnnotationRecord":
        return cls(
            comment_id=str(data["comment_id"]),
            annotator_id=str(data["annotator_id"]),
            attitude=Attitude(data["attitude"]) if data.get("attitude") else None,
            target=Target.from_dict(data["target"]) if data.get("target") else None,
            group_name=data.get("group_name"),
            strategies=frozenset(Strategy(s) for s in data.get("strategies", ())),
            violence_call=data.get("violence_call"),
            submitted_at=data.get("submitted_at"),
        )


@dataclass(frozen=True)
class GatingViolation:
    field: str
    message: str

    def to_dict(self) -> dict:
        return {"field": self.field, "message": self.message}


def _group_gate_open(record: AnnotationRecord) -> bool:
    """True when the record's target opens the name-the-group question."""
    if record.target is None:
        return False
    if record.target.kind is TargetKind.GROUP:
        return True
    return record.target.via_group_affiliation is True


def _presence_violations(record: AnnotationRecord) -> list[GatingViolation]:
    """Violations where an answer is present although its gate is closed."""
    violations = []
    if record.target is not None and record.attitude is not Attitude.NEGATIVE:
        violations.append(
            GatingViolation("target", "target present but attitude is not Negative")
        )
    if record.group_name is not None and not _group_gate_open(record):
        violations.append(
            GatingViolation(
                "group_name",
                "group_name present but target is neither a group nor an individual "
                "targeted via group affiliation",
            )
        )
    if record.strategies and record.group_name is None:
        violations.append(
            GatingViolation("strategies", "strategies present but no group was named")
        )
    if record.violence_call is not None and Strategy.SUGGESTION not in record.strategies:
        violations.append(
            GatingViolation(
                "violence_call", "violence_call present but Suggestion not among strategies"
            )
        )
    return violations


def _completeness_violations(record: AnnotationRecord) -> list[GatingViolation]:
    """Violations where an open gate was left unanswered."""
    violations = []
    if record.attitude is None:
        violations.append(GatingViolation("attitude", "attitude is required"))
    if record.attitude is Attitude.NEGATIVE and record.target is None:
        violations.append(
            GatingViolation("target", "target required when attitude is Negative")
        )
    if (
        record.target is not None
        and record.target.kind is TargetKind.INDIVIDUAL
        and record.target.via_group_affiliation is None
    ):
        violations.append(
            GatingViolation(
                "target", "via_group_affiliation required for individual targets"
            )
        )
    if _group_gate_open(record) and record.group_name is None:
        violations.append(
            GatingViolation("group_name", "group_name required for this target")
        )
    if record.group_name is not None and not record.strategies:
        violations.append(
            GatingViolation(
                "strategies", "at least one strategy required once a group is named"
            )
        )
    if Strategy.SUGGESTION in record.strategies and record.violence_call is None:
        violations.append(
            GatingViolation(
                "violence_call", "violence_call required when Suggestion is selected"
            )
        )
    return violations


def validate(record: AnnotationRecord) -> list[GatingViolation]:
    """Check all gating invariants on a completed record.

    Returns an empty list when the record is well formed; otherwise one
    violation per broken invariant, each naming the offending field:

    - target present iff attitude = Negative;
    - group_name present iff target is a group, or an individual targeted
      via group affiliation;
    - strategies non-empty iff a group was named;
    - violence_call present iff Suggestion is among the strategies.
    """
    return _presence_violations(record) + _completeness_violations(record)


def validate_prefix(record: AnnotationRecord) -> list[GatingViolation]:
    """Check a partial record: present answers must respect their gates,
    unanswered questions are fine."""
    return _presence_violations(record)


def next_question(record: AnnotationRecord) -> QuestionId:
    """Return the first unanswered question for a partial record.

    Raises RoutingError when the answered prefix itself violates gating.
    """
    problems = validate_prefix(record)
    if problems:
        raise RoutingError(
            "answered prefix violates gating: "
            + "; ".join(v.message for v in problems)
        )
    if record.attitude is None:
        return QuestionId.Q1_ATTITUDE
    if record.attitude is not Attitude.NEGATIVE:
        return QuestionId.COMPLETE
    if record.target is None:
        return QuestionId.Q2_TARGET
    if (
        record.target.kind is TargetKind.INDIVIDUAL
        and record.target.via_group_affiliation is None
    ):
        return QuestionId.Q2A_AFFILIATION
    if not _group_gate_open(record):
        return QuestionId.COMPLETE
    if record.group_name is None:
        return QuestionId.Q2X_NAME_GROUP
    if not record.strategies:
        return QuestionId.Q3_STRATEGIES
    if Strategy.SUGGESTION in record.strategies and record.violence_call is None:
        return QuestionId.Q3A_VIOLENCE
    return QuestionId.COMPLETE


def apply_answer(record: AnnotationRecord, question: QuestionId, answer) -> AnnotationRecord:
    """Apply one answer to the question currently open on `record`.

    Raises RoutingError when `question` is not the next question, and
    ValueError when the answer has the wrong shape for it.
    """
    expected = next_question(record)
    if question is not expected:
        raise RoutingError(f"expected answer for {expected.value}, got {question.value}")
    if question is QuestionId.Q1_ATTITUDE:
        return replace(record, attitude=Attitude(answer))
    if question is QuestionId.Q2_TARGET:
        return replace(record, target=Target(kind=TargetKind(answer)))
    if question is QuestionId.Q2A_AFFILIATION:
        if not isinstance(answer, bool):
            raise ValueError("Q2a expects a yes/no boolean")
        return replace(
            record, target=Target(TargetKind.INDIVIDUAL, via_group_affiliation=answer)
        )
    if question is QuestionId.Q2X_NAME_GROUP:
        name = str(answer).strip()
        if not name:
            raise ValueError("group name must be non-empty")
        return replace(record, group_name=name)
    if question is QuestionId.Q3_STRATEGIES:
        strategies = frozenset(Strategy(s) for s in answer)
        if not strategies:
            raise ValueError("select at least one strategy")
        return replace(record, strategies=strategies)
    if question is QuestionId.Q3A_VIOLENCE:
        if not isinstance(answer, bool):
            raise ValueError("Q3a expects a yes/no boolean")
        return replace(record, violence_call=answer)
    raise RoutingError("record is already complete")


# --- Protected-group registry -------------------------------------------------


def _registry_key(name: str) -> str:
    return fold_diacritics(name.strip()).casefold()


@dataclass(frozen=True)
class GroupEntry:
    canonical: str
    aliases: frozenset[str] = frozenset()
    protected: bool = False

    def keys(self) -> set[str]:
        return {_registry_key(self.canonical)} | {_registry_key(a) for a in self.aliases}


class ProtectedGroupRegistry:
    """Configurable list of group categories with a legal-protection flag.

    Lookup is trim + case-fold + diacritic-fold, over canonical names and
    aliases. Protection is jurisdiction-specific, so the registry is data,
    not code; `default_registry` mirrors the Maltese setting this tool was
    built around.
    """

    def __init__(self, entries: Iterable[GroupEntry]):
        self.entries = list(entries)
        self._index: dict[str, GroupEntry] = {}
        for entry in self.entries:
            for key in entry.keys():
                if key in self._index and self._index[key] is not entry:
                    raise ValueError(
                        f"registry name {key!r} maps to both "
                        f"{self._index[key].canonical!r} and {entry.canonical!r}"
                    )
                self._index[key] = entry

    def resolve(self, group_name: str) -> GroupEntry | None:
        return self._index.get(_registry_key(group_name))

    def names(self) -> list[str]:
        """All canonical names and aliases (autocomplete surface)."""
        out: list[str] = []
        for entry in self.entries:
            out.append(entry.canonical)
            out.extend(sorted(entry.aliases))
        return out

    def to_dict(self) -> dict:
        return {
            "entries": [
                {
                    "canonical": e.canonical,
                    "aliases": sorted(e.aliases),
                    "protected": e.protected,
                }
                for e in self.entries
            ]
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "ProtectedGroupRegistry":
        return cls(
            GroupEntry(
                canonical=str(e["canonical"]),
                aliases=frozenset(e.get("aliases", ())),
                protected=bool(e.get("protected", False)),
            )
            for e in data["entries"]
        )

    @classmethod
    def from_json(cls, text: str) -> "ProtectedGroupRegistry":
        return cls.from_dict(json.loads(text))


def default_registry() -> ProtectedGroupRegistry:
    """Registry mirroring the Maltese jurisdiction the pilot targeted."""
    return ProtectedGroupRegistry(
        [
            GroupEntry(
                "migrants",
                frozenset(
                    {
                        "migrant",
                        "immigrants",
                        "immigrant",
                        "refugees",
                        "refugee",
                        "asylum seekers",
                        "asylum seeker",
                    }
                ),
                protected=True,
            ),
            GroupEntry(
                "LGBTIQ+",
                frozenset(
                    {
                        "lgbt",
                        "lgbti",
                        "lgbtq",
                        "lgbtiq",
                        "gay people",
                        "gays",
                        "homosexuals",
                        "lesbians",
                        "transgender people",
                        "trans people",
                    }
                ),
                protected=True,
            ),
            GroupEntry(
                "religious minorities",
                frozenset({"muslims", "jews", "religious minority"}),
                protected=True,
            ),
            GroupEntry(
                "ethnic minorities",
                frozenset(
                    {"black people", "africans", "arabs", "roma", "ethnic minority"}
                ),
                protected=True,
            ),
            GroupEntry(
                "politicians",
                frozenset({"the government", "ministers", "mps", "political class"}),
                protected=False,
            ),
            GroupEntry(
                "church officials",
                frozenset({"the church", "clergy", "priests", "bishops"}),
                protected=False,
            ),
            GroupEntry(
                "the Maltese",
                frozenset({"maltese people", "locals"}),
                protected=False,
            ),
            GroupEntry(
                "employers",
                frozenset({"bosses", "businesses"}),
                protected=False,
            ),
        ]
    )


def is_protected(group_name: str, registry: ProtectedGroupRegistry) -> bool:
    """Resolve a group name and return its protection flag.

    Raises UnknownGroupError for unmatched names; an unknown group must be
    resolved by a curator, never silently treated as unprotected.
    """
    entry = registry.resolve(group_name)
    if entry is None:
        raise UnknownGroupError(group_name)
    return entry.protected


# --- Derivations ---------------------------------------------------------------


def derive_binary(record: AnnotationRecord, registry: ProtectedGroupRegistry) -> BinaryLabel:
    """Project a completed record onto the binary hate-speech label.

    Hate speech iff the attitude is negative, a group was named, that group
    is legally protected, and the strategies include a suggestion or a
    threat. Anything else (including hateful discourse against unprotected
    groups) is not hate speech.
    """
    problems = validate(record)
    if problems:
        raise IntegrityError(
            "cannot derive from an invalid record: "
            + "; ".join(v.message for v in problems)
        )
    if record.group_name is not None:
        protected = is_protected(record.group_name, registry)
    else:
        protected = False
    if (
        record.attitude is Attitude.NEGATIVE
        and record.group_name is not None
        and protected
        and (Strategy.SUGGESTION in record.strategies or Strategy.THREAT in record.strategies)
    ):
        return BinaryLabel.HATE_SPEECH
    return BinaryLabel.NOT_HATE_SPEECH


def derive_cortese(record: AnnotationRecord) -> CorteseCategory:
    """Place a completed record on the four-point severity scale.

    Priority is fixed: violence > hatred > discrimination. A threat, or a
    suggestion explicitly calling for violence, is incitement to violence;
    any other suggestion is incitement to hatred; remaining strategy picks
    (insults, derogatory terms, stereotyping, generalisations, sarcasm)
    land in the discrimination band. Records that never named a group are
    out of scope for the scale.
    """
    problems = validate(record)
    if problems:
        raise IntegrityError(
            "cannot derive from an invalid record: "
            + "; ".join(v.message for v in problems)
        )
    if record.group_name is None:
        return CorteseCategory.NOT_APPLICABLE
    if Strategy.THREAT in record.strategies or (
        Strategy.SUGGESTION in record.strategies and record.violence_call is True
    ):
        return CorteseCategory.INCITEMENT_VIOLENCE
    if Strategy.SUGGESTION in record.strategies:
        return CorteseCategory.INCITEMENT_HATRED
    return CorteseCategory.DISCRIMINATION_1_2


def classify_conscious(
    records: Sequence[AnnotationRecord], threshold: float = 2.0 / 3.0
) -> DiscriminationRefinement:
    """Split the discrimination band into conscious vs unintentional.

    Rationale: unintentional discrimination tends to go unnoticed, so the
    larger the fraction of raters who put a comment in the discrimination
    band, the more conscious the discrimination. With d = that fraction:
    d = 0 -> not applicable; d >= threshold -> conscious; else
    unintentional. Requires at least two raters.
    """
    if len(records) < 2:
        raise InsufficientRatersError(
            f"need at least 2 records to classify, got {len(records)}"
        )
    if not 0 < threshold <= 1:
        raise ValueError("threshold must be in (0, 1]")
    hits = sum(
        1 for r in records if derive_cortese(r) is CorteseCategory.DISCRIMINATION_1_2
    )
    if hits == 0:
        return DiscriminationRefinement.NOT_APPLICABLE
    fraction = hits / len(records)
    if fraction >= threshold:
        return DiscriminationRefinement.CONSCIOUS
    return DiscriminationRefinement.UNINTENTIONAL


def aggregate_binary(
    records: Sequence[AnnotationRecord],
    registry: ProtectedGroupRegistry,
    tie_break: TieBreak = TieBreak.ESCALATE,
) -> AggregateOutcome:
    """Majority vote over per-record binary labels for one comment.

    Exact ties resolve per `tie_break`: conservatively to NotHateSpeech, or
    escalated for expert adjudication (the default).
    """
    if not records:
        raise InsufficientRatersError("need at least 1 record to aggregate")
    comment_ids = {r.comment_id for r in records}
    if len(comment_ids) > 1:
        raise IntegrityError(f"records span multiple comments: {sorted(comment_ids)}")
    labels = [derive_binary(r, registry) for r in records]
    hate = sum(1 for lb in labels if lb is BinaryLabel.HATE_SPEECH)
    rest = len(labels) - hate
    if hate > rest:
        return AggregateOutcome.HATE_SPEECH
    if rest > hate:
        return AggregateOutcome.NOT_HATE_SPEECH
    if tie_break is TieBreak.NOT_HATE_SPEECH:
        return AggregateOutcome.NOT_HATE_SPEECH
    return AggregateOutcome.ESCALATED


def unresolved_groups(
    records: Iterable[AnnotationRecord], registry: ProtectedGroupRegistry
) -> list[str]:
    """Group names that need curator resolution before labels can derive."""
    missing = {
        r.group_name
        for r in records
        if r.group_name is not None and registry.resolve(r.group_name) is None
    }
    return sorted(missing)
