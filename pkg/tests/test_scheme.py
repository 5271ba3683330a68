"""Scheme tests: gating, routing, registry lookup, label derivations."""

import itertools
import random

import pytest

from hieranno.errors import (
    InsufficientRatersError,
    IntegrityError,
    RoutingError,
    UnknownGroupError,
)
from hieranno.scheme import (
    AggregateOutcome,
    AnnotationRecord,
    Attitude,
    BinaryLabel,
    CorteseCategory,
    CORTESE_SEVERITY,
    DiscriminationRefinement,
    GroupEntry,
    ProtectedGroupRegistry,
    QuestionId,
    Strategy,
    Target,
    TargetKind,
    TieBreak,
    aggregate_binary,
    apply_answer,
    classify_conscious,
    default_registry,
    derive_binary,
    derive_cortese,
    is_protected,
    next_question,
    validate,
)

REGISTRY = ProtectedGroupRegistry(
    [
        GroupEntry("migrants", frozenset({"immigrants"}), protected=True),
        GroupEntry("politicians", frozenset(), protected=False),
    ]
)


def record(**kw):
    defaults = dict(comment_id="c1", annotator_id="a1")
    defaults.update(kw)
    return AnnotationRecord(**defaults)


def negative_group(group="migrants", strategies=(Strategy.INSULT,), violence=None):
    return record(
        attitude=Attitude.NEGATIVE,
        target=Target(TargetKind.GROUP),
        group_name=group,
        strategies=frozenset(strategies),
        violence_call=violence,
    )


class TestValidate:
    def test_positive_with_target_violates(self):
        violations = validate(record(attitude=Attitude.POSITIVE, target=Target(TargetKind.GROUP)))
        assert any(v.field == "target" for v in violations)

    def test_individual_via_affiliation_ok(self):
        rec = record(
            attitude=Attitude.NEGATIVE,
            target=Target(TargetKind.INDIVIDUAL, via_group_affiliation=True),
            group_name="migrants",
            strategies=frozenset({Strategy.DEROGATORY_TERM}),
        )
        assert validate(rec) == []

    def test_suggestion_without_violence_call_violates(self):
        rec = negative_group(strategies=(Strategy.SUGGESTION,))
        violations = validate(rec)
        assert [v.field for v in violations] == ["violence_call"]

    def test_strategies_without_group_violates(self):
        rec = record(attitude=Attitude.NEUTRAL, strategies=frozenset({Strategy.INSULT}))
        assert any(v.field == "strategies" for v in validate(rec))

    def test_negative_without_target_violates(self):
        assert any(v.field == "target" for v in validate(record(attitude=Attitude.NEGATIVE)))

    def test_group_target_without_name_violates(self):
        rec = record(attitude=Attitude.NEGATIVE, target=Target(TargetKind.GROUP))
        assert any(v.field == "group_name" for v in validate(rec))

    def test_valid_neutral(self):
        assert validate(record(attitude=Attitude.NEUTRAL)) == []

    def test_target_payload_invariant(self):
        with pytest.raises(ValueError):
            Target(TargetKind.GROUP, via_group_affiliation=True)


class TestRouting:
    def test_empty_starts_at_q1(self):
        assert next_question(record()) is QuestionId.Q1_ATTITUDE

    def test_neutral_completes(self):
        assert next_question(record(attitude=Attitude.NEUTRAL)) is QuestionId.COMPLETE

    def test_individual_without_affiliation_completes(self):
        rec = record(
            attitude=Attitude.NEGATIVE,
            target=Target(TargetKind.INDIVIDUAL, via_group_affiliation=False),
        )
        assert next_question(rec) is QuestionId.COMPLETE

    def test_full_negative_path(self):
        rec = record()
        rec = apply_answer(rec, QuestionId.Q1_ATTITUDE, "Negative")
        assert next_question(rec) is QuestionId.Q2_TARGET
        rec = apply_answer(rec, QuestionId.Q2_TARGET, "Individual")
        assert next_question(rec) is QuestionId.Q2A_AFFILIATION
        rec = apply_answer(rec, QuestionId.Q2A_AFFILIATION, True)
        assert next_question(rec) is QuestionId.Q2X_NAME_GROUP
        rec = apply_answer(rec, QuestionId.Q2X_NAME_GROUP, "migrants")
        assert next_question(rec) is QuestionId.Q3_STRATEGIES
        rec = apply_answer(rec, QuestionId.Q3_STRATEGIES, ["Suggestion", "Insult"])
        assert next_question(rec) is QuestionId.Q3A_VIOLENCE
        rec = apply_answer(rec, QuestionId.Q3A_VIOLENCE, False)
        assert next_question(rec) is QuestionId.COMPLETE
        assert validate(rec) == []

    def test_out_of_order_answer_rejected(self):
        with pytest.raises(RoutingError):
            apply_answer(record(), QuestionId.Q3_STRATEGIES, ["Insult"])

    def test_invalid_prefix_is_routing_error(self):
        broken = record(attitude=Attitude.POSITIVE, target=Target(TargetKind.GROUP))
        with pytest.raises(RoutingError):
            next_question(broken)

    def test_empty_strategy_answer_rejected(self):
        rec = record(
            attitude=Attitude.NEGATIVE,
            target=Target(TargetKind.GROUP),
            group_name="migrants",
        )
        with pytest.raises(ValueError):
            apply_answer(rec, QuestionId.Q3_STRATEGIES, [])


class TestRegistry:
    def test_protected_lookup(self):
        assert is_protected("Migrants", REGISTRY) is True

    def test_unprotected_lookup(self):
        assert is_protected("politicians", REGISTRY) is False

    def test_unknown_group_signalled(self):
        with pytest.raises(UnknownGroupError):
            is_protected("zombies", REGISTRY)

    def test_alias_and_diacritic_folding(self):
        registry = ProtectedGroupRegistry(
            [GroupEntry("Għawdxin", frozenset({"gozitans"}), protected=False)]
        )
        assert registry.resolve("għawdxin") is not None
        assert registry.resolve("GHAWDXIN") is not None
        assert registry.resolve("Gozitans") is not None

    def test_colliding_aliases_rejected(self):
        with pytest.raises(ValueError):
            ProtectedGroupRegistry(
                [
                    GroupEntry("a", frozenset({"same"}), True),
                    GroupEntry("b", frozenset({"SAME"}), False),
                ]
            )

    def test_default_registry_mirrors_jurisdiction_examples(self):
        registry = default_registry()
        assert is_protected("migrants", registry) is True
        assert is_protected("LGBTIQ+", registry) is True
        assert is_protected("politicians", registry) is False
        assert is_protected("church officials", registry) is False

    def test_json_round_trip(self):
        loaded = ProtectedGroupRegistry.from_json(REGISTRY.to_json())
        assert loaded.to_dict() == REGISTRY.to_dict()


class TestDeriveBinary:
    def test_protected_suggestion_is_hate_speech(self):
        rec = negative_group(strategies=(Strategy.SUGGESTION,), violence=False)
        assert derive_binary(rec, REGISTRY) is BinaryLabel.HATE_SPEECH

    def test_unprotected_group_is_not_hate_speech(self):
        rec = negative_group("politicians", (Strategy.INSULT, Strategy.THREAT))
        assert derive_binary(rec, REGISTRY) is BinaryLabel.NOT_HATE_SPEECH

    def test_positive_record_is_not_hate_speech(self):
        assert derive_binary(record(attitude=Attitude.POSITIVE), REGISTRY) is (
            BinaryLabel.NOT_HATE_SPEECH
        )

    def test_unknown_group_propagates(self):
        rec = negative_group("zombies")
        with pytest.raises(UnknownGroupError):
            derive_binary(rec, REGISTRY)

    def test_invalid_record_rejected(self):
        rec = record(attitude=Attitude.NEGATIVE)
        with pytest.raises(IntegrityError):
            derive_binary(rec, REGISTRY)

    def test_exhaustive_truth_table_against_independent_oracle(self):
        # Independent predicate, deliberately re-coded over raw strings.
        def oracle(attitude, group_named, protected, strategies):
            return (
                attitude == "Negative"
                and group_named
                and protected
                and ("Suggestion" in strategies or "Threat" in strategies)
            )

        checked = 0
        for rec, protected in iter_all_valid_records():
            expected = oracle(
                rec.attitude.value,
                rec.group_name is not None,
                bool(protected),
                {s.value for s in rec.strategies},
            )
            actual = derive_binary(rec, REGISTRY) is BinaryLabel.HATE_SPEECH
            assert actual == expected, rec
            checked += 1
        assert checked == 767  # 3 groupless + 2*2*(63 + 64*2) gated records


def iter_all_valid_records():
    """Every valid record shape: attitude x target variants x protected
    flag x strategy subsets x violence_call. Yields (record, protected)."""
    yield record(attitude=Attitude.POSITIVE), None
    yield record(attitude=Attitude.NEUTRAL), None
    yield record(
        attitude=Attitude.NEGATIVE,
        target=Target(TargetKind.INDIVIDUAL, via_group_affiliation=False),
    ), None
    targets = [
        Target(TargetKind.INDIVIDUAL, via_group_affiliation=True),
        Target(TargetKind.GROUP),
    ]
    groups = [("migrants", True), ("politicians", False)]
    all_strategies = list(Strategy)
    for target in targets:
        for group_name, protected in groups:
            for size in range(1, len(all_strategies) + 1):
                for subset in itertools.combinations(all_strategies, size):
                    violence_options = (
                        [True, False] if Strategy.SUGGESTION in subset else [None]
                    )
                    for violence in violence_options:
                        yield record(
                            attitude=Attitude.NEGATIVE,
                            target=target,
                            group_name=group_name,
                            strategies=frozenset(subset),
                            violence_call=violence,
                        ), protected


# Golden table: three records per severity category, patterned on the
# qualitative examples the scale was built from.
CORTESE_GOLDEN = [
    # Not applicable: no group ever named.
    (record(attitude=Attitude.POSITIVE), CorteseCategory.NOT_APPLICABLE),
    (record(attitude=Attitude.NEUTRAL), CorteseCategory.NOT_APPLICABLE),
    (
        record(
            attitude=Attitude.NEGATIVE,
            target=Target(TargetKind.INDIVIDUAL, via_group_affiliation=False),
        ),
        CorteseCategory.NOT_APPLICABLE,
    ),
    # Discrimination (points 1-2): no suggestion, no threat.
    (negative_group(strategies=(Strategy.DEROGATORY_TERM,)), CorteseCategory.DISCRIMINATION_1_2),
    (
        negative_group(strategies=(Strategy.STEREOTYPING, Strategy.GENERALISATION)),
        CorteseCategory.DISCRIMINATION_1_2,
    ),
    (
        negative_group(strategies=(Strategy.INSULT, Strategy.SARCASM)),
        CorteseCategory.DISCRIMINATION_1_2,
    ),
    # Incitement to hatred: a suggestion not calling for violence.
    (
        negative_group(strategies=(Strategy.SUGGESTION,), violence=False),
        CorteseCategory.INCITEMENT_HATRED,
    ),
    (
        negative_group(
            strategies=(Strategy.SUGGESTION, Strategy.GENERALISATION), violence=False
        ),
        CorteseCategory.INCITEMENT_HATRED,
    ),
    (
        negative_group(
            strategies=(Strategy.SUGGESTION, Strategy.STEREOTYPING), violence=False
        ),
        CorteseCategory.INCITEMENT_HATRED,
    ),
    # Incitement to violence: a threat, or a suggestion calling for violence.
    (negative_group(strategies=(Strategy.THREAT,)), CorteseCategory.INCITEMENT_VIOLENCE),
    (
        negative_group(strategies=(Strategy.SUGGESTION,), violence=True),
        CorteseCategory.INCITEMENT_VIOLENCE,
    ),
    (
        negative_group(
            strategies=(Strategy.INSULT, Strategy.THREAT)
        ),
        CorteseCategory.INCITEMENT_VIOLENCE,
    ),
]


class TestDeriveCortese:
    @pytest.mark.parametrize("rec,expected", CORTESE_GOLDEN)
    def test_golden_table(self, rec, expected):
        assert derive_cortese(rec) is expected

    def test_adding_threat_never_lowers_severity(self):
        for rec, _ in iter_all_valid_records():
            if rec.group_name is None or Strategy.THREAT in rec.strategies:
                continue
            before = CORTESE_SEVERITY[derive_cortese(rec)]
            escalated = AnnotationRecord(
                comment_id=rec.comment_id,
                annotator_id=rec.annotator_id,
                attitude=rec.attitude,
                target=rec.target,
                group_name=rec.group_name,
                strategies=rec.strategies | {Strategy.THREAT},
                violence_call=rec.violence_call,
            )
            after = CORTESE_SEVERITY[derive_cortese(escalated)]
            assert after >= before

    def test_hate_speech_implies_incitement_band(self):
        for rec, _ in iter_all_valid_records():
            if derive_binary(rec, REGISTRY) is BinaryLabel.HATE_SPEECH:
                assert derive_cortese(rec) in (
                    CorteseCategory.INCITEMENT_HATRED,
                    CorteseCategory.INCITEMENT_VIOLENCE,
                )


class TestClassifyConscious:
    def _records(self, discrimination, other):
        recs = [
            negative_group(strategies=(Strategy.INSULT,))
            for _ in range(discrimination)
        ]
        recs += [record(attitude=Attitude.POSITIVE) for _ in range(other)]
        return recs

    def test_majority_above_threshold_is_conscious(self):
        # 8/12 = 0.666... >= 2/3 exactly.
        recs = self._records(8, 4)
        assert classify_conscious(recs, 2 / 3) is DiscriminationRefinement.CONSCIOUS

    def test_zero_fraction_not_applicable(self):
        recs = self._records(0, 12)
        assert classify_conscious(recs, 2 / 3) is DiscriminationRefinement.NOT_APPLICABLE

    def test_below_threshold_unintentional(self):
        recs = self._records(4, 8)  # 1/3 < 2/3
        assert classify_conscious(recs, 2 / 3) is DiscriminationRefinement.UNINTENTIONAL

    def test_needs_two_raters(self):
        with pytest.raises(InsufficientRatersError):
            classify_conscious(self._records(1, 0))

    def test_permutation_invariant(self):
        recs = self._records(5, 7)
        rng = random.Random(3)
        for _ in range(10):
            rng.shuffle(recs)
            assert classify_conscious(recs, 0.4) is classify_conscious(
                list(reversed(recs)), 0.4
            )


class TestAggregateBinary:
    def test_majority(self):
        recs = [
            negative_group(strategies=(Strategy.THREAT,)),
            negative_group(strategies=(Strategy.THREAT,)),
            record(attitude=Attitude.POSITIVE),
        ]
        assert aggregate_binary(recs, REGISTRY) is AggregateOutcome.HATE_SPEECH

    def test_tie_break_not_hate_speech(self):
        recs = [
            negative_group(strategies=(Strategy.THREAT,)),
            record(attitude=Attitude.POSITIVE),
        ]
        outcome = aggregate_binary(recs, REGISTRY, TieBreak.NOT_HATE_SPEECH)
        assert outcome is AggregateOutcome.NOT_HATE_SPEECH

    def test_tie_break_escalate(self):
        recs = [
            negative_group(strategies=(Strategy.THREAT,)),
            record(attitude=Attitude.POSITIVE),
        ]
        assert aggregate_binary(recs, REGISTRY) is AggregateOutcome.ESCALATED

    def test_mixed_comments_rejected(self):
        recs = [
            record(attitude=Attitude.POSITIVE, comment_id="c1"),
            record(attitude=Attitude.POSITIVE, comment_id="c2"),
        ]
        with pytest.raises(IntegrityError):
            aggregate_binary(recs, REGISTRY)


class TestSerialization:
    def test_record_round_trip(self):
        rec = negative_group(strategies=(Strategy.SUGGESTION, Strategy.SARCASM), violence=True)
        assert AnnotationRecord.from_dict(rec.to_dict()) == rec

    def test_enum_wire_values(self):
        rec = negative_group(strategies=(Strategy.DEROGATORY_TERM,))
        data = rec.to_dict()
        assert data["attitude"] == "Negative"
        assert data["target"] == {"kind": "Group", "via_group_affiliation": None}
        assert data["strategies"] == ["DerogatoryTerm"]
