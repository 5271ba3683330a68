"""Experiment hub tests: balancing, task flow, reporting."""

import json

import pytest

from hieranno.corpus import Comment
from hieranno.errors import (
    AuthorizationError,
    CapacityError,
    PendingAnnotatorsError,
    RoutingError,
)
from hieranno.experiment import (
    AnnotatorProfile,
    ExperimentConfig,
    ExperimentHub,
    assign_annotator,
)
from hieranno.sampling import SampleManifest
from hieranno.scheme import default_registry
from hieranno.store import ARM_BINARY, ARM_MULTILEVEL


def profile(i, gender="female", band="21-30", consent=True):
    return AnnotatorProfile(f"ann-{i}", gender, band, consent)


def config(**kw):
    defaults = dict(
        experiment_id="exp-1",
        arm_sizes={ARM_BINARY: 2, ARM_MULTILEVEL: 2},
        genders=["female", "male"],
        age_bands=["21-30", "31-40"],
        assignment_seed=5,
        order_seed=6,
    )
    defaults.update(kw)
    return ExperimentConfig(**defaults)


class TestAssignAnnotator:
    def test_first_annotator_deterministic(self):
        cfg = config()
        first = assign_annotator(profile(1), cfg, {}, {})
        again = assign_annotator(profile(1), cfg, {}, {})
        assert first == again
        assert first in (ARM_BINARY, ARM_MULTILEVEL)

    def test_hand_evaluated_balance_example(self):
        # One female (21-30) sits in the binary arm; a new male (31-40)
        # arrives. By hand: gender and band imbalance are 2 either way, so
        # the size component decides: (2,2,1) for the empty arm beats
        # (2,2,2), no tie, no coin.
        cfg = config()
        current = {"ann-1": profile(1, "female", "21-30")}
        assignments = {"ann-1": ARM_BINARY}
        incoming = AnnotatorProfile("ann-2", "male", "31-40", True)
        assert assign_annotator(incoming, cfg, current, assignments) == ARM_MULTILEVEL

    def test_same_attribute_annotator_balances_pairwise(self):
        cfg = config()
        current = {"ann-1": profile(1, "female", "21-30")}
        assignments = {"ann-1": ARM_BINARY}
        incoming = AnnotatorProfile("ann-2", "female", "21-30", True)
        assert assign_annotator(incoming, cfg, current, assignments) == ARM_MULTILEVEL

    def test_capacity_error_when_full(self):
        cfg = config(arm_sizes={ARM_BINARY: 1, ARM_MULTILEVEL: 1})
        current = {"ann-1": profile(1), "ann-2": profile(2)}
        assignments = {"ann-1": ARM_BINARY, "ann-2": ARM_MULTILEVEL}
        with pytest.raises(CapacityError):
            assign_annotator(profile(3), cfg, current, assignments)

    def test_24_annotators_fill_both_arms_balanced(self):
        cfg = config(
            arm_sizes={ARM_BINARY: 12, ARM_MULTILEVEL: 12},
            age_bands=["21-30", "31-40", "41-50", "51-60"],
        )
        current: dict = {}
        assignments: dict = {}
        bands = ["21-30", "31-40", "41-50", "51-60"]
        for i in range(24):
            incoming = AnnotatorProfile(
                f"ann-{i}", "female" if i % 2 == 0 else "male", bands[(i // 2) % 4], True
            )
            arm = assign_annotator(incoming, cfg, current, assignments)
            current[incoming.annotator_id] = incoming
            assignments[incoming.annotator_id] = arm
        sizes = {a: list(assignments.values()).count(a) for a in (ARM_BINARY, ARM_MULTILEVEL)}
        assert sizes == {ARM_BINARY: 12, ARM_MULTILEVEL: 12}
        # Per-attribute balance: arm counts differ by at most 1.
        for attribute in ("gender", "age_band"):
            values = {getattr(p, attribute) for p in current.values()}
            for value in values:
                counts = [
                    sum(
                        1
                        for aid, arm in assignments.items()
                        if arm == a and getattr(current[aid], attribute) == value
                    )
                    for a in (ARM_BINARY, ARM_MULTILEVEL)
                ]
                assert abs(counts[0] - counts[1]) <= 1


def make_experiment(tmp_path, arm_sizes=None, items=4):
    comments = [
        Comment(
            id=f"c{i}", source="p", article_id="a", author_pseudonym=f"auth{i % 3}",
            created_at=None, text=f"comment text number {i}", deleted=False,
        )
        for i in range(items)
    ]
    manifest = SampleManifest(seed=1, strata=[("all", [c.id for c in comments])])
    cfg = config(arm_sizes=arm_sizes or {ARM_BINARY: 1, ARM_MULTILEVEL: 1})
    hub = ExperimentHub(tmp_path)
    return hub, hub.create_experiment(cfg, comments, manifest, default_registry())


def walk_multilevel(experiment, annotator_id, answers_for):
    """Drive the annotator until done, answering via `answers_for(question)`."""
    while True:
        task = experiment.next_task(annotator_id)
        if task["done"]:
            return
        answer = answers_for(task["question"])
        experiment.submit(annotator_id, task["comment_id"], task["question"], answer)


NEUTRAL_ANSWERS = {"Q1_Attitude": "Neutral"}


class TestTaskFlow:
    def test_fresh_annotator_gets_first_item_in_their_order(self, tmp_path):
        hub, exp = make_experiment(tmp_path)
        exp.register_annotator(profile(1))
        annotator = "ann-1"
        task = exp.next_task(annotator)
        assert task["done"] is False
        assert task["comment_id"] == exp.presentation_order_for(annotator)[0]
        assert "author" not in task  # bias control: author never delivered

    def test_unassigned_annotator_rejected(self, tmp_path):
        hub, exp = make_experiment(tmp_path)
        with pytest.raises(AuthorizationError):
            exp.next_task("ghost")

    def test_no_consent_no_tasks(self, tmp_path):
        hub, exp = make_experiment(tmp_path)
        with pytest.raises(AuthorizationError):
            exp.register_annotator(profile(2, consent=False))

    def test_multilevel_resume_mid_item(self, tmp_path):
        hub, exp = make_experiment(tmp_path, arm_sizes={ARM_MULTILEVEL: 1})
        exp.register_annotator(profile(1))
        task = exp.next_task("ann-1")
        assert task["question"] == "Q1_Attitude"
        exp.submit("ann-1", task["comment_id"], "Q1_Attitude", "Negative")
        resumed = exp.next_task("ann-1")
        assert resumed["comment_id"] == task["comment_id"]
        assert resumed["question"] == "Q2_Target"
        assert resumed["answered"]["attitude"] == "Negative"

    def test_reanswering_q1_restarts_the_open_item(self, tmp_path):
        # Within-item back/edit in the wizard replays from Q1; the scratch
        # partial resets, and nothing is persisted by the detour.
        hub, exp = make_experiment(tmp_path, arm_sizes={ARM_MULTILEVEL: 1})
        exp.register_annotator(profile(1))
        task = exp.next_task("ann-1")
        exp.submit("ann-1", task["comment_id"], "Q1_Attitude", "Negative")
        exp.submit("ann-1", task["comment_id"], "Q2_Target", "Group")
        assert exp.next_task("ann-1")["question"] == "Q2x_NameGroup"
        result = exp.submit("ann-1", task["comment_id"], "Q1_Attitude", "Negative")
        assert result["accepted"] is True
        assert result["next_question"] == "Q2_Target"
        assert exp.next_task("ann-1")["answered"]["target"] is None
        assert exp.store.load() == []

    def test_out_of_order_answer_is_routing_error(self, tmp_path):
        hub, exp = make_experiment(tmp_path, arm_sizes={ARM_MULTILEVEL: 1})
        exp.register_annotator(profile(1))
        task = exp.next_task("ann-1")
        with pytest.raises(RoutingError):
            exp.submit("ann-1", task["comment_id"], "Q3_Strategies", ["Insult"])

    def test_future_item_answer_is_routing_error(self, tmp_path):
        hub, exp = make_experiment(tmp_path, arm_sizes={ARM_MULTILEVEL: 1})
        exp.register_annotator(profile(1))
        order = exp.presentation_order_for("ann-1")
        with pytest.raises(RoutingError):
            exp.submit("ann-1", order[1], "Q1_Attitude", "Neutral")

    def test_binary_arm_single_question_and_done(self, tmp_path):
        hub, exp = make_experiment(tmp_path, arm_sizes={ARM_BINARY: 1}, items=3)
        exp.register_annotator(profile(1))
        for _ in range(3):
            task = exp.next_task("ann-1")
            assert task["question"] == "BinaryLabel"
            assert task["instruction"]
            exp.submit("ann-1", task["comment_id"], "BinaryLabel", "NotHateSpeech")
        assert exp.next_task("ann-1")["done"] is True

    def test_completion_persists_record(self, tmp_path):
        hub, exp = make_experiment(tmp_path, arm_sizes={ARM_MULTILEVEL: 1}, items=1)
        exp.register_annotator(profile(1))
        walk_multilevel(exp, "ann-1", lambda q: NEUTRAL_ANSWERS[q])
        events = exp.store.load()
        assert len(events) == 1
        assert events[0].payload["attitude"] == "Neutral"
        assert events[0].payload["submitted_at"] is not None

    def test_retry_of_final_answer_is_idempotent(self, tmp_path):
        hub, exp = make_experiment(tmp_path, arm_sizes={ARM_BINARY: 1}, items=1)
        exp.register_annotator(profile(1))
        task = exp.next_task("ann-1")
        exp.submit("ann-1", task["comment_id"], "BinaryLabel", "HateSpeech")
        result = exp.submit("ann-1", task["comment_id"], "BinaryLabel", "HateSpeech")
        assert result["accepted"] is True
        assert len(exp.store.load()) == 1
        with pytest.raises(RoutingError):
            exp.submit("ann-1", task["comment_id"], "BinaryLabel", "NotHateSpeech")

    def test_state_survives_reload(self, tmp_path):
        hub, exp = make_experiment(tmp_path, arm_sizes={ARM_BINARY: 1}, items=2)
        exp.register_annotator(profile(1))
        task = exp.next_task("ann-1")
        exp.submit("ann-1", task["comment_id"], "BinaryLabel", "HateSpeech")

        fresh_hub = ExperimentHub(tmp_path)
        reloaded = fresh_hub.get("exp-1")
        assert reloaded.assignments == exp.assignments
        task2 = reloaded.next_task("ann-1")
        assert task2["progress"]["completed"] == 1
        assert task2["comment_id"] == task["comment_id"] or task2["comment_id"] != task["comment_id"]
        assert task2["comment_id"] in reloaded.presentation_order_for("ann-1")


class TestReport:
    def test_pending_annotators_block_report(self, tmp_path):
        hub, exp = make_experiment(tmp_path)
        exp.register_annotator(profile(1))
        with pytest.raises(PendingAnnotatorsError) as exc:
            exp.report()
        assert exc.value.pending == ["ann-1"]

    def test_force_flags_retained(self, tmp_path):
        # ann-1 finishes everything, ann-2 only their first item: the forced
        # report keeps the fully-rated item and reports the exclusion.
        hub, exp = make_experiment(tmp_path, arm_sizes={ARM_BINARY: 2}, items=2)
        exp.register_annotator(profile(1))
        exp.register_annotator(profile(2, gender="male"))
        for _ in range(2):
            task = exp.next_task("ann-1")
            exp.submit("ann-1", task["comment_id"], "BinaryLabel", "HateSpeech")
        task = exp.next_task("ann-2")
        exp.submit("ann-2", task["comment_id"], "BinaryLabel", "HateSpeech")
        bundle = exp.report(force=True)
        assert bundle["forced"] is True
        assert bundle["pending"] == ["ann-2"]
        assert bundle["columns"]["multi-level"] is None
        detail = bundle["column_details"]["binary"]
        assert detail["retained_items"] == 1
        assert len(detail["excluded_items"]) == 1

    def test_multilevel_only_marks_binary_absent(self, tmp_path):
        hub, exp = make_experiment(tmp_path, arm_sizes={ARM_MULTILEVEL: 2}, items=2)
        exp.register_annotator(profile(1))
        exp.register_annotator(profile(2, gender="male"))
        for annotator in ("ann-1", "ann-2"):
            walk_multilevel(exp, annotator, lambda q: NEUTRAL_ANSWERS[q])
        bundle = exp.report()
        assert bundle["columns"]["binary"] is None
        table_lines = bundle["table"].splitlines()
        assert "-" in table_lines[2]

    def test_report_includes_cortese_and_aggregates(self, tmp_path):
        hub, exp = make_experiment(tmp_path, arm_sizes={ARM_MULTILEVEL: 2}, items=2)
        exp.register_annotator(profile(1))
        exp.register_annotator(profile(2, gender="male"))
        answers = {
            "Q1_Attitude": "Negative",
            "Q2_Target": "Group",
            "Q2x_NameGroup": "migrants",
            "Q3_Strategies": ["Insult"],
        }
        for annotator in ("ann-1", "ann-2"):
            walk_multilevel(exp, annotator, lambda q: answers[q])
        bundle = exp.report()
        assert bundle["cortese_distribution"]["Discrimination12"] == 4
        assert set(bundle["discrimination_refinement"].values()) == {"Conscious"}
        assert set(bundle["binary_aggregates"].values()) == {"NotHateSpeech"}

    def test_unresolved_group_blocks_report(self, tmp_path):
        hub, exp = make_experiment(tmp_path, arm_sizes={ARM_MULTILEVEL: 1}, items=1)
        exp.register_annotator(profile(1))
        answers = {
            "Q1_Attitude": "Negative",
            "Q2_Target": "Group",
            "Q2x_NameGroup": "space lizards",
            "Q3_Strategies": ["Insult"],
        }
        walk_multilevel(exp, "ann-1", lambda q: answers[q])
        from hieranno.errors import IntegrityError

        with pytest.raises(IntegrityError) as exc:
            exp.report()
        assert "space lizards" in str(exc.value)
        assert "space lizards" in exp.status()["unresolved_groups"]

    def test_isolation_task_responses_carry_no_other_labels(self, tmp_path):
        hub, exp = make_experiment(tmp_path, arm_sizes={ARM_BINARY: 2}, items=1)
        exp.register_annotator(profile(1))
        exp.register_annotator(profile(2, gender="male"))
        task = exp.next_task("ann-1")
        exp.submit("ann-1", task["comment_id"], "BinaryLabel", "HateSpeech")
        other_task = exp.next_task("ann-2")
        blob = json.dumps(other_task)
        assert "ann-1" not in blob
        assert "HateSpeech" not in blob
