"""Acceptance suite: one test per release criterion, at pinned tolerances.

Run with `pytest tests/test_acceptance.py -v -s` to see one PASS line per
criterion; any assertion failure is the corresponding FAIL.
"""

import itertools
import json
import random
import subprocess
import sys
import time

import numpy as np
import pytest

from hieranno.agreement import (
    RatingMatrix,
    fleiss_kappa,
    percent_agreement,
    randolph_kappa,
)
from hieranno.corpus import RawComment, anonymize_all, fold_diacritics
from hieranno.sampling import StratumSpec, presentation_order, stratified_sample
from hieranno.scheme import (
    AnnotationRecord,
    Attitude,
    BinaryLabel,
    GroupEntry,
    ProtectedGroupRegistry,
    QuestionId,
    Strategy,
    Target,
    TargetKind,
    apply_answer,
    derive_binary,
    next_question,
    validate,
)
from hieranno.simulate import simulate_pilot
from hieranno.store import EventStore, export_dataset, import_dataset

TOL = 1e-12

REGISTRY = ProtectedGroupRegistry(
    [
        GroupEntry("migrants", frozenset(), protected=True),
        GroupEntry("politicians", frozenset(), protected=False),
    ]
)


def ok(line: str) -> None:
    print(f"PASS: {line}")


# --- criterion: scheme truth table ----------------------------------------------


def iter_valid_records():
    base = dict(comment_id="c", annotator_id="a")
    yield AnnotationRecord(**base, attitude=Attitude.POSITIVE), None
    yield AnnotationRecord(**base, attitude=Attitude.NEUTRAL), None
    yield AnnotationRecord(
        **base,
        attitude=Attitude.NEGATIVE,
        target=Target(TargetKind.INDIVIDUAL, via_group_affiliation=False),
    ), None
    targets = [
        Target(TargetKind.INDIVIDUAL, via_group_affiliation=True),
        Target(TargetKind.GROUP),
    ]
    for target in targets:
        for group, protected in (("migrants", True), ("politicians", False)):
            for size in range(1, 8):
                for subset in itertools.combinations(list(Strategy), size):
                    for violence in (
                        (True, False) if Strategy.SUGGESTION in subset else (None,)
                    ):
                        yield AnnotationRecord(
                            **base,
                            attitude=Attitude.NEGATIVE,
                            target=target,
                            group_name=group,
                            strategies=frozenset(subset),
                            violence_call=violence,
                        ), protected


def test_acceptance_scheme_truth_table():
    # Independent oracle, re-coded over plain strings on purpose.
    def oracle(attitude, group_named, protected, strategies):
        return (
            attitude == "Negative"
            and group_named
            and bool(protected)
            and ("Suggestion" in strategies or "Threat" in strategies)
        )

    started = time.perf_counter()
    checked = 0
    for record, protected in iter_valid_records():
        assert validate(record) == []
        expected = oracle(
            record.attitude.value,
            record.group_name is not None,
            protected,
            {s.value for s in record.strategies},
        )
        assert (derive_binary(record, REGISTRY) is BinaryLabel.HATE_SPEECH) == expected
        checked += 1
    elapsed = time.perf_counter() - started
    assert checked == 767
    assert elapsed < 1.0, f"truth table took {elapsed:.3f}s"
    ok(f"scheme truth table matched the independent predicate on {checked}/767 "
       f"valid records in {elapsed:.3f}s (< 1s)")


# --- criterion: Cortese derivation golden table ----------------------------------


def test_acceptance_cortese_golden_table():
    from test_scheme import CORTESE_GOLDEN  # the 12-case table, 3 per category
    from hieranno.scheme import derive_cortese

    assert len(CORTESE_GOLDEN) == 12
    categories = {}
    matches = 0
    for record, expected in CORTESE_GOLDEN:
        assert derive_cortese(record) is expected
        categories[expected.value] = categories.get(expected.value, 0) + 1
        matches += 1
    assert set(categories.values()) == {3}  # three cases per category
    ok(f"severity-scale derivation matched all {matches}/12 golden cases")


# --- criterion: agreement metrics on the hand-derived fixture --------------------


def _matrix(rows, cats=("A", "B")):
    counts = np.asarray(rows, dtype=np.int64)
    return RatingMatrix(
        items=tuple(f"i{r}" for r in range(counts.shape[0])),
        categories=tuple(cats),
        counts=counts,
        raters_per_item=int(counts[0].sum()),
    )


def test_acceptance_agreement_fixture_values():
    fixture = _matrix([[3, 0], [2, 1]])
    assert percent_agreement(fixture) == pytest.approx(2 / 3, abs=TOL)
    assert fleiss_kappa(fixture) == pytest.approx(-0.2, abs=TOL)
    assert randolph_kappa(fixture) == pytest.approx(1 / 3, abs=TOL)

    perfect = _matrix([[3, 0], [0, 3]])
    assert percent_agreement(perfect) == 1.0
    assert fleiss_kappa(perfect) == 1.0
    assert randolph_kappa(perfect) == 1.0

    degenerate = _matrix([[3, 0], [3, 0]])
    assert fleiss_kappa(degenerate) is None  # signaled undefined, never NaN
    ok("agreement fixture: percent 2/3, Fleiss -0.2, Randolph 1/3 within 1e-12; "
       "perfect matrices 1.0; degenerate Fleiss signaled undefined")


# --- criterion: metric ordering + invariance over 1,000 random matrices ----------


def test_acceptance_metric_ordering_property():
    rng = random.Random(77)
    checked = 0
    while checked < 1000:
        n_items = rng.randint(2, 10)
        k = rng.randint(2, 5)
        n_raters = rng.randint(2, 8)
        rows = []
        for _ in range(n_items):
            counts = [0] * k
            for _ in range(n_raters):
                counts[rng.randrange(k)] += 1
            rows.append(counts)
        m = _matrix(rows, cats=[f"c{j}" for j in range(k)])
        if percent_agreement(m) >= 1.0:
            continue
        fleiss = fleiss_kappa(m)
        assert fleiss is not None
        assert randolph_kappa(m) >= fleiss - TOL

        perm = list(range(k))
        rng.shuffle(perm)
        permuted = RatingMatrix(
            items=m.items,
            categories=tuple(m.categories[j] for j in perm),
            counts=m.counts[:, perm],
            raters_per_item=m.raters_per_item,
        )
        assert percent_agreement(permuted) == pytest.approx(percent_agreement(m), abs=TOL)
        assert fleiss_kappa(permuted) == pytest.approx(fleiss, abs=TOL)
        assert randolph_kappa(permuted) == pytest.approx(randolph_kappa(m), abs=TOL)

        doubled = RatingMatrix(
            items=tuple([f"{i}x" for i in m.items] + [f"{i}y" for i in m.items]),
            categories=m.categories,
            counts=np.vstack([m.counts, m.counts]),
            raters_per_item=m.raters_per_item,
        )
        assert percent_agreement(doubled) == pytest.approx(percent_agreement(m), abs=TOL)
        assert fleiss_kappa(doubled) == pytest.approx(fleiss, abs=TOL)
        assert randolph_kappa(doubled) == pytest.approx(randolph_kappa(m), abs=TOL)
        checked += 1
    ok("Randolph >= Fleiss plus label-permutation and item-duplication "
       "invariance held on all 1,000 random matrices with observed agreement < 1")


# --- criterion: end-to-end pilot simulation (Table 1 substitute) ------------------


def test_acceptance_pilot_simulation_reproducible(tmp_path):
    started = time.perf_counter()
    first = simulate_pilot(tmp_path / "run1", seed=2020)
    elapsed = time.perf_counter() - started
    assert elapsed < 10.0, f"simulation took {elapsed:.2f}s"

    arms = first["arms_assigned"]
    assert len(arms["binary"]) == 12 and len(arms["multilevel"]) == 12
    assert first["columns"]["binary"]["N"] == 15  # 5 strata x 3
    assert first["columns"]["binary"]["n"] == 12
    assert first["columns"]["multi-level"]["N"] == 15

    lines = first["table"].splitlines()
    assert lines[1].split() == ["Metric", "binary", "multi-level"]
    assert lines[2].startswith("Percent agr.") and lines[2].rstrip().endswith("%")
    assert lines[3].startswith("Fleiss' k")
    assert lines[4].startswith("Randolph's k")

    second = simulate_pilot(tmp_path / "run2", seed=2020)
    assert json.dumps(first, sort_keys=True) == json.dumps(second, sort_keys=True)

    script = (
        "import json, sys, tempfile\n"
        "from hieranno.simulate import simulate_pilot\n"
        "with tempfile.TemporaryDirectory() as d:\n"
        "    sys.stdout.write(simulate_pilot(d, seed=2020)['table'])\n"
    )
    out = subprocess.run(
        [sys.executable, "-c", script], capture_output=True, text=True, check=True
    ).stdout
    assert out == first["table"]
    ok(f"seeded 24-annotator pilot ran end to end in {elapsed:.2f}s (< 10s); "
       "rerun and cross-process report bytes identical; table in the "
       "metric-rows x scheme-columns layout")


# --- criterion: routing soundness -------------------------------------------------


def _random_answer(question: QuestionId, rng: random.Random):
    if question is QuestionId.Q1_ATTITUDE:
        return rng.choice(["Positive", "Negative", "Neutral"])
    if question is QuestionId.Q2_TARGET:
        return rng.choice(["Individual", "Group"])
    if question is QuestionId.Q2A_AFFILIATION:
        return rng.random() < 0.5
    if question is QuestionId.Q2X_NAME_GROUP:
        return rng.choice(["migrants", "politicians", "neighbours from the north"])
    if question is QuestionId.Q3_STRATEGIES:
        names = [s.value for s in Strategy]
        size = rng.randint(1, len(names))
        return rng.sample(names, size)
    if question is QuestionId.Q3A_VIOLENCE:
        return rng.random() < 0.5
    raise AssertionError(question)


def _random_walk(rng: random.Random) -> AnnotationRecord:
    record = AnnotationRecord(comment_id="c", annotator_id="a")
    for _ in range(10):
        question = next_question(record)
        if question is QuestionId.COMPLETE:
            return record
        record = apply_answer(record, question, _random_answer(question, rng))
    raise AssertionError("walk did not terminate within the question budget")


def _mutate(record: AnnotationRecord, rng: random.Random) -> AnnotationRecord:
    field = rng.choice(["attitude", "target", "group_name", "strategies", "violence_call"])
    data = record.to_dict()
    if field == "attitude":
        data["attitude"] = rng.choice(["Positive", "Negative", "Neutral", None])
    elif field == "target":
        data["target"] = rng.choice(
            [
                None,
                {"kind": "Group", "via_group_affiliation": None},
                {"kind": "Individual", "via_group_affiliation": True},
                {"kind": "Individual", "via_group_affiliation": False},
                {"kind": "Individual", "via_group_affiliation": None},
            ]
        )
    elif field == "group_name":
        data["group_name"] = rng.choice([None, "migrants", "somebody else"])
    elif field == "strategies":
        names = [s.value for s in Strategy]
        data["strategies"] = rng.sample(names, rng.randint(0, len(names)))
    else:
        data["violence_call"] = rng.choice([None, True, False])
    return AnnotationRecord.from_dict(data)


def test_acceptance_routing_soundness():
    rng = random.Random(4242)
    for _ in range(10_000):
        record = _random_walk(rng)
        assert validate(record) == []

    valid_pool = [_random_walk(rng) for _ in range(200)]
    still_valid = 0
    rejected = 0
    for _ in range(10_000):
        mutated = _mutate(rng.choice(valid_pool), rng)
        violations = validate(mutated)
        if violations:
            rejected += 1
            assert all(v.field and v.message for v in violations)
        else:
            still_valid += 1
    assert still_valid + rejected == 10_000
    ok(f"10,000 random walks all completed with valid records; 10,000 mutations "
       f"split into {still_valid} still-valid / {rejected} rejected with named "
       "violations")


# --- criterion: corpus pipeline ----------------------------------------------------


MALTESE_ALPHABET = "abċdefġgħhijklmnopqrstuvwxżzABĊDEFĠGĦHIJKLMNOPQRSTUVWXŻZ għĦ"


def test_acceptance_corpus_pipeline(tmp_path):
    rng = random.Random(55)
    for _ in range(1000):
        text = "".join(rng.choice(MALTESE_ALPHABET) for _ in range(rng.randint(0, 50)))
        folded = fold_diacritics(text)
        assert fold_diacritics(folded) == folded
        assert len(folded) == len(text)

    assert "gharb" in fold_diacritics("minn Għarb").casefold()

    usernames = ["alice", "bob_malta", "carmen99", "dee"]
    raws = [
        RawComment(
            id=f"c{i}",
            text=f"reply to @{usernames[(i + 1) % 4]}: {usernames[(i + 2) % 4]} said it, "
            "u dak kollu",
            author=usernames[i % 4],
        )
        for i in range(20)
    ]
    anonymized = anonymize_all(raws, b"acceptance-salt")
    for comment in anonymized:
        for username in usernames:
            assert username not in comment.text
            assert username != comment.author_pseudonym

    sim_dir = tmp_path / "pilot"
    simulate_pilot(sim_dir, seed=99)
    store_path = sim_dir / "experiments" / "pilot-sim" / "store.jsonl"
    store = EventStore(store_path)
    assert len(store) == 24 * 15
    from hieranno.scheme import default_registry

    export_dataset(store, default_registry(), tmp_path / "export")
    imported, warnings = import_dataset(tmp_path / "export", tmp_path / "reimport.jsonl")
    assert warnings == []
    assert [e.to_dict() for e in imported.load(latest_only=True)] == [
        e.to_dict() for e in store.load(latest_only=True)
    ]
    ok("corpus pipeline: folding idempotent and length-preserving on 1,000 random "
       "strings; 'Għarb' matches query 'gharb'; totality scan found zero raw "
       "usernames; export -> import round trip preserved the pilot store")


# --- criterion: sampling ------------------------------------------------------------


def test_acceptance_sampling():
    strata = [
        StratumSpec(
            label=f"stratum-{j}",
            member_ids=frozenset(f"s{j}-item-{i}" for i in range(8)),
            take=3,
        )
        for j in range(5)
    ]
    manifest = stratified_sample(strata, seed=31)
    assert len(manifest.selected_ids()) == 15
    assert len(set(manifest.selected_ids())) == 15

    script = (
        "from hieranno.sampling import StratumSpec, stratified_sample\n"
        "strata = [StratumSpec(label=f'stratum-{j}', member_ids=frozenset("
        "f's{j}-item-{i}' for i in range(8)), take=3) for j in range(5)]\n"
        "print(stratified_sample(strata, seed=31).to_json())\n"
    )
    outputs = [
        subprocess.run(
            [sys.executable, "-c", script], capture_output=True, text=True, check=True
        ).stdout
        for _ in range(2)
    ]
    assert outputs[0] == outputs[1] == manifest.to_json() + "\n"

    author_of = {i: f"author-{hash(i) % 4}" for i in manifest.selected_ids()}
    order = presentation_order(manifest, "acceptance-annotator", author_of, seed=31)
    assert sorted(order.items) == sorted(manifest.selected_ids())
    if not order.author_adjacent:
        for a, b in zip(order.items, order.items[1:]):
            assert author_of[a] != author_of[b]
    ok("sampling: 5 strata x take 3 selected exactly 15 items; two separate "
       "processes reproduced the manifest byte-identically; adjacency scan "
       "verified the author-separation constraint")
