"""Seeded end-to-end pilot simulation.

Builds a synthetic comment corpus (licensing keeps the real one out of the
repo), runs the full pipeline — ingest, anonymize, stratified sample,
two-arm experiment with 24 balanced synthetic annotators, annotation via
the same code paths real clients use, report — and returns the report
bundle. Every choice is keyed off the seed through SHA-256, so two runs
with the same seed produce byte-identical reports anywhere.

Annotator behavior is a noise model around each comment's latent truth
profile: multi-level raters answer each question from a perturbed view of
the truth; binary raters make one noisier end-to-end judgment. The noise
rates are picked so the simulated pilot shows the direction the scheme is
designed for (higher agreement through the multi-level route), not to
reproduce any particular published numbers.
"""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass
from pathlib import Path

from . import corpus, sampling, scheme, store
from .experiment import AnnotatorProfile, ExperimentConfig, ExperimentHub

STRATA = (
    "incitement-violence",
    "discriminatory-no-incitement",
    "negative-other-target",
    "positive",
    "ambiguous",
)

_AUTHORS = (
    "seabreeze", "tal-qalb", "gbexx", "malta4ever", "blueRockPool",
    "farmhand77", "xemx_u_xita", "harbourwatch", "pjazza", "redgrouper",
)

# Template texts per stratum. Mild synthetic stand-ins: the labels in the
# simulation come from the truth profiles below, not from the wording.
_TEXTS = {
    "incitement-violence": [
        "Round them up and put them back on the boats tonight, by force if needed.",
        "Somebody should burn that camp down before it grows any bigger.",
        "If they will not leave, make them leave. Whatever it takes.",
        "Push every single one of them back into the sea where they came from.",
        "Time to take matters into our own hands, ħbieb, and clear them out.",
        "They should be dumped in the desert and left there, żgur.",
        "Next time the patrol boat should just look away and let them sink.",
        "We march on the open centre Saturday and shut it for good.",
        "Send the army in and drag them out, house by house.",
    ],
    "discriminatory-no-incitement": [
        "These people breed like rabbits and live off our taxes, kollha.",
        "You can't trust a single one of them, it is in their culture.",
        "Malta is full. The illegals take the jobs and the benefits, sewwa?",
        "They come here with their diseases and their habits, mhux sew.",
        "Another day another story about them. Typical of that lot, ta.",
        "Our village festa ruined again by these invaders and their noise.",
        "Of course the crime rate went up, look who moved in down the road.",
        "They will never integrate, għax they do not want to. Simple as that.",
        "Half of them are not even real refugees, just freeloaders, żgur mija.",
    ],
    "negative-other-target": [
        "Our politicians are a disgrace, all snouts in the trough as usual.",
        "@seabreeze you clearly have no idea what you are talking about, sad little man.",
        "The church should stay out of politics once and for all, il-vera.",
        "Typical government stunt, announce it twice and deliver nothing.",
        "I hope you are trolling @farmhand77, because otherwise you are beyond help.",
        "The employers hiring illegally are the real problem here, mhux?",
        "Shame on the minister and shame on the whole cabinet, ta vera.",
        "You sir are a pompous fool and your blog is rubbish.",
        "The planning authority strikes again. Corrupt from top to bottom.",
    ],
    "positive": [
        "Proset to the volunteers helping the newcomers settle in, prosit ħafna!",
        "Lovely to see the kids from the centre playing with ours at the festa.",
        "These families fled war, the least we can do is show some kindness.",
        "Great initiative by the parish, welcoming one and all, grazzi!",
        "My neighbour from Somalia fixed my roof for free. Good people, żgur.",
        "Happy to see the new community garden bringing everyone together.",
        "Respect to the teachers running the language classes every evening.",
        "The integration football league was a joy to watch this weekend, prosit.",
        "Welcome to Malta, ħbieb. There is room at our table.",
    ],
    "ambiguous": [
        "For God's sake make the process simpler so she can be with her daughter.",
        "Interesting that the statistics only count some of the arrivals, mhux hekk?",
        "Swans mate for life, male and female. Just saying what nature does.",
        "Għawdex stays quiet in winter. Maybe too quiet for some people now.",
        "We need to teach children respect for everyone, however complicated it gets.",
        "In four more days we will be the minority, so the joke goes, ħi.",
        "Charity begins at home, as my nanna used to say. Make of that what you will.",
        "Will Malta eventually become the New Caliphate? Asking for a friend.",
        "They are human like us, imma a country has limits too, le?",
    ],
}

_PROTECTED_TRUTH_GROUP = "migrants"
_UNPROTECTED_TRUTH_GROUP = "politicians"


@dataclass(frozen=True)
class TruthProfile:
    """Latent ground truth a synthetic rater perceives through noise."""

    stratum: str
    attitude: str
    target_kind: str | None = None
    affiliation: bool | None = None
    group: str | None = None
    strategies: tuple[str, ...] = ()
    violence: bool | None = None
    ambiguous: bool = False


def _truth_for(stratum: str, index: int) -> TruthProfile:
    if stratum == "incitement-violence":
        if index % 3 == 0:
            strategies: tuple[str, ...] = ("Threat",)
            violence = None
        else:
            strategies = ("Suggestion",)
            violence = True
        return TruthProfile(
            stratum, "Negative", "Group", None, _PROTECTED_TRUTH_GROUP, strategies, violence
        )
    if stratum == "discriminatory-no-incitement":
        pool = ("DerogatoryTerm", "Generalisation", "Stereotyping", "Insult")
        strategies = (pool[index % 4],) if index % 2 == 0 else (
            pool[index % 4],
            pool[(index + 1) % 4],
        )
        return TruthProfile(
            stratum, "Negative", "Group", None, _PROTECTED_TRUTH_GROUP, strategies, None
        )
    if stratum == "negative-other-target":
        if index % 2 == 0:
            return TruthProfile(stratum, "Negative", "Individual", False)
        return TruthProfile(
            stratum, "Negative", "Group", None, _UNPROTECTED_TRUTH_GROUP, ("Insult",), None
        )
    if stratum == "positive":
        return TruthProfile(stratum, "Positive")
    return TruthProfile(
        stratum,
        "Negative",
        "Group",
        None,
        _PROTECTED_TRUTH_GROUP,
        ("Stereotyping",),
        None,
        ambiguous=True,
    )


def synthetic_raw_records(seed: int) -> tuple[list[dict], dict[str, TruthProfile]]:
    """The synthetic corpus as raw ingest records plus truth by comment id.

    Ids are content-derived (the ingest's derivable key), so the truth map
    is keyed the same way the pipeline will key the comments.
    """
    records = []
    truths: dict[str, TruthProfile] = {}
    counter = 0
    for stratum in STRATA:
        for index, text in enumerate(_TEXTS[stratum]):
            author = _AUTHORS[(counter * 3 + index) % len(_AUTHORS)]
            record = {
                "source": "synthetic-portal",
                "article_id": f"art-{counter % 7}",
                "author": author,
                "text": text,
                "created_at": f"2016-01-{(counter % 28) + 1:02d}T12:00:00Z",
                "deleted": stratum == "incitement-violence" and index % 4 == 0,
                "language": "mixed" if any(ch in text for ch in "ħġżċĦĠŻĊ") else "en",
            }
            digest = hashlib.sha256(
                "\x1f".join(
                    (record["source"], record["article_id"], author, text)
                ).encode("utf-8")
            ).hexdigest()
            truths[f"c{digest[:12]}"] = _truth_for(stratum, index)
            records.append(record)
            counter += 1
    return records, truths


def _rng(seed: int, *context) -> random.Random:
    material = "\x1f".join(str(p) for p in (seed, *context)).encode("utf-8")
    digest = hashlib.sha256(material).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


_STRATEGY_VALUES = tuple(s.value for s in scheme.Strategy)
_DISCRIMINATION_POOL = ("DerogatoryTerm", "Generalisation", "Insult", "Sarcasm", "Stereotyping")


class MultiLevelRater:
    """Answers whatever question the service asks, from a noisy truth view."""

    def __init__(self, seed: int, annotator_id: str, truths: dict[str, TruthProfile]):
        self.seed = seed
        self.annotator_id = annotator_id
        self.truths = truths

    def _view(self, comment_id: str) -> TruthProfile:
        truth = self.truths[comment_id]
        rng = _rng(self.seed, "view", self.annotator_id, comment_id)
        attitude = truth.attitude
        if truth.ambiguous:
            attitude = rng.choices(
                ["Negative", "Positive", "Neutral"], weights=[5, 3, 2]
            )[0]
        elif rng.random() < 0.10:
            attitude = rng.choice(["Positive", "Negative", "Neutral"])
        target_kind = truth.target_kind or "Group"
        if attitude == "Negative" and rng.random() < 0.08:
            target_kind = "Individual" if target_kind == "Group" else "Group"
        affiliation = truth.affiliation
        if affiliation is None:
            affiliation = target_kind == "Individual" and truth.group is not None
        if rng.random() < 0.05:
            affiliation = not affiliation
        group = truth.group or _PROTECTED_TRUTH_GROUP
        if rng.random() < 0.05:
            group = rng.choice([_PROTECTED_TRUTH_GROUP, _UNPROTECTED_TRUTH_GROUP, "LGBTIQ+"])
        strategies = set(truth.strategies) or {"Insult"}
        for candidate in _DISCRIMINATION_POOL:
            if rng.random() < 0.10:
                strategies.symmetric_difference_update({candidate})
        if rng.random() < 0.07:
            strategies.symmetric_difference_update({"Suggestion"})
        if rng.random() < 0.05:
            strategies.symmetric_difference_update({"Threat"})
        if not strategies:
            strategies = {rng.choice(_DISCRIMINATION_POOL)}
        violence = truth.violence if truth.violence is not None else False
        if rng.random() < 0.06:
            violence = not violence
        return TruthProfile(
            truth.stratum,
            attitude,
            target_kind,
            affiliation,
            group,
            tuple(sorted(strategies)),
            violence,
        )

    def answer(self, comment_id: str, question: str):
        view = self._view(comment_id)
        if question == "Q1_Attitude":
            return view.attitude
        if question == "Q2_Target":
            return view.target_kind
        if question == "Q2a_Affiliation":
            return bool(view.affiliation)
        if question == "Q2x_NameGroup":
            return view.group
        if question == "Q3_Strategies":
            return list(view.strategies)
        if question == "Q3a_Violence":
            return bool(view.violence)
        raise ValueError(f"unexpected question {question!r}")


class BinaryRater:
    """One noisy end-to-end hate-speech judgment per comment."""

    def __init__(self, seed: int, annotator_id: str, truths: dict[str, TruthProfile]):
        self.seed = seed
        self.annotator_id = annotator_id
        self.truths = truths

    def answer(self, comment_id: str) -> str:
        truth = self.truths[comment_id]
        rng = _rng(self.seed, "binary", self.annotator_id, comment_id)
        if truth.ambiguous:
            hate = rng.random() < 0.5
        else:
            hate = (
                truth.attitude == "Negative"
                and truth.group == _PROTECTED_TRUTH_GROUP
                and any(s in ("Suggestion", "Threat") for s in truth.strategies)
            )
            # Binary raters see no scaffolding questions: noisier judgment.
            if rng.random() < 0.15:
                hate = not hate
        return "HateSpeech" if hate else "NotHateSpeech"


def _profiles(count: int = 24) -> list[AnnotatorProfile]:
    bands = ("21-30", "31-40", "41-50", "51-60")
    profiles = []
    for i in range(count):
        profiles.append(
            AnnotatorProfile(
                annotator_id=f"ann-{i + 1:02d}",
                gender="female" if i % 2 == 0 else "male",
                age_band=bands[(i // 2) % len(bands)],
                consent=True,
            )
        )
    return profiles


def simulate_pilot(
    data_dir: str | Path,
    seed: int = 2020,
    experiment_id: str = "pilot-sim",
    take_per_stratum: int = 3,
    annotators: int = 24,
) -> dict:
    """Run the whole two-arm pilot on synthetic data; returns the report.

    Layout of the run mirrors the pilot design the scheme was built for:
    five strata sampled `take_per_stratum` each, two gender- and
    age-balanced arms, every annotator seeing all items in their own
    seeded order.
    """
    data_dir = Path(data_dir)
    records, truths = synthetic_raw_records(seed)
    lines = (json.dumps(r, ensure_ascii=False) for r in records)
    raw_comments, ingest_report = corpus.ingest(lines, format="jsonl")
    salt = hashlib.sha256(f"pilot-salt\x1f{seed}".encode("utf-8")).digest()
    comments = corpus.anonymize_all(raw_comments, salt, ingest_report.usernames)

    members: dict[str, set[str]] = {label: set() for label in STRATA}
    for comment in comments:
        members[truths[comment.id].stratum].add(comment.id)
    strata = [
        sampling.StratumSpec(label, frozenset(members[label]), take_per_stratum)
        for label in STRATA
    ]
    manifest = sampling.stratified_sample(strata, seed)

    per_arm = annotators // 2
    config = ExperimentConfig(
        experiment_id=experiment_id,
        arm_sizes={store.ARM_BINARY: per_arm, store.ARM_MULTILEVEL: annotators - per_arm},
        genders=["female", "male"],
        age_bands=["21-30", "31-40", "41-50", "51-60"],
        assignment_seed=seed + 1,
        order_seed=seed + 2,
    )

    tick = {"count": 0}

    def clock() -> str:  # deterministic timestamps keep reruns byte-identical
        tick["count"] += 1
        minutes, seconds = divmod(tick["count"], 60)
        hours, minutes = divmod(minutes, 60)
        return f"2020-05-01T{hours:02d}:{minutes:02d}:{seconds:02d}Z"

    hub = ExperimentHub(data_dir, clock=clock)
    experiment = hub.create_experiment(
        config, comments, manifest, scheme.default_registry()
    )

    arms: dict[str, str] = {}
    for profile in _profiles(annotators):
        arms[profile.annotator_id] = experiment.register_annotator(profile)

    for annotator_id, arm in arms.items():
        ml_rater = MultiLevelRater(seed, annotator_id, truths)
        b_rater = BinaryRater(seed, annotator_id, truths)
        while True:
            task = experiment.next_task(annotator_id)
            if task["done"]:
                break
            if arm == store.ARM_BINARY:
                answer = b_rater.answer(task["comment_id"])
            else:
                answer = ml_rater.answer(task["comment_id"], task["question"])
            experiment.submit(
                annotator_id, task["comment_id"], task["question"], answer
            )

    bundle = experiment.report()
    bundle["ingest"] = {
        "accepted": ingest_report.accepted,
        "duplicates": ingest_report.duplicates,
        "malformed": ingest_report.malformed,
    }
    bundle["arms_assigned"] = {
        arm: sorted(a for a, x in arms.items() if x == arm) for arm in set(arms.values())
    }
    return bundle
