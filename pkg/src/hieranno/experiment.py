"""Two-arm pilot experiment management: setup, assignment, tasks, reports.

One `ExperimentHub` owns a data directory with one subdirectory per
experiment (config, items, manifest, registry, profiles, event log). The
HTTP service and the CLI are both thin fronts over this class, so
validation lives in exactly one place. All mutating entry points take the
experiment lock: appends are globally serialized and per-annotator task
state never interleaves.
"""

from __future__ import annotations

import hashlib
import json
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from . import agreement, sampling, scheme, store
from .corpus import Comment
from .errors import (
    AuthorizationError,
    CapacityError,
    IntegrityError,
    PendingAnnotatorsError,
    RoutingError,
)

ARMS = (store.ARM_BINARY, store.ARM_MULTILEVEL)

DEFAULT_BINARY_INSTRUCTION = (
    "Label the comment as hate speech or not hate speech, applying the "
    "definition of hate speech used by your jurisdiction's criminal code. "
    "Replace this instruction text with the exact legal wording for your "
    "deployment."
)


@dataclass(frozen=True)
class AnnotatorProfile:
    annotator_id: str
    gender: str
    age_band: str
    consent: bool

    def to_dict(self) -> dict:
        return {
            "annotator_id": self.annotator_id,
            "gender": self.gender,
            "age_band": self.age_band,
            "consent": self.consent,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "AnnotatorProfile":
        return cls(
            annotator_id=str(data["annotator_id"]),
            gender=str(data["gender"]),
            age_band=str(data["age_band"]),
            consent=bool(data["consent"]),
        )


@dataclass
class ExperimentConfig:
    """Static parameters of one pilot experiment."""

    experiment_id: str
    arm_sizes: dict[str, int]
    genders: list[str]
    age_bands: list[str]
    conscious_threshold: float = 2.0 / 3.0
    tie_break: scheme.TieBreak = scheme.TieBreak.ESCALATE
    assignment_seed: int = 0
    order_seed: int = 0
    share_presentation_order: bool = False
    binary_instruction: str = DEFAULT_BINARY_INSTRUCTION

    def __post_init__(self):
        unknown = set(self.arm_sizes) - set(ARMS)
        if unknown:
            raise ValueError(f"unknown arms {sorted(unknown)}; valid arms: {ARMS}")
        if not self.arm_sizes:
            raise ValueError("at least one arm required")
        for arm, size in self.arm_sizes.items():
            if size < 1:
                raise ValueError(f"arm {arm!r} size must be >= 1")

    def to_dict(self) -> dict:
        return {
            "experiment_id": self.experiment_id,
            "arm_sizes": dict(self.arm_sizes),
            "genders": list(self.genders),
            "age_bands": list(self.age_bands),
            "conscious_threshold": self.conscious_threshold,
            "tie_break": self.tie_break.value,
            "assignment_seed": self.assignment_seed,
            "order_seed": self.order_seed,
            "share_presentation_order": self.share_presentation_order,
            "binary_instruction": self.binary_instruction,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        return cls(
            experiment_id=str(data["experiment_id"]),
            arm_sizes={str(k): int(v) for k, v in data["arm_sizes"].items()},
            genders=[str(g) for g in data.get("genders", ["female", "male"])],
            age_bands=[str(b) for b in data.get("age_bands", ["21-40", "41-60"])],
            conscious_threshold=float(data.get("conscious_threshold", 2.0 / 3.0)),
            tie_break=scheme.TieBreak(data.get("tie_break", "Escalate")),
            assignment_seed=int(data.get("assignment_seed", 0)),
            order_seed=int(data.get("order_seed", 0)),
            share_presentation_order=bool(data.get("share_presentation_order", False)),
            binary_instruction=str(
                data.get("binary_instruction", DEFAULT_BINARY_INSTRUCTION)
            ),
        )


def _coin(seed: int, *context: str) -> int:
    material = "\x1f".join([str(seed), *context]).encode("utf-8")
    return hashlib.sha256(material).digest()[0] & 1


def assign_annotator(
    profile: AnnotatorProfile,
    config: ExperimentConfig,
    current: dict[str, AnnotatorProfile],
    assignments: dict[str, str],
) -> str:
    """Greedy online balancing of annotators over the experiment arms.

    Candidate arms are those with remaining capacity. For each, compute
    the post-assignment imbalance vector (sum over genders of absolute
    count differences between arms, then the same over age bands, then the
    arm size) and pick the lexicographic minimum; exact ties fall to a
    seeded coin so assignment stays deterministic.
    """
    arms = [a for a in ARMS if a in config.arm_sizes]
    sizes = {arm: 0 for arm in arms}
    gender_counts = {arm: {g: 0 for g in config.genders} for arm in arms}
    band_counts = {arm: {b: 0 for b in config.age_bands} for arm in arms}
    for annotator_id, arm in assignments.items():
        existing = current[annotator_id]
        sizes[arm] += 1
        if existing.gender in gender_counts[arm]:
            gender_counts[arm][existing.gender] += 1
        if existing.age_band in band_counts[arm]:
            band_counts[arm][existing.age_band] += 1

    open_arms = [a for a in arms if sizes[a] < config.arm_sizes[a]]
    if not open_arms:
        raise CapacityError("all arms are at target size")
    if len(open_arms) == 1 or len(arms) == 1:
        return open_arms[0]

    def imbalance_after(arm: str) -> tuple[int, int, int]:
        genders = {a: dict(gender_counts[a]) for a in arms}
        bands = {a: dict(band_counts[a]) for a in arms}
        new_sizes = dict(sizes)
        if profile.gender in genders[arm]:
            genders[arm][profile.gender] += 1
        if profile.age_band in bands[arm]:
            bands[arm][profile.age_band] += 1
        new_sizes[arm] += 1
        first, second = arms[0], arms[1]
        gender_diff = sum(
            abs(genders[first][g] - genders[second][g]) for g in config.genders
        )
        band_diff = sum(
            abs(bands[first][b] - bands[second][b]) for b in config.age_bands
        )
        return (gender_diff, band_diff, new_sizes[arm])

    ranked = sorted(open_arms, key=imbalance_after)
    best = imbalance_after(ranked[0])
    tied = [a for a in ranked if imbalance_after(a) == best]
    if len(tied) == 1:
        return tied[0]
    return tied[_coin(config.assignment_seed, profile.annotator_id) % len(tied)]


@dataclass
class TaskState:
    """Where one annotator stands: completed items and the open partial."""

    completed: list[str] = field(default_factory=list)
    partial: scheme.AnnotationRecord | None = None


class Experiment:
    """Runtime state of one experiment, backed by its directory."""

    def __init__(self, root: Path, clock: Callable[[], str] | None = None):
        self.root = root
        self.lock = threading.RLock()
        self._clock = clock or (lambda: time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()))
        self.config = ExperimentConfig.from_dict(
            json.loads((root / "config.json").read_text(encoding="utf-8"))
        )
        self.registry = scheme.ProtectedGroupRegistry.from_json(
            (root / "registry.json").read_text(encoding="utf-8")
        )
        self.manifest = sampling.SampleManifest.from_json(
            (root / "manifest.json").read_text(encoding="utf-8")
        )
        self.comments: dict[str, Comment] = {}
        with (root / "comments.jsonl").open("r", encoding="utf-8") as handle:
            for line in handle:
                if line.strip():
                    comment = Comment.from_dict(json.loads(line))
                    self.comments[comment.id] = comment
        missing = [i for i in self.manifest.selected_ids() if i not in self.comments]
        if missing:
            raise IntegrityError(f"manifest selects unknown comment ids: {missing}")

        self.profiles: dict[str, AnnotatorProfile] = {}
        self.assignments: dict[str, str] = {}
        profiles_path = root / "profiles.jsonl"
        if profiles_path.exists():
            with profiles_path.open("r", encoding="utf-8") as handle:
                for line in handle:
                    if line.strip():
                        data = json.loads(line)
                        profile = AnnotatorProfile.from_dict(data)
                        self.profiles[profile.annotator_id] = profile
                        self.assignments[profile.annotator_id] = data["arm"]

        self.store = store.EventStore(root / "store.jsonl", clock=self._clock)
        self.tasks: dict[str, TaskState] = {}
        self._rebuild_task_state()

    # -- setup ------------------------------------------------------------

    @classmethod
    def create(
        cls,
        root: Path,
        config: ExperimentConfig,
        comments: list[Comment],
        manifest: sampling.SampleManifest,
        registry: scheme.ProtectedGroupRegistry,
        clock: Callable[[], str] | None = None,
    ) -> "Experiment":
        if root.exists():
            raise IntegrityError(f"experiment directory already exists: {root}")
        by_id = {c.id: c for c in comments}
        missing = [i for i in manifest.selected_ids() if i not in by_id]
        if missing:
            raise IntegrityError(f"manifest selects unknown comment ids: {missing}")
        root.mkdir(parents=True)
        (root / "config.json").write_text(
            json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )
        (root / "registry.json").write_text(registry.to_json() + "\n", encoding="utf-8")
        (root / "manifest.json").write_text(manifest.to_json() + "\n", encoding="utf-8")
        with (root / "comments.jsonl").open("w", encoding="utf-8", newline="\n") as handle:
            for comment in comments:
                handle.write(json.dumps(comment.to_dict(), ensure_ascii=False) + "\n")
        return cls(root, clock=clock)

    def _rebuild_task_state(self) -> None:
        self.tasks = {aid: TaskState() for aid in self.profiles}
        for event in self.store.load(latest_only=True):
            state = self.tasks.setdefault(event.annotator_id, TaskState())
            if event.comment_id not in state.completed:
                state.completed.append(event.comment_id)

    # -- annotators ---------------------------------------------------------

    def register_annotator(self, profile: AnnotatorProfile) -> str:
        with self.lock:
            if profile.annotator_id in self.profiles:
                return self.assignments[profile.annotator_id]  # idempotent re-register
            if not profile.consent:
                raise AuthorizationError(
                    "annotator must consent before receiving tasks"
                )
            arm = assign_annotator(profile, self.config, self.profiles, self.assignments)
            self.profiles[profile.annotator_id] = profile
            self.assignments[profile.annotator_id] = arm
            self.tasks[profile.annotator_id] = TaskState()
            with (self.root / "profiles.jsonl").open(
                "a", encoding="utf-8", newline="\n"
            ) as handle:
                row = profile.to_dict()
                row["arm"] = arm
                handle.write(json.dumps(row, ensure_ascii=False) + "\n")
            return arm

    def presentation_order_for(self, annotator_id: str) -> list[str]:
        if annotator_id in self.manifest.item_order_by_annotator:
            return self.manifest.item_order_by_annotator[annotator_id]
        key = "" if self.config.share_presentation_order else annotator_id
        author_of = {
            i: self.comments[i].author_pseudonym for i in self.manifest.selected_ids()
        }
        order = sampling.presentation_order(
            self.manifest, key, author_of, self.config.order_seed
        )
        self.manifest.item_order_by_annotator[annotator_id] = list(order.items)
        if order.author_adjacent:
            self.manifest.author_adjacent_orders.append(annotator_id)
        return list(order.items)

    def _require_annotator(self, annotator_id: str) -> str:
        arm = self.assignments.get(annotator_id)
        if arm is None:
            raise AuthorizationError(f"annotator {annotator_id!r} is not assigned")
        if not self.profiles[annotator_id].consent:
            raise AuthorizationError(f"annotator {annotator_id!r} has not consented")
        return arm

    # -- task flow ----------------------------------------------------------

    def next_task(self, annotator_id: str) -> dict:
        """The annotator's current item and first unanswered question.

        The response is annotator-scoped: it contains the comment text
        (never the author) and this annotator's own progress, nothing else.
        """
        with self.lock:
            arm = self._require_annotator(annotator_id)
            order = self.presentation_order_for(annotator_id)
            state = self.tasks[annotator_id]
            remaining = [i for i in order if i not in state.completed]
            base = {
                "arm": arm,
                "progress": {"completed": len(state.completed), "total": len(order)},
            }
            if not remaining:
                return {**base, "done": True}
            current = remaining[0]
            comment = self.comments[current]
            task = {
                **base,
                "done": False,
                "comment_id": current,
                "text": comment.text,
            }
            if arm == store.ARM_BINARY:
                task["question"] = "BinaryLabel"
                task["instruction"] = self.config.binary_instruction
            else:
                partial = state.partial
                if partial is None or partial.comment_id != current:
                    partial = scheme.AnnotationRecord(
                        comment_id=current, annotator_id=annotator_id
                    )
                task["question"] = scheme.next_question(partial).value
                task["answered"] = _answered_prefix(partial)
            return task

    def submit(self, annotator_id: str, comment_id: str, question: str, answer) -> dict:
        """Validate and apply one answer; persist the record on completion.

        Server-side validation is authoritative: no sequence of calls can
        persist a record that fails the gating invariants.
        """
        with self.lock:
            arm = self._require_annotator(annotator_id)
            order = self.presentation_order_for(annotator_id)
            if comment_id not in order:
                raise AuthorizationError(
                    f"comment {comment_id!r} is not in this annotator's task list"
                )
            state = self.tasks[annotator_id]
            remaining = [i for i in order if i not in state.completed]

            if comment_id not in remaining:
                return self._resubmission(annotator_id, comment_id, arm, question, answer)
            if comment_id != remaining[0]:
                raise RoutingError(
                    f"items are delivered in order; current item is {remaining[0]!r}"
                )

            if arm == store.ARM_BINARY:
                return self._submit_binary(annotator_id, comment_id, question, answer, state)
            return self._submit_multilevel(annotator_id, comment_id, question, answer, state)

    def _submit_binary(self, annotator_id, comment_id, question, answer, state) -> dict:
        if question != "BinaryLabel":
            raise RoutingError("binary arm accepts only the BinaryLabel question")
        label = scheme.BinaryLabel(answer)  # ValueError on bad shape
        self.store.append(
            annotator_id, comment_id, store.ARM_BINARY, {"label": label.value}
        )
        state.completed.append(comment_id)
        return {"accepted": True, "item_complete": True, "next_question": None}

    def _submit_multilevel(self, annotator_id, comment_id, question, answer, state) -> dict:
        partial = state.partial
        if partial is None or partial.comment_id != comment_id:
            partial = scheme.AnnotationRecord(
                comment_id=comment_id, annotator_id=annotator_id
            )
        elif scheme.QuestionId(question) is scheme.QuestionId.Q1_ATTITUDE:
            # Re-answering Q1 on the open item restarts its scratch answers;
            # the wizard's within-item back/edit replays from here. Nothing
            # is persisted until the record completes.
            partial = scheme.AnnotationRecord(
                comment_id=comment_id, annotator_id=annotator_id
            )
        updated = scheme.apply_answer(partial, scheme.QuestionId(question), answer)
        violations = scheme.validate_prefix(updated)
        if violations:  # defense in depth; apply_answer already gates
            return {
                "accepted": False,
                "violations": [v.to_dict() for v in violations],
            }
        following = scheme.next_question(updated)
        if following is scheme.QuestionId.COMPLETE:
            completed = scheme.AnnotationRecord(
                comment_id=updated.comment_id,
                annotator_id=updated.annotator_id,
                attitude=updated.attitude,
                target=updated.target,
                group_name=updated.group_name,
                strategies=updated.strategies,
                violence_call=updated.violence_call,
                submitted_at=self._clock(),
            )
            final_violations = scheme.validate(completed)
            if final_violations:
                return {
                    "accepted": False,
                    "violations": [v.to_dict() for v in final_violations],
                }
            self.store.append(
                annotator_id, comment_id, store.ARM_MULTILEVEL, completed.to_dict()
            )
            state.partial = None
            state.completed.append(comment_id)
            return {"accepted": True, "item_complete": True, "next_question": None}
        state.partial = updated
        return {
            "accepted": True,
            "item_complete": False,
            "next_question": following.value,
        }

    def _resubmission(self, annotator_id, comment_id, arm, question, answer) -> dict:
        """An answer for an already-completed item: idempotent only when it
        repeats the recorded final answer (a retry of a lost ack)."""
        events = self.store.events_for(annotator_id, comment_id)
        latest = events[-1]
        if arm == store.ARM_BINARY and question == "BinaryLabel":
            if latest.payload.get("label") == answer:
                return {"accepted": True, "item_complete": True, "next_question": None}
        if arm == store.ARM_MULTILEVEL and question == scheme.QuestionId.Q3A_VIOLENCE.value:
            if latest.payload.get("violence_call") == answer:
                return {"accepted": True, "item_complete": True, "next_question": None}
        raise RoutingError(f"item {comment_id!r} is already complete")

    # -- reporting ----------------------------------------------------------

    def pending_annotators(self) -> list[str]:
        total = len(self.manifest.selected_ids())
        return sorted(
            aid
            for aid in self.assignments
            if len(self.tasks[aid].completed) < total
        )

    def status(self) -> dict:
        total = len(self.manifest.selected_ids())
        return {
            "experiment_id": self.config.experiment_id,
            "items": total,
            "arms": {
                arm: {
                    "target": self.config.arm_sizes.get(arm, 0),
                    "assigned": sum(1 for a in self.assignments.values() if a == arm),
                }
                for arm in ARMS
                if arm in self.config.arm_sizes
            },
            "annotators": [
                {
                    "annotator_id": aid,
                    "arm": self.assignments[aid],
                    "completed": len(self.tasks[aid].completed),
                    "done": len(self.tasks[aid].completed) >= total,
                }
                for aid in sorted(self.assignments)
            ],
            "pending": self.pending_annotators(),
            "unresolved_groups": scheme.unresolved_groups(
                self._multilevel_records(), self.registry
            ),
        }

    def _multilevel_records(self) -> list[scheme.AnnotationRecord]:
        return [
            scheme.AnnotationRecord.from_dict(e.payload)
            for e in self.store.load(arm=store.ARM_MULTILEVEL, latest_only=True)
        ]

    def report(self, force: bool = False) -> dict:
        """Agreement bundle over both arms, plus derived-label summaries.

        Refuses while annotators are still working unless forced (then the
        drop_incomplete policy trims items to the modal rater count and
        the retained sizes are flagged in the output).
        """
        with self.lock:
            pending = self.pending_annotators()
            if pending and not force:
                raise PendingAnnotatorsError(pending)
            unresolved = scheme.unresolved_groups(
                self._multilevel_records(), self.registry
            )
            if unresolved:
                raise IntegrityError(
                    "group names awaiting curator resolution: " + ", ".join(unresolved)
                )

            columns: dict[str, agreement.AgreementReport | None] = {}
            details: dict[str, dict] = {}

            def column_from(labels: dict, name: str) -> None:
                try:
                    built = agreement.build_matrix(
                        labels,
                        agreement.MatrixPolicy.DROP_INCOMPLETE,
                        agreement.BINARY_CATEGORIES,
                    )
                    columns[name] = agreement.agreement_report(built.matrix)
                    details[name] = {
                        "excluded_items": built.excluded_items,
                        "retained_items": built.matrix.n_items,
                    }
                except agreement.MatrixError as exc:
                    columns[name] = None
                    details[name] = {"not_computable": str(exc)}

            binary_events = self.store.load(arm=store.ARM_BINARY, latest_only=True)
            if store.ARM_BINARY in self.config.arm_sizes and binary_events:
                column_from(
                    {
                        (e.comment_id, e.annotator_id): e.payload["label"]
                        for e in binary_events
                    },
                    "binary",
                )
            else:
                columns["binary"] = None

            records = self._multilevel_records()
            per_level = []
            if store.ARM_MULTILEVEL in self.config.arm_sizes and records:
                column_from(
                    agreement.binary_projection(records, self.registry), "multi-level"
                )
                per_level = agreement.per_level_agreement(records, self.registry)
            else:
                columns["multi-level"] = None

            cortese_distribution = {c.value: 0 for c in scheme.CorteseCategory}
            by_comment: dict[str, list[scheme.AnnotationRecord]] = {}
            for record in records:
                cortese_distribution[scheme.derive_cortese(record).value] += 1
                by_comment.setdefault(record.comment_id, []).append(record)
            conscious = {
                comment_id: scheme.classify_conscious(
                    group, self.config.conscious_threshold
                ).value
                for comment_id, group in sorted(by_comment.items())
                if len(group) >= 2
            }
            aggregates = {
                comment_id: scheme.aggregate_binary(
                    group, self.registry, self.config.tie_break
                ).value
                for comment_id, group in sorted(by_comment.items())
            }

            text = agreement.render_table(
                columns, title=f"Inter-annotator agreement: {self.config.experiment_id}"
            )
            return {
                "experiment_id": self.config.experiment_id,
                "forced": force,
                "pending": pending,
                "columns": {
                    name: (report.to_dict() if report else None)
                    for name, report in columns.items()
                },
                "column_details": details,
                "per_level": [r.to_dict() for r in per_level],
                "cortese_distribution": cortese_distribution,
                "discrimination_refinement": conscious,
                "binary_aggregates": aggregates,
                "table": text,
            }

    def export(self, out_dir: Path, format: str = "jsonl") -> dict:
        with self.lock:
            return store.export_dataset(
                self.store,
                self.registry,
                out_dir,
                format=format,
                comments=list(self.comments.values()),
                conscious_threshold=self.config.conscious_threshold,
                tie_break=self.config.tie_break,
                seeds={
                    "sample": self.manifest.seed,
                    "assignment": self.config.assignment_seed,
                    "order": self.config.order_seed,
                },
            )


def _answered_prefix(partial: scheme.AnnotationRecord) -> dict:
    """The answers given so far, for client-side state recovery."""
    return {
        "attitude": partial.attitude.value if partial.attitude else None,
        "target": partial.target.to_dict() if partial.target else None,
        "group_name": partial.group_name,
        "strategies": sorted(s.value for s in partial.strategies),
        "violence_call": partial.violence_call,
    }


class ExperimentHub:
    """All experiments under one data directory."""

    def __init__(self, data_dir: str | Path, clock: Callable[[], str] | None = None):
        self.data_dir = Path(data_dir)
        self._clock = clock
        self._experiments: dict[str, Experiment] = {}
        self._lock = threading.Lock()

    def _experiment_root(self, experiment_id: str) -> Path:
        if not experiment_id or "/" in experiment_id or experiment_id.startswith("."):
            raise IntegrityError(f"invalid experiment id {experiment_id!r}")
        return self.data_dir / "experiments" / experiment_id

    def create_experiment(
        self,
        config: ExperimentConfig,
        comments: list[Comment],
        manifest: sampling.SampleManifest,
        registry: scheme.ProtectedGroupRegistry,
    ) -> Experiment:
        with self._lock:
            root = self._experiment_root(config.experiment_id)
            experiment = Experiment.create(
                root, config, comments, manifest, registry, clock=self._clock
            )
            self._experiments[config.experiment_id] = experiment
            return experiment

    def get(self, experiment_id: str) -> Experiment:
        with self._lock:
            if experiment_id not in self._experiments:
                root = self._experiment_root(experiment_id)
                if not root.exists():
                    raise IntegrityError(f"no such experiment: {experiment_id!r}")
                self._experiments[experiment_id] = Experiment(root, clock=self._clock)
            return self._experiments[experiment_id]

    def list_ids(self) -> list[str]:
        base = self.data_dir / "experiments"
        if not base.exists():
            return []
        return sorted(p.name for p in base.iterdir() if p.is_dir())
