"""Append-only persistence of annotation events, with export/import.

The log is a single JSONL file, one event per line, fsynced before an
append is acknowledged. Events are never rewritten: corrections append a
new revision under the same (annotator, comment) pair, and readers project
the latest revision when asked. A snapshot file carries the same events
plus the log byte offset they cover, so reopening a large store replays
only the log suffix.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable

from .errors import StoreError
from .scheme import (
    AggregateOutcome,
    AnnotationRecord,
    BinaryLabel,
    ProtectedGroupRegistry,
    TieBreak,
    aggregate_binary,
    classify_conscious,
    derive_binary,
    derive_cortese,
    validate,
)

SNAPSHOT_FORMAT = "hieranno-store-snapshot/1"
EXPORT_FORMAT = "hieranno-dataset-export/1"

ARM_BINARY = "binary"
ARM_MULTILEVEL = "multilevel"

#: Column order for CSV record exports. Fixed: downstream parsers rely on it.
RECORD_CSV_COLUMNS = (
    "sequence_number",
    "arm",
    "annotator_id",
    "comment_id",
    "revision",
    "received_at",
    "attitude",
    "target_kind",
    "via_group_affiliation",
    "group_name",
    "strategies",
    "violence_call",
    "binary_label",
    "submitted_at",
)


@dataclass(frozen=True)
class AnnotationEvent:
    """One accepted submission. Sequence numbers are store-assigned and
    strictly increasing; (annotator, comment, revision) is unique."""

    sequence_number: int
    annotator_id: str
    comment_id: str
    revision: int
    arm: str
    payload: dict
    received_at: str

    @property
    def idempotency_key(self) -> tuple[str, str, int]:
        return (self.annotator_id, self.comment_id, self.revision)

    def to_dict(self) -> dict:
        return {
            "sequence_number": self.sequence_number,
            "annotator_id": self.annotator_id,
            "comment_id": self.comment_id,
            "revision": self.revision,
            "arm": self.arm,
            "payload": self.payload,
            "received_at": self.received_at,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "AnnotationEvent":
        return cls(
            sequence_number=int(data["sequence_number"]),
            annotator_id=str(data["annotator_id"]),
            comment_id=str(data["comment_id"]),
            revision=int(data["revision"]),
            arm=str(data["arm"]),
            payload=dict(data["payload"]),
            received_at=str(data["received_at"]),
        )


def _utc_now() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())


def _validate_payload(arm: str, payload: dict) -> list[str]:
    """Reasons the payload is unacceptable for the given arm, if any."""
    if arm == ARM_BINARY:
        label = payload.get("label")
        if label not in {b.value for b in BinaryLabel}:
            return [f"binary arm payload needs label in {sorted(b.value for b in BinaryLabel)}"]
        return []
    if arm == ARM_MULTILEVEL:
        try:
            record = AnnotationRecord.from_dict(payload)
        except (KeyError, ValueError) as exc:
            return [f"payload does not parse as an annotation record: {exc}"]
        return [f"{v.field}: {v.message}" for v in validate(record)]
    return [f"unknown arm {arm!r}"]


class EventStore:
    """Log-structured single-file JSONL event store.

    Appends are serialized by the caller (single-writer discipline); reads
    work off the in-memory index, which is immutable between appends.
    """

    def __init__(self, path: str | Path, clock: Callable[[], str] = _utc_now):
        self.path = Path(path)
        self._clock = clock
        self._events: list[AnnotationEvent] = []
        self._by_key: dict[tuple[str, str, int], AnnotationEvent] = {}
        self._load()

    @property
    def snapshot_path(self) -> Path:
        return self.path.with_suffix(self.path.suffix + ".snapshot")

    def _index(self, event: AnnotationEvent) -> None:
        self._events.append(event)
        self._by_key[event.idempotency_key] = event

    def _load(self) -> None:
        offset = 0
        if self.snapshot_path.exists():
            offset = self._load_snapshot()
        if not self.path.exists():
            return
        with self.path.open("r", encoding="utf-8") as handle:
            handle.seek(offset)
            for line in handle:
                line = line.strip()
                if not line:
                    continue
                try:
                    event = AnnotationEvent.from_dict(json.loads(line))
                except (json.JSONDecodeError, KeyError, ValueError) as exc:
                    raise StoreError(f"corrupt event log {self.path}: {exc}") from exc
                if event.idempotency_key in self._by_key:
                    continue  # replayed tail overlapping the snapshot
                self._index(event)

    def _load_snapshot(self) -> int:
        with self.snapshot_path.open("r", encoding="utf-8") as handle:
            header_line = handle.readline()
            try:
                header = json.loads(header_line)
            except json.JSONDecodeError as exc:
                raise StoreError(f"corrupt snapshot {self.snapshot_path}: {exc}") from exc
            if header.get("format") != SNAPSHOT_FORMAT:
                raise StoreError(
                    f"snapshot format {header.get('format')!r} not supported"
                )
            log_bytes = int(header.get("log_bytes", 0))
            current = self.path.stat().st_size if self.path.exists() else 0
            if log_bytes > current:
                # Snapshot is ahead of the log (log was replaced); distrust it.
                self._events.clear()
                self._by_key.clear()
                return 0
            for line in handle:
                if line.strip():
                    self._index(AnnotationEvent.from_dict(json.loads(line)))
            return log_bytes

    def snapshot(self) -> Path:
        """Write a snapshot covering the current log contents."""
        log_bytes = self.path.stat().st_size if self.path.exists() else 0
        tmp = self.snapshot_path.with_suffix(".tmp")
        with tmp.open("w", encoding="utf-8", newline="\n") as handle:
            header = {
                "format": SNAPSHOT_FORMAT,
                "log_bytes": log_bytes,
                "events": len(self._events),
            }
            handle.write(json.dumps(header, sort_keys=True) + "\n")
            for event in self._events:
                handle.write(json.dumps(event.to_dict(), ensure_ascii=False) + "\n")
            handle.flush()
            os.fsync(handle.fileno())
        tmp.replace(self.snapshot_path)
        return self.snapshot_path

    def append(self, annotator_id: str, comment_id: str, arm: str, payload: dict,
               revision: int | None = None) -> int:
        """Durably append one event; returns its sequence number.

        A duplicate idempotency key returns the original sequence number
        without writing. When `revision` is omitted: identical payload to
        the latest revision is treated as a retry (idempotent), anything
        else appends the next revision.
        """
        existing = self.events_for(annotator_id, comment_id)
        if revision is None:
            if existing and existing[-1].payload == payload:
                return existing[-1].sequence_number
            revision = (existing[-1].revision + 1) if existing else 1
        else:
            prior = self._by_key.get((annotator_id, comment_id, revision))
            if prior is not None:
                return prior.sequence_number

        event = AnnotationEvent(
            sequence_number=len(self._events) + 1,
            annotator_id=annotator_id,
            comment_id=comment_id,
            revision=revision,
            arm=arm,
            payload=payload,
            received_at=self._clock(),
        )
        return self.append_event(event)

    def append_event(self, event: AnnotationEvent) -> int:
        """Durably append a fully-formed event (used by imports).

        Enforces the store invariants: valid payload, strictly increasing
        sequence numbers, one event per idempotency key (duplicates return
        the original sequence number without writing).
        """
        prior = self._by_key.get(event.idempotency_key)
        if prior is not None:
            return prior.sequence_number
        problems = _validate_payload(event.arm, event.payload)
        if problems:
            raise StoreError("payload rejected: " + "; ".join(problems))
        if self._events and event.sequence_number <= self._events[-1].sequence_number:
            raise StoreError(
                f"sequence number {event.sequence_number} not increasing "
                f"(last was {self._events[-1].sequence_number})"
            )
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with self.path.open("a", encoding="utf-8", newline="\n") as handle:
            handle.write(json.dumps(event.to_dict(), ensure_ascii=False) + "\n")
            handle.flush()
            os.fsync(handle.fileno())
        self._index(event)
        return event.sequence_number

    def events_for(self, annotator_id: str, comment_id: str) -> list[AnnotationEvent]:
        return [
            e
            for e in self._events
            if e.annotator_id == annotator_id and e.comment_id == comment_id
        ]

    def load(
        self,
        arm: str | None = None,
        annotator_id: str | None = None,
        comment_id: str | None = None,
        latest_only: bool = False,
    ) -> list[AnnotationEvent]:
        """Events matching the filters, in sequence order.

        With latest_only, only the highest revision per (annotator,
        comment) pair survives.
        """
        events = [
            e
            for e in self._events
            if (arm is None or e.arm == arm)
            and (annotator_id is None or e.annotator_id == annotator_id)
            and (comment_id is None or e.comment_id == comment_id)
        ]
        if latest_only:
            latest: dict[tuple[str, str], AnnotationEvent] = {}
            for event in events:
                key = (event.annotator_id, event.comment_id)
                if key not in latest or event.revision > latest[key].revision:
                    latest[key] = event
            events = sorted(latest.values(), key=lambda e: e.sequence_number)
        return events

    def __len__(self) -> int:
        return len(self._events)


# --- Dataset export / import ----------------------------------------------------


def registry_digest(registry: ProtectedGroupRegistry) -> str:
    canonical = json.dumps(registry.to_dict(), sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _derived_row(event: AnnotationEvent, registry: ProtectedGroupRegistry) -> dict:
    row = {
        "sequence_number": event.sequence_number,
        "annotator_id": event.annotator_id,
        "comment_id": event.comment_id,
        "arm": event.arm,
    }
    if event.arm == ARM_BINARY:
        row["binary"] = event.payload["label"]
        row["cortese"] = None
    else:
        record = AnnotationRecord.from_dict(event.payload)
        row["binary"] = derive_binary(record, registry).value
        row["cortese"] = derive_cortese(record).value
    return row


def _aggregate_rows(
    events: list[AnnotationEvent],
    registry: ProtectedGroupRegistry,
    conscious_threshold: float,
    tie_break: TieBreak,
) -> list[dict]:
    by_comment: dict[str, list[AnnotationRecord]] = {}
    binary_by_comment: dict[str, list[str]] = {}
    for event in events:
        if event.arm == ARM_MULTILEVEL:
            by_comment.setdefault(event.comment_id, []).append(
                AnnotationRecord.from_dict(event.payload)
            )
        else:
            binary_by_comment.setdefault(event.comment_id, []).append(
                event.payload["label"]
            )
    rows = []
    for comment_id in sorted(set(by_comment) | set(binary_by_comment)):
        row: dict = {"comment_id": comment_id}
        records = by_comment.get(comment_id, [])
        if records:
            row["multilevel_majority"] = aggregate_binary(
                records, registry, tie_break
            ).value
            row["raters"] = len(records)
            if len(records) >= 2:
                row["discrimination_refinement"] = classify_conscious(
                    records, conscious_threshold
                ).value
            else:
                row["discrimination_refinement"] = None
        labels = binary_by_comment.get(comment_id)
        if labels:
            hate = sum(1 for lb in labels if lb == BinaryLabel.HATE_SPEECH.value)
            rest = len(labels) - hate
            if hate > rest:
                outcome = AggregateOutcome.HATE_SPEECH
            elif rest > hate:
                outcome = AggregateOutcome.NOT_HATE_SPEECH
            elif tie_break is TieBreak.NOT_HATE_SPEECH:
                outcome = AggregateOutcome.NOT_HATE_SPEECH
            else:
                outcome = AggregateOutcome.ESCALATED
            row["binary_majority"] = outcome.value
            row["binary_raters"] = len(labels)
        rows.append(row)
    return rows


def _event_to_csv_row(event: AnnotationEvent) -> dict:
    row = {c: "" for c in RECORD_CSV_COLUMNS}
    row.update(
        sequence_number=event.sequence_number,
        arm=event.arm,
        annotator_id=event.annotator_id,
        comment_id=event.comment_id,
        revision=event.revision,
        received_at=event.received_at,
    )
    if event.arm == ARM_BINARY:
        row["binary_label"] = event.payload["label"]
        return row
    payload = event.payload
    row["attitude"] = payload.get("attitude") or ""
    target = payload.get("target")
    if target:
        row["target_kind"] = target.get("kind", "")
        via = target.get("via_group_affiliation")
        row["via_group_affiliation"] = "" if via is None else str(via).lower()
    row["group_name"] = payload.get("group_name") or ""
    row["strategies"] = ";".join(payload.get("strategies", ()))
    violence = payload.get("violence_call")
    row["violence_call"] = "" if violence is None else str(violence).lower()
    row["submitted_at"] = payload.get("submitted_at") or ""
    return row


def _csv_row_to_event(row: dict) -> AnnotationEvent:
    arm = row["arm"]
    if arm == ARM_BINARY:
        payload: dict = {"label": row["binary_label"]}
    else:
        payload = {
            "comment_id": row["comment_id"],
            "annotator_id": row["annotator_id"],
            "attitude": row["attitude"] or None,
            "target": None,
            "group_name": row["group_name"] or None,
            "strategies": row["strategies"].split(";") if row["strategies"] else [],
            "violence_call": None if row["violence_call"] == "" else row["violence_call"] == "true",
            "submitted_at": row["submitted_at"] or None,
        }
        if row["target_kind"]:
            payload["target"] = {
                "kind": row["target_kind"],
                "via_group_affiliation": (
                    None
                    if row["via_group_affiliation"] == ""
                    else row["via_group_affiliation"] == "true"
                ),
            }
    return AnnotationEvent(
        sequence_number=int(row["sequence_number"]),
        annotator_id=row["annotator_id"],
        comment_id=row["comment_id"],
        revision=int(row["revision"]),
        arm=arm,
        payload=payload,
        received_at=row["received_at"],
    )


def export_dataset(
    store: EventStore,
    registry: ProtectedGroupRegistry,
    out_dir: str | Path,
    format: str = "jsonl",
    comments: Iterable | None = None,
    conscious_threshold: float = 2.0 / 3.0,
    tie_break: TieBreak = TieBreak.ESCALATE,
    seeds: dict | None = None,
) -> dict:
    """Write a self-describing dataset export; returns the manifest.

    Files: events (jsonl or csv), derived labels, per-comment aggregates,
    the registry used, optional comments, and a manifest binding them
    together (format tag, registry digest, thresholds, seeds, counts).
    Re-running the derivations from the exported events and registry must
    reproduce the exported derived labels bit-exactly.
    """
    if format not in ("jsonl", "csv"):
        raise StoreError(f"unknown export format {format!r}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    events = store.load()

    if format == "jsonl":
        records_file = "events.jsonl"
        with (out / records_file).open("w", encoding="utf-8", newline="\n") as handle:
            for event in events:
                handle.write(json.dumps(event.to_dict(), ensure_ascii=False) + "\n")
    else:
        records_file = "events.csv"
        with (out / records_file).open("w", encoding="utf-8", newline="") as handle:
            writer = csv.DictWriter(handle, fieldnames=RECORD_CSV_COLUMNS)
            writer.writeheader()
            for event in events:
                writer.writerow(_event_to_csv_row(event))

    with (out / "derived.jsonl").open("w", encoding="utf-8", newline="\n") as handle:
        for event in store.load(latest_only=True):
            handle.write(
                json.dumps(_derived_row(event, registry), ensure_ascii=False) + "\n"
            )

    aggregates = _aggregate_rows(
        store.load(latest_only=True), registry, conscious_threshold, tie_break
    )
    with (out / "aggregates.jsonl").open("w", encoding="utf-8", newline="\n") as handle:
        for row in aggregates:
            handle.write(json.dumps(row, ensure_ascii=False) + "\n")

    (out / "registry.json").write_text(registry.to_json() + "\n", encoding="utf-8")

    files = {
        "events": records_file,
        "derived": "derived.jsonl",
        "aggregates": "aggregates.jsonl",
        "registry": "registry.json",
    }
    if comments is not None:
        with (out / "comments.jsonl").open("w", encoding="utf-8", newline="\n") as handle:
            for comment in comments:
                handle.write(json.dumps(comment.to_dict(), ensure_ascii=False) + "\n")
        files["comments"] = "comments.jsonl"

    manifest = {
        "format": EXPORT_FORMAT,
        "event_format": format,
        "files": files,
        "event_count": len(events),
        "registry_digest": registry_digest(registry),
        "conscious_threshold": conscious_threshold,
        "tie_break": tie_break.value,
        "seeds": seeds or {},
    }
    (out / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return manifest


def import_dataset(
    export_dir: str | Path, store_path: str | Path
) -> tuple[EventStore, list[str]]:
    """Rebuild a store from an export; returns it plus any warnings.

    The manifest's registry digest is recomputed from the shipped registry
    file; a mismatch means someone edited the registry after export and is
    reported as a warning, not an error.
    """
    export_dir = Path(export_dir)
    manifest = json.loads((export_dir / "manifest.json").read_text(encoding="utf-8"))
    if manifest.get("format") != EXPORT_FORMAT:
        raise StoreError(f"unknown export manifest format {manifest.get('format')!r}")
    warnings: list[str] = []
    registry = ProtectedGroupRegistry.from_json(
        (export_dir / manifest["files"]["registry"]).read_text(encoding="utf-8")
    )
    if registry_digest(registry) != manifest.get("registry_digest"):
        warnings.append(
            "registry digest mismatch: the registry file differs from the one "
            "recorded at export time"
        )

    events: list[AnnotationEvent] = []
    events_file = export_dir / manifest["files"]["events"]
    if manifest.get("event_format") == "csv":
        with events_file.open("r", encoding="utf-8", newline="") as handle:
            for row in csv.DictReader(handle):
                events.append(_csv_row_to_event(row))
    else:
        with events_file.open("r", encoding="utf-8") as handle:
            for line in handle:
                if line.strip():
                    events.append(AnnotationEvent.from_dict(json.loads(line)))

    store = EventStore(store_path)
    for event in sorted(events, key=lambda e: e.sequence_number):
        store.append_event(event)
    return store, warnings
