"""Reproducible stratified selection of pilot items and presentation orders.

All randomness is derived from SHA-256 over (seed, context, element) and
used as a sort priority. That makes every draw a pure function of its
inputs: independent of set iteration order, of platform, and of Python
version. The generator is part of the file-format contract - manifests
must reproduce bit-identically across processes and machines.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .errors import InfeasibleStratumError, IntegrityError


def _priority(*parts: str | int) -> bytes:
    material = "\x1f".join(str(p) for p in parts).encode("utf-8")
    return hashlib.sha256(material).digest()


@dataclass(frozen=True)
class StratumSpec:
    """One pre-classified category of comments and how many to draw."""

    label: str
    member_ids: frozenset[str]
    take: int

    def __post_init__(self):
        if self.take < 0:
            raise ValueError(f"stratum {self.label!r}: take must be non-negative")


@dataclass
class SampleManifest:
    """A reproducible sample: selected ids per stratum plus per-annotator
    presentation orders (assigned separately, after annotators exist)."""

    seed: int
    strata: list[tuple[str, list[str]]]
    item_order_by_annotator: dict[str, list[str]] = field(default_factory=dict)
    author_adjacent_orders: list[str] = field(default_factory=list)

    def selected_ids(self) -> list[str]:
        out: list[str] = []
        for _, ids in self.strata:
            out.extend(ids)
        return out

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "strata": [[label, list(ids)] for label, ids in self.strata],
            "item_order_by_annotator": {
                k: list(v) for k, v in sorted(self.item_order_by_annotator.items())
            },
            "author_adjacent_orders": sorted(self.author_adjacent_orders),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, sort_keys=True, indent=2)

    @classmethod
    def from_dict(cls, data: dict) -> "SampleManifest":
        return cls(
            seed=int(data["seed"]),
            strata=[(str(label), [str(i) for i in ids]) for label, ids in data["strata"]],
            item_order_by_annotator={
                str(k): [str(i) for i in v]
                for k, v in data.get("item_order_by_annotator", {}).items()
            },
            author_adjacent_orders=[str(a) for a in data.get("author_adjacent_orders", ())],
        )

    @classmethod
    def from_json(cls, text: str) -> "SampleManifest":
        return cls.from_dict(json.loads(text))


def stratified_sample(strata: Sequence[StratumSpec], seed: int) -> SampleManifest:
    """Draw `take` ids from each stratum by seeded sampling without replacement.

    Selection ranks each member by SHA-256(seed, stratum label, id) and
    keeps the lowest `take` priorities, so identical inputs and seed give
    identical manifests everywhere. Labels must be unique and member sets
    pairwise disjoint.
    """
    labels = [s.label for s in strata]
    if len(set(labels)) != len(labels):
        raise IntegrityError("stratum labels must be unique within a sampling plan")
    seen: set[str] = set()
    for stratum in strata:
        overlap = seen & stratum.member_ids
        if overlap:
            raise IntegrityError(
                f"stratum {stratum.label!r} shares members with an earlier stratum: "
                f"{sorted(overlap)[:5]}"
            )
        seen |= stratum.member_ids

    selected: list[tuple[str, list[str]]] = []
    for stratum in strata:
        if stratum.take > len(stratum.member_ids):
            raise InfeasibleStratumError(
                stratum.label, stratum.take, len(stratum.member_ids)
            )
        ranked = sorted(
            stratum.member_ids, key=lambda i: (_priority(seed, stratum.label, i), i)
        )
        selected.append((stratum.label, ranked[: stratum.take]))
    return SampleManifest(seed=seed, strata=selected)


@dataclass(frozen=True)
class PresentationOrder:
    items: tuple[str, ...]
    author_adjacent: bool


def _seeded_shuffle(ids: Iterable[str], seed: int, annotator_id: str) -> list[str]:
    return sorted(ids, key=lambda i: (_priority(seed, annotator_id, i), i))


def _separation_feasible(counts: Mapping[str, int], forbidden: str | None) -> bool:
    """Can the remaining items be laid out with no adjacent same-author pair,
    given the previous item's author is `forbidden`?

    Standard rearrangement bound: possible iff the largest author count is
    at most ceil(n/2), and the forbidden author holds at most floor(n/2).
    """
    n = sum(counts.values())
    if n == 0:
        return True
    if max(counts.values()) > (n + 1) // 2:
        return False
    if forbidden is not None and counts.get(forbidden, 0) > n // 2:
        return False
    return True


def presentation_order(
    manifest: SampleManifest,
    annotator_id: str,
    author_of: Mapping[str, str],
    seed: int,
) -> PresentationOrder:
    """Seeded per-annotator permutation that avoids same-author adjacency.

    Ranks items by SHA-256(seed, annotator id, item id), then greedily
    emits the lowest-ranked item whose author differs from the previous
    one and whose choice leaves the rest completable. Whenever any
    adjacency-free permutation exists this finds one; if none exists (one
    author dominates) the plain seeded shuffle is returned with
    author_adjacent = True.
    """
    selected = manifest.selected_ids()
    if not selected:
        raise IntegrityError("manifest has no selected items")
    missing = [i for i in selected if i not in author_of]
    if missing:
        raise IntegrityError(f"no author known for selected ids: {missing}")

    shuffled = _seeded_shuffle(selected, seed, annotator_id)
    counts: dict[str, int] = {}
    for item in shuffled:
        author = author_of[item]
        counts[author] = counts.get(author, 0) + 1

    if not _separation_feasible(counts, None):
        return PresentationOrder(items=tuple(shuffled), author_adjacent=True)

    remaining = list(shuffled)
    order: list[str] = []
    previous_author: str | None = None
    while remaining:
        chosen = None
        for candidate in remaining:
            author = author_of[candidate]
            if author == previous_author:
                continue
            counts[author] -= 1
            if _separation_feasible(counts, author):
                chosen = candidate
                break
            counts[author] += 1
        if chosen is None:  # unreachable given the feasibility precheck
            return PresentationOrder(items=tuple(shuffled), author_adjacent=True)
        remaining.remove(chosen)
        order.append(chosen)
        previous_author = author_of[chosen]
    return PresentationOrder(items=tuple(order), author_adjacent=False)


def assign_orders(
    manifest: SampleManifest,
    annotator_ids: Iterable[str],
    author_of: Mapping[str, str],
    seed: int,
    share_one_order: bool = False,
) -> SampleManifest:
    """Fill in per-annotator presentation orders on the manifest.

    By default every annotator gets their own randomized order; with
    `share_one_order` a single order (keyed by an empty annotator id) is
    reused for everyone.
    """
    for annotator_id in annotator_ids:
        key = "" if share_one_order else annotator_id
        result = presentation_order(manifest, key, author_of, seed)
        manifest.item_order_by_annotator[annotator_id] = list(result.items)
        if result.author_adjacent:
            manifest.author_adjacent_orders.append(annotator_id)
    return manifest
