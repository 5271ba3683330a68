"""Comment corpus tooling: ingestion, anonymization, normalization, subcorpora.

The pipeline is stream-in/values-out: raw records come from JSONL or CSV,
get deduplicated and validated, then pass through anonymization (keyed
pseudonyms plus inline username masking) before anything is written back
out. Maltese text is matched through a diacritic folding table because
online writing frequently drops the diacritics.
"""

from __future__ import annotations

import csv
import hashlib
import hmac
import io
import json
import re
from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator, Sequence

from .errors import ConfigurationError, IngestError

LANGUAGES = ("en", "mt", "mixed", "unknown")

# Maltese grapheme folding. Digraphs first: "għ" must fold as a unit so the
# "ħ" inside it is never folded on its own.
_DIGRAPH_FOLDS = (("għ", "gh"), ("Għ", "Gh"), ("GĦ", "GH"), ("gĦ", "gH"))
_SINGLE_FOLDS = str.maketrans(
    {"ċ": "c", "Ċ": "C", "ġ": "g", "Ġ": "G", "ħ": "h", "Ħ": "H", "ż": "z", "Ż": "Z"}
)

PSEUDONYM_HEX_LENGTH = 16
USERNAME_PLACEHOLDER = "[username]"


def fold_diacritics(text: str) -> str:
    """Fold Maltese diacritic graphemes to their plain-ASCII counterparts.

    Applies ċ→c, ġ→g, għ→gh, ħ→h, ż→z (and the uppercase variants). Every
    mapping preserves code-point length (1→1 or 2→2), so the output is the
    same length as the input, and the function is idempotent.
    """
    for src, dst in _DIGRAPH_FOLDS:
        if src in text:
            text = text.replace(src, dst)
    return text.translate(_SINGLE_FOLDS)


def _match_key(text: str) -> str:
    """Normalization used for keyword and registry matching."""
    return fold_diacritics(text).casefold()


@dataclass(frozen=True)
class RawComment:
    """A parsed input record that still carries the raw author name."""

    id: str
    text: str
    author: str
    source: str = ""
    article_id: str = ""
    created_at: str | None = None
    deleted: bool = False
    language: str = "unknown"

    def dedup_key(self) -> tuple[str, str, str, str]:
        return (self.source, self.article_id, self.author, self.text)


@dataclass(frozen=True)
class Comment:
    """One anonymized user comment.

    The `deleted` flag (moderator-removed) is preserved verbatim through
    every transformation and export; it is part of what makes the corpus
    valuable and must never be dropped.
    """

    id: str
    source: str
    article_id: str
    author_pseudonym: str
    created_at: str | None
    text: str
    deleted: bool
    language: str = "unknown"
    subcorpus: str | None = None
    matched_keywords: frozenset[str] = frozenset()

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError(f"comment {self.id!r}: text empty after trimming")
        if self.language not in LANGUAGES:
            raise ValueError(f"comment {self.id!r}: unknown language tag {self.language!r}")

    def word_count(self) -> int:
        return len(self.text.split())

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "source": self.source,
            "article_id": self.article_id,
            "author_pseudonym": self.author_pseudonym,
            "created_at": self.created_at,
            "text": self.text,
            "deleted": self.deleted,
            "language": self.language,
            "subcorpus": self.subcorpus,
            "matched_keywords": sorted(self.matched_keywords),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Comment":
        return cls(
            id=str(data["id"]),
            source=str(data.get("source", "")),
            article_id=str(data.get("article_id", "")),
            author_pseudonym=str(data.get("author_pseudonym", "")),
            created_at=data.get("created_at"),
            text=str(data["text"]),
            deleted=bool(data.get("deleted", False)),
            language=str(data.get("language", "unknown")),
            subcorpus=data.get("subcorpus"),
            matched_keywords=frozenset(data.get("matched_keywords", ())),
        )


@dataclass
class IngestReport:
    """Outcome counts for one ingest pass.

    `usernames` is the ingest-time username inventory: every raw author
    string seen on a parseable record. The anonymization step uses it to
    mask inline mentions, and the totality scan checks against it.
    """

    accepted: int = 0
    duplicates: int = 0
    malformed: int = 0
    malformed_details: list[tuple[int, str]] = field(default_factory=list)
    usernames: set[str] = field(default_factory=set)

    def to_dict(self) -> dict:
        return {
            "accepted": self.accepted,
            "duplicates": self.duplicates,
            "malformed": self.malformed,
            "malformed_details": [list(item) for item in self.malformed_details],
            "usernames": sorted(self.usernames),
        }


@dataclass(frozen=True)
class SubcorpusSpec:
    """A keyword-defined subcorpus with a per-keyword word budget."""

    name: str
    keywords: tuple[str, ...]
    word_budget_per_keyword: int
    fold_diacritics: bool = True

    def __post_init__(self):
        if not self.keywords:
            raise ValueError("subcorpus spec needs at least one keyword")
        if self.word_budget_per_keyword <= 0:
            raise ValueError("word_budget_per_keyword must be positive")


@dataclass(frozen=True)
class CorpusStats:
    comment_count: int
    word_count: int
    deleted_count: int
    per_language: dict[str, int]
    per_subcorpus: dict[str, tuple[int, int]]

    def to_dict(self) -> dict:
        return {
            "comment_count": self.comment_count,
            "word_count": self.word_count,
            "deleted_count": self.deleted_count,
            "per_language": dict(sorted(self.per_language.items())),
            "per_subcorpus": {k: list(v) for k, v in sorted(self.per_subcorpus.items())},
        }


def _parse_record(data: dict, line_no: int) -> RawComment:
    text = str(data.get("text") or "")
    if not text.strip():
        raise ValueError("empty text")
    source = str(data.get("source") or "")
    article_id = str(data.get("article_id") or "")
    author = str(data.get("author") or "")
    raw_id = data.get("id")
    if raw_id is None or str(raw_id).strip() == "":
        # Derivable key: content digest keeps independent ingests in sync.
        digest = hashlib.sha256(
            "\x1f".join((source, article_id, author, text)).encode("utf-8")
        ).hexdigest()
        comment_id = f"c{digest[:12]}"
    else:
        comment_id = str(raw_id)
    language = str(data.get("language") or "unknown")
    if language not in LANGUAGES:
        raise ValueError(f"unknown language tag {language!r}")
    deleted_raw = data.get("deleted", False)
    if isinstance(deleted_raw, str):
        deleted = deleted_raw.strip().lower() in {"1", "true", "yes"}
    else:
        deleted = bool(deleted_raw)
    created_at = data.get("created_at")
    return RawComment(
        id=comment_id,
        text=text,
        author=author,
        source=source,
        article_id=article_id,
        created_at=str(created_at) if created_at not in (None, "") else None,
        deleted=deleted,
        language=language,
    )


def _iter_jsonl(stream: Iterable[str]) -> Iterator[tuple[int, dict | None, str | None]]:
    for line_no, line in enumerate(stream, start=1):
        if not line.strip():
            continue
        try:
            data = json.loads(line)
        except json.JSONDecodeError as exc:
            yield line_no, None, f"invalid JSON: {exc.msg}"
            continue
        if not isinstance(data, dict):
            yield line_no, None, "record is not a JSON object"
            continue
        yield line_no, data, None


def _iter_csv(stream: Iterable[str]) -> Iterator[tuple[int, dict | None, str | None]]:
    reader = csv.DictReader(stream)
    if reader.fieldnames is None:
        raise IngestError("CSV stream has no header row")
    for line_no, row in enumerate(reader, start=2):
        if None in row:
            yield line_no, None, "row has more fields than the header"
            continue
        yield line_no, {k: v for k, v in row.items() if v is not None}, None


def ingest(
    stream: Iterable[str] | io.TextIOBase, format: str = "jsonl"
) -> tuple[list[RawComment], IngestReport]:
    """Parse raw comment records, dropping malformed rows and exact duplicates.

    A duplicate is an exact (source, article_id, author, text) tuple match;
    the first occurrence wins. A reused id with different content is
    malformed (ids must be unique within a corpus). Malformed records are
    recorded in the report and skipped; only an unreadable stream aborts.
    """
    if format == "jsonl":
        records = _iter_jsonl(stream)
    elif format == "csv":
        records = _iter_csv(stream)
    else:
        raise IngestError(f"unknown ingest format {format!r}")

    report = IngestReport()
    accepted: list[RawComment] = []
    seen_keys: set[tuple[str, str, str, str]] = set()
    seen_ids: set[str] = set()
    try:
        for line_no, data, problem in records:
            if problem is not None:
                report.malformed += 1
                report.malformed_details.append((line_no, problem))
                continue
            try:
                raw = _parse_record(data, line_no)
            except ValueError as exc:
                report.malformed += 1
                report.malformed_details.append((line_no, str(exc)))
                continue
            if raw.author:
                report.usernames.add(raw.author)
            key = raw.dedup_key()
            if key in seen_keys:
                report.duplicates += 1
                continue
            if raw.id in seen_ids:
                report.malformed += 1
                report.malformed_details.append(
                    (line_no, f"duplicate id {raw.id!r} with different content")
                )
                continue
            seen_keys.add(key)
            seen_ids.add(raw.id)
            accepted.append(raw)
            report.accepted += 1
    except (OSError, UnicodeDecodeError) as exc:
        raise IngestError(f"could not read input stream: {exc}") from exc
    return accepted, report


def pseudonym(author: str, salt: bytes) -> str:
    """Stable keyed digest of an author name, as fixed-length hex."""
    if not salt:
        raise ConfigurationError("anonymization salt must be non-empty")
    mac = hmac.new(salt, author.encode("utf-8"), hashlib.sha256)
    return mac.hexdigest()[:PSEUDONYM_HEX_LENGTH]


def _username_patterns(usernames: Iterable[str]) -> list[tuple[str, re.Pattern]]:
    # Longest first, so a username that contains another is masked whole.
    ordered = sorted({u for u in usernames if u}, key=len, reverse=True)
    return [(u, re.compile("@?" + re.escape(u))) for u in ordered]


def anonymize(
    raw: RawComment, salt: bytes, known_usernames: Iterable[str] | None = None
) -> Comment:
    """Replace the author with a keyed pseudonym and mask inline mentions.

    Every occurrence of any username in `known_usernames` (with or without
    a leading "@") is replaced by the literal "[username]" token. Masking is
    plain substring replacement: anonymization must be total, so a username
    hiding inside a longer word is still removed.
    """
    if not salt:
        raise ConfigurationError("anonymization salt must be non-empty")
    inventory = set(known_usernames) if known_usernames is not None else {raw.author}
    inventory.discard("")
    text = raw.text
    for _, pattern in _username_patterns(inventory):
        text = pattern.sub(USERNAME_PLACEHOLDER, text)
    pseudo = pseudonym(raw.author, salt)
    while pseudo in inventory:  # vanishingly unlikely hex/username collision
        pseudo = pseudonym(pseudo + raw.author, salt)
    return Comment(
        id=raw.id,
        source=raw.source,
        article_id=raw.article_id,
        author_pseudonym=pseudo,
        created_at=raw.created_at,
        text=text,
        deleted=raw.deleted,
        language=raw.language,
    )


def anonymize_all(
    raws: Sequence[RawComment], salt: bytes, known_usernames: Iterable[str] | None = None
) -> list[Comment]:
    """Anonymize a whole corpus against its full username inventory."""
    inventory = (
        set(known_usernames)
        if known_usernames is not None
        else {r.author for r in raws if r.author}
    )
    return [anonymize(raw, salt, inventory) for raw in raws]


def keyword_filter(comments: Sequence[Comment], spec: SubcorpusSpec) -> list[Comment]:
    """Select comments for a keyword-defined subcorpus under a word budget.

    A comment matches a keyword iff the folded, case-normalized keyword is
    a substring of the folded, case-normalized text (folding only when the
    spec asks for it). Each comment is charged to the first keyword it
    matches, in spec order; per keyword, charged comments accumulate in
    corpus order until their word count first reaches or exceeds the
    budget ("approximately N words" by construction). Output preserves
    corpus order and tags each comment with the subcorpus name and the
    full set of keywords it matched.
    """
    if spec.fold_diacritics:
        normalize = _match_key
    else:
        normalize = str.casefold
    keyword_keys = [(kw, normalize(kw)) for kw in spec.keywords]

    selected_ids: set[str] = set()
    matched_by_id: dict[str, frozenset[str]] = {}
    budget_used: dict[str, int] = {kw: 0 for kw in spec.keywords}
    for comment in comments:
        text_key = normalize(comment.text)
        matches = [kw for kw, key in keyword_keys if key in text_key]
        if not matches:
            continue
        matched_by_id[comment.id] = frozenset(matches)
        charged = matches[0]
        if budget_used[charged] >= spec.word_budget_per_keyword:
            continue
        budget_used[charged] += comment.word_count()
        selected_ids.add(comment.id)

    return [
        replace(c, subcorpus=spec.name, matched_keywords=matched_by_id[c.id])
        for c in comments
        if c.id in selected_ids
    ]


def corpus_stats(comments: Sequence[Comment]) -> CorpusStats:
    """Tally comment, word, deleted, language, and subcorpus counts.

    A word is a maximal whitespace-delimited token.
    """
    per_language: dict[str, int] = {}
    per_subcorpus: dict[str, tuple[int, int]] = {}
    word_count = 0
    deleted_count = 0
    for comment in comments:
        words = comment.word_count()
        word_count += words
        deleted_count += int(comment.deleted)
        per_language[comment.language] = per_language.get(comment.language, 0) + 1
        if comment.subcorpus is not None:
            prev = per_subcorpus.get(comment.subcorpus, (0, 0))
            per_subcorpus[comment.subcorpus] = (prev[0] + 1, prev[1] + words)
    return CorpusStats(
        comment_count=len(comments),
        word_count=word_count,
        deleted_count=deleted_count,
        per_language=per_language,
        per_subcorpus=per_subcorpus,
    )


def write_comments_jsonl(comments: Iterable[Comment], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        for comment in comments:
            handle.write(json.dumps(comment.to_dict(), ensure_ascii=False) + "\n")


def read_comments_jsonl(path) -> list[Comment]:
    comments = []
    with open(path, "r", encoding="utf-8") as handle:
        for line in handle:
            if line.strip():
                comments.append(Comment.from_dict(json.loads(line)))
    return comments
