"""Pydantic request/response models for the HTTP API.

These mirror the JSONL wire formats used on disk; enum values are the
exact strings of the scheme contract (e.g. "Negative", "DerogatoryTerm",
"Q3_Strategies"), so UI clients and the store speak one language.
"""

from __future__ import annotations

from typing import Any, Optional

from pydantic import BaseModel, Field


class CommentIn(BaseModel):
    id: str
    source: str = ""
    article_id: str = ""
    author_pseudonym: str = ""
    created_at: Optional[str] = None
    text: str
    deleted: bool = False
    language: str = "unknown"
    subcorpus: Optional[str] = None
    matched_keywords: list[str] = Field(default_factory=list)


class RegistryEntryIn(BaseModel):
    canonical: str
    aliases: list[str] = Field(default_factory=list)
    protected: bool = False


class RegistryIn(BaseModel):
    entries: list[RegistryEntryIn]


class ManifestIn(BaseModel):
    seed: int
    strata: list[tuple[str, list[str]]]
    item_order_by_annotator: dict[str, list[str]] = Field(default_factory=dict)
    author_adjacent_orders: list[str] = Field(default_factory=list)


class ExperimentConfigIn(BaseModel):
    experiment_id: str
    arm_sizes: dict[str, int]
    genders: list[str] = Field(default_factory=lambda: ["female", "male"])
    age_bands: list[str] = Field(default_factory=lambda: ["21-40", "41-60"])
    conscious_threshold: float = 2.0 / 3.0
    tie_break: str = "Escalate"
    assignment_seed: int = 0
    order_seed: int = 0
    share_presentation_order: bool = False
    binary_instruction: Optional[str] = None


class CreateExperimentRequest(BaseModel):
    config: ExperimentConfigIn
    comments: list[CommentIn]
    manifest: ManifestIn
    registry: Optional[RegistryIn] = None  # default jurisdiction registry if omitted


class CreateExperimentResponse(BaseModel):
    experiment_id: str
    items: int
    arms: dict[str, int]


class RegisterAnnotatorRequest(BaseModel):
    experiment_id: str
    annotator_id: str
    gender: str
    age_band: str
    consent: bool = False


class RegisterAnnotatorResponse(BaseModel):
    annotator_id: str
    arm: str
    items: int


class Progress(BaseModel):
    completed: int
    total: int


class NextTaskResponse(BaseModel):
    done: bool
    arm: str
    progress: Progress
    comment_id: Optional[str] = None
    text: Optional[str] = None
    question: Optional[str] = None
    instruction: Optional[str] = None
    answered: Optional[dict[str, Any]] = None


class SubmitRequest(BaseModel):
    experiment_id: str
    annotator_id: str
    comment_id: str
    question: str
    answer: Any


class Violation(BaseModel):
    field: str
    message: str


class SubmitResponse(BaseModel):
    accepted: bool
    item_complete: bool = False
    next_question: Optional[str] = None
    violations: list[Violation] = Field(default_factory=list)


class ExportResponse(BaseModel):
    manifest: dict[str, Any]
    files: dict[str, str]  # file name -> full text content
