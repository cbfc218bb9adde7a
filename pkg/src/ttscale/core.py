"""Shared domain types: token distributions, augmented inputs, generation
configuration, benchmark records, and their (de)serialization.

All types here are immutable values and safe to share across workers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np

# Absolute tolerance for "sums to one": comfortably above the accumulation
# error of averaging <= 64 probability vectors in double precision.
NORMALIZATION_ATOL = 1e-6

# Token distributions with any entry below this are rejected outright;
# entries in [-1e-9, 0) are treated as round-off and clipped to 0.
NEGATIVE_ATOL = 1e-9

AGGREGATION_RULES = ("average", "entropy_weighted", "majority", "most_confident")
MODALITIES = ("text", "image", "both", "none")
TEXT_STRATEGIES = ("classical", "self_paraphrase")
IMAGE_STRENGTHS = ("low", "medium", "high")
TASK_TYPES = ("exact", "vqa", "relaxed", "substring", "mcq", "yesno", "caption")

# Sentinel for "aggregate at the final layer" in GenerationConfig.layer.
FINAL_LAYER = None


class TTScaleError(Exception):
    """Base class for all toolkit errors."""


class NegativeProbabilityError(TTScaleError, ValueError):
    """A probability vector contains an entry below -1e-9."""


class NotNormalizedError(TTScaleError, ValueError):
    """A probability vector does not sum to 1 within tolerance."""


def validate_distribution(probs: Sequence[float] | np.ndarray) -> np.ndarray:
    """Validate a probability vector over a vocabulary and renormalize it.

    Entries must be >= -1e-9 (tiny negatives are clipped to zero) and the
    sum must be within 1e-6 of 1, in which case the vector is divided by
    its sum. Vectors already normalized to machine precision (|sum - 1|
    <= 1e-12) are returned untouched, which makes validation exactly
    idempotent. Entry order is never changed.

    Raises:
        NegativeProbabilityError: some entry is below -1e-9.
        NotNormalizedError: |sum - 1| exceeds 1e-6.
    """
    d = np.asarray(probs, dtype=np.float64)
    if d.ndim != 1:
        raise NotNormalizedError(f"expected a 1-d probability vector, got shape {d.shape}")
    if d.size == 0:
        raise NotNormalizedError("empty probability vector")
    lo = d.min()
    if lo < -NEGATIVE_ATOL:
        raise NegativeProbabilityError(f"negative probability {lo!r}")
    if lo < 0.0:
        d = np.maximum(d, 0.0)
    total = d.sum()
    if abs(total - 1.0) > NORMALIZATION_ATOL:
        raise NotNormalizedError(f"probabilities sum to {total!r}, outside tolerance {NORMALIZATION_ATOL}")
    if abs(total - 1.0) <= 1e-12:
        return d
    return d / total


def argmax_lowest_index(values: np.ndarray) -> int:
    """Argmax with the toolkit-wide tie rule: the lowest index wins."""
    return int(np.argmax(values))


@dataclass(frozen=True)
class AugmentedInput:
    """One (image, prompt) variant of a source question.

    ``image`` is an H x W x 3 uint8 array, or None for text-only tasks.
    ``variant_index`` identifies the variant within its batch of N.
    """

    prompt: str
    image: Optional[np.ndarray] = None
    origin_id: str = ""
    variant_index: int = 0

    def __post_init__(self) -> None:
        if not self.prompt:
            raise ValueError("prompt must be non-empty")
        if self.variant_index < 0:
            raise ValueError("variant_index must be >= 0")
        if self.image is not None:
            img = self.image
            if img.ndim != 3 or img.shape[2] != 3 or img.dtype != np.uint8:
                raise ValueError(f"image must be HxWx3 uint8, got {img.dtype} {img.shape}")


@dataclass(frozen=True)
class GenerationConfig:
    """All decoding knobs for augmented generation.

    ``layer`` selects where branch outputs are merged: ``FINAL_LAYER``
    (None) merges final-step token distributions; an integer in [1, L]
    merges hidden states at that layer and resumes the forward pass.
    Discrete rules (majority, most_confident) have no hidden-state form
    and therefore require the final layer.
    """

    n_aug: int = 16
    aggregation: str = "average"
    layer: Optional[int] = FINAL_LAYER
    modality: str = "both"
    text_strategy: str = "classical"
    image_strength: str = "high"
    consistency_enforcement: bool = True
    max_tokens: int = 32
    seed: int = 0
    eos_token: int = 0
    average_in_log_space: bool = False  # experimental; no acceptance claims

    def __post_init__(self) -> None:
        if self.n_aug < 1:
            raise ValueError("n_aug must be >= 1")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")
        if self.aggregation not in AGGREGATION_RULES:
            raise ValueError(f"unknown aggregation {self.aggregation!r}")
        if self.modality not in MODALITIES:
            raise ValueError(f"unknown modality {self.modality!r}")
        if self.text_strategy not in TEXT_STRATEGIES:
            raise ValueError(f"unknown text_strategy {self.text_strategy!r}")
        if self.image_strength not in IMAGE_STRENGTHS:
            raise ValueError(f"unknown image_strength {self.image_strength!r}")
        if self.layer is not None and self.aggregation in ("majority", "most_confident"):
            raise ValueError("discrete aggregation rules require layer=FINAL_LAYER")
        if self.layer is not None and self.layer < 1:
            raise ValueError("layer must be >= 1 or FINAL_LAYER")

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, raw: dict) -> "GenerationConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown GenerationConfig keys: {sorted(unknown)}")
        return cls(**raw)


@dataclass(frozen=True)
class GenerationTrace:
    """The outcome of one decode: token ids plus optional per-step detail.

    ``per_step_distributions`` holds one N x |V| matrix per generated token
    (toy scale only); ``aggregated_distributions`` the merged vector that
    the token was selected from.
    """

    tokens: tuple[int, ...]
    per_step_distributions: Optional[tuple[np.ndarray, ...]] = None
    aggregated_distributions: Optional[tuple[np.ndarray, ...]] = None
    wall_time_s: float = 0.0

    def __post_init__(self) -> None:
        if self.wall_time_s < 0:
            raise ValueError("wall_time_s must be >= 0")

    def ends_properly(self, eos_token: int, max_tokens: int) -> bool:
        """True iff the trace stopped at EOS or hit the token budget."""
        return (len(self.tokens) > 0 and self.tokens[-1] == eos_token) or len(self.tokens) == max_tokens


def dump_trace_jsonl(trace: GenerationTrace, path: str) -> None:
    """Write one JSON line per generation step with the full N x |V| rows."""
    with open(path, "w", encoding="utf-8") as fh:
        for j, token in enumerate(trace.tokens):
            row: dict = {"step": j, "token": int(token)}
            if trace.per_step_distributions is not None:
                row["rows"] = np.asarray(trace.per_step_distributions[j]).tolist()
            if trace.aggregated_distributions is not None:
                row["aggregated"] = np.asarray(trace.aggregated_distributions[j]).tolist()
            fh.write(json.dumps(row) + "\n")


@dataclass(frozen=True)
class QuestionRecord:
    """One benchmark item: prompt, reference answers, and scoring task."""

    id: str
    prompt: str
    answers: tuple[str, ...]
    task: str
    image_path: Optional[str] = None
    choices: Optional[tuple[tuple[str, str], ...]] = None

    def __post_init__(self) -> None:
        if not self.answers:
            raise ValueError("answers must be non-empty")
        if self.task not in TASK_TYPES:
            raise ValueError(f"unknown task {self.task!r}")
        if self.task == "mcq":
            if not self.choices:
                raise ValueError("mcq records require choices")
            labels = [label for label, _ in self.choices]
            if len(set(labels)) != len(labels) or any(
                len(label) != 1 or not label.isupper() or not label.isalpha() for label in labels
            ):
                raise ValueError("mcq choice labels must be distinct single uppercase letters")

    def to_dict(self) -> dict:
        out: dict = {
            "id": self.id,
            "prompt": self.prompt,
            "answers": list(self.answers),
            "task": self.task,
        }
        if self.image_path is not None:
            out["image_path"] = self.image_path
        if self.choices is not None:
            out["choices"] = [list(pair) for pair in self.choices]
        return out

    @classmethod
    def from_dict(cls, raw: dict) -> "QuestionRecord":
        known = {"id", "prompt", "answers", "task", "image_path", "choices"}
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown QuestionRecord keys: {sorted(unknown)}")
        choices = raw.get("choices")
        return cls(
            id=raw["id"],
            prompt=raw["prompt"],
            answers=tuple(raw["answers"]),
            task=raw["task"],
            image_path=raw.get("image_path"),
            choices=tuple((c[0], c[1]) for c in choices) if choices is not None else None,
        )


@dataclass(frozen=True)
class MetricResult:
    """One scored prediction for one record."""

    id: str
    score: float
    metric_name: str
    prediction: str

    def __post_init__(self) -> None:
        if not (0.0 <= self.score <= 1.0):
            raise ValueError(f"score must be in [0, 1], got {self.score}")

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "score": self.score,
            "metric_name": self.metric_name,
            "prediction": self.prediction,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "MetricResult":
        return cls(
            id=raw["id"],
            score=raw["score"],
            metric_name=raw["metric_name"],
            prediction=raw["prediction"],
        )


def read_question_records(path: str) -> list[QuestionRecord]:
    """Read a UTF-8 JSON Lines corpus, one QuestionRecord per line."""
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(QuestionRecord.from_dict(json.loads(line)))
            except (ValueError, KeyError) as exc:
                raise ValueError(f"{path}:{line_no}: bad record: {exc}") from exc
    return records


def write_question_records(records: Iterable[QuestionRecord], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_dict()) + "\n")


def write_metric_results(results: Iterable[MetricResult], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for res in results:
            fh.write(json.dumps(res.to_dict()) + "\n")


def read_metric_results(path: str) -> list[MetricResult]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(MetricResult.from_dict(json.loads(line)))
    return out
