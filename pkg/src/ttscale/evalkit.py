"""Benchmark ingestion, deterministic subsampling, text normalization,
and per-task scoring metrics.

All metrics return values in [0, 1]; the binary ones return exactly 0 or
1. Scoring is pure, so records can be scored in parallel.
"""

from __future__ import annotations

import csv
import re
from typing import Optional, Sequence

from .core import MetricResult, QuestionRecord, TTScaleError


class SampleSizeError(TTScaleError, ValueError):
    """Requested sample count exceeds the dataset size."""


class UnknownTaskError(TTScaleError, ValueError):
    """Record carries a task type with no metric."""


def uniform_interval_sample(dataset_size: int, k: int) -> list[int]:
    """Indices floor(i * M / k) for i in 0..k-1: deterministic, strictly increasing."""
    if not 1 <= k <= dataset_size:
        raise SampleSizeError(f"k={k} outside [1, {dataset_size}]")
    return [(i * dataset_size) // k for i in range(k)]


def normalize_text(s: str) -> str:
    """Lowercase, strip ends, collapse whitespace runs (incl. newlines) to one space."""
    return " ".join(s.lower().split())


def exact_match(pred: str, answers: Sequence[str]) -> int:
    """1 iff the normalized prediction equals any normalized answer."""
    p = normalize_text(pred)
    return int(any(p == normalize_text(a) for a in answers))


def vqa_score(pred: str, answers: Sequence[str]) -> float:
    """min(1, matches/3) over the annotator answer set."""
    p = normalize_text(pred)
    matches = sum(p == normalize_text(a) for a in answers)
    return min(1.0, matches / 3.0)


_NUMBER_RE = re.compile(r"[+-]?(\d+(\.\d*)?|\.\d+)")


def parse_number(s: str) -> Optional[float]:
    """Parse a numeric answer; 'X%' becomes X/100, thousands separators are dropped."""
    t = s.strip()
    percent = t.endswith("%")
    if percent:
        t = t[:-1].strip()
    t = t.replace(",", "")
    if not _NUMBER_RE.fullmatch(t):
        return None
    value = float(t)
    return value / 100.0 if percent else value


def relaxed_match(pred: str, answers: Sequence[str]) -> int:
    """Numeric comparison at 5% relative tolerance, exact match otherwise.

    A zero reference requires an exactly-zero prediction (no relative
    error is defined at zero).
    """
    vp = parse_number(pred)
    p = normalize_text(pred)
    for answer in answers:
        va = parse_number(answer)
        if vp is not None and va is not None:
            if va == 0.0:
                if vp == 0.0:
                    return 1
            elif abs(vp - va) / abs(va) <= 0.05:
                return 1
        elif p == normalize_text(answer):
            return 1
    return 0


def substring_match(pred: str, answers: Sequence[str], strip_all_whitespace: bool = False) -> int:
    """1 iff any normalized answer is a contiguous substring of the prediction.

    ``strip_all_whitespace`` additionally compares with every whitespace
    character removed, which absorbs formatting variation in
    mathematical expressions.
    """
    p = normalize_text(pred)
    p_tight = re.sub(r"\s+", "", p)
    for answer in answers:
        a = normalize_text(answer)
        if a in p:
            return 1
        if strip_all_whitespace and re.sub(r"\s+", "", a) in p_tight:
            return 1
    return 0


_MCQ_RE = re.compile(r"(?<![A-Za-z])([A-Z])(?![A-Za-z])")
_YESNO_RE = re.compile(r"\b(yes|no)\b")


def mcq_extract(pred: str) -> Optional[str]:
    """First single uppercase letter appearing in isolation, else None.

    Case is preserved during the scan, so surrounding punctuation like
    "(C)" or "C." is fine but letters embedded in words never match.
    """
    m = _MCQ_RE.search(pred)
    return m.group(1) if m else None


def yesno_extract(pred: str) -> Optional[str]:
    """First isolated yes/no word, case-insensitive, else None."""
    m = _YESNO_RE.search(pred.lower())
    return m.group(1) if m else None


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    """Longest-common-subsequence length by dynamic programming."""
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0] * (len(b) + 1)
        for j, y in enumerate(b, start=1):
            cur[j] = prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1])
        prev = cur
    return prev[-1]


def rouge_l(pred: str, refs: Sequence[str]) -> float:
    """LCS F-measure over whitespace tokens, maximized over references."""
    pred_tokens = normalize_text(pred).split()
    best = 0.0
    for ref in refs:
        ref_tokens = normalize_text(ref).split()
        lcs = lcs_length(pred_tokens, ref_tokens)
        precision = lcs / len(pred_tokens) if pred_tokens else 0.0
        recall = lcs / len(ref_tokens) if ref_tokens else 0.0
        f = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
        best = max(best, f)
    return best


def score_record(rec: QuestionRecord, pred: str) -> MetricResult:
    """Route a prediction to the metric matching the record's task type."""
    if rec.task == "exact":
        score, name = float(exact_match(pred, rec.answers)), "exact_match"
    elif rec.task == "vqa":
        score, name = vqa_score(pred, rec.answers), "vqa_score"
    elif rec.task == "relaxed":
        score, name = float(relaxed_match(pred, rec.answers)), "relaxed_match"
    elif rec.task == "substring":
        score, name = float(substring_match(pred, rec.answers)), "substring_match"
    elif rec.task == "mcq":
        label = mcq_extract(pred)
        score = float(label is not None and any(label == a.strip().upper() for a in rec.answers))
        name = "mcq_accuracy"
    elif rec.task == "yesno":
        word = yesno_extract(pred)
        score = float(word is not None and any(word == normalize_text(a) for a in rec.answers))
        name = "yesno_accuracy"
    elif rec.task == "caption":
        score, name = rouge_l(pred, rec.answers), "rouge_l"
    else:
        raise UnknownTaskError(f"no metric for task {rec.task!r}")
    return MetricResult(id=rec.id, score=score, metric_name=name, prediction=pred)


def write_aggregate_csv(path: str, rows: Sequence[tuple[str, str, float]]) -> None:
    """Aggregate CSV with one (benchmark, method, mean score) row per run."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["benchmark", "method", "mean_score"])
        for benchmark, method, mean_score in rows:
            writer.writerow([benchmark, method, f"{mean_score:.6f}"])
