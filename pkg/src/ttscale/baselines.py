"""Answer-level test-time scaling baselines.

Covers diversity inducement by temperature sampling and four ways of
turning N complete candidate answers into one: majority voting over
normalized answers, log-probability ranking, model-as-selector with
constrained integer decoding, and model-as-synthesizer.
"""

from __future__ import annotations

import time
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

from .core import (
    AugmentedInput,
    GenerationConfig,
    GenerationTrace,
    TTScaleError,
    argmax_lowest_index,
)
from .decoder import greedy_generate
from .evalkit import normalize_text
from .generator import GeneratorHandle
from .templates import load_template


class ConstraintUnsatisfiableError(TTScaleError):
    """The vocabulary cannot spell any integer in the required range."""


def temperature_sample(
    g: GeneratorHandle,
    inp: AugmentedInput,
    temperature: float,
    cfg: GenerationConfig,
    seed: int,
) -> GenerationTrace:
    """Autoregressive sampling from the temperature-softened distribution.

    Each step samples from p^(1/T) renormalized, which equals
    softmax(log-probs / T). As T approaches 0 this reduces to greedy
    decoding; at T=1 it samples from the model's own distribution.
    """
    if temperature <= 0:
        raise ValueError("temperature must be > 0")
    rng = np.random.default_rng(seed)
    started = time.perf_counter()
    tokens: list[int] = []
    while len(tokens) < cfg.max_tokens:
        probs = g.step(inp, tuple(tokens))
        with np.errstate(divide="ignore"):
            scaled = np.log(probs) / temperature
        w = np.exp(scaled - scaled.max())
        w /= w.sum()
        tok = int(rng.choice(len(w), p=w))
        tokens.append(tok)
        if tok == cfg.eos_token:
            break
    return GenerationTrace(tokens=tuple(tokens), wall_time_s=time.perf_counter() - started)


def self_consistency(answers: Sequence[str]) -> str:
    """Majority vote over normalized answers.

    Answers that normalize to the same string pool their votes; ties go to
    the class seen earliest. The returned representative is the earliest
    raw answer of the winning class, stripped of surrounding whitespace.
    """
    if not answers:
        raise ValueError("answers must be non-empty")
    counts: dict[str, int] = {}
    first_raw: dict[str, str] = {}
    for raw in answers:
        key = normalize_text(raw)
        counts[key] = counts.get(key, 0) + 1
        first_raw.setdefault(key, raw)
    best_key = max(counts, key=lambda k: counts[k])  # dict order: earliest wins ties
    return first_raw[best_key].strip()


def sample_and_rank(candidates: Sequence[tuple[str, Sequence[float]]]) -> str:
    """Pick the candidate with the highest total (summed) log probability.

    Deliberately not length-normalized. Ties go to the earliest candidate.
    """
    if not candidates:
        raise ValueError("candidates must be non-empty")
    best_text, best_score = None, -np.inf
    for text, logprobs in candidates:
        if len(logprobs) == 0:
            raise ValueError("each candidate needs at least one token log-prob")
        score = float(np.sum(logprobs))
        if score > best_score:
            best_text, best_score = text, score
    return best_text


def render_candidates(candidates: Sequence[str]) -> str:
    """Zero-based 'index: text' lines for unambiguous index references."""
    return "\n".join(f"{i}: {text}" for i, text in enumerate(candidates))


def render_selector_prompt(question: str, candidates: Sequence[str]) -> str:
    return (
        load_template("selector")
        .replace("{input_question}", question)
        .replace("{responses}", render_candidates(candidates))
        .replace("{n_aug}", str(len(candidates) - 1))
    )


def render_synthesizer_prompt(question: str, candidates: Sequence[str]) -> str:
    return (
        load_template("synthesizer")
        .replace("{input_question}", question)
        .replace("{responses}", render_candidates(candidates))
    )


@lru_cache(maxsize=65536)
def _spellable(target: str, vocab: tuple[str, ...]) -> bool:
    """Can ``target`` be written as a concatenation of vocabulary tokens?"""
    if not target:
        return True
    return any(target.startswith(tok) and _spellable(target[len(tok):], vocab) for tok in vocab if tok)


def self_select(
    g: GeneratorHandle,
    question: str,
    candidates: Sequence[str],
    seed: int = 0,
) -> int:
    """Ask the generator to pick the best candidate by index.

    The reply is decoded under a hard constraint: at every step only
    tokens that keep the output a prefix of some integer in
    [0, len(candidates) - 1] stay unmasked (EOS becomes legal once the
    output is a complete in-range integer), so the result is always a
    valid index. A single candidate short-circuits to 0 without querying
    the model. ``seed`` is accepted for interface stability; decoding
    under the mask is greedy.

    Raises:
        ConstraintUnsatisfiableError: the vocabulary cannot spell any
            in-range integer.
    """
    if not 1 <= len(candidates):
        raise ValueError("need at least one candidate")
    if len(candidates) == 1:
        return 0
    if g.token_strings is None:
        raise ConstraintUnsatisfiableError("generator exposes no token strings to constrain")

    vocab = g.token_strings
    eos = getattr(g, "eos_id", None)
    valid = [str(i) for i in range(len(candidates))]
    if not any(_spellable(v, vocab) for v in valid):
        raise ConstraintUnsatisfiableError("vocabulary cannot express any in-range integer")

    prompt = render_selector_prompt(question, candidates)
    inp = AugmentedInput(prompt=prompt)
    current = ""
    tokens: list[int] = []
    max_steps = max(len(v) for v in valid) + 1
    for _ in range(max_steps):
        probs = g.step(inp, tuple(tokens))
        allowed = np.zeros(len(vocab), dtype=bool)
        for tid, tok_str in enumerate(vocab):
            if eos is not None and tid == eos:
                allowed[tid] = current in valid
                continue
            extended = current + tok_str
            for v in valid:
                if v.startswith(extended) and _spellable(v[len(extended):], vocab):
                    allowed[tid] = True
                    break
        if not allowed.any():
            break
        masked = np.where(allowed, probs, 0.0)
        if masked.sum() <= 0.0:
            tok = int(np.argmax(allowed))  # no mass on legal tokens: lowest legal id
        else:
            tok = argmax_lowest_index(masked)
        if eos is not None and tok == eos:
            break
        tokens.append(tok)
        current += vocab[tok]
    if current not in valid:
        raise ConstraintUnsatisfiableError(f"constrained decode ended on {current!r}")
    return int(current)


def self_synthesize(
    g: GeneratorHandle,
    question: str,
    candidates: Sequence[str],
    cfg: GenerationConfig,
) -> str:
    """Ask the generator to merge the candidates into one answer (greedy decode)."""
    if not candidates:
        raise ValueError("candidates must be non-empty")
    prompt = render_synthesizer_prompt(question, candidates)
    trace = greedy_generate(g, AugmentedInput(prompt=prompt), cfg.max_tokens, cfg.eos_token)
    return g.decode(trace.tokens, eos_token=cfg.eos_token).strip()
