"""Text augmentation: cheap classical perturbations, consistency
enforcement, and sentence-wise self-paraphrasing through a generator.
"""

from __future__ import annotations

import itertools
import json
import random
import re
from typing import Callable, Optional, Sequence

from .core import AugmentedInput, TTScaleError, argmax_lowest_index
from .generator import GeneratorHandle
from .templates import load_template

CONSISTENCY_CONNECTOR = " In other words, "

#: Number of attempts granted to a paraphraser before giving up on it.
PARAPHRASE_ATTEMPTS = 3


class ParaphraseSchemaError(TTScaleError):
    """The paraphraser kept returning malformed output."""


def _keyboard_neighbors() -> dict[str, str]:
    # Staggered QWERTY grid; two keys are neighbors when their centers are
    # within 1.3 key widths. This is the fixed one-key-distance map.
    rows = ["1234567890", "qwertyuiop", "asdfghjkl", "zxcvbnm"]
    offsets = [0.0, 0.5, 0.75, 1.25]
    positions = {}
    for y, (row, off) in enumerate(zip(rows, offsets)):
        for i, ch in enumerate(row):
            positions[ch] = (off + i, float(y))
    neighbors: dict[str, str] = {}
    for ch, (x, y) in positions.items():
        near = [
            other
            for other, (ox, oy) in positions.items()
            if other != ch and ((x - ox) ** 2 + (y - oy) ** 2) ** 0.5 <= 1.3
        ]
        neighbors[ch] = "".join(sorted(near))
    return neighbors


QWERTY_NEIGHBORS = _keyboard_neighbors()


def keyboard_error(text: str, rate: float, seed: int) -> str:
    """Replace each alphanumeric character with prob. ``rate`` by a QWERTY neighbor.

    Case is preserved; string length never changes.
    """
    if not 0.0 <= rate <= 1.0:
        raise ValueError("rate must be in [0, 1]")
    rng = random.Random(seed)
    out = []
    for ch in text:
        lower = ch.lower()
        if lower in QWERTY_NEIGHBORS and rng.random() < rate:
            repl = rng.choice(QWERTY_NEIGHBORS[lower])
            out.append(repl.upper() if ch.isupper() else repl)
        else:
            out.append(ch)
    return "".join(out)


def word_split(text: str, seed: int) -> str:
    """Insert one space inside one uniformly chosen word of length >= 4."""
    words = text.split()
    candidates = [i for i, w in enumerate(words) if len(w) >= 4]
    if not candidates:
        return text
    rng = random.Random(seed)
    idx = candidates[rng.randrange(len(candidates))]
    word = words[idx]
    cut = rng.randrange(1, len(word))
    words[idx] = word[:cut] + " " + word[cut:]
    return " ".join(words)


def word_delete(text: str, seed: int) -> str:
    """Remove one uniformly chosen word; identity below 3 words."""
    words = text.split()
    if len(words) < 3:
        return text
    rng = random.Random(seed)
    del words[rng.randrange(len(words))]
    return " ".join(words)


def split_sentences(text: str) -> list[str]:
    """Rule-based splitter: break after '.', '!' or '?' followed by whitespace."""
    text = text.strip()
    if not text:
        return []
    return re.split(r"(?<=[.!?])\s+", text)


def sentence_reorder(text: str, seed: int) -> str:
    """Swap one uniformly chosen adjacent sentence pair; identity below 2 sentences."""
    sentences = split_sentences(text)
    if len(sentences) < 2:
        return text
    rng = random.Random(seed)
    i = rng.randrange(len(sentences) - 1)
    sentences[i], sentences[i + 1] = sentences[i + 1], sentences[i]
    return " ".join(sentences)


def classical_text_pipeline(
    text: str,
    seed: int,
    include_prob: float = 0.5,
    keyboard_rate: float = 0.05,
) -> str:
    """Apply the four classical operators in seeded random order.

    Each operator is independently included with ``include_prob`` and runs
    with its own sub-seed, so a fixed (text, seed) pair always produces the
    same output.
    """
    rng = random.Random(seed)
    ops: list[Callable[[str, int], str]] = [
        lambda t, s: keyboard_error(t, keyboard_rate, s),
        word_split,
        word_delete,
        sentence_reorder,
    ]
    rng.shuffle(ops)
    for op in ops:
        if rng.random() < include_prob:
            text = op(text, rng.randrange(2**32))
    return text


def enforce_consistency(augmented: str, original: str) -> str:
    """Anchor an augmented prompt to its original meaning.

    Output is ``augmented + " In other words, " + original``, so the
    original prompt is always a suffix of the result.
    """
    if not augmented or not original:
        raise ValueError("both augmented and original must be non-empty")
    return augmented + CONSISTENCY_CONNECTOR + original


def render_paraphrase_request(sentence: str, n_aug: int) -> str:
    """The paraphrasing prompt for one sentence."""
    return load_template("paraphraser").replace("{n_aug}", str(n_aug)) + "\n" + sentence


def _parse_paraphrases(raw: str, n_aug: int) -> Optional[list[str]]:
    try:
        obj = json.loads(raw)
    except json.JSONDecodeError:
        return None
    if not isinstance(obj, dict) or "paraphrases" not in obj:
        return None
    items = obj["paraphrases"]
    if not isinstance(items, list) or len(items) != n_aug:
        return None
    if not all(isinstance(s, str) for s in items):
        return None
    return items


def _greedy_text(g: GeneratorHandle, prompt: str, max_tokens: int) -> str:
    """Plain greedy decode of a prompt into text via token strings."""
    eos = getattr(g, "eos_id", None)
    tokens: list[int] = []
    for _ in range(max_tokens):
        probs = g.step(AugmentedInput(prompt=prompt), tuple(tokens))
        tok = argmax_lowest_index(probs)
        if eos is not None and tok == eos:
            break
        tokens.append(tok)
    return g.decode(tokens)


def self_paraphrase(
    paraphraser: GeneratorHandle,
    prompt: str,
    n_aug: int,
    seed: int,
    max_tokens: int = 256,
) -> list[str]:
    """Produce ``n_aug`` full-prompt paraphrases via sentence-wise paraphrasing.

    Each sentence is paraphrased ``n_aug`` times through a JSON-schema
    constrained request; full prompts are then drawn from the Cartesian
    product of the per-sentence paraphrase sets. When the product holds at
    least ``n_aug`` combinations the draws are distinct; otherwise every
    combination is used and the remainder is sampled with replacement.

    Raises:
        ParaphraseSchemaError: a sentence request failed 3 times in a row.
    """
    if n_aug < 1:
        raise ValueError("n_aug must be >= 1")
    sentences = split_sentences(prompt)
    if not sentences:
        raise ValueError("prompt contains no sentences")

    per_sentence: list[list[str]] = []
    for sentence in sentences:
        request = render_paraphrase_request(sentence, n_aug)
        parsed = None
        for _ in range(PARAPHRASE_ATTEMPTS):
            parsed = _parse_paraphrases(_greedy_text(paraphraser, request, max_tokens), n_aug)
            if parsed is not None:
                break
        if parsed is None:
            raise ParaphraseSchemaError(
                f"paraphraser failed schema after {PARAPHRASE_ATTEMPTS} attempts on: {sentence!r}"
            )
        per_sentence.append(parsed)

    rng = random.Random(seed)
    product_size = 1
    for options in per_sentence:
        product_size *= len(options)

    def combo_at(index: int) -> str:
        parts = []
        for options in reversed(per_sentence):
            index, pos = divmod(index, len(options))
            parts.append(options[pos])
        return " ".join(reversed(parts))

    if product_size <= n_aug:
        chosen = list(range(product_size))
        chosen += [rng.randrange(product_size) for _ in range(n_aug - product_size)]
    else:
        chosen = sorted(rng.sample(range(product_size), n_aug))
    return [combo_at(i) for i in chosen]
