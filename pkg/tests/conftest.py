"""Shared toy-model builders for the test suite."""

from __future__ import annotations

import json
import os

import numpy as np
import pytest

from ttscale.core import AugmentedInput, GenerationConfig, QuestionRecord, write_question_records
from ttscale.generator import TableEntry, ToyModel, ToyModelSpec


def make_toy(entries, vocab=("yes", "no", "</s>"), **spec_kw) -> ToyModel:
    """Toy model from (prompt, prefix, probs[, image_fp]) tuples."""
    rows = tuple(TableEntry(prompt=e[0], prefix=tuple(e[1]), probs=tuple(e[2]),
                            image_fp=e[3] if len(e) > 3 else "") for e in entries)
    return ToyModel(ToyModelSpec(vocab=tuple(vocab), entries=rows, **spec_kw))


def random_rows(rng: np.random.Generator, n: int, width: int) -> np.ndarray:
    """Random step matrix with strictly positive, normalized rows."""
    m = rng.dirichlet(np.ones(width), size=n)
    return m / m.sum(axis=1, keepdims=True)


def complete_random_toy(rng: np.random.Generator, n_variants: int, vocab_size: int, depth: int):
    """A toy model whose table covers every prefix up to ``depth`` for every variant.

    Ensures the decoding loop never falls back to the uniform distribution,
    so exhaustive recomputation sees exactly the same rows.
    """
    vocab = tuple(f"t{i} " for i in range(vocab_size - 1)) + ("</s>",)
    prompts = [f"variant {v} prompt" for v in range(n_variants)]
    entries = []
    prefixes: list[tuple[int, ...]] = [()]
    frontier: list[tuple[int, ...]] = [()]
    for _ in range(depth - 1):
        frontier = [p + (t,) for p in frontier for t in range(vocab_size)]
        prefixes += frontier
    for prompt in prompts:
        for prefix in prefixes:
            probs = rng.dirichlet(np.ones(vocab_size))
            entries.append(TableEntry(prompt=prompt, prefix=prefix, probs=tuple(probs)))
    model = ToyModel(ToyModelSpec(vocab=vocab, entries=tuple(entries), context_limit=depth + 2))
    inputs = [AugmentedInput(prompt=p, origin_id="x", variant_index=i) for i, p in enumerate(prompts)]
    return model, inputs


FIXTURE_SEED = 123
FIXTURE_N = 4
FIXTURE_FLIPS = 5


def build_flip_fixture(tmp_dir: str) -> tuple[str, str]:
    """20-record dataset plus a toy-model table with engineered disagreement.

    The first 5 records are wrong under plain decoding (their base row
    favors the wrong token) but every augmented variant strongly favors
    the right one, so averaging flips exactly those 5. Variant prompts are
    precomputed through the same seeded construction the evaluation loop
    uses, so the table rows address exactly the contexts the run will
    query. Returns (dataset_path, toy_spec_path).
    """
    from ttscale.runner import build_augmented_inputs, derive_seed

    gen = GenerationConfig(
        n_aug=FIXTURE_N, aggregation="average", modality="text",
        max_tokens=3, seed=FIXTURE_SEED, eos_token=2,
    )
    records = []
    entries = []

    def add_rows(prompt: str, probs: list[float]) -> None:
        entries.append({"prompt": prompt, "prefix": [], "probs": probs})
        for tok in (0, 1):
            entries.append({"prompt": prompt, "prefix": [tok], "probs": [0.0, 0.0, 1.0]})

    for i in range(20):
        rid = f"q{i:02d}"
        prompt = f"Fixture question {i}: does the answer hold? Please reply carefully."
        records.append(QuestionRecord(id=rid, prompt=prompt, answers=("yes",), task="exact"))
        add_rows(prompt, [0.3, 0.7, 0.0] if i < FIXTURE_FLIPS else [0.8, 0.15, 0.05])
        variants = build_augmented_inputs(
            prompt, None, FIXTURE_N, gen, derive_seed(FIXTURE_SEED, rid), origin_id=rid
        )
        for variant in variants[1:]:
            add_rows(variant.prompt, [0.9, 0.1, 0.0])

    dataset_path = os.path.join(tmp_dir, "fixture.jsonl")
    write_question_records(records, dataset_path)
    spec_path = os.path.join(tmp_dir, "toy.json")
    with open(spec_path, "w", encoding="utf-8") as fh:
        json.dump(
            {"vocab": ["yes", "no", "</s>"], "eos": "</s>", "num_layers": 3,
             "context_limit": 16, "entries": entries},
            fh,
        )
    return dataset_path, spec_path
