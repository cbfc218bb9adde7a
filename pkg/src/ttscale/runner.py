"""End-to-end orchestration: run configuration, augmented-input
construction per modality, method dispatch, scoring, the execution-mode
overhead benchmark, and augmentation dumps.
"""

from __future__ import annotations

import hashlib
import json
import os
import resource
import statistics
import struct
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .adapt import AdaptConfig, WeightOptConfig, ttadapt_answer, ttadapt_weights_generate
from .baselines import sample_and_rank, self_consistency, self_select, self_synthesize
from .core import (
    AugmentedInput,
    GenerationConfig,
    GenerationTrace,
    MetricResult,
    QuestionRecord,
    TTScaleError,
    read_question_records,
)
from .decoder import greedy_generate, ttaug_generate
from .evalkit import score_record, uniform_interval_sample, write_aggregate_csv
from .generator import GeneratorHandle, RemoteGenerator, ToyModel, ToyModelSpec
from .imageaug import apply_image_aug, load_image, save_png
from .textaug import classical_text_pipeline, enforce_consistency, self_paraphrase

METHODS = (
    "baseline",
    "ttaug",
    "ttadapt_weights",
    "ttadapt_params",
    "self_consistency",
    "self_selector",
    "sample_and_rank",
    "self_synthesizer",
)


class DatasetNotFoundError(TTScaleError, FileNotFoundError):
    """Dataset path does not exist or is unreadable."""


class ModelUnavailableError(TTScaleError):
    """The configured model cannot be constructed or reached."""


def derive_seed(*parts) -> int:
    """Stable 63-bit seed from a mix of ints and strings.

    Used for per-question seeds (seed, record id) and per-variant
    sub-seeds, so changing one record never perturbs another's draws.
    """
    h = hashlib.blake2b(digest_size=8)
    for part in parts:
        if isinstance(part, int):
            h.update(b"i" + struct.pack("<q", part))
        else:
            h.update(b"s" + str(part).encode("utf-8"))
        h.update(b"\x1f")
    return int.from_bytes(h.digest(), "big") >> 1


def build_augmented_inputs(
    prompt: str,
    image: Optional[np.ndarray],
    n_aug: int,
    cfg: GenerationConfig,
    seed: int,
    origin_id: str = "",
    include_identity: bool = True,
    paraphraser: Optional[GeneratorHandle] = None,
) -> list[AugmentedInput]:
    """Construct the N branch inputs for one question under the modality switch.

    ``text`` augments only the prompt, ``image`` only the image, ``both``
    augments both, and ``none`` replicates the original input untouched.
    With ``include_identity`` the first variant is always the unmodified
    input, so an N=1 run is exactly the plain-decoding baseline and the
    augmentation-count sweep nests it. Dumps of sample augmentations turn
    identity off to show N genuinely augmented variants.
    """
    if cfg.modality == "none":
        return [
            AugmentedInput(prompt=prompt, image=image, origin_id=origin_id, variant_index=i)
            for i in range(n_aug)
        ]

    augment_text = cfg.modality in ("text", "both")
    augment_image = cfg.modality in ("image", "both") and image is not None

    variants: list[AugmentedInput] = []
    start = 0
    if include_identity:
        variants.append(AugmentedInput(prompt=prompt, image=image, origin_id=origin_id, variant_index=0))
        start = 1

    paraphrases: Optional[list[str]] = None
    if augment_text and cfg.text_strategy == "self_paraphrase" and n_aug > start:
        if paraphraser is None:
            raise ModelUnavailableError("self_paraphrase text strategy needs a paraphraser generator")
        paraphrases = self_paraphrase(paraphraser, prompt, n_aug - start, derive_seed(seed, "paraphrase"))

    for i in range(start, n_aug):
        sub = derive_seed(seed, "variant", i)
        text = prompt
        if augment_text:
            if paraphrases is not None:
                text = paraphrases[i - start]
            else:
                text = classical_text_pipeline(prompt, derive_seed(sub, "text"))
            if cfg.consistency_enforcement:
                text = enforce_consistency(text, prompt)
        img = image
        if augment_image:
            img = apply_image_aug(image, cfg.image_strength, derive_seed(sub, "image"))
        variants.append(AugmentedInput(prompt=text, image=img, origin_id=origin_id, variant_index=i))
    return variants


@dataclass(frozen=True)
class RunConfig:
    """One evaluation run: method, model, dataset, decoding knobs, outputs."""

    method: str
    dataset_path: str
    output_dir: str
    model: dict
    generation: GenerationConfig = GenerationConfig()
    adapt: Optional[AdaptConfig] = None
    weight_opt: Optional[WeightOptConfig] = None
    sample_k: int = 1000

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if self.sample_k < 1:
            raise ValueError("sample_k must be >= 1")
        if not ("toy" in self.model) ^ ("remote" in self.model):
            raise ValueError("model must specify exactly one of 'toy' or 'remote'")

    def to_dict(self) -> dict:
        out: dict = {
            "method": self.method,
            "dataset_path": self.dataset_path,
            "output_dir": self.output_dir,
            "model": self.model,
            "generation": self.generation.to_dict(),
            "sample_k": self.sample_k,
        }
        if self.adapt is not None:
            out["adapt"] = self.adapt.to_dict()
        if self.weight_opt is not None:
            out["weight_opt"] = self.weight_opt.to_dict()
        return out

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        known = {"method", "dataset_path", "output_dir", "model", "generation", "adapt", "weight_opt", "sample_k"}
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown RunConfig keys: {sorted(unknown)}")
        return cls(
            method=raw["method"],
            dataset_path=raw["dataset_path"],
            output_dir=raw["output_dir"],
            model=raw["model"],
            generation=GenerationConfig.from_dict(raw.get("generation", {})),
            adapt=AdaptConfig.from_dict(raw["adapt"]) if "adapt" in raw else None,
            weight_opt=WeightOptConfig.from_dict(raw["weight_opt"]) if "weight_opt" in raw else None,
            sample_k=raw.get("sample_k", 1000),
        )

    @classmethod
    def from_file(cls, path: str) -> "RunConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def build_model(model_spec: dict) -> GeneratorHandle:
    """Instantiate the generator named by a RunConfig model block."""
    try:
        if "toy" in model_spec:
            return ToyModel(ToyModelSpec.from_file(model_spec["toy"]))
        remote = model_spec["remote"]
        return RemoteGenerator(
            endpoint=remote["endpoint"],
            vocab_size=remote["vocab_size"],
            num_layers=remote.get("num_layers", 1),
            hidden_dim=remote.get("hidden_dim"),
            capabilities=remote.get("capabilities", ()),
        )
    except (OSError, KeyError, ValueError) as exc:
        raise ModelUnavailableError(f"cannot build model from {model_spec!r}: {exc}") from exc


def _branch_candidates(
    g: GeneratorHandle, inputs: Sequence[AugmentedInput], cfg: GenerationConfig
) -> list[tuple[str, list[float]]]:
    """Greedy-decode every branch independently; keep token log-probs."""
    candidates = []
    for inp in inputs:
        trace = greedy_generate(g, inp, cfg.max_tokens, cfg.eos_token, keep_distributions=True)
        text = g.decode(trace.tokens, eos_token=cfg.eos_token)
        with np.errstate(divide="ignore"):
            logprobs = [float(np.log(dist[tok])) for tok, dist in zip(trace.tokens, trace.aggregated_distributions)]
        candidates.append((text, logprobs))
    return candidates


def predict(
    method: str,
    g: GeneratorHandle,
    record: QuestionRecord,
    cfg: RunConfig,
    seed_q: int,
    image: Optional[np.ndarray],
) -> str:
    """Produce one prediction for one record under the configured method."""
    gen = replace(cfg.generation, seed=seed_q)
    original = AugmentedInput(prompt=record.prompt, image=image, origin_id=record.id, variant_index=0)
    if method == "baseline":
        trace = greedy_generate(g, original, gen.max_tokens, gen.eos_token)
        return g.decode(trace.tokens, eos_token=gen.eos_token)

    inputs = build_augmented_inputs(
        record.prompt, image, gen.n_aug, gen, seed_q, origin_id=record.id, paraphraser=g
    )
    if method == "ttaug":
        trace = ttaug_generate(g, inputs, gen)
        return g.decode(trace.tokens, eos_token=gen.eos_token)
    if method == "ttadapt_weights":
        trace = ttadapt_weights_generate(g, inputs, gen, cfg.weight_opt or WeightOptConfig())
        return g.decode(trace.tokens, eos_token=gen.eos_token)
    if method == "ttadapt_params":
        return ttadapt_answer(g, inputs, gen, cfg.adapt or AdaptConfig())

    candidates = _branch_candidates(g, inputs, gen)
    texts = [text for text, _ in candidates]
    if method == "self_consistency":
        return self_consistency(texts)
    if method == "self_selector":
        return texts[self_select(g, record.prompt, texts, seed=seed_q)]
    if method == "sample_and_rank":
        return sample_and_rank(candidates)
    if method == "self_synthesizer":
        return self_synthesize(g, record.prompt, texts, gen)
    raise ValueError(f"unknown method {method!r}")


def run_eval(cfg: RunConfig) -> dict:
    """Run one configured evaluation end to end.

    Subsamples the dataset at uniform intervals, builds the augmented
    branches per record with a per-question derived seed, runs the method,
    scores every prediction, and writes per-record JSON Lines plus an
    aggregate CSV. Records that fail are marked in the per-record output
    and counted, never dropped silently. Fully deterministic for a fixed
    config (including its seed).
    """
    if not os.path.isfile(cfg.dataset_path):
        raise DatasetNotFoundError(cfg.dataset_path)
    records = read_question_records(cfg.dataset_path)
    if not records:
        raise DatasetNotFoundError(f"{cfg.dataset_path} holds no records")
    g = build_model(cfg.model)

    k = min(cfg.sample_k, len(records))
    subset = [records[i] for i in uniform_interval_sample(len(records), k)]

    os.makedirs(cfg.output_dir, exist_ok=True)
    results: list[MetricResult] = []
    lines: list[dict] = []
    failures = 0
    for record in subset:
        seed_q = derive_seed(cfg.generation.seed, record.id)
        try:
            image = load_image(record.image_path) if record.image_path else None
            prediction = predict(cfg.method, g, record, cfg, seed_q, image)
            scored = score_record(record, prediction)
            results.append(scored)
            lines.append(scored.to_dict())
        except TTScaleError as exc:
            failures += 1
            lines.append({"id": record.id, "error": f"{type(exc).__name__}: {exc}"})

    per_record_path = os.path.join(cfg.output_dir, "per_record.jsonl")
    with open(per_record_path, "w", encoding="utf-8") as fh:
        for line in lines:
            fh.write(json.dumps(line) + "\n")

    benchmark = os.path.splitext(os.path.basename(cfg.dataset_path))[0]
    mean_score = sum(r.score for r in results) / len(results) if results else 0.0
    aggregate_path = os.path.join(cfg.output_dir, "aggregate.csv")
    write_aggregate_csv(aggregate_path, [(benchmark, cfg.method, mean_score)])

    return {
        "benchmark": benchmark,
        "method": cfg.method,
        "mean_score": mean_score,
        "scored": len(results),
        "failures": failures,
        "per_record_path": per_record_path,
        "aggregate_path": aggregate_path,
    }


# -- overhead benchmark ---------------------------------------------------------


@dataclass(frozen=True)
class OverheadReport:
    """Wall time and peak memory for one (n_aug, execution mode) cell."""

    n_aug: int
    mode: str
    peak_memory_bytes: int
    wall_time_s_per_query: float

    def __post_init__(self) -> None:
        if self.n_aug < 1 or self.peak_memory_bytes < 0 or self.wall_time_s_per_query < 0:
            raise ValueError("overhead report fields must be non-negative")


def make_bench_fixture(chain_len: int = 8, work_per_step: int = 400) -> tuple[ToyModel, AugmentedInput]:
    """A toy model with a deterministic token chain and non-trivial per-step cost.

    ``work_per_step`` adds hash rounds per forward pass so branch queries,
    not loop bookkeeping, dominate the measured time.
    """
    vocab = ("a", "b", "c", "</s>")
    prompt = "benchmark fixture prompt"
    chain: list[int] = []
    entries = []
    for j in range(chain_len):
        probs = [0.0, 0.0, 0.0, 0.0]
        nxt = j % 3 if j < chain_len - 1 else 3  # end the chain with EOS
        probs[nxt] = 1.0
        entries.append({"prompt": prompt, "prefix": list(chain), "probs": probs})
        chain.append(nxt)
    spec = ToyModelSpec.from_dict(
        {
            "vocab": list(vocab),
            "eos": "</s>",
            "num_layers": 2,
            "context_limit": chain_len + 4,
            "work_per_step": work_per_step,
            "entries": entries,
        }
    )
    return ToyModel(spec), AugmentedInput(prompt=prompt, origin_id="bench", variant_index=0)


def bench_overhead(
    model: Optional[GeneratorHandle] = None,
    n_aug_list: Sequence[int] = (1, 2, 4, 8, 16),
    mode: str = "both",
    repeats: int = 5,
    fixture_input: Optional[AugmentedInput] = None,
    max_tokens: int = 16,
) -> list[OverheadReport]:
    """Measure per-query wall time (median of repeats) and peak memory.

    Runs ensemble decoding on N replicated copies of the fixture input in
    sequential and/or parallel execution and reports one row per
    (n_aug, mode) cell. Both modes must and do produce identical traces;
    this is asserted whenever both run. Peak memory is the process
    high-water mark (ru_maxrss), a monotone measure sampled after each
    cell.
    """
    if mode not in ("sequential", "parallel", "both"):
        raise ValueError("mode must be sequential, parallel or both")
    if model is None:
        model, fixture_input = make_bench_fixture()
    if fixture_input is None:
        raise ValueError("fixture_input is required when passing a custom model")
    modes = ("sequential", "parallel") if mode == "both" else (mode,)

    reports = []
    for n in n_aug_list:
        if n < 1:
            raise ValueError("n_aug values must be >= 1")
        inputs = [replace(fixture_input, variant_index=i) for i in range(n)]
        cfg = GenerationConfig(
            n_aug=n, aggregation="average", max_tokens=max_tokens,
            eos_token=getattr(model, "eos_id", 0), modality="none",
        )
        traces: dict[str, GenerationTrace] = {}
        for run_mode in modes:
            times = []
            for _ in range(repeats):
                started = time.perf_counter()
                traces[run_mode] = ttaug_generate(model, inputs, cfg, mode=run_mode)
                times.append(time.perf_counter() - started)
            peak = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss * 1024
            reports.append(
                OverheadReport(
                    n_aug=n,
                    mode=run_mode,
                    peak_memory_bytes=peak,
                    wall_time_s_per_query=statistics.median(times),
                )
            )
        if len(traces) == 2 and traces["sequential"].tokens != traces["parallel"].tokens:
            raise AssertionError(f"execution modes disagree at n_aug={n}")
    return reports


def write_overhead_csv(reports: Sequence[OverheadReport], path: str) -> None:
    import csv

    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n_aug", "mode", "peak_memory_bytes", "wall_time_s_per_query"])
        for r in reports:
            writer.writerow([r.n_aug, r.mode, r.peak_memory_bytes, f"{r.wall_time_s_per_query:.6f}"])


# -- augmentation dumps ----------------------------------------------------------


def augment_dump(
    record: QuestionRecord,
    cfg: GenerationConfig,
    seed: int,
    out_dir: str,
    paraphraser: Optional[GeneratorHandle] = None,
) -> list[str]:
    """Write N augmented prompts (one per line) and N augmented images as PNG.

    Every dumped variant is genuinely augmented (no identity variant), so
    with consistency enforcement on, every prompt line carries the anchor
    phrase. Returns the list of written paths.
    """
    os.makedirs(out_dir, exist_ok=True)
    image = load_image(record.image_path) if record.image_path else None
    variants = build_augmented_inputs(
        record.prompt,
        image,
        cfg.n_aug,
        cfg,
        derive_seed(seed, record.id),
        origin_id=record.id,
        include_identity=False,
        paraphraser=paraphraser,
    )
    written = []
    prompts_path = os.path.join(out_dir, "prompts.txt")
    with open(prompts_path, "w", encoding="utf-8") as fh:
        for variant in variants:
            fh.write(variant.prompt.replace("\n", " ") + "\n")
    written.append(prompts_path)
    for variant in variants:
        if variant.image is not None:
            img_path = os.path.join(out_dir, f"variant_{variant.variant_index:02d}.png")
            save_png(variant.image, img_path)
            written.append(img_path)
    return written
