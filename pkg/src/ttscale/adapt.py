"""Test-time adaptation.

Two learnable variants on top of ensemble decoding:

* aggregation-weight optimization: per generation step, learn branch
  weights that minimize the entropy of the weighted mixture distribution
  (the branch distributions themselves are treated as constants);
* model parameter adaptation: iteratively fine-tune the generator on its
  own ensemble-consensus output, resetting weights after every question.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, fields, replace
from typing import Optional, Sequence

import numpy as np

from .core import AugmentedInput, GenerationConfig, GenerationTrace, argmax_lowest_index
from .decoder import as_step_matrix, collect_step_matrix, ttaug_generate
from .generator import GeneratorHandle, UnsupportedCapabilityError, softmax


@dataclass(frozen=True)
class WeightOptConfig:
    """Hyperparameters for per-step aggregation-weight optimization."""

    learning_rate: float = 1e-2
    weight_decay: float = 1e-4
    micro_steps: int = 20
    grad_clip_norm: float = 1.0
    entropy_eps: float = 1e-12

    def __post_init__(self) -> None:
        if min(self.learning_rate, self.weight_decay, self.grad_clip_norm, self.entropy_eps) <= 0:
            raise ValueError("all WeightOptConfig values must be positive")
        if self.micro_steps < 1:
            raise ValueError("micro_steps must be >= 1")

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, raw: dict) -> "WeightOptConfig":
        unknown = set(raw) - {f.name for f in fields(cls)}
        if unknown:
            raise ValueError(f"unknown WeightOptConfig keys: {sorted(unknown)}")
        return cls(**raw)


@dataclass(frozen=True)
class AdaptConfig:
    """Hyperparameters for consensus-pseudolabel parameter adaptation."""

    pseudo_iterations: int = 3
    train_steps: int = 6
    learning_rate: float = 2e-6
    warmup_steps: int = 5
    weight_decay: float = 0.01
    batch_size: int = 64
    grad_accum: int = 2

    def __post_init__(self) -> None:
        if self.pseudo_iterations < 1:
            raise ValueError("pseudo_iterations must be >= 1")
        if self.train_steps < 1 or self.batch_size < 1 or self.grad_accum < 1:
            raise ValueError("train_steps, batch_size and grad_accum must be >= 1")
        if self.learning_rate <= 0 or self.weight_decay < 0 or self.warmup_steps < 0:
            raise ValueError("bad optimizer hyperparameters")
        if self.batch_size % self.grad_accum != 0:
            raise ValueError("batch_size must be divisible by grad_accum")

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, raw: dict) -> "AdaptConfig":
        unknown = set(raw) - {f.name for f in fields(cls)}
        if unknown:
            raise ValueError(f"unknown AdaptConfig keys: {sorted(unknown)}")
        return cls(**raw)


# -- entropy objective ---------------------------------------------------------


def marginal_entropy(weights: np.ndarray, rows, eps: float = 1e-12) -> float:
    """Entropy of the weighted mixture of branch distributions.

    Raw weights go through a softmax first, so any real vector is a valid
    parameterization. The epsilon inside the log guards p=0; it can push
    the raw value infinitesimally below zero for deterministic mixtures,
    which is clamped away so the result is always >= 0.
    """
    m = as_step_matrix(rows)
    w = softmax(np.asarray(weights, dtype=np.float64))
    mixture = w @ m
    value = float(-(mixture * np.log(mixture + eps)).sum())
    return max(value, 0.0)


def entropy_gradient(weights: np.ndarray, rows, eps: float = 1e-12) -> np.ndarray:
    """Exact gradient of ``marginal_entropy`` w.r.t. the raw weights.

    With w = softmax(theta), p = w @ m and H = -sum_v p_v log(p_v + eps):

        dH/dp_v    = -(log(p_v + eps) + p_v / (p_v + eps))
        s_i        = sum_v (dH/dp_v) m_iv
        dH/dtheta_k = w_k (s_k - sum_i w_i s_i)
    """
    m = as_step_matrix(rows)
    theta = np.asarray(weights, dtype=np.float64)
    w = softmax(theta)
    mixture = w @ m
    dh_dp = -(np.log(mixture + eps) + mixture / (mixture + eps))
    s = m @ dh_dp
    return w * (s - float(w @ s))


# -- a small AdamW over dict-of-arrays -----------------------------------------


class AdamW:
    """Adaptive-moment gradient descent with decoupled weight decay.

    Operates on dictionaries mapping arbitrary keys to float arrays, which
    covers both the per-step weight vectors and the toy model's
    per-context logit table. Moment estimates are tracked per key.
    """

    def __init__(
        self,
        learning_rate: float,
        weight_decay: float = 0.0,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
    ):
        self.lr = learning_rate
        self.weight_decay = weight_decay
        self.betas = betas
        self.eps = eps
        self._state: dict = {}

    def step(self, params: dict, grads: dict, lr_scale: float = 1.0) -> dict:
        """One update; returns new parameter arrays (inputs untouched)."""
        b1, b2 = self.betas
        lr = self.lr * lr_scale
        out = {}
        for key, p in params.items():
            g = grads[key]
            m, v, t = self._state.get(key, (np.zeros_like(p), np.zeros_like(p), 0))
            t += 1
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            self._state[key] = (m, v, t)
            m_hat = m / (1 - b1**t)
            v_hat = v / (1 - b2**t)
            out[key] = p - lr * (m_hat / (np.sqrt(v_hat) + self.eps) + self.weight_decay * p)
        return out


def clip_global_norm(grads: dict, max_norm: float) -> dict:
    """Scale all gradients down so their joint L2 norm is at most ``max_norm``."""
    total = math.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    if total <= max_norm or total == 0.0:
        return grads
    scale = max_norm / total
    return {key: g * scale for key, g in grads.items()}


# -- variant 1: aggregation-weight optimization --------------------------------


def optimize_weights(m_sequence: Sequence, cfg: WeightOptConfig = WeightOptConfig()) -> list[np.ndarray]:
    """Entropy-minimizing branch weights for each step matrix.

    Weights restart from uniform (raw zeros) for every step, run
    ``micro_steps`` of clipped AdamW on the analytic entropy gradient, and
    come back softmax-normalized. Branch distributions are constants here;
    only the weights move.
    """
    out = []
    for rows in m_sequence:
        m = as_step_matrix(rows)
        theta = np.zeros(m.shape[0])
        opt = AdamW(cfg.learning_rate, cfg.weight_decay)
        for _ in range(cfg.micro_steps):
            grad = entropy_gradient(theta, m, cfg.entropy_eps)
            grad = clip_global_norm({"w": grad}, cfg.grad_clip_norm)["w"]
            theta = opt.step({"w": theta}, {"w": grad})["w"]
        out.append(softmax(theta))
    return out


def ttadapt_weights_generate(
    g: GeneratorHandle,
    inputs: Sequence[AugmentedInput],
    gen_cfg: GenerationConfig,
    weight_cfg: WeightOptConfig = WeightOptConfig(),
    mode: str = "sequential",
) -> GenerationTrace:
    """Ensemble decoding with per-step entropy-optimized aggregation weights.

    Same loop as plain ensemble decoding, but each step's mixture uses
    freshly optimized weights instead of uniform averaging. Weights are
    reinitialized for every token and every question.
    """
    started = time.perf_counter()
    tokens: list[int] = []
    aggregates: list[np.ndarray] = []
    while len(tokens) < gen_cfg.max_tokens:
        m = collect_step_matrix(g, inputs, tokens, mode)
        weights = optimize_weights([m], weight_cfg)[0]
        agg = weights @ m
        aggregates.append(agg)
        tok = argmax_lowest_index(agg)
        tokens.append(tok)
        if tok == gen_cfg.eos_token:
            break
    return GenerationTrace(
        tokens=tuple(tokens),
        aggregated_distributions=tuple(aggregates),
        wall_time_s=time.perf_counter() - started,
    )


# -- variant 2: model parameter adaptation --------------------------------------


def cosine_warmup_scale(step: int, total_steps: int, warmup_steps: int) -> float:
    """Linear warmup then cosine decay; never quite reaches zero in-budget.

    ``step`` is 1-indexed. The decay horizon is stretched by one step so
    the final configured step still applies a non-zero learning rate.
    """
    if warmup_steps > 0 and step <= warmup_steps:
        return step / warmup_steps
    span = max(1, total_steps - warmup_steps + 1)
    progress = (step - warmup_steps) / span
    return 0.5 * (1.0 + math.cos(math.pi * progress))


def fine_tune_on_pseudolabel(
    g: GeneratorHandle,
    inputs: Sequence[AugmentedInput],
    target_tokens: Sequence[int],
    cfg: AdaptConfig,
) -> float:
    """Cross-entropy fine-tuning of the generator toward one pseudolabel.

    Each optimizer step consumes a batch of ``batch_size`` (input, target)
    pairs formed by cycling the N augmented inputs against the single
    consensus target, accumulated over ``grad_accum`` micro-batches.
    Returns the mean per-example NLL seen during the final step.
    """
    if "trainable" not in g.capabilities:
        raise UnsupportedCapabilityError("generator is not trainable")
    target = [int(t) for t in target_tokens]
    if not target:
        return 0.0
    optimizer = AdamW(cfg.learning_rate, cfg.weight_decay)
    micro_size = cfg.batch_size // cfg.grad_accum
    cursor = 0
    last_nll = 0.0
    for step in range(1, cfg.train_steps + 1):
        grads: dict = {}
        nll_total = 0.0
        for _ in range(cfg.grad_accum):
            for _ in range(micro_size):
                inp = inputs[cursor % len(inputs)]
                cursor += 1
                nll, example_grads = g.cross_entropy_grads(inp, target)
                nll_total += nll
                for key, grad in example_grads.items():
                    if key in grads:
                        grads[key] += grad
                    else:
                        grads[key] = grad.copy()
        grads = {key: grad / cfg.batch_size for key, grad in grads.items()}
        params = {key: g.param_value(key) for key in grads}
        updated = optimizer.step(params, grads, lr_scale=cosine_warmup_scale(step, cfg.train_steps, cfg.warmup_steps))
        for key, value in updated.items():
            g.set_param_value(key, value)
        last_nll = nll_total / cfg.batch_size
    return last_nll


def ttadapt_answer(
    g: GeneratorHandle,
    inputs: Sequence[AugmentedInput],
    gen_cfg: GenerationConfig,
    adapt_cfg: AdaptConfig = AdaptConfig(),
    mode: str = "sequential",
) -> str:
    """Answer one question with iterative consensus-pseudolabel adaptation.

    Loop: decode the ensemble consensus (average aggregation) with the
    current weights; unless this is the final iteration, fine-tune on the
    consensus as a pseudolabel and repeat. The final iteration's consensus
    is the answer and triggers no training. Weights are snapshotted on
    entry and restored bitwise on exit, so the generator is untouched for
    the next question.
    """
    if "trainable" not in g.capabilities:
        raise UnsupportedCapabilityError("generator is not trainable")
    consensus_cfg = replace(gen_cfg, aggregation="average")
    snapshot = g.clone_weights()
    try:
        answer_tokens: tuple[int, ...] = ()
        for iteration in range(adapt_cfg.pseudo_iterations):
            trace = ttaug_generate(g, inputs, consensus_cfg, mode=mode)
            answer_tokens = trace.tokens
            if iteration < adapt_cfg.pseudo_iterations - 1:
                fine_tune_on_pseudolabel(g, inputs, answer_tokens, adapt_cfg)
        return g.decode(answer_tokens, eos_token=gen_cfg.eos_token)
    finally:
        g.restore_weights(snapshot)
