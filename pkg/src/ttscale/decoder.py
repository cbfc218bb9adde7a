"""Token-level ensemble decoding.

At every generation step the N branch distributions (one per augmented
input, all conditioned on the same shared prefix) form an N x |V| step
matrix. A rule merges the matrix into a single token choice, the token is
appended to the shared prefix, and the loop repeats. Continuous rules
(average, entropy-weighted) can alternatively merge hidden states at an
intermediate layer and resume the forward pass from there.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from typing import Optional, Sequence

import numpy as np

from .core import (
    AugmentedInput,
    GenerationConfig,
    GenerationTrace,
    TTScaleError,
    argmax_lowest_index,
)
from .generator import GeneratorHandle

EXECUTION_MODES = ("sequential", "parallel")


class RaggedMatrixError(TTScaleError, ValueError):
    """Step-matrix rows have inconsistent lengths or are not distributions."""


class InputCountMismatchError(TTScaleError, ValueError):
    """Number of augmented inputs does not match the configured N."""


def as_step_matrix(rows) -> np.ndarray:
    """Coerce rows of per-branch probabilities into a validated N x |V| matrix."""
    try:
        m = np.asarray(rows, dtype=np.float64)
    except ValueError as exc:
        raise RaggedMatrixError(f"rows have inconsistent lengths: {exc}") from exc
    if m.ndim != 2 or m.shape[0] < 1:
        raise RaggedMatrixError(f"expected an N x |V| matrix, got shape {m.shape}")
    if m.min() < -1e-9:
        raise RaggedMatrixError("matrix contains negative probabilities")
    sums = m.sum(axis=1)
    if np.abs(sums - 1.0).max() > 1e-6:
        raise RaggedMatrixError("matrix rows are not normalized")
    return m


def row_entropies(m: np.ndarray) -> np.ndarray:
    """Shannon entropy of each row in nats, with 0 ln 0 = 0."""
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(m > 0.0, m * np.log(m), 0.0)
    return -terms.sum(axis=1)


def aggregate_average(rows) -> np.ndarray:
    """Entrywise arithmetic mean of the branch distributions."""
    return as_step_matrix(rows).mean(axis=0)


def aggregate_average_logits(rows) -> np.ndarray:
    """Normalized geometric mean (log-space averaging). Experimental."""
    m = as_step_matrix(rows)
    with np.errstate(divide="ignore"):
        mean_log = np.log(m).mean(axis=0)
    e = np.exp(mean_log - mean_log.max())
    return e / e.sum()


def entropy_weights(m: np.ndarray) -> np.ndarray:
    """Per-branch weights e^{-H_i} / sum_k e^{-H_k} from row entropies."""
    neg_h = -row_entropies(m)
    e = np.exp(neg_h - neg_h.max())
    return e / e.sum()


def aggregate_entropy_weighted(rows) -> np.ndarray:
    """Confidence-weighted mixture: low-entropy branches get higher weight."""
    m = as_step_matrix(rows)
    return entropy_weights(m) @ m


def aggregate_majority(rows) -> int:
    """Token with the most branch-argmax votes; ties go to the lowest token id."""
    m = as_step_matrix(rows)
    votes = np.bincount(np.argmax(m, axis=1), minlength=m.shape[1])
    return argmax_lowest_index(votes)


def aggregate_most_confident(rows) -> int:
    """Token holding the single highest probability anywhere in the matrix.

    Ties break by lowest token id first, then lowest branch index.
    """
    m = as_step_matrix(rows)
    peak = m.max()
    token_ids = np.where((m == peak).any(axis=0))[0]
    return int(token_ids[0])


def collect_step_matrix(
    g: GeneratorHandle,
    inputs: Sequence[AugmentedInput],
    prefix: Sequence[int],
    mode: str = "sequential",
    pool: Optional[ThreadPoolExecutor] = None,
) -> np.ndarray:
    """Query every branch against the shared prefix and stack the rows.

    Parallel mode fans the N queries out over a thread pool; the row order
    (and therefore every downstream aggregate) is identical in both modes.
    Parallel mode requires a generator whose ``step`` is safe to call
    concurrently, which holds for any pure generator.
    """
    prefix = tuple(prefix)
    if mode == "parallel" and pool is not None:
        rows = list(pool.map(lambda inp: g.step(inp, prefix), inputs))
    else:
        rows = [g.step(inp, prefix) for inp in inputs]
    return as_step_matrix(rows)


def _select_token(m: np.ndarray, cfg: GenerationConfig) -> tuple[int, Optional[np.ndarray]]:
    if cfg.aggregation == "average":
        agg = aggregate_average_logits(m) if cfg.average_in_log_space else aggregate_average(m)
        return argmax_lowest_index(agg), agg
    if cfg.aggregation == "entropy_weighted":
        agg = aggregate_entropy_weighted(m)
        return argmax_lowest_index(agg), agg
    if cfg.aggregation == "majority":
        return aggregate_majority(m), None
    if cfg.aggregation == "most_confident":
        return aggregate_most_confident(m), None
    raise ValueError(f"unknown aggregation {cfg.aggregation!r}")


def _hidden_step(
    g: GeneratorHandle,
    inputs: Sequence[AugmentedInput],
    prefix: Sequence[int],
    cfg: GenerationConfig,
    mode: str,
    pool: Optional[ThreadPoolExecutor],
    keep_rows: bool,
) -> tuple[int, np.ndarray, Optional[np.ndarray]]:
    """One generation step merged at an intermediate layer."""
    prefix = tuple(prefix)
    layer = cfg.layer
    if mode == "parallel" and pool is not None:
        hiddens = list(pool.map(lambda inp: g.step_hidden(inp, prefix, layer), inputs))
    else:
        hiddens = [g.step_hidden(inp, prefix, layer) for inp in inputs]
    stacked = np.stack(hiddens)
    if cfg.aggregation == "entropy_weighted":
        branch_dists = as_step_matrix([g.resume_from_hidden(h, layer) for h in hiddens])
        merged_hidden = entropy_weights(branch_dists) @ stacked
    else:
        branch_dists = None
        merged_hidden = stacked.mean(axis=0)
    agg = g.resume_from_hidden(merged_hidden, layer)
    rows = None
    if keep_rows:
        if branch_dists is None:
            branch_dists = as_step_matrix([g.resume_from_hidden(h, layer) for h in hiddens])
        rows = branch_dists
    return argmax_lowest_index(agg), agg, rows


def ttaug_generate(
    g: GeneratorHandle,
    inputs: Sequence[AugmentedInput],
    cfg: GenerationConfig,
    mode: str = "sequential",
    keep_step_matrices: bool = False,
) -> GenerationTrace:
    """Decode one shared token sequence from N augmented inputs.

    At step j all N branches are queried with the shared prefix, the step
    matrix is merged per ``cfg.aggregation`` (at ``cfg.layer`` when it is
    not the final layer), and the merged choice is appended for every
    branch to condition on. Stops at the EOS token or ``cfg.max_tokens``.

    With N=1 every rule reduces to single-input greedy decoding.
    """
    if mode not in EXECUTION_MODES:
        raise ValueError(f"unknown mode {mode!r}")
    if len(inputs) != cfg.n_aug:
        raise InputCountMismatchError(f"got {len(inputs)} inputs for n_aug={cfg.n_aug}")

    started = time.perf_counter()
    tokens: list[int] = []
    matrices: list[np.ndarray] = []
    aggregates: list[np.ndarray] = []
    pool = ThreadPoolExecutor(max_workers=min(len(inputs), 8)) if mode == "parallel" else None
    try:
        while len(tokens) < cfg.max_tokens:
            if cfg.layer is None:
                m = collect_step_matrix(g, inputs, tokens, mode, pool)
                tok, agg = _select_token(m, cfg)
            else:
                tok, agg, m = _hidden_step(g, inputs, tokens, cfg, mode, pool, keep_step_matrices)
            if keep_step_matrices and m is not None:
                matrices.append(m)
            if agg is not None:
                aggregates.append(agg)
            tokens.append(tok)
            if tok == cfg.eos_token:
                break
    finally:
        if pool is not None:
            pool.shutdown(wait=False)

    return GenerationTrace(
        tokens=tuple(tokens),
        per_step_distributions=tuple(matrices) if keep_step_matrices and matrices else None,
        aggregated_distributions=tuple(aggregates) if aggregates else None,
        wall_time_s=time.perf_counter() - started,
    )


def greedy_generate(
    g: GeneratorHandle,
    inp: AugmentedInput,
    max_tokens: int,
    eos_token: int,
    keep_distributions: bool = False,
) -> GenerationTrace:
    """Plain single-input greedy decoding (the no-augmentation baseline)."""
    started = time.perf_counter()
    tokens: list[int] = []
    dists: list[np.ndarray] = []
    while len(tokens) < max_tokens:
        probs = g.step(inp, tuple(tokens))
        if keep_distributions:
            dists.append(probs)
        tok = argmax_lowest_index(probs)
        tokens.append(tok)
        if tok == eos_token:
            break
    return GenerationTrace(
        tokens=tuple(tokens),
        aggregated_distributions=tuple(dists) if keep_distributions else None,
        wall_time_s=time.perf_counter() - started,
    )
