"""Numerical oracles for two selection models.

* Selection under correlated quality/confidence: picking the candidate
  with the best internal score lifts expected quality by rho * sigma_q *
  k_n, where k_n is the expected maximum of n standard normals.
* Correctness chains: closed-form success probabilities for per-token
  selection versus whole-answer selection, plus a crossover search
  showing where per-token selection pulls ahead.

Every closed form has a Monte Carlo counterpart so the formulas can be
checked against simulation rather than against themselves.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import integrate, stats

from .core import TTScaleError


class InfeasibleBoundError(TTScaleError, ValueError):
    """The required selector accuracy exceeds 1."""


class CrossoverNotFoundError(TTScaleError, LookupError):
    """No chain length up to t_max gives per-token selection the lead."""


@dataclass(frozen=True)
class SelectionModel:
    """Bivariate-normal model of candidate quality Q and internal score S.

    The closed-form expectation uses only (mu_q, sigma_q, rho, n);
    mu_s and sigma_s parameterize the Monte Carlo oracle.
    """

    mu_q: float = 0.0
    mu_s: float = 0.0
    sigma_q: float = 1.0
    sigma_s: float = 1.0
    rho: float = 0.0
    n: int = 1

    def __post_init__(self) -> None:
        if self.sigma_q <= 0 or self.sigma_s <= 0:
            raise ValueError("sigma_q and sigma_s must be > 0")
        if not -1.0 <= self.rho <= 1.0:
            raise ValueError("rho must be in [-1, 1]")
        if self.n < 1:
            raise ValueError("n must be >= 1")


@dataclass(frozen=True)
class ChainParams:
    """Per-step correctness chain with T steps and n candidates per unit."""

    p: tuple[float, ...]
    s_token: tuple[float, ...]
    s_answer: float = 1.0
    n: int = 1
    delta: float = 1e-6

    def __post_init__(self) -> None:
        if len(self.p) < 1 or len(self.p) != len(self.s_token):
            raise ValueError("p and s_token must be equal-length, non-empty")
        if not all(0.0 < x < 1.0 for x in self.p):
            raise ValueError("each p_t must lie in (0, 1)")
        if not all(0.0 < s <= 1.0 for s in self.s_token):
            raise ValueError("each s_t must lie in (0, 1]")
        if not 0.0 < self.s_answer <= 1.0:
            raise ValueError("s_answer must lie in (0, 1]")
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.delta <= 0:
            raise ValueError("delta must be > 0")


def k_n(n: int) -> float:
    """Expected maximum of n independent standard normal variables.

    Evaluated as the integral of n z phi(z) Phi(z)^(n-1) by adaptive
    quadrature on [-10, 10] (the integrand carries < 1e-20 mass outside
    for any n up to 1e4). n=1 is the plain normal mean, exactly 0.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if n == 1:
        return 0.0

    def integrand(z: float) -> float:
        return n * z * stats.norm.pdf(z) * stats.norm.cdf(z) ** (n - 1)

    value, _ = integrate.quad(integrand, -10.0, 10.0, epsabs=1e-8, limit=200)
    return value


def k_n_monte_carlo(
    n: int, trials: int = 1_000_000, seed: int = 0, chunk: int = 200_000
) -> tuple[float, float]:
    """Simulated (mean, standard error) of the maximum of n standard normals.

    Trials run in seeded shards so totals are reproducible and memory stays
    bounded at chunk * n doubles.
    """
    seeds = np.random.SeedSequence(seed).spawn(math.ceil(trials / chunk))
    total = 0.0
    total_sq = 0.0
    done = 0
    for shard_seed in seeds:
        size = min(chunk, trials - done)
        rng = np.random.default_rng(shard_seed)
        maxima = rng.standard_normal((size, n)).max(axis=1)
        total += float(maxima.sum())
        total_sq += float((maxima**2).sum())
        done += size
    mean = total / trials
    var = total_sq / trials - mean**2
    return mean, math.sqrt(max(var, 0.0) / trials)


def expected_selected_quality(model: SelectionModel) -> float:
    """Approximate expected quality of the best-scored candidate:
    mu_q + rho * sigma_q * k_n."""
    return model.mu_q + model.rho * model.sigma_q * k_n(model.n)


def selection_monte_carlo(
    model: SelectionModel, trials: int = 1_000_000, seed: int = 0, chunk: int = 200_000
) -> tuple[float, float]:
    """Simulated (mean, stderr) quality of argmax-score selection.

    Draws n correlated (Q, S) pairs per trial from the bivariate normal,
    keeps the Q whose S is largest.
    """
    seeds = np.random.SeedSequence(seed).spawn(math.ceil(trials / chunk))
    comp = math.sqrt(1.0 - model.rho**2)
    total = 0.0
    total_sq = 0.0
    done = 0
    for shard_seed in seeds:
        size = min(chunk, trials - done)
        rng = np.random.default_rng(shard_seed)
        z_s = rng.standard_normal((size, model.n))
        z_q = rng.standard_normal((size, model.n))
        scores = model.mu_s + model.sigma_s * z_s
        quality = model.mu_q + model.sigma_q * (model.rho * z_s + comp * z_q)
        picked = quality[np.arange(size), scores.argmax(axis=1)]
        total += float(picked.sum())
        total_sq += float((picked**2).sum())
        done += size
    mean = total / trials
    var = total_sq / trials - mean**2
    return mean, math.sqrt(max(var, 0.0) / trials)


def p_token(cp: ChainParams) -> float:
    """Success probability of the per-step selection chain:
    product over t of s_t * (1 - (1 - p_t)^n)."""
    value = 1.0
    for pt, st in zip(cp.p, cp.s_token):
        value *= st * (1.0 - (1.0 - pt) ** cp.n)
    return value


def p_answer(cp: ChainParams) -> float:
    """Success probability of whole-answer selection:
    s * (1 - (1 - prod_t p_t)^n)."""
    correct = 1.0
    for pt in cp.p:
        correct *= pt
    return cp.s_answer * (1.0 - (1.0 - correct) ** cp.n)


def chain_monte_carlo(
    cp: ChainParams, trials: int = 1_000_000, seed: int = 0, chunk: int = 200_000
) -> dict[str, float]:
    """Simulate both chains; returns estimates and binomial standard errors.

    Token chain per trial: at every step, any of n candidates is correct
    with prob p_t, and an available correct candidate is picked with prob
    s_t; success needs every step to land. Answer chain per trial: each of
    n responses is correct iff all T of its steps are, and an available
    correct response is picked with prob s_answer.
    """
    t_steps = len(cp.p)
    p = np.asarray(cp.p)
    s = np.asarray(cp.s_token)
    seeds = np.random.SeedSequence(seed).spawn(math.ceil(trials / chunk))
    token_hits = 0
    answer_hits = 0
    done = 0
    for shard_seed in seeds:
        size = min(chunk, trials - done)
        rng = np.random.default_rng(shard_seed)
        candidate_ok = rng.random((size, t_steps, cp.n)) < p[None, :, None]
        available = candidate_ok.any(axis=2)
        selected = rng.random((size, t_steps)) < s[None, :]
        token_hits += int((available & selected).all(axis=1).sum())

        response_ok = (rng.random((size, cp.n, t_steps)) < p[None, None, :]).all(axis=2)
        any_correct = response_ok.any(axis=1)
        picked = rng.random(size) < cp.s_answer
        answer_hits += int((any_correct & picked).sum())
        done += size

    token_rate = token_hits / trials
    answer_rate = answer_hits / trials
    return {
        "p_token": token_rate,
        "p_token_stderr": math.sqrt(token_rate * (1.0 - token_rate) / trials),
        "p_answer": answer_rate,
        "p_answer_stderr": math.sqrt(answer_rate * (1.0 - answer_rate) / trials),
    }


def feasible_selector_accuracy(p: float, n: int, delta: float = 0.0) -> float:
    """Smallest per-step selector accuracy that sustains a (1+delta) gain:
    (1 + delta) p / (1 - (1-p)^n).

    Raises:
        InfeasibleBoundError: the bound exceeds 1, so no selector works.
    """
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    if n < 2:
        raise ValueError("n must be >= 2")
    if delta < 0:
        raise ValueError("delta must be >= 0")
    bound = (1.0 + delta) * p / (1.0 - (1.0 - p) ** n)
    if bound > 1.0 + 1e-12:
        raise InfeasibleBoundError(f"required selector accuracy {bound:.6f} exceeds 1")
    return min(bound, 1.0)


def theorem_check(p: float, delta: float, n: int, s_answer: float, t_max: int) -> int:
    """Smallest chain length T <= t_max where per-token selection wins.

    Evaluates both closed forms with uniform per-step probability p and
    per-token success q = (1 + delta) p, i.e. the chains
    q^T versus s_answer * (1 - (1 - p^T)^n). The answer chain uses the
    expm1/log1p complement form and the comparison carries a 1e-12
    relative guard, so mathematically identical chains never register a
    crossover through round-off.

    Raises:
        CrossoverNotFoundError: no crossover up to t_max.
    """
    q = (1.0 + delta) * p
    if not 0.0 < p < 1.0 or q > 1.0:
        raise ValueError("need p in (0,1) and (1+delta) p <= 1")
    for t in range(1, t_max + 1):
        token = q**t
        answer = s_answer * -math.expm1(n * math.log1p(-(p**t)))
        if token > answer * (1.0 + 1e-12):
            return t
    raise CrossoverNotFoundError(f"no crossover for T up to {t_max}")


def uniform_chain(p: float, delta: float, n: int, s_answer: float, t_steps: int) -> ChainParams:
    """ChainParams with T identical steps and the selector accuracy that
    delivers exactly q_t = (1 + delta) p per step."""
    s_t = feasible_selector_accuracy(p, n, delta)
    return ChainParams(p=(p,) * t_steps, s_token=(s_t,) * t_steps, s_answer=s_answer, n=n, delta=max(delta, 1e-9))
