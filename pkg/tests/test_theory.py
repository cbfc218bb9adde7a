"""Selection and chain oracles: closed forms against simulation."""

import math

import numpy as np
import pytest

from ttscale.theory import (
    ChainParams,
    CrossoverNotFoundError,
    InfeasibleBoundError,
    SelectionModel,
    chain_monte_carlo,
    expected_selected_quality,
    feasible_selector_accuracy,
    k_n,
    k_n_monte_carlo,
    p_answer,
    p_token,
    selection_monte_carlo,
    theorem_check,
    uniform_chain,
)


class TestKn:
    def test_k1_exactly_zero(self):
        assert k_n(1) == 0.0

    def test_k2_closed_form(self):
        """The n=2 expected maximum is 1/sqrt(pi)."""
        assert abs(k_n(2) - 1.0 / math.sqrt(math.pi)) < 1e-6

    def test_strictly_increasing(self):
        values = [k_n(n) for n in (1, 2, 3, 4, 8, 16, 32, 64)]
        assert all(b > a for a, b in zip(values, values[1:]))

    def test_against_monte_carlo(self):
        for n in (2, 8, 16):
            mc, se = k_n_monte_carlo(n, trials=400_000, seed=11)
            assert abs(k_n(n) - mc) < 3 * se

    def test_n_validation(self):
        with pytest.raises(ValueError):
            k_n(0)


class TestExpectedSelectedQuality:
    def test_zero_correlation_gives_mean(self):
        model = SelectionModel(mu_q=1.7, sigma_q=2.0, rho=0.0, n=16)
        assert expected_selected_quality(model) == 1.7

    def test_perfect_correlation_n2(self):
        model = SelectionModel(mu_q=0.0, sigma_q=1.0, rho=1.0, n=2)
        assert abs(expected_selected_quality(model) - 0.5641895835477563) < 1e-9

    def test_against_monte_carlo(self):
        """Formula within 3 standard errors of simulation (plus approximation slack)."""
        for rho, n in ((0.2, 4), (0.8, 16)):
            model = SelectionModel(mu_q=0.3, mu_s=-0.5, sigma_q=1.5, sigma_s=0.7, rho=rho, n=n)
            mc, se = selection_monte_carlo(model, trials=400_000, seed=23)
            assert abs(expected_selected_quality(model) - mc) < 3 * se + 1e-3

    def test_model_validation(self):
        with pytest.raises(ValueError):
            SelectionModel(sigma_q=0.0)
        with pytest.raises(ValueError):
            SelectionModel(rho=1.5)


class TestChains:
    def test_p_token_single_step(self):
        cp = ChainParams(p=(0.8,), s_token=(1.0,), s_answer=1.0, n=1)
        assert abs(p_token(cp) - 0.8) < 1e-15

    def test_p_token_two_steps(self):
        cp = ChainParams(p=(0.9, 0.9), s_token=(1.0, 1.0), s_answer=1.0, n=2)
        assert abs(p_token(cp) - 0.99**2) < 1e-15

    def test_p_answer_single(self):
        cp = ChainParams(p=(0.8,), s_token=(1.0,), s_answer=0.75, n=1)
        assert abs(p_answer(cp) - 0.75 * 0.8) < 1e-15

    def test_p_answer_two_steps(self):
        cp = ChainParams(p=(0.9, 0.9), s_token=(1.0, 1.0), s_answer=1.0, n=2)
        assert abs(p_answer(cp) - (1 - (1 - 0.81) ** 2)) < 1e-12

    def test_against_chain_simulation(self):
        cp = ChainParams(p=(0.7, 0.85, 0.9), s_token=(0.9, 0.95, 0.8), s_answer=0.9, n=3)
        sim = chain_monte_carlo(cp, trials=300_000, seed=7)
        assert abs(p_token(cp) - sim["p_token"]) < 3 * sim["p_token_stderr"]
        assert abs(p_answer(cp) - sim["p_answer"]) < 3 * sim["p_answer_stderr"]

    def test_monotone_in_length_and_n(self):
        """Longer chains can only hurt; more candidates can only help."""
        base = dict(s_answer=1.0, delta=0.01)
        for n in (1, 2, 4):
            values = [
                p_token(ChainParams(p=(0.8,) * t, s_token=(0.9,) * t, n=n, **base))
                for t in (1, 2, 4, 8)
            ]
            assert all(b <= a for a, b in zip(values, values[1:]))
        for t in (1, 3):
            values = [
                p_answer(ChainParams(p=(0.8,) * t, s_token=(0.9,) * t, n=n, **base))
                for n in (1, 2, 4, 8)
            ]
            assert all(b >= a for a, b in zip(values, values[1:]))


class TestFeasibleSelectorAccuracy:
    def test_formula(self):
        assert abs(feasible_selector_accuracy(0.9, 2, 0.0) - 0.9 / 0.99) < 1e-12

    def test_boundary_feasible(self):
        assert feasible_selector_accuracy(0.5, 2, 0.5) == 1.0

    def test_infeasible(self):
        with pytest.raises(InfeasibleBoundError):
            feasible_selector_accuracy(0.99, 2, 0.2)

    def test_bound_delivers_promised_gain(self):
        """Substituting the bound as s_t gives q_t >= (1+delta) p on a grid."""
        for p in (0.3, 0.5, 0.7, 0.9):
            for n in (2, 4, 8):
                for delta in (0.0, 0.05, 0.1):
                    try:
                        s = feasible_selector_accuracy(p, n, delta)
                    except InfeasibleBoundError:
                        continue
                    q = s * (1 - (1 - p) ** n)
                    assert q >= (1 + delta) * p - 1e-12


class TestTheoremCheck:
    def test_example_crossover_within_30(self):
        t = theorem_check(p=0.8, delta=0.125, n=4, s_answer=1.0, t_max=30)
        assert t <= 30

    def test_crossover_definition(self):
        """The returned T is the first length where the token chain leads."""
        p, delta, n, s = 0.8, 0.125, 4, 1.0
        t = theorem_check(p, delta, n, s, 30)
        q = (1 + delta) * p

        def token(tt):
            return q**tt

        def answer(tt):
            return s * (1 - (1 - p**tt) ** n)

        assert token(t) > answer(t)
        if t > 1:
            assert token(t - 1) <= answer(t - 1)

    def test_equal_chains_never_cross(self):
        with pytest.raises(CrossoverNotFoundError):
            theorem_check(p=0.9, delta=0.0, n=1, s_answer=1.0, t_max=50)

    def test_invalid_q(self):
        with pytest.raises(ValueError):
            theorem_check(p=0.9, delta=0.5, n=2, s_answer=1.0, t_max=10)


class TestUniformChain:
    def test_consistent_with_theorem_quantities(self):
        cp = uniform_chain(0.8, 0.125, 4, 1.0, 5)
        assert abs(p_token(cp) - 0.9**5) < 1e-9
        assert abs(p_answer(cp) - (1 - (1 - 0.8**5) ** 4)) < 1e-12
