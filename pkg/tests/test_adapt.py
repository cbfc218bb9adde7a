"""Entropy-driven weight optimization and pseudolabel fine-tuning."""

import numpy as np
import pytest

from ttscale.adapt import (
    AdaptConfig,
    WeightOptConfig,
    clip_global_norm,
    cosine_warmup_scale,
    entropy_gradient,
    fine_tune_on_pseudolabel,
    marginal_entropy,
    optimize_weights,
    ttadapt_answer,
    ttadapt_weights_generate,
)
from ttscale.core import AugmentedInput, GenerationConfig
from ttscale.decoder import RaggedMatrixError, ttaug_generate
from ttscale.generator import UnsupportedCapabilityError

from conftest import make_toy, random_rows


class TestMarginalEntropy:
    def test_deterministic_mixture_is_zero(self):
        for weights in ([0.0, 0.0], [2.0, -3.0], [-1.0, 5.0]):
            h = marginal_entropy(weights, [[1.0, 0.0], [1.0, 0.0]])
            assert 0.0 <= h <= 1e-11

    def test_uniform_binary(self):
        h = marginal_entropy([0.0, 0.0], [[0.5, 0.5], [0.5, 0.5]])
        np.testing.assert_allclose(h, np.log(2), atol=1e-9)

    def test_symmetric_mixture_is_uniform(self):
        h = marginal_entropy([0.0, 0.0], [[1.0, 0.0], [0.0, 1.0]])
        np.testing.assert_allclose(h, np.log(2), atol=1e-9)

    def test_never_negative(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            m = random_rows(rng, int(rng.integers(1, 8)), int(rng.integers(2, 16)))
            w = rng.normal(size=m.shape[0])
            assert marginal_entropy(w, m) >= 0.0

    def test_ragged_rejected(self):
        with pytest.raises(RaggedMatrixError):
            marginal_entropy([0.0, 0.0], [[0.5, 0.5], [1.0]])


class TestEntropyGradient:
    def test_symmetric_rows_zero_gradient(self):
        grad = entropy_gradient([0.0, 0.0], [[1.0, 0.0], [0.0, 1.0]])
        np.testing.assert_allclose(grad, [0.0, 0.0], atol=1e-12)

    def test_single_row_zero_gradient(self):
        grad = entropy_gradient([0.7], [[0.3, 0.7]])
        np.testing.assert_allclose(grad, [0.0], atol=1e-15)

    def test_matches_finite_differences(self):
        """Central differences at h=1e-5, within 1e-5 relative, random 4x8."""
        rng = np.random.default_rng(2)
        h = 1e-5
        for _ in range(30):
            m = random_rows(rng, 4, 8)
            theta = rng.normal(scale=0.5, size=4)
            analytic = entropy_gradient(theta, m)
            numeric = np.zeros_like(analytic)
            for i in range(4):
                up, down = theta.copy(), theta.copy()
                up[i] += h
                down[i] -= h
                numeric[i] = (marginal_entropy(up, m) - marginal_entropy(down, m)) / (2 * h)
            scale = np.maximum(np.abs(numeric), 1e-8)
            assert np.max(np.abs(analytic - numeric) / scale) < 1e-5


class TestOptimizeWeights:
    def test_confident_row_wins(self):
        """With a zero-entropy row available, optimization piles weight on it."""
        m = [[1.0, 0.0], [0.5, 0.5]]
        cfg = WeightOptConfig(micro_steps=200)
        w = optimize_weights([m], cfg)[0]
        assert w[0] > 0.9
        initial = marginal_entropy([0.0, 0.0], m)
        final = marginal_entropy(np.log(w), m)
        assert final < initial

    def test_identical_rows_stay_uniform(self):
        w = optimize_weights([[[0.3, 0.7], [0.3, 0.7]]], WeightOptConfig(micro_steps=50))[0]
        np.testing.assert_allclose(w, [0.5, 0.5], atol=1e-12)

    def test_weights_on_simplex(self):
        rng = np.random.default_rng(3)
        mats = [random_rows(rng, int(rng.integers(1, 8)), 8) for _ in range(20)]
        for w in optimize_weights(mats):
            assert w.min() >= 0.0
            np.testing.assert_allclose(w.sum(), 1.0, atol=1e-6)

    def test_entropy_not_increased(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            m = random_rows(rng, 4, 8)
            w = optimize_weights([m])[0]
            assert marginal_entropy(np.log(w), m) <= marginal_entropy(np.zeros(4), m) + 1e-9

    def test_per_step_reinitialization(self):
        """Each step matrix starts fresh; order of steps cannot matter."""
        rng = np.random.default_rng(5)
        a, b = random_rows(rng, 3, 6), random_rows(rng, 3, 6)
        first = optimize_weights([a, b])
        second = optimize_weights([b, a])
        np.testing.assert_allclose(first[0], second[1], atol=1e-15)
        np.testing.assert_allclose(first[1], second[0], atol=1e-15)


class TestSchedulesAndClipping:
    def test_cosine_warmup_shape(self):
        scales = [cosine_warmup_scale(s, 6, 5) for s in range(1, 7)]
        np.testing.assert_allclose(scales[:5], [0.2, 0.4, 0.6, 0.8, 1.0])
        assert 0.0 < scales[5] < 1.0

    def test_clip_global_norm(self):
        grads = {"a": np.array([3.0, 4.0])}
        clipped = clip_global_norm(grads, 1.0)
        np.testing.assert_allclose(np.linalg.norm(clipped["a"]), 1.0)
        small = clip_global_norm({"a": np.array([0.1])}, 1.0)
        np.testing.assert_array_equal(small["a"], [0.1])


def adaptable_toy():
    pa, pb = "Q? variant A", "Q? variant B"
    g = make_toy(
        [
            (pa, (), (0.9, 0.1, 0.0)),
            (pb, (), (0.4, 0.6, 0.0)),
            (pa, (0,), (0.0, 0.0, 1.0)),
            (pb, (0,), (0.1, 0.1, 0.8)),
        ]
    )
    inputs = [AugmentedInput(prompt=pa, variant_index=0), AugmentedInput(prompt=pb, variant_index=1)]
    cfg = GenerationConfig(n_aug=2, max_tokens=4, eos_token=g.eos_id)
    return g, inputs, cfg


class TestFineTune:
    def test_pseudolabel_likelihood_not_decreased(self):
        g, inputs, cfg = adaptable_toy()
        target = ttaug_generate(g, inputs, cfg).tokens
        before = [g.sequence_log_prob(inp, target) for inp in inputs]
        fine_tune_on_pseudolabel(g, inputs, target, AdaptConfig())
        after = [g.sequence_log_prob(inp, target) for inp in inputs]
        for b, a in zip(before, after):
            assert a >= b - 1e-12

    def test_larger_rate_moves_further(self):
        g, inputs, cfg = adaptable_toy()
        target = ttaug_generate(g, inputs, cfg).tokens
        snap = g.clone_weights()
        fine_tune_on_pseudolabel(g, inputs, target, AdaptConfig(learning_rate=0.5, train_steps=20))
        moved = g.sequence_log_prob(inputs[1], target)
        g.restore_weights(snap)
        base = g.sequence_log_prob(inputs[1], target)
        assert moved > base + 0.01

    def test_requires_trainable(self):
        from ttscale.generator import GeneratorHandle

        class Frozen(GeneratorHandle):
            vocab_size, num_layers, capabilities = 2, 1, frozenset()

            def step(self, inp, prefix):
                return np.array([0.5, 0.5])

        with pytest.raises(UnsupportedCapabilityError):
            fine_tune_on_pseudolabel(Frozen(), [AugmentedInput(prompt="x")], [0], AdaptConfig())


class TestTTAdaptAnswer:
    def test_single_iteration_equals_plain_aggregation(self):
        g, inputs, cfg = adaptable_toy()
        expected = g.decode(ttaug_generate(g, inputs, cfg).tokens, eos_token=g.eos_id)
        answer = ttadapt_answer(g, inputs, cfg, AdaptConfig(pseudo_iterations=1))
        assert answer == expected

    def test_generator_restored_bitwise(self):
        g, inputs, cfg = adaptable_toy()
        probes = [g.step(inp, ()) for inp in inputs]
        ttadapt_answer(g, inputs, cfg, AdaptConfig(pseudo_iterations=3))
        for probe, inp in zip(probes, inputs):
            np.testing.assert_array_equal(g.step(inp, ()), probe)

    def test_answer_is_decoded_text(self):
        g, inputs, cfg = adaptable_toy()
        answer = ttadapt_answer(g, inputs, cfg)
        assert answer == "yes"


class TestWeightAdaptedDecoding:
    def test_confident_branch_dominates(self):
        """The low-entropy branch drives token choice under optimized weights."""
        pa, pb = "conf", "unsure"
        g = make_toy(
            [
                (pa, (), (0.02, 0.98, 0.0)),
                (pb, (), (0.55, 0.43, 0.02)),
                (pa, (1,), (0.0, 0.0, 1.0)),
                (pb, (1,), (0.0, 0.0, 1.0)),
            ]
        )
        inputs = [AugmentedInput(prompt=pa), AugmentedInput(prompt=pb, variant_index=1)]
        cfg = GenerationConfig(n_aug=2, max_tokens=4, eos_token=g.eos_id)
        trace = ttadapt_weights_generate(g, inputs, cfg, WeightOptConfig(micro_steps=100))
        assert trace.tokens[0] == 1

    def test_config_validation(self):
        with pytest.raises(ValueError):
            WeightOptConfig(micro_steps=0)
        with pytest.raises(ValueError):
            AdaptConfig(pseudo_iterations=0)
        with pytest.raises(ValueError):
            AdaptConfig(batch_size=5, grad_accum=2)
