"""Consensus-pseudolabel fine-tuning on the trainable toy generator.

The ensemble consensus acts as a training target: the model is nudged
toward its own aggregated answer, re-decodes, and repeats. Weights are
snapshotted before the question and restored afterwards, so adaptation
never leaks across questions.
"""

import numpy as np

from ttscale.adapt import AdaptConfig, fine_tune_on_pseudolabel, ttadapt_answer
from ttscale.core import AugmentedInput, GenerationConfig
from ttscale.decoder import ttaug_generate
from ttscale.generator import TableEntry, ToyModel, ToyModelSpec

va, vb = "Count the chairs.", "Count the chairs. In other words, how many seats?"
model = ToyModel(
    ToyModelSpec(
        vocab=("three ", "four ", "</s>"),
        entries=(
            TableEntry(prompt=va, prefix=(), probs=(0.8, 0.2, 0.0)),
            TableEntry(prompt=vb, prefix=(), probs=(0.55, 0.45, 0.0)),
            TableEntry(prompt=va, prefix=(0,), probs=(0.0, 0.0, 1.0)),
            TableEntry(prompt=vb, prefix=(0,), probs=(0.05, 0.05, 0.9)),
        ),
    )
)
inputs = [
    AugmentedInput(prompt=va, origin_id="chairs", variant_index=0),
    AugmentedInput(prompt=vb, origin_id="chairs", variant_index=1),
]
cfg = GenerationConfig(n_aug=2, max_tokens=4, eos_token=model.eos_id)

consensus = ttaug_generate(model, inputs, cfg).tokens
print("consensus tokens:", consensus, "->", repr(model.decode(consensus, eos_token=model.eos_id)))

print("\nper-branch log-likelihood of the consensus, before and after one round:")
before = [model.sequence_log_prob(inp, consensus) for inp in inputs]
snapshot = model.clone_weights()
# exaggerated learning rate so the movement is visible at toy scale
fine_tune_on_pseudolabel(model, inputs, consensus, AdaptConfig(learning_rate=0.05, train_steps=10))
after = [model.sequence_log_prob(inp, consensus) for inp in inputs]
for i, (b, a) in enumerate(zip(before, after)):
    print(f"  branch {i}: {b:.4f} -> {a:.4f}")
model.restore_weights(snapshot)

answer = ttadapt_answer(model, inputs, cfg, AdaptConfig(pseudo_iterations=3))
print("\nfull adaptive answer:", repr(answer))
probe = model.step(inputs[0], ())
print("weights restored after the question:", np.array_equal(probe, ToyModel(model.spec).step(inputs[0], ())))
