"""Shared-context ensemble decoding on a toy generator.

Two prompt variants of the same question disagree about the first token.
Decoding each variant alone gives different answers; decoding them as an
ensemble (averaging per-step distributions, then picking one shared
token) recovers the answer the evidence jointly supports.
"""

from ttscale.core import AugmentedInput, GenerationConfig
from ttscale.decoder import greedy_generate, ttaug_generate
from ttscale.generator import TableEntry, ToyModel, ToyModelSpec

VOCAB = ("yes ", "no ", "</s>")

variant_a = "Is the lamp on?"
variant_b = "Is the lamp on? In other words, is it lit?"

spec = ToyModelSpec(
    vocab=VOCAB,
    entries=(
        # variant A is mildly wrong, variant B is confidently right
        TableEntry(prompt=variant_a, prefix=(), probs=(0.40, 0.60, 0.0)),
        TableEntry(prompt=variant_b, prefix=(), probs=(0.90, 0.10, 0.0)),
        TableEntry(prompt=variant_a, prefix=(0,), probs=(0.0, 0.0, 1.0)),
        TableEntry(prompt=variant_b, prefix=(0,), probs=(0.0, 0.0, 1.0)),
        TableEntry(prompt=variant_a, prefix=(1,), probs=(0.0, 0.0, 1.0)),
        TableEntry(prompt=variant_b, prefix=(1,), probs=(0.0, 0.0, 1.0)),
    ),
)
model = ToyModel(spec)
inputs = [
    AugmentedInput(prompt=variant_a, origin_id="lamp", variant_index=0),
    AugmentedInput(prompt=variant_b, origin_id="lamp", variant_index=1),
]

for inp in inputs:
    trace = greedy_generate(model, inp, max_tokens=4, eos_token=model.eos_id)
    print(f"alone  [{inp.variant_index}]:", repr(model.decode(trace.tokens, eos_token=model.eos_id)))

cfg = GenerationConfig(n_aug=2, aggregation="average", max_tokens=4, eos_token=model.eos_id)
trace = ttaug_generate(model, inputs, cfg, keep_step_matrices=True)
print("ensemble    :", repr(model.decode(trace.tokens, eos_token=model.eos_id)))
print("step-0 rows :")
for row in trace.per_step_distributions[0]:
    print("   ", row)
print("step-0 mean :", trace.aggregated_distributions[0])

# Both execution modes walk the same shared prefix and must agree.
parallel = ttaug_generate(model, inputs, cfg, mode="parallel")
print("parallel == sequential:", parallel.tokens == trace.tokens)
