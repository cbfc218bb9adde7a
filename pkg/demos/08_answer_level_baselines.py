"""The four answer-level strategies on scripted candidates.

Answer-level methods generate N complete candidate answers first and only
then combine them: majority voting, log-probability ranking, asking the
model to pick an index (under a hard output constraint), or asking it to
synthesize a merged answer.
"""

from ttscale.baselines import (
    render_selector_prompt,
    render_synthesizer_prompt,
    sample_and_rank,
    self_consistency,
    self_select,
    self_synthesize,
)
from ttscale.core import GenerationConfig
from ttscale.generator import TableEntry, ToyModel, ToyModelSpec

candidates = ["a red bus", "a red bus.", "A red bus", "a blue tram"]
print("candidates:", candidates)
print("self-consistency picks:", repr(self_consistency(candidates)))

ranked = [
    ("a red bus", [-0.3, -0.2, -0.4]),
    ("a blue tram", [-0.1, -0.9, -2.0]),
]
print("sample-and-rank picks :", repr(sample_and_rank(ranked)))

# Self-selection: the model's reply is decoded under a mask that only
# admits integers in range, so the result is structurally valid.
question = "What is in the photo?"
sel_prompt = render_selector_prompt(question, candidates)
vocab = ("0", "1", "2", "3", "</s>")
selector = ToyModel(
    ToyModelSpec(
        vocab=vocab,
        entries=(
            TableEntry(prompt=sel_prompt, prefix=(), probs=(0.05, 0.05, 0.85, 0.05, 0.0)),
            TableEntry(prompt=sel_prompt, prefix=(2,), probs=(0.0, 0.0, 0.0, 0.0, 1.0)),
        ),
    )
)
idx = self_select(selector, question, candidates)
print("self-selector picks   : index", idx, "->", repr(candidates[idx]))

syn_prompt = render_synthesizer_prompt(question, candidates)
synth = ToyModel(
    ToyModelSpec(
        vocab=("a red city bus", "</s>"),
        entries=(
            TableEntry(prompt=syn_prompt, prefix=(), probs=(1.0, 0.0)),
            TableEntry(prompt=syn_prompt, prefix=(0,), probs=(0.0, 1.0)),
        ),
    )
)
cfg = GenerationConfig(n_aug=1, max_tokens=4, eos_token=synth.eos_id)
print("self-synthesizer says :", repr(self_synthesize(synth, question, candidates, cfg)))
