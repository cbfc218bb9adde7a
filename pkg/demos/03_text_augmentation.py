"""Classical text perturbations and consistency anchoring."""

from ttscale.textaug import (
    classical_text_pipeline,
    enforce_consistency,
    keyboard_error,
    sentence_reorder,
    word_delete,
    word_split,
)

prompt = "What color is the car? It is parked outside."

print("original        :", prompt)
print("keyboard errors :", keyboard_error(prompt, rate=0.1, seed=4))
print("word split      :", word_split(prompt, seed=4))
print("word delete     :", word_delete(prompt, seed=4))
print("sentence reorder:", sentence_reorder(prompt, seed=4))

print("\nfull pipeline, several seeds:")
for seed in range(6):
    print(f"  seed {seed}:", classical_text_pipeline(prompt, seed))

print("\nwith consistency anchoring (augmented text keeps the original as a suffix):")
augmented = classical_text_pipeline(prompt, seed=1)
print(" ", enforce_consistency(augmented, prompt))
