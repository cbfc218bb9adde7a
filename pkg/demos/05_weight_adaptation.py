"""Learning aggregation weights by minimizing mixture entropy.

Uniform averaging treats all branches as equally trustworthy. When one
branch is confidently peaked and another is near-uniform noise, a few
gradient micro-steps on the mixture entropy shift weight toward the
confident branch, without touching the model itself.
"""

import numpy as np

from ttscale.adapt import WeightOptConfig, marginal_entropy, optimize_weights

rows = np.array(
    [
        [0.92, 0.04, 0.04],  # confident branch
        [0.34, 0.33, 0.33],  # noise branch
        [0.40, 0.35, 0.25],  # another weak branch
    ]
)

uniform = np.zeros(3)
print("mixture entropy at uniform weights:", round(marginal_entropy(uniform, rows), 4))

for steps in (1, 5, 20, 100):
    cfg = WeightOptConfig(micro_steps=steps)
    weights = optimize_weights([rows], cfg)[0]
    entropy = marginal_entropy(np.log(weights), rows)
    print(f"after {steps:>3d} micro-steps: weights={np.round(weights, 3)}  entropy={entropy:.4f}")

# The optimized mixture concentrates on the confident branch's choice.
final = optimize_weights([rows], WeightOptConfig(micro_steps=100))[0]
print("final mixture:", np.round(final @ rows, 3), "-> token", int((final @ rows).argmax()))
