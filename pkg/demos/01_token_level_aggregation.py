"""Merging per-branch next-token distributions, four ways.

Each generation step of an ensemble decode produces one probability row
per augmented input. This script shows how the four aggregation rules
combine the same disagreeing rows into a single token choice.
"""

import numpy as np

from ttscale.decoder import (
    aggregate_average,
    aggregate_entropy_weighted,
    aggregate_majority,
    aggregate_most_confident,
)

# Three branches, four-token vocabulary. Branch 0 is confidently wrong,
# branches 1 and 2 lean the other way with less confidence.
rows = np.array(
    [
        [0.70, 0.20, 0.05, 0.05],
        [0.25, 0.45, 0.20, 0.10],
        [0.20, 0.50, 0.20, 0.10],
    ]
)

print("branch rows:")
for i, row in enumerate(rows):
    print(f"  branch {i}: {row}")

avg = aggregate_average(rows)
ew = aggregate_entropy_weighted(rows)
print("\narithmetic mean      :", np.round(avg, 4), "-> token", int(avg.argmax()))
print("entropy-weighted mean:", np.round(ew, 4), "-> token", int(ew.argmax()))
print("majority vote        : token", aggregate_majority(rows))
print("most confident       : token", aggregate_most_confident(rows))

# The continuous rules disagree with the single most confident branch:
# branch 0's peak (0.70) wins "most confident", but the averaged evidence
# favors token 1.
