"""Numerical oracles: selection gain and per-token vs whole-answer chains.

First: picking the best-scored of n candidates lifts expected quality by
rho * sigma_q * k_n, where k_n is the expected maximum of n standard
normals. Quadrature and Monte Carlo must agree.

Second: a per-step selection chain beats whole-answer selection once the
sequence is long enough; the crossover length is computed exactly.
"""

from ttscale.theory import (
    ChainParams,
    SelectionModel,
    chain_monte_carlo,
    expected_selected_quality,
    k_n,
    k_n_monte_carlo,
    p_answer,
    p_token,
    selection_monte_carlo,
    theorem_check,
    uniform_chain,
)

print("expected maximum of n standard normals (quadrature vs simulation):")
for n in (1, 2, 4, 8, 16, 64):
    mc, se = k_n_monte_carlo(n, trials=200_000, seed=n)
    print(f"  n={n:<3d} k_n={k_n(n):.6f}   mc={mc:.6f} +- {se:.6f}")

model = SelectionModel(mu_q=0.0, sigma_q=1.0, mu_s=0.0, sigma_s=1.0, rho=0.6, n=16)
mc, se = selection_monte_carlo(model, trials=200_000, seed=5)
print(f"\nselected quality, rho=0.6, n=16: formula={expected_selected_quality(model):.4f}"
      f"  simulated={mc:.4f} +- {se:.4f}")

print("\nchain comparison (p=0.8 per step, n=4 candidates, perfect selectors):")
print(f"{'T':>3s} {'p_token':>10s} {'p_answer':>10s}")
for t in (1, 3, 5, 10, 20, 30):
    cp = uniform_chain(0.8, 0.125, 4, 1.0, t)
    print(f"{t:>3d} {p_token(cp):>10.5f} {p_answer(cp):>10.5f}")

crossover = theorem_check(p=0.8, delta=0.125, n=4, s_answer=1.0, t_max=30)
print(f"\nper-token selection takes the lead at T = {crossover}")

cp = ChainParams(p=(0.7, 0.85, 0.9), s_token=(0.9, 0.95, 0.8), s_answer=0.9, n=3)
sim = chain_monte_carlo(cp, trials=200_000, seed=2)
print(f"\nmixed 3-step chain: closed form p_token={p_token(cp):.5f}, "
      f"simulated {sim['p_token']:.5f} +- {sim['p_token_stderr']:.5f}")
