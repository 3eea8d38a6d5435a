"""Worst-case expectations over TV and KL balls, checked against primal oracles.

Prints, for one value vector, how the robust expectation falls as the radius
grows, next to the brute-force primal value.
"""

import numpy as np

from drmg.robust_dual import SupportQuery, brute_force_support, support

V = np.array([0.0, 1.0, 2.5])
P = np.array([0.2, 0.5, 0.3])
print(f"values {V}, nominal {P}, plain expectation {P @ V:.4f}\n")
print(f"{'radius':>7} {'TV dual':>9} {'TV LP':>9} {'KL dual':>9} {'KL grid':>9}")
for radius in (0.0, 0.05, 0.1, 0.2, 0.4, 0.8):
    tv = SupportQuery(V, P, radius, "TV", horizon=3.0)
    kl = SupportQuery(V, P, radius, "KL", horizon=3.0)
    print(f"{radius:7.2f} {support(tv).value:9.5f} {brute_force_support(tv):9.5f} "
          f"{support(kl).value:9.5f} {brute_force_support(kl):9.5f}")

# With a fail state in the game, the TV adversary may push mass to a zero-valued state.
q = SupportQuery(V + 0.5, P, 0.2, "TV", horizon=3.0, assume_zero_min=True)
print(f"\nshifted values, TV 0.2, zero floor: dual {support(q).value:.5f}, LP {brute_force_support(q):.5f}")
