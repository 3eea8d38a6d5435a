"""The trap game with a hidden escape action.

A uniformly random joint policy wastes steps in the trap before guessing the
escape; an agent that deviates to its half of the secret only needs the other
agent to guess. The measured robust gap matches the closed form for every
horizon.
"""

from drmg.game_core import JointPolicy, build_initial_shock
from drmg.robust_planning import exact_robust_vi, regret_gap


def wasted(p, steps):
    return (1 - p) / p * (1 - (1 - p) ** steps)


sigma = 0.3
print(f"{'H':>3} {'measured gap':>14} {'closed form':>14}")
for H in range(2, 11):
    spec = build_initial_shock(2, 2, H, sigma, (1, 1))
    gap = regret_gap(spec, JointPolicy.uniform(spec), 0, "NASH")
    print(f"{H:3d} {gap:14.10f} {sigma * (wasted(0.25, H - 1) - wasted(0.5, H - 1)):14.10f}")

spec = build_initial_shock(2, 2, 6, sigma, (1, 1))
sol = exact_robust_vi(spec)
print(f"\nplanner that knows the secret: value {sol.V[0, 0, 0]:.3f} of 6, gap {regret_gap(spec, sol.policy, 0):.1e}")
