"""Corrupted bandit: regret of a UCB learner over joint arms grows with the arm count."""

import numpy as np

from drmg.game_core import build_corrupted_bandit
from drmg.harness import run_bandit_baseline

K = 10_000
for actions in ((2, 2), (3, 3), (4, 4)):
    M = int(np.prod(actions))
    finals = []
    for seed in range(10):
        rng = np.random.default_rng(seed)
        spec = build_corrupted_bandit(actions, 0.1, 0.1, int(rng.integers(M)))
        finals.append(run_bandit_baseline(spec, K, rng).cumulative[-1])
    print(f"M={M:2d}: median regret {np.median(finals):7.1f}   sqrt(M K) = {np.sqrt(M * K):6.1f}")
