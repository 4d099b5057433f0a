"""Recovering Bradley-Terry-Luce weights from one anchor's comparisons.

For a fixed anchor i, triplet (i, j, k) is a contest between j and k.
RankCentrality turns the win counts into a lazy random walk whose
stationary distribution is proportional to the BTL weights.
"""

import numpy as np

from triplet_metric.spectral import AnchorTournament, rank_centrality

rng = np.random.default_rng(1)
w = rng.uniform(0.2, 3.0, 6)

# sampled contests: 200 per pair
wins = np.zeros((6, 6))
for a in range(6):
    for b in range(a + 1, 6):
        won = rng.binomial(200, w[a] / (w[a] + w[b]))
        wins[a, b], wins[b, a] = won, 200 - won

scores = rank_centrality(AnchorTournament(anchor=0, items=np.arange(1, 7), wins=wins))
print("true weights  ", np.round(w / w.sum(), 4))
print("RankCentrality", np.round(scores.pi, 4))
print(f"power iterations {scores.iterations}, max abs error {np.abs(scores.pi - w / w.sum()).max():.4f}")
