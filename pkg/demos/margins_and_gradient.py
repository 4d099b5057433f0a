"""Triplet margins, the logistic loss and its gradient on a toy instance.

The margin of (i, j, k) is d_K(i, j)^2 - d_K(i, k)^2 with K = A A^T. A
positive margin means i is closer to k, and the model answers y = +1 with
probability logistic(margin).
"""

import numpy as np

from triplet_metric import (TripletBatch, comparison_matrix, gradient, loss,
                            sample_responses, sample_triplets, triplet_margins)

rng = np.random.default_rng(0)
X = rng.standard_normal((8, 3))
A = rng.standard_normal((3, 2))

T = sample_triplets(8, 0.5, seed=0)
m = triplet_margins(X, A, T)
t = T[0]
print(f"{len(T)} triplets; first {tuple(int(v) for v in t)} has margin {m[0]:.4f}")
print(f"trace form Tr(A^T M A) = {np.trace(A.T @ comparison_matrix(X, t) @ A):.4f}")

batch = sample_responses(X, A, T, seed=0)
print(f"loss at the true factor   {loss(batch, X, A):.4f}")
print(f"loss at the zero factor   {loss(batch, X, np.zeros_like(A)):.4f} (log 2 = {np.log(2):.4f})")

# central differences agree with the analytic gradient
G = gradient(batch, X, A)
h, F = 1e-6, np.zeros_like(A)
for idx in np.ndindex(A.shape):
    E = np.zeros_like(A)
    E[idx] = h
    F[idx] = (loss(batch, X, A + E) - loss(batch, X, A - E)) / (2 * h)
print(f"gradient relative error  {np.linalg.norm(G - F) / np.linalg.norm(F):.2e}")

# a hand-made batch where every answer agrees with the model's sign
agree = TripletBatch(T, np.where(m > 0, 1, -1), 8)
print(f"loss on sign-consistent answers {loss(agree, X, A):.4f}")
