"""Auditing a predictor's Lipschitz constant under a learned metric.

The predictor x -> A_hat^T x is exactly 1-Lipschitz for K_hat = A_hat
A_hat^T. Its constant under the true metric is bounded through the
spectral gap eps between the two metrics and the smallest nonzero
eigenvalue of K_star. The bound needs the estimate to live in the range of
K_star: a perturbation that leaks into the null space of a rank-deficient
K_star separates pairs that K_star cannot tell apart, and the bound fails.
"""

import numpy as np

from triplet_metric import (FeatureDistribution, audit, certify_transfer, gen_features,
                            gen_metric, isometric_predictor)

n, p, r = 80, 5, 2
X = gen_features(FeatureDistribution("gaussian-diagonal", p=p, seed=3), n)
K_star, A_star = gen_metric(p, r, 3)
rng = np.random.default_rng(3)

cases = {
    "inside range": A_star @ (np.eye(r) + 0.05 * rng.standard_normal((r, r))),
    "leaks into null space": A_star + 0.05 * rng.standard_normal(A_star.shape),
}
for name, A_hat in cases.items():
    f = isometric_predictor(X, A_hat)
    rep = audit(f, X, A_hat @ A_hat.T)
    rec = certify_transfer(f, X, A_hat @ A_hat.T, K_star)
    print(f"{name}: L under K_hat {rep.l_max:.6f}, eps {rec.eps:.4f}, sigma_min {rec.sigma_min:.4f}")
    print(f"    L under K_star {rec.l_star:.4f}  bound {rec.bound:.4f}  holds {rec.holds}")
