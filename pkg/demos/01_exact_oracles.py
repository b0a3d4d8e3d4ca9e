"""
Exact oracles for one instance: stationary distribution, steady-state pair
(A, b_v), fixed point theta*, and the exact value function J*.

Walks through the quantities every later check is verified against, and
cross-checks the closed-form A against a plain Monte Carlo estimate.
"""

import numpy as np

import consensus_td as ct

params = ct.InstanceParams(n=20, K=5, N=5, gamma=0.9)
mrp, feats = ct.generate_instance(params, seed=20260810)
oracles = ct.compute_oracles(mrp, feats)

print("instance: n =", mrp.n, " K =", feats.K, " N =", mrp.N, " gamma =", mrp.gamma)
print("stationary distribution pi (first 5):", np.round(oracles.pi[:5], 4))
print("residual ||pi P - pi||_inf =", np.max(np.abs(oracles.pi @ mrp.P - oracles.pi)))

print("\nsteady-state matrix A: sigma_min = %.4f, sigma_max = %.4f"
      % (oracles.sigma_min, oracles.sigma_max))
print("smallest eigenvalue of (A + A^T)/2 =", oracles.lambda_min_sym)
print("fixed point theta* =", np.round(oracles.theta_star, 5))
print("solve residual ||A theta* - b_bar|| =",
      np.linalg.norm(oracles.A @ oracles.theta_star - oracles.b_bar))

# The exact value function is the Bellman operator's fixed point.
J = oracles.J_star
TJ = ct.bellman_operator(J, mrp)
print("\nBellman fixed-point residual ||T J* - J*||_inf =", np.max(np.abs(TJ - J)))

# How well can the feature span represent J*? The fixed point's weighted
# error is within 1/(1-gamma) of the best possible.
lhs = ct.d_norm(feats.Phi @ oracles.theta_star - J, oracles.pi)
best = ct.d_norm(ct.projection_Pi(J, feats, oracles.pi) - J, oracles.pi)
print("||Phi theta* - J*||_D = %.6f" % lhs)
print("||Pi J* - J*||_D      = %.6f  (best in span)" % best)
print("bound (1/(1-gamma)) * best = %.6f" % (best / (1 - mrp.gamma)))

# Monte Carlo cross-check of A from i.i.d. tuples.
sampler = ct.TupleSampler(mrp, oracles.pi)
gen = ct.RngStream(seed=1, stream_id=0).generator()
T = 200_000
s, s_next, _ = sampler.draw_batch(gen, T)
A_hat = feats.Phi[s].T @ (feats.Phi[s] - mrp.gamma * feats.Phi[s_next]) / T
print("\nMonte Carlo check of A over %d tuples:" % T)
print("max |A_hat - A| =", np.max(np.abs(A_hat - oracles.A)))
