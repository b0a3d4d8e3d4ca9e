"""
Empirical error curves against the finite-time envelopes.

Runs 20 seeded replications under a constant stepsize, assembles the rate
constants, and compares the measured consensus error and value error with
the corresponding theoretical right-hand sides. The envelopes are provable
upper bounds built from worst-case constants, so large slack is expected;
the point of the comparison is that they hold everywhere.
"""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

import consensus_td as ct
from consensus_td.harness import draw_initializations, mean_se

SEED = 20260810
M = 20
plan = ct.StepsizePlan.constant(0.05)

mrp, feats = ct.generate_instance(
    ct.InstanceParams(n=20, K=5, N=5, gamma=0.9), seed=SEED
)
oracles = ct.compute_oracles(mrp, feats)
weights = ct.weight_schedule(ct.ring_schedule(5), lazy=0.25)
spectral = ct.spectral_eta(weights, B=1)
proj = ct.default_projection(oracles.theta_star)

theta0s = draw_initializations(SEED, M, mrp.N, feats.K, proj.radius)
moments = ct.init_moments(theta0s, oracles.theta_star)
constants = ct.compute_constants(mrp, oracles, proj, spectral, moments)
print("constants: L = %.3f, eta = %.4f, delta = %.4f, beta0 = %.4f, "
      "beta1 = %.2f" % (constants.L, constants.eta, constants.delta,
                        constants.beta0(plan.param), constants.beta1))

trajs = [
    ct.run(mrp, feats, oracles, weights, plan, proj, 5000,
           ct.RngStream(SEED, r), record_every=10, theta0=theta0s[r])
    for r in range(M)
]
ks = trajs[0].ks

# Consensus error: the envelope is path-wise, so compare the worst path.
worst_consensus = np.max(np.stack([t.consensus_err for t in trajs]), axis=0)
env_consensus = ct.lemma1_envelope(
    ks, constants, max(t.theta0_norm for t in trajs), plan
)
print("\nconsensus error: worst path vs envelope")
for k in (10, 100, 1000, 5000):
    i = list(ks).index(k)
    print(f"  k = {k:>5}: observed {worst_consensus[i]:.4e}  "
          f"envelope {env_consensus[i]:.4e}")

# Value error of the averaged outputs: mean + 2 SE vs the envelope.
stat = np.stack([t.dnorm_sq_hat for t in trajs])
mean, se = mean_se(stat)
env_value = ct.theorem1_envelope(ks, constants, plan)
print("\nvalue error (mean + 2 SE over %d replications) vs envelope" % M)
for k in (10, 100, 1000, 5000):
    i = list(ks).index(k)
    upper = (mean[i] + 2 * se[i]).max()
    print(f"  k = {k:>5}: observed {upper:.4e}  envelope {env_value[i]:.4e}")

fig, axes = plt.subplots(1, 2, figsize=(11, 4.2))
axes[0].loglog(ks, worst_consensus, label="worst path")
axes[0].loglog(ks, env_consensus, "--", label="envelope")
axes[0].set_title("consensus error $\\|Q\\Theta(k)\\|_F$")
axes[0].set_xlabel("iteration k")
axes[0].legend()
axes[1].loglog(ks, (mean + 2 * se).max(axis=1), label="mean + 2 SE (worst agent)")
axes[1].loglog(ks, env_value, "--", label="envelope")
axes[1].set_title("value error of averaged outputs")
axes[1].set_xlabel("iteration k")
axes[1].legend()
fig.tight_layout()
fig.savefig("demos/envelope_verification.png", dpi=120)
print("\nsaved demos/envelope_verification.png")
