"""
Eigenvalue histograms of f(WX) f(WX)*/m against the limit law
===============================================================

Three activations at n0 = n1 = m. tanh (rescaled so theta1 = 1) has a
genuinely new limit, computed from the quartic fixed-point equation.
cos and x^3 - 3x have theta2 = 0, so their limit is Marchenko-Pastur.
"""
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from nlrmt import activation as act, laws, montecarlo as mc, stieltjes as st

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo-output")
out.mkdir(exist_ok=True)
n0, trials = 1000, 4

###############################################################################
# The activations and their two Gaussian functionals

acts = {
    "tanh": act.make("tanh", unit_theta1=True),
    "cos": act.make("cos"),
    "x^3 - 3x": act.make("hermite3"),
}
for name, f in acts.items():
    th = act.compute_thetas(f)
    print(f"{name:9s} theta1={th.theta1:.6f} theta2={th.theta2:.3e}")

###############################################################################
# Simulate and overlay

fig, axes = plt.subplots(1, 3, figsize=(13, 3.8))
shape = mc.ModelShape.from_ratios(n0, 1.0, 1.0)
for ax, (name, f) in zip(axes, acts.items()):
    th = act.compute_thetas(f)
    if th.theta2 < 1e-12 * th.theta1:
        law = laws.mp_law(1.0, th.theta1)
    else:
        law = st.density(st.LawParams(th.theta1, th.theta2, 1.0, 1.0))
    runs = mc.final_layer(mc.run_trials(mc.EnsembleConfig(shape, f, trials=trials, seed=0)))
    rep = mc.compare(runs, law, 2)
    hist, edges = mc.histogram(runs)
    ax.stairs(hist, edges, fill=True, alpha=0.4)
    ax.plot(law.grid, law.rho, "r-", lw=1)
    ax.set_ylim(0, 1.3 * hist.max())
    ax.set_title(f"{name}  (KS {rep.ks_distance:.3f})")
    print(f"{name:9s} KS={rep.ks_distance:.4f} L1={rep.l1_cdf_distance:.5f}")

fig.tight_layout()
fig.savefig(out / "activation_spectra.png", dpi=120)
print("wrote", out / "activation_spectra.png")
