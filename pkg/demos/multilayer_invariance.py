"""
Deep networks with theta2 = 0 stay Marchenko-Pastur
====================================================

With cos activation and the per-layer rescaling sigma_x / sqrt(theta1),
every layer's Gram spectrum (divided by theta1) follows MP of shape
phi / prod(psi_p). We push the data through three layers and compare.
"""
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from nlrmt import activation as act, laws, montecarlo as mc

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo-output")
out.mkdir(exist_ok=True)

f = act.make("cos")
psi_list = [1.0, 2.0, 1.0]
shape = mc.ModelShape.from_ratios(800, 1.0, psi_list)
print("widths", (shape.n0, *shape.layer_widths), "m", shape.m)
runs = mc.run_trials(mc.EnsembleConfig(shape, f, trials=4, seed=0, multilayer=True))

fig, axes = plt.subplots(1, 3, figsize=(13, 3.8))
ratio = shape.phi
for p, ax in enumerate(axes, start=1):
    ratio /= psi_list[p - 1]
    law = laws.mp_law(ratio)
    spectra = mc.layer(runs, p)
    ks = mc.compare(spectra, law, 2).ks_distance
    hist, edges = mc.histogram(spectra)
    ax.stairs(hist, edges, fill=True, alpha=0.4)
    ax.plot(law.grid, law.rho, "r-", lw=1)
    ax.set_title(f"layer {p}: MP({ratio:g}), KS {ks:.3f}")
    print(f"layer {p}: shape {ratio:g}  KS {ks:.4f}")

fig.tight_layout()
fig.savefig(out / "multilayer.png", dpi=120)
