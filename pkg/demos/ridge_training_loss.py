"""
Random-features ridge regression: trace and training loss
==========================================================

The expected training loss of ridge regression on random features is a
derivative of (1/m) Tr (Y*Y/m + gamma)^-1, which the limit law gives in
closed form. Compare with simulation across activations.
"""
import numpy as np

from nlrmt import activation as act, montecarlo as mc, stieltjes as st

gammas = [0.03, 0.1, 0.3, 1.0, 3.0, 10.0]
shape = mc.ModelShape.from_ratios(600, 1.0, 0.5)  # n1 = 2 n0

for name in ("linear", "tanh", "softplus"):
    f = act.make(name, unit_theta1=True)
    th = act.compute_thetas(f)
    params = st.LawParams(th.theta1, th.theta2, shape.phi, shape.psi)
    runs = mc.final_layer(mc.run_trials(mc.EnsembleConfig(shape, f, trials=3, seed=0)))
    print(f"\n{name}: theta2/theta1 = {th.theta2 / th.theta1:.3f}")
    print("  gamma     limit      simulated   loss*")
    for g in gammas:
        r = st.ridge_trace(params, g)
        emp = np.mean([mc.ridge_trace_from_eigenvalues(s.eigenvalues, s.shape.m, g) for s in runs])
        print(f"  {g:6.2f}  {r.trace_per_m:.6f}  {emp:.6f}  {r.expected_loss_scaled:.5f}")
