"""The limit single-individual process in the SIS model.

The infected concentration Z_I(t) sets the rate at which a susceptible is
infected; recovery happens at the constant rate 0.5. Three independent
realisations of the individual's status are drawn under the fluid curve.
"""
import matplotlib.pyplot as plt
import numpy as np

from _plot import parse_args, save
from moltrack import build_augmented, build_limit_rates, bundled_model, simulate_y_batch, solve_fluid

args = parse_args(__doc__)
m = bundled_model("sis")
T = 20.0
sol = solve_fluid(m.network, (0.99, 0.01), T)
table = build_limit_rates(build_augmented(m.network, m.schema))
paths = simulate_y_batch(table, sol, "S~", 3, args.seed)
grid = np.linspace(0, T, 2001)

print(f"Z_I({T:g}) = {sol.eval(T)[1]:.4f}  (endemic level 1 - k2/k1 = 0.5)")
for k, p in enumerate(paths):
    print(f"path {k}: {p.n_jumps} status changes")

fig, axes = plt.subplots(4, 1, sharex=True, figsize=(6, 7))
axes[0].plot(grid, sol.eval(grid)[:, 1])
axes[0].set_ylabel("Z_I")
for ax, p in zip(axes[1:], paths):
    ax.step(grid, p.state_at(grid), where="post")
    ax.set_yticks([0, 1], m.schema.statuses[:2])
axes[-1].set_xlabel("t")
save(fig, args, "fig2_sis_single_paths.png")
