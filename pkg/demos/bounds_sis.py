"""Explicit error bounds for the SIS model and how they scale with V.

The tube-exit probability p is shown at a fixed tube radius. The
single-molecule bound carries a term proportional to the radius, so for each
volume the radius is chosen by grid search. Values at or above 1 are vacuous.
"""
import matplotlib.pyplot as plt
import numpy as np

from _plot import parse_args, save
from moltrack import build_augmented, bundled_model, evaluate_bounds, solve_fluid
from moltrack.bounds import grid_search, sis_rough_p_bound

args = parse_args(__doc__)
m = bundled_model("sis")
aug = build_augmented(m.network, m.schema)
sol = solve_fluid(m.network, (0.99, 0.01), 1.0)
eps = 0.005
volumes = np.logspace(6, 12, 13)

radii = np.logspace(-6, -2.1, 40)
p_vals, single_vals = [], []
for V in volumes:
    r = evaluate_bounds(m.network, aug, sol, V, eps, 1.0)
    best, single = grid_search(lambda e: evaluate_bounds(m.network, aug, sol, V, e, 1.0).single_bound.raw, {"e": radii})
    p_vals.append(r.p_bound.raw)
    single_vals.append(single)
    rough = sis_rough_p_bound(1, 0.5, 1, eps, 1, V)
    print(f"V={V:8.1e}  p={r.p_bound.raw:10.3e}  rough p={rough:10.3e}  single={single:10.3e} at eps={best['e']:.1e}")

fig, ax = plt.subplots(figsize=(6, 4))
ax.loglog(volumes, p_vals, "o-", label="tube-exit bound p")
ax.loglog(volumes, single_vals, "s-", label="single-molecule bound, best eps")
ax.axhline(1, color="k", lw=0.8)
ax.set(xlabel="V", ylabel="bound")
ax.legend()
save(fig, args, "bounds_sis.png")
