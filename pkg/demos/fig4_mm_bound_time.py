"""Time a random enzyme molecule spends bound in a futile Michaelis-Menten cycle.

Rate constants 1, 5, 1, 0.5 and Z(0) = (0.5, 10, 0.5, 1) for (E, S, C, P).
A randomly chosen enzyme molecule starts free or bound with equal odds.
"""
import matplotlib.pyplot as plt
import numpy as np

from _plot import parse_args, save
from moltrack import (
    EmpiricalDistribution, build_augmented, build_limit_rates, bundled_model, distances,
    occupation_time, simulate_y_batch, solve_fluid, tracked_batch,
)

args = parse_args(__doc__)
m = bundled_model("mm_futile")
aug = build_augmented(m.network, m.schema)
V, T, z0 = 1000, 10.0, (0.5, 10.0, 0.5, 1.0)
tau0 = {"E~": 0.5, "C_E~": 0.5}
bound = {m.schema.status_index("C_E~")}

tracked = tracked_batch(aug, V, z0=z0, tau0=tau0, T=T, reps=1000, seed=args.seed, threads=args.threads, keep_species=False)
limit = simulate_y_batch(build_limit_rates(aug), solve_fluid(m.network, z0, T), tau0, 1000, args.seed, threads=args.threads)
a = EmpiricalDistribution.continuous([occupation_time(p.status_path, bound, T) for p in tracked])
b = EmpiricalDistribution.continuous([occupation_time(p, bound, T) for p in limit])
print(f"Kolmogorov-Smirnov distance: {distances(a, b):.4f}")
print(f"mean bound time: {a.samples.mean():.3f} (tracked) vs {b.samples.mean():.3f} (limit)")

bins = np.linspace(0, T, 41)
fig, ax = plt.subplots(figsize=(6, 4))
ax.hist(a.samples, bins, density=True, alpha=0.5, label="tracked SSA")
ax.hist(b.samples, bins, density=True, alpha=0.5, label="limit process")
ax.set(xlabel="time in C", ylabel="density")
ax.legend()
save(fig, args, "fig4_mm_bound_time.png")
