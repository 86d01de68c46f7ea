"""How many times is a random individual infected before time T?

The count from 1000 tracked Gillespie runs at V = 1000 is compared with the
count from 1000 limit paths, which need no simulation of the population.
"""
import matplotlib.pyplot as plt
import numpy as np

from _plot import parse_args, save
from moltrack import (
    EmpiricalDistribution, build_augmented, build_limit_rates, bundled_model, count_transitions,
    distances, simulate_y_batch, solve_fluid, tracked_batch,
)

args = parse_args(__doc__)
m = bundled_model("sis")
aug = build_augmented(m.network, m.schema)
V, T, z0 = 1000, 10.0, (0.99, 0.01)
tau0 = {"S~": 0.99, "I~": 0.01}
s, i = m.schema.status_index("S~"), m.schema.status_index("I~")

tracked = tracked_batch(aug, V, z0=z0, tau0=tau0, T=T, reps=1000, seed=args.seed, threads=args.threads, keep_species=False)
limit = simulate_y_batch(build_limit_rates(aug), solve_fluid(m.network, z0, T), tau0, 1000, args.seed, threads=args.threads)
a = EmpiricalDistribution.discrete(count_transitions(p.status_path, s, i) for p in tracked)
b = EmpiricalDistribution.discrete(count_transitions(p, s, i) for p in limit)
print(f"total variation distance: {distances(a, b):.4f}")

values = np.arange(max(max(a.counts), max(b.counts)) + 1)
fig, ax = plt.subplots(figsize=(6, 4))
ax.bar(values - 0.2, [a.counts.get(v, 0) / a.size for v in values], 0.4, label="tracked SSA")
ax.bar(values + 0.2, [b.counts.get(v, 0) / b.size for v in values], 0.4, label="limit process")
ax.set(xlabel="number of infections", ylabel="frequency")
ax.legend()
save(fig, args, "fig3_sis_infection_counts.png")
