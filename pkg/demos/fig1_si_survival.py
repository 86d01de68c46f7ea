"""SI survival: the chance a susceptible escapes infection until time t.

With n = 1000 susceptibles, m = 10 infected and beta = 1 the fraction of
remaining susceptibles, the closed form s_t, and the survival curve of 1000
independent limit single-molecule paths all lie on top of each other.
"""
import matplotlib.pyplot as plt
import numpy as np

from _plot import parse_args, save
from moltrack import build_augmented, build_limit_rates, bundled_model, simulate_ssa, simulate_y_batch, solve_fluid, survival_curve

args = parse_args(__doc__)
m = bundled_model("si")
n, infected, rho, T = 1000, 10, 0.01, 10.0
grid = np.linspace(0, T, 501)
s_t = (1 + rho) / (1 + rho * np.exp((1 + rho) * grid))

# the whole population, one Gillespie run
path = simulate_ssa(m.network, n, (n, infected), T, seed=args.seed)
remaining = path.state_at(grid)[:, 0] / n

# independent single individuals infected at the deterministic rate
sol = solve_fluid(m.network, (1.0, rho), T)
table = build_limit_rates(build_augmented(m.network, m.schema))
s = m.schema.status_index("S~")
single = survival_curve(simulate_y_batch(table, sol, s, 1000, args.seed, threads=args.threads), s, grid)

print(f"sup |X_S/n - s_t|      = {np.max(np.abs(remaining - s_t)):.4f}")
print(f"sup |single-path - s_t| = {np.max(np.abs(single - s_t)):.4f}")

fig, ax = plt.subplots(figsize=(6, 4))
ax.plot(grid, remaining, label="remaining susceptibles (SSA)")
ax.plot(grid, single, label="1000 single trajectories")
ax.plot(grid, s_t, "k--", label="s_t")
ax.set(xlabel="t", ylabel="fraction susceptible")
ax.legend()
save(fig, args, "fig1_si_survival.png")
