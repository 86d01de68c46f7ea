"""Population dynamics rebuilt from independent single-molecule paths.

100 Gillespie trajectories of X_S/V are set against 100 aggregate
trajectories, each made of V independent limit paths. Starting with 1%
infected the Gillespie runs spread more; see fig6 for a 10% start.
"""
import matplotlib.pyplot as plt
import numpy as np

from _plot import parse_args, save
from moltrack import aggregate_trajectory, build_aggregate, build_augmented, build_limit_rates, bundled_model, solve_fluid, ssa_batch


def compare(infected, args, name):
    m = bundled_model("sis")
    V, T, reps = 1000, 10.0, 100
    x0 = np.array([round((1 - infected) * V), round(infected * V)])
    z0 = x0 / V
    grid = np.linspace(0, T, 201)
    sol = solve_fluid(m.network, z0, T)
    table = build_limit_rates(build_augmented(m.network, m.schema))

    ssa = ssa_batch(m.network, V, x0, T, reps, args.seed, grid=grid, threads=args.threads)[:, :, 0] / V
    agg = np.array([
        aggregate_trajectory(build_aggregate(table, sol, z0, V, seed=args.seed + 1 + r, threads=args.threads), grid)[:, 0]
        for r in range(reps)
    ])
    k = np.searchsorted(grid, 5.0)
    print(f"sup |mean SSA - mean aggregate| = {np.max(np.abs(ssa.mean(0) - agg.mean(0))):.4f}")
    print(f"variance at t=5: SSA {ssa[:, k].var(ddof=1):.2e}, aggregate {agg[:, k].var(ddof=1):.2e}")

    fig, axes = plt.subplots(1, 2, sharey=True, figsize=(9, 4))
    for ax, data, title in ((axes[0], ssa, "Gillespie"), (axes[1], agg, "aggregate")):
        ax.plot(grid, data.T, color="C0", alpha=0.15, lw=0.8)
        ax.plot(grid, sol.eval(grid)[:, 0], "k--")
        ax.set(title=title, xlabel="t")
    axes[0].set_ylabel("X_S / V")
    save(fig, args, name)


if __name__ == "__main__":
    compare(0.01, parse_args(__doc__), "fig5_sis_aggregate.png")
