import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from moltrack.fluid import solve_fluid
from moltrack.modelfile import bundled_model
from moltrack.network import DELTA, build_augmented
from moltrack.paths import survival_curve
from moltrack.singlemol import SingleMoleculeError, build_limit_rates, hazard, simulate_y, simulate_y_batch
from moltrack.ssa import tracked_batch

from conftest import si_closed_form


@pytest.fixture(scope="module")
def sis_setup(sis, sis_aug):
    sol = solve_fluid(sis.network, [0.99, 0.01], 10.0)
    return build_limit_rates(sis_aug), sol


def entry(table, src, dst):
    s = table.schema
    (k,) = [k for k, e in enumerate(table.entries) if e.source == s.status_index(src) and e.target == s.status_index(dst)]
    return k


def test_sis_rates(sis_setup):
    table, _ = sis_setup
    z = np.array([0.7, 0.3])
    assert table.rate(entry(table, "S~", "I~"), z) == pytest.approx(1.0 * 0.3, rel=1e-15)
    assert table.rate(entry(table, "I~", "S~"), z) == 0.5


def test_mm_binding_rate():
    m = bundled_model("mm_full")
    table = build_limit_rates(build_augmented(m.network, m.schema))
    z = np.array([0.5, 10.0, 0.5, 1.0])
    assert table.rate(entry(table, "E~", "C_E~"), z) == pytest.approx(1.0 * 10.0, rel=1e-15)


def test_entries_match_positive_probabilities(sis_setup):
    table, _ = sis_setup
    assert {(e.source, e.target, e.reaction) for e in table.entries} == {(0, 1, 0), (1, 1, 0), (1, 0, 1)}


@pytest.mark.parametrize("t", [0.0, 1.3, 3.0, 7.77, 10.0])
def test_sis_hazards(sis_setup, t):
    table, sol = sis_setup
    z = sol.eval(t)
    assert abs(hazard(table, sol, 0, t) - 1.0 * z[1]) <= 1e-12 * z[1]
    assert abs(hazard(table, sol, 1, t) - 0.5) <= 1e-12 * 0.5
    assert hazard(table, sol, DELTA, t) == 0.0


def test_hazard_out_of_range(sis_setup):
    table, sol = sis_setup
    with pytest.raises(ValueError):
        hazard(table, sol, 0, 11.0)


@given(
    st.sampled_from(["mm_full", "mm_futile", "autophos", "sis", "sis_migration"]),
    st.lists(st.floats(1e-6, 50.0), min_size=4, max_size=4),
)
def test_cancellation_identity(name, zs):
    m = bundled_model(name)
    table = build_limit_rates(build_augmented(m.network, m.schema))
    z = np.array(zs[: m.network.dim])
    for k in range(len(table.entries)):
        a, b = table.rate(k, z), table.ratio_rate(k, z)
        assert abs(a - b) <= 1e-12 * max(abs(b), 1e-300)


def test_zero_rates_mean_no_jumps(si):
    aug = build_augmented(si.network, si.schema)
    sol = solve_fluid(si.network, [1.0, 0.01], 5.0)
    p = simulate_y(build_limit_rates(aug), sol, "I~", seed=2)
    assert p.n_jumps == 0


def test_floor_refusal(si):
    aug = build_augmented(si.network, si.schema)
    sol = solve_fluid(si.network, [1.0, 0.0], 5.0)
    with pytest.raises(SingleMoleculeError):
        simulate_y(build_limit_rates(aug), sol, "S~")


def test_si_survival_matches_closed_form(si):
    aug = build_augmented(si.network, si.schema)
    sol = solve_fluid(si.network, [1.0, 0.01], 10.0)
    paths = simulate_y_batch(build_limit_rates(aug), sol, "S~", 10_000, seed=7)
    grid = np.linspace(0, 10, 501)
    assert np.max(np.abs(survival_curve(paths, 0, grid) - si_closed_form(grid))) < 0.02


def test_constant_rate_holding_times_are_exponential(sis_setup):
    table, sol = sis_setup
    paths = simulate_y_batch(table, sol, "I~", 10_000, seed=3)
    T = sol.T
    first = np.array([p.jump_times[0] for p in paths if p.n_jumps])
    cap = stats.expon.cdf(T, scale=2.0)
    res = stats.kstest(first, lambda x: stats.expon.cdf(x, scale=2.0) / cap)
    assert res.pvalue > 1e-3


def test_destinations_follow_rates(sis_setup):
    table, sol = sis_setup
    for p in simulate_y_batch(table, sol, "S~", 300, seed=4):
        if p.n_jumps:
            seq = np.concatenate([[0], p.post_states])
            assert np.all(seq[1:] != seq[:-1])


def test_engines_and_threads_identical(sis_setup):
    table, sol = sis_setup
    a = simulate_y_batch(table, sol, "S~", 600, seed=5, threads=1)
    b = simulate_y_batch(table, sol, "S~", 600, seed=5, threads=3)
    c = simulate_y_batch(table, sol, "S~", 600, seed=5, engine="python")
    for x, y, w in zip(a, b, c):
        assert np.array_equal(x.jump_times, y.jump_times) and np.array_equal(x.jump_times, w.jump_times)
        assert np.array_equal(x.post_states, y.post_states) and np.array_equal(x.post_states, w.post_states)


def test_initial_distribution(sis_setup):
    table, sol = sis_setup
    paths = simulate_y_batch(table, sol, {"S~": 0.25, "I~": 0.75}, 4000, seed=6)
    frac = np.mean([p.initial_state == 1 for p in paths])
    assert stats.binomtest(int(frac * 4000), 4000, 0.75).pvalue > 1e-3


def test_marginal_gap_shrinks_with_volume(sis, sis_aug, sis_setup):
    table, sol = sis_setup
    grid = np.arange(1.0, 11.0)
    y = np.stack([p.state_at(grid) for p in simulate_y_batch(table, sol, "S~", 2000, seed=1)])
    q = (y == 1).mean(axis=0)
    gaps = []
    for V in (100, 1000):
        runs = tracked_batch(sis_aug, V, None, "S~", 10.0, 2000, seed=2, z0=[0.99, 0.01], grid=grid, keep_species=False)
        p = (np.stack([r.grid_status for r in runs]) == 1).mean(axis=0)
        gaps.append(np.max(np.abs(p - q)))
    # one-sided: each proportion has standard error below 0.0112
    assert gaps[0] - gaps[1] > 2.33 * np.sqrt(4) * 0.0112
