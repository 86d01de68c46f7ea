import numpy as np
import pytest
from scipy import stats

from moltrack.aggregate import aggregate_trajectory, build_aggregate, check_subconservative, tracked_mass
from moltrack.fluid import solve_fluid
from moltrack.modelfile import bundled_model
from moltrack.network import DELTA, StatusSchema, build_augmented
from moltrack.singlemol import build_limit_rates


@pytest.fixture(scope="module")
def sis_table(sis_aug, sis):
    return build_limit_rates(sis_aug), solve_fluid(sis.network, [0.99, 0.01], 10.0)


@pytest.mark.parametrize("name", ["si", "sis", "autophos", "mm_full", "mm_futile"])
def test_bundled_models_are_subconservative(name):
    m = bundled_model(name)
    assert check_subconservative(m.network, m.schema) == []


def test_migration_violates():
    m = bundled_model("sis_migration")
    bad = check_subconservative(m.network, m.schema)
    s_in = m.network.reaction_index("s_in")
    assert (s_in, m.schema.status_index("S~")) in bad


def test_si_degrading_schema_ok(si):
    schema = StatusSchema(("S~",), (0,), {(0, 0, DELTA): 1})
    assert check_subconservative(si.network, schema) == []


def test_float_probabilities_use_tolerance(sis):
    probs = {k: float(v) for k, v in sis.schema.probs.items()}
    assert check_subconservative(sis.network, StatusSchema(sis.schema.statuses, sis.schema.sigma, probs)) == []


def test_initial_counts(sis_table):
    table, sol = sis_table
    ens = build_aggregate(table, sol, [0.99, 0.01], 1000, T=1.0, seed=1)
    assert ens.counts0.tolist() == [990, 10]
    assert ens.n_paths == 1000
    at0 = aggregate_trajectory(ens, [0.0])[0]
    assert at0.tolist() == pytest.approx([0.99, 0.01])


def test_empty_ensemble(sis_table):
    table, sol = sis_table
    ens = build_aggregate(table, sol, [0.0001, 0.0001], 10, T=1.0)
    assert ens.n_paths == 0
    assert np.all(aggregate_trajectory(ens, [0.0, 1.0]) == 0)


def test_migration_refused():
    m = bundled_model("sis_migration")
    aug = build_augmented(m.network, m.schema)
    sol = solve_fluid(m.network, [0.9, 0.1], 1.0)
    with pytest.raises(ValueError, match="sub-conservative"):
        build_aggregate(build_limit_rates(aug), sol, [0.9, 0.1], 100)


def test_split_status_contributes_half():
    m = bundled_model("mm_full")
    aug = build_augmented(m.network, m.schema)
    z = [0.5, 10.0, 0.5, 1.0]
    sol = solve_fluid(m.network, z, 1.0)
    ens = build_aggregate(build_limit_rates(aug), sol, z, 100, seed=2)
    c = m.network.species_index("C")
    col = [m.network.species[s] for s in ens.tracked_species].index("C")
    assert ens.counts0[m.schema.status_index("C_E~")] == 50
    assert aggregate_trajectory(ens, [0.0])[0, col] == pytest.approx(50 / 2 / 100)
    assert m.schema.alpha(m.network.dim)[c] == 2


def test_mass_non_increasing():
    m = bundled_model("autophos")
    aug = build_augmented(m.network, m.schema)
    sol = solve_fluid(m.network, [1.0, 0.2], 5.0)
    ens = build_aggregate(build_limit_rates(aug), sol, [1.0, 0.2], 200, seed=3)
    mass = tracked_mass(ens, np.linspace(0, 5, 51))
    assert mass[0] == 240
    assert np.all(np.diff(mass) <= 0)


def test_threads_identical(sis_table):
    table, sol = sis_table
    grid = np.linspace(0, 10, 21)
    a = aggregate_trajectory(build_aggregate(table, sol, [0.9, 0.1], 1000, seed=4, threads=1), grid)
    b = aggregate_trajectory(build_aggregate(table, sol, [0.9, 0.1], 1000, seed=4, threads=4), grid)
    assert np.array_equal(a, b)


def test_exchangeable_under_seed_change(sis_table):
    table, sol = sis_table
    finals = []
    for base in (100, 500):
        finals.append([aggregate_trajectory(build_aggregate(table, sol, [0.9, 0.1], 200, seed=base + r), [5.0])[0, 0]
                       for r in range(60)])
    assert stats.ks_2samp(*finals).pvalue > 1e-3
