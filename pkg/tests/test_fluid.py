import numpy as np
import pytest
import scipy.linalg
from hypothesis import given
from hypothesis import strategies as st

from moltrack.fluid import FluidError, solve_fluid
from moltrack.modelfile import BUNDLED_MODELS, bundled_model
from moltrack.network import Complex, Reaction, ReactionNetwork

from conftest import si_closed_form

Z0 = {
    "si": [1.0, 0.01],
    "sis": [0.99, 0.01],
    "sis_migration": [0.9, 0.1],
    "autophos": [1.0, 0.2],
    "mm_full": [0.5, 10.0, 0.5, 1.0],
    "mm_futile": [0.5, 10.0, 0.5, 1.0],
}


def test_si_matches_closed_form(si):
    sol = solve_fluid(si.network, [1.0, 0.01], 10.0, 1e-3)
    t = np.linspace(0, 10, 2001)
    assert np.max(np.abs(sol.eval(t)[:, 0] - si_closed_form(t))) < 1e-6


def test_zero_horizon(sis):
    sol = solve_fluid(sis.network, [0.3, 0.7], 0.0)
    assert sol.grid.tolist() == [0.0]
    assert sol.values.tolist() == [[0.3, 0.7]]


def test_sis_conservation(sis):
    sol = solve_fluid(sis.network, [0.99, 0.01], 10.0)
    assert np.max(np.abs(sol.values.sum(axis=1) - 1.0)) < 1e-10
    assert abs(sol.eval(5.0).sum() - 1.0) < 1e-8


def test_eval_reproduces_knots(sis):
    sol = solve_fluid(sis.network, [0.99, 0.01], 2.0, 0.01)
    i = 37
    assert np.array_equal(sol.eval(sol.grid[i]), sol.values[i])
    assert np.array_equal(sol.eval(2.0), sol.values[-1])


def test_eval_out_of_range(sis):
    sol = solve_fluid(sis.network, [0.99, 0.01], 1.0)
    with pytest.raises(ValueError):
        sol.eval(1.5)
    with pytest.raises(ValueError):
        sol.eval(-0.1)


def test_dense_output_accuracy():
    # linear A <-> B has a matrix-exponential solution
    net = ReactionNetwork(
        ("A", "B"),
        (
            Reaction(Complex.from_mapping({0: 1}), Complex.from_mapping({1: 1}), 2.0),
            Reaction(Complex.from_mapping({1: 1}), Complex.from_mapping({0: 1}), 0.5),
        ),
    )
    sol = solve_fluid(net, [1.0, 0.0], 3.0, 0.05)
    Q = np.array([[-2.0, 0.5], [2.0, -0.5]])
    for t in np.linspace(0, 3, 47):
        exact = scipy.linalg.expm(Q * t) @ np.array([1.0, 0.0])
        assert np.max(np.abs(sol.eval(t) - exact)) < 1e-6


def test_step_too_large_detected(sis):
    with pytest.raises(FluidError, match="step too large"):
        solve_fluid(sis.network, [0.99, 0.01], 10.0, 1.0)


def test_leaving_orthant_detected():
    net = ReactionNetwork(
        ("A", "B"), (Reaction(Complex.from_mapping({0: 1}), Complex.from_mapping({1: 1}), 50.0),)
    )
    with pytest.raises(FluidError, match="left the orthant"):
        solve_fluid(net, [1.0, 0.0], 1.0, 0.1, check_halving=False)


def test_csv_export(tmp_path, sis):
    sol = solve_fluid(sis.network, [0.99, 0.01], 1.0)
    path = sol.to_csv(tmp_path / "z.csv", [0.0, 0.5, 1.0])
    lines = path.read_text().splitlines()
    assert lines[0] == "t,S,I"
    assert len(lines) == 4


def _sup_diff(net, z0, T, n):
    a = solve_fluid(net, z0, T, T / n, check_halving=False)
    b = solve_fluid(net, z0, T, T / (2 * n), check_halving=False)
    return np.max(np.abs(a.values - b.values[::2]))


@pytest.mark.parametrize("name", BUNDLED_MODELS)
def test_fourth_order_halving(name):
    net = bundled_model(name).network
    z0 = Z0[name]
    d1 = _sup_diff(net, z0, 5.0, 400)
    d2 = _sup_diff(net, z0, 5.0, 800)
    # the ratio approaches 16 from above on the stiffer enzyme models
    assert 16 / 1.25 <= d1 / d2 <= 16 * 1.25


@pytest.mark.parametrize("name", BUNDLED_MODELS)
def test_positive_start_stays_positive(name):
    sol = solve_fluid(bundled_model(name).network, Z0[name], 10.0)
    assert sol.min_component > 0


def _conservation_vectors(net):
    _, s, vt = np.linalg.svd(net.change_matrix.astype(float))
    rank = int(np.sum(s > 1e-10))
    return vt[rank:]


@given(st.sampled_from(BUNDLED_MODELS), st.floats(0.0, 1.0))
def test_conservation_laws(name, t):
    net = bundled_model(name).network
    sol = solve_fluid(net, Z0[name], 1.0, 1e-3)
    for w in _conservation_vectors(net):
        assert abs(w @ sol.eval(t) - w @ np.asarray(Z0[name])) < 1e-8


def test_mm_totals_conserved():
    net = bundled_model("mm_futile").network
    sol = solve_fluid(net, Z0["mm_futile"], 10.0)
    E, S, C, P = sol.values.T
    assert np.max(np.abs(E + C - 1.0)) < 1e-8
    assert np.max(np.abs(S + C + P - 11.5)) < 1e-8
