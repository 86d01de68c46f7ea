from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from moltrack.modelfile import BUNDLED_MODELS, bundled_model
from moltrack.network import (
    DELTA,
    Complex,
    Reaction,
    ReactionNetwork,
    SchemaError,
    StatusSchema,
    build_augmented,
    deterministic_rate,
    falling_factorial,
    stochastic_intensity,
    theta,
    validate_network,
)


def cx(**kw):
    return kw


def net_of(species, *reactions):
    idx = {s: i for i, s in enumerate(species)}
    rx = []
    for y, y2, k in reactions:
        rx.append(
            Reaction(
                Complex.from_mapping({idx[s]: c for s, c in y.items()}),
                Complex.from_mapping({idx[s]: c for s, c in y2.items()}),
                k,
            )
        )
    return ReactionNetwork(tuple(species), tuple(rx))


def test_complex_drops_zero_coefficients():
    y = Complex.from_mapping({0: 1, 1: 0, 2: 2})
    assert y.support == frozenset({0, 2})
    assert y[1] == 0
    assert y.order == 3
    assert list(y.vector(3)) == [1, 0, 2]


def test_sis_network_validates(sis):
    assert validate_network(sis.network) == []


def test_self_loop_reported():
    net = net_of(["A", "B"], ({"A": 1}, {"A": 1}, 1.0), ({"A": 1}, {"B": 1}, 1.0))
    assert any("self-loop" in v for v in validate_network(net))


def test_unused_species_reported():
    net = net_of(["A", "B", "C"], ({"A": 1}, {"B": 1}, 1.0))
    assert any("unused species" in v for v in validate_network(net))


def test_nonpositive_rate_reported():
    net = net_of(["A", "B"], ({"A": 1}, {"B": 1}, 0.0))
    assert validate_network(net)


def test_duplicate_species_reported():
    net = net_of(["A", "B"], ({"A": 1}, {"B": 1}, 1.0))
    net = ReactionNetwork(("A", "A"), net.reactions)
    assert any("duplicate" in v for v in validate_network(net))


def test_stochastic_intensity_examples():
    net = net_of(["S", "I"], ({"S": 1, "I": 1}, {"I": 2}, 1.0))
    assert stochastic_intensity(net, 0, [3, 2], 10) == pytest.approx(0.6, rel=1e-15)
    assert stochastic_intensity(net, 0, [0, 7], 10) == 0.0
    dimer = net_of(["P", "Q"], ({"P": 2}, {"Q": 1}, 2.0))
    assert stochastic_intensity(dimer, 0, [5, 0], 1.0) == 40.0


def test_deterministic_rate_examples():
    net = net_of(["S", "I", "B"], ({"S": 1, "I": 1}, {"I": 2}, 1.0), ({}, {"B": 1}, 3.0), ({"B": 2}, {}, 1.0))
    assert deterministic_rate(net, 0, [0.99, 0.01, 0]) == pytest.approx(0.0099, rel=1e-14)
    assert deterministic_rate(net, 1, [0, 0, 0]) == 3.0
    assert deterministic_rate(net, 2, [0, 0, 0.5]) == 0.25


def test_theta_examples(sis):
    schema = sis.schema
    y = sis.network.reactions[0].reactant
    assert theta(schema, y, 0, [0, 5]) == 0.0
    assert theta(schema, y, DELTA, [4, 5]) == 0.0
    two = StatusSchema(("A~",), (0,))
    assert theta(two, Complex.from_mapping({0: 2}), 0, [10, 0, 0]) == pytest.approx(0.2)


def test_augmented_sis_has_three_tracked_reactions(sis_aug):
    triples = {(t.source, t.target, t.reaction) for t in sis_aug.tracked}
    assert triples == {(0, 1, 0), (1, 1, 0), (1, 0, 1)}


def test_augmented_mm_has_eight_tracked_reactions():
    m = bundled_model("mm_full")
    aug = build_augmented(m.network, m.schema)
    assert len(aug.tracked) == 8
    e, ce = m.schema.status_index("E~"), m.schema.status_index("C_E~")
    bind = m.network.reaction_index("bind")
    assert aug.destinations(bind, e) == [(ce, 1)]


def test_missing_row_rejected(sis):
    probs = dict(sis.schema.probs)
    del probs[(0, 0, 1)]
    schema = StatusSchema(sis.schema.statuses, sis.schema.sigma, probs)
    with pytest.raises(SchemaError, match="sum"):
        build_augmented(sis.network, schema)


def test_status_for_unknown_species_rejected(sis):
    schema = StatusSchema(("S~", "X~"), (0, 5), {})
    with pytest.raises(SchemaError):
        build_augmented(sis.network, schema)


def test_destination_outside_product_rejected(sis):
    probs = dict(sis.schema.probs)
    probs[(1, 1, 1)] = probs.pop((1, 1, 0))
    with pytest.raises(SchemaError):
        build_augmented(sis.network, StatusSchema(sis.schema.statuses, sis.schema.sigma, probs))


def test_autophos_half_probabilities():
    m = bundled_model("autophos")
    aug = build_augmented(m.network, m.schema)
    p = m.schema.status_index("P~")
    pp = m.schema.status_index("Pp~")
    phos = m.network.reaction_index("phos")
    x = np.array([2, 0])
    lam = stochastic_intensity(m.network, phos, x, 1.0)
    ks = [k for k, t in enumerate(aug.tracked) if t.reaction == phos and t.source == p and t.target == pp]
    assert aug.intensity(ks[0], p, x, 1.0) / lam == Fraction(1, 2)


@pytest.mark.parametrize("name", BUNDLED_MODELS)
def test_bundled_rows_sum_to_one(name):
    m = bundled_model(name)
    assert m.schema.check(m.network) == []


small_counts = st.lists(st.integers(0, 12), min_size=4, max_size=4)


@given(small_counts, st.sampled_from([100.0, 1000.0, 7.0]))
def test_intensity_positive_only_above_reactant(x, V):
    m = bundled_model("mm_full")
    net = m.network
    for r, rxn in enumerate(net.reactions):
        lam = stochastic_intensity(net, r, x, V)
        if lam > 0:
            assert all(x[s] >= c for s, c in rxn.reactant.terms)


@given(small_counts, st.sampled_from(["mm_full", "mm_futile"]), st.data())
def test_tracked_split_sums_to_base_intensity(x, name, data):
    m = bundled_model(name)
    aug = build_augmented(m.network, m.schema)
    tau = data.draw(st.integers(0, m.schema.n_statuses - 1))
    x = np.array(x)
    for r in range(len(m.network.reactions)):
        lam = stochastic_intensity(m.network, r, x, 50.0)
        tracked = sum(aug.intensity(k, tau, x, 50.0) for k, t in enumerate(aug.tracked) if t.reaction == r)
        total = tracked + aug.untracked_intensity(r, tau, x, 50.0)
        assert total == pytest.approx(lam, rel=1e-12, abs=1e-300)


@given(
    st.floats(0.01, 5.0),
    st.floats(0.01, 5.0),
    st.sampled_from([10.0, 100.0, 1000.0, 10000.0]),
)
def test_lattice_rate_converges_like_one_over_V(zs, zi, V):
    net = net_of(["S", "I"], ({"S": 1, "I": 1}, {"I": 2}, 1.0), ({"I": 2}, {"S": 1}, 1.0))
    z = np.array([zs, zi])
    x = np.floor(V * z + 1e-9)
    for r in range(2):
        lam_v = stochastic_intensity(net, r, x, V) / V
        lam = deterministic_rate(net, r, z)
        # factor j of an order-2 term is off by at most (j + 1) / V
        c = 3 * z.max() + 3 / V
        assert abs(lam_v - lam) <= c / V


@given(st.integers(0, 30), st.integers(0, 4))
def test_falling_factorial(x, c):
    expected = 1
    for j in range(c):
        expected *= x - j
    assert falling_factorial(x, c) == max(expected, 0) if x >= c else falling_factorial(x, c) == 0
