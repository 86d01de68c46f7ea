from fractions import Fraction

import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from moltrack.modelfile import BUNDLED_MODELS, Model, ModelFileError, bundled_model, dump_model, load_model, parse_model
from moltrack.network import DELTA, Complex, Reaction, ReactionNetwork, StatusSchema, validate_network



@pytest.mark.parametrize("name", BUNDLED_MODELS)
def test_bundled_round_trip(name):
    m = bundled_model(name)
    again = parse_model(dump_model(m), name)
    assert again.network == m.network
    assert again.schema == m.schema
    assert dump_model(again) == dump_model(m)


def test_load_from_file(tmp_path):
    path = tmp_path / "x.model"
    path.write_text(dump_model(bundled_model("sis")))
    m = load_model(path)
    assert m.network.species == ("S", "I")
    assert m.network.rate_constants.tolist() == [1.0, 0.5]


def test_unicode_arrow_and_cemetery():
    text = """
species: A, B
reactions:
  r: A → B @ 2
  d: B → ∅ @ 1
statuses:
  A~: A
  B~: B
transforms:
  r: A~ → B~ @ 1
  d: B~ → Δ @ 1
"""
    m = parse_model(text)
    assert m.schema.prob(1, 1, DELTA) == 1


@pytest.mark.parametrize(
    "text, line, fragment",
    [
        ("species: A\nreactions:\n  r: A -> Q @ 1\n", 3, "Q"),
        ("species: A, B\nreactions:\n  r: A -> B @ x\n", 3, "rate"),
        ("species: A, B\nreactions:\n  r: A -> B @ 1\nstatuses:\n  A~: Z\n", 5, "Z"),
        ("species: A, B\nreactions:\n  r: A -> B @ 1\nstatuses:\n  A~: A\ntransforms:\n  r: A~ -> C~ @ 1\n", 7, "C~"),
        ("species: A, B\nreactions:\n  r: A -> B @ 1\nbogus:\n", 4, "bogus"),
        ("species: A, B\nreactions:\n  r: A B @ 1\n", 3, "->"),
    ],
)
def test_errors_carry_line_numbers(text, line, fragment):
    with pytest.raises(ModelFileError) as info:
        parse_model(text)
    assert info.value.line == line
    assert f"line {line}:" in str(info.value)
    assert fragment in str(info.value)


def test_bad_probability_row_rejected():
    text = bundled_model("sis")
    body = dump_model(text).replace("recovery: I~ -> S~ @ 1", "recovery: I~ -> S~ @ 1/2")
    with pytest.raises(ModelFileError, match="sum"):
        parse_model(body)


def test_unknown_bundled_model():
    with pytest.raises(KeyError):
        bundled_model("nope")




@st.composite
def networks(draw):
    d = draw(st.integers(2, 4))
    species = ["A", "B", "C", "D"][:d]
    n = draw(st.integers(1, 5))
    reactions = []
    for _ in range(n):
        y = draw(st.dictionaries(st.integers(0, d - 1), st.integers(1, 3), max_size=2))
        y2 = draw(st.dictionaries(st.integers(0, d - 1), st.integers(1, 3), max_size=2))
        assume(y != y2)
        k = draw(st.floats(1e-3, 1e3, allow_nan=False))
        reactions.append(Reaction(Complex.from_mapping(y), Complex.from_mapping(y2), k, f"r{len(reactions)}"))
    net = ReactionNetwork(tuple(species), tuple(reactions))
    assume(not validate_network(net))
    return net


@given(networks())
def test_round_trip_random_networks(net):
    m = Model(net)
    again = parse_model(dump_model(m))
    assert again.network == net
    assert dump_model(again) == dump_model(m)


@given(networks(), st.data())
def test_round_trip_random_schemas(net, data):
    # one status per species; every reaction sends reactant molecules to DELTA
    # or to a product status with exact rational probabilities
    d = net.dim
    statuses = tuple(f"{s}~" for s in net.species)
    probs = {}
    for r, rxn in enumerate(net.reactions):
        for s in rxn.reactant.support:
            targets = sorted(rxn.product.support) + [DELTA]
            k = data.draw(st.integers(1, len(targets)))
            chosen = targets[:k]
            for t in chosen:
                probs[(r, s, t)] = Fraction(1, k)
    schema = StatusSchema(statuses, tuple(range(d)), probs)
    m = Model(net, schema)
    again = parse_model(dump_model(m))
    assert again.schema == schema
