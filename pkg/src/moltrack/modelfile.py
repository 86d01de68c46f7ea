"""Plain-text model files.

Grammar (``#`` starts a comment; section bodies are indented)::

    species: S, I
    reactions:
      infection: S + I -> 2 I @ 1.0
      recovery: I -> S @ 0.5
    statuses:
      S~: S
      I~: I
    transforms:
      infection: S~ -> I~ @ 1
      infection: I~ -> I~ @ 1
      recovery: I~ -> S~ @ 1
    initial:
      S: S~

``0`` denotes the empty complex and ``DELTA`` the cemetery status. Rate
constants are floats; transform probabilities are exact rationals such as
``1/2`` or ``0.25``. ``statuses``, ``transforms`` and ``initial`` are optional.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from importlib import resources
from pathlib import Path

from .network import (
    DELTA,
    Complex,
    Reaction,
    ReactionNetwork,
    StatusSchema,
    validate_network,
)

__all__ = [
    "Model",
    "ModelFileError",
    "parse_model",
    "load_model",
    "dump_model",
    "bundled_model",
    "BUNDLED_MODELS",
]

BUNDLED_MODELS = (
    "si",
    "sis",
    "sis_migration",
    "autophos",
    "mm_full",
    "mm_futile",
)

_NAME = r"[A-Za-z_][A-Za-z0-9_*'~]*"
_NAME_RE = re.compile(rf"^{_NAME}$")
_TERM_RE = re.compile(rf"^(\d*)\s*({_NAME})$")
_ARROWS = ("->", "→")
_SECTIONS = ("species", "reactions", "statuses", "transforms", "initial")


class ModelFileError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


@dataclass(frozen=True)
class Model:
    network: ReactionNetwork
    schema: StatusSchema | None = None
    name: str = ""


def _split_arrow(text: str, lineno: int):
    for arrow in _ARROWS:
        if arrow in text:
            left, right = text.split(arrow, 1)
            return left.strip(), right.strip()
    raise ModelFileError(f"expected '->' in {text!r}", lineno)


def _parse_complex(text: str, species: list[str], lineno: int) -> Complex:
    text = text.strip()
    if text in ("0", "∅", ""):
        return Complex()
    coeffs: dict[int, int] = {}
    for term in text.split("+"):
        term = term.strip()
        m = _TERM_RE.match(term)
        if not m:
            raise ModelFileError(f"cannot parse complex term {term!r}", lineno)
        count = int(m.group(1)) if m.group(1) else 1
        name = m.group(2)
        if name not in species:
            raise ModelFileError(f"unknown species {name!r}", lineno)
        s = species.index(name)
        coeffs[s] = coeffs.get(s, 0) + count
    return Complex.from_mapping(coeffs)


def _parse_probability(text: str, lineno: int) -> Fraction:
    try:
        p = Fraction(text.strip())
    except (ValueError, ZeroDivisionError):
        raise ModelFileError(f"bad probability {text!r}", lineno) from None
    if not 0 <= p <= 1:
        raise ModelFileError(f"probability {text!r} outside [0, 1]", lineno)
    return p


def _parse_rate(text: str, lineno: int) -> float:
    try:
        return float(text.strip())
    except ValueError:
        raise ModelFileError(f"bad rate constant {text!r}", lineno) from None


def parse_model(text: str, name: str = "") -> Model:
    """Parse model-file text; raises :class:`ModelFileError` with the line number."""
    sections: dict[str, list[tuple[int, str]]] = {}
    header_line: dict[str, int] = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        indented = line[0] in " \t"
        if not indented:
            key, sep, rest = line.partition(":")
            key = key.strip()
            if not sep or key not in _SECTIONS:
                raise ModelFileError(f"unknown section {key!r}", lineno)
            if key in sections:
                raise ModelFileError(f"repeated section {key!r}", lineno)
            current = key
            sections[key] = []
            header_line[key] = lineno
            if rest.strip():
                sections[key].append((lineno, rest.strip()))
        else:
            if current is None:
                raise ModelFileError("indented line outside a section", lineno)
            sections[current].append((lineno, line.strip()))

    if "species" not in sections:
        raise ModelFileError("missing 'species' section")
    species: list[str] = []
    for lineno, body in sections["species"]:
        for item in body.split(","):
            item = item.strip()
            if not item:
                continue
            if not _NAME_RE.match(item):
                raise ModelFileError(f"bad species name {item!r}", lineno)
            if item in species:
                raise ModelFileError(f"duplicate species {item!r}", lineno)
            species.append(item)

    reactions: list[Reaction] = []
    labels: list[str] = []
    for lineno, body in sections.get("reactions", []):
        label, sep, rest = body.partition(":")
        if not sep or not _NAME_RE.match(label.strip()):
            raise ModelFileError("reaction lines look like 'label: A + B -> C @ k'", lineno)
        label = label.strip()
        if label in labels:
            raise ModelFileError(f"duplicate reaction label {label!r}", lineno)
        eqn, at, rate = rest.partition("@")
        if not at:
            raise ModelFileError("missing '@ rate_constant'", lineno)
        left, right = _split_arrow(eqn, lineno)
        reactions.append(
            Reaction(
                _parse_complex(left, species, lineno),
                _parse_complex(right, species, lineno),
                _parse_rate(rate, lineno),
                label,
            )
        )
        labels.append(label)
    if not reactions:
        raise ModelFileError("model has no reactions", header_line.get("reactions"))
    net = ReactionNetwork(tuple(species), tuple(reactions))

    schema = None
    if "statuses" in sections:
        statuses: list[str] = []
        sigma: list[int] = []
        for lineno, body in sections["statuses"]:
            st, sep, sp = body.partition(":")
            st, sp = st.strip(), sp.strip()
            if not sep or not _NAME_RE.match(st):
                raise ModelFileError("status lines look like 'S~: S'", lineno)
            if st in statuses or st in ("DELTA", "Δ"):
                raise ModelFileError(f"duplicate or reserved status {st!r}", lineno)
            if sp not in species:
                raise ModelFileError(f"unknown species {sp!r}", lineno)
            statuses.append(st)
            sigma.append(species.index(sp))

        def status(tok: str, lineno: int, allow_delta: bool) -> int:
            tok = tok.strip()
            if tok in ("DELTA", "Δ"):
                if allow_delta:
                    return DELTA
                raise ModelFileError("DELTA cannot be a source status", lineno)
            if tok not in statuses:
                raise ModelFileError(f"unknown status {tok!r}", lineno)
            return statuses.index(tok)

        probs: dict[tuple[int, int, int], Fraction] = {}
        for lineno, body in sections.get("transforms", []):
            label, sep, rest = body.partition(":")
            label = label.strip()
            if not sep:
                raise ModelFileError("transform lines look like 'label: A~ -> B~ @ p'", lineno)
            if label not in labels:
                raise ModelFileError(f"unknown reaction {label!r}", lineno)
            move, at, p = rest.partition("@")
            if not at:
                raise ModelFileError("missing '@ probability'", lineno)
            a, b = _split_arrow(move, lineno)
            key = (labels.index(label), status(a, lineno, False), status(b, lineno, True))
            if key in probs:
                raise ModelFileError("repeated transform", lineno)
            probs[key] = _parse_probability(p, lineno)

        initial: dict[int, int] = {}
        for lineno, body in sections.get("initial", []):
            sp, sep, st = body.partition(":")
            sp = sp.strip()
            if not sep or sp not in species:
                raise ModelFileError(f"unknown species {sp!r}", lineno)
            tau = status(st, lineno, False)
            if sigma[tau] != species.index(sp):
                raise ModelFileError(f"status {st.strip()!r} does not map to {sp!r}", lineno)
            initial[species.index(sp)] = tau
        schema = StatusSchema(tuple(statuses), tuple(sigma), probs, initial)
        problems = schema.check(net)
        if problems:
            raise ModelFileError("; ".join(problems), header_line.get("transforms"))
    elif "transforms" in sections or "initial" in sections:
        raise ModelFileError("'transforms' needs a 'statuses' section", header_line.get("transforms"))

    problems = validate_network(net)
    if problems:
        raise ModelFileError("; ".join(problems), header_line["reactions"])
    return Model(net, schema, name)


def _format_complex(y: Complex, species) -> str:
    if not y.terms:
        return "0"
    return " + ".join(
        (f"{c} {species[s]}" if c > 1 else species[s]) for s, c in y.terms
    )


def dump_model(model: Model) -> str:
    """Serialise a model; ``parse_model(dump_model(m))`` reproduces ``m``."""
    net, schema = model.network, model.schema
    if not net.is_mass_action:
        raise ValueError("only mass-action networks can be written to a model file")
    out = [f"species: {', '.join(net.species)}", "reactions:"]
    labels = []
    for r, rxn in enumerate(net.reactions):
        label = rxn.label or f"r{r + 1}"
        labels.append(label)
        out.append(
            f"  {label}: {_format_complex(rxn.reactant, net.species)} -> "
            f"{_format_complex(rxn.product, net.species)} @ {rxn.rate_constant!r}"
        )
    if schema is not None:
        out.append("statuses:")
        for st, s in zip(schema.statuses, schema.sigma):
            out.append(f"  {st}: {net.species[s]}")
        if schema.probs:
            out.append("transforms:")
            for (r, a, b), p in sorted(
                schema.probs.items(), key=lambda kv: (kv[0][0], kv[0][1], kv[0][2] == DELTA, kv[0][2])
            ):
                out.append(
                    f"  {labels[r]}: {schema.statuses[a]} -> {schema.status_name(b)} @ {Fraction(p)}"
                )
        if schema.initial:
            out.append("initial:")
            for s, tau in sorted(schema.initial.items()):
                out.append(f"  {net.species[s]}: {schema.statuses[tau]}")
    return "\n".join(out) + "\n"


def load_model(path) -> Model:
    path = Path(path)
    return parse_model(path.read_text(encoding="utf-8"), name=path.stem)


def bundled_model(name: str) -> Model:
    """Load one of the models shipped with the package (see :data:`BUNDLED_MODELS`)."""
    name = name.removesuffix(".model")
    if name not in BUNDLED_MODELS:
        raise KeyError(f"no bundled model {name!r}; choose from {BUNDLED_MODELS}")
    text = resources.files("moltrack.models").joinpath(f"{name}.model").read_text(encoding="utf-8")
    return parse_model(text, name=name)
