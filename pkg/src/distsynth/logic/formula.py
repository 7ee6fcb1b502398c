"""LTL without next over half-space atoms, with optional ball radii.

Grammar (whitespace-insensitive)::

    atom    := NAME | !NAME | [r]NAME | [r]!NAME
    formula := atom | ( formula ) | formula OP formula

OP is one of ``&``, ``|``, ``U``, ``R``.  Chains of the same associative
operator (``&`` or ``|``) need no parentheses; mixing operators, or chaining
``U``/``R``, does.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, replace
from typing import Iterator, Mapping, Union

import numpy as np

from ..numerics import ball_disjoint, ball_inclusion


class FormulaSyntaxError(ValueError):
    def __init__(self, message: str, text: str, pos: int):
        super().__init__(f"{message} at position {pos}: {text!r}")
        self.text = text
        self.pos = pos


class UnboundPropositionError(KeyError):
    pass


@dataclass(frozen=True)
class Atom:
    """Half-space literal {x : c.x + d < 0}, possibly negated and robustified."""

    name: str
    c: tuple
    d: float
    negated: bool = False
    radius: float = 0.0

    def __post_init__(self):
        c = tuple(float(v) for v in np.atleast_1d(self.c))
        if not any(c):
            raise ValueError(f"proposition {self.name!r} has a zero normal vector")
        if self.radius < 0:
            raise ValueError("atom radius must be non-negative")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "d", float(self.d))
        object.__setattr__(self, "radius", float(self.radius))

    def holds(self, x) -> bool:
        if self.negated:
            return ball_disjoint(x, self.radius, self.c, self.d)
        return ball_inclusion(x, self.radius, self.c, self.d)

    def holds_many(self, X) -> np.ndarray:
        """Vectorized holds over the rows of X."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        c = np.asarray(self.c)
        g = X @ c + self.d
        slack = self.radius * float(np.sum(np.abs(c)))
        if self.negated:
            return g - slack >= 0
        return g + slack < 0

    def margin(self, x) -> float:
        """Signed distance-like slack; values within tolerance are marginal."""
        c = np.asarray(self.c)
        g = float(c @ np.asarray(x, dtype=float)) + self.d
        slack = self.radius * float(np.sum(np.abs(c)))
        return (g - slack) if self.negated else -(g + slack)

    @property
    def proposition(self) -> "Atom":
        return replace(self, negated=False, radius=0.0)


@dataclass(frozen=True)
class And:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Or:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Until:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Release:
    left: "Formula"
    right: "Formula"


Formula = Union[Atom, And, Or, Until, Release]
BINARY = (And, Or, Until, Release)
_SYMBOL = {And: "&", Or: "|", Until: "U", Release: "R"}
_NODE = {v: k for k, v in _SYMBOL.items()}


def atoms(phi: Formula) -> Iterator[Atom]:
    if isinstance(phi, Atom):
        yield phi
    else:
        yield from atoms(phi.left)
        yield from atoms(phi.right)


def propositions(phi: Formula) -> dict:
    """name -> un-negated radius-0 atom, for every proposition in phi."""
    out = {}
    for a in atoms(phi):
        out.setdefault(a.name, a.proposition)
    return out


def radii(phi: Formula) -> set:
    return {a.radius for a in atoms(phi)}


def depth(phi: Formula) -> int:
    if isinstance(phi, Atom):
        return 0
    return 1 + max(depth(phi.left), depth(phi.right))


def is_temporal(phi: Formula) -> bool:
    if isinstance(phi, Atom):
        return False
    return isinstance(phi, (Until, Release)) or is_temporal(phi.left) or is_temporal(phi.right)


def shape(phi: Formula):
    """Tree structure with atoms reduced to (name, negated)."""
    if isinstance(phi, Atom):
        return (phi.name, phi.negated)
    return (_SYMBOL[type(phi)], shape(phi.left), shape(phi.right))


def map_atoms(phi: Formula, fn) -> Formula:
    if isinstance(phi, Atom):
        return fn(phi)
    return type(phi)(map_atoms(phi.left, fn), map_atoms(phi.right, fn))


def tr_delta(phi: Formula, delta: float) -> Formula:
    """Robustify every literal: p -> [delta]p and !p -> [delta]!p."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    if any(r != 0 for r in radii(phi)):
        raise ValueError("formula already carries ball radii")
    return map_atoms(phi, lambda a: replace(a, radius=float(delta)))


def tr_eps(psi: Formula, eps: float) -> Formula:
    """Inflate every radius by eps: [delta]p -> [delta + eps]p."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    if any(r == 0 for r in radii(psi)):
        raise ValueError("tr_eps needs a robustified formula (all radii positive)")
    return map_atoms(psi, lambda a: replace(a, radius=a.radius + float(eps)))


# ---------------------------------------------------------------- printing

def _fmt_radius(r: float) -> str:
    return "" if r == 0 else f"[{r!r}]"


def to_text(phi: Formula, top: bool = True) -> str:
    if isinstance(phi, Atom):
        return f"{_fmt_radius(phi.radius)}{'!' if phi.negated else ''}{phi.name}"
    body = f"{to_text(phi.left, False)} {_SYMBOL[type(phi)]} {to_text(phi.right, False)}"
    return body if top else f"({body})"


# ---------------------------------------------------------------- parsing

_TOKEN = re.compile(r"\s*(?:(?P<radius>\[[^\]]*\])|(?P<name>[A-Za-z_][A-Za-z0-9_]*)|(?P<sym>[()!&|]))")
_RESERVED = {"U", "R"}


def _tokenize(text: str) -> list:
    toks = []
    pos = 0
    while True:
        while pos < len(text) and text[pos].isspace():
            pos += 1
        if pos >= len(text):
            break
        m = _TOKEN.match(text, pos)
        if not m:
            raise FormulaSyntaxError(f"unexpected character {text[pos]!r}", text, pos)
        start = m.start() + len(m.group(0)) - len(m.group(0).lstrip())
        if m.group("radius"):
            toks.append(("radius", m.group("radius"), start))
        elif m.group("name"):
            word = m.group("name")
            toks.append(("op" if word in _RESERVED else "name", word, start))
        else:
            sym = m.group("sym")
            toks.append(("op" if sym in "&|" else sym, sym, start))
        pos = m.end()
    toks.append(("end", "", len(text)))
    return toks


class _Parser:
    def __init__(self, text: str, props: Mapping | None):
        self.text = text
        self.props = props
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def take(self, kind: str | None = None):
        tok = self.toks[self.i]
        if kind is not None and tok[0] != kind:
            want = {"end": "end of input", ")": "')'", "name": "a proposition name"}.get(kind, kind)
            got = tok[1] or "end of input"
            raise FormulaSyntaxError(f"expected {want}, found {got!r}", self.text, tok[2])
        self.i += 1
        return tok

    def formula(self) -> Formula:
        left = self.operand()
        if self.peek()[0] != "op":
            return left
        op = self.peek()[1]
        node = _NODE[op]
        count = 0
        while self.peek()[0] == "op":
            tok = self.peek()
            if tok[1] != op:
                raise FormulaSyntaxError(f"mixing {op!r} and {tok[1]!r} needs parentheses", self.text, tok[2])
            if count and node in (Until, Release):
                raise FormulaSyntaxError(f"chained {op!r} needs parentheses", self.text, tok[2])
            self.take()
            left = node(left, self.operand())
            count += 1
        return left

    def operand(self) -> Formula:
        if self.peek()[0] == "(":
            self.take()
            inner = self.formula()
            self.take(")")
            return inner
        return self.atom()

    def atom(self) -> Atom:
        radius = 0.0
        tok = self.peek()
        if tok[0] == "radius":
            self.take()
            try:
                radius = float(tok[1][1:-1])
            except ValueError:
                raise FormulaSyntaxError(f"bad radius {tok[1]!r}", self.text, tok[2]) from None
            if not radius > 0:
                raise FormulaSyntaxError("radius must be positive", self.text, tok[2])
            tok = self.peek()
        negated = False
        if tok[0] == "!":
            self.take()
            negated = True
            tok = self.peek()
            if tok[0] == "(":
                raise FormulaSyntaxError("negation applies to propositions only", self.text, tok[2])
        name_tok = self.take("name")
        name = name_tok[1]
        if self.props is None:
            c, d = (1.0,), 0.0
        else:
            if name not in self.props:
                raise UnboundPropositionError(f"proposition {name!r} is not bound to a half-space")
            c, d = self.props[name]
        return Atom(name, tuple(np.atleast_1d(np.asarray(c, dtype=float))), float(d), negated, radius)


def parse(text: str, props: Mapping | None = None) -> Formula:
    """Parse formula text.  ``props`` maps names to (c, d); when omitted, atoms
    get a placeholder half-space (useful for purely structural work)."""
    p = _Parser(text, props)
    if p.peek()[0] == "end":
        raise FormulaSyntaxError("empty formula", text, 0)
    phi = p.formula()
    p.take("end")
    if len(radii(phi)) > 1:
        raise FormulaSyntaxError("all atoms must share one radius", text, 0)
    return phi


# ------------------------------------------------------------- fragment

@dataclass(frozen=True)
class FragmentClause:
    kind: str  # "state", "until" or "release"
    left: Formula | None
    right: Formula


def fragment(phi: Formula) -> list:
    """Split phi into synthesizable disjuncts or raise ValueError."""
    if not is_temporal(phi):
        return [FragmentClause("state", None, phi)]
    if isinstance(phi, Or):
        return fragment(phi.left) + fragment(phi.right)
    if isinstance(phi, (Until, Release)):
        if is_temporal(phi.left) or is_temporal(phi.right):
            raise ValueError(f"nested temporal operators are outside the synthesis fragment: {to_text(phi)}")
        return [FragmentClause("until" if isinstance(phi, Until) else "release", phi.left, phi.right)]
    raise ValueError(
        f"conjunctions of temporal formulas are outside the synthesis fragment: {to_text(phi)}")
