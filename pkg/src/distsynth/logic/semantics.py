"""Discrete semantics: exact on lasso words, three-valued on finite prefixes."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from ..numerics import GEOM_TOL
from .formula import And, Atom, Formula, Or, Release, Until, atoms

# Kleene truth values ordered so that conjunction is min and disjunction max
FALSE, UNKNOWN, TRUE = 0, 1, 2


def from_kleene(v: int):
    return None if v == UNKNOWN else bool(v == TRUE)


@dataclass(frozen=True, eq=False)
class LassoWord:
    """prefix . cycle^omega over R^n."""

    prefix: np.ndarray
    cycle: np.ndarray

    def __post_init__(self):
        cyc = np.atleast_2d(np.asarray(self.cycle, dtype=float))
        if cyc.shape[0] == 0 or cyc.size == 0:
            raise ValueError("lasso cycle must be nonempty")
        pre = np.asarray(self.prefix, dtype=float)
        pre = pre.reshape(-1, cyc.shape[1]) if pre.size else np.zeros((0, cyc.shape[1]))
        object.__setattr__(self, "prefix", pre)
        object.__setattr__(self, "cycle", cyc)

    @classmethod
    def from_sequence(cls, points, loop_start: int) -> "LassoWord":
        """Word points[0..] where the tail from 0-based index loop_start repeats."""
        P = np.atleast_2d(np.asarray(points, dtype=float))
        return cls(P[:loop_start], P[loop_start:])

    @property
    def positions(self) -> np.ndarray:
        return np.vstack([self.prefix, self.cycle])

    @property
    def successor(self) -> np.ndarray:
        n = len(self.prefix) + len(self.cycle)
        nxt = np.arange(1, n + 1)
        nxt[-1] = len(self.prefix)
        return nxt

    def canonical(self, i: int) -> int:
        """0-based canonical index of 1-based position i."""
        if i < 1:
            raise ValueError("positions start at 1")
        k = i - 1
        p, c = len(self.prefix), len(self.cycle)
        return k if k < p else p + (k - p) % c

    def __getitem__(self, i: int) -> np.ndarray:
        return self.positions[self.canonical(i)]

    def unrolled(self, length: int) -> np.ndarray:
        return np.array([self[i] for i in range(1, length + 1)])


def point_leaves(points) -> Callable[[Atom], np.ndarray]:
    P = np.atleast_2d(np.asarray(points, dtype=float))
    return lambda atom: atom.holds_many(P)


def letter_leaves(letters: Sequence[frozenset]) -> Callable[[Atom], np.ndarray]:
    """Atoms over sets of proposition names; only radius 0 is meaningful."""
    def leaf(atom: Atom) -> np.ndarray:
        if atom.radius != 0:
            raise ValueError("letters carry membership only; robustified atoms need points")
        inside = np.array([atom.name in L for L in letters], dtype=bool)
        return ~inside if atom.negated else inside
    return leaf


def lasso_values(phi: Formula, leaf, successor: np.ndarray) -> np.ndarray:
    """Truth of phi at every canonical position of a lasso.

    Until is the least and release the greatest solution of its one-step
    unfolding, iterated to a fixpoint on the finite position graph.
    """
    if isinstance(phi, Atom):
        return np.asarray(leaf(phi), dtype=bool)
    a = lasso_values(phi.left, leaf, successor)
    b = lasso_values(phi.right, leaf, successor)
    if isinstance(phi, And):
        return a & b
    if isinstance(phi, Or):
        return a | b
    if isinstance(phi, Until):
        val = np.zeros_like(b)
        while True:
            new = b | (a & val[successor])
            if np.array_equal(new, val):
                return val
            val = new
    if isinstance(phi, Release):
        val = np.ones_like(b)
        while True:
            new = b & (a | val[successor])
            if np.array_equal(new, val):
                return val
            val = new
    raise TypeError(f"not a formula: {phi!r}")


def prefix_values(phi: Formula, leaf, length: int) -> np.ndarray:
    """Kleene values on a finite prefix whose continuation is unknown."""
    if isinstance(phi, Atom):
        return np.where(np.asarray(leaf(phi), dtype=bool), TRUE, FALSE).astype(np.int8)
    a = prefix_values(phi.left, leaf, length)
    b = prefix_values(phi.right, leaf, length)
    if isinstance(phi, And):
        return np.minimum(a, b)
    if isinstance(phi, Or):
        return np.maximum(a, b)
    out = np.empty(length, dtype=np.int8)
    nxt = UNKNOWN
    for k in range(length - 1, -1, -1):
        if isinstance(phi, Until):
            nxt = max(b[k], min(a[k], nxt))
        else:
            nxt = min(b[k], max(a[k], nxt))
        out[k] = nxt
    return out


def eval_discrete(sigma: LassoWord, phi: Formula, i: int = 1) -> bool:
    """sigma[i] |= phi with atoms evaluated on the points of sigma."""
    vals = lasso_values(phi, point_leaves(sigma.positions), sigma.successor)
    return bool(vals[sigma.canonical(i)])


def eval_prefix(points, phi: Formula, i: int = 1):
    """Three-valued verdict on a finite sequence: True, False or None."""
    P = np.atleast_2d(np.asarray(points, dtype=float))
    if i < 1 or i > len(P):
        raise ValueError("position outside the prefix")
    vals = prefix_values(phi, point_leaves(P), len(P))
    return from_kleene(int(vals[i - 1]))


def eval_letters(letters: Sequence[frozenset], phi: Formula, stabilized: bool, i: int = 1):
    """Evaluate on a word of proposition sets.  A stabilized word repeats its
    last letter forever (exact); otherwise the result is three-valued."""
    leaf = letter_leaves(letters)
    if stabilized:
        n = len(letters)
        succ = np.arange(1, n + 1)
        succ[-1] = n - 1
        return bool(lasso_values(phi, leaf, succ)[i - 1])
    return from_kleene(int(prefix_values(phi, leaf, len(letters))[i - 1]))


def marginal_positions(points, phi: Formula, tol: float = GEOM_TOL) -> list:
    """Indices (0-based) where some atom sits within tol of its decision boundary."""
    P = np.atleast_2d(np.asarray(points, dtype=float))
    out = set()
    for atom in set(atoms(phi)):
        for k, x in enumerate(P):
            if abs(atom.margin(x)) <= tol:
                out.add(k)
    return sorted(out)
