"""Reference plants and specifications used by the scripts, CLI and tests."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .abstraction import AbstractionParams, suggest_params
from .numerics import Polytope
from .plant import LinearSystem, check_stability

S1_EPS = 0.2
# reach x > -0.5 while staying above -1.9
S1_PROPS = {"p1": ((-1.0,), -0.5), "p2": ((-1.0,), -1.9)}
S1_SPEC = "p2 U (p1 & p2)"


def s1_system() -> LinearSystem:
    """x' = -x + u + v on X = [-2, 2], U = [-1, 1], V = [-0.1, 0.1]."""
    sys = LinearSystem(
        A=np.array([[-1.0]]), B=np.array([[1.0]]), G=np.array([[1.0]]),
        X=Polytope.box([-2.0], [2.0]), U=Polytope.box([-1.0], [1.0]), V=Polytope.box([-0.1], [0.1]),
    )
    return check_stability(sys).system


def s1_params(sys: LinearSystem | None = None) -> AbstractionParams:
    return suggest_params(sys or s1_system(), S1_EPS)


def s1_coarse_params() -> AbstractionParams:
    """Certified 9-state grid (eta = 0.5) for quick demonstrations."""
    return AbstractionParams(tau=math.log(2), eta=0.5, mu=0.1, eps=1.0)


def planar_counterexample_system() -> LinearSystem:
    """x' = -x + u + v in the plane with X = [-1, 1]^2."""
    sys = LinearSystem(
        A=-np.eye(2), B=np.eye(2), G=np.eye(2),
        X=Polytope.box([-1.0, -1.0], [1.0, 1.0]), U=Polytope.box([-1.0, -1.0], [1.0, 1.0]),
        V=Polytope.box([-0.05, -0.05], [0.05, 0.05]),
    )
    return check_stability(sys).system


PLANAR_PARAMS = AbstractionParams(tau=math.log(2), eta=0.2, mu=0.1, eps=0.5)


@dataclass(frozen=True)
class CounterexampleFixture:
    name: str
    props: dict
    spec: str
    start: tuple


def tp1_fixture() -> CounterexampleFixture:
    """A square cell strictly between grid points: no abstraction state lies
    in it, yet plant trajectories can start there."""
    eta = PLANAR_PARAMS.eta
    props = {
        "p1": ((1.0, 0.0), -0.2 * eta),
        "p2": ((0.0, 1.0), -0.2 * eta),
        "p3": ((1.0, 0.0), -0.8 * eta),
        "p4": ((0.0, 1.0), -0.8 * eta),
    }
    return CounterexampleFixture("tp1", props, "!p1 & !p2 & p3 & p4", (0.5 * eta, 0.5 * eta))


def tp2_fixture() -> CounterexampleFixture:
    """A vertical strip 0.03 <= x1 <= 0.07 without grid points: abstract
    runs jump over it while continuous runs must cross it."""
    props = {
        "p3": ((-1.0, 0.0), 0.07),
        "p4": ((1.0, 0.0), -0.03),
    }
    return CounterexampleFixture("tp2", props, "(!p3 & p4) U (p3 & !p4)", (0.0, 0.0))


def random_planar_hurwitz(rng: np.random.Generator) -> LinearSystem:
    """Random stable planar plant whose state space is a box around 0."""
    while True:
        M = rng.normal(size=(2, 2))
        A = -np.eye(2) * rng.uniform(0.8, 1.5) + 0.3 * (M - M.T) + 0.1 * M
        if np.max(np.linalg.eigvals(A).real) < -0.3:
            break
    B = np.eye(2) + 0.2 * rng.normal(size=(2, 2))
    G = np.eye(2)
    half = rng.uniform(0.8, 1.2)
    sys = LinearSystem(
        A=A, B=B, G=G,
        X=Polytope.box([-half, -half], [half, half]), U=Polytope.box([-0.4, -0.4], [0.4, 0.4]),
        V=Polytope.box([-0.03, -0.03], [0.03, 0.03]),
    )
    return check_stability(sys).system
