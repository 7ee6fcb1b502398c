"""Finite abstractions of a disturbed linear plant on eta/mu grids."""
from __future__ import annotations

import itertools
import json
import logging
import math
from dataclasses import asdict, dataclass
from functools import cached_property
from typing import NamedTuple

import numpy as np

from .numerics import GEOM_TOL, Polytope, grid_points, inf_norm, substep_gains, zoh_error_bound
from .plant import LinearSystem, delta_bound

log = logging.getLogger(__name__)

DEFAULT_SUBSTEPS = 4


class AltTransitionSystem:
    """Finite alternating transition system with vector observations.

    ``succ[q, a, b]`` holds successor indices padded with -1.  Control and
    disturbance labels are kept as vectors so abstractions can be exported,
    but the game algorithms only use indices.
    """

    def __init__(self, states, ctrl_labels, dist_labels, succ):
        self.states = np.atleast_2d(np.asarray(states, dtype=float))
        self.ctrl_labels = np.atleast_2d(np.asarray(ctrl_labels, dtype=float))
        self.dist_labels = np.atleast_2d(np.asarray(dist_labels, dtype=float))
        if succ is not None:
            self._table = np.asarray(succ, dtype=np.int32)

    @classmethod
    def from_transitions(cls, states, ctrl_labels, dist_labels, transitions):
        """Build from an iterable of (q, a, b, q') index quadruples."""
        nq, na, nb = len(states), len(ctrl_labels), len(dist_labels)
        buckets: dict = {}
        for q, a, b, q2 in transitions:
            buckets.setdefault((q, a, b), set()).add(q2)
        width = max([len(s) for s in buckets.values()] + [1])
        table = -np.ones((nq, na, nb, width), dtype=np.int32)
        for (q, a, b), targets in buckets.items():
            table[q, a, b, : len(targets)] = sorted(targets)
        return cls(states, ctrl_labels, dist_labels, table)

    @property
    def n_states(self) -> int:
        return self.states.shape[0]

    @property
    def n_ctrl(self) -> int:
        return self.ctrl_labels.shape[0]

    @property
    def n_dist(self) -> int:
        return self.dist_labels.shape[0]

    @property
    def succ(self) -> np.ndarray:
        return self._table

    def successors(self, q: int, a: int, b: int) -> tuple:
        row = self.succ[q, a, b]
        return tuple(int(x) for x in row[row >= 0])

    @cached_property
    def _post(self) -> list:
        table = self.succ
        out = []
        for q in range(self.n_states):
            row = []
            for a in range(self.n_ctrl):
                vals = table[q, a].ravel()
                row.append(frozenset(int(x) for x in vals[vals >= 0]))
            out.append(row)
        return out

    def post(self, q: int, a: int) -> frozenset:
        """Union over disturbance labels of the successors of (q, a)."""
        return self._post[q][a]

    @cached_property
    def enabled(self) -> np.ndarray:
        """enabled[q, a]: every disturbance label yields a successor."""
        has = np.any(self.succ >= 0, axis=3)
        return np.all(has, axis=2)

    def blocking_triples(self) -> list:
        has = np.any(self.succ >= 0, axis=3)
        return [tuple(int(i) for i in t) for t in np.argwhere(~has)]

    @property
    def non_blocking(self) -> bool:
        return not self.blocking_triples()

    def transitions(self):
        """(q, a, b, q') quadruples in lexicographic order."""
        for q, a, b in itertools.product(range(self.n_states), range(self.n_ctrl), range(self.n_dist)):
            for q2 in sorted(self.successors(q, a, b)):
                yield (q, a, b, q2)

    def n_transitions(self) -> int:
        return int(np.sum(self.succ >= 0))

    def to_dict(self) -> dict:
        return {
            "states": self.states.tolist(),
            "control_labels": self.ctrl_labels.tolist(),
            "disturbance_labels": self.dist_labels.tolist(),
            "transitions": [list(t) for t in self.transitions()],
        }


@dataclass(frozen=True)
class AbstractionParams:
    tau: float
    eta: float
    mu: float
    eps: float
    delta: float | None = None
    substeps: int = DEFAULT_SUBSTEPS

    def __post_init__(self):
        for name in ("tau", "eta", "mu", "eps"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.delta is not None and self.delta < 0:
            raise ValueError("delta must be non-negative")
        if self.substeps < 1:
            raise ValueError("substeps must be at least 1")

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}


class ParamCheck(NamedTuple):
    certified: bool
    margin: float
    contraction: float


def check_params(sys: LinearSystem, params: AbstractionParams) -> ParamCheck:
    """|e^{A tau}| eps + mu + eta/2 < eps, with the slack as margin."""
    c = inf_norm(sys.transition(params.tau))
    margin = params.eps - (c * params.eps + params.mu + params.eta / 2)
    return ParamCheck(margin > 0, margin, c)


def _round_down(x: float, digits: int = 2) -> float:
    if x <= 0:
        return 0.0
    e = math.floor(math.log10(x)) - digits + 1
    return float(f"{math.floor(x / 10 ** e + 1e-9)}e{e}")


def suggest_params(sys: LinearSystem, eps: float, contraction: float = 0.8,
                   substeps: int = DEFAULT_SUBSTEPS) -> AbstractionParams:
    """Deterministic parameter choice with a certification margin of at least eps/10.

    tau runs over 0.01 * 2^(k/2); the first tau with |e^{A tau}| <= contraction
    is taken, and mu = eta split the remaining slack.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    for k in range(40):
        tau = 0.01 * 2 ** (k / 2)
        c = inf_norm(sys.transition(tau))
        if c <= contraction:
            break
    else:
        raise ValueError("no sampling time in the schedule makes e^(A tau) contracting")
    budget = eps * (1 - c) - 0.1 * eps
    if budget <= 0:
        raise ValueError("contraction target too weak for a 10% margin")
    mu = eta = _round_down(budget / 1.5)
    delta = delta_bound(sys, tau) if sys.stability_checked else None
    params = AbstractionParams(tau=tau, eta=eta, mu=mu, eps=eps, delta=delta, substeps=substeps)
    assert check_params(sys, params).margin >= 0.1 * eps * (1 - 1e-9)
    return params


@dataclass(frozen=True, eq=False)
class LabelSet:
    points: np.ndarray
    reach: Polytope
    quad_error: float
    coverage: float


def reach_polytope(sys: LinearSystem, tau: float, which: str, N: int) -> Polytope:
    """Reachable set from 0 at time tau under N-substep piecewise-constant
    inputs: the Minkowski sum of the substep images of the input polytope."""
    M, P = _input_side(sys, which)
    total = None
    for gain in substep_gains(sys.A, M, tau, N):
        part = P.linear_map(gain)
        total = part if total is None else total.minkowski_sum(part)
    return total


def _input_side(sys: LinearSystem, which: str):
    if which == "control":
        return sys.B, sys.U
    if which == "disturbance":
        return sys.G, sys.V
    raise ValueError(f"which must be 'control' or 'disturbance', not {which!r}")


def reach_label_set(sys: LinearSystem, tau: float, which: str, mu: float,
                    N: int = DEFAULT_SUBSTEPS, seed: int = 0) -> LabelSet:
    """Grid points of pitch mu within mu/2 of the reachable polytope."""
    if mu <= 0:
        raise ValueError("mu must be positive")
    R = reach_polytope(sys, tau, which, N)
    M, P = _input_side(sys, which)
    qerr = zoh_error_bound(sys.A, M, tau, N) * P.radius()
    half = mu / 2
    labels = grid_points(R.inflate(half), mu, GEOM_TOL)
    if len(labels) == 0:
        raise ValueError("empty label set")
    rng = np.random.default_rng(seed)
    probe = np.vstack([R.vertices, R.sample(rng, 256)])
    coverage = float(np.max(np.min(np.max(np.abs(probe[:, None, :] - labels[None]), axis=2), axis=1)))
    if coverage > half + GEOM_TOL:
        raise RuntimeError(f"label set misses the reachable set by {coverage} > mu/2")
    return LabelSet(labels, R, qerr, coverage)


class Abstraction(AltTransitionSystem):
    """Grid abstraction: states [X]_eta, labels near the reachable sets, and
    q -a,b-> q' iff |e^{A tau} q + a + b - q'| <= eta/2."""

    def __init__(self, sys: LinearSystem, params: AbstractionParams, states, ctrl: LabelSet,
                 dist: LabelSet, succ=None):
        super().__init__(states, ctrl.points, dist.points, succ)
        self.sys = sys
        self.params = params
        self.ctrl = ctrl
        self.dist = dist
        self.Phi = sys.transition(params.tau)
        self._keys = np.rint(self.states / params.eta).astype(np.int64)
        self._lo = self._keys.min(axis=0)
        span = self._keys.max(axis=0) - self._lo + 1
        self._lookup = -np.ones(tuple(int(s) for s in span), dtype=np.int64)
        self._lookup[tuple((self._keys - self._lo).T)] = np.arange(self.n_states)
        self._index = {tuple(k): i for i, k in enumerate(self._keys.tolist())}

    def _targets(self, Y: np.ndarray) -> np.ndarray:
        """Grid states within eta/2 of each row of Y, padded with -1."""
        eta = self.params.eta
        half = eta / 2
        lo = np.ceil((Y - half - GEOM_TOL) / eta).astype(np.int64)
        hi = np.floor((Y + half + GEOM_TOL) / eta).astype(np.int64)
        n = Y.shape[-1]
        shape = self._lookup.shape
        cands = []
        for offs in itertools.product((0, 1), repeat=n):
            K = lo + np.array(offs)
            ok = np.all(K <= hi, axis=-1)
            rel = K - self._lo
            ok &= np.all((rel >= 0) & (rel < np.array(shape)), axis=-1)
            rel = np.where(ok[..., None], rel, 0)
            idx = self._lookup[tuple(np.moveaxis(rel, -1, 0))]
            idx = np.where(ok, idx, -1)
            # closed comparison re-checked against the true grid coordinates
            pts = K * eta
            close = np.max(np.abs(pts - Y), axis=-1) <= half + GEOM_TOL
            cands.append(np.where(close, idx, -1))
        out = np.stack(cands, axis=-1)
        big = np.iinfo(np.int64).max
        out = np.sort(np.where(out < 0, big, out), axis=-1)
        return np.where(out == big, -1, out)

    def successors(self, q: int, a: int, b: int) -> tuple:
        if "_table" in self.__dict__:
            return super().successors(q, a, b)
        y = self.Phi @ self.states[q] + self.ctrl_labels[a] + self.dist_labels[b]
        row = self._targets(y[None, :])[0]
        return tuple(sorted(int(x) for x in row if x >= 0))

    @property
    def succ(self) -> np.ndarray:
        if "_table" not in self.__dict__:
            self._table = self._build_table()
        return self._table

    def _build_table(self) -> np.ndarray:
        drift = self.states @ self.Phi.T
        inputs = self.ctrl_labels[:, None, :] + self.dist_labels[None, :, :]
        rows = []
        for q in range(self.n_states):
            Y = drift[q][None, None, :] + inputs
            rows.append(self._targets(Y))
        table = np.stack(rows).astype(np.int32)
        width = max(1, int(np.max(np.sum(table >= 0, axis=-1))))
        return np.ascontiguousarray(table[..., :width])

    def state_index(self, x, tol: float = GEOM_TOL) -> int | None:
        key = tuple(int(k) for k in np.rint(np.asarray(x) / self.params.eta))
        i = self._index.get(key)
        if i is None or np.max(np.abs(self.states[i] - x)) > tol:
            return None
        return i

    def nearest_state(self, x) -> int:
        d = np.max(np.abs(self.states - np.asarray(x)), axis=1)
        return int(np.argmin(d))

    def summary(self) -> dict:
        chk = check_params(self.sys, self.params)
        return {
            "states": self.n_states,
            "control_labels": self.n_ctrl,
            "disturbance_labels": self.n_dist,
            "transitions": self.n_transitions(),
            "certification_margin": chk.margin,
            "certified": chk.certified,
            "blocking_triples": len(self.blocking_triples()),
        }

    def to_dict(self) -> dict:
        data = super().to_dict()
        data["params"] = self.params.to_dict()
        data["quadrature_error"] = {"control": self.ctrl.quad_error, "disturbance": self.dist.quad_error}
        return data


class CertificationError(ValueError):
    pass


def build_abstraction(sys: LinearSystem, params: AbstractionParams, force: bool = False,
                      materialize: bool = True) -> Abstraction:
    """Construct the grid abstraction.

    Raises CertificationError when the certification inequality fails, unless
    ``force`` is set.  Blocking (q, a, b) triples near the boundary of X are
    logged and handled downstream by disabling the label at that state.
    """
    if not sys.stability_checked:
        raise ValueError("build_abstraction needs a system that passed check_stability")
    chk = check_params(sys, params)
    if not chk.certified:
        if not force:
            raise CertificationError(f"parameters violate the bisimulation inequality (margin {chk.margin:.3g})")
        log.warning("building an uncertified abstraction (margin %.3g)", chk.margin)
    Q = grid_points(sys.X, params.eta)
    if len(Q) == 0:
        raise ValueError("the state grid is empty")
    ctrl = reach_label_set(sys, params.tau, "control", params.mu, params.substeps)
    dist = reach_label_set(sys, params.tau, "disturbance", params.mu, params.substeps)
    T = Abstraction(sys, params, Q, ctrl, dist)
    if materialize:
        T.succ
        blocked = T.blocking_triples()
        if blocked:
            log.warning("%d blocking (q, a, b) triples; those labels are disabled at those states", len(blocked))
    return T


def abstraction_from_dict(sys: LinearSystem, data: dict) -> Abstraction:
    """Rebuild an Abstraction from its exported form (plant supplied separately)."""
    p = data["params"]
    params = AbstractionParams(**{k: p[k] for k in ("tau", "eta", "mu", "eps", "delta", "substeps") if k in p})
    ctrl = reach_label_set(sys, params.tau, "control", params.mu, params.substeps)
    dist = reach_label_set(sys, params.tau, "disturbance", params.mu, params.substeps)
    ctrl = LabelSet(np.array(data["control_labels"], dtype=float), ctrl.reach, ctrl.quad_error, ctrl.coverage)
    dist = LabelSet(np.array(data["disturbance_labels"], dtype=float), dist.reach, dist.quad_error, dist.coverage)
    states = np.array(data["states"], dtype=float)
    T = Abstraction(sys, params, states, ctrl, dist)
    T._table = AltTransitionSystem.from_transitions(states, ctrl.points, dist.points, data["transitions"]).succ
    return T


def dump_abstraction(T: AltTransitionSystem) -> str:
    return json.dumps(T.to_dict(), sort_keys=True)


def _box_bounds(P: Polytope):
    lo, hi = P.bbox()
    corners = 2 ** int(np.sum(hi > lo))
    if len(P.vertices) == corners and np.all(P.contains(np.vstack([lo, hi]))):
        return lo, hi
    return None


def _lp_realize(gains: list, P: Polytope, target: np.ndarray) -> np.ndarray:
    # min t  s.t. |sum_j M_j V^T lam_j - a|_inf <= t, lam_j in the simplex
    from scipy.optimize import linprog

    V = P.vertices
    k = V.shape[0]
    N = len(gains)
    n = target.shape[0]
    blocks = np.hstack([M @ V.T for M in gains])
    nv = N * k + 1
    cost = np.zeros(nv)
    cost[-1] = 1.0
    A_ub = np.vstack([np.hstack([blocks, -np.ones((n, 1))]), np.hstack([-blocks, -np.ones((n, 1))])])
    b_ub = np.concatenate([target, -target])
    A_eq = np.zeros((N, nv))
    for j in range(N):
        A_eq[j, j * k:(j + 1) * k] = 1.0
    res = linprog(cost, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=np.ones(N),
                  bounds=[(0, None)] * nv, method="highs")
    if res.status != 0:
        raise RuntimeError(f"label realization LP failed: {res.message}")
    lam = res.x[:-1].reshape(N, k)
    return lam @ V


def realize_point(gains: list, P: Polytope, target, tol: float) -> tuple[np.ndarray, float]:
    """Piecewise-constant input values (one row per substep, inside P) whose
    zero-state response is within tol of target; returns (values, residual).

    Tries a constant input, then a per-substep least-squares solution, both
    projected onto P when P is a box, and finally an exact infinity-norm LP.
    """
    a = np.asarray(target, dtype=float)
    N = len(gains)
    K = sum(gains)
    box = _box_bounds(P)

    def residual(values):
        return inf_norm(sum(M @ u for M, u in zip(gains, values)) - a)

    best = None
    if box is not None:
        lo, hi = box
        u = np.clip(np.linalg.lstsq(K, a, rcond=None)[0], lo, hi)
        cand = np.tile(u, (N, 1))
        best = (cand, residual(cand))
        if best[1] > tol:
            stacked = np.hstack(gains)
            w = np.linalg.lstsq(stacked, a, rcond=None)[0].reshape(N, -1)
            cand = np.clip(w, lo, hi)
            r = residual(cand)
            if r < best[1]:
                best = (cand, r)
    if best is None or best[1] > tol:
        cand = _lp_realize(gains, P, a)
        r = residual(cand)
        if best is None or r < best[1]:
            best = (cand, r)
    return best
