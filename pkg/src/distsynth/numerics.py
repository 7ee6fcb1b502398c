"""Linear algebra and polytope primitives shared by the whole toolchain.

The metric is the infinity norm everywhere.  Half-space tests against
infinity-norm balls use the dual (1-) norm of the normal vector in closed
form, never sampling.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import ConvexHull, QhullError

GEOM_TOL = 1e-9
EXP_TOL = 1e-12

_TAYLOR_DEGREE = 20
_SCALE_TARGET = 0.5


def inf_norm(x) -> float:
    """Infinity norm: max |x_i| for vectors, max absolute row sum for matrices."""
    a = np.asarray(x, dtype=float)
    if a.size == 0:
        return 0.0
    if a.ndim <= 1:
        return float(np.max(np.abs(a)))
    return float(np.max(np.sum(np.abs(a), axis=1)))


def mat_exp(A, t: float = 1.0) -> np.ndarray:
    """e^{At} by scaling and squaring around a degree-20 Taylor core."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"mat_exp needs a square matrix, got shape {A.shape}")
    if t < 0:
        raise ValueError("mat_exp is only defined here for t >= 0")
    M = A * t
    n = M.shape[0]
    norm = inf_norm(M)
    s = 0
    if norm > _SCALE_TARGET:
        s = int(math.ceil(math.log2(norm / _SCALE_TARGET)))
    M = M / (2.0 ** s)
    # Horner evaluation of sum_k M^k / k!
    E = np.eye(n)
    for k in range(_TAYLOR_DEGREE, 0, -1):
        E = np.eye(n) + (M @ E) / k
    for _ in range(s):
        E = E @ E
    return E


def exp_and_integral(A, h: float) -> tuple[np.ndarray, np.ndarray]:
    """Return (e^{Ah}, int_0^h e^{As} ds), read off one augmented exponential."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[0]
    aug = np.zeros((2 * n, 2 * n))
    aug[:n, :n] = A
    aug[:n, n:] = np.eye(n)
    E = mat_exp(aug, h)
    return E[:n, :n], E[:n, n:]


def substep_gains(A, B, tau: float, N: int) -> list[np.ndarray]:
    """Per-substep ZOH gains M_j with x(tau, 0, u, 0) = sum_j M_j u_j.

    Substep j covers [j*h, (j+1)*h) with h = tau/N; each M_j is exact up to
    the matrix exponential tolerance.
    """
    if tau <= 0 or N < 1:
        raise ValueError("need tau > 0 and N >= 1")
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    h = tau / N
    Phi, Gam = exp_and_integral(A, h)
    gains = []
    carry = np.eye(A.shape[0])
    base = Gam @ B
    # last substep is propagated by the identity, the first by Phi^{N-1}
    for _ in range(N):
        gains.append(carry @ base)
        carry = carry @ Phi
    gains.reverse()
    return gains


def zoh_gain(A, B, tau: float, N: int = 1) -> np.ndarray:
    """Matrix taking a constant input on [0, tau) to int_0^tau e^{A(tau-s)} B ds u.

    Computed as a composite sum over N substeps, each integrated exactly, so
    the result agrees with the closed form to roughly EXP_TOL.  See
    :func:`zoh_error_bound` for the gap between N-substep piecewise-constant
    signals and arbitrary measurable ones.
    """
    return sum(substep_gains(A, B, tau, N))


def zoh_error_bound(A, B, tau: float, N: int) -> float:
    """tau^2/N * |A| * |B| * e^{|A| tau}: per-unit-input gap between the
    N-substep reachable set and the reachable set of all measurable inputs."""
    a = inf_norm(A)
    b = inf_norm(B)
    return tau * tau / N * a * b * math.exp(a * tau)


def _affine_frame(points: np.ndarray, tol: float):
    center = points.mean(axis=0)
    shifted = points - center
    if shifted.shape[0] == 1:
        return center, np.zeros((points.shape[1], 0))
    _, sv, vt = np.linalg.svd(shifted, full_matrices=False)
    scale = max(1.0, float(np.max(np.abs(points))))
    rank = int(np.sum(sv > tol * scale * max(1, points.shape[0]) ** 0.5))
    return center, vt[:rank].T


def hull_vertices(points, tol: float = GEOM_TOL) -> np.ndarray:
    """Extreme points of conv(points), handling lower-dimensional hulls."""
    P = np.unique(np.atleast_2d(np.asarray(points, dtype=float)), axis=0)
    if P.shape[0] <= 1:
        return P
    center, basis = _affine_frame(P, tol)
    r = basis.shape[1]
    if r == 0:
        return P[:1]
    coords = (P - center) @ basis
    if r == 1:
        c = coords[:, 0]
        return P[[int(np.argmin(c)), int(np.argmax(c))]]
    try:
        hull = ConvexHull(coords)
    except QhullError:
        return P
    idx = np.sort(hull.vertices)
    return P[idx]


@dataclass(frozen=True, eq=False)
class Polytope:
    """Convex hull of finitely many vertices (stored vertex-first).

    The H-representation rows (c_i, d_i) mean c_i^T x + d_i <= 0.
    """

    vertices: np.ndarray
    _pruned: bool = field(default=False, repr=False)

    def __post_init__(self):
        V = np.atleast_2d(np.asarray(self.vertices, dtype=float))
        if V.shape[0] == 0:
            raise ValueError("a polytope needs at least one vertex")
        if not np.all(np.isfinite(V)):
            raise ValueError("polytope vertices must be finite")
        if not self._pruned:
            V = hull_vertices(V)
        V.setflags(write=False)
        object.__setattr__(self, "vertices", V)
        object.__setattr__(self, "_pruned", True)

    @classmethod
    def box(cls, lo, hi) -> "Polytope":
        lo = np.atleast_1d(np.asarray(lo, dtype=float))
        hi = np.atleast_1d(np.asarray(hi, dtype=float))
        corners = list(itertools.product(*zip(lo, hi)))
        return cls(np.array(corners))

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    @cached_property
    def affine_rank(self) -> int:
        _, basis = _affine_frame(self.vertices, GEOM_TOL)
        return basis.shape[1]

    @property
    def full_dimensional(self) -> bool:
        return self.affine_rank == self.dim

    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def radius(self) -> float:
        """max over vertices of the infinity norm (= max over the polytope)."""
        return float(np.max(np.abs(self.vertices)))

    @cached_property
    def hrep(self) -> tuple[np.ndarray, np.ndarray] | None:
        """(C, d) with C x + d <= 0, or None when only LP membership is used."""
        if not self.full_dimensional or self.dim > 3:
            return None
        if self.dim == 1:
            lo, hi = self.bbox()
            return np.array([[1.0], [-1.0]]), np.array([-hi[0], lo[0]])
        hull = ConvexHull(self.vertices)
        eq = hull.equations
        return eq[:, :-1].copy(), eq[:, -1].copy()

    def contains(self, x, tol: float = GEOM_TOL):
        """Closed membership; accepts one point or an (m, n) batch."""
        X = np.asarray(x, dtype=float)
        single = X.ndim == 1
        X = np.atleast_2d(X)
        if self.hrep is not None:
            C, d = self.hrep
            out = np.all(X @ C.T + d <= tol, axis=1)
        else:
            out = np.array([self._lp_distance(p) <= tol for p in X])
        return bool(out[0]) if single else out

    def _lp_distance(self, p: np.ndarray) -> float:
        # min t  s.t. |V^T lam - p|_inf <= t, lam >= 0, sum lam = 1
        V = self.vertices
        k, n = V.shape
        cost = np.zeros(k + 1)
        cost[-1] = 1.0
        A_ub = np.block([[V.T, -np.ones((n, 1))], [-V.T, -np.ones((n, 1))]])
        b_ub = np.concatenate([p, -p])
        A_eq = np.concatenate([np.ones(k), [0.0]])[None, :]
        res = linprog(cost, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=[1.0],
                      bounds=[(0, None)] * (k + 1), method="highs")
        return float(res.x[-1]) if res.status == 0 else math.inf

    def distance(self, x) -> float:
        """Infinity-norm distance from a point to the polytope."""
        p = np.asarray(x, dtype=float)
        if self.vertices.shape[0] == 1:
            return inf_norm(p - self.vertices[0])
        if self.dim == 1:
            lo, hi = self.bbox()
            return float(max(lo[0] - p[0], p[0] - hi[0], 0.0))
        return self._lp_distance(p)

    def linear_map(self, M) -> "Polytope":
        M = np.atleast_2d(np.asarray(M, dtype=float))
        return Polytope(self.vertices @ M.T)

    def minkowski_sum(self, other: "Polytope") -> "Polytope":
        S = (self.vertices[:, None, :] + other.vertices[None, :, :]).reshape(-1, self.dim)
        return Polytope(S)

    def inflate(self, r: float) -> "Polytope":
        """Minkowski sum with the closed infinity ball of radius r."""
        if r <= 0:
            return self
        return self.minkowski_sum(Polytope.box(-r * np.ones(self.dim), r * np.ones(self.dim)))

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        """Random points inside (Dirichlet convex combinations of vertices)."""
        w = rng.dirichlet(np.ones(self.vertices.shape[0]), size=count)
        return w @ self.vertices

    def to_list(self) -> list:
        return self.vertices.tolist()


def grid_points(P: Polytope, pitch: float, tol: float = GEOM_TOL) -> np.ndarray:
    """Lattice points k*pitch (k integer) inside P, in lexicographic order."""
    if pitch <= 0:
        raise ValueError("grid pitch must be positive")
    lo, hi = P.bbox()
    ranges = []
    for a, b in zip(lo, hi):
        k0 = math.ceil(a / pitch - tol / pitch)
        k1 = math.floor(b / pitch + tol / pitch)
        if k1 < k0:
            return np.zeros((0, P.dim))
        ranges.append(np.arange(k0, k1 + 1))
    mesh = np.meshgrid(*ranges, indexing="ij")
    K = np.stack([m.ravel() for m in mesh], axis=1)
    pts = K * pitch
    keep = P.contains(pts, tol) if len(pts) else np.zeros(0, dtype=bool)
    return pts[np.asarray(keep, dtype=bool)]


def hausdorff(S1, S2) -> float:
    """Hausdorff distance between finite point sets under the infinity norm."""
    A = np.atleast_2d(np.asarray(S1, dtype=float))
    B = np.atleast_2d(np.asarray(S2, dtype=float))
    if A.size == 0 or B.size == 0:
        raise ValueError("hausdorff distance needs two nonempty sets")
    D = np.max(np.abs(A[:, None, :] - B[None, :, :]), axis=2)
    return float(max(D.min(axis=1).max(), D.min(axis=0).max()))


def ball_inclusion(x, delta: float, c, d: float) -> bool:
    """B_delta(x) (closed, infinity norm) inside the open half-space c^T x + d < 0."""
    c = np.asarray(c, dtype=float)
    return float(c @ np.asarray(x, dtype=float)) + d + delta * float(np.sum(np.abs(c))) < 0


def ball_disjoint(x, delta: float, c, d: float) -> bool:
    """B_delta(x) misses the open half-space c^T x + d < 0 entirely."""
    c = np.asarray(c, dtype=float)
    return float(c @ np.asarray(x, dtype=float)) + d - delta * float(np.sum(np.abs(c))) >= 0
