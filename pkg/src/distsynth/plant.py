"""Disturbed linear plant x' = Ax + Bu + Gv under piecewise-constant signals."""
from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .numerics import Polytope, exp_and_integral, inf_norm, mat_exp

DENSE_SUBSTEPS = 64


class UnstableSystemError(ValueError):
    def __init__(self, report):
        super().__init__(report.diagnostic)
        self.report = report


@dataclass(frozen=True, eq=False)
class LinearSystem:
    A: np.ndarray
    B: np.ndarray
    G: np.ndarray
    X: Polytope
    U: Polytope
    V: Polytope
    stability_checked: bool = False
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        n = A.shape[0]
        if A.shape != (n, n):
            raise ValueError(f"A must be square, got {A.shape}")
        B = np.asarray(self.B, dtype=float).reshape(n, -1)
        G = np.asarray(self.G, dtype=float).reshape(n, -1)
        for name, M in (("A", A), ("B", B), ("G", G)):
            if not np.all(np.isfinite(M)):
                raise ValueError(f"{name} has non-finite entries")
        sets = {}
        for name in ("X", "U", "V"):
            P = getattr(self, name)
            sets[name] = P if isinstance(P, Polytope) else Polytope(P)
        if sets["X"].dim != n:
            raise ValueError("X dimension does not match A")
        if sets["U"].dim != B.shape[1]:
            raise ValueError("U dimension does not match the columns of B")
        if sets["V"].dim != G.shape[1]:
            raise ValueError("V dimension does not match the columns of G")
        if not sets["X"].contains(np.zeros(n)):
            raise ValueError("the state space X must contain the origin")
        for name, M in (("A", A), ("B", B), ("G", G)):
            M.setflags(write=False)
            object.__setattr__(self, name, M)
        for name, P in sets.items():
            object.__setattr__(self, name, P)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def k(self) -> int:
        return self.G.shape[1]

    def propagators(self, h: float) -> tuple[np.ndarray, np.ndarray]:
        """(e^{Ah}, int_0^h e^{As} ds), memoised per step length."""
        key = float(h)
        if key not in self._cache:
            self._cache[key] = exp_and_integral(self.A, key)
        return self._cache[key]

    def transition(self, tau: float) -> np.ndarray:
        return self.propagators(tau)[0]

    def to_dict(self) -> dict:
        return {
            "A": self.A.tolist(),
            "B": self.B.tolist(),
            "G": self.G.tolist(),
            "X": self.X.to_list(),
            "U": self.U.to_list(),
            "V": self.V.to_list(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "LinearSystem":
        missing = [k for k in ("A", "B", "G", "X", "U", "V") if k not in data]
        if missing:
            raise KeyError(f"system description is missing {', '.join(missing)}")
        return cls(
            A=np.array(data["A"], dtype=float),
            B=np.array(data["B"], dtype=float),
            G=np.array(data["G"], dtype=float),
            X=Polytope(np.array(data["X"], dtype=float)),
            U=Polytope(np.array(data["U"], dtype=float)),
            V=Polytope(np.array(data["V"], dtype=float)),
        )


PARAM_KEYS = ("tau", "eta", "mu", "eps", "delta")


def dump_system(sys: LinearSystem, params: dict | None = None) -> str:
    data = sys.to_dict()
    for key in PARAM_KEYS:
        if params and params.get(key) is not None:
            data[key] = float(params[key])
    return json.dumps(data, sort_keys=True, indent=1)


def load_system(text: str) -> tuple[LinearSystem, dict]:
    data = json.loads(text)
    params = {k: float(data[k]) for k in PARAM_KEYS if k in data}
    return LinearSystem.from_dict(data), params


@dataclass(frozen=True, eq=False)
class InputSignal:
    """Piecewise-constant signal on [0, tau): row j holds the value on substep j."""

    tau: float
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        if vals.shape[0] < 1:
            raise ValueError("an input signal needs at least one substep")
        if self.tau <= 0:
            raise ValueError("signal horizon must be positive")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def N(self) -> int:
        return self.values.shape[0]

    @classmethod
    def constant(cls, value, tau: float, N: int = 1) -> "InputSignal":
        value = np.atleast_1d(np.asarray(value, dtype=float))
        return cls(tau, np.tile(value, (N, 1)))

    @classmethod
    def zero(cls, dim: int, tau: float, N: int = 1) -> "InputSignal":
        return cls(tau, np.zeros((N, dim)))

    def inside(self, P: Polytope, tol: float = 1e-9) -> bool:
        return bool(np.all(P.contains(self.values, tol)))

    def refined(self, L: int) -> np.ndarray:
        """Values on L uniform substeps (L a multiple of N)."""
        if L % self.N:
            raise ValueError("refinement must be a multiple of the substep count")
        return np.repeat(self.values, L // self.N, axis=0)


def _common_grid(u: InputSignal, v: InputSignal) -> tuple[int, np.ndarray, np.ndarray]:
    if not math.isclose(u.tau, v.tau, rel_tol=1e-12, abs_tol=0.0):
        raise ValueError(f"signal horizons differ: {u.tau} vs {v.tau}")
    L = math.lcm(u.N, v.N)
    return L, u.refined(L), v.refined(L)


def step(sys: LinearSystem, x0, u: InputSignal, v: InputSignal) -> np.ndarray:
    """x(tau, x0, u, v), exact per substep."""
    L, U, V = _common_grid(u, v)
    Phi, Gam = sys.propagators(u.tau / L)
    x = np.asarray(x0, dtype=float).copy()
    drive = U @ sys.B.T + V @ sys.G.T
    for w in drive:
        x = Phi @ x + Gam @ w
    return x


@dataclass(frozen=True, eq=False)
class DenseTrajectory:
    """Samples of an absolutely continuous trajectory with the constant drive
    Bu+Gv of every interval, so the state is exact between samples too."""

    times: np.ndarray
    states: np.ndarray
    drives: np.ndarray
    A: np.ndarray
    guard_exits: tuple = ()

    @property
    def h(self) -> float:
        return float(self.times[1] - self.times[0]) if len(self.times) > 1 else 0.0

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    @property
    def left_guard(self) -> bool:
        return bool(self.guard_exits)

    def state_at(self, t: float) -> np.ndarray:
        if len(self.times) == 1:
            return self.states[0].copy()
        i = int(np.searchsorted(self.times, t, side="right") - 1)
        i = min(max(i, 0), len(self.drives) - 1)
        s = t - self.times[i]
        if s == 0.0:
            return self.states[i].copy()
        Phi, Gam = exp_and_integral(self.A, s)
        return Phi @ self.states[i] + Gam @ self.drives[i]

    def refined(self, factor: int) -> "DenseTrajectory":
        """Same trajectory sampled factor-times finer."""
        if factor == 1 or len(self.times) == 1:
            return self
        times, states, drives = [self.times[0]], [self.states[0]], []
        for i, w in enumerate(self.drives):
            h = (self.times[i + 1] - self.times[i]) / factor
            Phi, Gam = exp_and_integral(self.A, h)
            x = self.states[i]
            for j in range(1, factor + 1):
                x = Phi @ x + Gam @ w
                times.append(self.times[i] + j * h if j < factor else self.times[i + 1])
                states.append(x if j < factor else self.states[i + 1])
                drives.append(w)
        return DenseTrajectory(np.array(times), np.array(states), np.array(drives),
                               self.A, self.guard_exits)

    def shifted(self, t0: float) -> "DenseTrajectory":
        return dataclasses.replace(self, times=self.times + t0,
                                   guard_exits=tuple(t + t0 for t in self.guard_exits))

    @staticmethod
    def concat(parts: list["DenseTrajectory"]) -> "DenseTrajectory":
        """Join consecutive pieces; each piece starts where the previous ended."""
        first = parts[0]
        times, states, drives, exits = [first.times], [first.states], [first.drives], list(first.guard_exits)
        offset = first.times[-1]
        for p in parts[1:]:
            times.append(p.times[1:] + offset)
            states.append(p.states[1:])
            drives.append(p.drives)
            exits.extend(t + offset for t in p.guard_exits)
            offset = offset + p.times[-1]
        return DenseTrajectory(np.concatenate(times), np.concatenate(states),
                               np.concatenate(drives), first.A, tuple(exits))


def dense_simulate(sys: LinearSystem, x0, u: InputSignal, v: InputSignal,
                   dense_substeps: int = DENSE_SUBSTEPS,
                   guard: Polytope | None = None) -> DenseTrajectory:
    """Dense samples of x(t, x0, u, v) on [0, tau] with step <= tau/dense_substeps.

    Leaving the guard polytope (X by default) is recorded in ``guard_exits``
    rather than raised.
    """
    L, U, V = _common_grid(u, v)
    r = max(1, math.ceil(dense_substeps / L))
    M = L * r
    h = u.tau / M
    Phi, Gam = sys.propagators(h)
    drive = np.repeat(U @ sys.B.T + V @ sys.G.T, r, axis=0)
    states = np.empty((M + 1, sys.n))
    states[0] = np.asarray(x0, dtype=float)
    for i in range(M):
        states[i + 1] = Phi @ states[i] + Gam @ drive[i]
    times = np.arange(M + 1) * h
    times[-1] = u.tau
    guard = sys.X if guard is None else guard
    inside = guard.contains(states, 1e-9)
    exits = tuple(float(t) for t in times[~np.asarray(inside, dtype=bool)][:1])
    return DenseTrajectory(times, states, drive, sys.A, exits)


def delta_bound(sys: LinearSystem, tau: float, grid: int = 2048) -> float:
    """Upper bound on |x(t) - x(0)| over t in [0, tau] for x(0) in X.

    Bounds  |e^{At} - I| R_X + int_0^t |e^{Ar}| dr (|B| R_U + |G| R_V)  on a
    uniform time grid; the integral uses an upper Riemann sum padded by the
    Lipschitz constant of |e^{Ar}|, and the grid maximum is padded by the
    Lipschitz constant of the whole expression times half the grid step.
    """
    if not sys.stability_checked:
        raise ValueError("delta_bound needs a system that passed check_stability")
    if tau <= 0:
        return 0.0
    R_X, R_U, R_V = sys.X.radius(), sys.U.radius(), sys.V.radius()
    drive = inf_norm(sys.B) * R_U + inf_norm(sys.G) * R_V
    a = inf_norm(sys.A)
    grow = math.exp(a * tau)
    dt = tau / grid
    step_exp = mat_exp(sys.A, dt)
    E = np.eye(sys.n)
    norms = [1.0]
    devs = [0.0]
    for _ in range(grid):
        E = E @ step_exp
        norms.append(inf_norm(E))
        devs.append(inf_norm(E - np.eye(sys.n)))
    norms = np.array(norms)
    cell = dt * (np.maximum(norms[:-1], norms[1:]) + a * grow * dt / 2)
    integral = np.concatenate([[0.0], np.cumsum(cell)])
    values = np.array(devs) * R_X + integral * drive
    lipschitz = a * grow * R_X + grow * drive
    return float(values.max() + lipschitz * dt / 2)


@dataclass
class StabilityReport:
    passed: bool
    norms: list
    taus: list
    contracting_tau: float | None
    diagnostic: str
    system: LinearSystem | None = None


def default_tau_grid() -> list[float]:
    return [0.01 * 2 ** (k / 2) for k in range(0, 30)]


def check_stability(sys: LinearSystem, tau_grid=None) -> StabilityReport:
    """Numeric surrogate for asymptotic stability.

    Passes when |e^{A tau}| < 1 for some grid value and the norms along the
    (increasing) grid end strictly decreasing.  On success the report carries
    a copy of the system with ``stability_checked`` set; on failure
    UnstableSystemError is raised with the report attached.
    """
    taus = sorted(default_tau_grid() if tau_grid is None else tau_grid)
    norms = [inf_norm(mat_exp(sys.A, t)) for t in taus]
    contracting = next((t for t, nm in zip(taus, norms) if nm < 1.0), None)
    tail = norms[-3:]
    decreasing = len(tail) < 2 or all(b < a for a, b in zip(tail, tail[1:])) or tail[-1] < 1e-12
    passed = contracting is not None and decreasing
    if passed:
        diag = f"contracting at tau={contracting:.4g} (|e^(A tau)|={norms[taus.index(contracting)]:.4g})"
    elif contracting is None:
        diag = f"|e^(A tau)| >= 1 on the whole grid (min {min(norms):.4g})"
    else:
        diag = "norm of e^(A tau) is not eventually decreasing on the grid"
    report = StabilityReport(passed, norms, taus, contracting, diag)
    if not passed:
        raise UnstableSystemError(report)
    report.system = dataclasses.replace(sys, stability_checked=True, _cache=sys._cache)
    return report
