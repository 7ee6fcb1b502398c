"""Sampled-data controllers derived from abstraction strategies, closed-loop
simulation against disturbance generators, and run verdicts."""
from __future__ import annotations

import io
import logging
from dataclasses import dataclass

import numpy as np

from .abstraction import Abstraction, check_params, realize_point
from .game import Strategy
from .logic.continuous import Verdict, eval_continuous
from .logic.formula import Formula, tr_delta, tr_eps
from .logic.semantics import eval_prefix
from .numerics import GEOM_TOL, inf_norm, substep_gains
from .plant import DenseTrajectory, InputSignal, LinearSystem, dense_simulate, step

log = logging.getLogger(__name__)


class RealizationError(RuntimeError):
    pass


class MatcherFault(RuntimeError):
    """No abstraction successor within eps of the sampled plant state."""

    def __init__(self, message: str, diagnostic: dict):
        super().__init__(message)
        self.diagnostic = diagnostic


@dataclass(frozen=True, eq=False)
class Realization:
    signal: InputSignal
    residual: float


def realize_label(sys: LinearSystem, tau: float, a, N: int, tol: float) -> Realization:
    """Input signal u with |x(tau, 0, u, 0) - a| <= tol (tol is mu/2)."""
    gains = substep_gains(sys.A, sys.B, tau, N)
    values, res = realize_point(gains, sys.U, a, tol)
    if res > tol + GEOM_TOL:
        raise RealizationError(f"label {np.asarray(a).tolist()} realized only to {res:.3g} > {tol:.3g}")
    return Realization(InputSignal(tau, values), float(res))


class TauController:
    """Online realization of a strategy on the plant.

    The matcher keeps the abstraction state paired with the last sample.
    After each period it moves to the successor of (q, a) closest to the new
    sample (ties by index), and faults if that distance exceeds eps.
    """

    def __init__(self, sys: LinearSystem, T: Abstraction, q0: int, strategy: Strategy, eps: float):
        if not 0 <= q0 < T.n_states:
            raise ValueError(f"q0={q0} is not an abstraction state")
        self.sys = sys
        self.T = T
        self.q0 = int(q0)
        self.strategy = strategy
        self.eps = float(eps)
        self._realized: dict = {}
        self.q = self.q0
        self.memory = strategy.init(self.q0)

    def admits(self, x0) -> bool:
        return inf_norm(np.asarray(x0) - self.T.states[self.q0]) <= self.eps + GEOM_TOL

    def reset(self, x0) -> float:
        if not self.admits(x0):
            raise ValueError("initial state outside X0 = {x : |x - q0| <= eps}")
        self.q = self.q0
        self.memory = self.strategy.init(self.q0)
        return inf_norm(np.asarray(x0) - self.T.states[self.q0])

    def choose(self) -> int:
        labels = self.strategy.choice(self.memory, self.q)
        if not labels:
            raise ValueError(f"empty strategy choice at state {self.q}")
        return min(labels)

    def realize(self, a: int) -> Realization:
        if a not in self._realized:
            p = self.T.params
            self._realized[a] = realize_label(self.sys, p.tau, self.T.ctrl_labels[a], p.substeps, p.mu / 2)
        return self._realized[a]

    def candidates(self, a: int) -> list:
        return sorted(self.T.post(self.q, a)) if "_table" in self.T.__dict__ else sorted(
            {s for b in range(self.T.n_dist) for s in self.T.successors(self.q, a, b)})

    def match(self, a: int, x_next) -> tuple[int, float]:
        cands = self.candidates(a)
        if not cands:
            raise MatcherFault(f"(q={self.q}, a={a}) has no successor", {"q": self.q, "a": a})
        d = np.max(np.abs(self.T.states[cands] - np.asarray(x_next)), axis=1)
        k = int(np.argmin(d))
        return cands[k], float(d[k])

    def advance(self, a: int, x_next) -> tuple[int, float]:
        q2, dist = self.match(a, x_next)
        if dist > self.eps + GEOM_TOL:
            raise MatcherFault(
                f"no successor within eps={self.eps} of the sample (closest {dist:.4g})",
                {"q": self.q, "a": a, "x_next": np.asarray(x_next).tolist(), "distance": dist})
        self.q = q2
        self.memory = self.strategy.update(self.memory, q2)
        return q2, dist


def derive_controller(sys: LinearSystem, T: Abstraction, q0: int, f: Strategy,
                      force: bool = False) -> TauController:
    if not force and not check_params(sys, T.params).certified:
        raise ValueError("abstraction parameters are not certified")
    return TauController(sys, T, q0, f, T.params.eps)


class DisturbanceGenerator:
    """Seeded per-period disturbance signals: zero, uniform or adversarial."""

    KINDS = ("zero", "uniform", "adversarial")

    def __init__(self, kind: str, seed: int = 0):
        if kind not in self.KINDS:
            raise ValueError(f"unknown disturbance kind {kind!r}; pick one of {self.KINDS}")
        self.kind = kind
        self.rng = np.random.default_rng(seed)

    def __call__(self, sys: LinearSystem, ctrl: TauController, x, a: int, u: InputSignal) -> InputSignal:
        tau, N = u.tau, u.N
        if self.kind == "zero":
            return InputSignal.zero(sys.k, tau, N)
        V = sys.V.vertices
        if self.kind == "uniform":
            rows = []
            for _ in range(N):
                if self.rng.random() < 0.5:
                    rows.append(V[self.rng.integers(len(V))])
                else:
                    rows.append(sys.V.sample(self.rng, 1)[0])
            return InputSignal(tau, np.array(rows))
        # adversarial: the constant vertex signal that pushes the sample
        # farthest from the successor the matcher would pick
        best, worst = None, -1.0
        for v in V:
            sig = InputSignal.constant(v, tau, N)
            x_next = step(sys, x, u, sig)
            _, dist = ctrl.match(a, x_next)
            if dist > worst:
                best, worst = sig, dist
        return best


@dataclass
class ClosedLoopRun:
    tau: float
    trajectory: DenseTrajectory
    samples: np.ndarray
    abstract_run: list
    abstract_states: np.ndarray
    labels: list
    inputs: list
    disturbances: list
    distances: list
    residuals: list
    deviations: list
    left_X: bool

    @property
    def max_distance(self) -> float:
        return max(self.distances)

    @property
    def max_deviation(self) -> float:
        return max(self.deviations) if self.deviations else 0.0

    def to_csv(self) -> str:
        traj = self.trajectory
        n = traj.states.shape[1]
        m = self.inputs[0].values.shape[1] if self.inputs else 0
        k = self.disturbances[0].values.shape[1] if self.disturbances else 0
        head = (["t"] + [f"x{i}" for i in range(n)] + [f"u{i}" for i in range(m)]
                + [f"v{i}" for i in range(k)] + ["q"] + [f"q{i}" for i in range(n)] + ["distance"])
        buf = io.StringIO()
        buf.write(",".join(head) + "\n")
        for idx, t in enumerate(traj.times):
            period = min(int(t / self.tau + 1e-9), len(self.labels))
            if period < len(self.labels):
                s = t - period * self.tau
                u = self.inputs[period].values[min(int(s / self.tau * self.inputs[period].N + 1e-9), self.inputs[period].N - 1)]
                v = self.disturbances[period].values[min(int(s / self.tau * self.disturbances[period].N + 1e-9), self.disturbances[period].N - 1)]
            else:
                u, v = np.full(m, np.nan), np.full(k, np.nan)
            q = self.abstract_run[period]
            row = [t, *traj.states[idx], *u, *v, q, *self.abstract_states[period], self.distances[period]]
            buf.write(",".join(repr(float(z)) if not isinstance(z, (int, np.integer)) else str(z) for z in row) + "\n")
        return buf.getvalue()


def run_closed_loop(ctrl: TauController, sys: LinearSystem, x0, dist: DisturbanceGenerator,
                    steps: int, dense_substeps: int = 64) -> ClosedLoopRun:
    """Execute ``steps`` sampling periods from x0."""
    T = ctrl.T
    tau = T.params.tau
    x = np.asarray(x0, dtype=float)
    d0 = ctrl.reset(x)
    samples = [x.copy()]
    run = [ctrl.q]
    distances = [d0]
    labels, inputs, dists, residuals, deviations, pieces = [], [], [], [], [], []
    for n in range(steps):
        a = ctrl.choose()
        real = ctrl.realize(a)
        v = dist(sys, ctrl, x, a, real.signal)
        piece = dense_simulate(sys, x, real.signal, v, dense_substeps=dense_substeps)
        x_next = piece.states[-1]
        try:
            q2, dq = ctrl.advance(a, x_next)
        except MatcherFault as exc:
            exc.diagnostic.update({"step": n, "samples": [s.tolist() for s in samples], "run": list(run)})
            raise
        deviations.append(float(np.max(np.abs(piece.states - x))))
        pieces.append(piece)
        labels.append(a)
        inputs.append(real.signal)
        dists.append(v)
        residuals.append(real.residual)
        samples.append(x_next.copy())
        run.append(q2)
        distances.append(dq)
        x = x_next
    if pieces:
        traj = DenseTrajectory.concat(pieces)
    else:
        traj = DenseTrajectory(np.zeros(1), x[None, :].copy(), np.zeros((0, sys.n)), sys.A)
    return ClosedLoopRun(tau, traj, np.array(samples), run, T.states[run], labels, inputs, dists,
                         distances, residuals, deviations, traj.left_guard)


@dataclass
class RunVerdict:
    deviation: float
    delta: float
    deviation_ok: bool
    abstract: bool | None
    sampled: bool | None
    continuous: Verdict
    matcher_ok: bool

    @property
    def all_true(self) -> bool:
        return (self.deviation_ok and self.matcher_ok and self.abstract is True
                and self.sampled is True and self.continuous.value is True)

    @property
    def chain_consistent(self) -> bool:
        """(b) implies (c), and (c) with the deviation box green implies (d)."""
        if self.abstract is True and self.sampled is False:
            return False
        if self.sampled is True and self.deviation_ok and self.continuous.value is False:
            return False
        return True

    def to_dict(self) -> dict:
        return {
            "a_deviation": {"measured": self.deviation, "delta": self.delta, "ok": self.deviation_ok},
            "b_abstract_run": self.abstract,
            "c_sampled_run": self.sampled,
            "d_continuous": self.continuous.value,
            "d_detail": str(self.continuous),
            "matcher_ok": self.matcher_ok,
            "chain_consistent": self.chain_consistent,
        }


def verdict(run: ClosedLoopRun, phi0: Formula, delta: float, eps: float) -> RunVerdict:
    robust = tr_delta(phi0, delta)
    dev = run.max_deviation
    return RunVerdict(
        deviation=dev,
        delta=delta,
        deviation_ok=dev <= delta,
        abstract=eval_prefix(run.abstract_states, tr_eps(robust, eps)),
        sampled=eval_prefix(run.samples, robust),
        continuous=eval_continuous(run.trajectory, phi0, run.tau),
        matcher_ok=run.max_distance <= eps + GEOM_TOL,
    )
