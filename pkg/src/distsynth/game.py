"""Games on alternating transition systems: strategies, outcomes, fixpoint
synthesis, alternating approximate bisimulation and strategy transfer."""
from __future__ import annotations

import io
import logging
from dataclasses import dataclass
from typing import Callable, Hashable

import numpy as np

from .abstraction import Abstraction, AltTransitionSystem, realize_point
from .logic.formula import Formula, FragmentClause, fragment, to_text
from .logic.semantics import lasso_values, point_leaves
from .numerics import GEOM_TOL, inf_norm, substep_gains
from .plant import InputSignal

log = logging.getLogger(__name__)


class OutcomeLimitError(RuntimeError):
    """Outcome enumeration exceeded its cap."""


@dataclass(frozen=True, eq=False)
class Strategy:
    """Finite-memory strategy.

    ``init(q)`` is the memory after observing the first state, ``update(m, q)``
    the memory after moving to q, and ``choice(m, q)`` the nonempty set of
    control label indices allowed at the current state q.
    """

    init: Callable[[int], Hashable]
    update: Callable[[Hashable, int], Hashable]
    choice: Callable[[Hashable, int], frozenset]
    name: str = "strategy"

    @classmethod
    def memoryless(cls, table: Callable[[int], frozenset], name: str = "memoryless") -> "Strategy":
        return cls(lambda q: None, lambda m, q: None, lambda m, q: table(q), name)

    @classmethod
    def everything(cls, n_ctrl: int) -> "Strategy":
        labels = frozenset(range(n_ctrl))
        return cls.memoryless(lambda q: labels, "all-labels")

    def history_choice(self, history) -> frozenset:
        m = self.init(history[0])
        for q in history[1:]:
            m = self.update(m, q)
        return self.choice(m, history[-1])

    def explore(self, T: AltTransitionSystem, initial, cap: int = 100_000) -> dict:
        """Reachable part of the memory automaton from the given initial states."""
        memories: dict = {}
        choices = {}
        updates = {}
        frontier = []
        for q in initial:
            m = self.init(q)
            memories.setdefault(m, len(memories))
            frontier.append((q, m))
        seen = set(frontier)
        while frontier:
            q, m = frontier.pop()
            labels = self.choice(m, q)
            if not labels:
                raise ValueError(f"strategy {self.name} chooses nothing at state {q}")
            choices[(memories[m], q)] = sorted(labels)
            for a in labels:
                for q2 in T.post(q, a):
                    m2 = self.update(m, q2)
                    memories.setdefault(m2, len(memories))
                    updates[(memories[m], q2)] = memories[m2]
                    if (q2, m2) not in seen:
                        seen.add((q2, m2))
                        frontier.append((q2, m2))
                        if len(seen) > cap:
                            raise OutcomeLimitError("memory automaton exploration exceeded its cap")
        return {
            "name": self.name,
            "memories": len(memories),
            "initial": {int(q): memories[self.init(q)] for q in initial},
            "choice": [[m, q, c] for (m, q), c in sorted(choices.items())],
            "update": [[m, q, m2] for (m, q), m2 in sorted(updates.items())],
        }


def strategy_from_table(data: dict) -> Strategy:
    """Rebuild an exported (explored) strategy."""
    init = {int(k): v for k, v in data["initial"].items()}
    choice = {(m, q): frozenset(c) for m, q, c in data["choice"]}
    update = {(m, q): m2 for m, q, m2 in data["update"]}
    return Strategy(lambda q: init[q], lambda m, q: update[(m, q)],
                    lambda m, q: choice[(m, q)], data.get("name", "table"))


# ------------------------------------------------------------- outcomes

def outcomes(T: AltTransitionSystem, q0: int, f: Strategy, depth: int, cap: int = 200_000) -> list:
    """All outcome prefixes of length ``depth`` (Out^depth), as state tuples."""
    if depth < 1:
        raise ValueError("depth starts at 1")
    layer = [((q0,), f.init(q0))]
    for _ in range(depth - 1):
        nxt = []
        for run, m in layer:
            q = run[-1]
            targets = set()
            for a in f.choice(m, q):
                targets |= T.post(q, a)
            for q2 in sorted(targets):
                nxt.append((run + (q2,), f.update(m, q2)))
                if len(nxt) > cap:
                    raise OutcomeLimitError(f"more than {cap} outcome prefixes")
        layer = nxt
    return [run for run, _ in layer]


def outcome_lassos(T: AltTransitionSystem, q0: int, f: Strategy, cap: int = 200_000):
    """Yield (states, loop_start) for every simple lasso of the strategy's
    product graph from q0.  Every infinite outcome that violates an LTL
    property has a violating lasso among these when the property is
    decided by the product graph's paths."""
    count = 0
    stack = [((q0,), (f.init(q0),))]
    while stack:
        run, mems = stack.pop()
        q, m = run[-1], mems[-1]
        targets = set()
        for a in f.choice(m, q):
            targets |= T.post(q, a)
        if not targets:
            raise ValueError(f"state {q} has no successor under the strategy")
        index = {(s, mm): k for k, (s, mm) in enumerate(zip(run, mems))}
        for q2 in sorted(targets):
            m2 = f.update(m, q2)
            if (q2, m2) in index:
                count += 1
                if count > cap:
                    raise OutcomeLimitError(f"more than {cap} outcome lassos")
                yield run, index[(q2, m2)]
            else:
                stack.append((run + (q2,), mems + (m2,)))


# ------------------------------------------------------------ synthesis

def cpre_labels(T: AltTransitionSystem, S: np.ndarray) -> np.ndarray:
    """ok[q, a]: a is enabled at q and every successor of (q, a, b) lies in S."""
    S = np.asarray(S, dtype=bool)
    table = T.succ
    valid = table >= 0
    inside = np.where(valid, S[np.where(valid, table, 0)], True)
    ok = np.all(inside, axis=(2, 3))
    return ok & T.enabled


def cpre(T: AltTransitionSystem, S) -> np.ndarray:
    """Controllable predecessor of S as a boolean mask over states."""
    return np.any(cpre_labels(T, _mask(T, S)), axis=1)


def _mask(T: AltTransitionSystem, S) -> np.ndarray:
    S = np.asarray(S) if not isinstance(S, (set, frozenset)) else np.array(sorted(S), dtype=int)
    if S.dtype == bool:
        return S
    m = np.zeros(T.n_states, dtype=bool)
    m[S.astype(int)] = True
    return m


def state_truth(T: AltTransitionSystem, beta: Formula) -> np.ndarray:
    """Mask of states whose observation satisfies the state formula beta."""
    return lasso_values(beta, point_leaves(T.states), np.arange(T.n_states))


@dataclass
class ClauseSolution:
    clause: FragmentClause
    winning: np.ndarray
    rank: np.ndarray
    choice: list  # per state: frozenset of labels
    iterations: int


@dataclass
class WinningReport:
    winning: np.ndarray
    rank: np.ndarray
    strategy: Strategy
    clauses: list
    formula: Formula

    @property
    def winning_states(self) -> list:
        return [int(q) for q in np.nonzero(self.winning)[0]]

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("state,rank,labels\n")
        for q in range(len(self.winning)):
            m = self.strategy.init(q)
            labels = ";".join(str(a) for a in sorted(self.strategy.choice(m, q))) if self.winning[q] else ""
            buf.write(f"{q},{int(self.rank[q])},{labels}\n")
        return buf.getvalue()

    def to_dict(self, T: AltTransitionSystem) -> dict:
        return {
            "formula": to_text(self.formula),
            "winning": self.winning_states,
            "rank": [int(r) for r in self.rank],
            "strategy": self.strategy.explore(T, self.winning_states or [0]),
        }


def _solve_clause(T: AltTransitionSystem, clause: FragmentClause) -> ClauseSolution:
    n = T.n_states
    everything = frozenset(range(T.n_ctrl))

    def enabled_or_all(q):
        en = frozenset(int(a) for a in np.nonzero(T.enabled[q])[0])
        return en or everything

    choice = [enabled_or_all(q) for q in range(n)]
    rank = -np.ones(n, dtype=int)
    if clause.kind == "state":
        W = state_truth(T, clause.right)
        rank[W] = 0
        return ClauseSolution(clause, W, rank, choice, 0)
    b1 = state_truth(T, clause.left)
    b2 = state_truth(T, clause.right)
    if clause.kind == "until":
        W = b2.copy()
        rank[W] = 0
        k = 0
        while True:
            ok = cpre_labels(T, W)
            new = W | (b1 & np.any(ok, axis=1))
            added = new & ~W
            if not added.any():
                break
            k += 1
            for q in np.nonzero(added)[0]:
                rank[q] = k
                choice[q] = frozenset(int(a) for a in np.nonzero(ok[q])[0])
            W = new
        return ClauseSolution(clause, W, rank, choice, k)
    if clause.kind == "release":
        W = np.ones(n, dtype=bool)
        k = 0
        while True:
            ok = cpre_labels(T, W)
            new = b2 & (b1 | np.any(ok, axis=1))
            if np.array_equal(new, W):
                break
            W = new
            k += 1
        ok = cpre_labels(T, W)
        for q in np.nonzero(W)[0]:
            if b1[q]:
                rank[q] = 0
            else:
                rank[q] = 1
                choice[q] = frozenset(int(a) for a in np.nonzero(ok[q])[0])
        return ClauseSolution(clause, W, rank, choice, k)
    raise ValueError(f"unknown clause kind {clause.kind}")


def synthesize(T: AltTransitionSystem, psi: Formula) -> WinningReport:
    """Winning region and strategy for psi in the flat fragment
    beta | b1 U b2 | b1 R b2 and disjunctions of those.

    For a disjunction the strategy remembers which disjunct was winning at
    the initial state and follows that disjunct's rank strategy.
    """
    clauses = fragment(psi)
    sols = [_solve_clause(T, c) for c in clauses]
    W = np.zeros(T.n_states, dtype=bool)
    rank = -np.ones(T.n_states, dtype=int)
    for s in reversed(sols):
        W |= s.winning
        rank[s.winning] = s.rank[s.winning]

    def first_winning(q):
        for i, s in enumerate(sols):
            if s.winning[q]:
                return i
        return 0

    if len(sols) == 1:
        only = sols[0].choice
        strat = Strategy.memoryless(lambda q: only[q], "rank")
    else:
        strat = Strategy(first_winning, lambda m, q: m, lambda m, q: sols[m].choice[q], "rank-disjunctive")
    # ranks of disjunctive formulas are those of the disjunct the memory picks
    for q in range(T.n_states):
        if W[q]:
            rank[q] = sols[first_winning(q)].rank[q]
    return WinningReport(W, rank, strat, sols, psi)


# ---------------------------------------------------------- bisimulation

def post_tensor(T: AltTransitionSystem) -> np.ndarray:
    """P[q, a, q'] = q' reachable from q under a for some disturbance label."""
    table = T.succ
    P = np.zeros((T.n_states, T.n_ctrl, T.n_states), dtype=bool)
    q, a, b, k = np.nonzero(table >= 0)
    P[q, a, table[q, a, b, k]] = True
    return P


def _one_side(P1: np.ndarray, P2: np.ndarray, R: np.ndarray) -> np.ndarray:
    """ok[q1, q2]: for all a1 there is a2 such that every post2(q2, a2)
    successor is R-matched by some post1(q1, a1) successor."""
    n1, A1, _ = P1.shape
    n2, A2, _ = P2.shape
    matched = (P1.reshape(n1 * A1, n1).astype(np.float64) @ R.astype(np.float64)) > 0
    bad = ((~matched).astype(np.float64) @ P2.reshape(n2 * A2, n2).astype(np.float64).T) > 0
    good = ~bad.reshape(n1, A1, n2, A2)
    return np.all(np.any(good, axis=3), axis=1)


@dataclass
class BisimResult:
    relation: np.ndarray
    bisimilar: bool
    iterations: int

    @property
    def size(self) -> int:
        return int(self.relation.sum())


def observation_distance(T1: AltTransitionSystem, T2: AltTransitionSystem) -> np.ndarray:
    return np.max(np.abs(T1.states[:, None, :] - T2.states[None, :, :]), axis=2)


def check_bisim(T1: AltTransitionSystem, T2: AltTransitionSystem, eps: float) -> BisimResult:
    """Largest alternating eps-approximate bisimulation between T1 and T2."""
    P1, P2 = post_tensor(T1), post_tensor(T2)
    R = observation_distance(T1, T2) <= eps + GEOM_TOL
    it = 0
    while True:
        new = R & _one_side(P1, P2, R) & _one_side(P2, P1, R.T).T
        if np.array_equal(new, R):
            break
        R = new
        it += 1
    total = bool(R.any(axis=1).all() and R.any(axis=0).all())
    return BisimResult(R, total, it)


def is_bisimulation(T1: AltTransitionSystem, T2: AltTransitionSystem, eps: float, R: np.ndarray) -> bool:
    """Pairwise re-verification of conditions (i)-(iii) by direct enumeration."""
    D = observation_distance(T1, T2)
    for q1, q2 in zip(*np.nonzero(R)):
        if D[q1, q2] > eps + GEOM_TOL:
            return False
        for Ta, Tb, qa, qb, rel in ((T1, T2, q1, q2, R), (T2, T1, q2, q1, R.T)):
            for a1 in range(Ta.n_ctrl):
                if not any(all(any(rel[p, p2] for p in Ta.post(qa, a1)) for p2 in Tb.post(qb, a2))
                           for a2 in range(Tb.n_ctrl)):
                    return False
    return True


def transfer_strategy(T1: AltTransitionSystem, T2: AltTransitionSystem, R: np.ndarray,
                      q1: int, q2: int, f: Strategy) -> Strategy:
    """Strategy on T2 whose outcomes from q2 are pointwise R-matched by
    outcomes of f on T1 from q1.

    The memory is the set of (T1 state, f memory) ends of all f-outcome
    prefixes that are pointwise R-related to the observed T2 history.
    """
    R = np.asarray(R, dtype=bool)
    if not R[q1, q2]:
        raise ValueError(f"({q1}, {q2}) is not in the relation")
    all2 = frozenset(range(T2.n_ctrl))
    root = q2

    def init(q):
        if q != root:
            return frozenset()
        return frozenset({(q1, f.init(q1))})

    def update(M, q):
        out = set()
        for p, m in M:
            for a1 in f.choice(m, p):
                for p2 in T1.post(p, a1):
                    if R[p2, q]:
                        out.add((p2, f.update(m, p2)))
        return frozenset(out)

    def same_label(a1, a2):
        l1, l2 = T1.ctrl_labels[a1], T2.ctrl_labels[a2]
        return l1.shape == l2.shape and bool(np.all(np.abs(l1 - l2) <= GEOM_TOL))

    def choice(M, q):
        # one answer per label of f: the same label value when it matches,
        # otherwise the lowest-index enabled label that matches
        enabled = [a2 for a2 in range(T2.n_ctrl) if T2.enabled[q, a2]] or list(range(T2.n_ctrl))
        picked = set()
        for p, m in M:
            for a1 in f.choice(m, p):
                post1 = T1.post(p, a1)
                matches = [a2 for a2 in enabled
                           if all(any(R[p2, s] for p2 in post1) for s in T2.post(q, a2))]
                if matches:
                    same = [a2 for a2 in matches if same_label(a1, a2)]
                    picked.add(same[0] if same else matches[0])
        return frozenset(picked) or all2

    return Strategy(init, update, choice, f"transfer({f.name})")


# ------------------------------------------------ one-step transfer check

@dataclass
class OneStepReport:
    margins: list
    pairs: list
    worst: float

    @property
    def passed(self) -> bool:
        return self.worst >= 0


def _sample_signals(P, tau, N, rng, extra):
    sigs = [InputSignal.constant(v, tau, N) for v in P.vertices]
    for _ in range(extra):
        sigs.append(InputSignal(tau, P.sample(rng, N)))
    return sigs


def one_step_theorem1_check(T: Abstraction, eps: float | None = None, samples: int = 100,
                            seed: int = 0, signal_samples: int = 2) -> OneStepReport:
    """Sampled check of the one-step transfer conditions between the
    abstraction and the sampled plant for pairs (q, x) with |q - x| <= eps.

    (ii): for every control label a, the realized input u_a and each sampled
    disturbance v reach x' with some successor q' of (q, a, b) within eps.
    (iii): for each sampled input u, the label nearest to its zero-state
    response answers: every successor q' of (q, a, b) is matched by the
    realized disturbance for b.  The margin is eps minus the worst distance.
    """
    sys, p = T.sys, T.params
    eps = p.eps if eps is None else eps
    rng = np.random.default_rng(seed)
    N = p.substeps
    tau = p.tau
    Phi = T.Phi
    gu = substep_gains(sys.A, sys.B, tau, N)
    gv = substep_gains(sys.A, sys.G, tau, N)
    half = p.mu / 2
    u_real = [realize_point(gu, sys.U, a, half)[0] for a in T.ctrl_labels]
    v_real = [realize_point(gv, sys.V, b, half)[0] for b in T.dist_labels]
    resp_u = np.array([sum(M @ w for M, w in zip(gu, vals)) for vals in u_real])
    resp_v = np.array([sum(M @ w for M, w in zip(gv, vals)) for vals in v_real])
    margins, pairs = [], []
    attempts = 0
    while len(pairs) < samples:
        attempts += 1
        if attempts > 100 * samples:
            raise RuntimeError("could not sample eps-pairs inside X")
        q = int(rng.integers(T.n_states))
        x = T.states[q] + rng.uniform(-eps, eps, size=sys.n)
        if not sys.X.contains(x):
            continue
        free = Phi @ x
        v_sigs = _sample_signals(sys.V, tau, N, rng, signal_samples)
        v_resp = [sum(M @ w for M, w in zip(gv, s.values)) for s in v_sigs]
        worst = np.inf
        # condition (ii)
        for a in range(T.n_ctrl):
            for vr in v_resp:
                x2 = free + resp_u[a] + vr
                best = np.inf
                for b in range(T.n_dist):
                    for q2 in T.successors(q, a, b):
                        best = min(best, inf_norm(T.states[q2] - x2))
                worst = min(worst, eps - best)
        # condition (iii)
        u_sigs = _sample_signals(sys.U, tau, N, rng, signal_samples)
        for s in u_sigs:
            ur = sum(M @ w for M, w in zip(gu, s.values))
            a = int(np.argmin(np.max(np.abs(T.ctrl_labels - ur), axis=1)))
            for b in range(T.n_dist):
                for q2 in T.successors(q, a, b):
                    d = min(inf_norm(T.states[q2] - (free + ur + resp_v[bb])) for bb in range(T.n_dist))
                    worst = min(worst, eps - d)
        margins.append(float(worst))
        pairs.append((q, x))
    return OneStepReport(margins, pairs, float(min(margins)))
