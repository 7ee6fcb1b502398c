"""Acceptance suite: one test per criterion, each printing a pass/fail line
in the terminal summary (see conftest.pytest_terminal_summary)."""
import time
from dataclasses import replace

import numpy as np
import pytest
from scipy.spatial import ConvexHull

from conftest import ACCEPTANCE_LINES
from distsynth.abstraction import AltTransitionSystem, build_abstraction, reach_polytope, suggest_params
from distsynth.cli import counterexample_report
from distsynth.fixtures import (
    PLANAR_PARAMS, S1_PROPS, planar_counterexample_system, random_planar_hurwitz, s1_coarse_params,
)
from distsynth.game import (
    Strategy, check_bisim, is_bisimulation, one_step_theorem1_check, outcome_lassos, outcomes,
    state_truth, synthesize, transfer_strategy,
)
from distsynth.logic.continuous import eval_segments, extract_word, merge_segments, segments
from distsynth.logic.formula import Atom, Or, Until, map_atoms, radii, shape, tr_delta, tr_eps
from distsynth.logic.semantics import LassoWord, eval_discrete, eval_letters
from distsynth.numerics import GEOM_TOL, grid_points
from distsynth.plant import InputSignal, delta_bound, dense_simulate
from distsynth.runtime import DisturbanceGenerator, derive_controller, run_closed_loop, verdict
from gen import random_flat_spec, random_formula, random_props, random_segments
from oracles import game_oracle, matched_by_outcome, random_ats

PLANAR_EPS = 0.5
N_PLANAR = 5


def report(number: int, title: str, ok: bool, elapsed: float, limit: float, detail: str) -> None:
    passed = ok and elapsed < limit
    tag = "PASS" if passed else "FAIL"
    ACCEPTANCE_LINES.append(f"[{tag}] {number}. {title}: {detail} ({elapsed:.1f} s, limit {limit:.0f} s)")
    assert ok, detail
    assert elapsed < limit, f"took {elapsed:.1f} s, limit {limit} s"


@pytest.fixture(scope="module")
def planar_cases():
    """Five random stable planar plants whose suggested parameters certify
    and whose abstraction is non-blocking (blocking draws are skipped)."""
    rng = np.random.default_rng(2024)
    cases, draws = [], 0
    start = time.perf_counter()
    while len(cases) < N_PLANAR:
        draws += 1
        sys = random_planar_hurwitz(rng)
        try:
            T = build_abstraction(sys, suggest_params(sys, PLANAR_EPS))
        except ValueError:
            continue
        if T.non_blocking:
            cases.append((sys, T))
    return cases, draws, time.perf_counter() - start


# ----------------------------------------------------------------- 1
def test_one_step_certification(s1_abstraction, planar_cases):
    start = time.perf_counter()
    cases, draws, build_time = planar_cases
    systems = [s1_abstraction] + [T for _, T in cases]
    worst = []
    for k, T in enumerate(systems):
        rep = one_step_theorem1_check(T, samples=100, seed=k)
        assert len(rep.margins) >= 100
        worst.append(rep.worst)
    elapsed = time.perf_counter() - start + build_time
    ok = min(worst) >= 0
    report(1, "one-step certification", ok, elapsed, 60,
           f"{len(systems)} systems x 100 pairs, min margin {min(worst):.4g} "
           f"({draws} planar draws for {N_PLANAR} non-blocking)")


# ----------------------------------------------------------------- 2
def reach_samples(R, mu: float) -> np.ndarray:
    """Vertices, dense boundary points and an interior grid of R."""
    V = R.vertices
    parts = [V, grid_points(R, mu / 10)]
    if R.dim == 2 and R.full_dimensional:
        for i, j in ConvexHull(V).simplices:
            n = max(2, int(np.ceil(np.max(np.abs(V[j] - V[i])) / (mu / 100))) + 1)
            s = np.linspace(0.0, 1.0, n)[:, None]
            parts.append(V[i] + s * (V[j] - V[i]))
    return np.vstack([p for p in parts if len(p)])


def label_distance(labels: np.ndarray, R, samples: np.ndarray) -> float:
    to_reach = max(R.distance(a) for a in labels)
    to_labels = np.max(np.min(np.max(np.abs(samples[:, None, :] - labels[None]), axis=2), axis=1))
    return float(max(to_reach, to_labels))


def test_label_set_contract(s1, s1_abstraction, planar_cases):
    start = time.perf_counter()
    fixtures = [(s1, s1_abstraction), (s1, build_abstraction(s1, s1_coarse_params())),
                (planar_counterexample_system(), build_abstraction(planar_counterexample_system(), PLANAR_PARAMS))]
    fixtures += planar_cases[0]
    worst_slack, checked, failures = np.inf, 0, []
    for sys, T in fixtures:
        p = T.params
        for which, L in (("control", T.ctrl), ("disturbance", T.dist)):
            fine = reach_polytope(sys, p.tau, which, 10 * p.substeps)
            d = label_distance(L.points, fine, reach_samples(fine, p.mu))
            bound = p.mu / 2 + L.quad_error
            worst_slack = min(worst_slack, bound - d)
            checked += 1
            if d > bound + GEOM_TOL:
                failures.append((which, d, bound))
    elapsed = time.perf_counter() - start
    report(2, "label-set contract", not failures, elapsed, 30,
           f"{checked} label sets, min slack {worst_slack:.3g}, failures {failures}")


# ----------------------------------------------------------------- 3
def test_transform_identities():
    start = time.perf_counter()
    rng = np.random.default_rng(303)
    bad = 0
    for _ in range(200):
        props = random_props(rng, 3, 2)
        phi = random_formula(rng, props, int(rng.integers(0, 5)))
        delta, eps = float(rng.uniform(0.01, 1.0)), float(rng.uniform(0.01, 1.0))
        out = tr_eps(tr_delta(phi, delta), eps)
        expected = map_atoms(phi, lambda a: replace(a, radius=delta + eps))
        bad += not (shape(out) == shape(phi) and radii(out) == {delta + eps} and out == expected)
    elapsed = time.perf_counter() - start
    report(3, "transform identities", bad == 0, elapsed, 5, f"200 formulas, {bad} mismatches")


# ----------------------------------------------------------------- 4
def test_close_lassos_transfer_satisfaction():
    start = time.perf_counter()
    rng = np.random.default_rng(404)
    violations = premises = 0
    for _ in range(500):
        props = random_props(rng, 3, 2)
        delta, eps = float(rng.uniform(0.02, 0.3)), float(rng.uniform(0.02, 0.3))
        psi = random_flat_spec(rng, props, radius=delta)
        P, C = int(rng.integers(0, 4)), int(rng.integers(1, 4))
        pts1 = rng.uniform(-1, 1, size=(P + C, 2))
        pts2 = pts1 + rng.uniform(-eps, eps, size=pts1.shape)
        s1, s2 = LassoWord.from_sequence(pts1, P), LassoWord.from_sequence(pts2, P)
        if eval_discrete(s2, tr_eps(psi, eps)):
            premises += 1
            violations += not eval_discrete(s1, psi)
    elapsed = time.perf_counter() - start
    report(4, "close-word transfer", violations == 0 and premises > 0, elapsed, 30,
           f"500 pairs, {premises} with the inflated premise true, {violations} violations")


# ----------------------------------------------------------------- 5
def oracle_winning(T, psi) -> set:
    clauses = [psi.left, psi.right] if isinstance(psi, Or) else [psi]
    out = set()
    for c in clauses:
        kind = "until" if isinstance(c, Until) else "release"
        out |= game_oracle(T, kind, state_truth(T, c.left), state_truth(T, c.right))
    return out


def test_synthesis_against_oracle():
    start = time.perf_counter()
    rng = np.random.default_rng(505)
    mismatches = unsound = lassos = 0
    for _ in range(200):
        n = int(rng.integers(1, 7))
        T = random_ats(rng, n, int(rng.integers(1, 4)), int(rng.integers(1, 3)), blocking=0.15)
        psi = random_flat_spec(rng, random_props(rng, 2, 1))
        rep = synthesize(T, psi)
        mismatches += set(rep.winning_states) != oracle_winning(T, psi)
        for q in rep.winning_states:
            for run, loop in outcome_lassos(T, q, rep.strategy):
                lassos += 1
                unsound += not eval_discrete(LassoWord.from_sequence(T.states[list(run)], loop), psi)
    elapsed = time.perf_counter() - start
    report(5, "synthesis vs oracle", mismatches == 0 and unsound == 0, elapsed, 60,
           f"200 systems, {mismatches} winning-set mismatches, {unsound}/{lassos} unsound lassos")


# ----------------------------------------------------------------- 6
def perturbed_copy(rng, T, eps):
    states = T.states + rng.uniform(-eps / 2, eps / 2, size=T.states.shape)
    return AltTransitionSystem(states, T.ctrl_labels, T.dist_labels, T.succ)


def random_memoryless(rng, T):
    table = {q: frozenset(int(a) for a in rng.choice(T.n_ctrl, int(rng.integers(1, T.n_ctrl + 1)),
                                                       replace=False))
             for q in range(T.n_states)}
    return Strategy.memoryless(table.__getitem__)


def test_bisimulation_checker_and_transfer():
    start = time.perf_counter()
    rng = np.random.default_rng(606)
    not_bisim = not_greatest = unmatched = runs = 0
    for k in range(50):
        T1 = random_ats(rng, int(rng.integers(2, 5)), 2, 2)
        eps = float(rng.uniform(0.3, 1.5))
        T2 = perturbed_copy(rng, T1, eps) if k % 2 else random_ats(rng, int(rng.integers(2, 5)), 2, 2)
        R = check_bisim(T1, T2, eps).relation
        not_bisim += not is_bisimulation(T1, T2, eps, R)
        # greatest: putting back any deleted ε-close pair must break a condition
        close = np.max(np.abs(T1.states[:, None, :] - T2.states[None]), axis=2) <= eps + GEOM_TOL
        for p, q in zip(*np.nonzero(close & ~R)):
            bigger = R.copy()
            bigger[p, q] = True
            not_greatest += is_bisimulation(T1, T2, eps, bigger)
        f = random_memoryless(rng, T1)
        for q1, q2 in zip(*np.nonzero(R)):
            g = transfer_strategy(T1, T2, R, int(q1), int(q2), f)
            for run in outcomes(T2, int(q2), g, 6):
                runs += 1
                unmatched += not matched_by_outcome(T1, int(q1), f, run, lambda p, s: R[p, s])
    elapsed = time.perf_counter() - start
    ok = not_bisim == 0 and not_greatest == 0 and unmatched == 0 and runs > 0
    report(6, "bisimulation checker", ok, elapsed, 60,
           f"50 pairs, {not_bisim} invalid relations, {not_greatest} non-maximal, "
           f"{unmatched}/{runs} unmatched depth-6 outcomes")


# ----------------------------------------------------------------- 7
def test_end_to_end_scalar_fixture(s1, s1_abstraction, s1_phi0, s1_synthesis):
    start = time.perf_counter()
    T, rep = s1_abstraction, s1_synthesis
    p = T.params
    delta = delta_bound(s1, p.tau)
    assert rep.winning_states
    q0 = max(rep.winning_states, key=lambda q: (rep.rank[q], -q))
    ctrl = derive_controller(s1, T, q0, rep.strategy)
    rng = np.random.default_rng(707)
    failures = {"distance": 0, "deviation": 0, "boxes": 0}
    worst_dist = worst_dev = 0.0
    for kind in ("uniform", "adversarial"):
        for i in range(100):
            while True:
                x0 = T.states[q0] + rng.uniform(-p.eps, p.eps, size=1)
                if s1.X.contains(x0):
                    break
            run = run_closed_loop(ctrl, s1, x0, DisturbanceGenerator(kind, seed=i), 40)
            v = verdict(run, s1_phi0, delta, p.eps)
            worst_dist, worst_dev = max(worst_dist, run.max_distance), max(worst_dev, run.max_deviation)
            failures["distance"] += run.max_distance > p.eps + GEOM_TOL
            failures["deviation"] += run.max_deviation > delta
            failures["boxes"] += not v.all_true
    elapsed = time.perf_counter() - start
    report(7, "end-to-end scalar fixture", not any(failures.values()), elapsed, 120,
           f"|W| = {len(rep.winning_states)}, 200 runs, max distance {worst_dist:.4f} <= eps {p.eps}, "
           f"max deviation {worst_dev:.4f} <= delta {delta:.4f}, failures {failures}")


# ----------------------------------------------------------------- 8
def random_trajectory(rng, sys, tau):
    periods = int(rng.integers(2, 9))
    u = InputSignal(periods * tau, rng.uniform(-1, 1, size=(4 * periods, 1)))
    v = InputSignal(periods * tau, rng.uniform(-0.1, 0.1, size=(4 * periods, 1)))
    return dense_simulate(sys, rng.uniform(-2, 2, size=1), u, v, dense_substeps=64 * periods)


def test_word_extraction(s1, s1_abstraction):
    start = time.perf_counter()
    rng = np.random.default_rng(808)
    tau = s1_abstraction.params.tau
    base = [Atom(n, c, d) for n, (c, d) in S1_PROPS.items()]
    props = {n: (c, d) for n, (c, d) in S1_PROPS.items()}
    changed = disagree = words = 0
    for _ in range(100):
        traj = random_trajectory(rng, s1, tau)
        extra = {f"r{j}": ((float(rng.choice([-1.0, 1.0])),), float(rng.uniform(-1.5, 1.5))) for j in range(2)}
        atoms = base + [Atom(n, c, d) for n, (c, d) in extra.items()]
        a = extract_word(traj, atoms, tau)
        b = extract_word(traj.refined(2), atoms, tau)
        changed += a.letters != b.letters or not np.allclose(a.times, b.times, atol=1e-7)
        segs = segments(traj, atoms, tau)
        letters, _ = merge_segments(segs)
        for _ in range(10):
            phi = random_formula(rng, {**props, **extra}, 3)
            words += 1
            disagree += bool(eval_segments(segs, phi)[0]) != eval_letters(letters, phi, stabilized=True)
    names = ("a", "b", "c")
    scalar = {n: ((1.0,), 0.0) for n in names}
    for _ in range(1000):
        segs = random_segments(rng, names, int(rng.integers(1, 6)))
        phi = random_formula(rng, scalar, 3)
        words += 1
        disagree += bool(eval_segments(segs, phi)[0]) != eval_letters(merge_segments(segs)[0], phi, stabilized=True)
    elapsed = time.perf_counter() - start
    report(8, "word extraction", changed == 0 and disagree == 0, elapsed, 60,
           f"100 trajectories, {changed} changed by refinement, {disagree}/{words} evaluator disagreements")


# ----------------------------------------------------------------- 9
def test_counterexample_reproduction():
    start = time.perf_counter()
    tp1, tp2 = counterexample_report("tp1"), counterexample_report("tp2")
    ok = (tp1["gap_reproduced"] and tp1["winning_states"] == 0 and tp1["witness_satisfies"] is True
          and tp2["gap_reproduced"] and tp2["q0_winning"] and tp2["continuous_satisfies"] is False)
    elapsed = time.perf_counter() - start
    report(9, "counterexample reproduction", ok, elapsed, 60,
           f"tp1: |W| = {tp1['winning_states']} with witness {tp1['witness_satisfies']}; "
           f"tp2: abstract run {tp2['abstract_run_satisfies']}, continuous {tp2['continuous_satisfies']}")
