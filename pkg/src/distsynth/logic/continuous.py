"""Continuous-time satisfaction: tipping points, timed words, verdicts.

A trajectory with finitely many tipping points splits time into segments
that alternate between single instants (the tipping points, plus t = 0) and
open intervals.  The proposition set is constant on every segment; merging
neighbouring segments with the same set gives the word of the trajectory.
At a tipping point the crossing proposition is false because the
half-spaces are open.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from ..plant import DenseTrajectory
from .formula import Atom, Formula, Release, Until, And, Or, propositions, radii
from .semantics import eval_letters

TIP_TOL_FACTOR = 1e-9
MAX_TIPS = 10_000


class ZenoError(RuntimeError):
    """Too many tipping points inside one sampling window."""


@dataclass(frozen=True)
class Tip:
    time: float
    crossing: frozenset


@dataclass(frozen=True)
class Segment:
    kind: str  # "point" or "open"
    start: float
    end: float
    letter: frozenset


@dataclass(frozen=True)
class TimedWord:
    letters: tuple
    times: tuple
    stabilized: bool
    names: tuple
    horizon: float = float("inf")

    def __post_init__(self):
        for a, b in zip(self.letters, self.letters[1:]):
            if a == b:
                raise ValueError("consecutive letters of a timed word must differ")

    def __len__(self) -> int:
        return len(self.letters)

    def mask(self, letter: frozenset) -> int:
        return sum(1 << j for j, name in enumerate(self.names) if name in letter)

    def to_csv(self) -> str:
        lines = ["time,letter"]
        lines += [f"{t!r},{self.mask(L)}" for t, L in zip(self.times, self.letters)]
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class Verdict:
    """Three-valued verdict plus the value obtained if the last letter persists."""

    value: bool | None
    tail_value: bool

    @property
    def conclusive(self) -> bool:
        return self.value is not None

    def __str__(self) -> str:
        if self.conclusive:
            return "true" if self.value else "false"
        return f"inconclusive ({'true' if self.tail_value else 'false'} if the last letter persists)"


def _props(items: Iterable[Atom]) -> list:
    seen = {}
    for a in items:
        seen.setdefault(a.name, a.proposition)
    return [seen[k] for k in sorted(seen)]


def _tips(traj: DenseTrajectory, props: Sequence[Atom], tip_tol: float) -> list:
    if len(traj.times) < 2 or not props:
        return []
    C = np.array([p.c for p in props])
    d = np.array([p.d for p in props])
    G = traj.states @ C.T + d
    inside = G < 0
    raw = []
    for j, p in enumerate(props):
        c = C[j]
        change = np.nonzero(inside[:-1, j] != inside[1:, j])[0]
        for k in change:
            if G[k, j] == 0.0:
                raw.append((float(traj.times[k]), p.name))
                continue
            if G[k + 1, j] == 0.0:
                raw.append((float(traj.times[k + 1]), p.name))
                continue
            lo, hi = float(traj.times[k]), float(traj.times[k + 1])
            side = bool(inside[k, j])
            while hi - lo > tip_tol:
                mid = 0.5 * (lo + hi)
                if (float(c @ traj.state_at(mid)) + d[j] < 0) == side:
                    lo = mid
                else:
                    hi = mid
            raw.append((0.5 * (lo + hi), p.name))
    raw.sort()
    merged = []
    for t, name in raw:
        if merged and t - merged[-1][1] <= tip_tol:
            merged[-1][2].add(name)
            merged[-1][1] = t
        else:
            merged.append([t, t, {name}])
    return [Tip(first, frozenset(names)) for first, _, names in merged]


def _check_zeno(times: list, window: float, max_tips: int):
    if len(times) <= max_tips:
        return
    arr = np.asarray(times)
    counts = np.searchsorted(arr, arr + window, side="right") - np.arange(len(arr))
    if np.max(counts) > max_tips:
        raise ZenoError(f"more than {max_tips} tipping points within a window of {window}")


def tipping_points(traj: DenseTrajectory, atoms: Iterable[Atom], tau: float | None = None,
                   max_tips: int = MAX_TIPS) -> list:
    """Sorted distinct times where the proposition set changes.

    Sign changes on the dense samples are refined by bisection on the exact
    state to tip_tol = 1e-9 * tau (tau defaults to the horizon).  Tangential
    touches strictly between samples are not detected.
    """
    window = tau if tau is not None else max(traj.horizon, 1.0)
    tips = _tips(traj, _props(atoms), TIP_TOL_FACTOR * window)
    times = [t.time for t in tips]
    _check_zeno(times, window, max_tips)
    return times


def _letter(props: Sequence[Atom], x: np.ndarray, crossing: frozenset = frozenset()) -> frozenset:
    return frozenset(p.name for p in props
                     if p.name not in crossing and float(np.dot(p.c, x)) + p.d < 0)


def segments(traj: DenseTrajectory, atoms: Iterable[Atom], tau: float | None = None,
             max_tips: int = MAX_TIPS) -> list:
    """Alternating point/open segments with their proposition sets."""
    props = _props(atoms)
    window = tau if tau is not None else max(traj.horizon, 1.0)
    tol = TIP_TOL_FACTOR * window
    tips = _tips(traj, props, tol)
    _check_zeno([t.time for t in tips], window, max_tips)
    start = frozenset()
    if tips and tips[0].time <= tol:
        start = tips[0].crossing
        tips = tips[1:]
    points = [(0.0, start)] + [(t.time, t.crossing) for t in tips]
    H = traj.horizon
    out = []
    for idx, (t, crossing) in enumerate(points):
        out.append(Segment("point", t, t, _letter(props, traj.state_at(t), crossing)))
        end = points[idx + 1][0] if idx + 1 < len(points) else H
        if end - t > tol:
            mid = 0.5 * (t + end)
            out.append(Segment("open", t, end, _letter(props, traj.state_at(mid))))
    return out


def merge_segments(segs: Sequence[Segment]) -> tuple:
    """(letters, representative times) of the runs of equal letters."""
    letters, times = [], []
    for s in segs:
        if letters and letters[-1] == s.letter:
            continue
        letters.append(s.letter)
        times.append(s.start if s.kind == "point" else 0.5 * (s.start + s.end))
    return tuple(letters), tuple(times)


def _is_constant(traj: DenseTrajectory) -> bool:
    return bool(np.all(traj.states == traj.states[0]))


def extract_word(traj: DenseTrajectory, atoms: Iterable[Atom], tau: float | None = None,
                 stabilized: bool | None = None, max_tips: int = MAX_TIPS) -> TimedWord:
    """Word of the trajectory over the given propositions.

    ``stabilized`` says whether the final letter is known to persist forever;
    by default only a trajectory that does not move at all is treated so.
    """
    props = _props(atoms)
    segs = segments(traj, props, tau, max_tips)
    letters, times = merge_segments(segs)
    if stabilized is None:
        stabilized = _is_constant(traj)
    return TimedWord(letters, times, bool(stabilized), tuple(p.name for p in props), traj.horizon)


def eval_continuous(traj: DenseTrajectory, phi: Formula, tau: float | None = None,
                    stabilized: bool | None = None) -> Verdict:
    """x |= phi via the word of x; three-valued when the horizon truncates."""
    if any(r != 0 for r in radii(phi)):
        raise ValueError("continuous satisfaction is defined for radius-0 formulas")
    word = extract_word(traj, propositions(phi).values(), tau, stabilized)
    value = eval_letters(word.letters, phi, stabilized=word.stabilized)
    tail = eval_letters(word.letters, phi, stabilized=True)
    return Verdict(value, bool(tail))


def eval_segments(segs: Sequence[Segment], phi: Formula) -> np.ndarray:
    """Truth of phi on every segment, straight from the trajectory clauses
    (5-a)/(5-b) and (6-a)/(6-b), with the last (open) segment lasting forever.

    Used to cross-check word-based evaluation.
    """
    if not segs or segs[-1].kind != "open":
        raise ValueError("segment list must end with an open segment")
    m = len(segs)
    point = np.array([s.kind == "point" for s in segs])
    if isinstance(phi, Atom):
        if phi.radius != 0:
            raise ValueError("segments carry membership only")
        inside = np.array([phi.name in s.letter for s in segs])
        return ~inside if phi.negated else inside
    f1 = eval_segments(segs, phi.left)
    f2 = eval_segments(segs, phi.right)
    if isinstance(phi, And):
        return f1 & f2
    if isinstance(phi, Or):
        return f1 | f2
    out = np.zeros(m, dtype=bool)
    for i in range(m):
        if isinstance(phi, Until):
            ok = bool(f2[i])
            for j in range(i, m):
                if ok:
                    break
                # (5-a): phi2 at instant t1 in S_j, phi1 on [t, t1)
                if j > i:
                    if point[j] and f1[i:j].all() and f2[j]:
                        ok = True
                    if not point[j] and f1[i:j + 1].all() and f2[j]:
                        ok = True
                # (5-b): phi1 on [t, t1] with t1 in S_j, phi2 right after t1
                if f1[i:j + 1].all():
                    nxt = j + 1 if point[j] else j
                    if nxt < m and f2[nxt]:
                        ok = True
            out[i] = ok
        elif isinstance(phi, Release):
            ok = bool(f2[i])
            for j in range(i + 1, m):
                if not ok:
                    break
                # (6-a): phi2 fails at t1 in S_j; phi1 needed in [t, t1)
                if not f2[j]:
                    hi = j if point[j] else j + 1
                    ok = bool(f1[i:hi].any())
            for j in range(i, m):
                if not ok:
                    break
                # (6-b): phi2 fails on (t1, t2] right after t1 in S_j
                nxt = j + 1 if point[j] else j
                if nxt < m and not f2[nxt]:
                    ok = bool(f1[i:j + 1].any())
            out[i] = ok
        else:
            raise TypeError(f"not a formula: {phi!r}")
    return out
