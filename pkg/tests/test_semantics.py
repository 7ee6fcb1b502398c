import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from distsynth.logic.formula import Atom, Release, Until, map_atoms, parse, tr_delta, tr_eps
from distsynth.logic.semantics import (
    LassoWord, eval_discrete, eval_letters, eval_prefix, marginal_positions,
)
from gen import random_formula, random_props
from oracles import brute_eval

P = Atom("p", (1.0,), -1.0)      # x < 1
Q = Atom("q", (-1.0,), 2.0)      # x > 2


def test_constant_word_satisfies_p():
    assert eval_discrete(LassoWord([], [[0.0]]), P)


def test_until_witness_at_second_position():
    sigma = LassoWord([[0.0]], [[3.0]])
    assert eval_discrete(sigma, Until(P, Q))
    assert not eval_discrete(sigma, Until(Q, P), 2)


def test_release_on_lasso():
    # q R p: p must hold until (and including) a q that releases it
    sigma = LassoWord([[0.0], [0.5]], [[0.2]])
    assert eval_discrete(sigma, Release(Q, P))
    assert not eval_discrete(LassoWord([[0.0]], [[1.5]]), Release(Q, P))


def test_lasso_indexing():
    w = LassoWord.from_sequence([[0.0], [1.0], [2.0]], 1)
    assert [w[i][0] for i in range(1, 7)] == [0.0, 1.0, 2.0, 1.0, 2.0, 1.0]
    with pytest.raises(ValueError):
        w.canonical(0)
    with pytest.raises(ValueError):
        LassoWord([[0.0]], np.zeros((0, 1)))


def test_random_lassos_match_brute_force():
    rng = np.random.default_rng(11)
    mismatches = 0
    for _ in range(400):
        props = random_props(rng, 3, 2)
        phi = random_formula(rng, props, 4, radius=float(rng.choice([0.0, 0.1])))
        P_len, C_len = int(rng.integers(0, 4)), int(rng.integers(1, 4))
        pts = rng.uniform(-1, 1, size=(P_len + C_len, 2))
        sigma = LassoWord.from_sequence(pts, P_len)
        for i in (1, 2, P_len + C_len + 1):
            mismatches += eval_discrete(sigma, phi, i) != brute_eval(pts, P_len, phi, i)
    assert mismatches == 0


def test_prefix_verdicts_are_sound_for_every_continuation():
    rng = np.random.default_rng(5)
    for _ in range(300):
        props = random_props(rng, 2, 1)
        phi = random_formula(rng, props, 3)
        prefix = rng.uniform(-1, 1, size=(int(rng.integers(1, 5)), 1))
        v = eval_prefix(prefix, phi)
        if v is None:
            continue
        for _ in range(5):
            tail = rng.uniform(-1, 1, size=(int(rng.integers(1, 4)), 1))
            word = LassoWord.from_sequence(np.vstack([prefix, tail]), len(prefix))
            assert eval_discrete(word, phi) == v


def test_prefix_unknown_tail():
    assert eval_prefix([[0.0], [0.0]], Until(P, Q)) is None
    assert eval_prefix([[0.0], [3.0]], Until(P, Q)) is True
    assert eval_prefix([[1.5]], Until(P, Q)) is False
    assert eval_prefix([[5.0]], Until(P, Q)) is True
    assert eval_prefix([[0.0]], Release(Q, P)) is None
    assert eval_prefix([[0.0], [1.5]], Release(Q, P)) is False


def test_eval_letters_stabilized_and_truncated():
    p = Atom("p", (1.0,), 0.0)
    notp = Atom("p", (1.0,), 0.0, True)
    letters = [frozenset({"p"}), frozenset()]
    assert eval_letters(letters, Until(p, notp), stabilized=True) is True
    assert eval_letters(letters, Until(p, notp), stabilized=False) is True
    assert eval_letters(letters[:1], Until(p, notp), stabilized=False) is None
    assert eval_letters(letters[:1], Until(p, notp), stabilized=True) is False
    with pytest.raises(ValueError):
        eval_letters(letters, tr_delta(p, 0.1), stabilized=True)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.01, 0.3), st.floats(0.0, 0.3))
def test_satisfaction_monotone_in_radius(seed, r1, extra):
    rng = np.random.default_rng(seed)
    props = random_props(rng, 3, 2)
    phi = random_formula(rng, props, 3)
    pts = rng.uniform(-1, 1, size=(4, 2))
    sigma = LassoWord.from_sequence(pts, int(rng.integers(0, 4)))
    small = tr_delta(phi, r1)
    if extra > 0:
        big = tr_eps(small, extra)
        if eval_discrete(sigma, big):
            assert eval_discrete(sigma, small)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10_000))
def test_close_words_transfer_inflated_satisfaction(seed):
    rng = np.random.default_rng(seed)
    eps, delta = 0.2, 0.1
    props = random_props(rng, 3, 2)
    psi = tr_delta(random_formula(rng, props, 3), delta)
    pts = rng.uniform(-1, 1, size=(5, 2))
    near = pts + rng.uniform(-eps, eps, size=pts.shape)
    loop = int(rng.integers(0, 5))
    s1, s2 = LassoWord.from_sequence(pts, loop), LassoWord.from_sequence(near, loop)
    if eval_discrete(s2, tr_eps(psi, eps)):
        assert eval_discrete(s1, psi)


def test_marginal_positions():
    phi = parse("p", {"p": ((1.0,), -1.0)})
    assert marginal_positions([[0.0], [1.0], [1.0 + 1e-12]], phi) == [1, 2]
    assert marginal_positions([[0.0]], map_atoms(phi, lambda a: a)) == []
