"""Abstraction, synthesis and closed-loop simulation on the scalar fixture.

    python3 scripts/run_s1_pipeline.py --runs 20 --disturbance adversarial
"""
import argparse
import time

import numpy as np

from distsynth.abstraction import build_abstraction
from distsynth.fixtures import S1_PROPS, S1_SPEC, s1_params, s1_system
from distsynth.game import synthesize
from distsynth.logic.formula import parse, tr_delta, tr_eps
from distsynth.runtime import DisturbanceGenerator, derive_controller, run_closed_loop, verdict


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--runs", type=int, default=20)
    ap.add_argument("--steps", type=int, default=40)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--disturbance", choices=DisturbanceGenerator.KINDS, default="uniform")
    args = ap.parse_args()

    sys = s1_system()
    params = s1_params(sys)
    t0 = time.perf_counter()
    T = build_abstraction(sys, params)
    print(f"abstraction: {T.summary()}  ({time.perf_counter() - t0:.2f} s)")

    phi0 = parse(S1_SPEC, S1_PROPS)
    psi = tr_eps(tr_delta(phi0, params.delta), params.eps)
    rep = synthesize(T, psi)
    print(f"synthesis: |W| = {len(rep.winning_states)} of {T.n_states}")
    if not rep.winning_states:
        return 1

    q0 = max(rep.winning_states, key=lambda q: (rep.rank[q], -q))
    ctrl = derive_controller(sys, T, q0, rep.strategy)
    rng = np.random.default_rng(args.seed)
    satisfied = 0
    for i in range(args.runs):
        x0 = np.clip(T.states[q0] + rng.uniform(-params.eps, params.eps, size=1), -2.0, 2.0)
        run = run_closed_loop(ctrl, sys, x0, DisturbanceGenerator(args.disturbance, seed=i), args.steps)
        v = verdict(run, phi0, params.delta, params.eps)
        satisfied += v.all_true
        print(f"run {i:3d}: x0 = {x0[0]:+.4f}  distance {run.max_distance:.4f}  "
              f"deviation {run.max_deviation:.4f}  boxes {'ok' if v.all_true else v.to_dict()}")
    print(f"{satisfied}/{args.runs} runs with all verdict boxes true")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
