"""Grid size, certification margin and winning-set size of the scalar
fixture across a range of precisions eps."""
import argparse
import csv
import sys as _sys
import time

from distsynth.abstraction import build_abstraction, suggest_params
from distsynth.fixtures import S1_PROPS, S1_SPEC, s1_system
from distsynth.game import synthesize
from distsynth.logic.formula import parse, tr_delta, tr_eps


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--eps", type=float, nargs="+", default=[0.1, 0.15, 0.2, 0.3, 0.5, 0.8])
    args = ap.parse_args()

    plant = s1_system()
    phi0 = parse(S1_SPEC, S1_PROPS)
    out = csv.writer(_sys.stdout)
    out.writerow(["eps", "tau", "eta", "mu", "delta", "states", "ctrl", "dist", "margin", "winning", "seconds"])
    for eps in args.eps:
        t0 = time.perf_counter()
        p = suggest_params(plant, eps)
        T = build_abstraction(plant, p)
        rep = synthesize(T, tr_eps(tr_delta(phi0, p.delta), p.eps))
        s = T.summary()
        out.writerow([eps, f"{p.tau:.5f}", p.eta, p.mu, f"{p.delta:.4f}", T.n_states, T.n_ctrl, T.n_dist,
                      f"{s['certification_margin']:.4g}", len(rep.winning_states),
                      f"{time.perf_counter() - t0:.2f}"])


if __name__ == "__main__":
    main()
