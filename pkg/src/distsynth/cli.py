"""Command line pipeline: abstract, synth, simulate, check-bisim, counterexample.

Set DISTSYNTH_LOG=DEBUG (or INFO, WARNING, ...) to change the log level.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from .abstraction import (AbstractionParams, AltTransitionSystem, CertificationError, abstraction_from_dict,
                          build_abstraction, check_params)
from .fixtures import (PLANAR_PARAMS, planar_counterexample_system, tp1_fixture, tp2_fixture)
from .game import strategy_from_table, synthesize
from .logic.continuous import eval_continuous
from .logic.formula import FormulaSyntaxError, UnboundPropositionError, parse, to_text, tr_delta, tr_eps
from .logic.semantics import eval_prefix
from .plant import InputSignal, LinearSystem, UnstableSystemError, check_stability, delta_bound, dense_simulate
from .runtime import DisturbanceGenerator, MatcherFault, derive_controller, run_closed_loop, verdict

log = logging.getLogger("distsynth")

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_INPUT = 0, 1, 2, 3


class ProjectError(ValueError):
    pass


def atomic_write(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dumps(data) -> str:
    return json.dumps(data, sort_keys=True, indent=1) + "\n"


# ------------------------------------------------------------- project

def load_project(path) -> dict:
    """Read and validate a project file: plant, params, propositions, spec."""
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ProjectError(f"cannot read project {path}: {exc}") from None
    for key in ("plant", "propositions", "spec"):
        if key not in data:
            raise ProjectError(f"project is missing the {key!r} block")
    try:
        plant = LinearSystem.from_dict(data["plant"])
    except (KeyError, ValueError) as exc:
        raise ProjectError(f"invalid plant: {exc}") from None
    props = {}
    for name, hs in data["propositions"].items():
        if not isinstance(hs, dict) or "c" not in hs or "d" not in hs:
            raise ProjectError(f"proposition {name!r} needs 'c' and 'd'")
        if len(hs["c"]) != plant.n:
            raise ProjectError(f"proposition {name!r} has the wrong dimension")
        props[name] = (tuple(hs["c"]), float(hs["d"]))
    try:
        phi = parse(data["spec"], props)
    except (FormulaSyntaxError, UnboundPropositionError) as exc:
        raise ProjectError(f"invalid spec: {exc}") from None
    return {"plant": plant, "params": dict(data.get("params", {})), "props": props, "phi": phi,
            "spec": data["spec"], "initial": data.get("initial")}


def _params(project: dict, args) -> AbstractionParams:
    p = dict(project["params"])
    for key in ("tau", "eta", "mu", "eps", "delta"):
        val = getattr(args, key, None)
        if val is not None:
            p[key] = val
    missing = [k for k in ("tau", "eta", "mu", "eps") if k not in p]
    if missing:
        raise ProjectError(f"missing parameters {', '.join(missing)} (project params block or flags)")
    return AbstractionParams(tau=p["tau"], eta=p["eta"], mu=p["mu"], eps=p["eps"], delta=p.get("delta"),
                             substeps=int(p.get("substeps", 4)))


def _stable(plant: LinearSystem) -> LinearSystem:
    return check_stability(plant).system


def _load_abstraction(plant, path):
    return abstraction_from_dict(plant, json.loads(Path(path).read_text()))


# ------------------------------------------------------------ commands

def cmd_abstract(args) -> int:
    project = load_project(args.project)
    plant = _stable(project["plant"])
    params = _params(project, args)
    try:
        T = build_abstraction(plant, params, force=args.force)
    except CertificationError as exc:
        print(f"error: {exc} (use --force to build anyway)", file=sys.stderr)
        return EXIT_FAIL
    summary = T.summary()
    out = args.out or "abstraction.json"
    atomic_write(out, dumps(T.to_dict()))
    print(f"|Q| = {summary['states']}  |A| = {summary['control_labels']}  |B| = {summary['disturbance_labels']}  "
          f"transitions = {summary['transitions']}  margin = {summary['certification_margin']:.6g}"
          f"{'' if summary['certified'] else '  (UNCERTIFIED)'}")
    if summary["blocking_triples"]:
        print(f"warning: {summary['blocking_triples']} blocking (q, a, b) triples; labels disabled there")
    print(f"wrote {out}")
    return EXIT_OK


def _delta(plant, params, args) -> float:
    if getattr(args, "delta", None) is not None:
        return args.delta
    if params.delta is not None:
        return params.delta
    return delta_bound(plant, params.tau)


def cmd_synth(args) -> int:
    project = load_project(args.project)
    plant = _stable(project["plant"])
    T = _load_abstraction(plant, args.abstraction)
    if not check_params(plant, T.params).certified and not args.force:
        print("error: abstraction is not certified (use --force)", file=sys.stderr)
        return EXIT_FAIL
    delta = _delta(plant, T.params, args)
    psi = tr_eps(tr_delta(project["phi"], delta), T.params.eps)
    try:
        report = synthesize(T, psi)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out = Path(args.out or "strategy.json")
    data = report.to_dict(T)
    data["delta"] = delta
    data["eps"] = T.params.eps
    atomic_write(out, dumps(data))
    atomic_write(out.with_suffix(".csv"), report.to_csv())
    n = len(report.winning_states)
    print(f"robust spec: {to_text(psi)}")
    print(f"winning states: {n} of {T.n_states}; {'some' if n else 'no'} initial abstract state is winning")
    print(f"wrote {out} and {out.with_suffix('.csv')}")
    return EXIT_OK if n else EXIT_FAIL


def _pick_q0(T, report_rank, winning, initial) -> int:
    if initial is not None:
        q = T.nearest_state(np.asarray(initial, dtype=float))
        if q not in winning:
            raise ProjectError("the project's initial state is not winning")
        return q
    return max(winning, key=lambda q: (report_rank[q], -q))


def _svg(runs, path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 3.5))
    for run in runs:
        traj = run.trajectory
        if traj.states.shape[1] == 1:
            ax.plot(traj.times, traj.states[:, 0], lw=0.7)
            ax.set_xlabel("t")
            ax.set_ylabel("x")
        else:
            ax.plot(traj.states[:, 0], traj.states[:, 1], lw=0.7)
            ax.set_xlabel("x1")
            ax.set_ylabel("x2")
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def cmd_simulate(args) -> int:
    project = load_project(args.project)
    plant = _stable(project["plant"])
    T = _load_abstraction(plant, args.abstraction)
    strat_data = json.loads(Path(args.strategy).read_text())
    winning = strat_data["winning"]
    out = Path(args.out or "runs")
    if args.runs == 0:
        summary = {"runs": 0, "satisfied": 0, "violated": 0, "inconclusive": 0}
        atomic_write(out / "summary.json", dumps(summary))
        print(dumps(summary), end="")
        return EXIT_OK
    if not winning:
        print("error: no winning abstract state", file=sys.stderr)
        return EXIT_FAIL
    f = strategy_from_table(strat_data["strategy"])
    q0 = _pick_q0(T, strat_data["rank"], winning, project["initial"])
    delta = strat_data.get("delta", _delta(plant, T.params, args))
    ctrl = derive_controller(plant, T, q0, f, force=args.force)
    rng = np.random.default_rng(args.seed)
    counts = {"runs": args.runs, "satisfied": 0, "violated": 0, "inconclusive": 0,
              "a_deviation": 0, "b_abstract": 0, "c_sampled": 0, "d_continuous": 0, "faults": 0}
    runs, verdicts = [], []
    eps = T.params.eps
    for i in range(args.runs):
        while True:
            x0 = T.states[q0] + rng.uniform(-eps, eps, size=plant.n)
            if plant.X.contains(x0):
                break
        gen = DisturbanceGenerator(args.disturbance, seed=args.seed * 100_003 + i)
        try:
            run = run_closed_loop(ctrl, plant, x0, gen, args.steps)
        except MatcherFault as exc:
            counts["faults"] += 1
            atomic_write(out / f"fault_{i:03d}.json", dumps(exc.diagnostic))
            print(f"run {i}: matcher fault: {exc}", file=sys.stderr)
            continue
        v = verdict(run, project["phi"], delta, eps)
        runs.append(run)
        verdicts.append(v.to_dict())
        atomic_write(out / f"run_{i:03d}.csv", run.to_csv())
        counts["a_deviation"] += v.deviation_ok
        counts["b_abstract"] += v.abstract is True
        counts["c_sampled"] += v.sampled is True
        counts["d_continuous"] += v.continuous.value is True
        if v.continuous.value is True:
            counts["satisfied"] += 1
        elif v.continuous.value is False:
            counts["violated"] += 1
        else:
            counts["inconclusive"] += 1
    summary = {**counts, "q0": int(q0), "seed": args.seed, "steps": args.steps,
               "disturbance": args.disturbance, "verdicts": verdicts}
    atomic_write(out / "summary.json", dumps(summary))
    if args.plot and runs:
        _svg(runs, out / "trajectories.svg")
    print(dumps({k: v for k, v in summary.items() if k != "verdicts"}), end="")
    return EXIT_OK if counts["violated"] == 0 and counts["faults"] == 0 else EXIT_FAIL


def _load_ats(path) -> AltTransitionSystem:
    data = json.loads(Path(path).read_text())
    return AltTransitionSystem.from_transitions(data["states"], data["control_labels"],
                                                data["disturbance_labels"], data["transitions"])


def cmd_check_bisim(args) -> int:
    from .game import check_bisim

    T1, T2 = _load_ats(args.abs1), _load_ats(args.abs2)
    res = check_bisim(T1, T2, args.eps)
    print(f"relation size = {res.size}  iterations = {res.iterations}  "
          f"{'bisimilar' if res.bisimilar else 'not bisimilar'} at eps = {args.eps}")
    if args.out:
        pairs = [[int(a), int(b)] for a, b in zip(*np.nonzero(res.relation))]
        atomic_write(args.out, dumps({"eps": args.eps, "bisimilar": res.bisimilar, "relation": pairs}))
    return EXIT_OK if res.bisimilar else EXIT_FAIL


def counterexample_report(which: str, steps: int = 4) -> dict:
    """Planar demonstration that raw-spec synthesis on the abstraction and
    continuous satisfaction disagree without robustification."""
    plant = planar_counterexample_system()
    params = PLANAR_PARAMS
    T = build_abstraction(plant, params)
    fx = tp1_fixture() if which == "tp1" else tp2_fixture()
    phi = parse(fx.spec, fx.props)
    report = synthesize(T, phi)
    out = {"fixture": which, "spec": fx.spec, "params": params.to_dict(),
           "abstraction_states": T.n_states, "winning_states": len(report.winning_states)}
    if which == "tp1":
        x0 = np.array(fx.start)
        tau = params.tau
        traj = dense_simulate(plant, x0, InputSignal.zero(plant.m, tau), InputSignal.zero(plant.k, tau))
        v = eval_continuous(traj, phi, tau)
        out.update({"witness_start": x0.tolist(), "witness_satisfies": v.value,
                    "gap_reproduced": len(report.winning_states) == 0 and v.value is True})
        return out
    q0 = T.state_index(np.array(fx.start))
    won = bool(report.winning[q0])
    ctrl = derive_controller(plant, T, q0, report.strategy)
    run = run_closed_loop(ctrl, plant, np.array(fx.start), DisturbanceGenerator("zero"), steps)
    abstract = eval_prefix(run.abstract_states, phi)
    cont = eval_continuous(run.trajectory, phi, params.tau)
    out.update({"q0": T.states[q0].tolist(), "q0_winning": won, "abstract_run_satisfies": abstract,
                "continuous_satisfies": cont.value, "first_label": T.ctrl_labels[run.labels[0]].tolist(),
                "gap_reproduced": won and abstract is True and cont.value is False})
    return out


def cmd_counterexample(args) -> int:
    report = counterexample_report(args.which)
    text = dumps(report)
    if args.out:
        atomic_write(args.out, text)
    print(text, end="")
    return EXIT_OK if report["gap_reproduced"] else EXIT_FAIL


# --------------------------------------------------------------- main

def _param_flags(p):
    for key in ("tau", "eta", "mu", "eps", "delta"):
        p.add_argument(f"--{key}", type=float, default=None, help=f"override {key}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="distsynth", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("abstract", help="build and certify the finite abstraction")
    p.add_argument("project")
    _param_flags(p)
    p.add_argument("--force", action="store_true", help="build even if uncertified")
    p.add_argument("--out")
    p.set_defaults(func=cmd_abstract)

    p = sub.add_parser("synth", help="robustify the specification and synthesize on the abstraction")
    p.add_argument("project")
    p.add_argument("abstraction")
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--force", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("simulate", help="derive the controller and run the closed loop")
    p.add_argument("project")
    p.add_argument("abstraction")
    p.add_argument("strategy")
    p.add_argument("--runs", type=int, default=10)
    p.add_argument("--steps", type=int, default=40)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--disturbance", choices=DisturbanceGenerator.KINDS, default="uniform")
    p.add_argument("--plot", action="store_true", help="also write an SVG of the trajectories")
    p.add_argument("--force", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("check-bisim", help="largest alternating eps-approximate bisimulation")
    p.add_argument("abs1")
    p.add_argument("abs2")
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_check_bisim)

    p = sub.add_parser("counterexample", help="planar demonstrations of the raw-spec gap")
    p.add_argument("which", choices=["tp1", "tp2"])
    p.add_argument("--out")
    p.set_defaults(func=cmd_counterexample)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("DISTSYNTH_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ProjectError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except UnstableSystemError as exc:
        print(f"error: plant rejected: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
