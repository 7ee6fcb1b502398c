import json
from pathlib import Path

import pytest

from distsynth.cli import load_project, main, ProjectError

PROJECT = Path(__file__).resolve().parents[1] / "projects" / "s1.json"


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    d = tmp_path_factory.mktemp("pipe")
    assert main(["abstract", str(PROJECT), "--out", str(d / "abs.json")]) == 0
    assert main(["synth", str(PROJECT), str(d / "abs.json"), "--out", str(d / "strat.json")]) == 0
    return d


def variant(tmp_path, **changes):
    data = json.loads(PROJECT.read_text())
    for key, value in changes.items():
        if value is None:
            data.pop(key, None)
        else:
            data[key] = value
    path = tmp_path / "project.json"
    path.write_text(json.dumps(data))
    return path


def test_coarse_abstraction_via_flags(tmp_path, capsys):
    out = tmp_path / "coarse.json"
    code = main(["abstract", str(PROJECT), "--tau", "0.6931471805599453", "--eta", "0.5", "--mu", "0.1",
                 "--eps", "1.0", "--out", str(out)])
    assert code == 0
    data = json.loads(out.read_text())
    assert len(data["states"]) == 9
    assert "|Q| = 9" in capsys.readouterr().out


def test_uncertified_abstraction(tmp_path, capsys):
    out = tmp_path / "bad.json"
    args = ["abstract", str(PROJECT), "--eta", "1.0", "--mu", "0.5", "--eps", "0.2", "--out", str(out)]
    assert main(args) == 1
    assert not out.exists()
    assert main(args + ["--force"]) == 0
    assert out.exists()
    assert "UNCERTIFIED" in capsys.readouterr().out


def test_schema_errors(tmp_path):
    bad_plant = json.loads(PROJECT.read_text())["plant"]
    del bad_plant["A"]
    assert main(["abstract", str(variant(tmp_path, plant=bad_plant))]) == 3
    assert main(["abstract", str(variant(tmp_path, spec="p1 U zz"))]) == 3
    assert main(["abstract", str(variant(tmp_path, spec=None))]) == 3
    with pytest.raises(ProjectError):
        load_project(variant(tmp_path, propositions={"p1": {"c": [1.0, 2.0], "d": 0.0}}, spec="p1"))


def test_synth_outputs(pipeline, capsys):
    data = json.loads((pipeline / "strat.json").read_text())
    assert len(data["winning"]) > 0
    assert (pipeline / "strat.csv").read_text().startswith("state,rank,labels")


def test_synth_rejects_nested_until(pipeline, tmp_path):
    project = variant(tmp_path, spec="p2 U (p1 U p2)")
    assert main(["synth", str(project), str(pipeline / "abs.json"), "--out", str(tmp_path / "s.json")]) == 2


def test_synth_unsatisfiable_spec(pipeline, tmp_path):
    props = json.loads(PROJECT.read_text())["propositions"]
    props["far"] = {"c": [-1.0], "d": 5.0}  # x > 5, outside X
    project = variant(tmp_path, propositions=props, spec="p2 U far")
    assert main(["synth", str(project), str(pipeline / "abs.json"), "--out", str(tmp_path / "s.json")]) == 1
    assert json.loads((tmp_path / "s.json").read_text())["winning"] == []


def test_simulate_summary_and_determinism(pipeline, tmp_path, capsys):
    args = ["simulate", str(PROJECT), str(pipeline / "abs.json"), str(pipeline / "strat.json"),
            "--runs", "5", "--steps", "30", "--seed", "3"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    a = json.loads((tmp_path / "a" / "summary.json").read_text())
    b = json.loads((tmp_path / "b" / "summary.json").read_text())
    assert a == b
    assert a["satisfied"] == 5 and a["faults"] == 0
    assert (tmp_path / "a" / "run_000.csv").exists()


def test_simulate_zero_runs(pipeline, tmp_path):
    out = tmp_path / "z"
    assert main(["simulate", str(PROJECT), str(pipeline / "abs.json"), str(pipeline / "strat.json"),
                 "--runs", "0", "--out", str(out)]) == 0
    assert json.loads((out / "summary.json").read_text())["runs"] == 0


def test_simulate_plot(pipeline, tmp_path):
    pytest.importorskip("matplotlib")
    out = tmp_path / "p"
    assert main(["simulate", str(PROJECT), str(pipeline / "abs.json"), str(pipeline / "strat.json"),
                 "--runs", "2", "--steps", "10", "--plot", "--out", str(out)]) == 0
    assert (out / "trajectories.svg").read_text().lstrip().startswith("<?xml")


def test_check_bisim_commands(tmp_path):
    coarse = tmp_path / "c.json"
    finer = tmp_path / "f.json"
    flags = ["--tau", "0.6931471805599453", "--mu", "0.1", "--eps", "1.0"]
    assert main(["abstract", str(PROJECT), "--eta", "0.5", *flags, "--out", str(coarse)]) == 0
    assert main(["abstract", str(PROJECT), "--eta", "0.25", *flags, "--out", str(finer)]) == 0
    assert main(["check-bisim", str(coarse), str(coarse), "--eps", "0"]) == 0
    assert main(["check-bisim", str(coarse), str(finer), "--eps", "1.0", "--out", str(tmp_path / "r.json")]) == 0
    assert main(["check-bisim", str(coarse), str(finer), "--eps", "0"]) == 1


@pytest.mark.parametrize("which", ["tp1", "tp2"])
def test_counterexamples(which, capsys):
    assert main(["counterexample", which]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["gap_reproduced"] is True


def test_counterexample_usage_error():
    with pytest.raises(SystemExit) as err:
        main(["counterexample", "tp3"])
    assert err.value.code == 2
