import json
import os
import shutil

import pytest
from click.testing import CliRunner

from cptdual import __version__
from cptdual.cli import cli
from cptdual.core.cpt import CptSpec, cpt_value
from cptdual.core.distribution import DiscreteDistribution


@pytest.fixture
def workdir(tmp_path, test_data_path):
    for name in os.listdir(test_data_path):
        shutil.copy(os.path.join(test_data_path, name), tmp_path / name)
    return tmp_path


def _run(args):
    return CliRunner().invoke(cli, args)


def _run_dirs(out):
    return sorted(p for p in out.iterdir() if p.is_dir()) if out.exists() else []


def test_version():
    result = _run(["--version"])
    assert result.exit_code == 0
    assert __version__ in result.output


def test_gate(workdir):
    out = workdir / "runs"
    result = _run(["gate", str(workdir / "gate.yaml"), "--out-dir", str(out)])
    assert result.exit_code == 0, result.output
    assert "WellPosedA" in result.output
    (run_dir,) = _run_dirs(out)
    assert run_dir.name.startswith("gate-")
    summary = json.loads((run_dir / "result.json").read_text())
    assert summary["verdict"]["tag"] == "WellPosedA"
    assert summary["pi_range"] == [1.0, pytest.approx(0.9 / 0.8)]
    assert summary["benchmark_moment"] == 0.0
    assert sorted(os.listdir(run_dir)) == ["manifest.json", "result.json"]


def test_construct_q(workdir):
    out = workdir / "runs"
    result = _run(["construct-q", str(workdir / "construct_q.json"), "-o", str(out), "--threads", "2"])
    assert result.exit_code == 0, result.output
    (run_dir,) = _run_dirs(out)
    summary = json.loads((run_dir / "result.json").read_text())
    assert summary["density"]["q_branch"]["1"] == pytest.approx(1.0 / 3.0, abs=1e-8)
    assert summary["martingale_residual"] < 1e-10
    assert summary["certificate"]["passed"]
    assert {"density.csv", "newton.csv", "certificate.csv"} <= set(os.listdir(run_dir))

    # the thread count does not change the run directory
    again = _run(["construct-q", str(workdir / "construct_q.json"), "-o", str(out)])
    assert again.exit_code == 0
    assert _run_dirs(out) == [run_dir]


def test_seed_override_changes_run(workdir):
    out = workdir / "runs"
    assert _run(["na-check", str(workdir / "construct_q.json"), "-o", str(out)]).exit_code == 0
    assert _run(["na-check", str(workdir / "construct_q.json"), "-o", str(out), "--seed", "4"]).exit_code == 0
    first, second = _run_dirs(out)
    assert first.name != second.name
    seeds = {json.loads((d / "manifest.json").read_text())["seed"] for d in (first, second)}
    assert seeds == {0, 4}


def test_evaluate(workdir):
    out = workdir / "runs"
    result = _run(["evaluate", str(workdir / "evaluate.json"), "-o", str(out)])
    assert result.exit_code == 0, result.output
    (run_dir,) = _run_dirs(out)
    summary = json.loads((run_dir / "result.json").read_text())
    expected = cpt_value(DiscreteDistribution([2.0, -1.0], [0.6, 0.4]), CptSpec.power(0.5, 0.9, 0.6, 0.8))
    assert summary["V"] == pytest.approx(expected, rel=1e-12)
    assert summary["V"] == pytest.approx(0.6**0.6 * 2.0**0.5 - 0.4**0.8, rel=1e-12)
    assert summary["moments"]["martingale_ok"]
    assert {"terminal.csv", "moments.csv"} <= set(os.listdir(run_dir))


def test_lemmas_selection(workdir):
    config = workdir / "lemmas.json"
    config.write_text(json.dumps({"family": {"count": 5}}))
    out = workdir / "runs"
    result = _run(["lemmas", str(config), "-o", str(out), "--suti"])
    assert result.exit_code == 0, result.output
    (run_dir,) = _run_dirs(out)
    assert set(json.loads((run_dir / "result.json").read_text())) == {"suti"}


def test_malformed_document_writes_nothing(workdir):
    config = workdir / "broken.json"
    config.write_text('{"tree": ')
    out = workdir / "runs"
    result = _run(["construct-q", str(config), "-o", str(out)])
    assert result.exit_code == 2
    assert "Run failed" in result.output
    assert not out.exists()


def test_invalid_document(workdir):
    config = workdir / "bad.json"
    config.write_text(json.dumps({"tree": "binomial_tree.json", "tolerance": 1e-9}))
    out = workdir / "runs"
    result = _run(["construct-q", str(config), "-o", str(out)])
    assert result.exit_code == 2
    assert "Invalid configuration" in result.output
    assert "tolerance" in result.output
    assert not out.exists()


def test_missing_document(workdir):
    result = _run(["gate", str(workdir / "nope.json"), "-o", str(workdir / "runs")])
    assert result.exit_code == 2


def test_arbitrage_is_refused(workdir):
    config = workdir / "arbitrage.json"
    tree = {"S": [0.0], "children": [{"p": 0.5, "S": [1.0]}, {"p": 0.5, "S": [2.0]}]}
    config.write_text(json.dumps({"tree": tree}))
    result = _run(["construct-q", str(config), "-o", str(workdir / "runs")])
    assert result.exit_code == 2
    assert "arbitrage" in result.output


def test_not_converged(workdir):
    config = workdir / "slow.json"
    tree = {"S": [0.0], "children": [{"p": 0.5, "S": [3.0]}, {"p": 0.3, "S": [0.5]}, {"p": 0.2, "S": [-1.0]}]}
    config.write_text(json.dumps({"tree": tree, "tol": 1e-300, "max_iter": 1}))
    out = workdir / "runs"
    result = _run(["construct-q", str(config), "-o", str(out)])
    assert result.exit_code == 3
    assert "did not converge" in result.output
    assert not out.exists()


def test_unknown_subcommand(workdir):
    result = _run(["frontier", str(workdir / "gate.yaml")])
    assert result.exit_code == 64
    assert "Unknown subcommand" in result.output


def test_optimize_is_reproducible(workdir):
    config = workdir / "optimize.json"
    document = {
        "seed": 12,
        "tree": "binomial_tree.json",
        "spec": {"preset": "power", "alpha": 0.5, "beta": 0.9, "gamma": 0.6, "delta": 0.8},
        "z": 0.0,
        "optimizer": {"starts": 3, "budget": 1500},
    }
    config.write_text(json.dumps(document))
    first, second = workdir / "first", workdir / "second"
    assert _run(["optimize", str(config), "-o", str(first)]).exit_code == 0
    assert _run(["optimize", str(config), "-o", str(second), "--threads", "3"]).exit_code == 0
    (a,) = _run_dirs(first)
    (b,) = _run_dirs(second)
    assert a.name == b.name
    for name in ("result.json", "trace.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    summary = json.loads((a / "result.json").read_text())
    assert summary["result"]["bound_holds"] is True
    assert summary["verdict"]["tag"] == "WellPosedA"


def test_probe(workdir):
    config = workdir / "probe.json"
    document = {
        "tree": "binomial_tree.json",
        "spec": {"preset": "power", "alpha": 0.9, "beta": 0.8, "gamma": 1.0, "delta": 1.0},
        "z": 0.0,
        "doublings": 24,
    }
    config.write_text(json.dumps(document))
    out = workdir / "runs"
    result = _run(["probe", str(config), "-o", str(out)])
    assert result.exit_code == 0, result.output
    (run_dir,) = _run_dirs(out)
    summary = json.loads((run_dir / "result.json").read_text())
    assert summary["probe"]["divergent"]
    assert summary["verdict"]["tag"] == "IllPosedNecessary"
    assert {"probe.csv", "slopes.csv"} <= set(os.listdir(run_dir))


def test_rosenblatt(workdir):
    config = workdir / "rosenblatt.json"
    config.write_text(json.dumps({"density": {"preset": "product_normal", "dim": 2, "nodes": 65}, "samples": 400, "T": 2, "N": 1}))
    out = workdir / "runs"
    result = _run(["rosenblatt", str(config), "-o", str(out)])
    assert result.exit_code == 0, result.output
    (run_dir,) = _run_dirs(out)
    summary = json.loads((run_dir / "result.json").read_text())
    assert summary["samples"] == 400
    assert summary["blocks"] == [2, 1]
    assert summary["monotone"] is True
    assert set(summary["chi_square"]) == {"0,1"}
    assert (run_dir / "samples.csv").exists()
