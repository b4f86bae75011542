import csv
import io
import json

import numpy as np
import pytest

from berknash.cli import EXIT_INPUT, EXIT_NONE_FOUND, EXIT_OK, main
from berknash.examples.monopoly import monopoly_oracle
from berknash.examples.presets import get_preset
from berknash.modelfile import read_model, write_model

from builders import one_state_mdp, smdp_from_kernels, two_state_chain


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture
def one_state_file(tmp_path):
    mdp = one_state_mdp(payoff=1.0, discount=0.5)
    path = tmp_path / "one.txt"
    write_model(smdp_from_kernels(mdp, [mdp.kernel]), path)
    return path


def test_solve_single_state(one_state_file, tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["solve", "--model", str(one_state_file), "--out", str(out)]) == EXIT_OK
    (row,) = _rows(out / "values.csv")
    assert float(row["value"]) == pytest.approx(2.0, abs=1e-9)
    assert "state,value" in capsys.readouterr().out
    record = json.loads((out / "run.json").read_text())
    assert record["command"] == "solve" and record["outputs"] == ["values.csv", "qvalues.csv"]


def test_solve_monopoly_preset(tmp_path):
    assert main(["solve", "--preset", "monopoly-default", "--out", str(tmp_path)]) == EXIT_OK
    assert len(_rows(tmp_path / "values.csv")) == 2
    q = _rows(tmp_path / "qvalues.csv")
    assert len(q) == 4 and all(r["is_optimal"] in ("0", "1") for r in q)


def test_perfect_equilibrium_of_the_monopoly(tmp_path, capsys):
    args = ["equilibrium", "--preset", "monopoly-default", "--mode", "perfect", "--restarts", "2",
            "--out", str(tmp_path)]
    assert main(args) == EXIT_OK
    assert "1 certificate(s) (perfect)" in capsys.readouterr().out
    strat = _rows(tmp_path / "strategies.csv")
    high = [float(r["probability"]) for r in strat if r["action"] == "H"]
    sigma_star = monopoly_oracle(get_preset("monopoly-default").params).sigma_star
    assert np.allclose(high, sigma_star, atol=1e-4)
    assert "accepted = True" in (tmp_path / "certificates.txt").read_text()

    assert main(["report", str(tmp_path / "run.json"), "--out", str(tmp_path / "rep")]) == EXIT_OK
    (row,) = _rows(tmp_path / "rep" / "report.csv")
    assert row["pass"] == "1" and row["quantity"] == "sigma_H[0]"


def test_empty_search_exits_with_code_two(tmp_path, capsys):
    code = main(["equilibrium", "--preset", "search-default", "--restarts", "0", "--out", str(tmp_path)])
    assert code == EXIT_NONE_FOUND
    assert "without a certificate" in capsys.readouterr().err
    assert (tmp_path / "certificates.txt").read_text() == ""


def test_learning_summary_shows_the_experiment(tmp_path, capsys):
    args = ["learn", "--preset", "experimentation-075", "--prior", "0.5,0.5", "--horizon", "5",
            "--seeds", "0-2", "--out", str(tmp_path)]
    assert main(args) == EXIT_OK
    rows = _rows(tmp_path / "summary.csv")
    assert [r["action_t0"] for r in rows] == ["S", "S", "S"]
    assert (tmp_path / "trace_seed1.csv").exists() and (tmp_path / "plot.gp").exists()
    capsys.readouterr()
    assert main(["report", str(tmp_path / "run.json"), "--out", str(tmp_path / "rep")]) == EXIT_OK
    assert all(r["pass"] == "1" for r in _rows(tmp_path / "rep" / "report.csv"))


def test_zero_horizon(tmp_path):
    args = ["learn", "--preset", "coin-fair", "--horizon", "0", "--policy", "myopic", "--out", str(tmp_path)]
    assert main(args) == EXIT_OK
    (row,) = _rows(tmp_path / "summary.csv")
    assert row["periods"] == "0" and row["stable"] == "0"


@pytest.mark.parametrize("argv", [
    ["learn", "--preset", "coin-fair", "--prior", "1,0"],
    ["learn", "--preset", "coin-fair", "--prior", "0.2,0.3,0.5"],
    ["learn", "--preset", "coin-fair", "--seeds", "x"],
    ["learn", "--preset", "coin-fair", "--horizon", "-1"],
    ["solve", "--preset", "no-such-preset"],
    ["solve", "--model", "/nonexistent/model.txt"],
])
def test_bad_arguments_exit_with_code_one(argv, tmp_path, capsys):
    assert main(argv + ["--out", str(tmp_path)]) == EXIT_INPUT
    assert capsys.readouterr().err.startswith("error:")


def test_malformed_model_file_reports_its_line(tmp_path, capsys):
    path = tmp_path / "bad.txt"
    path.write_text("[states]\na b\n[actions]\nx\n[feasible]\na = y\n")
    assert main(["solve", "--model", str(path), "--out", str(tmp_path)]) == EXIT_INPUT
    assert "line 6" in capsys.readouterr().err


def test_export_round_trip(tmp_path, capsys):
    path = tmp_path / "coin.txt"
    assert main(["export", "--preset", "coin-fair", str(path)]) == EXIT_OK
    back = read_model(path)
    original = get_preset("coin-fair").build()
    assert np.array_equal(back.family, original.family)
    assert main(["export", "--model", str(path), "-"]) == EXIT_OK
    assert capsys.readouterr().out == path.read_text()


def test_reruns_are_byte_identical(tmp_path):
    for run in ("a", "b"):
        assert main(["learn", "--preset", "coin-fair", "--policy", "myopic", "--horizon", "500",
                     "--seeds", "3,4", "--out", str(tmp_path / run)]) == EXIT_OK
        assert main(["equilibrium", "--preset", "coin-fair", "--restarts", "2",
                     "--out", str(tmp_path / run / "eq")]) == EXIT_OK
    for name in ("trace_seed3.csv", "trace_seed4.csv", "summary.csv", "eq/strategies.csv", "eq/beliefs.csv",
                 "eq/outcomes.csv", "eq/certificates.txt"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    a, b = (json.loads((tmp_path / r / "run.json").read_text()) for r in ("a", "b"))
    a.pop("wall_time_s"), b.pop("wall_time_s")
    a["config"].pop("out", None), b["config"].pop("out", None)
    assert a == b


def test_perfect_mode_warns_without_full_communication(tmp_path, capsys):
    mdp = two_state_chain(0.0, 0.0)
    path = tmp_path / "stuck.txt"
    write_model(smdp_from_kernels(mdp, [mdp.kernel]), path)
    main(["equilibrium", "--model", str(path), "--mode", "perfect", "--restarts", "0", "--out", str(tmp_path)])
    assert "full communication" in capsys.readouterr().err
