import json
import shutil
import subprocess

import pytest

from markov_clt.cli import main

CHAIN = {"P": [[0.8, 0.2], [0.3, 0.7]]}
MODEL = {"chain": {"P": [[0.7, 0.3], [0.3, 0.7]]}, "A": [1.0, 3.0], "b": [-2.0, -2.0], "delta": 0.75}


@pytest.fixture
def files(tmp_path):
    def write(name, doc):
        path = tmp_path / name
        path.write_text(json.dumps(doc))
        return str(path)

    return write


def test_chain_stationary(files, capsys):
    assert main(["chain", "stationary", "--input", files("c.json", CHAIN)]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["pi"] == pytest.approx([0.6, 0.4])


def test_malformed_row_exit_1(files, capsys):
    code = main(["chain", "stationary", "--input", files("c.json", {"P": [[0.5, 0.4], [0.5, 0.5]]})])
    assert code == 1
    assert "row 0" in capsys.readouterr().err


def test_poisson_and_sigma_inf(files, capsys):
    c, r = files("c.json", CHAIN), files("r.json", {"r": [1, 0]})
    assert main(["chain", "poisson", "--input", c, "--reward", r]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["residual"] <= 1e-10 and out["r_bar"] == pytest.approx([0.6])
    assert main(["chain", "sigma-inf", "--input", c, "--reward", r]) == 0
    assert json.loads(capsys.readouterr().out)["sigma_inf"][0][0] == pytest.approx(0.72)


def test_bound_martingale(files, capsys):
    c, r = files("c.json", CHAIN), files("r.json", {"r": [1, 0]})
    assert main(["bound", "martingale", "--input", c, "--reward", r, "--n", "1000", "--beta", "schedule"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["beta"] == pytest.approx(1 - 2 / 6.907755278982137) and out["bound"] > 0
    assert main(["bound", "martingale", "--input", c, "--reward", r, "--n", "5", "--beta", "schedule"]) == 1
    assert "n=5" in capsys.readouterr().err


def test_non_pd_sigma_inf_exit_2(files, capsys):
    c, r = files("c.json", CHAIN), files("r.json", {"r": [2, 2]})
    assert main(["bound", "martingale", "--input", c, "--reward", r, "--n", "100"]) == 2
    cfg = files("cfg.json", {"kind": "mc-clt", "chain": CHAIN, "reward": {"r": [2, 2]}, "n_grid": [10], "replicates": 5})
    assert main(["experiment", "mc-clt", "--config", cfg]) == 2
    assert "singular" in capsys.readouterr().err


def test_experiment_td_clt_csv(files, tmp_path):
    files("model.json", MODEL)
    cfg = files("cfg.json", {"kind": "td-clt", "model": "model.json", "n_grid": [100, 1000], "replicates": 100})
    out = tmp_path / "out.csv"
    assert main(["experiment", "td-clt", "--config", cfg, "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "experiment,n,estimator,value,stderr,wall_ms"
    assert any(",floor," in line for line in lines)


def test_experiment_flags_and_json(files, tmp_path, capsys):
    cfg = files("cfg.json", {"kind": "td-clt", "model": MODEL, "n_grid": [100, 1000], "replicates": 600})
    runs = []
    for threads in ("1", "8"):
        out = tmp_path / f"o{threads}.csv"
        assert main(["--seed", "11", "experiment", "td-clt", "--config", cfg, "--threads", threads,
                     "--no-timing", "--out", str(out)]) == 0
        runs.append(out.read_bytes())
    assert runs[0] == runs[1]
    assert main(["experiment", "td-clt", "--config", cfg, "--seed", "12", "--json", "--no-timing"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["experiment"] == "td-clt" and all(r["wall_ms"] == 0 for r in doc["rows"])


def test_config_errors_exit_1(files, capsys):
    cfg = files("cfg.json", {"kind": "td-clt", "model": MODEL, "n_grid": [10], "replicates": 2, "replicas": 3})
    assert main(["experiment", "td-clt", "--config", cfg]) == 1
    assert "'replicas'" in capsys.readouterr().err
    cfg = files("cfg2.json", {"kind": "mc-clt", "chain": CHAIN, "reward": {"r": [1, 0]}, "n_grid": [10], "replicates": 2})
    assert main(["experiment", "td-clt", "--config", cfg]) == 1
    assert main(["experiment", "td-clt", "--config", "/nonexistent.json"]) == 1


def test_usage_error_exit_1(capsys):
    with pytest.raises(SystemExit) as info:
        main(["chain", "bogus"])
    assert info.value.code == 1


def test_fit_rate(files, tmp_path, capsys):
    assert main(["fit-rate", "--grid", "10", "100", "1000", "--values", "1", "0.1", "0.01"]) == 0
    assert json.loads(capsys.readouterr().out)["slope"] == pytest.approx(-1.0)
    cfg = files("cfg.json", {"kind": "upsilon-decay", "A_bar": 1.0, "delta": 0.7, "n_grid": [200, 2000]})
    out = tmp_path / "u.csv"
    assert main(["experiment", "upsilon-decay", "--config", cfg, "--out", str(out)]) == 0
    assert main(["fit-rate", "--input", str(out), "--estimator", "upsilon_sq_mean"]) == 0
    (entry,) = json.loads(capsys.readouterr().out)
    assert entry["estimator"] == "upsilon_sq_mean" and entry["slope"] < 0


@pytest.mark.skipif(shutil.which("markov-clt") is None, reason="console script not installed")
def test_console_script(files):
    proc = subprocess.run(["markov-clt", "chain", "stationary", "--input", files("c.json", CHAIN)],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "pi" in proc.stdout
