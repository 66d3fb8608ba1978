import csv
import json
import subprocess
import sys

import pytest

from treeentropy import __version__, cli
from treeentropy import experiments as E


class TestConfig:
    def test_defaults_and_grid(self):
        cfg = E.ExperimentConfig(mode="biased")
        g = cfg.eps_grid
        assert len(g) == 12 and g[0] == 0.25

    def test_bad_mode(self):
        with pytest.raises(E.ExperimentError):
            E.ExperimentConfig(mode="nonsense")

    def test_hash_stable(self):
        a = E.ExperimentConfig(mode="biased", seed=3)
        b = E.ExperimentConfig(mode="biased", seed=3)
        c = E.ExperimentConfig(mode="biased", seed=4)
        assert a.hash() == b.hash() != c.hash()

    def test_from_json_override(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text(json.dumps({"mode": "covering", "eps_count": 8, "gamma": 3.0}))
        cfg = E.ExperimentConfig.from_json(p, eps_count=12, gamma=None)
        assert cfg.eps_count == 12 and cfg.gamma == 3.0


class TestRunExperiment:
    def test_covering_one_point_refused(self, tmp_path):
        cfg = E.ExperimentConfig(mode="covering", eps_count=1, out=str(tmp_path / "r"))
        with pytest.raises(E.ExperimentError, match="need at least 6"):
            E.run_experiment(cfg)

    def test_operator_checks(self, tmp_path):
        cfg = E.ExperimentConfig(mode="operator-checks", instances=5, out=str(tmp_path / "ops"))
        rep = E.run_experiment(cfg)
        assert rep["passed"]
        assert all(v["status"] == "pass" for v in rep["verdicts"].values())

    def test_biased_reports(self, tmp_path):
        out = tmp_path / "b"
        cfg = E.ExperimentConfig(mode="biased", gamma=2.5, q=2.0, lam=1, seed=5, out=str(out))
        rep = E.run_experiment(cfg)
        data = json.loads((tmp_path / "b.json").read_text())
        assert data["config_hash"] == cfg.hash()
        assert data["version"] == __version__ and data["seed"] == 5
        assert data["passed"] == rep["passed"]
        assert abs(data["fits"]["Ntilde"]["a"] - 1.6) / 1.6 < 0.15
        rows = list(csv.reader(open(tmp_path / "b.csv")))
        assert rows[0] == E.CSV_COLUMNS["biased"]
        assert len(rows) == 13
        dat = (tmp_path / "b.dat").read_text().split("\n")
        assert len(dat[1].split()) == 2


class TestCli:
    def test_predict(self, capsys):
        assert cli.main(["predict", "--family", "moderate", "--q", "2", "--gamma", "2.5",
                         "--lambda", "1"]) == 0
        out = json.loads(capsys.readouterr().out)
        assert out["covering"] == pytest.approx([1.6, 0.0])

    def test_predict_error(self, capsys):
        assert cli.main(["predict", "--family", "moderate", "--q", "2", "--gamma", "0.5"]) == 2
        assert "error" in capsys.readouterr().err

    def test_refusal_exit_code(self, tmp_path, capsys):
        code = cli.main(["covering", "--eps-count", "1", "--out", str(tmp_path / "x")])
        assert code == 2
        assert "need at least 6" in capsys.readouterr().err

    def test_flag_beats_config(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text(json.dumps({"mode": "covering", "eps_count": 8, "seed": 1}))
        args = cli.build_parser().parse_args(["covering", "--config", str(p), "--eps-count", "12"])
        cfg = cli.config_from_args(args)
        assert cfg.eps_count == 12 and cfg.seed == 1

    def test_console_script(self):
        r = subprocess.run([sys.executable, "-m", "treeentropy.cli", "predict", "--family",
                            "binary-exp", "--q", "2", "--gamma", "1"],
                           capture_output=True, text=True, check=True)
        assert json.loads(r.stdout)["covering"] == [2.0, 0.0]
