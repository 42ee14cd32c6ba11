import json
import subprocess
import sys

import pytest

from phidro.cli import main
from phidro.divergence import DivergenceSpec
from phidro.risk import FiniteInstance

CVAR = FiniteInstance((1.0, 0.0), (0.05, 0.95), 1.0, 0.5, DivergenceSpec.cvar(0.1))
DEGENERATE = FiniteInstance((0.6, -0.2), (1.0, 0.0), 1.0, 0.3, DivergenceSpec.kl())
FULL = FiniteInstance((0.9, 0.1, -0.5), (0.2, 0.5, 0.3), 1.0, 0.3, DivergenceSpec.kl())


@pytest.fixture
def write(tmp_path):
    def _write(name, payload):
        path = tmp_path / name
        path.write_text(payload if isinstance(payload, str) else json.dumps(payload))
        return str(path)

    return _write


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


class TestEval:
    def test_cvar(self, capsys, write):
        code, out, _ = run(capsys, "eval", "--instance", write("c.json", CVAR.to_dict()), "--tol", "1e-9")
        report = json.loads(out)
        assert code == 0 and report["primal"] == pytest.approx(0.5)
        assert {"primal", "dual", "density", "gap", "tolerance"} <= set(report)

    def test_tau_zero(self, capsys, write):
        inst = FiniteInstance(FULL.x, FULL.p, 1.0, 0.0, FULL.spec)
        code, out, _ = run(capsys, "eval", "--instance", write("t.json", inst.to_dict()))
        assert code == 0 and json.loads(out)["primal"] == pytest.approx(inst.expectation())

    def test_malformed(self, capsys, write):
        code, out, err = run(capsys, "eval", "--instance", write("bad.json", "{nope"))
        assert code == 2 and out == "" and "malformed" in err

    def test_invalid_instance(self, capsys, write):
        data = CVAR.to_dict()
        data["atoms"][0]["p"] = 0.5
        code, _, err = run(capsys, "eval", "--instance", write("bad.json", data))
        assert code == 2 and "sum" in err

    def test_missing_file(self, capsys, tmp_path):
        code, _, _ = run(capsys, "eval", "--instance", str(tmp_path / "missing.json"))
        assert code == 4

    def test_unknown_flag(self, capsys, write):
        with pytest.raises(SystemExit) as info:
            main(["eval", "--instance", write("c.json", CVAR.to_dict()), "--frobnicate"])
        assert info.value.code == 2


class TestEstimate:
    def test_degenerate(self, capsys, write):
        path = write("d.json", DEGENERATE.to_dict())
        for n in ("1", "17"):
            code, out, _ = run(capsys, "estimate", "--instance", path, "--n", n)
            assert code == 0 and json.loads(out)["r_n"] == pytest.approx(0.6)

    def test_repeatable(self, capsys, write):
        path = write("f.json", FULL.to_dict())
        args = ("estimate", "--instance", path, "--n", "50", "--seed", "4", "--trial", "2", "--truncate", "3")
        first = run(capsys, *args)
        assert first == run(capsys, *args)
        payload = json.loads(first[1])
        assert payload["r_n_L"] <= payload["r_n"] + 2e-9

    def test_truncate_one_is_mean(self, capsys, write):
        path = write("f.json", FULL.to_dict())
        code, out, _ = run(capsys, "estimate", "--instance", path, "--n", "40", "--truncate", "1")
        from phidro.saa import draw_empirical

        assert json.loads(out)["r_n_L"] == pytest.approx(draw_empirical(FULL, 40, 0, 0).mean(), abs=1e-9)

    def test_bad_n(self, capsys, write):
        with pytest.raises(SystemExit) as info:
            main(["estimate", "--instance", write("f.json", FULL.to_dict()), "--n", "0"])
        assert info.value.code == 2


class TestHardInstance:
    def test_sublinear(self, capsys):
        code, out, _ = run(capsys, "hard-instance", "--divergence", "variation", "--tau", "0.5", "--p", "0.001")
        payload = json.loads(out)
        assert code == 0 and payload["hard_instance"]["le_cam_n"] == 500
        assert payload["constants"]["r"] == 0.25

    def test_cvar(self, capsys):
        code, out, _ = run(capsys, "hard-instance", "--divergence", "cvar:alpha=0.1", "--tau", "0.1", "--eps", "0.01", "--B", "1")
        hard = json.loads(out)["hard_instance"]
        assert code == 0 and hard["le_cam_n"] == 500 and hard["atoms"][0]["p"] == pytest.approx(1e-3)

    def test_out_of_range(self, capsys):
        code, _, err = run(capsys, "hard-instance", "--divergence", "variation", "--tau", "0.5", "--p", "0.3")
        assert code == 2 and "p_max" in err

    def test_wrong_flags(self, capsys):
        assert run(capsys, "hard-instance", "--divergence", "kl", "--tau", "0.1", "--p", "0.1")[0] == 2

    def test_bad_divergence(self, capsys):
        with pytest.raises(SystemExit) as info:
            main(["hard-instance", "--divergence", "cvar:alpha=2", "--tau", "0.1", "--eps", "0.1"])
        assert info.value.code == 2


class TestBounds:
    def test_kl(self, capsys):
        code, out, err = run(capsys, "bounds", "--divergence", "kl", "--tau", "0.1", "--B", "1", "--eps", "0.01", "--delta", "0.1")
        payload = json.loads(out)
        assert code == 0
        assert abs(payload["lower"] - 20120) < 5
        assert payload["le_cam_n"] == payload["hard_instance"]["le_cam_n"]
        # g^{-1}(320) exceeds the numeric cap for KL: reported as null with a warning
        assert payload["upper_increment"] is None and "warning" in err

    def test_cvar_all_modes(self, capsys):
        code, out, _ = run(capsys, "bounds", "--divergence", "cvar:alpha=0.1", "--tau", "0.1", "--B", "1", "--eps", "0.01", "--delta", "0.1")
        payload = json.loads(out)
        assert payload["lower"] == pytest.approx(1e4)
        for key in ("upper_hoeffding", "upper_bernstein", "upper_increment"):
            assert payload[key] >= payload["lower"]

    def test_variation(self, capsys):
        code, out, err = run(capsys, "bounds", "--divergence", "variation", "--tau", "0.5", "--B", "1", "--eps", "0.1", "--delta", "0.1")
        payload = json.loads(out)
        assert code == 0 and payload["constants"]["r"] == 0.25 and payload["constants"]["p_max"] == 0.25
        assert "arbitrarily large" in err

    def test_burg_has_no_upper(self, capsys):
        code, out, _ = run(capsys, "bounds", "--divergence", "burg", "--tau", "0.5", "--B", "1", "--eps", "0.1", "--delta", "0.1")
        payload = json.loads(out)
        assert code == 0 and not any(k.startswith("upper") for k in payload)

    def test_ess_sup_rejected(self, capsys):
        code, out, err = run(capsys, "bounds", "--divergence", "ess_sup", "--tau", "0.5", "--B", "1", "--eps", "0.1", "--delta", "0.1")
        assert code == 2 and out == "" and "sample complexity can be made arbitrarily large" in err


class TestExperiment:
    def config(self, tmp_path, **over):
        data = {
            "instance": {"divergence": "variation", "tau": 0.5, "p": 0.001},
            "n_grid": [100, 400],
            "eps": 0.25,
            "trials": 20,
            "seed": 1,
            "output_path": str(tmp_path / "out.csv"),
        }
        data.update(over)
        return data

    def test_runs_and_reports(self, capsys, write, tmp_path):
        code, _, err = run(capsys, "experiment", "--config", write("cfg.json", self.config(tmp_path)))
        assert code == 0
        assert len((tmp_path / "out.csv").read_text().splitlines()) == 3
        assert sum(line.startswith("n=") for line in err.splitlines()) == 2 and '"rows": 2' in err

    def test_overrides_and_threads(self, capsys, write, tmp_path):
        path = write("cfg.json", self.config(tmp_path))
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        assert run(capsys, "experiment", "--config", path, "--seed", "9", "--output", str(a))[0] == 0
        assert run(capsys, "experiment", "--config", path, "--seed", "9", "--output", str(b), "--threads", "4")[0] == 0
        assert a.read_bytes() == b.read_bytes()
        assert a.read_text().splitlines()[1].endswith(",9")

    def test_stdout_csv(self, capsys, write, tmp_path):
        code, out, _ = run(capsys, "experiment", "--config", write("cfg.json", self.config(tmp_path)), "--output", "-")
        assert code == 0 and out.startswith("n,trials,eps,")

    def test_invalid_field(self, capsys, write, tmp_path):
        code, _, err = run(capsys, "experiment", "--config", write("cfg.json", self.config(tmp_path, n_grid=[5, 3])))
        assert code == 2 and "n_grid" in err

    def test_unwritable_output(self, capsys, write, tmp_path):
        cfg = self.config(tmp_path, output_path=str(tmp_path / "no" / "such" / "dir.csv"))
        assert run(capsys, "experiment", "--config", write("cfg.json", cfg))[0] == 4


def test_module_entry_point(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps(CVAR.to_dict()))
    proc = subprocess.run([sys.executable, "-m", "phidro", "eval", "--instance", str(path)], capture_output=True, text=True)
    assert proc.returncode == 0 and json.loads(proc.stdout)["primal"] == pytest.approx(0.5)
