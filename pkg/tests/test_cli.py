import json

import numpy as np
import pytest

from omt.cli import main
from omt.policy import load_policy


@pytest.fixture(scope="module")
def solved_policy_path(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "policy.json"
    rep = tmp_path_factory.mktemp("cli") / "report.json"
    code = main([
        "solve", "--k", "3", "--error", "fwer", "--power", "any",
        "--theta-obj", "-2.0", "--grid-n", "64",
        "--out", str(out), "--report", str(rep),
    ])
    assert code == 0
    return out, rep


class TestSolveCommand:
    def test_outputs(self, solved_policy_path):
        out, rep = solved_policy_path
        doc = json.loads(rep.read_text())
        assert doc["format"] == 1
        assert doc["active_set"] == [0]
        assert doc["tolerances"]["feas_tol"] == 5e-4
        pol = load_policy(out)
        assert pol.k == 3 and pol.provenance_ == "solved"

    def test_validation_exit_code(self):
        assert main(["solve", "--alpha", "1.5", "--grid-n", "64"]) == 2

    def test_bad_flag_exit_code(self, capsys):
        assert main(["solve", "--nonsense"]) == 2
        capsys.readouterr()


class TestEvalCommand:
    def test_baseline_eval(self, tmp_path):
        out = tmp_path / "eval.json"
        code = main([
            "eval", "--procedure", "holm", "--theta", "-2.0",
            "--grid-n", "64", "--out", str(out),
        ])
        assert code == 0
        doc = json.loads(out.read_text())
        assert doc["avg_power"] == pytest.approx(0.530, abs=0.01)
        assert doc["err_L0"] <= 0.05 + 1e-3

    def test_solved_policy_eval(self, solved_policy_path, tmp_path):
        pol_path, _ = solved_policy_path
        out = tmp_path / "eval.json"
        code = main([
            "eval", "--procedure", "omt", "--policy", f"omt={pol_path}",
            "--theta", "-2.0", "--grid-n", "64", "--out", str(out),
        ])
        assert code == 0
        doc = json.loads(out.read_text())
        assert doc["any_power"] == pytest.approx(0.9656, abs=5e-3)

    def test_mc_scheme(self, tmp_path):
        out = tmp_path / "eval_mc.json"
        code = main([
            "eval", "--procedure", "holm", "--theta", "-2.0", "--quad", "mc",
            "--mc-n", "200000", "--seed", "7", "--out", str(out),
        ])
        assert code == 0
        doc = json.loads(out.read_text())
        assert doc["avg_power"]["value"] == pytest.approx(0.53, abs=0.01)


class TestSliceCommand:
    def test_holm_empty_slice(self, tmp_path):
        out = tmp_path / "slice.csv"
        code = main([
            "slice", "--procedure", "holm", "--u1", "0.02", "--n", "32",
            "--out", str(out),
        ])
        assert code == 0
        lines = out.read_text().splitlines()
        assert lines[0].startswith("# policy=holm")
        counts = [int(l.rsplit(",", 1)[1]) for l in lines[2:]]
        assert max(counts) == 0


class TestApplyCommand:
    def test_apply_baselines(self, tmp_path):
        data = tmp_path / "data.csv"
        data.write_text(
            "id,p1,p2,p3\n"
            "a,0.001,0.002,0.003\n"
            "b,0.5,0.5,0.5\n"
            "c,0.01,0.02,0.2\n"
        )
        out = tmp_path / "report.json"
        rows = tmp_path / "rows.csv"
        code = main([
            "apply", "--data", str(data), "--procedures", "holm", "bh",
            "--out", str(out), "--rows-csv", str(rows),
        ])
        assert code == 0
        doc = json.loads(out.read_text())
        assert doc["n_rows"] == 3
        assert "holm|bh" in doc["crosstabs"]
        tab = np.array(doc["crosstabs"]["holm|bh"])
        assert tab.sum() == 3
        header = rows.read_text().splitlines()[0]
        assert header == "id,holm_count,holm_rejected,bh_count,bh_rejected"

    def test_missing_file_exit_code(self, tmp_path):
        code = main(["apply", "--data", str(tmp_path / "none.csv"),
                     "--procedures", "holm"])
        assert code == 2


class TestBenchCommand:
    def test_empty_procedures_usage_error(self, tmp_path):
        assert main(["bench", "--theta-grid", "-1.0"]) == 2

    def test_baseline_bench(self, tmp_path):
        out = tmp_path / "bench.csv"
        code = main([
            "bench", "--procedures", "holm", "mabh", "--theta-grid", "-2.0",
            "--grid-n", "64", "--out", str(out),
        ])
        assert code == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "procedure,theta,avg_power,any_power"
        assert len(lines) == 3
