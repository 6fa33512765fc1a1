import csv
import json

import pytest

from cylstable import cli
from cylstable.exceptions import NumericalError


def run(tmp_path, *argv):
    out = tmp_path / "out"
    code = cli.run([*argv, "--out", str(out)])
    manifest = json.loads((out / "manifest.json").read_text()) if (out / "manifest.json").exists() else None
    return code, out, manifest


SPECTRUM = ("spectrum", "--R", "6", "--n", "96", "--k", "3")


class TestSpectrum:
    def test_artifacts_and_manifest(self, tmp_path):
        code, out, man = run(tmp_path, *SPECTRUM)
        assert code == 0
        assert man["status"] == 0 and man["command"] == "spectrum"
        assert {c["name"] for c in man["checks"]} == {"residuals", "spectral_gap", "perron_positive"}
        assert sorted(man["artifacts"]) == ["lambdas.csv", "phi1.csv"]
        for key in ("config", "seed", "versions", "threads", "timestamp", "wall_clock_seconds"):
            assert key in man
        rows = list(csv.DictReader((out / "lambdas.csv").open()))
        assert len(rows) == 3
        assert float(rows[0]["lambda"]) == pytest.approx(2.0655738, abs=1e-6)

    def test_reproducible_bytes(self, tmp_path):
        _, a, _ = run(tmp_path / "a", *SPECTRUM)
        _, b, _ = run(tmp_path / "b", *SPECTRUM)
        for name in ("lambdas.csv", "phi1.csv"):
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_config_file_and_override(self, tmp_path):
        conf = tmp_path / "run.cfg"
        conf.write_text("command = spectrum\n# small grid\nR = 6\nn = 96\nk = 4\n")
        code, _, man = run(tmp_path, "spectrum", "--config", str(conf), "--k", "3")
        assert code == 0
        assert man["config"]["k"] == 3 and man["config"]["n"] == 96


class TestExitCodes:
    @pytest.mark.parametrize(
        "argv,field",
        [
            (("spectrum", "--alpha", "2.5"), "alpha"),
            (("spectrum", "--n", "10"), "n"),
            (("fk", "--x", "1,2,3"), "x"),
            (("iw-check", "--target", "1,3,0,1"), "target"),
            (("fk", "--t", "0", "--n-paths", "1000"), "t"),
        ],
    )
    def test_config_errors(self, tmp_path, argv, field):
        code, _, man = run(tmp_path, *argv)
        assert code == 2
        assert man["status"] == 2 and man["error"]["field"] == field

    def test_config_file_errors(self, tmp_path):
        wrong = tmp_path / "wrong.cfg"
        wrong.write_text("command = fk\n")
        assert run(tmp_path, "spectrum", "--config", str(wrong))[0] == 2
        unknown = tmp_path / "unknown.cfg"
        unknown.write_text("n_paths = 10\n")
        code, _, man = run(tmp_path, "spectrum", "--config", str(unknown))
        assert code == 2 and man["error"]["field"] == "n_paths"

    def test_numerical_failure(self, tmp_path, monkeypatch):
        def broken(*args, **kwargs):
            raise NumericalError("stalled", check="ground_state")

        monkeypatch.setattr(cli, "ground_state", broken)
        code, _, man = run(tmp_path, *SPECTRUM)
        assert code == 3
        assert man["error"] == {"check": "ground_state", "message": "stalled"}

    def test_check_failure(self, tmp_path):
        # a tiny box distorts the ground state enough to miss the slope targets
        code, _, man = run(tmp_path, "decay-fit", "--R", "8", "--n", "64", "--fit-lo", "2", "--fit-frac", "0.9")
        assert code == 1
        assert man["status"] == 1
        assert not all(c["passed"] for c in man["checks"])


class TestCommands:
    def test_fk(self, tmp_path):
        code, out, man = run(tmp_path, "fk", "--t", "0.2", "--n-paths", "2000", "--observable", "D", "--x", "0.5,0")
        assert code == 0
        row = next(csv.DictReader((out / "fk.csv").open()))
        assert 0 < float(row["mean"]) <= 1 and row["observable"] == "D"
        assert man["summary"]["mean"] == pytest.approx(float(row["mean"]))

    def test_iu_check_bounded_profile(self, tmp_path):
        code, out, man = run(tmp_path, "iu-check", "--profile", "power:2", "--xs", "4,8", "--t", "0.1", "--n-paths", "20000")
        assert man["summary"]["expected_iu_class"] == "satisfies"
        assert code == 0
        assert len(list(csv.DictReader((out / "iu.csv").open()))) == 2

    def test_verify_lemmas(self, tmp_path):
        code, out, man = run(tmp_path, "verify-lemmas", "--jump-paths", "0", "--window", "100000")
        assert code == 0
        names = {r["check_name"] for r in csv.DictReader((out / "lemmas.csv").open())}
        assert names == {"series_lower", "series_upper", "auxiliary_i", "auxiliary_ii"}
        assert man["summary"]["C1_emp"] > 0

    def test_decay_fit_outputs(self, tmp_path):
        code, out, man = run(tmp_path, "decay-fit", "--R", "8", "--n", "64", "--fit-lo", "2", "--fit-frac", "0.9")
        rows = list(csv.DictReader((out / "decay.csv").open()))
        assert [r["direction"] for r in rows] == ["axis", "diagonal"]
        assert "ratio" in next(csv.DictReader((out / "two_sided.csv").open()))

    def test_iw_check(self, tmp_path):
        code, out, man = run(tmp_path, "iw-check", "--n-paths", "20000", "--quad-n", "200", "--step", "0.005")
        assert code == 0
        row = next(csv.DictReader((out / "iw.csv").open()))
        assert float(row["rhs"]) > 0
