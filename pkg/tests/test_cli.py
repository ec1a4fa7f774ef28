import csv

import numpy as np
import pytest

from mlmcsde.cli import _fmt, main


def _read(path):
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# mlmc-bench ")
    reader = csv.DictReader(lines[1:])
    return list(reader)


def _body(path):
    return path.read_text().split("\n", 1)[1]


class TestFormatting:
    def test_float_round_trip(self):
        rng = np.random.default_rng(0)
        for x in rng.normal(size=50) * 10.0 ** rng.integers(-8, 8, size=50):
            assert float(_fmt(x)) == x
        assert _fmt(True) == "true"
        assert _fmt(7) == "7"


class TestVarianceScan:
    def test_rows_and_determinism(self, tmp_path):
        out1 = tmp_path / "a.csv"
        out2 = tmp_path / "b.csv"
        args = ["variance-scan", "--scheme", "euler", "--samples", "500",
                "--seed", "4", "--refine", "2"]
        assert main(args + ["--out", str(out1)]) == 0
        assert main(args + ["--out", str(out2), "--threads", "8"]) == 0
        assert _body(out1) == _body(out2)
        rows = _read(out1)
        assert len(rows) == 6
        for row in rows:
            assert row["scheme"] == "euler"
            h = float(row["h_l"])
            assert h == pytest.approx(0.125 * 2.0 ** -int(row["level"]))
            assert float(row["V_l_over_h_l"]) == pytest.approx(
                float(row["V_l"]) / h, rel=1e-12)
            assert int(row["N_used"]) == 500

    def test_zero_noise_rows(self, tmp_path):
        out = tmp_path / "z.csv"
        assert main(["variance-scan", "--model", "gbm", "--payoff", "linear",
                     "--param", "sigma=0", "--samples", "10",
                     "--out", str(out)]) == 0
        for row in _read(out):
            assert float(row["V_l"]) == 0.0

    def test_incompatible_scheme_exits_1(self, tmp_path):
        assert main(["variance-scan", "--scheme", "milstein",
                     "--model", "heston", "--samples", "10",
                     "--out", str(tmp_path / "x.csv")]) == 1


class TestCostScan:
    def test_rows(self, tmp_path):
        out = tmp_path / "c.csv"
        assert main(["cost-scan", "--scheme", "euler", "--eps", "1e-2",
                     "--eps", "5e-3", "--refine", "2", "--seed", "1",
                     "--out", str(out)]) == 0
        rows = _read(out)
        assert len(rows) == 2
        for row in rows:
            assert row["converged"] == "true"
            assert float(row["eps2K"]) == pytest.approx(
                float(row["eps"]) ** 2 * float(row["K"]), rel=1e-12)
            assert int(row["L_final"]) >= 2

    def test_non_convergence_exits_2(self, tmp_path):
        out = tmp_path / "n.csv"
        code = main(["cost-scan", "--model", "gbm", "--payoff", "linear",
                     "--param", "sigma=0.01", "--eps", "1e-3",
                     "--max-level", "2", "--refine", "2", "--out", str(out)])
        assert code == 2
        assert _read(out)[0]["converged"] == "false"


class TestWorkProfile:
    def test_fractions_normalized(self, tmp_path):
        out = tmp_path / "w.csv"
        assert main(["work-profile", "--scheme", "euler", "--scheme",
                     "antithetic", "--eps", "2e-3", "--refine", "2",
                     "--seed", "2", "--out", str(out)]) == 0
        rows = _read(out)
        for scheme in ("euler", "antithetic"):
            fracs = [float(r["fraction_of_total_steps"]) for r in rows
                     if r["scheme"] == scheme]
            assert sum(fracs) == pytest.approx(1.0, abs=1e-12)

    def test_base_level_dominates_without_linearization(self, tmp_path):
        out = tmp_path / "w2.csv"
        assert main(["work-profile", "--scheme", "euler", "--scheme",
                     "antithetic", "--eps", "5e-4", "--refine", "2",
                     "--seed", "2", "--out", str(out)]) == 0
        rows = _read(out)
        for scheme in ("euler", "antithetic"):
            fracs = {int(r["level"]): float(r["fraction_of_total_steps"])
                     for r in rows if r["scheme"] == scheme}
            assert fracs[0] == max(fracs.values())

    def test_linearized_base_level_is_free(self, tmp_path):
        out = tmp_path / "w3.csv"
        assert main(["work-profile", "--scheme", "approx-milstein",
                     "--eps", "2e-3", "--refine", "2", "--out",
                     str(out)]) == 0
        rows = _read(out)
        levels = {int(r["level"]): float(r["fraction_of_total_steps"])
                  for r in rows}
        assert levels[0] == 0.0


class TestConfigFile:
    def test_config_supplies_defaults_and_flags_override(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text(
            "eps = 1e-2, 5e-3   # sweep\n"
            "scheme = euler\n"
            "refine = 2\n"
            "seed = 9\n")
        out1 = tmp_path / "c1.csv"
        assert main(["cost-scan", "--config", str(cfg),
                     "--out", str(out1)]) == 0
        rows = _read(out1)
        assert [float(r["eps"]) for r in rows] == [1e-2, 5e-3]
        # flag wins over file
        out2 = tmp_path / "c2.csv"
        assert main(["cost-scan", "--config", str(cfg), "--eps", "2e-2",
                     "--out", str(out2)]) == 0
        assert [float(r["eps"]) for r in _read(out2)] == [2e-2]

    def test_malformed_config_exits_1(self, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("this is not a pair\n")
        assert main(["cost-scan", "--config", str(cfg)]) == 1

    def test_bad_flag_exits_1(self):
        assert main(["cost-scan", "--scheme", "bogus"]) == 1
        assert main(["cost-scan", "--refine", "1"]) == 1
        assert main(["cost-scan", "--param", "strike"]) == 1


class TestEstimate:
    def test_prints_summary(self, capsys):
        assert main(["estimate", "--model", "gbm", "--payoff", "linear",
                     "--eps", "1e-2", "--refine", "2", "--seed", "3"]) == 0
        text = capsys.readouterr().out
        assert "estimate=" in text
        assert "level 0" in text
