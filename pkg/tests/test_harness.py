import io
import math
from contextlib import redirect_stdout

import numpy as np
import pytest

from retel.harness import (
    AreaData,
    ConfigError,
    ExperimentConfig,
    IngestionError,
    ResultTable,
    TauRule,
    deviation_metrics,
    lambda_pair,
    parse_config,
    qualify,
    read_areas,
    run_coverage,
    run_kl,
    run_lambda_convergence,
    run_logratio_curve,
    run_small_area,
    run_uniformity,
    run_wilks,
    stream,
    synthetic_areas,
    variant_gap_medians,
    write_areas,
)
from retel.harness.cli import main
from retel.harness.experiments import parallel_map
from retel.harness.table import HEADER, round6


class TestConfig:
    def test_defaults(self):
        c = ExperimentConfig.default("uniformity")
        assert c.reps == 2000 and c.n_values == (5, 20, 50, 100)
        assert ExperimentConfig.default("kl").methods == ("ETEL", "RETEL_f")

    def test_parse(self):
        c = parse_config(
            """
            # a comment
            experiment = coverage
            reps = 10   # trailing comment
            n_values = 5, 20
            tau_rule = log_n, constant 2.5
            methods = etel, retel_r
            """
        )
        assert c.experiment == "coverage" and c.reps == 10 and c.n_values == (5, 20)
        assert c.tau_rule == (TauRule(None), TauRule(2.5))
        assert c.methods == ("ETEL", "RETEL_r")
        assert c.s_values == (0.5, 1.0, 5.0)

    @pytest.mark.parametrize(
        "text, needle",
        [
            ("reps = 10\nbogus = 1", "line 2: unknown key"),
            ("reps = 0", "reps must be a positive integer"),
            ("reps = x", "line 1: bad value"),
            ("reps = 1\nreps = 2", "duplicate"),
            ("n_values = 5,,6", "line 1"),
            ("tau_rule = -1", "positive"),
            ("methods = FOO", "line 1"),
            ("s_values = 0", "s_values"),
            ("no equals sign", "expected 'key = value'"),
            ("experiment = wilks", "not 'coverage'"),
        ],
    )
    def test_errors(self, text, needle):
        with pytest.raises(ConfigError, match=needle):
            parse_config(text, "coverage")

    def test_overrides_drop_none(self):
        c = ExperimentConfig.default("wilks").with_overrides(seed=None, reps=3)
        assert c.seed == 0 and c.reps == 3

    def test_tau_rule(self):
        assert TauRule().value(100) == pytest.approx(math.log(100))
        assert TauRule(3.0).value(100) == 3.0
        assert TauRule.parse("log(n)").label == "log_n"
        with pytest.raises(ConfigError):
            TauRule.parse("abc")


class TestTable:
    def test_round_trip(self, tmp_path):
        t = ResultTable("coverage")
        t.add("cr_percent", 94.51234567, 0.5, n=50, s=1.0, l=0.0, tau=math.log(50), method="RETEL_f")
        t.add(qualify("h_sorted", i=3), 0.25, n=5, method="ETEL")
        t.add("x", float("nan"))
        p = tmp_path / "t.csv"
        t.write(p)
        assert p.read_text().splitlines()[0] == ",".join(HEADER)
        back = ResultTable.read(p)
        assert back == t
        assert back.value("cr_percent", "RETEL_f") == 94.5123  # 6 significant digits
        assert back.to_csv() == t.to_csv()

    def test_qualify(self):
        assert qualify("gap", theta=1.0, m=4) == "gap[theta=1;m=4]"
        assert qualify("plain") == "plain"

    def test_round6(self):
        assert round6(1.23456789) == 1.23457
        assert round6(-0.000123456789) == -0.000123457
        assert round6(None) is None


class TestRng:
    def test_streams(self):
        a = stream(7, 1, 2).standard_normal(5)
        np.testing.assert_array_equal(a, stream(7, 1, 2).standard_normal(5))
        assert not np.array_equal(a, stream(7, 1, 3).standard_normal(5))
        assert not np.array_equal(a, stream(7, 2, 2).standard_normal(5))
        stream(2**64 - 1, 0, 0)

    def test_parallel_map_order(self):
        assert parallel_map(lambda x: x * x, range(20), 4) == [x * x for x in range(20)]


def _tiny(exp, **kw):
    return ExperimentConfig.default(exp, **kw)


class TestRunners:
    def test_uniformity(self):
        t = run_uniformity(_tiny("uniformity", reps=20, n_values=(5,), s_values=(1.0,), grid_points=201))
        assert len(t.select("ks_stat")) == 4 * 2 - 2  # RETEL variants run per tau rule
        h = [r.value for r in t.rows if r.metric.startswith("h_sorted") and r.method == "ETEL"]
        assert len(h) == 20 and all(0 <= v <= 1 for v in h) and h == sorted(h)

    def test_coverage_se_shrinks(self):
        small = run_coverage(_tiny("coverage", reps=40, n_values=(20,), s_values=(1.0,), l_values=(0.0,), methods=("RETEL_f",), grid_points=201))
        big = run_coverage(_tiny("coverage", reps=160, n_values=(20,), s_values=(1.0,), l_values=(0.0,), methods=("RETEL_f",), grid_points=201))
        se = lambda t: t.select("length")[0].se  # noqa: E731
        assert se(big) < se(small)
        assert 0 <= big.value("cr_percent") <= 100

    def test_kl(self):
        t = run_kl(_tiny("kl", reps=2, n_values=(2,), steps=400, emit_density=True))
        assert t.value("ekl", "ETEL") >= 0 and t.value("ekl", "RETEL_f") >= 0
        assert any(r.metric.startswith("density[") for r in t.rows)

    def test_lambda(self):
        lw, lr = lambda_pair(1.0, 4096)
        assert lr == pytest.approx(0.2315, abs=1e-3)
        assert abs(lw - lr) < 1e-2
        t = run_lambda_convergence(_tiny("lambda_convergence", theta_values=(1.0,)))
        gaps = [t.value(qualify("gap", theta=1.0, m=2**k)) for k in range(4, 13)]
        assert all(b <= a for a, b in zip(gaps, gaps[1:]))

    def test_logratio(self):
        t = run_logratio_curve(_tiny("logratio_curve", grid_points=61))
        g = [r.value for r in t.select("max_gap")]
        assert g[0] > g[1] > g[2]
        for m in ("RETEL_f", "RETEL_r"):
            assert t.value(qualify("log_ratio", theta=0.0), m, tau=1.0) == 0.0

    def test_wilks(self):
        t = run_wilks(_tiny("wilks", reps=50, n_values=(30,)))
        assert t.value("hull_violations", "RETEL_f") == 0
        assert 0 <= t.value("ks_pvalue", "ETEL") <= 1

    def test_gap_medians_shrink(self):
        a, b = variant_gap_medians((50, 800), 100, mu=1.0)
        assert b < a


class TestSmallArea:
    def test_metrics(self):
        m = deviation_metrics([1.0, 2.0], [2.0, 2.0])
        assert m == pytest.approx(dict(aad=0.5, asd=0.5, aard=0.25, asrd=0.125))
        z = deviation_metrics([0.0, 1.0], [0.0, 1.0])
        assert all(v == 0 for v in z.values())

    def test_read_round_trip(self, tmp_path):
        d = synthetic_areas(np.random.default_rng(0), n=10)
        p = tmp_path / "a.csv"
        write_areas(p, d)
        back = read_areas(p)
        np.testing.assert_array_equal(back.y, d.y)
        np.testing.assert_array_equal(back.X, d.X)

    @pytest.mark.parametrize(
        "body, row, col",
        [
            ("y,x1\n1,2\n", 1, "x2"),
            ("y,x1,x2\n1,2,3\n4,abc,6\n7,8,9\n", 3, "x1"),
            ("y,x1,x2\n1,2,3\n4,5,inf\n7,8,9\n", 3, "x2"),
            ("y,x1,x2\n1,2,3\n4,5\n7,8,9\n", 3, "x2"),
        ],
    )
    def test_read_errors(self, tmp_path, body, row, col):
        p = tmp_path / "bad.csv"
        p.write_text(body)
        with pytest.raises(IngestionError) as e:
            read_areas(p)
        assert e.value.row == row and e.value.column == col

    def test_too_few(self, tmp_path):
        p = tmp_path / "few.csv"
        p.write_text("y,x1,x2\n1,2,3\n\n4,5,6\n")
        with pytest.raises(IngestionError, match="at least 3"):
            read_areas(p)

    def test_pipeline_smoke(self, tmp_path):
        p = tmp_path / "a.csv"
        write_areas(p, synthetic_areas(np.random.default_rng(1), n=12))
        cfg = _tiny("small_area", methods=("ETEL", "RETEL_r"), steps=600, chains=2)
        t = run_small_area(p, cfg)
        assert len([r for r in t.rows if r.metric.startswith("theta_hat")]) == 24
        assert t.value("asrd", "RETEL_r") >= 0


class TestCli:
    def run(self, *argv):
        buf = io.StringIO()
        with redirect_stdout(buf):
            code = main(list(argv))
        return code, buf.getvalue()

    def test_ok_stdout(self):
        code, out = self.run("logratio_curve")
        assert code == 0 and out.splitlines()[0] == ",".join(HEADER)

    def test_ok_file_and_config(self, tmp_path):
        cfg = tmp_path / "c.txt"
        cfg.write_text("reps = 10\nn_values = 20\n")
        out = tmp_path / "o.csv"
        code, _ = self.run("wilks", "--config", str(cfg), "--out", str(out), "--seed", "5")
        assert code == 0
        assert ResultTable.read(out).value("hull_violations", "ETEL") >= 0

    def test_config_error(self, tmp_path, capsys):
        cfg = tmp_path / "c.txt"
        cfg.write_text("nonsense = 1\n")
        assert main(["wilks", "--config", str(cfg)]) == 2
        assert "unknown key" in capsys.readouterr().err
        assert main(["wilks", "--reps", "0"]) == 2
        assert main(["small_area"]) == 2

    def test_ingest_error(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("y,x1,x2\n1,2,nope\n")
        assert main(["small_area", "--data", str(p)]) == 3


def test_area_data_shape():
    d = AreaData(np.zeros(3), np.zeros((3, 2)))
    assert d.n == 3
