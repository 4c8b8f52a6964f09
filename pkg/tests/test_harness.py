"""Tests for the Monte Carlo driver, emission, and the CLI."""

import numpy as np
import pytest

from marnsim.airlink import NetworkConfig
from marnsim.cli import main
from marnsim.harness import (
    CSV_HEADER,
    BerPoint,
    ExperimentSpec,
    ber_slope_from_csv,
    canned_spec,
    emit,
    load_config_file,
    parse_csv,
    run_diversity,
    run_experiment,
    wilson_interval,
)
from marnsim.numerics import UsageError
from marnsim.schemes import SchemeId


def _tiny_spec(**kw):
    base = dict(
        schemes=(SchemeId.TdmaIcRec,),
        configs=((2, 2, 3),),
        snr_db=(6.0, 10.0),
        min_errors=50,
        max_trials=8192,
        seed=3,
    )
    base.update(kw)
    return ExperimentSpec(**base)


class TestWilsonInterval:
    def test_degenerate(self):
        assert wilson_interval(0, 0) == (0.0, 1.0)

    def test_contains_point_estimate(self):
        lo, hi = wilson_interval(13, 1000)
        assert lo < 0.013 < hi

    def test_coverage_calibration(self):
        # Empirical coverage of the 95% interval over binomial draws.
        rng = np.random.default_rng(0)
        p, n, reps = 0.02, 800, 2000
        hits = 0
        for k in rng.binomial(n, p, reps):
            lo, hi = wilson_interval(int(k), n)
            hits += lo <= p <= hi
        assert hits / reps > 0.93


class TestExperimentSpec:
    def test_bad_grid_raises(self):
        with pytest.raises(UsageError):
            _tiny_spec(snr_db=(10.0, 10.0))
        with pytest.raises(UsageError):
            _tiny_spec(snr_db=())

    def test_bad_stop_rule_raises(self):
        with pytest.raises(UsageError):
            _tiny_spec(min_errors=-1)

    def test_order_for(self):
        spec = _tiny_spec(orders={SchemeId.TdmaIcRec: 8}, default_order=4)
        assert spec.order_for(SchemeId.TdmaIcRec) == 8
        assert spec.order_for(SchemeId.DstcIcRec) == 4


class TestRunExperiment:
    def test_trial_budget_respected(self):
        spec = _tiny_spec(min_errors=10**9, max_trials=10, snr_db=(10.0,))
        (pt,) = run_experiment(spec)
        assert pt.trials == 10
        assert pt.bits == (pt.trials - pt.erasures) * 2  # J=2, T=1, BPSK

    def test_deterministic_csv(self):
        a = emit(run_experiment(_tiny_spec()))
        b = emit(run_experiment(_tiny_spec()))
        assert a == b

    def test_worker_count_invariance(self):
        spec1 = _tiny_spec(workers=1)
        spec2 = _tiny_spec(workers=2)
        assert emit(run_experiment(spec1)) == emit(run_experiment(spec2))

    def test_stops_after_min_errors(self):
        spec = _tiny_spec(snr_db=(0.0,), min_errors=20, max_trials=2_000_000)
        (pt,) = run_experiment(spec)
        assert pt.bit_errors >= 20
        assert pt.trials < 2_000_000


class TestEmitParse:
    def test_empty_raises(self):
        with pytest.raises(UsageError):
            emit([])

    def test_csv_round_trip(self):
        points = run_experiment(_tiny_spec())
        back = parse_csv(emit(points))
        assert back == points

    def test_csv_header_exact(self):
        assert CSV_HEADER == (
            "scheme,J,M,N,snr_db,trials,erasures,bits,bit_errors,ber,ci95_lo,ci95_hi"
        )
        text = emit(run_experiment(_tiny_spec()))
        assert text.splitlines()[0] == CSV_HEADER

    def test_plotdata_blocks(self):
        spec = _tiny_spec(configs=((2, 2, 3), (2, 2, 2)))
        text = emit(run_experiment(spec), fmt="plotdata")
        blocks = text.strip().split("\n\n")
        assert len(blocks) == 2
        assert blocks[0].startswith("# scheme=tdma_icrec J=2 M=2 N=3")
        first = blocks[0].splitlines()[1].split()
        assert float(first[0]) == 6.0 and float(first[1]) > 0

    def test_unknown_format_raises(self):
        with pytest.raises(UsageError):
            emit(run_experiment(_tiny_spec(snr_db=(10.0,))), fmt="json")

    def test_parse_bad_header_raises(self):
        with pytest.raises(UsageError):
            parse_csv("foo,bar\n1,2\n")

    def test_parse_bad_row_raises(self):
        with pytest.raises(UsageError):
            parse_csv(CSV_HEADER + "\n1,2,3\n")

    def test_parse_from_path(self, tmp_path):
        points = run_experiment(_tiny_spec(snr_db=(10.0,)))
        path = tmp_path / "out.csv"
        emit(points, path=str(path))
        assert parse_csv(str(path)) == points


class TestBerSlopeFromCsv:
    def test_synthetic_slope(self):
        pts = [
            BerPoint(SchemeId.TdmaIcRec, 2, 2, 3, snr, 10**8, 0, 10**8, errs)
            for snr, errs in [
                (10, int(10**8 * 0.5 * 10**-2.0)),
                (15, int(10**8 * 0.5 * 10**-3.0)),
                (20, int(10**8 * 0.5 * 10**-4.0)),
                (25, int(10**8 * 0.5 * 10**-5.0)),
            ]
        ]
        slopes = ber_slope_from_csv(emit(pts))
        est = slopes[(SchemeId.TdmaIcRec, 2, 2, 3)]
        assert abs(est.slope - 2.0) < 0.05


class TestCannedSpec:
    def test_concurrent_sweep_configs(self):
        spec = canned_spec("fig4")
        assert (3, 4, 3) in spec.configs
        assert spec.schemes == (SchemeId.DstcIcRec,)
        assert spec.default_order == 2

    def test_comparison_orders(self):
        spec = canned_spec("fig7")
        assert spec.configs == ((2, 2, 3),)
        assert spec.orders[SchemeId.FullTdmaDstc] == 16
        assert spec.orders[SchemeId.DstcIcRec] == 4

    def test_unknown_raises(self):
        with pytest.raises(UsageError):
            canned_spec("fig9")


class TestRunDiversity:
    def test_tdma_223_slope_two(self):
        cfg = NetworkConfig(2, 2, 3, 10.0 ** 2.0)
        est = run_diversity(SchemeId.TdmaIcRec, cfg, trials=1_000_000, seed=0)
        assert abs(est.slope - 2.0) < 0.3

    def test_unsupported_scheme_raises(self):
        cfg = NetworkConfig(2, 2, 3, 10.0)
        with pytest.raises(UsageError):
            run_diversity(SchemeId.FullTdmaDstc, cfg, trials=1000)


class TestConfigFile:
    def test_load_and_merge(self, tmp_path):
        path = tmp_path / "sim.ini"
        path.write_text(
            "[simulate]\nscheme = tdma_icrec\nconfig = 2,2,3\n"
            "snr-db = 6:4:10\nmin-errors = 5\nmax-trials = 4096\nseed = 3\n"
        )
        settings = load_config_file(str(path))
        assert settings["snr_db"] == "6:4:10"
        assert settings["min_errors"] == "5"

    def test_missing_file_raises(self):
        with pytest.raises(UsageError):
            load_config_file("/nonexistent/sim.ini")


class TestCli:
    def test_simulate_csv_to_stdout(self, capsys):
        rc = main(
            [
                "simulate",
                "--scheme", "tdma_icrec",
                "--config", "2,2,3",
                "--snr-db", "10",
                "--min-errors", "5",
                "--max-trials", "4096",
            ]
        )
        out = capsys.readouterr().out
        assert rc == 0
        assert out.splitlines()[0] == CSV_HEADER
        assert len(out.strip().splitlines()) == 2

    def test_simulate_missing_scheme_is_usage_error(self, capsys):
        rc = main(["simulate", "--config", "2,2,3"])
        assert rc == 1
        assert "error:" in capsys.readouterr().err

    def test_simulate_invalid_config_is_usage_error(self, capsys):
        rc = main(
            ["simulate", "--scheme", "tdma_icrec", "--config", "3,2,4",
             "--snr-db", "10", "--max-trials", "100"]
        )
        assert rc == 1

    def test_config_file_with_cli_override(self, tmp_path, capsys):
        path = tmp_path / "sim.ini"
        path.write_text(
            "[simulate]\nscheme = tdma_icrec\nconfig = 2,2,3\n"
            "snr-db = 6\nmin-errors = 5\nmax-trials = 4096\n"
        )
        rc = main(["simulate", "--config-file", str(path), "--snr-db", "8"])
        out = capsys.readouterr().out
        assert rc == 0
        row = out.strip().splitlines()[1].split(",")
        assert float(row[4]) == 8.0

    def test_diversity_from_csv(self, tmp_path, capsys):
        pts = [
            BerPoint(SchemeId.TdmaIcRec, 2, 2, 3, snr, 10**7, 0, 10**7, errs)
            for snr, errs in [(10, 500000), (15, 50000), (20, 5000), (25, 500)]
        ]
        path = tmp_path / "curve.csv"
        emit(pts, path=str(path))
        rc = main(["diversity", "--from-csv", str(path)])
        out = capsys.readouterr().out
        assert rc == 0
        assert "tdma_icrec 2x2x3: slope" in out

    def test_diversity_outage(self, capsys):
        rc = main(
            ["diversity", "--scheme", "tdma_icrec", "--config", "2,2,2",
             "--snr-db", "20", "--trials", "200000"]
        )
        out = capsys.readouterr().out
        assert rc == 0
        assert "outage slope" in out

    def test_selftest_exit_zero(self, capsys):
        assert main(["selftest"]) == 0
