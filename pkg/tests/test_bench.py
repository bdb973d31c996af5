import math

import numpy as np
import pytest

from ckriging.bench import (
    CSV_HEADER,
    ExperimentConfig,
    ResultRow,
    emit_results,
    read_results,
    run_experiment,
)
from ckriging.dataio import load_csv, write_dataset_csv
from ckriging.exceptions import InputError, ParameterError
from ckriging.functions import synth_dataset


def _quick_config(**kwargs):
    base = dict(
        flavors=("owck", "sod"),
        clusters=(2, 3, 4),
        subset_sizes=(20, 40, 60),
        function="rastrigin",
        n=100,
        d=2,
        folds=5,
        seed=0,
        restarts=1,
    )
    base.update(kwargs)
    return ExperimentConfig(**base)


class TestLoadCsv:
    def test_small_file(self, tmp_path):
        path = tmp_path / "tiny.csv"
        path.write_text("a,b,y\n1,2,3\n4,5,6\n7,8,9\n")
        ds = load_csv(path)
        assert ds.X.shape == (3, 2)
        np.testing.assert_array_equal(ds.y, [3.0, 6.0, 9.0])

    def test_target_column_by_name(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text("a,y,b\n1,2,3\n4,5,6\n")
        ds = load_csv(path, target_column="y")
        np.testing.assert_array_equal(ds.y, [2.0, 5.0])
        np.testing.assert_array_equal(ds.X, [[1.0, 3.0], [4.0, 6.0]])

    def test_non_numeric_cell_reported_with_location(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b,y\n1,2,3\n4,oops,6\n")
        with pytest.raises(InputError) as err:
            load_csv(path)
        msg = str(err.value)
        assert "row 3" in msg
        assert "'b'" in msg

    def test_missing_target(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text("a,b\n1,2\n")
        with pytest.raises(ParameterError):
            load_csv(path, target_column="nope")

    def test_missing_file(self, tmp_path):
        with pytest.raises(InputError):
            load_csv(tmp_path / "absent.csv")

    def test_round_trip_preserves_values(self, tmp_path):
        ds = synth_dataset("ackley", 40, 3, seed=4)
        path = tmp_path / "round.csv"
        write_dataset_csv(ds, path)
        back = load_csv(path)
        np.testing.assert_allclose(back.X, ds.X, rtol=0, atol=1e-12)
        np.testing.assert_allclose(back.y, ds.y, rtol=0, atol=1e-12)


class TestExperimentConfig:
    def test_sweeps_sorted_and_deduped(self):
        cfg = _quick_config(clusters=(4, 2, 4, 3))
        assert cfg.clusters == (2, 3, 4)

    def test_non_positive_sweep_rejected(self):
        with pytest.raises(ParameterError):
            _quick_config(clusters=(0, 2))

    def test_unknown_flavor_rejected(self):
        with pytest.raises(ParameterError):
            _quick_config(flavors=("owck", "nope"))

    def test_synthetic_needs_enough_points(self):
        with pytest.raises(ParameterError):
            _quick_config(n=40, folds=5)

    def test_sweep_values_per_flavor(self):
        cfg = _quick_config()
        assert cfg.sweep_values("owck") == (2, 3, 4)
        assert cfg.sweep_values("sod") == (20, 40, 60)
        assert cfg.sweep_values("full") == (0,)


class TestRunExperiment:
    def test_cardinality_and_order(self):
        cfg = _quick_config()
        seen = []
        rows = run_experiment(cfg, on_row=lambda r: seen.append((r.flavor, r.sweep, r.fold)))
        fold_rows = [r for r in rows if r.fold != "mean"]
        mean_rows = [r for r in rows if r.fold == "mean"]
        assert len(fold_rows) == 2 * 3 * 5
        assert len(mean_rows) == 2 * 3
        # deterministic emission order: per group folds 0..4 then "mean"
        expect = []
        for flavor in cfg.flavors:
            for sweep in cfg.sweep_values(flavor):
                expect += [(flavor, sweep, f) for f in range(5)]
                expect += [(flavor, sweep, "mean")]
        assert seen == expect
        assert all(r.error is None for r in rows)

    def test_aggregate_is_fold_mean(self):
        cfg = _quick_config(flavors=("owck",), clusters=(2,))
        rows = run_experiment(cfg)
        folds = [r for r in rows if r.fold != "mean"]
        agg = [r for r in rows if r.fold == "mean"][0]
        for col in ("r2", "smse", "msll", "fit_time_s", "predict_time_s"):
            assert getattr(agg, col) == pytest.approx(
                np.mean([getattr(r, col) for r in folds]), abs=1e-12
            )

    def test_metric_determinism(self):
        cfg = _quick_config(flavors=("owck",), clusters=(2, 4))
        a = run_experiment(cfg)
        b = run_experiment(cfg)
        for ra, rb in zip(a, b):
            assert (ra.r2, ra.smse, ra.msll) == (rb.r2, rb.smse, rb.msll)

    def test_workers_do_not_change_metrics(self):
        cfg1 = _quick_config(flavors=("owck",), clusters=(2,), workers=1)
        cfg4 = _quick_config(flavors=("owck",), clusters=(2,), workers=4)
        a = run_experiment(cfg1)
        b = run_experiment(cfg4)
        for ra, rb in zip(a, b):
            assert (ra.r2, ra.smse, ra.msll) == (rb.r2, rb.smse, rb.msll)

    def test_sod_with_full_subset_matches_full_kriging(self):
        cfg = _quick_config(flavors=("sod", "full"), subset_sizes=(80,), folds=5)
        rows = run_experiment(cfg)
        sod = [r for r in rows if r.flavor == "sod" and r.fold == "mean"][0]
        full = [r for r in rows if r.flavor == "full" and r.fold == "mean"][0]
        assert sod.r2 == pytest.approx(full.r2, abs=1e-8)

    def test_failed_cells_recorded_not_raised(self):
        cfg = _quick_config(flavors=("sod",), subset_sizes=(1,))
        rows = run_experiment(cfg)
        folds = [r for r in rows if r.fold != "mean"]
        assert all(r.error is not None for r in folds)
        assert all(math.isnan(r.r2) for r in folds)
        agg = [r for r in rows if r.fold == "mean"][0]
        assert agg.error == "all folds failed"

    def test_test_folds_disjoint_from_training(self):
        from ckriging.metrics import kfold_split

        fold_of = kfold_split(100, 5, seed=0)
        for f in range(5):
            test = np.flatnonzero(fold_of == f)
            train = np.flatnonzero(fold_of != f)
            assert len(np.intersect1d(test, train)) == 0
            assert len(test) + len(train) == 100


class TestEmitResults:
    def _rows(self):
        return [
            ResultRow(dataset="rastrigin", flavor="mtck", sweep=8, fold=0,
                      r2=0.987654321, smse=0.0123456789, msll=-2.511111,
                      fit_time_s=1.23456789, predict_time_s=0.001234567),
        ]

    def test_single_row_csv(self, tmp_path):
        path = tmp_path / "r.csv"
        emit_results(self._rows(), "csv", path)
        lines = path.read_text().strip().split("\n")
        assert len(lines) == 2
        assert lines[0] == CSV_HEADER
        assert lines[1] == "rastrigin,mtck,8,0,0.987654,0.0123457,-2.51111,1.23457,0.00123457"

    def test_empty_rows_refused(self, tmp_path):
        with pytest.raises(ParameterError):
            emit_results([], "csv", tmp_path / "x.csv")

    def test_unknown_format_refused(self, tmp_path):
        with pytest.raises(ParameterError):
            emit_results(self._rows(), "xml", tmp_path / "x.xml")

    def test_json_round_trip(self, tmp_path):
        path = tmp_path / "r.json"
        rows = self._rows()
        emit_results(rows, "json", path)
        back = read_results(path)
        assert len(back) == 1
        got, want = back[0], rows[0]
        assert (got.dataset, got.flavor, got.sweep, got.fold) == ("rastrigin", "mtck", 8, 0)
        for col in ("r2", "smse", "msll", "fit_time_s", "predict_time_s"):
            # six significant digits survive the trip
            assert getattr(got, col) == pytest.approx(getattr(want, col), rel=1e-5)

    def test_csv_round_trip_with_mean_and_failure(self, tmp_path):
        rows = self._rows() + [
            ResultRow(dataset="rastrigin", flavor="mtck", sweep=8, fold="mean",
                      r2=0.99, smse=0.01, msll=-2.5, fit_time_s=1.0, predict_time_s=0.1),
            ResultRow(dataset="rastrigin", flavor="sod", sweep=1, fold=0,
                      error="ParameterError: cluster 0 has 1 point(s)"),
        ]
        path = tmp_path / "r.csv"
        emit_results(rows, "csv", path)
        back = read_results(path)
        assert back[1].fold == "mean"
        assert math.isnan(back[2].r2)
