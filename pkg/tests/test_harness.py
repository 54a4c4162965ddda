"""Tests for experiment configs, the Monte Carlo driver, and report emission."""

import dataclasses

import numpy as np
import pytest
from numpy.testing import assert_allclose

from stochwave import analysis, harness, noise
from stochwave.errors import SampleFailureError


def small_white_config(**overrides):
    base = harness.ExperimentConfig(
        name="small_white",
        levels=((0.5, 0.5), (0.25, 0.25), (0.125, 0.125)),
        reference=(2.0**-5, 2.0**-5),
        coupling_rule="dt=h",
        mc=harness.MonteCarloSpec(n_samples=20, master_seed=7, worker_count=1),
        noise=noise.white_noise(),
        drift=harness.DriftSpec("cos"),
        method="crank_nicolson",
        initial=harness.InitialDataSpec("hat", "indicator"),
    )
    return dataclasses.replace(base, **overrides)


class TestBuiltins:
    def test_white_noise_echoes_published_setup(self):
        cfg = harness.builtin_experiment("white_noise_1d")
        assert cfg.mc.n_samples == 2000
        assert cfg.reference == (2.0**-8, 2.0**-8)
        assert [h for h, _ in cfg.levels] == [2.0**-k for k in range(1, 7)]
        assert cfg.drift.name == "cos"
        assert cfg.coupling_rule == "dt=h"
        cfg.validate()

    def test_trace_class_echoes_published_setup(self):
        cfg = harness.builtin_experiment("trace_class_1d")
        assert cfg.mc.n_samples == 500
        assert cfg.reference[1] == 2.0**-12
        assert cfg.reference[0] == 2.0**-6
        assert cfg.noise.kernel_name == "scaled_exponential"
        assert cfg.noise.params == (25.0, 0.0625)
        assert cfg.drift.name == "sin"
        assert cfg.initial == harness.InitialDataSpec("zero", "zero")
        cfg.validate()

    def test_deterministic_eigenmode_is_noise_free(self):
        cfg = harness.builtin_experiment("deterministic_eigenmode")
        assert cfg.noise is None
        assert cfg.drift.name == "zero"
        cfg.validate()

    def test_modal_validation_config(self):
        cfg = harness.builtin_experiment("linear_modal_validation")
        assert cfg.reference_kind == "modal"
        assert cfg.negnorm_nu == 0.5
        cfg.validate()

    def test_unknown_name(self):
        with pytest.raises(ValueError):
            harness.builtin_experiment("white_noise_3d")


class TestConfigValidation:
    def test_non_nested_level(self):
        cfg = small_white_config(levels=((1.0 / 3.0, 1.0 / 3.0),))
        with pytest.raises(ValueError):
            cfg.validate()

    def test_coupling_rule_violation(self):
        cfg = small_white_config(levels=((0.5, 0.25),))
        with pytest.raises(ValueError, match="coupling"):
            cfg.validate()

    def test_levels_must_refine(self):
        cfg = small_white_config(levels=((0.25, 0.25), (0.5, 0.5)))
        with pytest.raises(ValueError, match="decreasing"):
            cfg.validate()

    def test_modal_requires_linear(self):
        cfg = small_white_config(reference_kind="modal")
        with pytest.raises(ValueError):
            cfg.validate()

    def test_non_integral_horizon(self):
        cfg = small_white_config(T=0.7)
        with pytest.raises(ValueError):
            cfg.validate()


class TestRunExperiment:
    def test_level_equal_to_reference_gives_zero_errors(self):
        cfg = small_white_config(
            levels=((2.0**-5, 2.0**-5),),
            mc=harness.MonteCarloSpec(n_samples=2, master_seed=0, worker_count=1),
        )
        report = harness.run_convergence_experiment(cfg)
        row = report.table.rows[0]
        assert row.strong_error == 0.0
        assert row.weak_signed == 0.0
        assert row.noise_floor_flag is True

    def test_deterministic_eigenmode_second_order(self):
        report = harness.run_convergence_experiment(
            harness.builtin_experiment("deterministic_eigenmode")
        )
        fit = report.fits["strong"]
        assert abs(fit.slope - 2.0) <= 0.3
        assert fit.r_squared > 0.999

    def test_report_is_pure_function_of_seed(self):
        cfg = small_white_config()
        a = harness.run_convergence_experiment(cfg)
        b = harness.run_convergence_experiment(cfg)
        assert harness._errors_csv_text(a.table) == harness._errors_csv_text(b.table)
        c = harness.run_convergence_experiment(
            small_white_config(mc=harness.MonteCarloSpec(20, 8, 1))
        )
        assert harness._errors_csv_text(a.table) != harness._errors_csv_text(c.table)

    def test_worker_count_does_not_change_results(self):
        serial = harness.run_convergence_experiment(small_white_config())
        parallel = harness.run_convergence_experiment(
            small_white_config(mc=harness.MonteCarloSpec(20, 7, 2))
        )
        assert harness._errors_csv_text(serial.table) == harness._errors_csv_text(parallel.table)

    def test_monotone_coupling_sanity(self):
        # per-sample coarse-minus-reference distances shrink with refinement;
        # levels two dyadic steps apart so the contrast beats path-to-path noise
        cfg = small_white_config(
            levels=((0.5, 0.5), (0.125, 0.125), (2.0**-5, 2.0**-5)),
            reference=(2.0**-7, 2.0**-7),
            drift=harness.DriftSpec("zero"),
            initial=harness.InitialDataSpec("zero", "zero"),
            mc=harness.MonteCarloSpec(100, 3, 1),
        )
        runtime = harness._ExperimentRuntime(cfg)
        monotone = 0
        for i in range(100):
            d2 = runtime.run_sample(i)[:, 0]
            monotone += bool(np.all(np.diff(d2) <= 0.0))
        assert monotone >= 90

    @pytest.mark.filterwarnings("ignore:overflow")
    def test_sample_failure_carries_provenance(self):
        cfg = small_white_config(
            drift=harness.DriftSpec("linear", coeff=1e200),
            mc=harness.MonteCarloSpec(n_samples=2, master_seed=0, worker_count=1),
        )
        with pytest.raises(SampleFailureError) as err:
            harness.run_convergence_experiment(cfg)
        assert err.value.sample_index == 0

    def test_doubling_samples_consistent_estimates(self):
        # strong estimates at independent N and 2N agree within 3 pooled SEs
        cfg_a = dataclasses.replace(
            harness.builtin_experiment("white_noise_1d"),
            mc=harness.MonteCarloSpec(250, 11, 2),
        )
        cfg_b = dataclasses.replace(
            harness.builtin_experiment("white_noise_1d"),
            mc=harness.MonteCarloSpec(500, 12, 2),
        )
        rep_a = harness.run_convergence_experiment(cfg_a)
        rep_b = harness.run_convergence_experiment(cfg_b)
        for ra, rb in zip(rep_a.table.rows, rep_b.table.rows):
            pooled = np.hypot(ra.strong_se, rb.strong_se)
            assert abs(ra.strong_error - rb.strong_error) <= 3.0 * pooled


class TestEmitReport:
    def test_files_and_roundtrip(self, tmp_path):
        cfg = small_white_config()
        report = harness.run_convergence_experiment(cfg)
        paths = harness.emit_report(report, tmp_path)
        names = {p.split("/")[-1] for p in map(str, paths)}
        assert {"errors.csv", "rates.csv", "config.txt", "summary.txt"} <= names
        table = harness.read_error_table(tmp_path / "errors.csv")
        assert len(table.rows) == len(report.table.rows)
        for got, want in zip(table.rows, report.table.rows):
            assert got.level == want.level
            assert got.h == want.h and got.dt == want.dt
            assert got.strong_error == want.strong_error
            assert got.strong_se == want.strong_se
            assert got.weak_signed == want.weak_signed
            assert got.noise_floor_flag == want.noise_floor_flag
        # emission of the parsed table is byte-identical
        assert harness._errors_csv_text(table) == harness._errors_csv_text(report.table)

    def test_single_level_report_has_one_row(self, tmp_path):
        cfg = small_white_config(
            levels=((0.25, 0.25),),
            mc=harness.MonteCarloSpec(n_samples=4, master_seed=1, worker_count=1),
        )
        report = harness.run_convergence_experiment(cfg)
        harness.emit_report(report, tmp_path)
        lines = (tmp_path / "errors.csv").read_text().strip().splitlines()
        assert lines[0] == harness.ERRORS_CSV_COLUMNS
        assert len(lines) == 2

    def test_config_echo_reparses(self, tmp_path):
        from stochwave import cli

        cfg = harness.builtin_experiment("white_noise_1d")
        text = harness.config_echo_text(cfg)
        parsed = cli.parse_config(text)
        assert parsed.get("mc.samples") == 2000
        assert parsed.get("levels") == cfg.levels
        assert parsed.get("reference.h") == cfg.reference[0]

    def test_negnorm_column_roundtrip(self, tmp_path):
        cfg = dataclasses.replace(
            harness.builtin_experiment("linear_modal_validation"),
            mc=harness.MonteCarloSpec(10, 0, 1),
        )
        report = harness.run_convergence_experiment(cfg)
        harness.emit_report(report, tmp_path)
        table = harness.read_error_table(tmp_path / "errors.csv")
        assert all(row.negnorm_error is not None for row in table.rows)
        assert (tmp_path / "errors_vs_fem_reference.csv").exists()

    def test_predicted_slopes(self):
        cfg = harness.builtin_experiment("trace_class_1d")
        report_slopes = harness._predicted_slopes(
            analysis.predict_rates(cfg.params), cfg.coupling_rule
        )
        # dt = h^2 makes the dt terms subdominant: slopes are the h exponents
        assert report_slopes["strong"] == pytest.approx(2.0 / 3.0)
        assert report_slopes["weak"] == pytest.approx(4.0 / 3.0)
