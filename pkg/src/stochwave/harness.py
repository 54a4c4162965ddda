"""Monte Carlo convergence experiments across nested discretization levels.

An experiment couples several coarse (h, dt) levels to one fine reference
discretization through a shared noise realization per sample, estimates
strong/weak (and optionally negative-norm) errors at the final time with
standard errors, fits log-log slopes against h, and attaches the
theoretically predicted slopes.

Three reference kinds are supported:

* ``fem``    - the usual fine finite element reference (the production setup),
* ``modal``  - the exact modal sampler of the linear white-noise problem as
  the truth, with the fine FEM solution kept as a cross-check column,
* ``exact``  - a closed-form deterministic field (validation runs).

Sample-level work is parallelized over a process pool; aggregation happens
in sample-index order so reports are bit-identical for any worker count.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import analysis, fem, noise, scheme
from .errors import InsufficientDataError, SampleFailureError

__all__ = [
    "DriftSpec",
    "InitialDataSpec",
    "MonteCarloSpec",
    "ExperimentConfig",
    "ExperimentReport",
    "builtin_experiment",
    "run_convergence_experiment",
    "emit_report",
    "read_error_table",
    "ERRORS_CSV_COLUMNS",
]

ERRORS_CSV_COLUMNS = (
    "level,h,dt,n_samples,strong_error,strong_se,weak_error,weak_se,"
    "negnorm_error,negnorm_se,noise_floor_flag"
)
RATES_CSV_COLUMNS = "quantity,slope,intercept,r_squared,predicted_slope,points_used"


@dataclass(frozen=True)
class DriftSpec:
    """Named drift so experiment configs stay picklable."""

    name: str = "zero"
    coeff: float = 1.0

    def realize(self):
        return scheme.drift_from_name(self.name, self.coeff)


def _hat(x):
    return np.where(x < 0.5, x, 1.0 - x)


def _indicator(x):
    return np.where(x < 0.5, 1.0, 0.0)


def _sine(x):
    return np.sin(np.pi * x)


@dataclass(frozen=True)
class InitialDataSpec:
    """Named initial displacement/velocity profiles."""

    u0: str = "zero"
    v0: str = "zero"

    def realize(self, mesh: fem.Mesh1D) -> scheme.State:
        return scheme.State(self._component(self.u0, mesh), self._component(self.v0, mesh))

    @staticmethod
    def _component(name: str, mesh: fem.Mesh1D) -> np.ndarray:
        if name == "zero":
            return np.zeros(mesh.n_interior)
        if name == "hat":
            return fem.project_initial_data(mesh, _hat, mode="l2").coeffs
        if name == "indicator":
            return fem.project_initial_data(mesh, _indicator, mode="l2").coeffs
        if name == "eigenmode":
            return fem.project_initial_data(mesh, _sine, mode="nodal").coeffs
        raise ValueError(f"unknown initial data component {name!r}")


@dataclass(frozen=True)
class MonteCarloSpec:
    n_samples: int
    master_seed: int
    worker_count: int = 1


# Closed-form fields usable as an "exact" reference; keyed by name.
def _eigenmode_u(t):
    return lambda x: np.cos(np.pi * t) * np.sin(np.pi * x)


_EXACT_FIELDS = {"eigenmode": _eigenmode_u}


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    levels: tuple  # ((h, dt), ...) ordered coarse to fine
    reference: tuple  # (h, dt)
    coupling_rule: str  # "dt=h" | "dt=h^2"
    mc: MonteCarloSpec
    noise: noise.CovarianceSpec | None
    drift: DriftSpec
    method: str
    initial: InitialDataSpec
    test_functions: tuple = ("squared_l2",)
    params: analysis.RegularityParams | None = None
    negnorm_nu: float | None = None
    T: float = 1.0
    reference_kind: str = "fem"
    n_modes: int | None = None  # modal reference truncation; default 4 * n_ref

    def validate(self):
        if not self.levels:
            raise ValueError("experiment needs at least one level")
        if self.mc.n_samples < 2:
            raise ValueError("need at least two Monte Carlo samples")
        if self.mc.worker_count < 1:
            raise ValueError("worker_count must be >= 1")
        if self.reference_kind not in ("fem", "modal", "exact"):
            raise ValueError(f"unknown reference kind {self.reference_kind!r}")
        if self.coupling_rule not in ("dt=h", "dt=h^2"):
            raise ValueError(f"unknown coupling rule {self.coupling_rule!r}")
        h_ref, dt_ref = self.reference
        n_ref = _elements_for(h_ref)
        _check_integral(self.T, dt_ref, "reference")
        hs = [h for h, _ in self.levels]
        if any(h2 >= h1 for h1, h2 in zip(hs, hs[1:])):
            raise ValueError("levels must be ordered by strictly decreasing h")
        for h, dt in self.levels:
            n = _elements_for(h)
            _check_integral(self.T, dt, f"level h={h}")
            if n_ref % n != 0:
                raise ValueError(f"level h={h} is not nested in reference h={h_ref}")
            ratio = dt / dt_ref
            if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
                raise ValueError(f"level dt={dt} is not a multiple of reference dt={dt_ref}")
            expected = h if self.coupling_rule == "dt=h" else h * h
            if abs(dt - expected) > 1e-12:
                raise ValueError(
                    f"level (h={h}, dt={dt}) violates coupling rule {self.coupling_rule}"
                )
        if self.reference_kind == "modal":
            if self.noise is None or self.noise.kind != "white":
                raise ValueError("the modal reference requires white noise")
            if self.drift.name != "zero":
                raise ValueError("the modal reference requires the linear problem (no drift)")
            if self.initial != InitialDataSpec("zero", "zero"):
                raise ValueError("the modal reference requires zero initial data")
        if self.reference_kind == "exact":
            if self.noise is not None:
                raise ValueError("an exact reference requires noise to be disabled")
            if self.drift.name != "zero":
                raise ValueError("exact references are registered for the linear problem only")

    @property
    def exact_field(self):
        return _EXACT_FIELDS["eigenmode"]


def _elements_for(h: float) -> int:
    n = round(1.0 / h)
    if n < 2 or abs(n * h - 1.0) > 1e-12:
        raise ValueError(f"mesh width {h} does not divide the unit interval")
    return n


def _check_integral(T: float, dt: float, what: str):
    n = round(T / dt)
    if n < 1 or abs(n * dt - T) > 1e-12 * max(T, 1.0):
        raise ValueError(f"{what}: T/dt = {T}/{dt} is not a positive integer")


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    table: analysis.ErrorTable
    fits: dict
    prediction: analysis.RatePrediction | None
    predicted_slopes: dict
    timings: dict
    crosscheck_table: analysis.ErrorTable | None = None


def builtin_experiment(name: str) -> ExperimentConfig:
    """The built-in experiment configurations.

    ``white_noise_1d`` and ``trace_class_1d`` reproduce the two published
    convergence studies at desk scale; ``deterministic_eigenmode`` and
    ``linear_modal_validation`` are validation setups with closed-form and
    exact-sampler references, respectively.
    """
    if name == "white_noise_1d":
        return ExperimentConfig(
            name=name,
            levels=tuple((2.0**-k, 2.0**-k) for k in range(1, 7)),
            reference=(2.0**-8, 2.0**-8),
            coupling_rule="dt=h",
            mc=MonteCarloSpec(n_samples=2000, master_seed=0, worker_count=1),
            noise=noise.white_noise(),
            drift=DriftSpec("cos"),
            method="crank_nicolson",
            initial=InitialDataSpec("hat", "indicator"),
            params=analysis.RegularityParams(
                beta=0.5, delta=1.0, theta=0.4, eta=np.inf, nu=0.5, mu=0.5, kappa=2, rho=2
            ),
        )
    if name == "trace_class_1d":
        return ExperimentConfig(
            name=name,
            levels=tuple((2.0**-k, 4.0**-k) for k in range(1, 6)),
            reference=(2.0**-6, 2.0**-12),
            coupling_rule="dt=h^2",
            mc=MonteCarloSpec(n_samples=500, master_seed=0, worker_count=1),
            noise=noise.exponential_kernel(rate=25.0, scale=1.0 / 16.0),
            drift=DriftSpec("sin"),
            method="crank_nicolson",
            initial=InitialDataSpec("zero", "zero"),
            params=analysis.RegularityParams(
                beta=1.0, delta=2.0, theta=1.0, eta=np.inf, nu=1.0, mu=1.0, kappa=2, rho=2
            ),
        )
    if name == "deterministic_eigenmode":
        return ExperimentConfig(
            name=name,
            levels=tuple((2.0**-k, 2.0**-k) for k in range(3, 8)),
            reference=(2.0**-9, 2.0**-9),
            coupling_rule="dt=h",
            mc=MonteCarloSpec(n_samples=2, master_seed=0, worker_count=1),
            noise=None,
            drift=DriftSpec("zero"),
            method="crank_nicolson",
            initial=InitialDataSpec("eigenmode", "zero"),
            reference_kind="exact",
        )
    if name == "linear_modal_validation":
        return ExperimentConfig(
            name=name,
            levels=tuple((2.0**-k, 2.0**-k) for k in range(1, 4)),
            reference=(2.0**-8, 2.0**-8),
            coupling_rule="dt=h",
            mc=MonteCarloSpec(n_samples=500, master_seed=0, worker_count=1),
            noise=noise.white_noise(),
            drift=DriftSpec("zero"),
            method="crank_nicolson",
            initial=InitialDataSpec("zero", "zero"),
            params=analysis.RegularityParams(
                beta=0.5, delta=1.0, theta=0.5, eta=np.inf, nu=0.5, mu=0.5, kappa=2, rho=2
            ),
            negnorm_nu=0.5,
            reference_kind="modal",
        )
    raise ValueError(f"unknown builtin experiment {name!r}")


# ---------------------------------------------------------------------------
# Per-sample machinery (shared by the in-process path and pool workers)


class _LevelRuntime:
    def __init__(self, h, dt, config, ref_mesh, ref_stepper, method, drift):
        self.h = h
        self.dt = dt
        self.mesh = fem.build_uniform_mesh(_elements_for(h))
        self.ops = fem.assemble_operators(self.mesh)
        stepper = scheme.build_stepper(method, self.mesh, self.ops, dt)
        self.prolongation = fem.prolongation_matrix(self.mesh, ref_mesh)
        initial = config.initial.realize(self.mesh)
        self.coupled = scheme.make_coupled_level(
            ref_stepper, stepper, initial, self.prolongation, drift
        )
        self.stepper = stepper


class _ExperimentRuntime:
    """Everything heavy built once per process: meshes, factorizations, bases."""

    def __init__(self, config: ExperimentConfig):
        config.validate()
        self.config = config
        method = scheme.rational_method(config.method)
        drift = config.drift.realize()
        h_ref, dt_ref = config.reference
        self.ref_mesh = fem.build_uniform_mesh(_elements_for(h_ref))
        self.ref_ops = fem.assemble_operators(self.ref_mesh)
        self.ref_stepper = scheme.build_stepper(method, self.ref_mesh, self.ref_ops, dt_ref)
        self.levels = [
            _LevelRuntime(h, dt, config, self.ref_mesh, self.ref_stepper, method, drift)
            for h, dt in config.levels
        ]
        factor = None
        if config.noise is not None and config.reference_kind != "modal":
            # modal runs draw their noise from the exact sampler instead
            factor = noise.build_noise_factor(self.ref_mesh, self.ref_ops, config.noise)
        self.ref_problem = scheme.ReferenceProblem(
            self.ref_stepper, config.initial.realize(self.ref_mesh), drift, factor
        )
        self.phi = analysis.squared_l2_norm()  # the supported built-in test functional
        self.n_steps = round(config.T / dt_ref)

        self.neg_weights = None
        if config.negnorm_nu is not None:
            J = 4 * self.ref_mesh.n_elements
            self.neg_basis = fem.spectral_basis(J)
            self.neg_weights = self.neg_basis.eigenvalues ** (-config.negnorm_nu)
            self.neg_S = fem.sine_load_matrix(self.ref_mesh.n_elements, J)

        if config.reference_kind == "modal":
            J = config.n_modes or 4 * self.ref_mesh.n_elements
            self.modal_basis = fem.spectral_basis(J)
            self.modal_oracle = analysis.ModalOracle(self.modal_basis, dt_ref)
            self.modal_S_ref = fem.sine_load_matrix(self.ref_mesh.n_elements, J)
            self.modal_S_levels = [
                fem.sine_load_matrix(lv.mesh.n_elements, J) for lv in self.levels
            ]
            if config.negnorm_nu is not None:
                self.modal_neg_weights = self.modal_basis.eigenvalues ** (-config.negnorm_nu)
        elif config.reference_kind == "exact":
            self.exact_u_at_T = config.exact_field(config.T)
            self.exact_phi = analysis.quad_integral(
                lambda x: self.exact_u_at_T(x) ** 2, n_panels=512
            )

    # contribution columns: strong^2, weak diff, negnorm^2, cross strong^2, cross weak
    N_COLS = 5

    def run_sample(self, sample_index: int) -> np.ndarray:
        rng = noise.derive_stream(
            noise.StreamSpec(self.config.mc.master_seed, sample_index, 0)
        )
        kind = self.config.reference_kind
        out = np.full((len(self.levels), self.N_COLS), np.nan)
        try:
            if kind == "fem":
                ref_state, level_states = scheme.run_coupled_paths(
                    self.ref_problem, [lv.coupled for lv in self.levels], self.config.T, rng
                )
                self._fill_vs_reference(out, ref_state, level_states, cols=(0, 1))
                if self.neg_weights is not None:
                    for i, lv in enumerate(self.levels):
                        d = lv.prolongation @ level_states[i].u - ref_state.u
                        m = self.neg_S @ d
                        out[i, 2] = np.sum(self.neg_weights * m**2)
            elif kind == "modal":
                u_mod = np.zeros(self.modal_basis.n_modes)
                v_mod = np.zeros(self.modal_basis.n_modes)
                loads = np.empty((self.n_steps, self.ref_mesh.n_interior))
                for j in range(self.n_steps):
                    u_mod, v_mod, w_inc = self.modal_oracle.sample_step(u_mod, v_mod, rng)
                    loads[j] = self.modal_S_ref.T @ w_inc
                ref_state, level_states = scheme.run_coupled_paths(
                    self.ref_problem,
                    [lv.coupled for lv in self.levels],
                    self.config.T,
                    loads=loads,
                )
                phi_modal = float(np.sum(u_mod**2))  # Parseval
                for i, lv in enumerate(self.levels):
                    c = level_states[i].u
                    m_lvl = self.modal_S_levels[i] @ c
                    phi_lvl = self.phi(c, lv.ops)
                    out[i, 0] = max(phi_lvl - 2.0 * (m_lvl @ u_mod) + phi_modal, 0.0)
                    out[i, 1] = phi_lvl - phi_modal
                    if self.config.negnorm_nu is not None:
                        out[i, 2] = np.sum(self.modal_neg_weights * (m_lvl - u_mod) ** 2)
                self._fill_vs_reference(out, ref_state, level_states, cols=(3, 4))
            else:  # exact closed-form reference
                for i, lv in enumerate(self.levels):
                    final = scheme.run_path(
                        lv.stepper, self.config.T, lv.coupled.initial, lv.coupled.drift
                    )
                    w = fem.FemFunction(lv.mesh, final.u)
                    out[i, 0] = analysis.l2_distance_to_function(w, self.exact_u_at_T) ** 2
                    out[i, 1] = self.phi(final.u, lv.ops) - self.exact_phi
        except Exception as exc:
            raise SampleFailureError(
                f"sample {sample_index} failed: {exc}", sample_index, None
            ) from exc
        bad = np.argwhere(~np.isfinite(out[:, 0]))
        if bad.size:
            raise SampleFailureError(
                f"sample {sample_index} produced a non-finite error contribution",
                sample_index,
                int(bad[0][0]),
            )
        return out

    def _fill_vs_reference(self, out, ref_state, level_states, cols):
        c_strong, c_weak = cols
        phi_ref = self.phi(ref_state.u, self.ref_ops)
        for i, lv in enumerate(self.levels):
            u_on_ref = lv.prolongation @ level_states[i].u
            d = u_on_ref - ref_state.u
            out[i, c_strong] = d @ self.ref_ops.apply_mass(d)
            out[i, c_weak] = self.phi(u_on_ref, self.ref_ops) - phi_ref


_WORKER_RUNTIME: _ExperimentRuntime | None = None


def _init_worker(config: ExperimentConfig):
    global _WORKER_RUNTIME
    _WORKER_RUNTIME = _ExperimentRuntime(config)


def _worker_sample(sample_index: int) -> np.ndarray:
    return _WORKER_RUNTIME.run_sample(sample_index)


def run_convergence_experiment(config: ExperimentConfig) -> ExperimentReport:
    """Run the Monte Carlo convergence experiment described by ``config``.

    Samples are independent (one derived stream per sample index) and may be
    computed by several worker processes; contributions are aggregated in
    sample-index order, so the report depends only on (config, master seed).
    A sample producing non-finite values aborts the whole experiment.
    """
    t_start = time.perf_counter()
    runtime = _ExperimentRuntime(config)
    n = config.mc.n_samples
    if config.mc.worker_count <= 1:
        contributions = [runtime.run_sample(i) for i in range(n)]
    else:
        chunk = max(1, n // (config.mc.worker_count * 8))
        with ProcessPoolExecutor(
            max_workers=config.mc.worker_count,
            initializer=_init_worker,
            initargs=(config,),
        ) as pool:
            contributions = list(pool.map(_worker_sample, range(n), chunksize=chunk))
    stacked = np.stack(contributions)  # (n_samples, n_levels, 5)
    t_total = time.perf_counter() - t_start

    rows = []
    cross_rows = []
    for i, (h, dt) in enumerate(config.levels):
        strong, strong_se = analysis.rms_with_se(stacked[:, i, 0])
        weak, weak_se, flag = analysis.mean_with_floor(stacked[:, i, 1])
        negn = negn_se = None
        if not np.isnan(stacked[0, i, 2]):
            negn, negn_se = analysis.rms_with_se(stacked[:, i, 2])
        rows.append(
            analysis.ErrorRow(
                level=i + 1,
                h=h,
                dt=dt,
                n_samples=n,
                strong_error=strong,
                strong_se=strong_se,
                weak_error=abs(weak),
                weak_sign=1 if weak >= 0 else -1,
                weak_se=weak_se,
                negnorm_error=negn,
                negnorm_se=negn_se,
                noise_floor_flag=flag,
            )
        )
        if not np.isnan(stacked[0, i, 3]):
            cw, cw_se, cflag = analysis.mean_with_floor(stacked[:, i, 4])
            cs, cs_se = analysis.rms_with_se(stacked[:, i, 3])
            cross_rows.append(
                analysis.ErrorRow(
                    level=i + 1, h=h, dt=dt, n_samples=n,
                    strong_error=cs, strong_se=cs_se,
                    weak_error=abs(cw), weak_sign=1 if cw >= 0 else -1,
                    weak_se=cw_se, noise_floor_flag=cflag,
                )
            )
    table = analysis.ErrorTable(rows, negnorm_nu=config.negnorm_nu)
    crosscheck = analysis.ErrorTable(cross_rows) if cross_rows else None

    fits = {}
    for column in ("strong", "weak", "negnorm"):
        try:
            fits[column] = analysis.fit_rates(table, column)
        except InsufficientDataError:
            fits[column] = None

    prediction = analysis.predict_rates(config.params) if config.params else None
    predicted_slopes = _predicted_slopes(prediction, config.coupling_rule)
    timings = {
        "total_s": t_total,
        "per_sample_s": t_total / n,
        "level_steps": [round(config.T / dt) for _, dt in config.levels],
    }
    return ExperimentReport(
        config=config,
        table=table,
        fits=fits,
        prediction=prediction,
        predicted_slopes=predicted_slopes,
        timings=timings,
        crosscheck_table=crosscheck,
    )


def _predicted_slopes(prediction, coupling_rule):
    """Predicted log-log slope against h once dt is slaved to h by the rule."""
    if prediction is None:
        return {}
    power = 1.0 if coupling_rule == "dt=h" else 2.0
    return {
        "strong": min(prediction.strong_h_exp, power * prediction.strong_dt_exp),
        "weak": min(
            prediction.weak_h_exp,
            prediction.h_penalty_exp + power * prediction.weak_dt_exp,
        ),
        "negnorm": min(prediction.negnorm_h_exp, power * prediction.negnorm_dt_exp),
    }


# ---------------------------------------------------------------------------
# Report emission


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def _errors_csv_text(table: analysis.ErrorTable) -> str:
    lines = [ERRORS_CSV_COLUMNS]
    for row in table.rows:
        lines.append(
            ",".join(
                [
                    _fmt(row.level),
                    _fmt(row.h),
                    _fmt(row.dt),
                    _fmt(row.n_samples),
                    _fmt(row.strong_error),
                    _fmt(row.strong_se),
                    _fmt(row.weak_signed),
                    _fmt(row.weak_se),
                    _fmt(row.negnorm_error),
                    _fmt(row.negnorm_se),
                    _fmt(row.noise_floor_flag),
                ]
            )
        )
    return "\n".join(lines) + "\n"


def _rates_csv_text(report: ExperimentReport) -> str:
    lines = [RATES_CSV_COLUMNS]
    for quantity in ("strong", "weak", "negnorm"):
        fit = report.fits.get(quantity)
        if fit is None:
            continue
        predicted = report.predicted_slopes.get(quantity)
        lines.append(
            ",".join(
                [
                    quantity,
                    _fmt(fit.slope),
                    _fmt(fit.intercept),
                    _fmt(fit.r_squared),
                    _fmt(predicted),
                    _fmt(fit.points_used),
                ]
            )
        )
    return "\n".join(lines) + "\n"


def config_echo_text(config: ExperimentConfig) -> str:
    """Echo the configuration as dotted key/value lines (CLI-compatible)."""
    lines = [
        f"name = {config.name}",
        f"time.T = {_fmt(config.T)}",
        f"scheme.method = {config.method}",
    ]
    if config.noise is None:
        lines.append("noise.model = none")
    elif config.noise.kind == "white":
        lines.append("noise.model = white")
    else:
        lines.append("noise.model = kernel")
        lines.append(f"noise.kernel.name = {config.noise.kernel_name}")
        lines.append(f"noise.kernel.rate = {_fmt(config.noise.params[0])}")
        lines.append(f"noise.kernel.scale = {_fmt(config.noise.params[1])}")
    lines.append(f"drift.f = {config.drift.name}")
    if config.drift.name == "linear":
        lines.append(f"drift.linear_coeff = {_fmt(config.drift.coeff)}")
    lines.append(f"initial.u0 = {config.initial.u0}")
    lines.append(f"initial.v0 = {config.initial.v0}")
    lines.append(f"mc.samples = {config.mc.n_samples}")
    lines.append(f"mc.seed = {config.mc.master_seed}")
    lines.append(f"mc.workers = {config.mc.worker_count}")
    lines.append(
        "levels = " + "; ".join(f"{_fmt(h)},{_fmt(dt)}" for h, dt in config.levels)
    )
    lines.append(f"reference.h = {_fmt(config.reference[0])}")
    lines.append(f"reference.dt = {_fmt(config.reference[1])}")
    lines.append(f"coupling.rule = {config.coupling_rule}")
    lines.append(f"reference.kind = {config.reference_kind}")
    if config.negnorm_nu is not None:
        lines.append(f"negnorm.nu = {_fmt(config.negnorm_nu)}")
    if config.params is not None:
        p = config.params
        for key in ("beta", "delta", "theta", "eta", "nu", "mu"):
            lines.append(f"params.{key} = {_fmt(getattr(p, key))}")
    return "\n".join(lines) + "\n"


def _summary_text(report: ExperimentReport) -> str:
    lines = [f"experiment: {report.config.name}", ""]
    lines.append(f"{'quantity':<10}{'fitted':>10}{'predicted':>12}{'r^2':>8}{'points':>8}")
    for quantity in ("strong", "weak", "negnorm"):
        fit = report.fits.get(quantity)
        if fit is None:
            continue
        predicted = report.predicted_slopes.get(quantity)
        pred_txt = f"{predicted:.4f}" if predicted is not None else "-"
        lines.append(
            f"{quantity:<10}{fit.slope:>10.4f}{pred_txt:>12}{fit.r_squared:>8.4f}"
            f"{fit.points_used:>8}"
        )
    lines.append("")
    lines.append(f"samples: {report.config.mc.n_samples}")
    lines.append(f"wall clock: {report.timings['total_s']:.2f} s")
    lines.append(f"per sample: {report.timings['per_sample_s'] * 1e3:.2f} ms")
    flagged = [row.level for row in report.table.rows if row.noise_floor_flag]
    if flagged:
        lines.append(f"weak estimates on the noise floor at levels: {flagged}")
    return "\n".join(lines) + "\n"


def emit_report(report: ExperimentReport, directory) -> list:
    """Write errors.csv, rates.csv, the config echo, and a plain-text summary.

    ``errors.csv`` and ``rates.csv`` contain only deterministic content (a
    pure function of config and master seed); timing metadata goes to the
    summary.  Returns the list of written paths.
    """
    os.makedirs(directory, exist_ok=True)
    written = []
    for fname, text in (
        ("errors.csv", _errors_csv_text(report.table)),
        ("rates.csv", _rates_csv_text(report)),
        ("config.txt", config_echo_text(report.config)),
        ("summary.txt", _summary_text(report)),
    ):
        path = os.path.join(directory, fname)
        try:
            with open(path, "w", newline="\n") as fh:
                fh.write(text)
        except OSError as exc:
            raise OSError(f"failed to write report file {path}: {exc}") from exc
        written.append(path)
    if report.crosscheck_table is not None:
        path = os.path.join(directory, "errors_vs_fem_reference.csv")
        with open(path, "w", newline="\n") as fh:
            fh.write(_errors_csv_text(report.crosscheck_table))
        written.append(path)
    return written


def read_error_table(path) -> analysis.ErrorTable:
    """Parse an errors.csv back into an ErrorTable (inverse of emission)."""
    with open(path) as fh:
        header = fh.readline().strip()
        if header != ERRORS_CSV_COLUMNS:
            raise ValueError(f"unexpected errors.csv header: {header}")
        rows = []
        for line in fh:
            parts = line.rstrip("\n").split(",")
            weak_signed = float(parts[6])
            rows.append(
                analysis.ErrorRow(
                    level=int(parts[0]),
                    h=float(parts[1]),
                    dt=float(parts[2]),
                    n_samples=int(parts[3]),
                    strong_error=float(parts[4]),
                    strong_se=float(parts[5]),
                    weak_error=abs(weak_signed),
                    weak_sign=1 if weak_signed >= 0 else -1,
                    weak_se=float(parts[7]),
                    negnorm_error=float(parts[8]) if parts[8] else None,
                    negnorm_se=float(parts[9]) if parts[9] else None,
                    noise_floor_flag=parts[10] == "true",
                )
            )
    return analysis.ErrorTable(rows)
