"""Runnable invariant suite behind the ``stochwave validate`` subcommand.

Each check re-verifies one structural property of the library on a fresh
small problem: assembly symmetry, the inverse inequality, spectral-norm
identities, noise covariance statistics, energy behavior of the steppers,
the discrete stability bound, pointwise-drift inequalities, and the rate
predictor's closed-form values.  Checks are deterministic (fixed seeds) and
sized to finish in well under a minute.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import analysis, fem, noise, scheme


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


def _check(name):
    def wrap(fn):
        fn._check_name = name
        _CHECKS.append(fn)
        return fn

    return wrap


_CHECKS = []


@_check("fem.assembly_closed_form")
def _assembly(results):
    mesh = fem.build_uniform_mesh(64)
    ops = fem.assemble_operators(mesh)
    M, K = ops.mass.toarray(), ops.stiffness.toarray()
    sym = max(np.abs(M - M.T).max(), np.abs(K - K.T).max())
    h = mesh.h
    row_m = np.abs(M[3, 2:5] - h / 6.0 * np.array([1, 4, 1])).max()
    row_k = np.abs(K[3, 2:5] - 1.0 / h * np.array([-1, 2, -1])).max()
    ok = sym == 0.0 and row_m < 1e-15 and row_k < 1e-12
    return ok, f"symmetry defect {sym:.1e}, row defects {row_m:.1e}/{row_k:.1e}"


@_check("fem.inverse_inequality")
def _inverse_inequality(results):
    worst = 0.0
    for n in (4, 8, 16, 32, 64, 128, 256, 512):
        mesh = fem.build_uniform_mesh(n)
        ops = fem.assemble_operators(mesh)
        lam, _ = fem.discrete_eigen(ops)
        worst = max(worst, lam[-1] * mesh.h**2)
    return worst <= 12.1, f"max lambda_max * h^2 = {worst:.6f} (bound 12.1)"


@_check("fem.eigenmode_fractional_norms")
def _fractional(results):
    mesh = fem.build_uniform_mesh(256)
    basis = fem.spectral_basis(4 * 256)
    w = fem.project_initial_data(mesh, lambda x: np.sqrt(2.0) * np.sin(np.pi * x), "nodal")
    worst = 0.0
    for s in (-1.0, 0.0, 1.0):
        val = fem.fractional_norm(w, s, basis)
        worst = max(worst, abs(val - np.pi**s) / np.pi**s)
    return worst < 0.02, f"max relative deviation from pi^s: {worst:.2e}"


@_check("fem.prolongation_exactness")
def _prolongation(results):
    coarse = fem.build_uniform_mesh(8)
    fine = fem.build_uniform_mesh(32)
    P = fem.prolongation_matrix(coarse, fine)
    Mc = fem.assemble_operators(coarse).mass.toarray()
    Mf = fem.assemble_operators(fine).mass.toarray()
    gram = np.abs(P.T @ Mf @ P - Mc).max()
    basis = fem.spectral_basis(64)
    rng = np.random.default_rng(0)
    w = fem.FemFunction(coarse, rng.standard_normal(coarse.n_interior))
    wf = fem.FemFunction(fine, P @ w.coeffs)
    modal = np.abs(
        fem.modal_coefficients(w, basis) - fem.modal_coefficients(wf, basis)
    ).max()
    ok = gram < 1e-12 and modal < 1e-12
    return ok, f"Gram defect {gram:.1e}, modal defect {modal:.1e}"


@_check("noise.white_load_covariance")
def _white_cov(results):
    mesh = fem.build_uniform_mesh(8)
    ops = fem.assemble_operators(mesh)
    factor = noise.build_noise_factor(mesh, ops, noise.white_noise())
    rng = noise.derive_stream(noise.StreamSpec(12345))
    dt = 2.0**-4
    draws = noise.sample_load_increment(factor, dt, rng, size=40_000)
    emp = np.cov(draws)
    C = dt * ops.mass.toarray()
    se = np.sqrt((np.outer(np.diag(C), np.diag(C)) + C**2) / draws.shape[1])
    worst = float(np.max(np.abs(emp - C) / se))
    return worst < 5.0, f"max |deviation| = {worst:.2f} standard errors (bound 5)"


@_check("noise.stream_determinism")
def _streams(results):
    spec = noise.StreamSpec(99, 0, 2)
    a = noise.derive_stream(spec).standard_normal(4000)
    b = noise.derive_stream(spec).standard_normal(4000)
    if not np.array_equal(a, b):
        return False, "identical specs produced different draws"
    c = noise.derive_stream(noise.StreamSpec(99, 1, 2)).standard_normal(4000)
    rho = abs(float(np.corrcoef(a, c)[0, 1]))
    return rho < 0.05, f"replay identical; cross-sample correlation {rho:.3f}"


@_check("scheme.energy_behavior")
def _energy(results):
    mesh = fem.build_uniform_mesh(128)
    ops = fem.assemble_operators(mesh)
    rng = np.random.default_rng(1)
    x0 = scheme.State(rng.standard_normal(127), rng.standard_normal(127))
    cn = scheme.build_stepper(scheme.CRANK_NICOLSON, mesh, ops, 1e-3)
    st = x0.copy()
    e0 = analysis.energy(st, ops)
    drift_max = 0.0
    for _ in range(2000):
        st = scheme.step(cn, st)
        drift_max = max(drift_max, abs(analysis.energy(st, ops) - e0))
    be = scheme.build_stepper(scheme.BACKWARD_EULER, mesh, ops, 1e-3)
    st = x0.copy()
    prev = analysis.energy(st, ops)
    monotone = True
    for _ in range(500):
        st = scheme.step(be, st)
        e = analysis.energy(st, ops)
        monotone &= e <= prev * (1.0 + 1e-12)
        prev = e
    ok = drift_max / e0 <= 1e-10 and monotone
    return ok, f"CN relative drift {drift_max / e0:.2e}; BE monotone: {monotone}"


@_check("scheme.stability_bound")
def _stability(results):
    mesh = fem.build_uniform_mesh(64)
    ops = fem.assemble_operators(mesh)
    rng = np.random.default_rng(2)
    ok = True
    worst = 0.0
    for method in (scheme.CRANK_NICOLSON, scheme.BACKWARD_EULER):
        stepper = scheme.build_stepper(method, mesh, ops, 0.01)
        st = scheme.State(rng.standard_normal(63), rng.standard_normal(63))
        e0 = analysis.energy(st, ops)
        for _ in range(10_000):
            st = scheme.step(stepper, st)
        ratio = np.sqrt(analysis.energy(st, ops) / e0)
        worst = max(worst, ratio)
        ok &= ratio <= 1.0 + 1e-10
    return ok, f"max energy-norm amplification over 1e4 steps: {worst:.12f}"


@_check("scheme.lipschitz_transfer")
def _lipschitz(results):
    mesh = fem.build_uniform_mesh(64)
    ops = fem.assemble_operators(mesh)
    drift = scheme.drift_from_name("sin")
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(100):
        u = rng.standard_normal(63)
        v = rng.standard_normal(63)
        fu = ops.solve_mass(scheme.drift_load(drift, u, ops))
        fv = ops.solve_mass(scheme.drift_load(drift, v, ops))
        num = np.sqrt((fu - fv) @ ops.apply_mass(fu - fv))
        den = np.sqrt((u - v) @ ops.apply_mass(u - v))
        worst = max(worst, num / den)
    return worst <= 1.0 + 1e-10, f"max Lipschitz ratio {worst:.12f}"


@_check("analysis.rate_predictor_values")
def _rates(results):
    white = analysis.predict_rates(
        analysis.RegularityParams(0.5, 1.0, 0.4, np.inf, 0.5, 0.5, 2, 2)
    )
    trace = analysis.predict_rates(
        analysis.RegularityParams(1.0, 2.0, 1.0, np.inf, 1.0, 1.0, 2, 2)
    )
    checks = [
        abs(white.strong_h_exp - 1.0 / 3.0),
        abs(white.weak_h_exp - 2.0 / 3.0),
        abs(trace.strong_h_exp - 2.0 / 3.0),
        abs(trace.weak_h_exp - 4.0 / 3.0),
        abs(trace.weak_dt_exp - 1.0),
    ]
    worst = max(checks)
    return worst < 1e-12, f"max deviation from closed-form exponents: {worst:.1e}"


@_check("analysis.weak_estimator_identity")
def _weak_identity(results):
    mesh = fem.build_uniform_mesh(16)
    ops = fem.assemble_operators(mesh)
    rng = np.random.default_rng(4)
    pairs = [(rng.standard_normal(15), rng.standard_normal(15)) for _ in range(10)]
    phi = analysis.squared_l2_norm()
    est, _, _ = analysis.weak_error_estimate(pairs, phi, ops)
    direct = np.mean(
        [a @ ops.apply_mass(a) - r @ ops.apply_mass(r) for a, r in pairs]
    )
    dev = abs(est - direct)
    return dev < 1e-12, f"estimator vs quadratic forms: {dev:.1e}"


@_check("analysis.modal_rotation")
def _modal_rotation(results):
    basis = fem.spectral_basis(1)
    u, v, _ = analysis.modal_oracle_path(
        basis, dt=0.125, T=2.0, u0=np.array([1.0]), v0=np.array([0.0]), noise=False
    )
    dev = max(abs(u[0] - 1.0), abs(v[0]))
    return dev < 1e-12, f"period-2 return defect {dev:.1e}"


def run_validation_suite() -> list[CheckResult]:
    """Run every registered check; returns one result per check."""
    results = []
    for fn in _CHECKS:
        try:
            passed, detail = fn(results)
        except Exception as exc:  # a crashed check is a failed check
            passed, detail = False, f"raised {type(exc).__name__}: {exc}"
        results.append(CheckResult(fn._check_name, bool(passed), detail))
    return results
