"""Tests for the rational integrators, drift loads, and trajectory drivers."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from stochwave import analysis, fem, noise, scheme
from stochwave.errors import NumericError


def build(n):
    mesh = fem.build_uniform_mesh(n)
    return mesh, fem.assemble_operators(mesh)


def dense_propagator(ops, method, dt):
    """Independent dense construction of R(dt A_h); the stepper oracle."""
    n = ops.mesh.n_interior
    lam = np.linalg.solve(ops.mass.toarray(), ops.stiffness.toarray())
    A = np.block([[np.zeros((n, n)), -np.eye(n)], [lam, np.zeros((n, n))]])
    eye = np.eye(2 * n)
    if method.order == 2:
        return np.linalg.solve(eye + 0.5 * dt * A, eye - 0.5 * dt * A)
    return np.linalg.inv(eye + dt * A)


class TestDriftLoad:
    def test_zero_function(self):
        mesh, ops = build(8)
        drift = scheme.Drift(lambda x: np.zeros_like(x), lambda x: np.zeros_like(x), 0.0, True)
        assert_allclose(scheme.drift_load(drift, np.ones(7), ops), 0.0)

    def test_linear_is_mass_apply(self):
        mesh, ops = build(16)
        drift = scheme.drift_from_name("linear", coeff=1.0)
        rng = np.random.default_rng(0)
        c = rng.standard_normal(15)
        assert_allclose(scheme.drift_load(drift, c, ops), ops.apply_mass(c), atol=1e-12)

    def test_cos_at_zero_state(self):
        # f(0)=1 so the load is the hat integral, exactly h per interior node
        mesh, ops = build(8)
        drift = scheme.drift_from_name("cos")
        assert_allclose(scheme.drift_load(drift, np.zeros(7), ops), mesh.h, rtol=1e-14)

    def test_nodal_mode(self):
        mesh, ops = build(8)
        drift = scheme.drift_from_name("sin")
        c = np.linspace(-1, 1, 7)
        assert_allclose(
            scheme.drift_load(drift, c, ops, mode="nodal"), ops.apply_mass(np.sin(c))
        )

    def test_non_finite_output_raises_with_element(self):
        mesh, ops = build(8)

        def bad(x):
            out = np.array(x, dtype=float, copy=True)
            out[np.asarray(x) > 0.4] = np.inf
            return out

        drift = scheme.Drift(bad, bad, 1.0, True)
        with pytest.raises(NumericError, match="element"):
            scheme.drift_load(drift, np.full(7, 0.5), ops)


class TestRationalMethods:
    def test_lookup(self):
        assert scheme.rational_method("crank_nicolson") is scheme.CRANK_NICOLSON
        assert scheme.rational_method("backward_euler") is scheme.BACKWARD_EULER
        with pytest.raises(ValueError):
            scheme.rational_method("theta")

    @pytest.mark.parametrize("method", [scheme.BACKWARD_EULER, scheme.CRANK_NICOLSON])
    def test_unit_disc_on_imaginary_axis(self, method):
        y = np.linspace(-1e3, 1e3, 2001)
        vals = np.abs([method(1j * t) for t in y])
        assert np.all(vals <= 1.0 + 1e-12)

    @pytest.mark.parametrize(
        "method,expected_slope", [(scheme.BACKWARD_EULER, 2.0), (scheme.CRANK_NICOLSON, 3.0)]
    )
    def test_approximation_order(self, method, expected_slope):
        y = np.logspace(-3, -1, 25)
        err = np.abs([method(1j * t) - np.exp(-1j * t) for t in y])
        slope = np.polyfit(np.log(y), np.log(err), 1)[0]
        assert abs(slope - expected_slope) <= 0.1


class TestStepper:
    @pytest.mark.parametrize("method", [scheme.BACKWARD_EULER, scheme.CRANK_NICOLSON])
    def test_matches_dense_oracle(self, method):
        mesh, ops = build(4)
        dt = 0.17
        stepper = scheme.build_stepper(method, mesh, ops, dt)
        R = dense_propagator(ops, method, dt)
        rng = np.random.default_rng(1)
        for _ in range(5):
            x = rng.standard_normal(6)
            out = scheme.step(stepper, scheme.State(x[:3], x[3:]))
            assert_allclose(np.concatenate([out.u, out.v]), R @ x, atol=1e-10)

    def test_loads_enter_velocity_slot(self):
        # stepping with a load equals the dense map applied to (u, v + M^{-1} l)
        mesh, ops = build(4)
        dt = 0.1
        stepper = scheme.build_stepper(scheme.CRANK_NICOLSON, mesh, ops, dt)
        R = dense_propagator(ops, scheme.CRANK_NICOLSON, dt)
        rng = np.random.default_rng(2)
        x = rng.standard_normal(6)
        l = rng.standard_normal(3)
        out = scheme.step(stepper, scheme.State(x[:3], x[3:]), noise_load=l)
        shifted = x.copy()
        shifted[3:] += np.linalg.solve(ops.mass.toarray(), l)
        assert_allclose(np.concatenate([out.u, out.v]), R @ shifted, atol=1e-10)

    def test_drift_term_scaling(self):
        # the drift contributes dt * load to the velocity equation
        mesh, ops = build(4)
        dt = 0.05
        stepper = scheme.build_stepper(scheme.CRANK_NICOLSON, mesh, ops, dt)
        drift = scheme.drift_from_name("cos")
        rng = np.random.default_rng(3)
        x = rng.standard_normal(6)
        st = scheme.State(x[:3], x[3:])
        with_drift = scheme.step(stepper, st, drift=drift)
        manual = scheme.step(stepper, st, noise_load=dt * scheme.drift_load(drift, st.u, ops))
        assert_allclose(with_drift.u, manual.u, atol=1e-14)
        assert_allclose(with_drift.v, manual.v, atol=1e-14)

    def test_backward_euler_spectral_radius(self):
        mesh, ops = build(8)
        R = dense_propagator(ops, scheme.BACKWARD_EULER, 0.2)
        assert np.max(np.abs(np.linalg.eigvals(R))) <= 1.0 + 1e-12

    def test_stiffness_free_limit_is_shear(self):
        # with K = 0 the Cayley map degenerates to u += dt v, v unchanged
        mesh, ops = build(4)
        ops.stiffness_diag = np.zeros(3)
        ops.stiffness_off = np.zeros(2)
        dt = 0.3
        stepper = scheme.build_stepper(scheme.CRANK_NICOLSON, mesh, ops, dt)
        rng = np.random.default_rng(4)
        x = rng.standard_normal(6)
        out = scheme.step(stepper, scheme.State(x[:3], x[3:]))
        assert_allclose(out.u, x[:3] + dt * x[3:], atol=1e-12)
        assert_allclose(out.v, x[3:], atol=1e-12)

    def test_zero_state_stays_zero(self):
        mesh, ops = build(8)
        stepper = scheme.build_stepper(scheme.CRANK_NICOLSON, mesh, ops, 0.1)
        out = scheme.step(stepper, scheme.State(np.zeros(7), np.zeros(7)))
        assert_allclose(out.u, 0.0)
        assert_allclose(out.v, 0.0)
        assert out.time == 0.1

    def test_rejects_nonpositive_dt(self):
        mesh, ops = build(4)
        with pytest.raises(ValueError):
            scheme.build_stepper(scheme.CRANK_NICOLSON, mesh, ops, 0.0)

    def test_rejects_dimension_mismatch(self):
        mesh, ops = build(4)
        stepper = scheme.build_stepper(scheme.CRANK_NICOLSON, mesh, ops, 0.1)
        with pytest.raises(ValueError):
            scheme.step(stepper, scheme.State(np.zeros(5), np.zeros(5)))


class TestEnergyBehavior:
    def test_cn_conserves_energy(self):
        mesh, ops = build(128)
        stepper = scheme.build_stepper(scheme.CRANK_NICOLSON, mesh, ops, 1e-3)
        rng = np.random.default_rng(5)
        st = scheme.State(rng.standard_normal(127), rng.standard_normal(127))
        e0 = analysis.energy(st, ops)
        worst = 0.0
        for _ in range(2000):
            st = scheme.step(stepper, st)
            worst = max(worst, abs(analysis.energy(st, ops) - e0))
        assert worst / e0 <= 1e-10

    def test_be_dissipates_energy(self):
        mesh, ops = build(128)
        stepper = scheme.build_stepper(scheme.BACKWARD_EULER, mesh, ops, 1e-3)
        rng = np.random.default_rng(6)
        st = scheme.State(rng.standard_normal(127), rng.standard_normal(127))
        prev = analysis.energy(st, ops)
        for _ in range(2000):
            st = scheme.step(stepper, st)
            e = analysis.energy(st, ops)
            assert e <= prev * (1.0 + 1e-12)
            prev = e

    @pytest.mark.parametrize("method", [scheme.BACKWARD_EULER, scheme.CRANK_NICOLSON])
    def test_discrete_stability_bound(self, method):
        mesh, ops = build(64)
        stepper = scheme.build_stepper(method, mesh, ops, 0.01)
        rng = np.random.default_rng(7)
        st = scheme.State(rng.standard_normal(63), rng.standard_normal(63))
        e0 = analysis.energy(st, ops)
        for _ in range(10_000):
            st = scheme.step(stepper, st)
        assert np.sqrt(analysis.energy(st, ops) / e0) <= 1.0 + 1e-10


class TestNemytskijProperties:
    def test_sin_lipschitz_transfer(self):
        # projected composition contracts: quadrature is exact on P1 squares
        mesh, ops = build(64)
        drift = scheme.drift_from_name("sin")
        rng = np.random.default_rng(8)
        for _ in range(100):
            u, v = rng.standard_normal(63), rng.standard_normal(63)
            fu = ops.solve_mass(scheme.drift_load(drift, u, ops))
            fv = ops.solve_mass(scheme.drift_load(drift, v, ops))
            num = np.sqrt((fu - fv) @ ops.apply_mass(fu - fv))
            den = np.sqrt((u - v) @ ops.apply_mass(u - v))
            assert num <= den * (1.0 + 1e-10)


class TestRunPath:
    def test_single_step_equals_step(self):
        mesh, ops = build(8)
        stepper = scheme.build_stepper(scheme.CRANK_NICOLSON, mesh, ops, 0.25)
        rng = np.random.default_rng(9)
        st = scheme.State(rng.standard_normal(7), rng.standard_normal(7))
        direct = scheme.step(stepper, st)
        path = scheme.run_path(stepper, 0.25, st)
        assert_allclose(path.u, direct.u)
        assert_allclose(path.v, direct.v)

    def test_non_integral_horizon_rejected(self):
        mesh, ops = build(8)
        stepper = scheme.build_stepper(scheme.CRANK_NICOLSON, mesh, ops, 0.3)
        with pytest.raises(ValueError):
            scheme.run_path(stepper, 1.0, scheme.State(np.zeros(7), np.zeros(7)))

    def test_eigenmode_period_two_return(self):
        # exact solution cos(pi t) sin(pi x) returns to the initial state at T=2
        mesh, ops = build(64)
        u0 = fem.project_initial_data(mesh, lambda x: np.sin(np.pi * x), mode="nodal")
        stepper = scheme.build_stepper(scheme.CRANK_NICOLSON, mesh, ops, mesh.h)
        final = scheme.run_path(stepper, 2.0, scheme.State(u0.coeffs, np.zeros(63)))
        d = final.u - u0.coeffs
        dist = np.sqrt(d @ ops.apply_mass(d))
        assert dist <= mesh.h**2 + stepper.dt**2

    def test_white_noise_paper_resolution_runs_finite(self):
        mesh, ops = build(512)
        stepper = scheme.build_stepper(scheme.CRANK_NICOLSON, mesh, ops, 2.0**-9)
        factor = noise.build_noise_factor(mesh, ops, noise.white_noise())
        drift = scheme.drift_from_name("cos")
        u0 = fem.project_initial_data(mesh, lambda x: np.where(x < 0.5, x, 1 - x), "l2")
        v0 = fem.project_initial_data(mesh, lambda x: np.where(x < 0.5, 1.0, 0.0), "l2")
        rng = noise.derive_stream(noise.StreamSpec(0))
        final = scheme.run_path(
            stepper, 1.0, scheme.State(u0.coeffs, v0.coeffs), drift, factor, rng
        )
        assert np.all(np.isfinite(final.u)) and np.all(np.isfinite(final.v))
        assert final.time == pytest.approx(1.0)

    def test_affine_in_initial_data_with_fixed_loads(self):
        # superposition: with f(x) = lambda x and frozen noise, the map is affine
        mesh, ops = build(8)
        dt, T = 0.125, 1.0
        stepper = scheme.build_stepper(scheme.CRANK_NICOLSON, mesh, ops, dt)
        drift = scheme.drift_from_name("linear", coeff=0.7)
        rng = np.random.default_rng(10)
        loads = rng.standard_normal((8, 7))
        x1 = scheme.State(rng.standard_normal(7), rng.standard_normal(7))
        x2 = scheme.State(rng.standard_normal(7), rng.standard_normal(7))
        mix = scheme.State(0.25 * x1.u + 0.75 * x2.u, 0.25 * x1.v + 0.75 * x2.v)
        out1 = scheme.run_path(stepper, T, x1, drift, loads=loads)
        out2 = scheme.run_path(stepper, T, x2, drift, loads=loads)
        outm = scheme.run_path(stepper, T, mix, drift, loads=loads)
        assert_allclose(outm.u, 0.25 * out1.u + 0.75 * out2.u, atol=1e-11)
        assert_allclose(outm.v, 0.25 * out1.v + 0.75 * out2.v, atol=1e-11)

    def test_snapshot_hook(self):
        mesh, ops = build(8)
        stepper = scheme.build_stepper(scheme.CRANK_NICOLSON, mesh, ops, 0.25)
        st = scheme.State(np.ones(7), np.zeros(7))
        seen = []
        scheme.run_path(
            stepper, 1.0, st,
            snapshot_times=[0.0, 0.5, 1.0],
            snapshot_hook=lambda t, u, v: seen.append((t, u.copy(), v.copy())),
        )
        assert [t for t, _, _ in seen] == [0.0, 0.5, 1.0]
        assert all(u.shape == (9,) and u[0] == 0.0 == u[-1] for _, u, _ in seen)


class TestCoupledPaths:
    def _problem(self, n_ref, dt_ref, level_ns, level_dts, drift=None, seed=0):
        mesh_r = fem.build_uniform_mesh(n_ref)
        ops_r = fem.assemble_operators(mesh_r)
        stp_r = scheme.build_stepper(scheme.CRANK_NICOLSON, mesh_r, ops_r, dt_ref)
        factor = noise.build_noise_factor(mesh_r, ops_r, noise.white_noise())
        rng = noise.derive_stream(noise.StreamSpec(seed))
        init = lambda m: scheme.State(np.zeros(m.n_interior), np.zeros(m.n_interior))
        ref = scheme.ReferenceProblem(stp_r, init(mesh_r), drift, factor)
        levels = []
        for n, dt in zip(level_ns, level_dts):
            m = fem.build_uniform_mesh(n)
            o = fem.assemble_operators(m)
            stp = scheme.build_stepper(scheme.CRANK_NICOLSON, m, o, dt)
            P = fem.prolongation_matrix(m, mesh_r)
            levels.append(scheme.make_coupled_level(stp_r, stp, init(m), P, drift))
        return ref, levels, rng, mesh_r, ops_r

    def test_trivial_level_is_bitwise_identical(self):
        drift = scheme.drift_from_name("cos")
        ref, levels, rng, _, _ = self._problem(16, 1 / 16, [16], [1 / 16], drift=drift)
        ref_state, (lvl_state,) = scheme.run_coupled_paths(ref, levels, 1.0, rng)
        assert np.array_equal(ref_state.u, lvl_state.u)
        assert np.array_equal(ref_state.v, lvl_state.v)

    def test_linear_problem_error_decreases_with_level(self):
        # coarse-versus-reference strong error shrinks monotonically (within 2 SE)
        ns = [2, 4, 8, 16]
        sq = {n: [] for n in ns}
        for i in range(60):
            ref, levels, rng, mesh_r, ops_r = self._problem(
                64, 1 / 64, ns, [1 / n for n in ns], seed=i
            )
            ref_state, lvl_states = scheme.run_coupled_paths(ref, levels, 1.0, rng)
            for n, lv, st in zip(ns, levels, lvl_states):
                d = lv.prolongation @ st.u - ref_state.u
                sq[n].append(d @ ops_r.apply_mass(d))
        means = np.array([np.mean(sq[n]) for n in ns])
        ses = np.array([np.std(sq[n], ddof=1) / np.sqrt(len(sq[n])) for n in ns])
        for k in range(len(ns) - 1):
            assert means[k + 1] <= means[k] + 2 * np.hypot(ses[k], ses[k + 1])

    def test_rejects_non_nested_level(self):
        mesh_r = fem.build_uniform_mesh(16)
        ops_r = fem.assemble_operators(mesh_r)
        stp_r = scheme.build_stepper(scheme.CRANK_NICOLSON, mesh_r, ops_r, 1 / 16)
        m = fem.build_uniform_mesh(8)
        o = fem.assemble_operators(m)
        bad_dt_stepper = scheme.build_stepper(scheme.CRANK_NICOLSON, m, o, 0.3)
        with pytest.raises(ValueError):
            scheme.make_coupled_level(
                stp_r, bad_dt_stepper,
                scheme.State(np.zeros(7), np.zeros(7)),
                fem.prolongation_matrix(m, mesh_r),
            )

    def test_paper_geometry_runs(self):
        ns = [2**k for k in range(1, 7)]
        drift = scheme.drift_from_name("cos")
        ref, levels, rng, _, _ = self._problem(256, 2.0**-8, ns, [1.0 / n for n in ns], drift)
        ref_state, lvl_states = scheme.run_coupled_paths(ref, levels, 1.0, rng)
        assert len(lvl_states) == 6
        assert all(np.all(np.isfinite(s.u)) for s in lvl_states)
