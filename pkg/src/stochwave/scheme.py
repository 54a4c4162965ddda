"""Rational one-step integrators for the first-order-in-time wave system.

States are pairs ``(u, v)`` of P1 coefficient vectors for displacement and
velocity.  One step of the scheme applies

    X_new = R(dt A_h) (X_old + [0, dt * F-load + noise-load])

where ``A_h`` is the block operator ``[[0, -I], [Lambda_h, 0]]`` acting on
coefficient vectors (``Lambda_h = M^{-1} K``), loads enter the velocity slot
in dual (load-vector) form, and ``R`` is the stability function of backward
Euler (order 1) or Crank-Nicolson (order 2).

Writing ``p = M v + l`` for the velocity equation right-hand side, applying
``R(dt A_h)`` reduces to one solve with ``S = M + (c dt)^2 K`` (c = 1 for BE,
1/2 for CN):

    S u_mid = M u + c dt p
    u_new   = u_mid            (BE)      2 u_mid - u   (CN)
    M v_new = p - dt K u_mid

Both factorizations (S and M) are banded Cholesky, computed once per stepper.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg

from .errors import NumericError
from .fem import (
    FemFunction,
    FemOperators,
    Mesh1D,
    banded_cholesky,
    load_vector_from_values,
    GAUSS3_POINTS,
)
from .noise import LoadRestrictor, NoiseFactor, sample_load_increment

__all__ = [
    "State",
    "RationalMethod",
    "BACKWARD_EULER",
    "CRANK_NICOLSON",
    "rational_method",
    "Drift",
    "drift_from_name",
    "drift_load",
    "Stepper",
    "build_stepper",
    "step",
    "run_path",
    "CoupledLevel",
    "ReferenceProblem",
    "run_coupled_paths",
]


@dataclass
class State:
    """Displacement/velocity coefficient pair at a point in time."""

    u: np.ndarray
    v: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        if self.u.shape != self.v.shape:
            raise ValueError("u and v must have equal dimensions")

    def copy(self) -> "State":
        return State(self.u.copy(), self.v.copy(), self.time)


@dataclass(frozen=True)
class RationalMethod:
    """A rational stability function R approximating exp(-z) to order rho."""

    name: str
    order: int
    scalar_map: Callable[[complex], complex]

    def __call__(self, z: complex) -> complex:
        return self.scalar_map(z)


def _be_map(z):
    return 1.0 / (1.0 + z)


def _cn_map(z):
    return (1.0 - z / 2.0) / (1.0 + z / 2.0)


BACKWARD_EULER = RationalMethod("backward_euler", 1, _be_map)
CRANK_NICOLSON = RationalMethod("crank_nicolson", 2, _cn_map)

_METHODS = {m.name: m for m in (BACKWARD_EULER, CRANK_NICOLSON)}


def rational_method(name: str) -> RationalMethod:
    try:
        return _METHODS[name]
    except KeyError:
        raise ValueError(f"unknown method {name!r}; known: {sorted(_METHODS)}") from None


@dataclass(frozen=True)
class Drift:
    """Pointwise (Nemytskij) drift induced by a scalar function f.

    ``f`` must be Lipschitz with the given constant; ``df`` is its derivative
    (used only by diagnostics).  ``f_zero_at_zero`` records whether f(0) = 0,
    which decides how much smoothness the induced operator preserves.
    """

    f: Callable
    df: Callable
    lipschitz_const: float
    f_zero_at_zero: bool
    name: str = "custom"


def _neg_sin(x):
    return -np.sin(x)


def drift_from_name(name: str, coeff: float = 1.0) -> Drift | None:
    """Named drifts used by experiment configs; 'zero' maps to ``None``."""
    if name == "zero":
        return None
    if name == "cos":
        return Drift(np.cos, _neg_sin, 1.0, False, "cos")
    if name == "sin":
        return Drift(np.sin, np.cos, 1.0, True, "sin")
    if name == "linear":
        lam = float(coeff)

        def f(x, _lam=lam):
            return _lam * x

        def df(x, _lam=lam):
            return np.full_like(np.asarray(x, dtype=float), _lam)

        return Drift(f, df, abs(lam), True, "linear")
    raise ValueError(f"unknown drift {name!r}")


def drift_load(
    drift: Drift, u, ops: FemOperators, mode: str = "quadrature"
) -> np.ndarray:
    """Load vector of the composed function f(u_h) against the hat basis.

    ``mode='quadrature'`` evaluates u_h exactly at the Gauss-3 points of each
    element (it is linear there) and integrates f(u_h) phi_i; this matches the
    L2 projection of the drift up to quadrature error.  ``mode='nodal'``
    interpolates f at the nodes instead (faster, kept for comparisons; not
    used by the convergence experiments).
    """
    coeffs = u.coeffs if isinstance(u, FemFunction) else np.asarray(u)
    mesh = ops.mesh
    if mode == "nodal":
        return ops.apply_mass(drift.f(coeffs))
    if mode != "quadrature":
        raise ValueError(f"unknown drift load mode {mode!r}")
    full = np.zeros(mesh.n_elements + 1)
    full[1:-1] = coeffs
    t = GAUSS3_POINTS
    uq = full[:-1, None] * (1.0 - t)[None, :] + full[1:, None] * t[None, :]
    fu = np.asarray(drift.f(uq), dtype=float)
    if not np.all(np.isfinite(fu)):
        bad = int(np.argwhere(~np.isfinite(fu))[0][0])
        raise NumericError(f"drift produced a non-finite value on element {bad}")
    return load_vector_from_values(mesh, fu)


class Stepper:
    """One-step map for a fixed (method, mesh, dt); immutable after construction."""

    def __init__(self, method: RationalMethod, ops: FemOperators, dt: float):
        if dt <= 0.0:
            raise ValueError(f"dt must be positive, got {dt}")
        self.method = method
        self.ops = ops
        self.mesh = ops.mesh
        self.dt = float(dt)
        self.implicit_weight = 1.0 if method.order == 1 else 0.5
        c2dt2 = (self.implicit_weight * dt) ** 2
        s_diag = ops.mass_diag + c2dt2 * ops.stiffness_diag
        s_off = ops.mass_off + c2dt2 * ops.stiffness_off
        self._s_chol = banded_cholesky(s_diag, s_off)

    def solve_shifted(self, rhs: np.ndarray) -> np.ndarray:
        """Solve (M + (c dt)^2 K) x = rhs."""
        return scipy.linalg.cho_solve_banded((self._s_chol, True), rhs)


def build_stepper(method: RationalMethod, mesh: Mesh1D, ops: FemOperators, dt: float) -> Stepper:
    if ops.mesh is not mesh and ops.mesh.n_elements != mesh.n_elements:
        raise ValueError("operators were assembled on a different mesh")
    return Stepper(method, ops, dt)


def step(
    stepper: Stepper,
    state: State,
    drift: Drift | None = None,
    noise_load: np.ndarray | None = None,
) -> State:
    """Advance one step: add loads to the velocity equation, apply R(dt A_h).

    The drift is evaluated at the state's own time level (the left endpoint of
    the step).  ``noise_load`` is a load vector (dual pairing of the Wiener
    increment with the hats); the mass solve it would require is fused into
    the Schur-complement solve below.
    """
    ops = stepper.ops
    if state.u.shape[0] != ops.mesh.n_interior:
        raise ValueError(
            f"state has {state.u.shape[0]} dofs, stepper expects {ops.mesh.n_interior}"
        )
    dt = stepper.dt
    p = ops.apply_mass(state.v)
    if drift is not None:
        p += dt * drift_load(drift, state.u, ops)
    if noise_load is not None:
        p += noise_load
    rhs = ops.apply_mass(state.u) + (stepper.implicit_weight * dt) * p
    u_mid = stepper.solve_shifted(rhs)
    if stepper.method.order == 2:
        u_new = 2.0 * u_mid - state.u
    else:
        u_new = u_mid
    v_new = ops.solve_mass(p - dt * ops.apply_stiffness(u_mid))
    return State(u_new, v_new, state.time + dt)


def _integral_steps(T: float, dt: float) -> int:
    n = round(T / dt)
    if n < 1 or abs(n * dt - T) > 8.0 * np.finfo(float).eps * max(T, 1.0):
        raise ValueError(f"T/dt = {T}/{dt} is not a positive integer")
    return n


def run_path(
    stepper: Stepper,
    T: float,
    initial: State,
    drift: Drift | None = None,
    noise_factor: NoiseFactor | None = None,
    rng: np.random.Generator | None = None,
    loads: np.ndarray | None = None,
    snapshot_times=None,
    snapshot_hook=None,
) -> State:
    """Run a full trajectory over [0, T] and return the final state.

    Noise either comes from ``noise_factor`` sampled with ``rng`` or from a
    pre-supplied ``loads`` array of shape (n_steps, dof); at most one of the
    two may be given.  ``snapshot_hook(time, u_nodal, v_nodal)`` fires at the
    grid times nearest the requested ``snapshot_times``.
    """
    n_steps = _integral_steps(T, stepper.dt)
    if noise_factor is not None and loads is not None:
        raise ValueError("give either a noise factor or pre-supplied loads, not both")
    if noise_factor is not None and rng is None:
        raise ValueError("sampling noise requires a random stream")
    if loads is not None and loads.shape != (n_steps, stepper.mesh.n_interior):
        raise ValueError(
            f"loads must have shape ({n_steps}, {stepper.mesh.n_interior}), got {loads.shape}"
        )

    snap_indices = {}
    if snapshot_times is not None and snapshot_hook is not None:
        for t_req in snapshot_times:
            snap_indices.setdefault(int(round(t_req / stepper.dt)), t_req)

    def emit(idx, state):
        if idx in snap_indices:
            full_u = np.zeros(stepper.mesh.n_elements + 1)
            full_v = np.zeros(stepper.mesh.n_elements + 1)
            full_u[1:-1] = state.u
            full_v[1:-1] = state.v
            snapshot_hook(state.time, full_u, full_v)

    state = initial.copy()
    emit(0, state)
    for j in range(n_steps):
        if noise_factor is not None:
            b = sample_load_increment(noise_factor, stepper.dt, rng)
        elif loads is not None:
            b = loads[j]
        else:
            b = None
        state = step(stepper, state, drift, b)
        emit(j + 1, state)
    if not (np.all(np.isfinite(state.u)) and np.all(np.isfinite(state.v))):
        raise NumericError("trajectory produced a non-finite state")
    return state


@dataclass
class ReferenceProblem:
    """Reference discretization of a coupled run: finest grid and time step."""

    stepper: Stepper
    initial: State
    drift: Drift | None = None
    noise_factor: NoiseFactor | None = None


@dataclass
class CoupledLevel:
    """A coarse discretization consuming restricted reference noise."""

    stepper: Stepper
    initial: State
    prolongation: object  # sparse matrix, level dof -> reference dof
    step_ratio: int
    drift: Drift | None = None


def make_coupled_level(
    ref_stepper: Stepper,
    stepper: Stepper,
    initial: State,
    prolongation,
    drift: Drift | None = None,
) -> CoupledLevel:
    """Validate nesting of (mesh, dt) against the reference and bundle a level."""
    ratio_f = stepper.dt / ref_stepper.dt
    ratio = round(ratio_f)
    if ratio < 1 or abs(ratio - ratio_f) > 1e-9:
        raise ValueError(
            f"level dt {stepper.dt} is not an integer multiple of reference dt {ref_stepper.dt}"
        )
    if ref_stepper.mesh.n_elements % stepper.mesh.n_elements != 0:
        raise ValueError("level mesh is not nested in the reference mesh")
    return CoupledLevel(stepper, initial, prolongation, ratio, drift)


def run_coupled_paths(
    ref: ReferenceProblem,
    levels: list[CoupledLevel],
    T: float,
    rng: np.random.Generator | None = None,
    loads: np.ndarray | None = None,
):
    """Drive the reference and all coarse levels with one Wiener realization.

    Noise loads are generated once per reference step (or taken from
    ``loads``); each level consumes the sums of the fine loads inside its own
    step, restricted through the transposed prolongation.  Returns the final
    reference state and the list of final level states.
    """
    n_steps = _integral_steps(T, ref.stepper.dt)
    for lv in levels:
        n_lv = _integral_steps(T, lv.stepper.dt)
        if n_lv * lv.step_ratio != n_steps:
            raise ValueError("level step count is inconsistent with the reference grid")
    if ref.noise_factor is not None and loads is not None:
        raise ValueError("give either a reference noise factor or pre-supplied loads, not both")
    if loads is not None and loads.shape[0] != n_steps:
        raise ValueError(f"expected {n_steps} pre-supplied loads, got {loads.shape[0]}")

    restrictors = [LoadRestrictor(lv.prolongation, lv.step_ratio) for lv in levels]
    ref_state = ref.initial.copy()
    level_states = [lv.initial.copy() for lv in levels]

    for j in range(n_steps):
        if ref.noise_factor is not None:
            b = sample_load_increment(ref.noise_factor, ref.stepper.dt, rng)
        elif loads is not None:
            b = loads[j]
        else:
            b = None
        ref_state = step(ref.stepper, ref_state, ref.drift, b)
        for i, lv in enumerate(levels):
            if b is not None:
                coarse_load = restrictors[i].push(b)
                if coarse_load is not None:
                    level_states[i] = step(lv.stepper, level_states[i], lv.drift, coarse_load)
            elif (j + 1) % lv.step_ratio == 0:
                level_states[i] = step(lv.stepper, level_states[i], lv.drift, None)

    for st in [ref_state, *level_states]:
        if not (np.all(np.isfinite(st.u)) and np.all(np.isfinite(st.v))):
            raise NumericError("coupled run produced a non-finite state")
    return ref_state, level_states
