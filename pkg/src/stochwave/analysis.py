"""Error estimators, convergence-rate prediction and fitting, and an exact
modal reference sampler for the linear white-noise problem.

The theoretical rates implemented by :func:`predict_rates` are driven by the
regularity parameters of the problem data: ``beta`` (noise), ``delta``
(initial data), ``theta`` (drift smoothness), ``eta`` (time Hoelder
regularity, infinite for autonomous data), the dual-norm parameters
``nu, mu``, the element order ``kappa`` and the time-stepper order ``rho``.
The solution regularity index is ``r = min(beta, delta, 1 + theta)``; the
strong L2 rate in space is ``r * kappa / (kappa + 1)``, and the weak rate is
governed by the improved index ``min(max(2 nu, beta), 1 + theta, delta)``
with an ``h^{1-mu}`` penalty when ``mu > 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientDataError
from .fem import (
    FemFunction,
    FemOperators,
    Mesh1D,
    SpectralBasis,
    modal_coefficients,
    sine_load_matrix,
)
from .scheme import State

__all__ = [
    "energy",
    "RegularityParams",
    "RatePrediction",
    "predict_rates",
    "TestFunction",
    "squared_l2_norm",
    "linear_functional",
    "strong_error_estimate",
    "weak_error_estimate",
    "ErrorRow",
    "ErrorTable",
    "RateFit",
    "fit_rates",
    "ModalOracle",
    "modal_oracle_path",
    "l2_distance_to_function",
    "quad_integral",
]


def energy(state: State, ops: FemOperators) -> float:
    """Discrete energy v^T M v + u^T K u (conserved exactly by Crank-Nicolson)."""
    return float(
        state.v @ ops.apply_mass(state.v) + state.u @ ops.apply_stiffness(state.u)
    )


# ---------------------------------------------------------------------------
# Rate prediction


@dataclass(frozen=True)
class RegularityParams:
    """Regularity parameters of the data; validated on construction."""

    beta: float
    delta: float
    theta: float
    eta: float
    nu: float
    mu: float
    kappa: int = 2
    rho: int = 2

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError(f"violated constraint beta >= 0 (beta={self.beta})")
        if self.delta < 0:
            raise ValueError(f"violated constraint delta >= 0 (delta={self.delta})")
        if self.eta < 0:
            raise ValueError(f"violated constraint eta >= 0 (eta={self.eta})")
        if not 0.0 <= self.mu <= 2.0:
            raise ValueError(f"violated constraint mu in [0, 2] (mu={self.mu})")
        if self.kappa not in (2, 3):
            raise ValueError(f"violated constraint kappa in {{2, 3}} (kappa={self.kappa})")
        if self.rho not in (1, 2):
            raise ValueError(f"violated constraint rho in {{1, 2}} (rho={self.rho})")
        if self.theta > min(self.beta, self.delta, 1.0):
            raise ValueError(
                f"violated constraint theta <= min(beta, delta, 1) "
                f"(theta={self.theta}, bound={min(self.beta, self.delta, 1.0)})"
            )
        lo, hi = max(self.mu - 1.0, 0.0), min(self.r, 1.0)
        if not lo <= self.nu <= hi:
            raise ValueError(
                f"violated constraint nu in [max(mu - 1, 0), min(r, 1)] "
                f"(nu={self.nu}, interval=[{lo}, {hi}])"
            )

    @property
    def r(self) -> float:
        """Spatial regularity index of the solution."""
        return min(self.beta, self.delta, 1.0 + self.theta)


@dataclass(frozen=True)
class RatePrediction:
    """Predicted convergence exponents in h and dt."""

    r: float
    r_prime_strong: float
    r_prime_weak: float
    strong_h_exp: float
    strong_dt_exp: float
    weak_h_exp: float
    weak_dt_exp: float
    h_penalty_exp: float

    @property
    def negnorm_h_exp(self) -> float:
        return self.r_prime_strong * self._kappa_factor

    @property
    def negnorm_dt_exp(self) -> float:
        return min(self.r_prime_strong * self._rho_factor, self._eta, 1.0)

    # factors stashed by predict_rates so the negative-norm exponents can be derived
    _kappa_factor: float = field(default=2.0 / 3.0, repr=False)
    _rho_factor: float = field(default=2.0 / 3.0, repr=False)
    _eta: float = field(default=math.inf, repr=False)


def predict_rates(params: RegularityParams) -> RatePrediction:
    """Evaluate the convergence-rate formulas for the given parameters."""
    kf = params.kappa / (params.kappa + 1.0)
    rf = params.rho / (params.rho + 1.0)
    r = params.r
    r_prime_strong = min(
        max(2.0 * params.nu, params.beta),
        max(2.0 * params.nu, 1.0 + params.theta),
        params.delta,
    )
    r_prime_weak = min(max(2.0 * params.nu, params.beta), 1.0 + params.theta, params.delta)
    penalty = 1.0 - params.mu if params.mu > 1.0 else 0.0
    return RatePrediction(
        r=r,
        r_prime_strong=r_prime_strong,
        r_prime_weak=r_prime_weak,
        strong_h_exp=r * kf,
        strong_dt_exp=min(r * rf, params.eta, 1.0),
        weak_h_exp=r_prime_weak * kf + penalty,
        weak_dt_exp=min(r_prime_weak * rf, params.eta, 1.0),
        h_penalty_exp=penalty,
        _kappa_factor=kf,
        _rho_factor=rf,
        _eta=params.eta,
    )


# ---------------------------------------------------------------------------
# Test functionals and Monte Carlo error estimators


@dataclass(frozen=True)
class TestFunction:
    """Smooth functional of the displacement used by the weak-error estimator.

    ``kind='squared_l2'`` is phi(u) = ||u||^2 (second derivative 2 I, so it
    commutes with any function of the Laplacian); ``kind='linear'`` is
    phi(u) = <u, w> for a fixed weight w.
    """

    kind: str
    weight: np.ndarray | None = None

    @property
    def commutes_with_sqrt_inverse(self) -> bool:
        return True  # both supported variants have constant second derivative

    def __call__(self, u: np.ndarray, ops: FemOperators) -> float:
        if self.kind == "squared_l2":
            return float(u @ ops.apply_mass(u))
        if self.kind == "linear":
            return float(u @ ops.apply_mass(self.weight))
        raise ValueError(f"unknown test function kind {self.kind!r}")

    def gradient(self, u: np.ndarray, ops: FemOperators) -> np.ndarray:
        if self.kind == "squared_l2":
            return 2.0 * u
        if self.kind == "linear":
            return np.array(self.weight, copy=True)
        raise ValueError(f"unknown test function kind {self.kind!r}")


def squared_l2_norm() -> TestFunction:
    return TestFunction(kind="squared_l2")


def linear_functional(weight) -> TestFunction:
    coeffs = weight.coeffs if isinstance(weight, FemFunction) else np.asarray(weight)
    return TestFunction(kind="linear", weight=coeffs)


def _u_component(x) -> np.ndarray:
    return x.u if isinstance(x, State) else np.asarray(x)


def strong_error_estimate(
    pairs,
    ops: FemOperators,
    norm: str = "l2",
    nu: float | None = None,
    basis: SpectralBasis | None = None,
):
    """Root-mean-square distance of the displacement components of the pairs.

    Both members of each pair must already live on the common (reference)
    mesh that ``ops`` was assembled on.  ``norm='l2'`` uses the mass-matrix
    norm; ``norm='neg_nu'`` uses the truncated spectral norm of order ``-nu``.
    Returns ``(estimate, standard_error)``; the standard error of the squared
    mean is propagated to the root by the delta method.
    """
    pairs = list(pairs)
    if len(pairs) < 2:
        raise ValueError("need at least two sample pairs")
    if norm == "neg_nu":
        if nu is None or basis is None:
            raise ValueError("negative-norm estimation needs nu and a spectral basis")
        S = sine_load_matrix(ops.mesh.n_elements, basis.n_modes)
        lam_pow = basis.eigenvalues ** (-nu)
        sq = np.empty(len(pairs))
        for i, (a, r) in enumerate(pairs):
            m = S @ (_u_component(a) - _u_component(r))
            sq[i] = np.sum(lam_pow * m**2)
    elif norm == "l2":
        sq = np.empty(len(pairs))
        for i, (a, r) in enumerate(pairs):
            d = _u_component(a) - _u_component(r)
            sq[i] = d @ ops.apply_mass(d)
    else:
        raise ValueError(f"unknown norm {norm!r}")
    return rms_with_se(sq)


def rms_with_se(squared_samples: np.ndarray):
    """(sqrt(mean), SE) from per-sample squared values, delta method for the root."""
    sq = np.asarray(squared_samples, dtype=float)
    n = sq.size
    mean_sq = float(np.mean(sq))
    se_mean = float(np.std(sq, ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    est = math.sqrt(max(mean_sq, 0.0))
    se = se_mean / (2.0 * est) if est > 0.0 else 0.0
    return est, se


def weak_error_estimate(pairs, phi: TestFunction, ops: FemOperators):
    """Monte Carlo estimate of E[phi(approx) - phi(reference)].

    Returns ``(signed estimate, standard error, noise_floor_flag)``; the flag
    marks estimates not distinguishable from zero (|estimate| <= 2 SE), which
    rate fits must not chase.
    """
    pairs = list(pairs)
    if len(pairs) < 2:
        raise ValueError("need at least two sample pairs")
    diffs = np.array(
        [phi(_u_component(a), ops) - phi(_u_component(r), ops) for a, r in pairs]
    )
    return mean_with_floor(diffs)


def mean_with_floor(diffs: np.ndarray):
    diffs = np.asarray(diffs, dtype=float)
    est = float(np.mean(diffs))
    se = float(np.std(diffs, ddof=1) / np.sqrt(diffs.size)) if diffs.size > 1 else 0.0
    return est, se, bool(abs(est) <= 2.0 * se)


# ---------------------------------------------------------------------------
# Error tables and slope fits


@dataclass
class ErrorRow:
    level: int
    h: float
    dt: float
    n_samples: int
    strong_error: float
    strong_se: float
    weak_error: float  # absolute value; sign kept separately
    weak_sign: int
    weak_se: float
    negnorm_error: float | None = None
    negnorm_se: float | None = None
    noise_floor_flag: bool = False

    @property
    def weak_signed(self) -> float:
        return self.weak_sign * self.weak_error


@dataclass
class ErrorTable:
    rows: list
    negnorm_nu: float | None = None

    def __post_init__(self):
        hs = [row.h for row in self.rows]
        if any(h2 >= h1 for h1, h2 in zip(hs, hs[1:])):
            raise ValueError("rows must be ordered by strictly decreasing h")

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(row, name) for row in self.rows], dtype=float)


@dataclass
class RateFit:
    slope: float
    intercept: float
    r_squared: float
    residuals: np.ndarray
    points_used: int
    excluded_levels: tuple = ()


def fit_rates(table: ErrorTable, column: str = "strong") -> RateFit:
    """Least-squares slope of log2(error) against log2(h).

    For the weak column, rows sitting on the Monte Carlo noise floor are
    excluded (their magnitude reflects sampling error, not discretization
    error).  Raises if fewer than three usable rows remain.
    """
    if column == "strong":
        errs = table.column("strong_error")
        usable = np.ones(len(table.rows), dtype=bool)
    elif column == "weak":
        errs = table.column("weak_error")
        usable = ~np.array([row.noise_floor_flag for row in table.rows])
    elif column == "negnorm":
        vals = [row.negnorm_error for row in table.rows]
        if any(v is None for v in vals):
            raise InsufficientDataError("table has no negative-norm column")
        errs = np.array(vals, dtype=float)
        usable = np.ones(len(table.rows), dtype=bool)
    else:
        raise ValueError(f"unknown column {column!r}")
    usable &= errs > 0.0
    if np.count_nonzero(usable) < 3:
        flagged = [row.level for row, ok in zip(table.rows, usable) if not ok]
        raise InsufficientDataError(
            f"only {np.count_nonzero(usable)} usable rows for {column!r} fit "
            f"(excluded levels: {flagged})"
        )
    x = np.log2(table.column("h")[usable])
    y = np.log2(errs[usable])
    slope, intercept = np.polyfit(x, y, 1)
    fitted = slope * x + intercept
    ss_res = float(np.sum((y - fitted) ** 2))
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    excluded = tuple(row.level for row, ok in zip(table.rows, usable) if not ok)
    return RateFit(
        slope=float(slope),
        intercept=float(intercept),
        r_squared=r2,
        residuals=y - fitted,
        points_used=int(np.count_nonzero(usable)),
        excluded_levels=excluded,
    )


# ---------------------------------------------------------------------------
# Exact modal sampler for the linear white-noise problem


class ModalOracle:
    """Exact-in-distribution stepping of the linear system in the sine basis.

    For white noise the modal components decouple: each mode rotates with
    angular frequency sqrt(lambda_j) and receives a Gaussian stochastic
    convolution increment whose 2x2 covariance has closed-form entries.  The
    sampler draws, per mode and step, the triple (Wiener increment, u-
    convolution, v-convolution) from its exact joint 3x3 Gaussian so that a
    finite element path can be driven by the identical (truncated) Wiener
    path through the emitted load increments.
    """

    def __init__(self, basis: SpectralBasis, dt: float):
        if dt <= 0.0:
            raise ValueError("dt must be positive")
        self.basis = basis
        self.dt = float(dt)
        om = basis.frequencies
        self.cos = np.cos(om * dt)
        self.sinc = np.sin(om * dt) / om
        self.msin = -om * np.sin(om * dt)
        cov = np.empty((basis.n_modes, 3, 3))
        cov[:, 0, 0] = dt
        cov[:, 0, 1] = cov[:, 1, 0] = (1.0 - np.cos(om * dt)) / om**2
        cov[:, 0, 2] = cov[:, 2, 0] = np.sin(om * dt) / om
        cov[:, 1, 1] = (dt / 2.0 - np.sin(2.0 * om * dt) / (4.0 * om)) / om**2
        cov[:, 1, 2] = cov[:, 2, 1] = np.sin(om * dt) ** 2 / (2.0 * om**2)
        cov[:, 2, 2] = dt / 2.0 + np.sin(2.0 * om * dt) / (4.0 * om)
        # the 3x3 blocks are Gram matrices, PSD up to roundoff; factor by eigh
        w, vec = np.linalg.eigh(cov)
        self._factor = vec * np.sqrt(np.clip(w, 0.0, None))[:, None, :]

    def rotate(self, u: np.ndarray, v: np.ndarray):
        """Deterministic part of one step (exact wave-group rotation)."""
        u_new = self.cos * u + self.sinc * v
        v_new = self.msin * u + self.cos * v
        return u_new, v_new

    def sample_step(self, u: np.ndarray, v: np.ndarray, rng: np.random.Generator):
        """One exact step; returns (u_new, v_new, wiener_increments).

        ``u``/``v`` may carry a trailing batch axis; draws are per mode and
        per batch column.
        """
        if u.ndim == 1:
            z = rng.standard_normal((self.basis.n_modes, 3))
            incr = np.einsum("jab,jb->ja", self._factor, z)
            w_inc, conv_u, conv_v = incr[:, 0], incr[:, 1], incr[:, 2]
        else:
            z = rng.standard_normal((self.basis.n_modes, 3, u.shape[1]))
            incr = np.einsum("jab,jbk->jak", self._factor, z)
            w_inc, conv_u, conv_v = incr[:, 0], incr[:, 1], incr[:, 2]
            return (
                self.cos[:, None] * u + self.sinc[:, None] * v + conv_u,
                self.msin[:, None] * u + self.cos[:, None] * v + conv_v,
                w_inc,
            )
        u_new, v_new = self.rotate(u, v)
        return u_new + conv_u, v_new + conv_v, w_inc


def modal_oracle_path(
    basis: SpectralBasis,
    dt: float,
    T: float,
    rng: np.random.Generator | None = None,
    u0: np.ndarray | None = None,
    v0: np.ndarray | None = None,
    mesh: Mesh1D | None = None,
    drift=None,
    noise: bool = True,
):
    """Run the exact modal sampler over [0, T].

    Returns ``(u, v, loads)`` where ``loads`` are the finite element load
    increments of the identical Wiener path on ``mesh`` (``None`` when no mesh
    is given).  Only the linear problem is supported; any drift is rejected.
    """
    if drift is not None:
        raise ValueError("the modal sampler supports only the linear problem (no drift)")
    n_steps = round(T / dt)
    if n_steps < 1 or abs(n_steps * dt - T) > 8 * np.finfo(float).eps * max(T, 1.0):
        raise ValueError(f"T/dt = {T}/{dt} is not a positive integer")
    oracle = ModalOracle(basis, dt)
    u = np.zeros(basis.n_modes) if u0 is None else np.array(u0, dtype=float)
    v = np.zeros(basis.n_modes) if v0 is None else np.array(v0, dtype=float)
    S = sine_load_matrix(mesh.n_elements, basis.n_modes) if mesh is not None else None
    loads = np.empty((n_steps, mesh.n_interior)) if mesh is not None else None
    for j in range(n_steps):
        if noise:
            if rng is None:
                raise ValueError("sampling noise requires a random stream")
            u, v, w_inc = oracle.sample_step(u, v, rng)
            if S is not None:
                loads[j] = S.T @ w_inc
        else:
            u, v = oracle.rotate(u, v)
    return u, v, loads


# ---------------------------------------------------------------------------
# Quadrature utilities for comparisons against closed-form fields

_GL5_X, _GL5_W = np.polynomial.legendre.leggauss(5)


def l2_distance_to_function(w: FemFunction, g, n_gauss: int = 5) -> float:
    """L2(0, 1) distance between a P1 function and a smooth closed-form field."""
    x, wts = np.polynomial.legendre.leggauss(n_gauss)
    mesh = w.mesh
    t = 0.5 * (x + 1.0)
    pts = mesh.nodes[:-1, None] + mesh.h * t[None, :]
    full = w.nodal_values()
    wq = full[:-1, None] * (1.0 - t)[None, :] + full[1:, None] * t[None, :]
    diff_sq = (wq - g(pts)) ** 2
    return float(np.sqrt(np.sum(diff_sq @ (0.5 * wts)) * mesh.h))


def quad_integral(g, n_panels: int = 256, n_gauss: int = 5) -> float:
    """Integral of g over (0, 1) by composite Gauss quadrature."""
    x, wts = np.polynomial.legendre.leggauss(n_gauss)
    h = 1.0 / n_panels
    t = 0.5 * (x + 1.0)
    pts = (np.arange(n_panels) * h)[:, None] + h * t[None, :]
    return float(np.sum(g(pts) @ (0.5 * wts)) * h)
