"""Sampling of Q-Wiener load increments on the finite element space.

Noise is represented at the load-vector level: the scheme only ever consumes
the dual pairings ``b_i = <dW, phi_i>``, whose per-unit-time covariance is

* ``C = M`` (the mass matrix) for space-time white noise, and
* ``C_ij = integral of q(x, y) phi_i(x) phi_j(y)`` for a kernel covariance.

This makes white noise exactly samplable and makes restriction of a noise
realization to a nested coarser grid / coarser time step exact: coarse hats
lie in the fine space and Wiener increments over subintervals add.

Streams are derived counter-style from ``(master_seed, sample_index, level)``
so Monte Carlo runs are reproducible independently of scheduling.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse

from .errors import NotPositiveSemidefiniteError
from .fem import GAUSS3_POINTS, GAUSS3_WEIGHTS, FemOperators, Mesh1D, banded_cholesky

__all__ = [
    "CovarianceSpec",
    "NoiseFactor",
    "StreamSpec",
    "white_noise",
    "exponential_kernel",
    "kernel_covariance",
    "build_noise_factor",
    "sample_load_increment",
    "restrict_load",
    "LoadRestrictor",
    "derive_stream",
]

_JITTER_LADDER = (0.0, 1e-14, 1e-12, 1e-10)


def _scaled_exponential(x, y, rate, scale):
    return scale * np.exp(-rate * np.abs(x - y))


_KERNELS = {"scaled_exponential": _scaled_exponential}


@dataclass(frozen=True)
class CovarianceSpec:
    """Covariance model of the driving Wiener process.

    ``kind`` is ``"white"`` (identity covariance operator) or ``"kernel"``.
    Kernel models are named so that specs stay picklable across worker
    processes; ``params`` are passed to the registered kernel function.
    """

    kind: str
    kernel_name: str | None = None
    params: tuple = ()
    stationary: bool = True

    def kernel(self, x, y):
        if self.kind != "kernel":
            raise ValueError("kernel() is only available for kernel covariances")
        fn = _KERNELS[self.kernel_name]
        return fn(x, y, *self.params)


def white_noise() -> CovarianceSpec:
    return CovarianceSpec(kind="white")


def exponential_kernel(rate: float = 25.0, scale: float = 1.0 / 16.0) -> CovarianceSpec:
    """Stationary kernel ``scale * exp(-rate |x - y|)``."""
    return CovarianceSpec(
        kind="kernel", kernel_name="scaled_exponential", params=(float(rate), float(scale))
    )


def kernel_covariance(name: str, *params) -> CovarianceSpec:
    if name not in _KERNELS:
        raise ValueError(f"unknown kernel {name!r}; known: {sorted(_KERNELS)}")
    return CovarianceSpec(kind="kernel", kernel_name=name, params=tuple(params))


@dataclass
class NoiseFactor:
    """Cholesky-type factor of the per-unit-time load covariance.

    For white noise the factor is the banded Cholesky of the mass matrix and
    ``covariance`` is M; for kernels both are dense.  ``jitter`` records the
    diagonal shift (if any) needed for the factorization to succeed.
    """

    mesh: Mesh1D
    spec: CovarianceSpec
    covariance: scipy.sparse.csr_matrix | np.ndarray
    jitter: float
    # white: (diag, subdiag) of the lower bidiagonal factor; kernel: dense lower triangle
    _factor_diag: np.ndarray | None = field(default=None, repr=False)
    _factor_sub: np.ndarray | None = field(default=None, repr=False)
    _factor_dense: np.ndarray | None = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return self.mesh.n_interior

    def factor_matrix(self) -> np.ndarray:
        """The lower-triangular factor L with L L^T = covariance (+ jitter I)."""
        if self._factor_dense is not None:
            return self._factor_dense
        L = np.zeros((self.dim, self.dim))
        np.fill_diagonal(L, self._factor_diag)
        L[np.arange(1, self.dim), np.arange(self.dim - 1)] = self._factor_sub
        return L

    def apply_factor(self, z: np.ndarray) -> np.ndarray:
        """Compute L z (z may be a vector or a (dim, k) matrix of draws)."""
        if self._factor_dense is not None:
            return self._factor_dense @ z
        out = self._factor_diag * z if z.ndim == 1 else self._factor_diag[:, None] * z
        out[1:] += (
            self._factor_sub * z[:-1]
            if z.ndim == 1
            else self._factor_sub[:, None] * z[:-1]
        )
        return out


def _gauss_panels(a: np.ndarray, h: float):
    """Gauss-3 points/weights on panels [a, a+h] (weights include the h factor)."""
    pts = a[:, None] + h * GAUSS3_POINTS[None, :]
    wts = np.broadcast_to(h * GAUSS3_WEIGHTS, pts.shape)
    return pts.ravel(), wts.ravel()


def _hat_values(mesh: Mesh1D, x: np.ndarray) -> np.ndarray:
    """Dense matrix of hat-function values, shape (len(x), interior dof)."""
    vals = np.maximum(0.0, 1.0 - np.abs(x[:, None] - mesh.interior_nodes[None, :]) / mesh.h)
    return vals


def _assemble_kernel_gram(mesh: Mesh1D, spec: CovarianceSpec) -> np.ndarray:
    """Gram matrix of the hats under the kernel, by Gauss-3 over element pairs.

    Same-element pairs are split along the diagonal x = y into two triangles
    (mapped to smooth tensor-product integrals) because kernels of the
    exponential family have a kink there that plain tensor quadrature
    resolves poorly.
    """
    n = mesh.n_elements
    h = mesh.h
    xq, wq = _gauss_panels(mesh.nodes[:-1], h)
    phi = _hat_values(mesh, xq)  # (3n, dof)
    G = wq[:, None] * phi

    kxy = np.asarray(spec.kernel(xq[:, None], xq[None, :]), dtype=float)
    gram = G.T @ kxy @ G

    # Replace the same-element blocks with the kink-split evaluation.
    ref = GAUSS3_POINTS
    wref = GAUSS3_WEIGHTS
    # Triangle x < y of the reference square, parametrized y = s, x = s * t:
    # integral = int_0^1 int_0^1 g(s t, s) s dt ds; mirror for x > y.
    s = ref[:, None]  # (3, 1)
    t = ref[None, :]  # (1, 3)
    w2 = (wref[:, None] * wref[None, :]) * s  # Jacobian s
    for e in range(n):
        x0 = mesh.nodes[e]
        ylocal = s * np.ones_like(t)
        xlocal = s * t
        k_lower = spec.kernel(x0 + h * xlocal, x0 + h * ylocal)
        # local hat values: left hat = 1 - u, right hat = u at local coordinate u
        for a_local, a_node in ((0, e), (1, e + 1)):
            if not (1 <= a_node <= n - 1):
                continue
            phi_a_x = xlocal if a_local else 1.0 - xlocal
            phi_a_y = ylocal if a_local else 1.0 - ylocal
            for b_local, b_node in ((0, e), (1, e + 1)):
                if not (1 <= b_node <= n - 1):
                    continue
                phi_b_y = ylocal if b_local else 1.0 - ylocal
                phi_b_x = xlocal if b_local else 1.0 - xlocal
                # two triangles; the kernel is symmetric so evaluate once per triangle
                val = h * h * np.sum(
                    w2 * k_lower * (phi_a_x * phi_b_y + phi_a_y * phi_b_x)
                )
                # remove the plain tensor-quadrature contribution of this block
                sl = slice(3 * e, 3 * e + 3)
                old = (
                    G[sl, a_node - 1] @ kxy[sl, sl] @ G[sl, b_node - 1]
                )
                gram[a_node - 1, b_node - 1] += val - old
    return 0.5 * (gram + gram.T)


def build_noise_factor(mesh: Mesh1D, ops: FemOperators, spec: CovarianceSpec) -> NoiseFactor:
    """Factor the per-unit-time covariance of the load vector.

    White noise: C = M, factored with a banded Cholesky.  Kernel: the Gram
    matrix under the kernel, factored densely; the smallest jitter from a
    fixed ladder (relative to trace(C)/dof) that lets Cholesky succeed is
    applied and recorded.
    """
    if spec.kind == "white":
        cb = banded_cholesky(ops.mass_diag, ops.mass_off)
        return NoiseFactor(
            mesh=mesh,
            spec=spec,
            covariance=ops.mass,
            jitter=0.0,
            _factor_diag=cb[0].copy(),
            _factor_sub=cb[1, :-1].copy(),
        )
    if spec.kind != "kernel":
        raise ValueError(f"unknown covariance kind {spec.kind!r}")
    gram = _assemble_kernel_gram(mesh, spec)
    scale = np.trace(gram) / gram.shape[0] if gram.shape[0] else 1.0
    if scale == 0.0:
        # identically zero kernel: sampling returns zero loads
        return NoiseFactor(
            mesh=mesh, spec=spec, covariance=gram, jitter=0.0,
            _factor_dense=np.zeros_like(gram),
        )
    for jitter_rel in _JITTER_LADDER:
        jitter = jitter_rel * scale
        try:
            L = np.linalg.cholesky(gram + jitter * np.eye(gram.shape[0]))
        except np.linalg.LinAlgError:
            continue
        return NoiseFactor(
            mesh=mesh, spec=spec, covariance=gram, jitter=jitter, _factor_dense=L
        )
    smallest = float(np.linalg.eigvalsh(gram)[0])
    raise NotPositiveSemidefiniteError(
        f"kernel Gram matrix is not positive semidefinite "
        f"(smallest eigenvalue ~ {smallest:.3e})",
        smallest_eigenvalue=smallest,
    )


def sample_load_increment(factor: NoiseFactor, dt: float, rng: np.random.Generator, size=None):
    """Draw load increments b = sqrt(dt) L z with Cov(b) = dt C.

    With ``size=None`` returns one load vector; with ``size=k`` returns a
    (dim, k) matrix of independent draws (draws are the columns).
    """
    if dt <= 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    shape = (factor.dim,) if size is None else (factor.dim, int(size))
    z = rng.standard_normal(shape)
    return np.sqrt(dt) * factor.apply_factor(z)


def restrict_load(b_fine: np.ndarray, prolongation: scipy.sparse.csr_matrix) -> np.ndarray:
    """Coarse-grid load of the same noise realization: P^T b.

    Exact because each coarse hat is a combination of fine hats.  ``b_fine``
    should already contain the sum of the fine-step loads spanned by one
    coarse step (Wiener increments over subintervals add).
    """
    if b_fine.shape[0] != prolongation.shape[0]:
        raise ValueError(
            f"fine load has dimension {b_fine.shape[0]}, expected {prolongation.shape[0]}"
        )
    return prolongation.T @ b_fine


class LoadRestrictor:
    """Accumulates fine-step loads and emits the coarse-step load every ``step_ratio`` pushes."""

    def __init__(self, prolongation: scipy.sparse.csr_matrix, step_ratio: int):
        if step_ratio < 1:
            raise ValueError("step_ratio must be a positive integer")
        self.prolongation = prolongation
        self.step_ratio = int(step_ratio)
        self._buffer = np.zeros(prolongation.shape[0])
        self._count = 0

    def push(self, b_fine: np.ndarray):
        """Add one fine load; returns the coarse load when a coarse step completes, else None."""
        self._buffer += b_fine
        self._count += 1
        if self._count == self.step_ratio:
            coarse = restrict_load(self._buffer, self.prolongation)
            self._buffer[:] = 0.0
            self._count = 0
            return coarse
        return None


@dataclass(frozen=True)
class StreamSpec:
    """Identifies one reproducible random stream."""

    master_seed: int
    sample_index: int = 0
    level: int = 0


def derive_stream(spec: StreamSpec) -> np.random.Generator:
    """Derive an independent, reproducible stream for (seed, sample, level).

    Uses a counter-based bit generator keyed through ``SeedSequence`` so that
    identical specs give bit-identical streams regardless of how work is
    scheduled across threads or processes.
    """
    ss = np.random.SeedSequence(
        entropy=spec.master_seed, spawn_key=(spec.sample_index, spec.level)
    )
    return np.random.Generator(np.random.Philox(ss))
