"""1-D P1 finite elements on the unit interval with homogeneous Dirichlet data.

Everything here is specialized to uniform meshes of ``D = (0, 1)``:
mass/stiffness assembly in closed form, L2 and nodal projection of initial
data, prolongation between nested grids, and spectral tools built on the
Dirichlet Laplacian eigenbasis ``e_j(x) = sqrt(2) sin(j pi x)`` with
eigenvalues ``lambda_j = (j pi)^2`` (used for fractional Sobolev norms).

All objects are immutable after construction and safe to share across
threads or processes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.linalg
import scipy.sparse

__all__ = [
    "Mesh1D",
    "FemOperators",
    "FemFunction",
    "SpectralBasis",
    "build_uniform_mesh",
    "assemble_operators",
    "project_initial_data",
    "prolongation_matrix",
    "modal_coefficients",
    "fractional_norm",
    "discrete_eigen",
    "spectral_basis",
    "sine_load_matrix",
]

# 3-point Gauss-Legendre rule on the reference element [0, 1].
# Exact for polynomials of degree <= 5.
GAUSS3_POINTS = np.array(
    [0.5 - 0.5 * np.sqrt(3.0 / 5.0), 0.5, 0.5 + 0.5 * np.sqrt(3.0 / 5.0)]
)
GAUSS3_WEIGHTS = np.array([5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0])


@dataclass(frozen=True)
class Mesh1D:
    """Uniform mesh of (0, 1) with ``n_elements`` elements.

    Functions vanish at both endpoints, so the number of degrees of freedom
    is ``n_elements - 1`` (the interior nodes).
    """

    n_elements: int
    h: float
    nodes: np.ndarray

    def __post_init__(self):
        if self.n_elements < 2:
            raise ValueError("n_elements must be >= 2 (need at least one interior node)")
        if self.nodes.shape != (self.n_elements + 1,):
            raise ValueError("nodes array has wrong length")

    @property
    def n_interior(self) -> int:
        return self.n_elements - 1

    @property
    def interior_nodes(self) -> np.ndarray:
        return self.nodes[1:-1]


def build_uniform_mesh(n_elements: int) -> Mesh1D:
    """Build the uniform mesh of (0, 1) with ``n_elements`` elements."""
    if n_elements < 2:
        raise ValueError(f"n_elements must be >= 2, got {n_elements}")
    n_elements = int(n_elements)
    nodes = np.linspace(0.0, 1.0, n_elements + 1)
    return Mesh1D(n_elements=n_elements, h=1.0 / n_elements, nodes=nodes)


def _sym_tridiag_csr(diag: np.ndarray, off: np.ndarray) -> scipy.sparse.csr_matrix:
    n = diag.size
    return scipy.sparse.diags_array(
        [off, diag, off], offsets=[-1, 0, 1], shape=(n, n)
    ).tocsr()


@dataclass
class FemOperators:
    """Assembled mass and stiffness matrices with cached factorizations.

    ``mass`` and ``stiffness`` are sparse CSR for inspection; the symmetric
    tridiagonal structure is also kept as (diagonal, off-diagonal) vectors so
    that matrix-vector products and banded Cholesky solves avoid sparse-matrix
    overhead in time-stepping loops.
    """

    mesh: Mesh1D
    mass: scipy.sparse.csr_matrix
    stiffness: scipy.sparse.csr_matrix
    mass_diag: np.ndarray = field(repr=False)
    mass_off: np.ndarray = field(repr=False)
    stiffness_diag: np.ndarray = field(repr=False)
    stiffness_off: np.ndarray = field(repr=False)
    _mass_chol: np.ndarray = field(repr=False)

    def apply_mass(self, x: np.ndarray) -> np.ndarray:
        return _tridiag_matvec(self.mass_diag, self.mass_off, x)

    def apply_stiffness(self, x: np.ndarray) -> np.ndarray:
        return _tridiag_matvec(self.stiffness_diag, self.stiffness_off, x)

    def solve_mass(self, rhs: np.ndarray) -> np.ndarray:
        """Solve M x = rhs via the cached banded Cholesky factor."""
        return scipy.linalg.cho_solve_banded((self._mass_chol, True), rhs)


def _tridiag_matvec(diag, off, x):
    y = diag * x
    if x.ndim == 1:
        y[1:] += off * x[:-1]
        y[:-1] += off * x[1:]
    else:
        y[1:] += off[:, None] * x[:-1]
        y[:-1] += off[:, None] * x[1:]
    return y


def banded_cholesky(diag: np.ndarray, off: np.ndarray) -> np.ndarray:
    """Lower banded Cholesky factor of a symmetric positive definite tridiagonal matrix."""
    n = diag.size
    ab = np.zeros((2, n))
    ab[0] = diag
    ab[1, :-1] = off
    return scipy.linalg.cholesky_banded(ab, lower=True)


def assemble_operators(mesh: Mesh1D) -> FemOperators:
    """Assemble mass and stiffness matrices for P1 elements on ``mesh``.

    Element integrals of hat-function products are evaluated in closed form:
    interior mass row is (h/6) [1, 4, 1] and stiffness row (1/h) [-1, 2, -1].
    """
    n = mesh.n_interior
    h = mesh.h
    m_diag = np.full(n, 4.0 * h / 6.0)
    m_off = np.full(n - 1, h / 6.0)
    k_diag = np.full(n, 2.0 / h)
    k_off = np.full(n - 1, -1.0 / h)
    return FemOperators(
        mesh=mesh,
        mass=_sym_tridiag_csr(m_diag, m_off),
        stiffness=_sym_tridiag_csr(k_diag, k_off),
        mass_diag=m_diag,
        mass_off=m_off,
        stiffness_diag=k_diag,
        stiffness_off=k_off,
        _mass_chol=banded_cholesky(m_diag, m_off),
    )


@dataclass
class FemFunction:
    """A P1 function given by its interior nodal values."""

    mesh: Mesh1D
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.shape != (self.mesh.n_interior,):
            raise ValueError(
                f"expected {self.mesh.n_interior} coefficients, got {self.coeffs.shape}"
            )

    def nodal_values(self) -> np.ndarray:
        """Nodal values on the full mesh, boundary zeros included."""
        full = np.zeros(self.mesh.n_elements + 1)
        full[1:-1] = self.coeffs
        return full

    def __call__(self, x):
        """Evaluate the piecewise linear interpolant at points ``x``."""
        return np.interp(x, self.mesh.nodes, self.nodal_values())


def element_quadrature(mesh: Mesh1D):
    """Gauss-3 layout per element: points of shape (n_elements, 3) and hat values.

    Returns ``(x_quad, t_quad, weights)`` where ``t_quad`` are reference
    coordinates in (0, 1); the left/right hat values at the quadrature points
    are ``1 - t_quad`` and ``t_quad``.
    """
    lefts = mesh.nodes[:-1]
    x_quad = lefts[:, None] + mesh.h * GAUSS3_POINTS[None, :]
    return x_quad, GAUSS3_POINTS, GAUSS3_WEIGHTS


def load_vector_from_values(mesh: Mesh1D, values: np.ndarray) -> np.ndarray:
    """Interior load vector from integrand values at the Gauss-3 points.

    ``values`` has shape (n_elements, 3); entry i of the result approximates
    the integral of the integrand against the hat function at node i.
    """
    wl = GAUSS3_WEIGHTS * (1.0 - GAUSS3_POINTS)
    wr = GAUSS3_WEIGHTS * GAUSS3_POINTS
    full = np.zeros(mesh.n_elements + 1)
    full[:-1] += mesh.h * values @ wl
    full[1:] += mesh.h * values @ wr
    return full[1:-1]


def project_initial_data(mesh: Mesh1D, f, mode: str = "l2") -> FemFunction:
    """Project a scalar function on (0, 1) into the P1 space.

    ``mode='l2'`` solves ``M c = b`` with load integrals from per-element
    Gauss-3 quadrature (the orthogonal projection); ``mode='nodal'`` takes
    nodal values (requires f continuous).
    """
    if mode == "nodal":
        coeffs = np.asarray([f(x) for x in mesh.interior_nodes], dtype=float)
        if not np.all(np.isfinite(coeffs)):
            raise ValueError("initial data is not finite at the mesh nodes")
        return FemFunction(mesh, coeffs)
    if mode != "l2":
        raise ValueError(f"unknown projection mode {mode!r}")
    x_quad, _, _ = element_quadrature(mesh)
    fx = np.asarray(f(x_quad), dtype=float)
    if fx.shape != x_quad.shape:  # f not vectorized
        fx = np.vectorize(f)(x_quad)
    if not np.all(np.isfinite(fx)):
        raise ValueError("initial data is not finite at the quadrature points")
    b = load_vector_from_values(mesh, fx)
    ops = assemble_operators(mesh)
    return FemFunction(mesh, ops.solve_mass(b))


def prolongation_matrix(coarse: Mesh1D, fine: Mesh1D) -> scipy.sparse.csr_matrix:
    """Exact embedding of the coarse P1 space into a nested fine P1 space.

    The matrix P has shape (fine dof, coarse dof); for coarse coefficients c
    the fine function P c coincides with the coarse one pointwise.
    """
    if fine.n_elements % coarse.n_elements != 0:
        raise ValueError(
            f"meshes are not nested: {fine.n_elements} not divisible by {coarse.n_elements}"
        )
    ratio = fine.n_elements // coarse.n_elements
    rows, cols, vals = [], [], []
    # fine node j sits at coarse reference position j / ratio
    for j in range(1, fine.n_elements):
        k, rem = divmod(j, ratio)
        t = rem / ratio
        # coarse nodal values at fine node j: (1 - t) * node k + t * node (k + 1)
        if 1 <= k <= coarse.n_interior and (1.0 - t) != 0.0:
            rows.append(j - 1)
            cols.append(k - 1)
            vals.append(1.0 - t)
        if rem and 1 <= k + 1 <= coarse.n_interior:
            rows.append(j - 1)
            cols.append(k)
            vals.append(t)
    return scipy.sparse.csr_matrix(
        (vals, (rows, cols)), shape=(fine.n_interior, coarse.n_interior)
    )


@dataclass(frozen=True)
class SpectralBasis:
    """Truncated Dirichlet Laplacian eigenbasis on (0, 1)."""

    n_modes: int
    eigenvalues: np.ndarray  # (j pi)^2, j = 1..n_modes

    def __post_init__(self):
        if self.n_modes < 1:
            raise ValueError("n_modes must be >= 1")

    @property
    def frequencies(self) -> np.ndarray:
        """Angular frequencies sqrt(lambda_j) = j pi."""
        return np.pi * np.arange(1, self.n_modes + 1)

    def evaluate(self, j: int, x):
        """Evaluate the L2-normalized eigenfunction e_j at points x."""
        return np.sqrt(2.0) * np.sin(j * np.pi * np.asarray(x))


def spectral_basis(n_modes: int) -> SpectralBasis:
    j = np.arange(1, n_modes + 1)
    return SpectralBasis(n_modes=int(n_modes), eigenvalues=(j * np.pi) ** 2)


@lru_cache(maxsize=32)
def sine_load_matrix(n_elements: int, n_modes: int) -> np.ndarray:
    """Matrix S with S[j-1, i-1] = integral of e_j against the hat at node i.

    Closed form (no quadrature error): the Fourier sine coefficient of a hat
    of half-width h centered at x_i is ``4 sin^2(k h / 2) / (k^2 h) sin(k x_i)``
    with k = j pi.
    """
    mesh = build_uniform_mesh(n_elements)
    k = np.pi * np.arange(1, n_modes + 1)
    shape_factor = np.sqrt(2.0) * 4.0 * np.sin(k * mesh.h / 2.0) ** 2 / (k**2 * mesh.h)
    return shape_factor[:, None] * np.sin(np.outer(k, mesh.interior_nodes))


def modal_coefficients(w: FemFunction, basis: SpectralBasis) -> np.ndarray:
    """Inner products of a P1 function with e_1 .. e_J, evaluated exactly."""
    S = sine_load_matrix(w.mesh.n_elements, basis.n_modes)
    return S @ w.coeffs


def fractional_norm(
    w: FemFunction,
    s: float,
    basis: SpectralBasis,
    ops: FemOperators | None = None,
    with_tail_bound: bool = False,
):
    """Truncated fractional Sobolev norm (sum over j <= J of lambda_j^s <w, e_j>^2)^{1/2}.

    The truncation omits a nonnegative tail, so the value is a lower bound of
    the exact norm.  With ``with_tail_bound=True`` also returns an upper bound
    on the omitted tail (squared): for s <= 0 the tail is bounded through the
    L2 mass left outside the first J modes, for s > 0 through the H1 mass.
    """
    if abs(s) > 1.0:
        raise ValueError(f"exponent s={s} outside the supported range [-1, 1]")
    m = modal_coefficients(w, basis)
    lam = basis.eigenvalues
    value = float(np.sqrt(np.sum(lam**s * m**2)))
    if not with_tail_bound:
        return value
    if ops is None:
        ops = assemble_operators(w.mesh)
    lam_next = (np.pi * (basis.n_modes + 1)) ** 2
    c = w.coeffs
    if s <= 0:
        residual = float(c @ ops.apply_mass(c) - np.sum(m**2))
        tail = lam_next**s * max(residual, 0.0)
    else:
        residual = float(c @ ops.apply_stiffness(c) - np.sum(lam * m**2))
        tail = lam_next ** (s - 1.0) * max(residual, 0.0)
    return value, tail


def discrete_eigen(ops: FemOperators, cap: int = 2048):
    """Dense generalized eigensolve of the pencil (K, M).

    Returns eigenvalues (ascending) and M-orthonormal eigenvectors.  Intended
    for validation only; refuses systems above ``cap`` degrees of freedom.
    """
    n = ops.mesh.n_interior
    if n > cap:
        raise ValueError(f"{n} degrees of freedom exceeds the dense-solve cap {cap}")
    w, v = scipy.linalg.eigh(ops.stiffness.toarray(), ops.mass.toarray())
    return w, v
