"""Bilinear (Q1) finite elements on uniform rectangular meshes.

Two problems are covered: homogeneous Dirichlet ``-div(A grad u) = f`` on a
rectangle and the periodic cell problem on an ``L x L`` torus. Matrices are
``scipy.sparse.csr_matrix``; systems are solved with Jacobi-preconditioned CG
from :mod:`homoglab.kernels`.

Local node order on every element is (0,0), (1,0), (1,1), (0,1).
"""

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import kernels

LOCAL_X = np.array([0.0, 1.0, 1.0, 0.0])
LOCAL_Y = np.array([0.0, 0.0, 1.0, 1.0])
_G = 0.5 * (1.0 + np.array([-1.0, 1.0]) / math.sqrt(3.0))  # 2-point Gauss on [0, 1]


class ConvergenceError(RuntimeError):
    def __init__(self, iterations, residual, tol):
        super().__init__(
            f"CG not converged after {iterations} iterations: "
            f"relative residual {residual:.3e} > tol {tol:.1e}"
        )
        self.iterations = iterations
        self.residual = residual
        self.tol = tol


@dataclass(frozen=True)
class StructuredMesh:
    nx: int
    ny: int
    x0: float = 0.0
    x1: float = 1.0
    y0: float = 0.0
    y1: float = 1.0

    def __post_init__(self):
        if self.nx < 2 or self.ny < 2:
            raise ValueError(f"need nx, ny >= 2, got {self.nx} x {self.ny}")
        if not (self.x1 > self.x0 and self.y1 > self.y0):
            raise ValueError("degenerate domain")

    @property
    def hx(self):
        return (self.x1 - self.x0) / self.nx

    @property
    def hy(self):
        return (self.y1 - self.y0) / self.ny

    @property
    def n_nodes(self):
        return (self.nx + 1) * (self.ny + 1)

    @property
    def n_elements(self):
        return self.nx * self.ny

    def node_coords(self):
        """``(n_nodes, 2)`` coordinates, node ``(i, j)`` at row ``j * (nx + 1) + i``."""
        xs = np.linspace(self.x0, self.x1, self.nx + 1)
        ys = np.linspace(self.y0, self.y1, self.ny + 1)
        X, Y = np.meshgrid(xs, ys)
        return np.stack([X.ravel(), Y.ravel()], axis=-1)

    def connectivity(self):
        i, j = np.meshgrid(np.arange(self.nx), np.arange(self.ny))
        i, j = i.ravel(), j.ravel()
        n0 = j * (self.nx + 1) + i
        return np.stack([n0, n0 + 1, n0 + self.nx + 2, n0 + self.nx + 1], axis=1)

    def centroids(self):
        xs = self.x0 + (np.arange(self.nx) + 0.5) * self.hx
        ys = self.y0 + (np.arange(self.ny) + 0.5) * self.hy
        X, Y = np.meshgrid(xs, ys)
        return np.stack([X.ravel(), Y.ravel()], axis=-1)

    def boundary_mask(self):
        i, j = np.meshgrid(np.arange(self.nx + 1), np.arange(self.ny + 1))
        return ((i == 0) | (j == 0) | (i == self.nx) | (j == self.ny)).ravel()

    def interior_nodes(self):
        return np.flatnonzero(~self.boundary_mask())


def element_stiffness_q1(a_elem, hx, hy):
    """Exact stiffness ``a int grad phi_i . grad phi_j`` of one bilinear element."""
    kx = np.array([[2, -2, -1, 1], [-2, 2, 1, -1], [-1, 1, 2, -2], [1, -1, -2, 2]], dtype=float)
    ky = np.array([[2, 1, -1, -2], [1, 2, -2, -1], [-1, -2, 2, 1], [-2, -1, 1, 2]], dtype=float)
    return a_elem / 6.0 * (hy / hx * kx + hx / hy * ky)


def _shape_grads(s, t, hx, hy):
    dx = np.array([-(1 - t), (1 - t), t, -t]) / hx
    dy = np.array([-(1 - s), -s, s, (1 - s)]) / hy
    return np.stack([dx, dy], axis=-1)


def element_stiffness_q1_tensor(A, hx, hy):
    """Stiffness for a constant symmetric 2x2 tensor, by 2x2 Gauss (exact here)."""
    A = np.asarray(A, dtype=float)
    K = np.zeros((4, 4))
    for s in _G:
        for t in _G:
            g = _shape_grads(s, t, hx, hy)
            K += 0.25 * hx * hy * (g @ A @ g.T)
    return K


def element_mass_q1(hx, hy):
    m = np.array([[4, 2, 1, 2], [2, 4, 2, 1], [1, 2, 4, 2], [2, 1, 2, 4]], dtype=float)
    return hx * hy / 36.0 * m


def _shape_values(s, t):
    return np.array([(1 - s) * (1 - t), s * (1 - t), s * t, (1 - s) * t])


def element_loads(mesh, f):
    """``int f phi_i`` per element with 2x2 Gauss; shape ``(n_elements, 4)``."""
    corner = mesh.centroids() - 0.5 * np.array([mesh.hx, mesh.hy])
    loads = np.zeros((mesh.n_elements, 4))
    w = 0.25 * mesh.hx * mesh.hy
    for s in _G:
        for t in _G:
            pts = corner + np.array([s * mesh.hx, t * mesh.hy])
            loads += w * np.asarray(f(pts), dtype=float)[:, None] * _shape_values(s, t)[None, :]
    return loads


def _scatter(conn, local, n):
    out = np.zeros(n)
    np.add.at(out, conn.ravel(), local.ravel())
    return out


def _coefficient_kernel(mesh, coeff):
    """Per-element scale factors and reference matrix for scalar or constant-tensor coefficients."""
    c = np.asarray(coeff, dtype=float)
    if c.shape == (2, 2):
        if not np.allclose(c, c.T, rtol=0, atol=1e-14 * np.abs(c).max()):
            raise ValueError("tensor coefficient must be symmetric")
        if np.linalg.eigvalsh(c).min() <= 0:
            raise ValueError("tensor coefficient must be positive definite")
        return np.ones(mesh.n_elements), element_stiffness_q1_tensor(c, mesh.hx, mesh.hy)
    c = np.broadcast_to(c, (mesh.n_elements,)).astype(float)
    if not np.all(np.isfinite(c)) or np.any(c <= 0):
        raise ValueError("coefficient values must be positive and finite")
    return c, element_stiffness_q1(1.0, mesh.hx, mesh.hy)


def assemble_full(mesh, coeff):
    scale, kref = _coefficient_kernel(mesh, coeff)
    rows, cols, vals = kernels.q1_triplets(mesh.connectivity(), scale, kref)
    n = mesh.n_nodes
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def assemble_dirichlet(mesh, coeff_per_element, f):
    """Stiffness matrix and load vector restricted to interior nodes.

    ``coeff_per_element`` is one value per element or a constant 2x2 tensor.
    """
    K = assemble_full(mesh, coeff_per_element)
    load = _scatter(mesh.connectivity(), element_loads(mesh, f), mesh.n_nodes)
    inner = mesh.interior_nodes()
    A = K[inner][:, inner].tocsr()
    A.sort_indices()
    return A, load[inner]


def mass_matrix(mesh):
    conn = mesh.connectivity()
    rows, cols, vals = kernels.q1_triplets(conn, np.ones(mesh.n_elements), element_mass_q1(mesh.hx, mesh.hy))
    return sp.csr_matrix((vals, (rows, cols)), shape=(mesh.n_nodes, mesh.n_nodes))


def l2_norm(mesh, values):
    v = np.asarray(values, dtype=float)
    return float(np.sqrt(max(v @ (mass_matrix(mesh) @ v), 0.0)))


@dataclass
class CGDiagnostics:
    iterations: int
    residual: float
    tol: float
    backend: str


def default_max_iter(n):
    return int(math.ceil(100.0 * math.sqrt(max(n, 1))))


def cg_solve(A, b, tol=1e-10, max_iter=None):
    """Jacobi-preconditioned CG; raises :class:`ConvergenceError` if ``tol`` is not met.

    The returned residual is the true relative residual ``|b - A x| / |b|``.
    """
    A = sp.csr_matrix(A)
    b = np.asarray(b, dtype=float)
    n = b.size
    if max_iter is None:
        max_iter = default_max_iter(n)
    diag = A.diagonal()
    if np.any(diag <= 0):
        raise ValueError("matrix must have a positive diagonal")
    backend = "numba" if kernels.pcg is kernels.IMPLEMENTATIONS["numba"]["pcg"] else "numpy"
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return np.zeros(n), CGDiagnostics(0, 0.0, tol, backend)
    dinv = 1.0 / diag
    x = np.zeros(n)
    used = 0
    true_res = np.inf
    # restart from the current iterate when the recursive residual drifts from the true one
    while used < max_iter:
        x, it, _ = kernels.pcg(A, b, x, dinv, tol, max_iter - used)
        used += max(it, 1)
        true_res = np.linalg.norm(b - A @ x) / bnorm
        if true_res <= tol:
            return x, CGDiagnostics(used, float(true_res), tol, backend)
    raise ConvergenceError(used, float(true_res), tol)


@dataclass
class FemSolution:
    mesh: StructuredMesh
    u: np.ndarray
    coeff: np.ndarray
    grad: np.ndarray
    flux: np.ndarray
    diagnostics: CGDiagnostics
    metadata: dict = field(default_factory=dict)

    def l2_norm(self):
        return l2_norm(self.mesh, self.u)

    def nodal_rows(self):
        m = self.mesh
        xy = m.node_coords()
        j, i = np.divmod(np.arange(m.n_nodes), m.nx + 1)
        return [(int(a), int(b), float(p), float(q), float(v)) for a, b, (p, q), v in zip(i, j, xy, self.u)]

    def flux_rows(self):
        c = self.mesh.centroids()
        return [
            (e, float(p), float(q), float(f1), float(f2))
            for e, ((p, q), (f1, f2)) in enumerate(zip(c, self.flux))
        ]


def element_gradients(mesh, u):
    """Element-average gradient (equal to the centroid gradient for Q1)."""
    ue = np.asarray(u)[mesh.connectivity()]
    gx = ((ue[:, 1] - ue[:, 0]) + (ue[:, 2] - ue[:, 3])) / (2.0 * mesh.hx)
    gy = ((ue[:, 3] - ue[:, 0]) + (ue[:, 2] - ue[:, 1])) / (2.0 * mesh.hy)
    return np.stack([gx, gy], axis=-1)


def hat_residual(sol, f):
    """Element-by-element ``sum_e int a grad u . grad phi_i - int f phi_i`` at interior nodes."""
    mesh = sol.mesh
    conn = mesh.connectivity()
    scale, kref = _coefficient_kernel(mesh, sol.coeff)
    local = scale[:, None] * (sol.u[conn] @ kref.T)
    resid = _scatter(conn, local, mesh.n_nodes) - _scatter(conn, element_loads(mesh, f), mesh.n_nodes)
    return resid[mesh.interior_nodes()]


def solve_dirichlet_values(mesh, coeff, f, tol=1e-10, max_iter=None, metadata=None):
    """Solve with explicit per-element coefficient values (or a constant 2x2 tensor)."""
    A, b = assemble_dirichlet(mesh, coeff, f)
    x, diag = cg_solve(A, b, tol=tol, max_iter=max_iter)
    u = np.zeros(mesh.n_nodes)
    u[mesh.interior_nodes()] = x
    grad = element_gradients(mesh, u)
    c = np.asarray(coeff, dtype=float)
    if c.shape == (2, 2):
        flux = grad @ c.T
    else:
        c = np.broadcast_to(c, (mesh.n_elements,)).astype(float)
        flux = c[:, None] * grad
    return FemSolution(mesh, u, c, grad, flux, diag, dict(metadata or {}))


def check_alignment(mesh, field_, eps, inset=1e-7):
    """Raise unless every element lies inside a single tile of the ``eps``-scaled field."""
    tile_index = getattr(field_, "tile_index", None)
    if tile_index is None:
        return
    c = mesh.centroids() / eps
    half = np.array([mesh.hx, mesh.hy]) * (0.5 - inset) / eps
    ref = tile_index(c)
    for sx in (-1.0, 1.0):
        for sy in (-1.0, 1.0):
            other = tile_index(c + half * np.array([sx, sy]))
            if np.any(other != ref):
                raise ValueError(
                    f"mesh {mesh.nx}x{mesh.ny} does not align with tiles at eps={eps}; "
                    "use a tile-conforming mesh or disable the random offset"
                )


def solve_dirichlet(mesh, realization, eps, f, tol=1e-10, max_iter=None):
    """Sample ``A(x/eps)`` at element centroids, assemble, solve, attach fluxes."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    check_alignment(mesh, realization, eps)
    coeff = np.asarray(realization(mesh.centroids() / eps), dtype=float)
    return solve_dirichlet_values(
        mesh, coeff, f, tol=tol, max_iter=max_iter, metadata={"eps": eps, "seed": getattr(realization, "seed", None)}
    )


def gaussian_source(C=5.0, L=0.05, center=(0.5, 0.5)):
    """``C / (2 pi L) exp(-|x - center|^2 / (2 L))``."""
    cx, cy = center

    def f(x):
        x = np.asarray(x, dtype=float)
        r2 = (x[..., 0] - cx) ** 2 + (x[..., 1] - cy) ** 2
        return C / (2.0 * math.pi * L) * np.exp(-r2 / (2.0 * L))

    return f


# ---------------------------------------------------------------------------
# periodic cell problem
# ---------------------------------------------------------------------------


@dataclass
class PeriodicCellProblem:
    """Cell problem on the torus ``[0, L)^2`` with ``elements_per_tile`` elements per unit tile.

    ``coeff`` holds one value per element, shape ``(N, N)`` with ``N = L * elements_per_tile``,
    indexed ``coeff[j, i]`` for the element whose lower-left node is ``(i, j)``.
    """

    L: int
    coeff: np.ndarray
    xi: np.ndarray
    elements_per_tile: int = 4

    def __post_init__(self):
        if int(self.L) < 2:
            raise ValueError(f"torus side L must be >= 2 tiles, got {self.L}")
        self.coeff = np.asarray(self.coeff, dtype=float)
        self.xi = np.asarray(self.xi, dtype=float)
        n = self.n
        if self.coeff.shape != (n, n):
            raise ValueError(f"coeff must have shape {(n, n)}, got {self.coeff.shape}")
        if not np.all(np.isfinite(self.coeff)) or np.any(self.coeff <= 0):
            raise ValueError("coefficient values must be positive and finite")
        if self.xi.shape != (2,):
            raise ValueError("xi must be a 2-vector")

    @property
    def n(self):
        return int(self.L) * int(self.elements_per_tile)

    @property
    def h(self):
        return 1.0 / self.elements_per_tile

    def connectivity(self):
        n = self.n
        i, j = np.meshgrid(np.arange(n), np.arange(n))
        i, j = i.ravel(), j.ravel()
        ip, jp = (i + 1) % n, (j + 1) % n
        return np.stack([j * n + i, j * n + ip, jp * n + ip, jp * n + i], axis=1)

    def local_linear(self, xi=None):
        """Nodal values of ``xi . x`` on one element, relative to its lower-left node."""
        xi = self.xi if xi is None else np.asarray(xi, dtype=float)
        return self.h * (xi[0] * LOCAL_X + xi[1] * LOCAL_Y)


def assemble_periodic_cell(problem):
    """System for the periodic corrector with node 0 pinned to zero.

    Returns ``(A, rhs)`` over nodes ``1 .. N^2 - 1`` with
    ``rhs_i = -sum_e int a xi . grad phi_i``.
    """
    conn = problem.connectivity()
    a = problem.coeff.ravel()
    kref = element_stiffness_q1(1.0, problem.h, problem.h)
    rows, cols, vals = kernels.q1_triplets(conn, a, kref)
    nn = problem.n**2
    K = sp.csr_matrix((vals, (rows, cols)), shape=(nn, nn))
    local_rhs = -a[:, None] * (kref @ problem.local_linear())[None, :]
    rhs = _scatter(conn, local_rhs, nn)
    A = K[1:, 1:].tocsr()
    A.sort_indices()
    return A, rhs[1:]


def solve_periodic_cell(problem, tol=1e-10, max_iter=None):
    """Mean-zero periodic corrector as an ``(N, N)`` nodal array plus CG diagnostics."""
    A, rhs = assemble_periodic_cell(problem)
    x, diag = cg_solve(A, rhs, tol=tol, max_iter=max_iter)
    chi = np.concatenate([[0.0], x])
    chi -= chi.mean()
    return chi.reshape(problem.n, problem.n), diag


def periodic_element_gradients(problem, chi):
    ue = np.asarray(chi).ravel()[problem.connectivity()]
    h = problem.h
    gx = ((ue[:, 1] - ue[:, 0]) + (ue[:, 2] - ue[:, 3])) / (2.0 * h)
    gy = ((ue[:, 3] - ue[:, 0]) + (ue[:, 2] - ue[:, 1])) / (2.0 * h)
    return np.stack([gx, gy], axis=-1)
