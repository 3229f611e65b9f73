"""Piecewise-linear Galerkin machinery on :class:`~fracfem.meshkit.Mesh`.

Closures passed to this module are vectorised: a function of space takes an
array of points of shape ``(n_points, dim)`` and returns ``(n_points,)``;
gradients return ``(n_points, dim)``; time-dependent closures take ``(x, t)``.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

__all__ = [
    "FeSpace",
    "FeFunction",
    "Coefficient",
    "CoefficientError",
    "ConvergenceError",
    "assemble_mass",
    "assemble_stiffness",
    "assemble_load",
    "l2_project",
    "ritz_project",
    "interpolate",
    "cg_solve",
    "error_norms",
    "fe_norms",
    "dump_matrix",
]

DEFAULT_TOL = 1e-10


class CoefficientError(ValueError):
    """Diffusivity left its declared bounds at a quadrature point."""


class ConvergenceError(RuntimeError):
    """Conjugate gradients hit the iteration cap."""

    def __init__(self, message, residual):
        super().__init__(message)
        self.residual = residual


# Quadrature rules on the reference simplex: barycentric points, weights sum to 1.

def _gauss_1d(n):
    s, w = np.polynomial.legendre.leggauss(n)
    s = 0.5 * (s + 1.0)
    return np.column_stack([1.0 - s, s]), 0.5 * w


_EDGE_MIDPOINT = (
    np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]]),
    np.full(3, 1.0 / 3.0),
)


def _strang_fix_7():
    # degree-5 rule
    a1, b1 = 0.059715871789770, 0.470142064105115
    a2, b2 = 0.797426985353087, 0.101286507323456
    pts = [[1 / 3, 1 / 3, 1 / 3]]
    pts += [[a1, b1, b1], [b1, a1, b1], [b1, b1, a1]]
    pts += [[a2, b2, b2], [b2, a2, b2], [b2, b2, a2]]
    w = [0.225] + [0.132394152788506] * 3 + [0.125939180544827] * 3
    return np.array(pts), np.array(w)


def quadrature_rule(dim, kind):
    """``kind`` is ``"form"`` (assembly rule) or ``"accurate"`` (norms, projections)."""
    if dim == 1:
        return _gauss_1d(2 if kind == "form" else 5)
    return _EDGE_MIDPOINT if kind == "form" else _strang_fix_7()


@dataclass(frozen=True, eq=False)
class FeSpace:
    """Continuous P1 functions vanishing on the boundary of ``mesh``."""

    mesh: object
    free_dofs: np.ndarray = field(init=False)
    vertex_to_dof: np.ndarray = field(init=False)

    def __post_init__(self):
        mask = np.ones(self.mesh.n_vertices, dtype=bool)
        mask[self.mesh.boundary_vertices] = False
        free = np.flatnonzero(mask)
        v2d = np.full(self.mesh.n_vertices, -1, dtype=np.int64)
        v2d[free] = np.arange(free.size)
        free.setflags(write=False)
        v2d.setflags(write=False)
        object.__setattr__(self, "free_dofs", free)
        object.__setattr__(self, "vertex_to_dof", v2d)

    @property
    def n_free(self):
        return self.free_dofs.size

    @property
    def dim(self):
        return self.mesh.dim

    def extend(self, coeffs):
        """Nodal values on all vertices, zero on the boundary."""
        full = np.zeros(self.mesh.n_vertices)
        full[self.free_dofs] = coeffs
        return full

    def quadrature_points(self, kind="form"):
        """Physical quadrature points ``(n_cells, n_q, dim)`` and barycentric weights."""
        bary, w = quadrature_rule(self.dim, kind)
        p = self.mesh.vertices[self.mesh.cells]
        return np.einsum("qk,ckd->cqd", bary, p), bary, w

    def gradients(self):
        """Gradients of the local basis functions, shape ``(n_cells, dim + 1, dim)``."""
        p = self.mesh.vertices[self.mesh.cells]
        if self.dim == 1:
            inv = 1.0 / (p[:, 1, 0] - p[:, 0, 0])
            return np.stack([-inv, inv], axis=1)[:, :, None]
        x, y = p[..., 0], p[..., 1]
        det = (x[:, 1] - x[:, 0]) * (y[:, 2] - y[:, 0]) - (x[:, 2] - x[:, 0]) * (
            y[:, 1] - y[:, 0]
        )
        gx = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1)
        gy = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1)
        return np.stack([gx, gy], axis=2) / det[:, None, None]


@dataclass(frozen=True, eq=False)
class FeFunction:
    space: FeSpace
    coeffs: np.ndarray

    def __post_init__(self):
        coeffs = np.asarray(self.coeffs, dtype=float)
        if coeffs.shape != (self.space.n_free,):
            raise ValueError(f"expected {self.space.n_free} coefficients, got {coeffs.shape}")
        object.__setattr__(self, "coeffs", coeffs)

    def nodal_values(self):
        return self.space.extend(self.coeffs)

    def __call__(self, points):
        """Point evaluation; points outside the mesh evaluate to 0."""
        return evaluate_at(self.space, self.coeffs, points)


@dataclass(frozen=True)
class Coefficient:
    """Diffusivity ``kappa(x, t)`` with declared bounds.

    ``grad`` (optional) returns the spatial gradient and is only needed by
    manufactured sources. ``smoothness`` records the time regularity class
    (``"C0"``, ``"C1"`` or ``"C2"``).
    """

    func: Callable
    kappa_min: float
    kappa_max: float
    smoothness: str = "C2"
    grad: Optional[Callable] = None
    time_dependent: bool = True

    def __post_init__(self):
        if not 0 < self.kappa_min <= self.kappa_max:
            raise CoefficientError("need 0 < kappa_min <= kappa_max")
        if self.smoothness not in ("C0", "C1", "C2"):
            raise ValueError(f"unknown smoothness class {self.smoothness!r}")

    @classmethod
    def constant(cls, value=1.0):
        value = float(value)
        return cls(
            lambda x, t: np.full(np.shape(x)[0], value),
            value,
            value,
            grad=lambda x, t: np.zeros_like(np.asarray(x, dtype=float)),
            time_dependent=False,
        )

    def evaluate(self, x, t):
        return np.asarray(self.func(np.asarray(x, dtype=float), t), dtype=float)

    def checked(self, x, t):
        """Evaluate and enforce ``kappa_min <= kappa <= kappa_max``."""
        values = self.evaluate(x, t)
        tol = 1e-12 * self.kappa_max
        bad = (values < self.kappa_min - tol) | (values > self.kappa_max + tol) | ~np.isfinite(values)
        if np.any(bad):
            i = int(np.flatnonzero(bad)[0])
            raise CoefficientError(
                f"kappa={values[i]!r} outside [{self.kappa_min}, {self.kappa_max}] "
                f"at x={tuple(np.atleast_1d(x[i]))}, t={t}"
            )
        return values


def _scatter(space, local):
    """Sum local element matrices into the free-DOF system, CSR."""
    cells = space.mesh.cells
    k = cells.shape[1]
    rows = np.repeat(cells, k, axis=1).ravel()
    cols = np.tile(cells, (1, k)).ravel()
    nv = space.mesh.n_vertices
    full = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(nv, nv)).tocsr()
    free = space.free_dofs
    out = full[free][:, free].tocsr()
    out.sum_duplicates()
    out.sort_indices()
    return out


def _scatter_vector(space, local):
    nv = space.mesh.n_vertices
    full = np.bincount(space.mesh.cells.ravel(), weights=local.ravel(), minlength=nv)
    return full[space.free_dofs]


def assemble_mass(space, full=False):
    """Consistent P1 mass matrix (exact element integrals).

    With ``full=True`` the matrix on all vertices is returned (before the
    Dirichlet elimination).
    """
    meas = np.abs(space.mesh.measures())
    k = space.dim + 1
    ref = (np.ones((k, k)) + np.eye(k)) / ((k + 1) * k)
    local = meas[:, None, None] * ref[None]
    if full:
        cells = space.mesh.cells
        rows = np.repeat(cells, k, axis=1).ravel()
        cols = np.tile(cells, (1, k)).ravel()
        nv = space.mesh.n_vertices
        return sp.coo_matrix((local.ravel(), (rows, cols)), shape=(nv, nv)).tocsr()
    return _scatter(space, local)


def _kappa_cell_means(space, kappa, t):
    pts, _, w = space.quadrature_points("form")
    nc, nq, d = pts.shape
    values = kappa.checked(pts.reshape(-1, d), t).reshape(nc, nq)
    return values @ w


def assemble_stiffness(space, kappa, t=0.0):
    """``A(t)_ij = int kappa(x, t) grad phi_i . grad phi_j`` by the assembly rule."""
    grads = space.gradients()
    meas = np.abs(space.mesh.measures())
    kbar = _kappa_cell_means(space, kappa, t)
    local = (meas * kbar)[:, None, None] * np.einsum("cid,cjd->cij", grads, grads)
    return _scatter(space, local)


def _load(space, f, kind):
    pts, bary, w = space.quadrature_points(kind)
    nc, nq, d = pts.shape
    values = np.asarray(f(pts.reshape(-1, d)), dtype=float).reshape(nc, nq)
    meas = np.abs(space.mesh.measures())
    local = meas[:, None] * ((values * w) @ bary)
    return _scatter_vector(space, local)


def assemble_load(space, f, t=0.0, kind="form"):
    """``F_i = int f(x, t) phi_i`` by the assembly rule."""
    return _load(space, lambda x: f(x, t), kind)


def interpolate(space, v):
    """Nodal interpolant (free DOFs only)."""
    x = space.mesh.vertices[space.free_dofs]
    return FeFunction(space, np.asarray(v(x), dtype=float))


def l2_project(space, v, tol=DEFAULT_TOL, mass=None):
    """L2 projection ``(P_h v - v, chi) = 0`` for all ``chi`` in the space."""
    if mass is None:
        mass = assemble_mass(space)
    rhs = _load(space, v, "accurate")
    return FeFunction(space, cg_solve(mass, rhs, tol=tol))


def ritz_rhs(space, kappa, t, grad_v):
    pts, _, w = space.quadrature_points("form")
    nc, nq, d = pts.shape
    flat = pts.reshape(-1, d)
    kv = kappa.checked(flat, t)[:, None] * np.asarray(grad_v(flat), dtype=float).reshape(-1, d)
    kv = kv.reshape(nc, nq, d)
    flux = np.einsum("cqd,q->cd", kv, w)
    meas = np.abs(space.mesh.measures())
    local = meas[:, None] * np.einsum("cd,cid->ci", flux, space.gradients())
    return _scatter_vector(space, local)


def ritz_project(space, kappa, t, v, grad_v, tol=DEFAULT_TOL, stiffness=None):
    """Ritz projection ``A(t)(R_h v - v, chi) = 0`` for all ``chi``.

    ``v`` itself is not needed by the defining relation; it is accepted so the
    call mirrors the other projections.
    """
    del v
    if stiffness is None:
        stiffness = assemble_stiffness(space, kappa, t)
    rhs = ritz_rhs(space, kappa, t, grad_v)
    return FeFunction(space, cg_solve(stiffness, rhs, tol=tol))


def cg_solve(A, b, tol=DEFAULT_TOL, max_iter=None, x0=None):
    """Jacobi-preconditioned conjugate gradients.

    Stops when ``||A x - b|| <= tol ||b||``; raises :class:`ConvergenceError`
    carrying the final relative residual when ``max_iter`` is exceeded.
    """
    b = np.asarray(b, dtype=float)
    n = b.size
    if max_iter is None:
        max_iter = max(10 * n, 100)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n)
    inv_diag = 1.0 / A.diagonal()
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = b - A @ x
    target = tol * bnorm
    rnorm = np.linalg.norm(r)
    if rnorm <= target:
        return x
    z = inv_diag * r
    p = z.copy()
    rz = r @ z
    for _ in range(max_iter):
        Ap = A @ p
        step = rz / (p @ Ap)
        x += step * p
        r -= step * Ap
        rnorm = np.linalg.norm(r)
        if rnorm <= target:
            return x
        z = inv_diag * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise ConvergenceError(
        f"CG did not converge in {max_iter} iterations (relative residual {rnorm / bnorm:.3e})",
        rnorm / bnorm,
    )


def error_norms(space, uh, u_exact, grad_u_exact):
    """``(||u - u_h||, ||grad(u - u_h)||)`` by degree >= 3 element quadrature."""
    coeffs = uh.coeffs if isinstance(uh, FeFunction) else np.asarray(uh, dtype=float)
    nodal = space.extend(coeffs)
    pts, bary, w = space.quadrature_points("accurate")
    nc, nq, d = pts.shape
    flat = pts.reshape(-1, d)
    cell_vals = nodal[space.mesh.cells]
    uh_q = cell_vals @ bary.T
    grad_uh = np.einsum("ci,cid->cd", cell_vals, space.gradients())
    e = np.asarray(u_exact(flat), dtype=float).reshape(nc, nq) - uh_q
    ge = np.asarray(grad_u_exact(flat), dtype=float).reshape(nc, nq, d) - grad_uh[:, None, :]
    meas = np.abs(space.mesh.measures())
    l2 = np.sqrt(meas @ ((e * e) @ w))
    h1 = np.sqrt(meas @ (np.einsum("cqd,cqd->cq", ge, ge) @ w))
    return float(l2), float(h1)


def fe_norms(space, coeffs, mass=None, laplace=None):
    """Exact L2 norm and gradient norm of a finite element function."""
    coeffs = coeffs.coeffs if isinstance(coeffs, FeFunction) else np.asarray(coeffs)
    if mass is None:
        mass = assemble_mass(space)
    if laplace is None:
        laplace = assemble_stiffness(space, Coefficient.constant(1.0))
    l2 = float(np.sqrt(max(coeffs @ (mass @ coeffs), 0.0)))
    h1 = float(np.sqrt(max(coeffs @ (laplace @ coeffs), 0.0)))
    return l2, h1


def evaluate_at(space, coeffs, points):
    from ._validation import check_points

    mesh = space.mesh
    pts = check_points(points, mesh.dim)
    nodal = space.extend(coeffs)
    if mesh.dim == 1:
        x = mesh.vertices[:, 0]
        order = np.argsort(x)
        return np.interp(pts[:, 0], x[order], nodal[order], left=0.0, right=0.0)
    p = mesh.vertices[mesh.cells]
    out = np.zeros(pts.shape[0])
    found = np.zeros(pts.shape[0], dtype=bool)
    v0 = p[:, 0]
    e1 = p[:, 1] - v0
    e2 = p[:, 2] - v0
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    for start in range(0, pts.shape[0], 256):
        chunk = pts[start : start + 256]
        dx = chunk[:, None, :] - v0[None]
        l1 = (dx[..., 0] * e2[:, 1] - dx[..., 1] * e2[:, 0]) / det
        l2 = (e1[:, 0] * dx[..., 1] - e1[:, 1] * dx[..., 0]) / det
        l0 = 1.0 - l1 - l2
        inside = (l0 >= -1e-12) & (l1 >= -1e-12) & (l2 >= -1e-12)
        has = inside.any(axis=1)
        cell = inside.argmax(axis=1)
        rows = np.arange(chunk.shape[0])
        lam = np.stack([l0[rows, cell], l1[rows, cell], l2[rows, cell]], axis=1)
        vals = np.einsum("pk,pk->p", lam, nodal[mesh.cells[cell]])
        out[start : start + 256] = np.where(has, vals, 0.0)
        found[start : start + 256] = has
    return out


def dump_matrix(A, path):
    """Coordinate text dump ``row col value``, sorted row-major."""
    coo = sp.coo_matrix(A)
    order = np.lexsort((coo.col, coo.row))
    lines = [f"{r} {c} {v:.17g}" for r, c, v in zip(coo.row[order], coo.col[order], coo.data[order])]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))
