"""Structured interval meshes and conforming triangulations of the unit square."""

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._validation import DomainError, check_count


class DegenerateCellError(ValueError):
    """A cell has zero length or area."""


@dataclass(frozen=True, eq=False)
class Mesh:
    """Simplicial mesh.

    Attributes
    ----------
    vertices : ndarray, shape (n_vertices, dim)
    cells : ndarray of int, shape (n_cells, dim + 1)
        Pairs in 1D, counter-clockwise triangles in 2D.
    boundary_vertices : ndarray of int
        Sorted indices of the vertices on the domain boundary.
    """

    vertices: np.ndarray
    cells: np.ndarray
    boundary_vertices: np.ndarray

    def __post_init__(self):
        vertices = np.array(self.vertices, dtype=float)
        if vertices.ndim == 1:
            vertices = vertices[:, None]
        cells = np.array(self.cells, dtype=np.int64)
        boundary = np.unique(np.asarray(self.boundary_vertices, dtype=np.int64))
        if vertices.shape[1] not in (1, 2):
            raise DomainError("only 1D and 2D meshes are supported")
        if cells.ndim != 2 or cells.shape[1] != vertices.shape[1] + 1:
            raise DomainError("cells must hold dim + 1 vertex indices")
        for arr in (vertices, cells, boundary):
            arr.setflags(write=False)
        object.__setattr__(self, "vertices", vertices)
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "boundary_vertices", boundary)

    @property
    def dim(self):
        return self.vertices.shape[1]

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    @property
    def n_cells(self):
        return self.cells.shape[0]

    @property
    def h(self):
        """Maximum cell diameter."""
        return float(cell_diameters(self).max())

    def measures(self):
        """Cell lengths (1D) or areas (2D)."""
        p = self.vertices[self.cells]
        if self.dim == 1:
            return p[:, 1, 0] - p[:, 0, 0]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    def __eq__(self, other):
        if not isinstance(other, Mesh):
            return NotImplemented
        return (
            np.array_equal(self.vertices, other.vertices)
            and np.array_equal(self.cells, other.cells)
            and np.array_equal(self.boundary_vertices, other.boundary_vertices)
        )

    __hash__ = None


def cell_diameters(mesh):
    p = mesh.vertices[mesh.cells]
    if mesh.dim == 1:
        return np.abs(p[:, 1, 0] - p[:, 0, 0])
    edges = [p[:, 1] - p[:, 0], p[:, 2] - p[:, 1], p[:, 0] - p[:, 2]]
    return np.max([np.hypot(e[:, 0], e[:, 1]) for e in edges], axis=0)


def _edges(cells):
    """Unique sorted edges of a triangle list and the cell -> edge map."""
    local = np.array([[0, 1], [1, 2], [2, 0]])
    all_edges = np.sort(cells[:, local].reshape(-1, 2), axis=1)
    edges, inverse, counts = np.unique(
        all_edges, axis=0, return_inverse=True, return_counts=True
    )
    return edges, inverse.reshape(-1, 3), counts


def boundary_from_topology(dim, cells):
    """Vertices on faces that belong to exactly one cell."""
    if dim == 1:
        ids, counts = np.unique(cells.ravel(), return_counts=True)
        return ids[counts == 1]
    edges, _, counts = _edges(cells)
    return np.unique(edges[counts == 1].ravel())


def interval_mesh(a, b, n, grading=1.0):
    """Mesh of ``[a, b]`` with vertices ``a + (b - a) (i / n)**grading``."""
    n = check_count(n, "n", minimum=2)
    if not a < b:
        raise DomainError(f"need a < b, got a={a!r}, b={b!r}")
    if not grading >= 1.0:
        raise DomainError(f"grading must be >= 1, got {grading!r}")
    x = a + (b - a) * (np.arange(n + 1) / n) ** grading
    cells = np.column_stack([np.arange(n), np.arange(1, n + 1)])
    return Mesh(x[:, None], cells, [0, n])


def unit_square_tri_mesh(n, corner=(0.0, 0.0), side=1.0):
    """Right-triangle split of an ``n x n`` grid on a square (default unit square).

    Every grid square is cut along its diagonal from lower-left to upper-right.
    """
    n = check_count(n, "n", minimum=2)
    if not side > 0:
        raise DomainError("side must be positive")
    s = np.linspace(0.0, 1.0, n + 1)
    xx, yy = np.meshgrid(s, s)
    vertices = np.column_stack([xx.ravel(), yy.ravel()]) * side + np.asarray(corner)
    idx = np.arange((n + 1) ** 2).reshape(n + 1, n + 1)
    v00 = idx[:-1, :-1].ravel()
    v10 = idx[:-1, 1:].ravel()
    v01 = idx[1:, :-1].ravel()
    v11 = idx[1:, 1:].ravel()
    cells = np.concatenate(
        [np.column_stack([v00, v10, v11]), np.column_stack([v00, v11, v01])]
    )
    return Mesh(vertices, cells, boundary_from_topology(2, cells))


def refine(mesh):
    """Uniform refinement: bisect intervals, split triangles into 4 congruent children."""
    if mesh.dim == 1:
        x = mesh.vertices[:, 0]
        mid = 0.5 * (x[mesh.cells[:, 0]] + x[mesh.cells[:, 1]])
        order = np.argsort(np.concatenate([x, mid]), kind="stable")
        new_x = np.concatenate([x, mid])[order]
        n = new_x.size - 1
        cells = np.column_stack([np.arange(n), np.arange(1, n + 1)])
        return Mesh(new_x[:, None], cells, boundary_from_topology(1, cells))
    edges, cell_edges, _ = _edges(mesh.cells)
    mids = 0.5 * (mesh.vertices[edges[:, 0]] + mesh.vertices[edges[:, 1]])
    vertices = np.vstack([mesh.vertices, mids])
    m = cell_edges + mesh.n_vertices  # midpoints of edges (01, 12, 20)
    v = mesh.cells
    cells = np.concatenate(
        [
            np.column_stack([v[:, 0], m[:, 0], m[:, 2]]),
            np.column_stack([m[:, 0], v[:, 1], m[:, 1]]),
            np.column_stack([m[:, 2], m[:, 1], v[:, 2]]),
            np.column_stack([m[:, 0], m[:, 1], m[:, 2]]),
        ]
    )
    return Mesh(vertices, cells, boundary_from_topology(2, cells))


def shape_regularity(mesh):
    """Minimum angle in degrees (2D) or min/max cell-length ratio (1D)."""
    size = np.abs(mesh.measures())
    if np.any(size <= 0):
        bad = int(np.flatnonzero(size <= 0)[0])
        raise DegenerateCellError(f"cell {bad} is degenerate")
    if mesh.dim == 1:
        return float(size.min() / size.max())
    p = mesh.vertices[mesh.cells]
    worst = math.inf
    for i in range(3):
        u = p[:, (i + 1) % 3] - p[:, i]
        w = p[:, (i + 2) % 3] - p[:, i]
        cross = np.abs(u[:, 0] * w[:, 1] - u[:, 1] * w[:, 0])
        dot = np.einsum("ij,ij->i", u, w)
        worst = min(worst, float(np.degrees(np.arctan2(cross, dot)).min()))
    return worst


def write_mesh(mesh, path):
    """Plain-text export; floats at 17 significant digits."""
    lines = [f"{mesh.dim} {mesh.n_vertices} {mesh.n_cells}"]
    lines += [" ".join(f"{c:.17g}" for c in row) for row in mesh.vertices]
    lines += [" ".join(str(int(i)) for i in row) for row in mesh.cells]
    lines.append(" ".join(str(int(i)) for i in mesh.boundary_vertices))
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh(path):
    lines = Path(path).read_text().splitlines()
    dim, nv, nc = (int(s) for s in lines[0].split())
    vertices = np.array([[float(s) for s in ln.split()] for ln in lines[1 : 1 + nv]])
    cells = np.array([[int(s) for s in ln.split()] for ln in lines[1 + nv : 1 + nv + nc]])
    boundary = [int(s) for s in lines[1 + nv + nc].split()] if len(lines) > 1 + nv + nc else []
    return Mesh(vertices.reshape(nv, dim), cells.reshape(nc, dim + 1), boundary)
