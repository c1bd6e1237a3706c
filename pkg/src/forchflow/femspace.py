"""Continuous piecewise-linear finite element spaces on a ``TriangleMesh``.

Vector fields store their two components blockwise: coefficients
``[c_x(0..nv-1), c_y(0..nv-1)]``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Union

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .mesh import TriangleMesh
from .quadrature import EDGE_RULE, TRIANGLE_RULE

# P1 element mass matrix on a triangle of unit area
_LOCAL_MASS = (np.ones((3, 3)) + np.eye(3)) / 12.0


class ScalarP1Space:
    """Continuous P1 space; one nodal degree of freedom per vertex."""

    ncomp = 1

    def __init__(self, mesh: TriangleMesh):
        self.mesh = mesh
        tris = mesh.triangles
        p = mesh.vertices[tris]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
        if np.any(det <= 0.0):
            raise ValueError("mesh has degenerate or clockwise triangles")
        self.areas = 0.5 * det
        # gradients of barycentric coordinates: rows of inv(B) stacked with -sum
        inv = np.empty((len(tris), 2, 2))
        inv[:, 0, 0] = e2[:, 1] / det
        inv[:, 0, 1] = -e2[:, 0] / det
        inv[:, 1, 0] = -e1[:, 1] / det
        inv[:, 1, 1] = e1[:, 0] / det
        grads = np.empty((len(tris), 3, 2))
        grads[:, 1] = inv[:, 0]
        grads[:, 2] = inv[:, 1]
        grads[:, 0] = -inv[:, 0] - inv[:, 1]
        self.basis_grads = grads
        self.quad_points = np.einsum("qk,tkd->tqd", TRIANGLE_RULE.bary, p)
        self.quad_weights = self.areas[:, None] * TRIANGLE_RULE.weights[None, :]

        edges = mesh.boundary_edges
        pe = mesh.vertices[edges]
        self.edge_lengths = np.linalg.norm(pe[:, 1] - pe[:, 0], axis=1)
        self.edge_quad_points = np.einsum("qk,ekd->eqd", EDGE_RULE.bary, pe)
        self.edge_quad_weights = self.edge_lengths[:, None] * EDGE_RULE.weights[None, :]

    @property
    def ndofs(self) -> int:
        return self.mesh.num_vertices

    def _pattern(self):
        tris = self.mesh.triangles
        rows = np.repeat(tris, 3, axis=1).ravel()
        cols = np.tile(tris, (1, 3)).ravel()
        return rows, cols

    @cached_property
    def mass(self) -> sp.csc_matrix:
        return assemble_mass(self)

    @cached_property
    def mass_lu(self):
        return spla.splu(self.mass)

    def weighted_mass(self, weight: Callable[[np.ndarray], np.ndarray]) -> sp.csc_matrix:
        """``int weight * phi_i * phi_j`` with the degree-4 rule."""
        w = np.broadcast_to(
            np.asarray(weight(self.quad_points), dtype=float), self.quad_weights.shape
        )
        B = TRIANGLE_RULE.bary
        local = np.einsum("tq,qi,qj->tij", w * self.quad_weights, B, B)
        rows, cols = self._pattern()
        n = self.ndofs
        return sp.csc_matrix((local.ravel(), (rows, cols)), shape=(n, n))

    @cached_property
    def gradient_coupling(self) -> sp.csr_matrix:
        """``G[(i, c), j] = int phi_i d_c phi_j`` as a ``(2 nv, nv)`` matrix.

        Its transpose realizes ``(m, grad r)`` for vector P1 ``m``.
        """
        tris = self.mesh.triangles
        n = self.ndofs
        # int_T phi_i = |T|/3 and d_c phi_j is constant on T
        vals = (self.areas[:, None, None] / 3.0) * self.basis_grads  # (t, j, c)
        data, rows, cols = [], [], []
        for c in range(2):
            for i in range(3):
                for j in range(3):
                    data.append(vals[:, j, c])
                    rows.append(c * n + tris[:, i])
                    cols.append(tris[:, j])
        return sp.csr_matrix(
            (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
            shape=(2 * n, n),
        )

    def load(self, values: np.ndarray) -> np.ndarray:
        """``int f phi_i`` given ``f`` sampled at ``quad_points``."""
        contrib = np.einsum("tq,qi->ti", values * self.quad_weights, TRIANGLE_RULE.bary)
        return np.bincount(self.mesh.triangles.ravel(), contrib.ravel(), minlength=self.ndofs)

    def boundary_load(self, values: np.ndarray) -> np.ndarray:
        """``int_Gamma psi phi_i`` given ``psi`` sampled at ``edge_quad_points``."""
        contrib = np.einsum("eq,qi->ei", values * self.edge_quad_weights, EDGE_RULE.bary)
        return np.bincount(
            self.mesh.boundary_edges.ravel(), contrib.ravel(), minlength=self.ndofs
        )


class VectorP1Space:
    """Two continuous P1 components sharing one mesh."""

    ncomp = 2

    def __init__(self, scalar: ScalarP1Space | TriangleMesh):
        if isinstance(scalar, TriangleMesh):
            scalar = ScalarP1Space(scalar)
        self.scalar = scalar
        self.mesh = scalar.mesh

    @property
    def ndofs(self) -> int:
        return 2 * self.scalar.ndofs

    @cached_property
    def mass(self) -> sp.csc_matrix:
        return assemble_mass(self)

    @cached_property
    def mass_lu(self):
        return spla.splu(self.mass)


Space = Union[ScalarP1Space, VectorP1Space]


@dataclass
class FeField:
    space: Space
    coefficients: np.ndarray

    def __post_init__(self) -> None:
        self.coefficients = np.asarray(self.coefficients, dtype=float)
        if self.coefficients.shape != (self.space.ndofs,):
            raise ValueError(
                f"expected {self.space.ndofs} coefficients, got {self.coefficients.shape}"
            )

    @property
    def nodal(self) -> np.ndarray:
        """Nodal values, shape ``(nv,)`` or ``(nv, 2)``."""
        if self.space.ncomp == 1:
            return self.coefficients
        return self.coefficients.reshape(2, -1).T

    def at_quad_points(self) -> np.ndarray:
        scalar = _scalar(self.space)
        vals = np.einsum("qk,tk...->tq...", TRIANGLE_RULE.bary, self.nodal[scalar.mesh.triangles])
        return vals

    def copy(self) -> "FeField":
        return FeField(self.space, self.coefficients.copy())


def _scalar(space: Space) -> ScalarP1Space:
    return space if isinstance(space, ScalarP1Space) else space.scalar


def zero_field(space: Space) -> FeField:
    return FeField(space, np.zeros(space.ndofs))


def interpolate(source: Callable, space: Space) -> FeField:
    """Nodal interpolant."""
    vals = np.asarray(source(space.mesh.vertices), dtype=float)
    if space.ncomp == 2:
        vals = vals.T.ravel()
    return FeField(space, vals)


def eval_field(field: FeField, tri: int, point) -> float | np.ndarray:
    xi, eta = point
    bary = np.array([1.0 - xi - eta, xi, eta])
    nodes = field.nodal[field.space.mesh.triangles[tri]]
    return bary @ nodes


def gradients(field: FeField) -> np.ndarray:
    """Per-triangle gradients of a scalar field, shape ``(nt, 2)``."""
    if field.space.ncomp != 1:
        raise ValueError("gradient requires a scalar field")
    nodes = field.coefficients[field.space.mesh.triangles]
    return np.einsum("tk,tkd->td", nodes, field.space.basis_grads)


def eval_gradient(field: FeField, tri: int) -> np.ndarray:
    if field.space.ncomp != 1:
        raise ValueError("gradient requires a scalar field")
    nodes = field.coefficients[field.space.mesh.triangles[tri]]
    return nodes @ field.space.basis_grads[tri]


def assemble_mass(space: Space) -> sp.csc_matrix:
    scalar = _scalar(space)
    local = scalar.areas[:, None, None] * _LOCAL_MASS
    rows, cols = scalar._pattern()
    n = scalar.ndofs
    M = sp.csc_matrix((local.ravel(), (rows, cols)), shape=(n, n))
    if space.ncomp == 2:
        M = sp.block_diag([M, M], format="csc")
    return M


def project_load(source: Callable, space: Space) -> np.ndarray:
    """Right-hand side ``(source, phi_i)`` of the projection system."""
    scalar = _scalar(space)
    vals = np.asarray(source(scalar.quad_points), dtype=float)
    if space.ncomp == 1:
        return scalar.load(np.broadcast_to(vals, scalar.quad_weights.shape))
    vals = np.broadcast_to(vals, scalar.quad_weights.shape + (2,))
    return np.concatenate([scalar.load(vals[..., 0]), scalar.load(vals[..., 1])])


def l2_project(source: Callable, space: Space) -> FeField:
    """L2 projection of ``source`` onto ``space``.

    ``source`` maps points of shape ``(..., 2)`` to values of shape
    ``(...)`` (scalar space) or ``(..., 2)`` (vector space).
    """
    b = project_load(source, space)
    scalar = _scalar(space)
    if space.ncomp == 1:
        c = scalar.mass_lu.solve(b)
    else:
        n = scalar.ndofs
        c = np.concatenate([scalar.mass_lu.solve(b[:n]), scalar.mass_lu.solve(b[n:])])
    return FeField(space, c)


def projection_residual(field: FeField, source: Callable) -> float:
    """Max over basis functions of ``|(pi f - f, phi_i)|``."""
    b = project_load(source, field.space)
    return float(np.max(np.abs(field.space.mass @ field.coefficients - b)))
