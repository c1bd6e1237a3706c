"""Uniform triangulations of the unit square."""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

SIDES = ("left", "right", "bottom", "top")
SIDE_NORMALS = {
    "left": np.array([-1.0, 0.0]),
    "right": np.array([1.0, 0.0]),
    "bottom": np.array([0.0, -1.0]),
    "top": np.array([0.0, 1.0]),
}


class AffineMap(NamedTuple):
    """``x = matrix @ xhat + offset`` from the reference triangle."""

    matrix: np.ndarray
    offset: np.ndarray
    det: float


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    """Triangulation with tagged boundary edges.

    Attributes
    ----------
    vertices : (nv, 2) array
    triangles : (nt, 3) int array, counterclockwise
    boundary_edges : (ne, 2) int array of vertex pairs
    boundary_normals : (ne, 2) array of outward unit normals
    boundary_sides : (ne,) array of side tags from ``SIDES``
    n : subdivisions per side
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    boundary_normals: np.ndarray
    boundary_sides: np.ndarray
    n: int

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_triangles(self) -> int:
        return len(self.triangles)

    @property
    def h(self) -> float:
        return 1.0 / self.n

    def areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    def edge_lengths(self) -> np.ndarray:
        p = self.vertices[self.boundary_edges]
        return np.linalg.norm(p[:, 1] - p[:, 0], axis=1)


def build_unit_square(n: int) -> TriangleMesh:
    """Split ``[0,1]^2`` into ``n x n`` cells, each cut along its
    lower-left to upper-right diagonal.

    Vertices are numbered row-major, ``k = j*(n+1) + i`` for the point
    ``(i/n, j/n)``.
    """
    if int(n) != n or n < 1:
        raise ValueError(f"subdivision count must be a positive integer, got {n!r}")
    n = int(n)
    t = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(t, t)
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    i, j = np.meshgrid(np.arange(n), np.arange(n))
    v00 = (j * (n + 1) + i).ravel()
    v10 = v00 + 1
    v01 = v00 + n + 1
    v11 = v01 + 1
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    triangles = np.empty((2 * n * n, 3), dtype=np.int64)
    triangles[0::2] = lower
    triangles[1::2] = upper

    k = np.arange(n)
    row0 = k
    rowN = n * (n + 1) + k
    col0 = k * (n + 1)
    colN = k * (n + 1) + n
    # orient each edge counterclockwise around the domain
    edges = np.concatenate(
        [
            np.column_stack([row0, row0 + 1]),  # bottom
            np.column_stack([colN, colN + n + 1]),  # right
            np.column_stack([rowN + 1, rowN]),  # top
            np.column_stack([col0 + n + 1, col0]),  # left
        ]
    )
    sides = np.array(["bottom"] * n + ["right"] * n + ["top"] * n + ["left"] * n)
    normals = np.array([SIDE_NORMALS[s] for s in sides])
    return TriangleMesh(vertices, triangles, edges, normals, sides, n)


def reference_map(mesh: TriangleMesh, tri: int) -> AffineMap:
    p = mesh.vertices[mesh.triangles[tri]]
    B = np.column_stack([p[1] - p[0], p[2] - p[0]])
    return AffineMap(B, p[0].copy(), float(np.linalg.det(B)))


def interior_edge_counts(mesh: TriangleMesh) -> dict[tuple[int, int], int]:
    """Number of triangles sharing each (sorted) edge."""
    counts: dict[tuple[int, int], int] = {}
    for tri in mesh.triangles:
        for a, b in ((0, 1), (1, 2), (2, 0)):
            key = tuple(sorted((int(tri[a]), int(tri[b]))))
            counts[key] = counts.get(key, 0) + 1
    return counts
