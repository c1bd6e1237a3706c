"""Quadrature rules on the reference triangle and the unit interval."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class QuadratureRule:
    """Points in barycentric coordinates; weights sum to 1.

    Multiply by the element measure (area or length) to integrate.
    """

    bary: np.ndarray
    weights: np.ndarray
    degree: int

    @property
    def reference_points(self) -> np.ndarray:
        # for triangles: (xi, eta) = (lambda_1, lambda_2); for edges: t = lambda_1
        return self.bary[:, 1:]


def _triangle_degree4() -> QuadratureRule:
    # Strang-Fix / Dunavant 6-point rule
    a1, w1 = 0.445948490915964886318329253883, 0.223381589678011465944827293754
    a2, w2 = 0.091576213509770743459571463402, 0.109951743655321867388505039579
    pts = []
    wts = []
    for a, w in ((a1, w1), (a2, w2)):
        b = 1.0 - 2.0 * a
        pts += [(b, a, a), (a, b, a), (a, a, b)]
        wts += [w, w, w]
    return QuadratureRule(np.array(pts), np.array(wts), 4)


def _edge_gauss3() -> QuadratureRule:
    x, w = np.polynomial.legendre.leggauss(3)
    t = 0.5 * (x + 1.0)
    return QuadratureRule(np.column_stack([1.0 - t, t]), 0.5 * w, 5)


TRIANGLE_RULE = _triangle_degree4()
EDGE_RULE = _edge_gauss3()


def triangle_rule(degree: int = 4) -> QuadratureRule:
    if degree > 4:
        raise ValueError("only rules up to degree 4 are tabulated")
    return TRIANGLE_RULE


def edge_rule(degree: int = 5) -> QuadratureRule:
    if degree > 5:
        raise ValueError("only rules up to degree 5 are tabulated")
    return EDGE_RULE
