"""Manufactured solutions on the unit square.

Example 1 has ``rho = exp(-2t)(x1 + x2)``; example 2 has
``rho = exp(-t)|x|^2``.  Variant A uses ``g(s) = 1 + s`` and variant B
``g(s) = 1 + 0.95 s``.  For the four cataloged cases the momentum and
source are written in closed form; ``build_case`` derives them from the
constitutive module for any other polynomial.

Every callable takes points of shape ``(..., 2)`` and is a module-level
function or ``functools.partial`` so cases pickle across processes.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import partial
from typing import Callable, NamedTuple

import numpy as np

from .constitutive import ForchheimerPolynomial, eval_K, eval_xi_K_prime, new_polynomial
from .mesh import SIDE_NORMALS
from .system import ProblemData, unit_porosity

SQRT2 = np.sqrt(2.0)

POLY_A = new_polynomial((0.0, 1.0), (1.0, 1.0))
POLY_B = new_polynomial((0.0, 1.0), (1.0, 0.95))


# --- example 1 ---------------------------------------------------------------

def _rho_ex1(x, t):
    return np.exp(-2.0 * t) * (x[..., 0] + x[..., 1])


def _grad_rho_ex1(x, t):
    return np.exp(-2.0 * t) * np.ones_like(x)


def _f_ex1(x, t):
    return -2.0 * np.exp(-2.0 * t) * (x[..., 0] + x[..., 1])


def _m_ex1_closed(x, t, num, c0, c1):
    # -num e^{-2t} (1,1) / (c0 + sqrt(c0^2 + c1 sqrt(2) e^{-2t}))
    e = np.exp(-2.0 * t)
    mag = -num * e / (c0 + np.sqrt(c0 * c0 + c1 * SQRT2 * e))
    return np.broadcast_to(np.asarray(mag)[..., None], x.shape).copy()


# --- example 2 ---------------------------------------------------------------

def _w(x):
    return np.sqrt(x[..., 0] ** 2 + x[..., 1] ** 2)


def _rho_ex2(x, t):
    return np.exp(-t) * (x[..., 0] ** 2 + x[..., 1] ** 2)


def _grad_rho_ex2(x, t):
    return 2.0 * np.exp(-t) * x


def _m_ex2_closed(x, t, num, c0, c1):
    # -num e^{-t} x / (c0 + sqrt(c0^2 + c1 e^{-t} w))
    e = np.exp(-t)
    S = np.sqrt(c0 * c0 + c1 * e * _w(x))
    return (-num * e / (c0 + S))[..., None] * x


def _f_ex2_closed(x, t, c0, c1, k2, k3):
    # -e^{-t} w^2 + k2 e^{-2t} w / (S (c0+S)^2) - k3 e^{-t} / (c0+S),  S = sqrt(c0^2 + c1 e^{-t} w)
    e = np.exp(-t)
    w = _w(x)
    S = np.sqrt(c0 * c0 + c1 * e * w)
    return -e * w * w + k2 * e * e * w / (S * (c0 + S) ** 2) - k3 * e / (c0 + S)


# --- generic polynomial ------------------------------------------------------

def _m_generic(x, t, poly, grad_rho):
    gr = grad_rho(x, t)
    xi = np.sqrt(np.sum(gr * gr, axis=-1))
    return -np.asarray(eval_K(poly, xi))[..., None] * gr


def _f_ex2_generic(x, t, poly):
    # div(-K(|grad rho|) grad rho) with grad rho = 2 e^{-t} x, xi = 2 e^{-t} w:
    #   -2 e^{-t} (2 K(xi) + xi K'(xi))
    e = np.exp(-t)
    xi = 2.0 * e * _w(x)
    return -e * _w(x) ** 2 - 2.0 * e * (2.0 * eval_K(poly, xi) + eval_xi_K_prime(poly, xi))


def _psi_from_m(x, t, side, m_exact):
    return m_exact(x, t) @ SIDE_NORMALS[side]


def _rho0(x, rho_exact):
    return rho_exact(x, 0.0)


class ConsistencyReport(NamedTuple):
    max_flux_residual: float
    max_continuity_residual: float


@dataclass(frozen=True)
class ManufacturedCase:
    case_id: str
    poly: ForchheimerPolynomial
    rho_exact: Callable
    m_exact: Callable
    f: Callable
    grad_rho_exact: Callable
    T: float = 1.0

    def psi(self, x, t, side):
        """Boundary normal momentum ``m_exact . nu`` on ``side``."""
        return _psi_from_m(x, t, side, self.m_exact)

    def rho0(self, x):
        return self.rho_exact(x, 0.0)

    porosity = staticmethod(unit_porosity)

    def problem_data(self) -> ProblemData:
        return ProblemData(
            poly=self.poly,
            source=self.f,
            psi=partial(_psi_from_m, m_exact=self.m_exact),
            rho0=partial(_rho0, rho_exact=self.rho_exact),
            porosity=unit_porosity,
        )


def build_case(example: int, poly: ForchheimerPolynomial, case_id: str | None = None) -> ManufacturedCase:
    """Example 1 or 2 data for an arbitrary polynomial, via the numerical K."""
    if example == 1:
        rho, grad, f = _rho_ex1, _grad_rho_ex1, _f_ex1
    elif example == 2:
        rho, grad, f = _rho_ex2, _grad_rho_ex2, partial(_f_ex2_generic, poly=poly)
    else:
        raise ValueError(f"unknown example {example!r}")
    m = partial(_m_generic, poly=poly, grad_rho=grad)
    return ManufacturedCase(case_id or f"{example}*", poly, rho, m, f, grad)


def _catalog() -> dict[str, ManufacturedCase]:
    return {
        "1A": ManufacturedCase(
            "1A", POLY_A, _rho_ex1, partial(_m_ex1_closed, num=2.0, c0=1.0, c1=4.0),
            _f_ex1, _grad_rho_ex1,
        ),
        "1B": ManufacturedCase(
            "1B", POLY_B, _rho_ex1, partial(_m_ex1_closed, num=10.0, c0=5.0, c1=95.0),
            _f_ex1, _grad_rho_ex1,
        ),
        "2A": ManufacturedCase(
            "2A", POLY_A, _rho_ex2, partial(_m_ex2_closed, num=4.0, c0=1.0, c1=8.0),
            partial(_f_ex2_closed, c0=1.0, c1=8.0, k2=16.0, k3=8.0), _grad_rho_ex2,
        ),
        "2B": ManufacturedCase(
            "2B", POLY_B, _rho_ex2, partial(_m_ex2_closed, num=20.0, c0=5.0, c1=190.0),
            partial(_f_ex2_closed, c0=5.0, c1=190.0, k2=1900.0, k3=40.0), _grad_rho_ex2,
        ),
    }


CASES = _catalog()


def case_catalog() -> list[ManufacturedCase]:
    return list(CASES.values())


def get_case(example: int | str, variant: str = "") -> ManufacturedCase:
    key = f"{example}{variant}".upper()
    try:
        return CASES[key]
    except KeyError:
        raise KeyError(f"no manufactured case {key!r}; choose from {sorted(CASES)}") from None


def consistency_check(
    case: ManufacturedCase,
    samples: int = 100,
    fd_step: float = 1e-5,
    seed: int = 0,
    margin: float = 0.05,
) -> ConsistencyReport:
    """Check the PDE against the case's exact fields with central differences.

    Points are drawn from ``[margin, 1-margin]^2`` and times from
    ``[margin, T-margin]``, which keeps the stencil inside the domain and
    away from the corner singularity of example 2.
    """
    if not 0.0 < fd_step <= 1e-3:
        raise ValueError("fd_step must lie in (0, 1e-3]")
    rng = np.random.default_rng(seed)
    x = rng.uniform(margin, 1.0 - margin, size=(samples, 2))
    t = rng.uniform(margin, case.T - margin, size=samples)
    h = fd_step
    e = np.eye(2) * h

    grad = np.stack(
        [(case.rho_exact(x + e[k], t) - case.rho_exact(x - e[k], t)) / (2 * h) for k in range(2)],
        axis=-1,
    )
    xi = np.linalg.norm(grad, axis=-1)
    m = case.m_exact(x, t)
    flux_res = np.linalg.norm(m + np.asarray(eval_K(case.poly, xi))[:, None] * grad, axis=-1)

    rho_t = (case.rho_exact(x, t + h) - case.rho_exact(x, t - h)) / (2 * h)
    div_m = sum(
        (case.m_exact(x + e[k], t)[:, k] - case.m_exact(x - e[k], t)[:, k]) / (2 * h)
        for k in range(2)
    )
    cont_res = np.abs(rho_t + div_m - case.f(x, t))
    return ConsistencyReport(float(flux_res.max()), float(cont_res.max()))
