"""Generalized Forchheimer polynomials and the conductivity they induce.

A Forchheimer polynomial is ``g(s) = sum_i a_i s**alpha_i`` with
``alpha_0 = 0 < alpha_1 < ... < alpha_N``, ``a_0, a_N > 0`` and the
remaining coefficients non-negative.  The conductivity is
``K(xi) = 1 / g(s(xi))`` where ``s(xi)`` is the non-negative root of
``s g(s) = xi``; the momentum is then ``m = -K(|grad rho|) grad rho``.

All evaluators accept scalars or numpy arrays and broadcast.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

__all__ = [
    "ConstitutiveError",
    "DegeneracyExponents",
    "FluxEvaluation",
    "ForchheimerPolynomial",
    "new_polynomial",
    "eval_g",
    "eval_g_prime",
    "solve_s",
    "eval_K",
    "eval_K_prime",
    "eval_xi_K_prime",
    "eval_H",
    "eval_K_coeff_grad",
    "flux",
    "flux_batch",
]

ROOT_TOL = 1e-14
ROOT_MAXITER = 200


class ConstitutiveError(ValueError):
    """Invalid polynomial data or an argument outside the domain."""


class DegeneracyExponents(NamedTuple):
    a: float
    beta: float
    lam: float


@dataclass(frozen=True)
class ForchheimerPolynomial:
    exponents: tuple[float, ...]
    coefficients: tuple[float, ...]
    degeneracy: DegeneracyExponents = field(init=False, repr=False, compare=False)
    chi: float = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        alpha = tuple(float(v) for v in self.exponents)
        coef = tuple(float(v) for v in self.coefficients)
        if len(alpha) != len(coef):
            raise ConstitutiveError("exponents and coefficients differ in length")
        if len(alpha) < 2:
            raise ConstitutiveError("a Forchheimer polynomial needs N >= 1 (two terms)")
        if not all(np.isfinite(alpha)) or not all(np.isfinite(coef)):
            raise ConstitutiveError("non-finite exponent or coefficient")
        if alpha[0] != 0.0:
            raise ConstitutiveError(f"alpha_0 must be 0, got {alpha[0]}")
        if any(b <= a for a, b in zip(alpha, alpha[1:])):
            raise ConstitutiveError("exponents must be strictly increasing")
        if coef[0] <= 0.0 or coef[-1] <= 0.0:
            raise ConstitutiveError("a_0 and a_N must be positive")
        if any(c < 0.0 for c in coef[1:-1]):
            raise ConstitutiveError("intermediate coefficients must be non-negative")

        object.__setattr__(self, "exponents", alpha)
        object.__setattr__(self, "coefficients", coef)
        a = alpha[-1] / (alpha[-1] + 1.0)
        beta = 2.0 - a
        object.__setattr__(self, "degeneracy", DegeneracyExponents(a, beta, beta / (beta - 1.0)))
        object.__setattr__(
            self, "chi", max(max(coef), 1.0 / coef[0], 1.0 / coef[-1])
        )

    @property
    def N(self) -> int:
        return len(self.exponents) - 1

    @property
    def degree(self) -> float:
        return self.exponents[-1]

    @property
    def d(self) -> float:
        """Bound constant in ``sum_i |dK/da_i| <= d K``."""
        return self.N / min(self.coefficients[0], (1.0 + self.degree) * self.coefficients[-1])

    @property
    def is_two_term_linear(self) -> bool:
        return self.exponents == (0.0, 1.0)

    def with_coefficients(self, coefficients) -> "ForchheimerPolynomial":
        return ForchheimerPolynomial(self.exponents, tuple(coefficients))


def new_polynomial(exponents, coefficients) -> ForchheimerPolynomial:
    return ForchheimerPolynomial(tuple(exponents), tuple(coefficients))


def _check_nonneg(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if np.any(arr < 0.0) or np.any(np.isnan(arr)):
        raise ConstitutiveError(f"{name} must be non-negative")
    return arr


def _out(arr: np.ndarray, like):
    return float(arr) if np.ndim(like) == 0 else arr


def _g(poly: ForchheimerPolynomial, s: np.ndarray) -> np.ndarray:
    # alpha_0 = 0 term is the constant a_0; avoids 0**0
    out = np.full_like(s, poly.coefficients[0])
    for a_i, alpha_i in zip(poly.coefficients[1:], poly.exponents[1:]):
        out += a_i * s**alpha_i
    return out


def _s_gprime(poly: ForchheimerPolynomial, s: np.ndarray) -> np.ndarray:
    """``s * g'(s)``, finite at ``s = 0`` for every admissible exponent."""
    out = np.zeros_like(s)
    for a_i, alpha_i in zip(poly.coefficients[1:], poly.exponents[1:]):
        out += alpha_i * a_i * s**alpha_i
    return out


def eval_g(poly: ForchheimerPolynomial, s):
    arr = _check_nonneg(s, "s")
    return _out(_g(poly, np.atleast_1d(arr)).reshape(arr.shape), s)


def eval_g_prime(poly: ForchheimerPolynomial, s):
    arr = np.atleast_1d(_check_nonneg(s, "s"))
    out = np.zeros_like(arr)
    with np.errstate(divide="ignore"):
        for a_i, alpha_i in zip(poly.coefficients[1:], poly.exponents[1:]):
            out += alpha_i * a_i * arr ** (alpha_i - 1.0)
    return _out(out.reshape(np.shape(s)), s)


def _solve_s(poly: ForchheimerPolynomial, xi: np.ndarray) -> np.ndarray:
    if xi.ndim != 1:
        return _solve_s(poly, xi.ravel()).reshape(xi.shape)
    a0 = poly.coefficients[0]
    if poly.is_two_term_linear:
        a1 = poly.coefficients[1]
        # s = (-a0 + sqrt(a0^2 + 4 a1 xi)) / (2 a1), rationalized
        return 2.0 * xi / (a0 + np.sqrt(a0 * a0 + 4.0 * a1 * xi))

    aN, pN = poly.coefficients[-1], poly.exponents[-1]
    # s g(s) >= a0 s and >= aN s^(1+alpha_N): both give upper brackets
    hi = np.minimum(xi / a0, (xi / aN) ** (1.0 / (1.0 + pN)))
    lo = np.zeros_like(xi)
    s = hi.copy()
    active = xi > 0.0
    for _ in range(ROOT_MAXITER):
        if not active.any():
            break
        sa = s[active]
        gs = _g(poly, sa)
        phi = sa * gs - xi[active]
        dphi = gs + _s_gprime(poly, sa)
        lo_a, hi_a = lo[active], hi[active]
        lo_a = np.where(phi < 0.0, sa, lo_a)
        hi_a = np.where(phi > 0.0, sa, hi_a)
        new = sa - phi / dphi
        outside = (new < lo_a) | (new > hi_a)
        new = np.where(outside, 0.5 * (lo_a + hi_a), new)
        done = (
            ((np.abs(new - sa) <= ROOT_TOL * sa) & ~outside)
            | (hi_a - lo_a <= ROOT_TOL * sa)
            | (phi == 0.0)
        )
        s[active] = new
        lo[active], hi[active] = lo_a, hi_a
        idx = np.flatnonzero(active)
        active[idx[done]] = False
    else:
        raise ConstitutiveError(
            f"root solve for s g(s) = xi did not converge in {ROOT_MAXITER} iterations"
        )
    s[xi == 0.0] = 0.0
    return s


def solve_s(poly: ForchheimerPolynomial, xi):
    """Non-negative root ``s`` of ``s g(s) = xi``.

    The two-term law ``a0 + a1 s`` uses the quadratic formula; any other
    polynomial runs Newton's method safeguarded by bisection on the
    bracket ``[0, min(xi/a0, (xi/aN)**(1/(1+alpha_N)))]``.  Because
    ``s g(s)`` is convex and increasing, Newton started at the upper end
    of the bracket decreases monotonically onto the root.
    """
    arr = _check_nonneg(xi, "xi")
    s = _solve_s(poly, np.atleast_1d(arr).astype(float)).reshape(arr.shape)
    return _out(s, xi)


def eval_K(poly: ForchheimerPolynomial, xi):
    arr = np.atleast_1d(_check_nonneg(xi, "xi")).astype(float)
    K = 1.0 / _g(poly, _solve_s(poly, arr))
    return _out(K.reshape(np.shape(xi)), xi)


def _K_and_xiKp(poly: ForchheimerPolynomial, xi: np.ndarray):
    s = _solve_s(poly, xi)
    g = _g(poly, s)
    sgp = _s_gprime(poly, s)
    K = 1.0 / g
    # implicit differentiation of s g(s) = xi:  xi K'(xi) = -K s g' / (g + s g')
    return K, -K * sgp / (g + sgp)


def eval_xi_K_prime(poly: ForchheimerPolynomial, xi):
    """``xi * K'(xi)``; bounded between ``-a K(xi)`` and 0."""
    arr = np.atleast_1d(_check_nonneg(xi, "xi")).astype(float)
    _, xkp = _K_and_xiKp(poly, arr)
    return _out(xkp.reshape(np.shape(xi)), xi)


def eval_K_prime(poly: ForchheimerPolynomial, xi):
    """``K'(xi) = -g'(s) / (g(s)**2 (g(s) + s g'(s)))``.

    At ``xi = 0`` this is ``-g'(0) / a0**3``, which is ``-inf`` when
    ``alpha_1 < 1``.
    """
    arr = np.atleast_1d(_check_nonneg(xi, "xi")).astype(float)
    s = _solve_s(poly, arr)
    g = _g(poly, s)
    sgp = _s_gprime(poly, s)
    gp = np.asarray(eval_g_prime(poly, s), dtype=float).reshape(s.shape)
    out = -gp / (g * g * (g + sgp))
    return _out(out.reshape(np.shape(xi)), xi)


def eval_H(poly: ForchheimerPolynomial, xi):
    """``H(xi) = int_0^{xi^2} K(sqrt(u)) du``.

    Substituting ``u = (s g(s))**2`` turns the integrand into a
    generalized polynomial in ``s``::

        H = 2 int_0^S (s g + s^2 g') ds = 2 sum_i a_i (1+alpha_i)/(2+alpha_i) S^(2+alpha_i)

    with ``S = s(xi)``, so no quadrature is needed.
    """
    arr = np.atleast_1d(_check_nonneg(xi, "xi")).astype(float)
    S = _solve_s(poly, arr)
    H = np.zeros_like(S)
    for a_i, alpha_i in zip(poly.coefficients, poly.exponents):
        H += a_i * (1.0 + alpha_i) / (2.0 + alpha_i) * S ** (2.0 + alpha_i)
    return _out((2.0 * H).reshape(np.shape(xi)), xi)


def eval_K_coeff_grad(poly: ForchheimerPolynomial, xi) -> np.ndarray:
    """Partial derivatives ``dK/da_i = -K s^alpha_i / (g + s g')``.

    Returns shape ``(N+1,)`` for scalar ``xi`` and ``(N+1,) + xi.shape``
    otherwise.
    """
    arr = np.atleast_1d(_check_nonneg(xi, "xi")).astype(float)
    s = _solve_s(poly, arr)
    g = _g(poly, s)
    denom = g + _s_gprime(poly, s)
    K = 1.0 / g
    rows = [-K / denom]
    rows += [-K * s**alpha_i / denom for alpha_i in poly.exponents[1:]]
    out = np.stack(rows)
    if np.ndim(xi) == 0:
        return out[:, 0]
    return out.reshape((poly.N + 1,) + np.shape(xi))


class FluxEvaluation(NamedTuple):
    value: np.ndarray
    jacobian: np.ndarray


def flux_batch(poly: ForchheimerPolynomial, y: np.ndarray):
    """Vectorized ``K(|y|) y`` and its Jacobian for ``y`` of shape ``(..., 2)``.

    The Jacobian is ``K I + (K'(|y|)/|y|) y y^T``; at ``y = 0`` the second
    term is dropped (its limit is zero), leaving ``K(0) I``.
    """
    y = np.asarray(y, dtype=float)
    xi = np.sqrt(np.einsum("...i,...i->...", y, y))
    flat = np.atleast_1d(xi).ravel()
    K, xkp = _K_and_xiKp(poly, flat)
    K = K.reshape(xi.shape)
    xkp = xkp.reshape(xi.shape)
    with np.errstate(divide="ignore", invalid="ignore"):
        c = np.where(xi > 0.0, xkp / (xi * xi), 0.0)
    value = K[..., None] * y
    eye = np.eye(y.shape[-1])
    jac = K[..., None, None] * eye + c[..., None, None] * y[..., :, None] * y[..., None, :]
    return value, jac


def flux(poly: ForchheimerPolynomial, y) -> FluxEvaluation:
    value, jac = flux_batch(poly, np.asarray(y, dtype=float))
    return FluxEvaluation(value, jac)
