"""Sampled checks of the structural inequalities satisfied by K.

Each checker returns ``{name: (passed, worst_value)}`` so the CLI and the
test suite can report the same quantities.
"""
from __future__ import annotations

import numpy as np

from .constitutive import (
    ForchheimerPolynomial,
    eval_g,
    eval_H,
    eval_K,
    eval_K_coeff_grad,
    eval_xi_K_prime,
    flux_batch,
    new_polynomial,
    solve_s,
)

# roundoff allowance for inequalities that are tight near xi = 0
ROUND = 1e-12


def sample_xi(count: int = 10_000, xi_max: float = 1e6) -> np.ndarray:
    return np.concatenate([[0.0], np.logspace(-8, np.log10(xi_max), count - 1)])


def random_polynomial(rng: np.random.Generator, max_terms: int = 3, max_degree: float = 3.0):
    N = int(rng.integers(1, max_terms + 1))
    alpha = np.sort(rng.uniform(0.05, max_degree, size=N))
    while np.any(np.diff(alpha) <= 1e-3):
        alpha = np.sort(rng.uniform(0.05, max_degree, size=N))
    coef = rng.uniform(0.1, 3.0, size=N + 1)
    if N > 1:
        # intermediate coefficients may vanish
        coef[1:-1] *= rng.integers(0, 2, size=N - 1)
    return new_polynomial(np.concatenate([[0.0], alpha]), coef)


def check_scalar_properties(poly: ForchheimerPolynomial, xi: np.ndarray | None = None) -> dict:
    xi = sample_xi() if xi is None else xi
    a = poly.degeneracy.a
    K = eval_K(poly, xi)
    s = solve_s(poly, xi)
    xkp = eval_xi_K_prime(poly, xi)
    H = eval_H(poly, xi)
    KxxK = K * xi * xi
    env = K * (1.0 + xi) ** a
    grad = eval_K_coeff_grad(poly, xi)

    roundtrip = np.abs(s * eval_g(poly, s) - xi) / (1.0 + xi)
    out = {
        "K in (0, 1/a0]": (bool(np.all(K > 0) and np.all(K <= 1.0 / poly.coefficients[0] * (1 + ROUND))), float(K.min())),
        "K nonincreasing": (bool(np.all(np.diff(K) <= ROUND * K[1:])), float(np.diff(K).max())),
        "K xi nondecreasing": (bool(np.all(np.diff(K * xi) >= -ROUND * (K * xi)[1:])), float(np.diff(K * xi).min())),
        "K xi^2 nondecreasing": (bool(np.all(np.diff(KxxK) >= -ROUND * KxxK[1:])), float(np.diff(KxxK).min())),
        "K (1+xi)^a bounded": (bool(env.min() > 0 and np.isfinite(env.max())), float(env.max() / env.min())),
        "-aK <= xi K' <= 0": (
            bool(np.all(xkp <= 0) and np.all(xkp >= -a * K * (1 + ROUND))),
            float(np.max(-xkp / K)),
        ),
        "s g(s) = xi round trip": (bool(np.all(roundtrip <= 1e-12)), float(roundtrip.max())),
        "K xi^2 <= H <= 2 K xi^2": (
            bool(np.all(H >= KxxK * (1 - ROUND)) and np.all(H <= 2 * KxxK * (1 + ROUND))),
            float(np.max(H / np.where(KxxK > 0, KxxK, 1.0))),
        ),
        "sum |dK/da_i| <= d K": (
            bool(np.all(np.abs(grad).sum(axis=0) <= poly.d * K * (1 + ROUND))),
            float(np.max(np.abs(grad).sum(axis=0) / (poly.d * K))),
        ),
    }
    return out


def _segment_mean_K(poly, y, yp, points: int = 64) -> np.ndarray:
    """Gauss-Legendre approximation of ``int_0^1 K(|t y + (1-t) y'|) dt``."""
    x, w = np.polynomial.legendre.leggauss(points)
    t = 0.5 * (x + 1.0)
    gam = t[None, :, None] * y[:, None, :] + (1 - t)[None, :, None] * yp[:, None, :]
    K = eval_K(poly, np.linalg.norm(gam, axis=-1))
    return K @ (0.5 * w)


def check_vector_inequalities(
    poly: ForchheimerPolynomial, rng: np.random.Generator, pairs: int = 1000,
    box: float = 10.0, slack: float = 1e-6,
) -> dict:
    a = poly.degeneracy.a
    y = rng.uniform(-box, box, size=(pairs, 2))
    yp = rng.uniform(-box, box, size=(pairs, 2))
    F, _ = flux_batch(poly, y)
    Fp, _ = flux_batch(poly, yp)
    Q = _segment_mean_K(poly, y, yp)
    d = yp - y
    dist = np.linalg.norm(d, axis=1)
    mono = np.einsum("ij,ij->i", Fp - F, d)
    mono_bound = (1 - a) * dist**2 * Q
    lip = np.linalg.norm(Fp - F, axis=1)
    lip_bound = (1 + a) * dist * Q
    return {
        "monotonicity (1-a)|y'-y|^2 Q": (
            bool(np.all(mono >= mono_bound * (1 - slack))),
            float(np.min(mono / mono_bound)),
        ),
        "Lipschitz (1+a)|y'-y| Q": (
            bool(np.all(lip <= lip_bound * (1 + slack))),
            float(np.max(lip / lip_bound)),
        ),
    }
