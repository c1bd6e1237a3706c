"""Backward Euler / Newton solver for the mixed density-momentum system.

Unknowns at each time level are the vector P1 momentum ``m`` and the
scalar P1 density ``rho``, stacked as ``x = [m_x, m_y, rho]``.  The
discrete equations are

    (m, z) + (K(|grad rho|) grad rho, z)                     = 0
    (phi (rho - rho_prev)/dt, r) - (m, grad r) - (f, r) + <psi, r> = 0

for every vector test function ``z`` and scalar test function ``r``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .constitutive import ForchheimerPolynomial, flux_batch
from .femspace import FeField, ScalarP1Space, VectorP1Space, l2_project
from .mesh import SIDES, TriangleMesh

log = logging.getLogger(__name__)


def unit_porosity(x: np.ndarray) -> np.ndarray:
    return np.ones(np.shape(x)[:-1])


@dataclass(frozen=True)
class ProblemData:
    """Coefficients and data of one initial boundary value problem.

    ``source(x, t)``, ``psi(x, t, side)`` and ``rho0(x)`` take points of
    shape ``(..., 2)``; ``psi`` is the prescribed normal momentum
    ``m . nu`` on the boundary side named ``side``.
    """

    poly: ForchheimerPolynomial
    source: Callable
    psi: Callable
    rho0: Callable
    porosity: Callable = unit_porosity


@dataclass
class DiscreteState:
    rho: FeField
    m: FeField
    time: float

    def __post_init__(self) -> None:
        if self.rho.space.mesh is not self.m.space.mesh:
            raise ValueError("density and momentum live on different meshes")

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.m.coefficients, self.rho.coefficients])


@dataclass(frozen=True)
class TimeGrid:
    dt: float
    steps: int

    def __post_init__(self) -> None:
        if not self.dt > 0.0 or self.steps < 1:
            raise ValueError("need dt > 0 and at least one step")

    @property
    def T(self) -> float:
        return self.dt * self.steps

    @classmethod
    def uniform(cls, T: float, steps: int) -> "TimeGrid":
        return cls(T / steps, steps)


@dataclass(frozen=True)
class NewtonConfig:
    tol: float = 1e-10
    max_iter: int = 30
    backtrack_factor: float = 0.5
    max_backtracks: int = 8
    debug: bool = False

    def __post_init__(self) -> None:
        if not self.tol > 0.0:
            raise ValueError("Newton tolerance must be positive")


class NonConvergence(RuntimeError):
    def __init__(self, iterations: int, residual: float, step: Optional[int] = None):
        self.iterations = iterations
        self.residual = residual
        self.step = step
        where = "" if step is None else f" at time step {step}"
        super().__init__(
            f"Newton did not converge{where}: {iterations} iterations, residual {residual:.3e}"
        )


@dataclass
class StepRecord:
    state: DiscreteState
    iterations: int
    residual: float
    mass_balance: float


class MixedSpaces:
    """Density space, momentum space and the state-independent matrices."""

    def __init__(self, mesh: TriangleMesh):
        self.mesh = mesh
        self.rho_space = ScalarP1Space(mesh)
        self.m_space = VectorP1Space(self.rho_space)
        self._phi_cache: dict[int, tuple[Callable, sp.csc_matrix]] = {}

    @property
    def n_m(self) -> int:
        return self.m_space.ndofs

    @property
    def n_rho(self) -> int:
        return self.rho_space.ndofs

    @property
    def ndofs(self) -> int:
        return self.n_m + self.n_rho

    def split(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return x[: self.n_m], x[self.n_m :]

    def state(self, x: np.ndarray, time: float) -> DiscreteState:
        m, rho = self.split(x)
        return DiscreteState(
            FeField(self.rho_space, rho.copy()), FeField(self.m_space, m.copy()), time
        )

    @cached_property
    def vector_mass(self) -> sp.csr_matrix:
        return self.m_space.mass.tocsr()

    @cached_property
    def coupling(self) -> sp.csr_matrix:
        return self.rho_space.gradient_coupling

    @cached_property
    def divergence(self) -> sp.csr_matrix:
        """``(m, grad r)`` as a ``(n_rho, n_m)`` matrix."""
        return self.coupling.T.tocsr()

    def porosity_mass(self, porosity: Callable) -> sp.csr_matrix:
        hit = self._phi_cache.get(id(porosity))
        if hit is not None and hit[0] is porosity:
            return hit[1]
        phi = np.asarray(porosity(self.rho_space.quad_points), dtype=float)
        if np.any(phi <= 0.0):
            raise ValueError("porosity must be strictly positive")
        M = self.rho_space.weighted_mass(porosity).tocsr()
        self._phi_cache[id(porosity)] = (porosity, M)
        return M

    @cached_property
    def _side_edges(self) -> dict[str, np.ndarray]:
        sides = self.mesh.boundary_sides
        return {s: np.flatnonzero(sides == s) for s in SIDES}

    def source_load(self, data: ProblemData, t: float) -> np.ndarray:
        V = self.rho_space
        vals = np.broadcast_to(
            np.asarray(data.source(V.quad_points, t), dtype=float), V.quad_weights.shape
        )
        return V.load(vals)

    def boundary_load(self, data: ProblemData, t: float) -> np.ndarray:
        V = self.rho_space
        vals = np.zeros(V.edge_quad_weights.shape)
        for side, idx in self._side_edges.items():
            if len(idx):
                vals[idx] = data.psi(V.edge_quad_points[idx], t, side)
        return V.boundary_load(vals)

    def flux_load(self, poly: ForchheimerPolynomial, rho: np.ndarray) -> np.ndarray:
        """``(K(|grad rho|) grad rho, z_i)`` for all vector test functions.

        The flux is constant per triangle and the test functions are
        linear, so ``int_T phi_i = |T|/3`` makes this exact.
        """
        V = self.rho_space
        grad = np.einsum("tk,tkd->td", rho[self.mesh.triangles], V.basis_grads)
        value, _ = flux_batch(poly, grad)
        w = (V.areas / 3.0)[:, None]
        tris = self.mesh.triangles.ravel()
        out = np.empty(self.n_m)
        for c in range(2):
            contrib = np.repeat(w * value[:, c : c + 1], 3, axis=1)
            out[c * self.n_rho : (c + 1) * self.n_rho] = np.bincount(
                tris, contrib.ravel(), minlength=self.n_rho
            )
        return out

    @cached_property
    def _flux_pattern(self) -> tuple[np.ndarray, np.ndarray]:
        tris = self.mesh.triangles
        n = self.n_rho
        rows, cols = [], []
        for c in range(2):
            for i in range(3):
                for j in range(3):
                    rows.append(c * n + tris[:, i])
                    cols.append(tris[:, j])
        return np.stack(rows, axis=1).ravel(), np.stack(cols, axis=1).ravel()

    def flux_jacobian(self, poly: ForchheimerPolynomial, rho: np.ndarray) -> sp.csr_matrix:
        """``C[(i, c), j] = int (J(grad rho) grad phi_j)_c z_i``."""
        V = self.rho_space
        grad = np.einsum("tk,tkd->td", rho[self.mesh.triangles], V.basis_grads)
        _, jac = flux_batch(poly, grad)
        # (J grad phi_j)_c for each triangle, j, c
        Jg = np.einsum("tcd,tjd->tcj", jac, V.basis_grads)
        w = (V.areas / 3.0)[:, None, None, None]
        vals = w * np.broadcast_to(Jg[:, :, None, :], (len(grad), 2, 3, 3))
        rows, cols = self._flux_pattern
        return sp.csr_matrix(
            (vals.reshape(len(grad), -1).ravel(), (rows, cols)), shape=(self.n_m, self.n_rho)
        )


def initial_state(data: ProblemData, spaces: MixedSpaces, t0: float = 0.0) -> DiscreteState:
    """``rho_h = pi rho0`` and ``m_h`` from the momentum equation at ``t0``."""
    rho = l2_project(data.rho0, spaces.rho_space)
    b = -spaces.flux_load(data.poly, rho.coefficients)
    lu = spaces.m_space.scalar.mass_lu
    n = spaces.n_rho
    m = np.concatenate([lu.solve(b[:n]), lu.solve(b[n:])])
    return DiscreteState(rho, FeField(spaces.m_space, m), t0)


class _Step:
    """Residual/Jacobian closure for one backward Euler step."""

    def __init__(self, spaces: MixedSpaces, previous: DiscreteState, data: ProblemData, dt: float):
        self.spaces = spaces
        self.data = data
        self.dt = dt
        self.time = previous.time + dt
        self.rho_prev = previous.rho.coefficients
        self.M_phi = spaces.porosity_mass(data.porosity)
        self.rhs = spaces.source_load(data, self.time) - spaces.boundary_load(data, self.time)

    def residual(self, x: np.ndarray) -> np.ndarray:
        sp_ = self.spaces
        m, rho = sp_.split(x)
        r_m = sp_.vector_mass @ m + sp_.flux_load(self.data.poly, rho)
        r_rho = self.M_phi @ (rho - self.rho_prev) / self.dt - sp_.divergence @ m - self.rhs
        return np.concatenate([r_m, r_rho])

    def jacobian(self, x: np.ndarray) -> sp.csc_matrix:
        sp_ = self.spaces
        _, rho = sp_.split(x)
        C = sp_.flux_jacobian(self.data.poly, rho)
        return sp.bmat(
            [[sp_.vector_mass, C], [-sp_.divergence, self.M_phi / self.dt]], format="csc"
        )


def _spaces_of(state: DiscreteState, spaces: Optional[MixedSpaces]) -> MixedSpaces:
    if spaces is not None:
        return spaces
    return MixedSpaces(state.rho.space.mesh)


def assemble_residual(
    candidate: DiscreteState,
    previous: DiscreteState,
    data: ProblemData,
    dt: float,
    spaces: Optional[MixedSpaces] = None,
) -> np.ndarray:
    """Residual of both equations; momentum rows first, then density rows."""
    if not np.isclose(candidate.time, previous.time + dt, rtol=0.0, atol=1e-12 * (1 + abs(dt))):
        raise ValueError("candidate.time must equal previous.time + dt")
    step = _Step(_spaces_of(candidate, spaces), previous, data, dt)
    return step.residual(candidate.vector)


def assemble_jacobian(
    candidate: DiscreteState,
    data: ProblemData,
    dt: float,
    spaces: Optional[MixedSpaces] = None,
) -> sp.csc_matrix:
    """Block Jacobian ``[[M_m, C(rho)], [-B, M_phi/dt]]`` of the residual."""
    spaces = _spaces_of(candidate, spaces)
    C = spaces.flux_jacobian(data.poly, candidate.rho.coefficients)
    M_phi = spaces.porosity_mass(data.porosity)
    return sp.bmat(
        [[spaces.vector_mass, C], [-spaces.divergence, M_phi / dt]], format="csc"
    )


def mass_balance_defect(
    state: DiscreteState, previous: DiscreteState, data: ProblemData, dt: float,
    spaces: Optional[MixedSpaces] = None,
) -> float:
    """``int phi (rho - rho_prev)/dt - int f + oint psi`` at ``state.time``."""
    spaces = _spaces_of(state, spaces)
    M_phi = spaces.porosity_mass(data.porosity)
    drho = state.rho.coefficients - previous.rho.coefficients
    storage = np.sum(M_phi @ drho) / dt
    return float(
        storage
        - np.sum(spaces.source_load(data, state.time))
        + np.sum(spaces.boundary_load(data, state.time))
    )


def check_jacobian(step: _Step, x: np.ndarray, rng: np.random.Generator, eps: float = 1e-7) -> float:
    """Largest relative error of ``J v`` against a central difference."""
    J = step.jacobian(x)
    worst = 0.0
    for _ in range(3):
        v = rng.standard_normal(x.shape)
        fd = (step.residual(x + eps * v) - step.residual(x - eps * v)) / (2 * eps)
        worst = max(worst, np.linalg.norm(J @ v - fd) / max(np.linalg.norm(fd), 1e-300))
    return worst


def sparse_solve(A: sp.csc_matrix, b: np.ndarray) -> np.ndarray:
    """Direct LU solve of the block system.

    Both diagonal blocks are mass matrices, so LU on the diagonal with a
    symmetric fill-reducing ordering keeps fill low.  Threshold pivoting
    destroys that ordering (about 50x more fill), so it is only the fallback.
    """
    lu = spla.splu(
        A, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0, options={"SymmetricMode": True}
    )
    x = lu.solve(b)
    scale = np.linalg.norm(b) + 1e-300
    if np.all(np.isfinite(x)) and np.linalg.norm(A @ x - b) <= 1e-8 * scale:
        return x
    log.info("diagonal-pivot LU inaccurate; refactoring with partial pivoting")
    return spla.splu(A).solve(b)


def newton_solve(
    previous: DiscreteState,
    data: ProblemData,
    dt: float,
    config: NewtonConfig = NewtonConfig(),
    spaces: Optional[MixedSpaces] = None,
    guess: Optional[DiscreteState] = None,
) -> tuple[DiscreteState, int, float]:
    """Advance one backward Euler step with damped Newton.

    Returns the new state, the number of Newton iterations and the final
    residual norm.  The iteration stops once
    ``|R| <= tol * (1 + |R_0|)``; each step is halved while the residual
    norm fails to decrease, at most ``max_backtracks`` times.
    """
    spaces = _spaces_of(previous, spaces)
    step = _Step(spaces, previous, data, dt)
    x = (guess or previous).vector.copy()
    R = step.residual(x)
    norm = np.linalg.norm(R)
    target = config.tol * (1.0 + norm)
    if config.debug:
        err = check_jacobian(step, x, np.random.default_rng(0))
        if err > 1e-5:
            raise RuntimeError(f"Jacobian inconsistent with residual: relative error {err:.2e}")

    it = 0
    while norm > target:
        if it >= config.max_iter:
            raise NonConvergence(it, float(norm))
        dx = sparse_solve(step.jacobian(x), -R)
        lam = 1.0
        for _ in range(config.max_backtracks + 1):
            trial = x + lam * dx
            R_trial = step.residual(trial)
            norm_trial = np.linalg.norm(R_trial)
            if norm_trial < norm:
                break
            lam *= config.backtrack_factor
        x, R, norm = trial, R_trial, norm_trial
        it += 1
        log.debug("t=%.4g newton it %d residual %.3e (lambda=%g)", step.time, it, norm, lam)
    return spaces.state(x, step.time), it, float(norm)


def time_march(
    data: ProblemData,
    spaces: MixedSpaces,
    grid: TimeGrid,
    config: NewtonConfig = NewtonConfig(),
    history: Optional[list] = None,
) -> DiscreteState:
    """Run ``grid.steps`` backward Euler steps from ``pi rho0``.

    If ``history`` is a list, a ``StepRecord`` is appended per step.
    """
    state = initial_state(data, spaces)
    for i in range(1, grid.steps + 1):
        try:
            new, its, res = newton_solve(state, data, grid.dt, config, spaces)
        except NonConvergence as exc:
            raise NonConvergence(exc.iterations, exc.residual, step=i) from exc
        # keep the time stamp exact on the uniform partition
        new.time = i * grid.dt
        if history is not None:
            defect = mass_balance_defect(new, state, data, grid.dt, spaces)
            history.append(StepRecord(new, its, res, defect))
        state = new
    return state
