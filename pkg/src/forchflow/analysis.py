"""Error norms, convergence tables and the coefficient-dependence study."""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .femspace import FeField, gradients
from .manufactured import ManufacturedCase
from .mesh import build_unit_square
from .system import MixedSpaces, NewtonConfig, NonConvergence, TimeGrid, time_march

log = logging.getLogger(__name__)


def _quad(field: FeField):
    space = field.space if field.space.ncomp == 1 else field.space.scalar
    return space.quad_points, space.quad_weights


def l2_error(field: FeField, exact: Callable, t: float) -> float:
    """``||field - exact(., t)||_{L2}`` with the degree-4 triangle rule."""
    pts, wts = _quad(field)
    diff = field.at_quad_points() - np.asarray(exact(pts, t), dtype=float)
    sq = diff**2 if diff.ndim == 2 else np.sum(diff**2, axis=-1)
    return float(np.sqrt(np.sum(wts * sq)))


def l2_difference(a: FeField, b: FeField) -> float:
    if a.space.mesh is not b.space.mesh and a.space.mesh.n != b.space.mesh.n:
        raise ValueError("fields live on different meshes")
    _, wts = _quad(a)
    diff = a.at_quad_points() - b.at_quad_points()
    sq = diff**2 if diff.ndim == 2 else np.sum(diff**2, axis=-1)
    return float(np.sqrt(np.sum(wts * sq)))


def gradient_error(rho: FeField, grad_exact: Callable, t: float, p: float) -> float:
    """``||grad(rho_h) - grad(rho)||_{L^p}``."""
    pts, wts = _quad(rho)
    g = gradients(rho)[:, None, :]
    diff = np.linalg.norm(g - grad_exact(pts, t), axis=-1)
    return float(np.sum(wts * diff**p) ** (1.0 / p))


def rates(levels, errors) -> list[Optional[float]]:
    """``log(e_{j-1}/e_j) / log(n_j/n_{j-1})``; ``log2`` ratios for doubling."""
    out: list[Optional[float]] = [None]
    for j in range(1, len(errors)):
        e0, e1 = errors[j - 1], errors[j]
        if e0 > 0.0 and e1 > 0.0:
            out.append(math.log(e0 / e1) / math.log(levels[j] / levels[j - 1]))
        else:
            out.append(None)
    return out


@dataclass(frozen=True)
class DtRule:
    """``proportional`` gives ``dt = T/n``; ``fixed`` a constant step."""

    kind: str = "proportional"
    value: float = 0.0

    @classmethod
    def parse(cls, text: str) -> "DtRule":
        if text in ("proportional-to-h", "proportional"):
            return cls("proportional")
        if text.startswith("fixed:"):
            value = float(text.split(":", 1)[1])
            if not value > 0.0:
                raise ValueError("fixed dt must be positive")
            return cls("fixed", value)
        raise ValueError(f"unknown dt rule {text!r}")

    def grid(self, n: int, T: float) -> TimeGrid:
        if self.kind == "proportional":
            return TimeGrid.uniform(T, n)
        steps = round(T / self.value)
        if steps < 1 or not math.isclose(steps * self.value, T, rel_tol=1e-9):
            raise ValueError(f"dt={self.value} does not divide T={T}")
        return TimeGrid(self.value, steps)

    def __str__(self) -> str:
        return "proportional-to-h (dt=T/n)" if self.kind == "proportional" else f"fixed:{self.value:g}"


def _check_levels(levels) -> list[int]:
    levels = [int(n) for n in levels]
    if not levels:
        raise ValueError("need at least one level")
    if any(b <= a for a, b in zip(levels, levels[1:])):
        raise ValueError("levels must be strictly increasing")
    return levels


def _metadata(case_ids, polys, levels, dt_rule, config, T) -> dict:
    return {
        "case": ",".join(case_ids),
        "poly": "; ".join(
            f"exponents={list(p.exponents)} coefficients={list(p.coefficients)}" for p in polys
        ),
        "dt_rule": str(dt_rule),
        "dt": " ".join(f"{n}:{dt_rule.grid(n, T).dt:.6g}" for n in levels),
        "newton": f"tol={config.tol:g} max_iter={config.max_iter} "
        f"backtrack={config.backtrack_factor:g}x{config.max_backtracks}",
        "measured_at": f"t=T={T:g}",
    }


@dataclass
class LevelResult:
    n: int
    rho: np.ndarray
    m: np.ndarray
    iterations: int
    max_mass_defect: float


def solve_level(case: ManufacturedCase, n: int, dt_rule: DtRule, config: NewtonConfig) -> LevelResult:
    spaces = MixedSpaces(build_unit_square(n))
    history: list = []
    state = time_march(case.problem_data(), spaces, dt_rule.grid(n, case.T), config, history)
    return LevelResult(
        n,
        state.rho.coefficients,
        state.m.coefficients,
        sum(r.iterations for r in history),
        max(abs(r.mass_balance) for r in history),
    )


def _run_levels(jobs, workers: int):
    """Yield results in job order; ``jobs`` are argument tuples for ``solve_level``."""
    if workers <= 1:
        for job in jobs:
            yield job, solve_level(*job)
        return
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [(job, pool.submit(solve_level, *job)) for job in jobs]
        for job, fut in futures:
            yield job, fut.result()


class StudyFailure(RuntimeError):
    """Solver failure at one level; ``report`` holds the completed levels."""

    def __init__(self, level: int, cause: NonConvergence, report):
        self.level = level
        self.report = report
        super().__init__(f"level n={level}: {cause}")


@dataclass
class ConvergenceReport:
    case_id: str
    levels: list[int] = field(default_factory=list)
    err_rho: list[float] = field(default_factory=list)
    err_m: list[float] = field(default_factory=list)
    err_grad: list[float] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    @property
    def rate_rho(self):
        return rates(self.levels, self.err_rho)

    @property
    def rate_m(self):
        return rates(self.levels, self.err_m)

    columns = ("n", "err_rho_l2", "rate_rho", "err_m_l2", "rate_m")

    def rows(self):
        return list(zip(self.levels, self.err_rho, self.rate_rho, self.err_m, self.rate_m))


@dataclass
class DependenceReport:
    case_ids: tuple[str, str]
    coefficients: tuple[tuple[float, ...], tuple[float, ...]]
    levels: list[int] = field(default_factory=list)
    diff_rho: list[float] = field(default_factory=list)
    diff_m: list[float] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    @property
    def rate_rho(self):
        return rates(self.levels, self.diff_rho)

    @property
    def rate_m(self):
        return rates(self.levels, self.diff_m)

    columns = ("n", "diff_rho_l2", "rate_rho", "diff_m_l2", "rate_m")

    def rows(self):
        return list(zip(self.levels, self.diff_rho, self.rate_rho, self.diff_m, self.rate_m))


def run_convergence(
    case: ManufacturedCase,
    levels,
    dt_rule: DtRule = DtRule(),
    config: NewtonConfig = NewtonConfig(),
    workers: int = 1,
) -> ConvergenceReport:
    levels = _check_levels(levels)
    report = ConvergenceReport(
        case.case_id, metadata=_metadata([case.case_id], [case.poly], levels, dt_rule, config, case.T)
    )
    beta = case.poly.degeneracy.beta
    jobs = [(case, n, dt_rule, config) for n in levels]
    try:
        for (_, n, _, _), res in _run_levels(jobs, workers):
            spaces = MixedSpaces(build_unit_square(n))
            rho = FeField(spaces.rho_space, res.rho)
            m = FeField(spaces.m_space, res.m)
            report.levels.append(n)
            report.err_rho.append(l2_error(rho, case.rho_exact, case.T))
            report.err_m.append(l2_error(m, case.m_exact, case.T))
            report.err_grad.append(gradient_error(rho, case.grad_rho_exact, case.T, beta))
            log.info(
                "%s n=%d |rho-rho_h|=%.4e |m-m_h|=%.4e |grad e|_L%.3g=%.4e newton=%d",
                case.case_id, n, report.err_rho[-1], report.err_m[-1], beta,
                report.err_grad[-1], res.iterations,
            )
    except NonConvergence as exc:
        raise StudyFailure(levels[len(report.levels)], exc, report) from exc
    return report


def run_dependence(
    case_a: ManufacturedCase,
    case_b: ManufacturedCase,
    levels,
    dt_rule: DtRule = DtRule(),
    config: NewtonConfig = NewtonConfig(),
    workers: int = 1,
) -> DependenceReport:
    """Solve both cases on identical grids and measure the solution gap."""
    levels = _check_levels(levels)
    if case_a.T != case_b.T:
        raise ValueError("cases must share the final time")
    report = DependenceReport(
        (case_a.case_id, case_b.case_id),
        (case_a.poly.coefficients, case_b.poly.coefficients),
        metadata=_metadata(
            [case_a.case_id, case_b.case_id], [case_a.poly, case_b.poly], levels, dt_rule, config, case_a.T
        ),
    )
    jobs = [(c, n, dt_rule, config) for n in levels for c in (case_a, case_b)]
    results = _run_levels(jobs, workers)
    try:
        for n in levels:
            (_, ra), (_, rb) = next(results), next(results)
            spaces = MixedSpaces(build_unit_square(n))
            report.levels.append(n)
            report.diff_rho.append(
                l2_difference(FeField(spaces.rho_space, ra.rho), FeField(spaces.rho_space, rb.rho))
            )
            report.diff_m.append(
                l2_difference(FeField(spaces.m_space, ra.m), FeField(spaces.m_space, rb.m))
            )
            log.info("n=%d |rho1-rho2|=%.4e |m1-m2|=%.4e", n, report.diff_rho[-1], report.diff_m[-1])
    except NonConvergence as exc:
        raise StudyFailure(levels[len(report.levels)], exc, report) from exc
    return report
