"""Command-line driver for the convergence and dependence studies.

Examples::

    forchflow convergence --example 1 --variant A --levels 4,8,16,32 --out t1a.csv
    forchflow dependence --example 1 --variants A,B --levels 4,8,16
    forchflow properties --seed 0
    forchflow consistency --example 2 --variant B
"""
from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .analysis import DtRule, StudyFailure, run_convergence, run_dependence
from .manufactured import POLY_A, POLY_B, consistency_check, get_case
from .properties import check_scalar_properties, check_vector_inequalities, random_polynomial
from .system import NewtonConfig

log = logging.getLogger("forchflow")


@dataclass(frozen=True)
class RunConfig:
    command: str
    example: int = 1
    variants: tuple[str, ...] = ("A",)
    levels: tuple[int, ...] = (4, 8, 16, 32)
    dt_rule: DtRule = DtRule()
    T: float = 1.0
    newton: NewtonConfig = NewtonConfig()
    out: Optional[str] = None
    seed: int = 0
    workers: int = 1
    random_polys: int = 20


def _levels(text: str) -> tuple[int, ...]:
    try:
        levels = tuple(int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated integer list: {text!r}")
    if not levels or any(n < 1 for n in levels):
        raise argparse.ArgumentTypeError("levels must be positive")
    if any(b <= a for a, b in zip(levels, levels[1:])):
        raise argparse.ArgumentTypeError(f"levels must be strictly increasing: {text!r}")
    return levels


def _variants(text: str) -> tuple[str, ...]:
    vs = tuple(v.strip().upper() for v in text.split(","))
    if any(v not in ("A", "B") for v in vs):
        raise argparse.ArgumentTypeError(f"variants must be A or B: {text!r}")
    return vs


def _dt_rule(text: str) -> DtRule:
    try:
        return DtRule.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc))


def _positive(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive: {text!r}")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="forchflow", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, variants_flag: str):
        p.add_argument("--example", type=int, choices=(1, 2), default=1)
        if variants_flag == "--variant":
            p.add_argument("--variant", dest="variants", type=_variants, default=("A",))
        else:
            p.add_argument("--variants", dest="variants", type=_variants, default=("A", "B"))

    for name in ("convergence", "dependence"):
        p = sub.add_parser(name, help=f"run the {name} study")
        common(p, "--variant" if name == "convergence" else "--variants")
        p.add_argument("--levels", type=_levels, default=(4, 8, 16, 32))
        p.add_argument("--dt", dest="dt_rule", type=_dt_rule, default=DtRule(),
                       help="proportional-to-h (dt = T/n) or fixed:<value>")
        p.add_argument("--T", type=_positive, default=1.0)
        p.add_argument("--newton-tol", type=_positive, default=1e-10)
        p.add_argument("--newton-maxit", type=int, default=30)
        p.add_argument("--out", default=None, help="CSV output path")
        p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("properties", help="sample the constitutive inequalities")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--random-polys", type=int, default=20)

    p = sub.add_parser("consistency", help="check a manufactured case against the PDE")
    common(p, "--variant")
    p.add_argument("--seed", type=int, default=0)
    return parser


def parse_args(argv: Optional[Sequence[str]] = None) -> RunConfig:
    ns = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(ns.verbose, 2), format="%(levelname)s %(name)s: %(message)s"
    )
    kw = dict(command=ns.command)
    if ns.command in ("convergence", "dependence", "consistency"):
        kw.update(example=ns.example, variants=ns.variants)
    if ns.command in ("convergence", "dependence"):
        if ns.command == "dependence" and len(ns.variants) != 2:
            build_parser().error("argument --variants: need exactly two variants, e.g. A,B")
        if ns.command == "convergence" and len(ns.variants) != 1:
            build_parser().error("argument --variant: need exactly one variant")
        kw.update(
            levels=ns.levels, dt_rule=ns.dt_rule, T=ns.T, out=ns.out, workers=ns.workers,
            newton=NewtonConfig(tol=ns.newton_tol, max_iter=ns.newton_maxit),
        )
    if ns.command in ("properties", "consistency"):
        kw["seed"] = ns.seed
    if ns.command == "properties":
        kw["random_polys"] = ns.random_polys
    return RunConfig(**kw)


def _fmt(v) -> str:
    return "" if v is None else f"{v:.5e}"


def write_csv(report, path: Optional[str]) -> str:
    buf = io.StringIO()
    for key, value in report.metadata.items():
        buf.write(f"# {key}: {value}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(report.columns)
    for n, e1, r1, e2, r2 in report.rows():
        writer.writerow([n, _fmt(e1), _fmt(r1), _fmt(e2), _fmt(r2)])
    text = buf.getvalue()
    if path:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text


def format_table(report, headers: tuple[str, str]) -> str:
    lines = [f"{'N':>5} | {headers[0]:>12} | {'Rates':>6} | {headers[1]:>12} | {'Rates':>6}"]
    lines.append("-" * len(lines[0]))
    for n, e1, r1, e2, r2 in report.rows():
        rr1 = "--" if r1 is None else f"{r1:.3f}"
        rr2 = "--" if r2 is None else f"{r2:.3f}"
        lines.append(f"{n:>5} | {e1:>12.3e} | {rr1:>6} | {e2:>12.3e} | {rr2:>6}")
    return "\n".join(lines)


def _with_T(case, T: float):
    from dataclasses import replace

    return case if case.T == T else replace(case, T=T)


def _run_study(config: RunConfig) -> int:
    cases = [_with_T(get_case(config.example, v), config.T) for v in config.variants]
    status = 0
    try:
        if config.command == "convergence":
            report = run_convergence(cases[0], config.levels, config.dt_rule, config.newton, config.workers)
        else:
            report = run_dependence(cases[0], cases[1], config.levels, config.dt_rule, config.newton, config.workers)
    except StudyFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        report, status = exc.report, 1
    headers = ("|rho-rho_h|", "|m-m_h|") if config.command == "convergence" else ("|rho1-rho2|", "|m1-m2|")
    write_csv(report, config.out)
    print(format_table(report, headers))
    return status


def _run_properties(config: RunConfig) -> int:
    rng = np.random.default_rng(config.seed)
    polys = [("g=1+s", POLY_A), ("g=1+0.95s", POLY_B)]
    polys += [(f"random#{i}", random_polynomial(rng)) for i in range(config.random_polys)]
    ok = True
    for label, poly in polys:
        checks = {**check_scalar_properties(poly), **check_vector_inequalities(poly, rng)}
        for name, (passed, worst) in checks.items():
            ok &= passed
            print(f"{'PASS' if passed else 'FAIL'}  {label:<11} {name:<32} worst={worst:.3e}")
    return 0 if ok else 1


def _run_consistency(config: RunConfig) -> int:
    case = get_case(config.example, config.variants[0])
    rep = consistency_check(case, samples=100, fd_step=1e-5, seed=config.seed)
    print(f"case {case.case_id}: max flux residual {rep.max_flux_residual:.3e}, "
          f"max continuity residual {rep.max_continuity_residual:.3e}")
    return 0


def run(config: RunConfig) -> int:
    if config.command in ("convergence", "dependence"):
        return _run_study(config)
    if config.command == "properties":
        return _run_properties(config)
    if config.command == "consistency":
        return _run_consistency(config)
    raise ValueError(f"unknown command {config.command!r}")


def main(argv: Optional[Sequence[str]] = None) -> int:
    return run(parse_args(argv))


if __name__ == "__main__":
    sys.exit(main())
