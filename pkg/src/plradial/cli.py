"""Problem-file ingestion, subcommand dispatch, and report emission.

Problems are JSON documents; reports are JSON with every float rendered at 17
significant digits and profiles are CSV, so identical inputs produce
byte-identical outputs.  Exit codes partition outcomes: 0 success, 2 schema
violation, 3 expression error, 4 non-convergence or overflow, 5 evaluation
domain error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .criteria import CriteriaReport, Verdict, WeightMonotonicity, predict
from .expressions import (
    ArityError,
    DomainError,
    Expression,
    ExpressionSyntaxError,
    UnknownIdentifierError,
    parse,
    validate_nonlinearity,
)
from .grid import RadialGrid, make_grid
from .solver import (
    IterationConfig,
    NonFiniteValueError,
    ProblemSpec,
    ProfileSet,
    SolveReport,
    solve_radial_system,
)
from .verify import GrowthReport, ResidualReport, classify_growth, fixed_point_residual

EXIT_OK = 0
EXIT_SCHEMA = 2
EXIT_EXPRESSION = 3
EXIT_NOT_CONVERGED = 4
EXIT_DOMAIN = 5

_TOP_LEVEL_KEYS = {
    "m",
    "p",
    "N",
    "beta",
    "coefficients",
    "coefficients_lower",
    "nonlinearities",
    "grid",
    "epsilon",
    "iteration",
}
_ITERATION_DEFAULTS = {
    "max_iterations": 500,
    "abs_tol": 1e-10,
    "rel_tol": 1e-8,
    "value_cap": 1e12,
}


class ProblemFileError(Exception):
    """Schema violation; carries the path of the offending key."""

    def __init__(self, key_path: str, message: str):
        super().__init__(f"{key_path}: {message}")
        self.key_path = key_path


class ProblemExpressionError(Exception):
    """An expression inside the problem file failed to parse."""


@dataclass
class LoadedProblem:
    problem: ProblemSpec
    grid: RadialGrid
    config: IterationConfig
    epsilon: float
    warnings: list[str]
    raw: dict


def _require(doc: dict, key: str, path: str):
    if key not in doc:
        raise ProblemFileError(f"{path}{key}", "missing required key")
    return doc[key]


def _as_int(value, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ProblemFileError(path, f"expected an integer, got {value!r}")
    return value


def _as_number(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ProblemFileError(path, f"expected a number, got {value!r}")
    return float(value)


def _as_expr_list(value, m: int, variables: list[str], path: str) -> tuple[Expression, ...]:
    if not isinstance(value, list) or len(value) != m:
        raise ProblemFileError(path, f"expected an array of {m} strings")
    out = []
    for i, src in enumerate(value):
        if not isinstance(src, str):
            raise ProblemFileError(f"{path}[{i}]", "expected a string expression")
        try:
            out.append(parse(src, variables))
        except (ExpressionSyntaxError, UnknownIdentifierError, ArityError) as err:
            raise ProblemExpressionError(f"{path}[{i}]: {err}") from None
    return tuple(out)


def load_problem(path: str | Path) -> LoadedProblem:
    """Parse and validate a problem file; structural warnings (origin value,
    positivity, monotonicity of the nonlinearities) do not abort."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise ProblemFileError(str(path), "file not found") from None
    except json.JSONDecodeError as err:
        raise ProblemFileError(str(path), f"not valid JSON ({err})") from None
    if not isinstance(doc, dict):
        raise ProblemFileError(str(path), "top level must be a JSON object")
    unknown = set(doc) - _TOP_LEVEL_KEYS
    if unknown:
        raise ProblemFileError(sorted(unknown)[0], "unknown key")

    m = _as_int(_require(doc, "m", ""), "m")
    if m < 1:
        raise ProblemFileError("m", "must be at least 1")
    p = _as_number(_require(doc, "p", ""), "p")
    N = _as_int(_require(doc, "N", ""), "N")
    if not p > 1:
        raise ProblemFileError("p", "must exceed 1")
    if not N - 1 >= p:
        raise ProblemFileError("N", f"must satisfy N - 1 >= p (got N={N}, p={p:g})")
    beta = _as_number(doc.get("beta", 1.0 / m), "beta")
    if beta <= 0:
        raise ProblemFileError("beta", "must be positive")

    u_names = [f"u{i + 1}" for i in range(m)]
    coefficients = _as_expr_list(_require(doc, "coefficients", ""), m, ["r"], "coefficients")
    lower = None
    if doc.get("coefficients_lower") is not None:
        lower = _as_expr_list(doc["coefficients_lower"], m, ["r"], "coefficients_lower")
    nonlinearities = _as_expr_list(
        _require(doc, "nonlinearities", ""), m, u_names, "nonlinearities"
    )

    grid_doc = _require(doc, "grid", "")
    if not isinstance(grid_doc, dict):
        raise ProblemFileError("grid", "expected an object")
    r_max = _as_number(_require(grid_doc, "r_max", "grid."), "grid.r_max")
    points = _as_int(_require(grid_doc, "points", "grid."), "grid.points")
    grading_doc = grid_doc.get("grading", "uniform")
    if grading_doc == "uniform":
        grading, ratio = "uniform", None
    elif isinstance(grading_doc, dict) and set(grading_doc) == {"geometric"}:
        grading = "geometric"
        ratio = _as_number(grading_doc["geometric"], "grid.grading.geometric")
    else:
        raise ProblemFileError("grid.grading", 'expected "uniform" or {"geometric": ratio}')
    try:
        grid = make_grid(r_max, points, grading, ratio)
    except ValueError as err:
        raise ProblemFileError("grid", str(err)) from None

    epsilon = _as_number(doc.get("epsilon", 0.5), "epsilon")
    if epsilon <= 0:
        raise ProblemFileError("epsilon", "must be positive")

    iter_doc = doc.get("iteration", {})
    if not isinstance(iter_doc, dict):
        raise ProblemFileError("iteration", "expected an object")
    unknown = set(iter_doc) - set(_ITERATION_DEFAULTS)
    if unknown:
        raise ProblemFileError(f"iteration.{sorted(unknown)[0]}", "unknown key")
    merged = dict(_ITERATION_DEFAULTS)
    merged.update(iter_doc)
    try:
        config = IterationConfig(
            max_iterations=_as_int(merged["max_iterations"], "iteration.max_iterations"),
            abs_tol=_as_number(merged["abs_tol"], "iteration.abs_tol"),
            rel_tol=_as_number(merged["rel_tol"], "iteration.rel_tol"),
            value_cap=_as_number(merged["value_cap"], "iteration.value_cap"),
        )
    except ValueError as err:
        raise ProblemFileError("iteration", str(err)) from None

    try:
        problem = ProblemSpec(
            m=m,
            p=p,
            N=N,
            coefficients=coefficients,
            nonlinearities=nonlinearities,
            beta=beta,
            coefficients_lower=lower,
        )
    except ValueError as err:
        raise ProblemFileError("problem", str(err)) from None

    warnings: list[str] = []
    try:
        report = validate_nonlinearity(nonlinearities, m, domain_cap=10.0, samples_per_axis=9)
        if not report.f_zero_at_origin:
            values = ", ".join(f"{v:.3g}" for v in report.origin_values)
            warnings.append(f"nonlinearities do not vanish at the origin (values {values})")
        if report.positivity_violations:
            warnings.append(
                f"nonlinearity sampled negative at "
                f"{len(report.positivity_violations)} lattice points"
            )
        if report.monotonicity_violations:
            warnings.append(
                f"nonlinearity decreases along a coordinate at "
                f"{len(report.monotonicity_violations)} sampled pairs"
            )
    except DomainError as err:
        warnings.append(f"could not sample the nonlinearities: {err}")

    if lower is not None:
        from .expressions import evaluate

        upper_vals = np.array(
            [evaluate(c, {c.variables[0]: grid.nodes}) for c in coefficients]
        )
        lower_vals = np.array(
            [evaluate(c, {c.variables[0]: grid.nodes}) for c in lower]
        )
        if np.any(lower_vals > upper_vals + 1e-12 * (1.0 + np.abs(upper_vals))):
            raise ProblemFileError(
                "coefficients_lower", "exceeds coefficients at some grid node"
            )

    return LoadedProblem(
        problem=problem,
        grid=grid,
        config=config,
        epsilon=epsilon,
        warnings=warnings,
        raw=doc,
    )


# ---------------------------------------------------------------------------
# deterministic serialization

def _float_token(x: float) -> str:
    if np.isnan(x):
        return '"nan"'
    if np.isinf(x):
        return '"inf"' if x > 0 else '"-inf"'
    return format(float(x), ".17g")


def format_json(value, indent: int = 0) -> str:
    """Render JSON with every float at 17 significant digits; non-finite
    floats become the strings "inf"/"-inf"/"nan"."""
    pad = "  " * indent
    inner = "  " * (indent + 1)
    if isinstance(value, dict):
        if not value:
            return "{}"
        items = [
            f"{inner}{json.dumps(str(k))}: {format_json(v, indent + 1)}"
            for k, v in value.items()
        ]
        return "{\n" + ",\n".join(items) + f"\n{pad}}}"
    if isinstance(value, (list, tuple)):
        if not value:
            return "[]"
        items = [f"{inner}{format_json(v, indent + 1)}" for v in value]
        return "[\n" + ",\n".join(items) + f"\n{pad}]"
    if isinstance(value, bool):
        return "true" if value else "false"
    if value is None:
        return "null"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return _float_token(float(value))
    return json.dumps(value)


def _verdict_dict(v: Verdict) -> dict:
    return {
        "kind": v.kind,
        "tail_exponent_estimate": v.tail_exponent_estimate,
        "window_increments": list(v.window_increments),
        "evidence_range": list(v.evidence_range),
        "decided_by": v.decided_by,
    }


def _weight_dict(w: WeightMonotonicity) -> dict:
    return {"kind": w.kind, "radius": w.radius}


def _criteria_dict(report: CriteriaReport) -> dict:
    return {
        "epsilon": report.epsilon,
        "radial": report.radial,
        "degenerate_coefficients": report.degenerate_coefficients,
        "keller_osserman": _verdict_dict(report.keller_osserman),
        "existence_decay": _verdict_dict(report.existence_decay),
        "nonexistence_mass": _verdict_dict(report.nonexistence_mass),
        "largeness_forcing": [_verdict_dict(v) for v in report.largeness_forcing],
        "largeness_necessary": _verdict_dict(report.largeness_necessary),
        "weight_monotone": _weight_dict(report.weight_monotone),
        "prediction": report.prediction,
        "prediction_details": report.prediction_details,
    }


def _solve_dict(report: SolveReport) -> dict:
    violation = report.monotone_in_k_violation
    return {
        "iterations_used": report.iterations_used,
        "converged": report.converged,
        "capped": report.capped,
        "final_residual": report.final_residual,
        "sup_deltas": list(report.sup_deltas),
        "monotone_in_k_violation": (
            None
            if violation is None
            else {
                "iteration": violation[0],
                "component": violation[1],
                "node": violation[2],
                "magnitude": violation[3],
            }
        ),
    }


def _residual_dict(report: ResidualReport) -> dict:
    return {
        "sup_fixed_point_residual": report.sup_fixed_point_residual,
        "sup_ode_residual_interior": report.sup_ode_residual_interior,
        "node_of_max": report.node_of_max,
    }


def _growth_dict(report: GrowthReport) -> dict:
    return {
        "domain_radii": list(report.domain_radii),
        "sup_values": list(report.sup_values),
        "capped": list(report.capped),
        "slopes": list(report.slopes),
        "classification": report.classification,
        "exponent_estimate": report.exponent_estimate,
    }


def _write_report(out_dir: Path, sections: dict) -> Path:
    report = {"version": __version__, **sections}
    path = out_dir / "report.json"
    path.write_text(format_json(report) + "\n", encoding="utf-8")
    return path


def _write_profiles(out_dir: Path, profiles: ProfileSet) -> Path:
    m = profiles.m
    header = "r," + ",".join(f"u{i + 1}" for i in range(m))
    lines = [header]
    nodes = profiles.grid.nodes
    data = profiles.profiles
    for k in range(nodes.size):
        row = [format(nodes[k], ".17g")]
        row.extend(format(data[i, k], ".17g") for i in range(m))
        lines.append(",".join(row))
    path = out_dir / "profiles.csv"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def _emit_warnings(loaded: LoadedProblem) -> None:
    for w in loaded.warnings:
        print(f"warning: {w}", file=sys.stderr)


def _apply_overrides(args, loaded: LoadedProblem) -> LoadedProblem:
    grid = loaded.grid
    if args.r_max is not None or args.grid_points is not None:
        grid = make_grid(
            args.r_max if args.r_max is not None else grid.r_max,
            args.grid_points if args.grid_points is not None else len(grid),
            grid.grading,
            grid.ratio,
        )
    config = loaded.config
    changes = {}
    if getattr(args, "max_iter", None) is not None:
        changes["max_iterations"] = args.max_iter
    if getattr(args, "tol", None) is not None:
        changes["abs_tol"] = args.tol
    if changes:
        config = IterationConfig(
            max_iterations=changes.get("max_iterations", config.max_iterations),
            abs_tol=changes.get("abs_tol", config.abs_tol),
            rel_tol=config.rel_tol,
            value_cap=config.value_cap,
        )
    epsilon = args.epsilon if getattr(args, "epsilon", None) is not None else loaded.epsilon
    return LoadedProblem(
        problem=loaded.problem,
        grid=grid,
        config=config,
        epsilon=epsilon,
        warnings=loaded.warnings,
        raw=loaded.raw,
    )


# ---------------------------------------------------------------------------
# subcommands

def run_solve(args) -> int:
    loaded = _apply_overrides(args, load_problem(args.problem))
    _emit_warnings(loaded)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    profiles, report = solve_radial_system(loaded.problem, loaded.grid, loaded.config)
    residuals = fixed_point_residual(loaded.problem, loaded.grid, profiles)
    _write_profiles(out_dir, profiles)
    _write_report(
        out_dir,
        {
            "problem": loaded.raw,
            "solve": _solve_dict(report),
            "residuals": _residual_dict(residuals),
        },
    )
    if report.converged:
        print(
            f"converged in {report.iterations_used} iterations; "
            f"sup residual {residuals.sup_fixed_point_residual:.3e}; "
            f"wrote {out_dir / 'profiles.csv'}"
        )
        return EXIT_OK
    reason = "value cap reached" if report.capped else "iteration budget exhausted"
    print(f"did not converge ({reason}); wrote {out_dir / 'profiles.csv'}")
    return EXIT_NOT_CONVERGED


def run_predict(args) -> int:
    loaded = _apply_overrides(args, load_problem(args.problem))
    _emit_warnings(loaded)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    report = predict(loaded.problem, loaded.epsilon)
    sections = {"problem": loaded.raw, "criteria": _criteria_dict(report)}
    if args.epsilon_scan:
        sections["criteria_scan"] = [
            _criteria_dict(predict(loaded.problem, eps))
            for eps in (0.01, 0.1, 0.5, 1.0)
        ]
    _write_report(out_dir, sections)
    print(f"prediction: {report.prediction} ({report.prediction_details})")
    return EXIT_OK


def run_sweep(args) -> int:
    loaded = _apply_overrides(args, load_problem(args.problem))
    _emit_warnings(loaded)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    base_points = args.grid_points if args.grid_points is not None else 2001
    growth = classify_growth(
        loaded.problem,
        args.base_r,
        args.doublings,
        loaded.config,
        base_points=base_points,
    )
    _write_report(out_dir, {"problem": loaded.raw, "growth": _growth_dict(growth)})
    if growth.classification == "Growing":
        exponent = growth.exponent_estimate
        tag = "unbounded" if exponent is None or np.isinf(exponent) else f"{exponent:.4g}"
        print(f"growth: Growing (exponent {tag})")
    else:
        print(f"growth: {growth.classification}")
    failed = [
        r
        for r, rep in zip(growth.domain_radii, growth.reports or ())
        if not rep.converged and not rep.capped
    ]
    if failed:
        print(f"solves on radii {failed} exhausted the iteration budget", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def run_verify(args) -> int:
    loaded = _apply_overrides(args, load_problem(args.problem))
    _emit_warnings(loaded)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    try:
        table = np.loadtxt(args.profiles, delimiter=",", skiprows=1, ndmin=2)
    except (OSError, ValueError) as err:
        raise ProblemFileError(str(args.profiles), f"unreadable profiles CSV ({err})") from None
    if table.shape[1] != loaded.problem.m + 1:
        raise ProblemFileError(
            str(args.profiles),
            f"expected {loaded.problem.m + 1} columns, found {table.shape[1]}",
        )
    try:
        grid = RadialGrid(nodes=table[:, 0])
        profiles = ProfileSet(grid=grid, profiles=table[:, 1:].T)
    except ValueError as err:
        raise ProblemFileError(str(args.profiles), str(err)) from None
    residuals = fixed_point_residual(loaded.problem, grid, profiles)
    _write_report(
        out_dir, {"problem": loaded.raw, "residuals": _residual_dict(residuals)}
    )
    print(
        f"sup fixed-point residual {residuals.sup_fixed_point_residual:.3e}; "
        f"sup interior differential residual {residuals.sup_ode_residual_interior:.3e}"
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plradial",
        description=(
            "Solve coupled radial p-Laplacian systems by monotone successive "
            "approximation and classify existence / largeness criteria."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--problem", required=True, help="problem JSON file")
        sp.add_argument("--out", default=".", help="output directory")
        sp.add_argument("--grid-points", type=int, default=None)
        sp.add_argument("--r-max", type=float, default=None)
        sp.add_argument("--max-iter", type=int, default=None)
        sp.add_argument("--tol", type=float, default=None, help="absolute tolerance")
        sp.add_argument("--epsilon", type=float, default=None)

    sp = sub.add_parser("solve", help="solve and write profiles.csv + report.json")
    common(sp)
    sp.set_defaults(func=run_solve)

    sp = sub.add_parser("predict", help="classify every criterion and predict")
    common(sp)
    sp.add_argument("--epsilon-scan", action="store_true")
    sp.set_defaults(func=run_predict)

    sp = sub.add_parser("sweep", help="solve on doubling domains and classify growth")
    common(sp)
    sp.add_argument("--base-r", type=float, required=True)
    sp.add_argument("--doublings", type=int, required=True)
    sp.set_defaults(func=run_sweep)

    sp = sub.add_parser("verify", help="residuals of a stored profile CSV")
    common(sp)
    sp.add_argument("--profiles", required=True, help="profiles CSV to verify")
    sp.set_defaults(func=run_verify)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ProblemFileError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_SCHEMA
    except (
        ProblemExpressionError,
        ExpressionSyntaxError,
        UnknownIdentifierError,
        ArityError,
    ) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_EXPRESSION
    except DomainError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_DOMAIN
    except NonFiniteValueError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_NOT_CONVERGED


if __name__ == "__main__":
    sys.exit(main())
