"""Independent checks on computed profiles: fixed-point and differential
residuals, iterate monotonicity, and bounded-vs-growing classification over
doubling domains."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .expressions import evaluate
from .grid import RadialGrid, make_grid
from .solver import (
    IterationConfig,
    ProblemSpec,
    ProfileSet,
    SolveReport,
    _coefficient_values,
    picard_step,
)

__all__ = [
    "ResidualReport",
    "GrowthReport",
    "fixed_point_residual",
    "check_monotone_in_k",
    "classify_growth",
]

SATURATION_REL_CHANGE = 1e-3
GROWTH_MIN_SLOPE = 0.2
SLOPE_STABILITY_BAND = 0.25


@dataclass(frozen=True)
class ResidualReport:
    sup_fixed_point_residual: float
    sup_ode_residual_interior: float
    node_of_max: int


@dataclass
class GrowthReport:
    """Sup values of independent solves on [0, R], [0, 2R], ... and the
    resulting growth classification."""

    domain_radii: tuple[float, ...]
    sup_values: tuple[float, ...]
    capped: tuple[bool, ...]
    slopes: tuple[float, ...]
    classification: str  # "Saturating" | "Growing" | "Inconclusive"
    exponent_estimate: Optional[float]
    reports: Optional[tuple[SolveReport, ...]] = field(default=None, repr=False)


def _derivatives(r: np.ndarray, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Central first and second derivatives on a possibly nonuniform grid,
    defined at the interior nodes 1..n-2."""
    hm = r[1:-1] - r[:-2]
    hp = r[2:] - r[1:-1]
    um, u0, up = u[..., :-2], u[..., 1:-1], u[..., 2:]
    d1 = (up * hm ** 2 + u0 * (hp ** 2 - hm ** 2) - um * hp ** 2) / (
        hm * hp * (hm + hp)
    )
    d2 = 2.0 * (up * hm - u0 * (hm + hp) + um * hp) / (hm * hp * (hm + hp))
    return d1, d2


def fixed_point_residual(
    problem: ProblemSpec, grid: RadialGrid, profiles: ProfileSet
) -> ResidualReport:
    """Sup-norm defect of the profiles under one more pass of the integral
    map, plus the differential residual

        (p-1) (u')^(p-2) u'' + ((N-1)/r) (u')^(p-1) - a_i f_i(u)

    at interior nodes (the first and last two nodes are excluded: r = 0 is a
    coordinate singularity and one-sided differences at r_max are first
    order).  Negative derivative estimates are differencing noise on a
    nondecreasing profile and are clamped at 0; for p < 2 the nodes where the
    clamped derivative vanishes are excluded."""
    mapped = picard_step(problem, grid, profiles)
    defect = np.abs(mapped.profiles - profiles.profiles)
    sup_fp = float(np.max(defect))
    node_of_max = int(np.argmax(np.max(defect, axis=0)))

    r = grid.nodes
    p, N = problem.p, problem.N
    d1, d2 = _derivatives(r, profiles.profiles)
    d1 = np.maximum(d1, 0.0)
    coeff = _coefficient_values(problem.coefficients, grid)[:, 1:-1]
    names = problem.component_names
    bindings = {names[i]: profiles.profiles[i] for i in range(problem.m)}
    n = r.size
    sup_ode = 0.0
    for i in range(problem.m):
        f_vals = np.broadcast_to(
            np.asarray(evaluate(problem.nonlinearities[i], bindings), dtype=float),
            (n,),
        )[1:-1]
        with np.errstate(divide="ignore", invalid="ignore"):
            res = (
                (p - 1.0) * np.power(d1[i], p - 2.0) * d2[i]
                + (N - 1.0) / r[1:-1] * np.power(d1[i], p - 1.0)
                - coeff[i] * f_vals
            )
        res = res[1:-1]  # drop the second node at each end as well
        if p < 2.0:
            res = res[d1[i][1:-1] > 0.0]
        if res.size:
            sup_ode = max(sup_ode, float(np.max(np.abs(res))))

    return ResidualReport(
        sup_fixed_point_residual=sup_fp,
        sup_ode_residual_interior=sup_ode,
        node_of_max=node_of_max,
    )


def check_monotone_in_k(history: list[ProfileSet]) -> Optional[tuple]:
    """First (iteration, component, node, magnitude) where an iterate dropped
    below its predecessor beyond rounding slack, or None."""
    for k in range(1, len(history)):
        prev = history[k - 1].profiles
        new = history[k].profiles
        drop = new - prev + 1e-12 * (1.0 + np.abs(prev))
        if np.any(drop < 0):
            comp, node = map(int, np.argwhere(drop < 0)[0])
            return (k, comp, node, float(prev[comp, node] - new[comp, node]))
    return None


def classify_growth(
    problem: ProblemSpec,
    base_R: float,
    doublings: int,
    config: IterationConfig | None = None,
    *,
    base_points: int = 2001,
    keep_history: bool = False,
    max_total_points: int = 1_000_001,
) -> GrowthReport:
    """Solve on [0, R], [0, 2R], ..., [0, 2^doublings R] and classify the sup
    values: Saturating when the last doubling changes the sup by less than
    0.1% relative, Growing when the log-log slope stabilizes above 0.2, else
    Inconclusive.  The grid spacing is held fixed across radii, so larger
    domains extend the same discrete solution.  A solve that hits the value
    cap short-circuits the classification to Growing with an infinite
    exponent surrogate, and its recorded sup is clipped at the cap."""
    if doublings < 2:
        raise ValueError("doublings must be at least 2")
    if base_R <= 0:
        raise ValueError("base_R must be positive")
    config = config or IterationConfig()

    radii = [base_R * 2 ** k for k in range(doublings + 1)]
    points = [(base_points - 1) * 2 ** k + 1 for k in range(doublings + 1)]
    if points[-1] > max_total_points:
        raise ValueError(
            f"finest sweep grid would need {points[-1]} nodes; "
            "reduce base_points or doublings"
        )

    # local import: solver must not depend on this module
    from .solver import solve_radial_system

    def run(k: int):
        grid = make_grid(radii[k], points[k])
        return solve_radial_system(problem, grid, config, keep_history=keep_history)

    with ThreadPoolExecutor(max_workers=min(4, doublings + 1)) as pool:
        results = list(pool.map(run, range(doublings + 1)))

    sups = []
    capped = []
    reports = []
    for profiles, report in results:
        capped.append(report.capped)
        reports.append(report)
        sup = float(np.max(profiles.profiles))
        sups.append(min(sup, config.value_cap) if report.capped else sup)

    slopes = tuple(
        float(np.log2(b / a)) for a, b in zip(sups, sups[1:]) if a > 0 and b > 0
    )

    if any(capped):
        classification, exponent = "Growing", np.inf
    elif (sups[-1] - sups[-2]) / max(sups[-2], 1e-300) < SATURATION_REL_CHANGE:
        classification, exponent = "Saturating", None
    elif (
        len(slopes) >= 2
        and slopes[-1] > GROWTH_MIN_SLOPE
        and abs(slopes[-1] - slopes[-2]) <= SLOPE_STABILITY_BAND
    ):
        classification, exponent = "Growing", slopes[-1]
    else:
        classification, exponent = "Inconclusive", None

    return GrowthReport(
        domain_radii=tuple(radii),
        sup_values=tuple(sups),
        capped=tuple(capped),
        slopes=slopes,
        classification=classification,
        exponent_estimate=exponent,
        reports=tuple(reports),
    )
