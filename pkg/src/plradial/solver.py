"""Monotone successive approximation for coupled radial p-Laplacian systems.

Each component is advanced through the integral map

    T[u]_i(r) = beta + integral_0^r ( t^(1-N) integral_0^t s^(N-1)
                a_i(s) f_i(u_1(s), ..., u_m(s)) ds )^(1/(p-1)) dt

starting from the constant profile beta.  With nonnegative coefficients and
coordinatewise nondecreasing nonlinearities the iterates are nondecreasing in
both the iteration index and the radius, so the sup-norm of successive deltas
is a faithful Cauchy measure.  All m components are updated simultaneously
from the previous iterate.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .expressions import DomainError, Expression, evaluate
from .grid import GridFunction, RadialGrid, _cumtrapz, _weighted_mass

__all__ = [
    "ProblemSpec",
    "IterationConfig",
    "ProfileSet",
    "SolveReport",
    "NonFiniteValueError",
    "SandwichFailedError",
    "InternalConsistencyError",
    "picard_step",
    "solve_radial_system",
    "solve_auxiliary_scalar",
    "build_sandwich",
]

MONOTONE_SLACK = 1e-12


class NonFiniteValueError(Exception):
    """An iterate overflowed to inf or produced NaN."""

    def __init__(self, message: str, iteration: int | None = None):
        if iteration is not None:
            message = f"{message} (iteration {iteration})"
        super().__init__(message)
        self.iteration = iteration


class SandwichFailedError(Exception):
    """The bracketing construction found no bounded profile on this domain."""


class InternalConsistencyError(Exception):
    """A structural guarantee of the scheme failed; indicates a bug."""


@dataclass(frozen=True)
class ProblemSpec:
    """One instance of the system Delta_p u_j = a_j(r) f_j(u_1, ..., u_m).

    ``coefficients`` holds the radial coefficients (or the upper envelopes in
    bracketing mode, with the lower envelopes in ``coefficients_lower``);
    ``beta`` is the constant starting level of the iteration.
    """

    m: int
    p: float
    N: int
    coefficients: tuple[Expression, ...]
    nonlinearities: tuple[Expression, ...]
    beta: Optional[float] = None
    coefficients_lower: Optional[tuple[Expression, ...]] = None

    def __post_init__(self):
        object.__setattr__(self, "coefficients", tuple(self.coefficients))
        object.__setattr__(self, "nonlinearities", tuple(self.nonlinearities))
        if self.coefficients_lower is not None:
            object.__setattr__(
                self, "coefficients_lower", tuple(self.coefficients_lower)
            )
        if self.m < 1:
            raise ValueError("m must be at least 1")
        if self.beta is None:
            object.__setattr__(self, "beta", 1.0 / self.m)
        if not self.p > 1:
            raise ValueError("p must exceed 1")
        if not self.N - 1 >= self.p:
            raise ValueError("the dimension must satisfy N - 1 >= p")
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if len(self.coefficients) != self.m:
            raise ValueError(f"expected {self.m} coefficients")
        if len(self.nonlinearities) != self.m:
            raise ValueError(f"expected {self.m} nonlinearities")
        if self.coefficients_lower is not None and len(self.coefficients_lower) != self.m:
            raise ValueError(f"expected {self.m} lower coefficients")
        for c in self.coefficients + (self.coefficients_lower or ()):
            if len(c.variables) != 1:
                raise ValueError(
                    f"coefficient {c.source!r} must be declared over one radial variable"
                )
        wanted = tuple(f"u{i + 1}" for i in range(self.m))
        for f in self.nonlinearities:
            if tuple(f.variables) != wanted:
                raise ValueError(
                    f"nonlinearity {f.source!r} must be declared over u1..u{self.m}"
                )

    @property
    def component_names(self) -> tuple[str, ...]:
        return tuple(f"u{i + 1}" for i in range(self.m))


@dataclass(frozen=True)
class IterationConfig:
    max_iterations: int = 500
    abs_tol: float = 1e-10
    rel_tol: float = 1e-8
    value_cap: float = 1e12

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")
        if self.abs_tol <= 0 or self.rel_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.value_cap <= 0:
            raise ValueError("value_cap must be positive")


@dataclass(frozen=True, eq=False)
class ProfileSet:
    """m component profiles sampled on a shared grid (row i is u_{i+1})."""

    grid: RadialGrid
    profiles: np.ndarray

    def __post_init__(self):
        profiles = np.atleast_2d(np.asarray(self.profiles, dtype=float))
        if profiles.shape[-1] != self.grid.nodes.size:
            raise ValueError("profile length does not match the grid")
        profiles = profiles.copy()
        profiles.setflags(write=False)
        object.__setattr__(self, "profiles", profiles)

    @property
    def m(self) -> int:
        return int(self.profiles.shape[0])

    def component(self, i: int) -> GridFunction:
        return GridFunction(grid=self.grid, values=self.profiles[i])

    def check_solution_invariants(self, beta: float) -> None:
        """Profiles from the iteration are nondecreasing in r and >= beta."""
        if np.any(np.diff(self.profiles, axis=-1) < -MONOTONE_SLACK):
            raise InternalConsistencyError("profile decreases in r")
        if np.any(self.profiles < beta - MONOTONE_SLACK * (1.0 + beta)):
            raise InternalConsistencyError("profile fell below the starting level")


@dataclass
class SolveReport:
    iterations_used: int
    converged: bool
    sup_deltas: tuple[float, ...]
    final_residual: Optional[float]
    capped: bool
    monotone_in_k_violation: Optional[tuple] = None
    history: Optional[list] = field(default=None, repr=False)


def _coefficient_values(exprs, grid: RadialGrid) -> np.ndarray:
    rows = []
    for c in exprs:
        vals = np.broadcast_to(
            np.asarray(evaluate(c, {c.variables[0]: grid.nodes}), dtype=float),
            grid.nodes.shape,
        )
        if np.any(vals < -MONOTONE_SLACK):
            raise DomainError("coefficient evaluated negative", c.root)
        rows.append(vals)
    return np.array(rows)


def _nonlinearity_values(expr: Expression, bindings, n: int) -> np.ndarray:
    vals = np.broadcast_to(
        np.asarray(evaluate(expr, bindings), dtype=float), (n,)
    )
    if np.any(vals < -MONOTONE_SLACK * (1.0 + np.max(np.abs(vals)))):
        raise DomainError("nonlinearity evaluated negative along the iteration", expr.root)
    return vals


def _system_forcing(problem: ProblemSpec, coeff_values: np.ndarray) -> Callable:
    names = problem.component_names

    def forcing(profiles: np.ndarray) -> np.ndarray:
        bindings = {names[i]: profiles[i] for i in range(problem.m)}
        n = profiles.shape[-1]
        rows = [
            coeff_values[i]
            * _nonlinearity_values(problem.nonlinearities[i], bindings, n)
            for i in range(problem.m)
        ]
        return np.array(rows)

    return forcing


def _apply_step(
    grid: RadialGrid, p: float, N: int, beta: float, forcing_values: np.ndarray
) -> np.ndarray:
    inner = np.zeros_like(forcing_values)
    mass = _weighted_mass(grid.nodes, forcing_values, N, grid=grid)
    with np.errstate(over="ignore", invalid="ignore"):
        inner[..., 1:] = mass[..., 1:] / grid.powered_nodes(N - 1)[1:]
        # inner integrals of nonnegative integrands are analytically
        # nonnegative; clamp rounding noise before the fractional power
        slopes = np.power(np.maximum(inner, 0.0), 1.0 / (p - 1.0))
        return beta + _cumtrapz(grid.nodes, slopes)


def picard_step(
    problem: ProblemSpec, grid: RadialGrid, current: ProfileSet
) -> ProfileSet:
    """One pass of the integral map applied simultaneously to all components."""
    coeff_values = _coefficient_values(problem.coefficients, grid)
    forcing = _system_forcing(problem, coeff_values)
    new = _apply_step(grid, problem.p, problem.N, problem.beta, forcing(current.profiles))
    if not np.all(np.isfinite(new)):
        raise NonFiniteValueError("iterate overflowed")
    return ProfileSet(grid=grid, profiles=new)


def _iterate(
    grid: RadialGrid,
    p: float,
    N: int,
    beta: float,
    components: int,
    forcing: Callable,
    config: IterationConfig,
    keep_history: bool,
) -> tuple[np.ndarray, SolveReport]:
    profiles = np.full((components, grid.nodes.size), float(beta))
    history = [ProfileSet(grid=grid, profiles=profiles)] if keep_history else None
    sup_deltas: list[float] = []
    violation = None
    converged = False
    capped = False
    iterations = 0

    for k in range(1, config.max_iterations + 1):
        iterations = k
        try:
            new = _apply_step(grid, p, N, beta, forcing(profiles))
        except DomainError as err:
            err.iteration = k
            raise
        if not np.all(np.isfinite(new)):
            raise NonFiniteValueError("iterate overflowed", iteration=k)

        delta = float(np.max(np.abs(new - profiles)))
        sup_deltas.append(delta)
        if violation is None:
            drop = new - profiles + MONOTONE_SLACK * (1.0 + np.abs(profiles))
            if np.any(drop < 0):
                comp, node = map(int, np.argwhere(drop < 0)[0])
                violation = (k, comp, node, float(profiles[comp, node] - new[comp, node]))
        profiles = new
        if keep_history:
            history.append(ProfileSet(grid=grid, profiles=profiles))

        sup = float(np.max(profiles))
        if sup > config.value_cap:
            capped = True
            break
        if delta <= config.abs_tol + config.rel_tol * sup:
            converged = True
            break

    final_residual = None
    if converged:
        final_residual = float(np.max(np.abs(_apply_step(grid, p, N, beta, forcing(profiles)) - profiles)))

    report = SolveReport(
        iterations_used=iterations,
        converged=converged,
        sup_deltas=tuple(sup_deltas),
        final_residual=final_residual,
        capped=capped,
        monotone_in_k_violation=violation,
        history=history,
    )
    return profiles, report


def solve_radial_system(
    problem: ProblemSpec,
    grid: RadialGrid,
    config: IterationConfig | None = None,
    *,
    keep_history: bool = False,
) -> tuple[ProfileSet, SolveReport]:
    """Iterate the integral map from the constant-beta profile.

    Stops when the sup-norm delta falls under abs_tol + rel_tol * sup(u), when
    an iterate exceeds value_cap (capped, not converged), or at
    max_iterations.  On convergence, final_residual holds the sup-norm
    fixed-point defect of the returned profiles.
    """
    config = config or IterationConfig()
    if config.value_cap <= problem.beta:
        raise ValueError("value_cap must exceed beta")
    coeff_values = _coefficient_values(problem.coefficients, grid)
    forcing = _system_forcing(problem, coeff_values)
    profiles, report = _iterate(
        grid, problem.p, problem.N, problem.beta, problem.m, forcing, config, keep_history
    )
    result = ProfileSet(grid=grid, profiles=profiles)
    result.check_solution_invariants(problem.beta)
    return result, report


def solve_auxiliary_scalar(
    problem: ProblemSpec,
    grid: RadialGrid,
    config: IterationConfig | None = None,
    *,
    keep_history: bool = False,
) -> tuple[GridFunction, SolveReport]:
    """Solve the scalar comparison problem with summed coefficient and summed
    diagonal nonlinearity:

        Delta_p z = (sum_i a_i(r)) * (sum_i f_i(z, ..., z)).

    Its solution dominates every component of the system solve started from
    the same beta.
    """
    config = config or IterationConfig()
    if config.value_cap <= problem.beta:
        raise ValueError("value_cap must exceed beta")
    coeff_sum = _coefficient_values(problem.coefficients, grid).sum(axis=0)
    names = problem.component_names

    def forcing(profiles: np.ndarray) -> np.ndarray:
        z = profiles[0]
        bindings = {name: z for name in names}
        total = np.zeros_like(z)
        for f in problem.nonlinearities:
            total = total + _nonlinearity_values(f, bindings, z.size)
        return (coeff_sum * total)[None, :]

    profiles, report = _iterate(
        grid, problem.p, problem.N, problem.beta, 1, forcing, config, keep_history
    )
    return GridFunction(grid=grid, values=profiles[0]), report


def build_sandwich(
    problem: ProblemSpec,
    grid: RadialGrid,
    config: IterationConfig | None = None,
) -> tuple[ProfileSet, float, ProfileSet]:
    """Bracket a solution between a lower solve driven by the upper envelopes
    and an upper solve driven by the lower envelopes.

    The lower solve starts at 1/m; M is the sup over the grid of the summed
    lower profiles; the upper solve starts at M.  Guarantees
    min(upper_i) >= M >= max(lower_i) nodewise.
    """
    config = config or IterationConfig()
    if problem.coefficients_lower is None:
        raise ValueError("bracketing needs coefficients_lower")
    upper_env = _coefficient_values(problem.coefficients, grid)
    lower_env = _coefficient_values(problem.coefficients_lower, grid)
    if np.any(lower_env > upper_env + MONOTONE_SLACK * (1.0 + np.abs(upper_env))):
        raise ValueError("coefficients_lower must not exceed coefficients nodewise")

    lower_problem = dataclasses.replace(problem, beta=1.0 / problem.m)
    lower, lower_report = solve_radial_system(lower_problem, grid, config)
    if lower_report.capped:
        raise SandwichFailedError(
            "no bounded lower profile on this domain (value cap reached)"
        )
    if not lower_report.converged:
        raise SandwichFailedError(
            f"lower solve did not converge in {config.max_iterations} iterations"
        )

    M = float(np.max(lower.profiles.sum(axis=0)))

    upper_problem = dataclasses.replace(
        problem, coefficients=problem.coefficients_lower, coefficients_lower=None, beta=M
    )
    upper, upper_report = solve_radial_system(upper_problem, grid, config)
    if upper_report.capped:
        raise SandwichFailedError(
            "no bounded upper profile on this domain (value cap reached)"
        )
    if not upper_report.converged:
        raise SandwichFailedError(
            f"upper solve did not converge in {config.max_iterations} iterations"
        )

    if not (float(np.min(upper.profiles)) >= M >= float(np.max(lower.profiles))):
        raise InternalConsistencyError("bracket ordering violated")
    return lower, M, upper
