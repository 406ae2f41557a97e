"""Finite-vs-infinite classification of the tail integrals that decide
existence, non-existence, and largeness of radial solutions.

Every condition reduces to the same question: does an improper integral of a
nonnegative integrand converge?  The shared engine fits the tail exponent of
the integrand over geometrically growing windows and, inside the ambiguous
band around exponent -1, falls back to comparing partial integrals over
doubling windows.  Integrals are classified, never computed: the decision
table only consumes the dichotomy.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy.integrate import trapezoid

from .expressions import DomainError, Expression, evaluate
from .grid import RadialGrid, _cumtrapz, _weighted_mass, make_grid
from .solver import ProblemSpec

__all__ = [
    "Verdict",
    "WeightMonotonicity",
    "CriteriaReport",
    "NonPositiveIntegrandError",
    "classify_improper_integral",
    "check_keller_osserman",
    "check_sum_reciprocal_integral",
    "check_existence_decay",
    "check_nonexistence_mass",
    "check_largeness_forcing",
    "check_largeness_necessary",
    "check_weight_monotonicity",
    "predict",
]

CONVERGES = "ConvergesFinite"
DIVERGES = "Diverges"
INCONCLUSIVE = "Inconclusive"

SLOPE_MARGIN = 0.05
WINDOW_DECAY_RATIO = 0.9
_LADDER_OCTAVES = 21
_NEGATIVE_TOLERANCE = 1e-12

_MASTER_OCT_LO = -27
_MASTER_OCT_HI = 22
_MASTER_PER_OCT = 64
_master_cache: dict = {}

Integrand = Union[Expression, Callable[[np.ndarray], np.ndarray]]


class NonPositiveIntegrandError(Exception):
    """The integrand went negative beyond rounding noise."""


@dataclass(frozen=True)
class Verdict:
    """Outcome of one tail classification.

    window_increments holds the partial integrals over the trailing doubling
    windows; decided_by records which stage settled the verdict ("slope",
    "windows", "zero-tail", or "unbounded").
    """

    kind: str
    tail_exponent_estimate: float
    window_increments: tuple[float, ...]
    evidence_range: tuple[float, float]
    decided_by: str

    @property
    def converges(self) -> bool:
        return self.kind == CONVERGES

    @property
    def diverges(self) -> bool:
        return self.kind == DIVERGES


@dataclass(frozen=True)
class WeightMonotonicity:
    kind: str  # "FromRadius" | "NotEventuallyMonotone"
    radius: Optional[float]

    @property
    def eventually_monotone(self) -> bool:
        return self.kind == "FromRadius"


def _as_callable(integrand: Integrand) -> Callable[[np.ndarray], np.ndarray]:
    if isinstance(integrand, Expression):
        name = integrand.variables[0]

        def call(t: np.ndarray) -> np.ndarray:
            return np.broadcast_to(
                np.asarray(evaluate(integrand, {name: t}), dtype=float), t.shape
            )

        return call
    return integrand


def classify_improper_integral(
    integrand: Integrand, t_lo: float, samples: int = 32
) -> Verdict:
    """Decide whether the integral of a nonnegative integrand over
    [t_lo, infinity) is finite.

    `samples` is the number of sample points per doubling of t.  Stage 1 fits
    least-squares slopes of log h vs log t over the last three [T, 4T]
    windows; a slope band of +-0.05 around -1 falls through to stage 2, which
    compares partial integrals over doubling windows (geometric decay means
    convergence, non-decreasing increments mean divergence).
    """
    if t_lo <= 0:
        raise ValueError("t_lo must be positive")
    if samples < 8:
        raise ValueError("samples must be at least 8 per octave")
    h = _as_callable(integrand)
    t0 = max(float(t_lo), 1.0)
    grid_exponents = np.arange(_LADDER_OCTAVES * samples + 1) / samples
    t = t0 * np.exp2(grid_exponents)
    with np.errstate(over="ignore", under="ignore", invalid="ignore", divide="ignore"):
        values = np.broadcast_to(np.asarray(h(t), dtype=float), t.shape).copy()
    if np.any(np.isnan(values)):
        raise ValueError("integrand produced NaN on the sample ladder")
    if float(np.min(values)) < -_NEGATIVE_TOLERANCE:
        raise NonPositiveIntegrandError(
            f"integrand sampled negative (min {float(np.min(values)):.3e})"
        )
    values = np.maximum(values, 0.0)

    if np.any(np.isinf(values)):
        first = int(np.argmax(np.isinf(values)))
        return Verdict(
            kind=DIVERGES,
            tail_exponent_estimate=np.inf,
            window_increments=(),
            evidence_range=(t0, float(t[first])),
            decided_by="unbounded",
        )

    positive = values > 0.0
    if not positive.any():
        return Verdict(
            kind=CONVERGES,
            tail_exponent_estimate=-np.inf,
            window_increments=(),
            evidence_range=(t0, float(t[-1])),
            decided_by="zero-tail",
        )
    last_positive = int(np.nonzero(positive)[0][-1])
    full_octaves = last_positive // samples
    if full_octaves <= _LADDER_OCTAVES - 2 and last_positive < values.size - 1:
        # the integrand vanishes identically beyond a finite radius
        if full_octaves < 4:
            return Verdict(
                kind=CONVERGES,
                tail_exponent_estimate=-np.inf,
                window_increments=(),
                evidence_range=(t0, float(t[-1])),
                decided_by="zero-tail",
            )

    log_t = np.log(t)
    with np.errstate(divide="ignore"):
        log_h = np.where(positive, np.log(np.where(positive, values, 1.0)), -np.inf)

    def window_slope(oct_start: int, oct_stop: int) -> float | None:
        lo = oct_start * samples
        hi = oct_stop * samples + 1
        mask = positive[lo:hi]
        if int(mask.sum()) < 4:
            return None
        return float(np.polyfit(log_t[lo:hi][mask], log_h[lo:hi][mask], 1)[0])

    slopes = []
    for back in (6, 4, 2):
        start = full_octaves - back
        if start < 0:
            continue
        s = window_slope(start, start + 2)
        if s is not None:
            slopes.append(s)
    exponent = slopes[-1] if slopes else np.nan

    first_octave = max(full_octaves - 8, 0)
    increments = []
    for k in range(first_octave, full_octaves):
        lo, hi = k * samples, (k + 1) * samples + 1
        increments.append(float(trapezoid(values[lo:hi], t[lo:hi])))
    increments = tuple(increments)
    evidence = (float(t[first_octave * samples]), float(t[full_octaves * samples]))

    if len(slopes) == 3:
        if max(slopes) <= -1.0 - SLOPE_MARGIN:
            return Verdict(CONVERGES, exponent, increments, evidence, "slope")
        if min(slopes) >= -1.0 + SLOPE_MARGIN:
            return Verdict(DIVERGES, exponent, increments, evidence, "slope")

    tail = increments[-6:]
    if len(tail) >= 3 and all(i > 0 for i in tail):
        ratios = [b / a for a, b in zip(tail, tail[1:])]
        if all(r <= WINDOW_DECAY_RATIO for r in ratios):
            return Verdict(CONVERGES, exponent, increments, evidence, "windows")
        if all(r >= 1.0 - 1e-6 for r in ratios):
            return Verdict(DIVERGES, exponent, increments, evidence, "windows")
    return Verdict(INCONCLUSIVE, exponent, increments, evidence, "windows")


# ---------------------------------------------------------------------------
# shared master grid for integrands that are themselves integrals

def _master_nodes() -> np.ndarray:
    nodes = _master_cache.get("nodes")
    if nodes is None:
        exponents = np.arange(
            _MASTER_OCT_LO * _MASTER_PER_OCT, _MASTER_OCT_HI * _MASTER_PER_OCT + 1
        ) / _MASTER_PER_OCT
        nodes = np.concatenate(([0.0], np.exp2(exponents)))
        nodes.setflags(write=False)
        _master_cache["nodes"] = nodes
    return nodes


def _sum_on(exprs: Sequence[Expression], t: np.ndarray) -> np.ndarray:
    total = np.zeros(t.shape)
    for e in exprs:
        total = total + np.broadcast_to(
            np.asarray(evaluate(e, {e.variables[0]: t}), dtype=float), t.shape
        )
    return total


def _diagonal_sum(
    nonlinearities: Sequence[Expression], m: int, s: np.ndarray
) -> np.ndarray:
    total = np.zeros(s.shape)
    for f in nonlinearities:
        bindings = {f"u{i + 1}": s for i in range(m)}
        total = total + np.broadcast_to(
            np.asarray(evaluate(f, bindings), dtype=float), s.shape
        )
    return total


# ---------------------------------------------------------------------------
# individual conditions

def check_keller_osserman(
    nonlinearities: Sequence[Expression],
    m: int,
    p: float,
    component: int | None = None,
) -> Verdict:
    """Classify the reciprocal-growth integral of the nonlinearities:
    with F(s) the antiderivative of the summed diagonal nonlinearity,
    decide whether integral_1^inf F(s)^(-1/p) ds is finite.

    Diverges means the slow-growth hypothesis on the nonlinearities HOLDS.
    With `component` set, only that nonlinearity feeds F.
    """
    nodes = _master_nodes()
    chosen = (
        list(nonlinearities) if component is None else [nonlinearities[component]]
    )
    diag = _diagonal_sum(chosen, m, nodes)
    if np.any(diag < -_NEGATIVE_TOLERANCE):
        raise NonPositiveIntegrandError("nonlinearity sampled negative on the diagonal")
    F = _cumtrapz(nodes, np.maximum(diag, 0.0))

    def integrand(t: np.ndarray) -> np.ndarray:
        Ft = np.interp(t, nodes, F)
        with np.errstate(divide="ignore"):
            return np.power(Ft, -1.0 / p)

    return classify_improper_integral(integrand, t_lo=1.0)


def check_sum_reciprocal_integral(
    nonlinearities: Sequence[Expression], m: int, p: float
) -> Verdict:
    """Classify integral_1^inf (sum_i f_i(s, ..., s))^(-1/(p-1)) ds."""
    nodes = _master_nodes()
    diag = np.maximum(_diagonal_sum(nonlinearities, m, nodes), 0.0)

    def integrand(t: np.ndarray) -> np.ndarray:
        vals = np.interp(t, nodes, diag)
        with np.errstate(divide="ignore"):
            return np.power(vals, -1.0 / (p - 1.0))

    return classify_improper_integral(integrand, t_lo=1.0)


def _weighted_envelope_growth(
    exprs: Sequence[Expression], p: float, epsilon: float
) -> Verdict:
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")

    def integrand(t: np.ndarray) -> np.ndarray:
        total = _sum_on(exprs, t)
        if np.any(total < -_NEGATIVE_TOLERANCE):
            raise NonPositiveIntegrandError("coefficient sampled negative")
        return np.power(t, 1.0 + epsilon) * np.power(np.maximum(total, 0.0), 2.0 / p)

    return classify_improper_integral(integrand, t_lo=1.0)


def check_existence_decay(
    phi: Sequence[Expression], p: float, epsilon: float
) -> Verdict:
    """Classify integral_0^inf t^(1+eps) (sum_j phi_j(t))^(2/p) dt.

    ConvergesFinite means the decay hypothesis for existence of a bounded
    solution holds at this epsilon.
    """
    return _weighted_envelope_growth(phi, p, epsilon)


def check_nonexistence_mass(psi: Sequence[Expression], p: float) -> Verdict:
    """Classify integral_0^inf t^(1/(p-1)) sum_j psi_j(t)^(1/(p-1)) dt.

    Diverges means no bounded radial solution can exist above these lower
    envelopes.
    """
    if not p > 1:
        raise ValueError("p must exceed 1")
    q = 1.0 / (p - 1.0)

    def integrand(t: np.ndarray) -> np.ndarray:
        total = np.zeros(t.shape)
        for e in psi:
            vals = np.broadcast_to(
                np.asarray(evaluate(e, {e.variables[0]: t}), dtype=float), t.shape
            )
            if np.any(vals < -_NEGATIVE_TOLERANCE):
                raise NonPositiveIntegrandError("coefficient sampled negative")
            total = total + np.power(np.maximum(vals, 0.0), q)
        return np.power(t, q) * total

    return classify_improper_integral(integrand, t_lo=1.0)


def check_largeness_forcing(
    a: Sequence[Expression], N: int, p: float
) -> list[Verdict]:
    """Classify, for each coefficient, the accumulated-forcing integral
    integral_0^inf ( t^(1-N) integral_0^t s^(N-1) a_j(s) ds )^(1/(p-1)) dt.

    All components diverging means every nontrivial solution grows without
    bound.
    """
    if not N - 1 >= p:
        raise ValueError("the dimension must satisfy N - 1 >= p")
    nodes = _master_nodes()
    q = 1.0 / (p - 1.0)
    verdicts = []
    for expr in a:
        vals = np.broadcast_to(
            np.asarray(evaluate(expr, {expr.variables[0]: nodes}), dtype=float),
            nodes.shape,
        )
        if np.any(vals < -_NEGATIVE_TOLERANCE):
            raise NonPositiveIntegrandError("coefficient sampled negative")
        mass = _weighted_mass(nodes, np.maximum(vals, 0.0), N)

        def integrand(t: np.ndarray, mass=mass) -> np.ndarray:
            inner = np.interp(t, nodes, mass) / np.power(t, N - 1)
            return np.power(np.maximum(inner, 0.0), q)

        verdicts.append(classify_improper_integral(integrand, t_lo=1.0))
    return verdicts


def check_largeness_necessary(
    a: Sequence[Expression], p: float, epsilon: float
) -> Verdict:
    """Classify integral_0^inf r^(1+eps) (sum_j a_j(r))^(2/p) dr.

    ConvergesFinite refutes existence of an entire solution growing without
    bound (the divergence of this integral is necessary for largeness).
    """
    return _weighted_envelope_growth(a, p, epsilon)


def check_weight_monotonicity(
    phi: Sequence[Expression], p: float, N: int, grid: RadialGrid
) -> WeightMonotonicity:
    """Find the radius beyond which r^(p(N-1)/(p-1)) * sum_j phi_j(r) stops
    decreasing, cross-checked on [r_max, 2 r_max] by direct evaluation."""
    exponent = p * (N - 1) / (p - 1.0)
    r = grid.nodes
    with np.errstate(invalid="ignore"):
        weight = np.power(r, exponent) * _sum_on(phi, r)
    decreases = np.nonzero(weight[1:] < weight[:-1] * (1.0 - 1e-10))[0]

    r_max = grid.r_max
    if decreases.size and r[decreases[-1]] >= 0.5 * r_max:
        return WeightMonotonicity(kind="NotEventuallyMonotone", radius=None)

    t = np.exp2(np.linspace(np.log2(r_max), np.log2(2.0 * r_max), 65))
    check = np.power(t, exponent) * _sum_on(phi, t)
    if np.any(check[1:] < check[:-1] * (1.0 - 1e-10)):
        return WeightMonotonicity(kind="NotEventuallyMonotone", radius=None)

    radius = float(r[decreases[-1] + 1]) if decreases.size else float(r[0])
    return WeightMonotonicity(kind="FromRadius", radius=radius)


# ---------------------------------------------------------------------------
# combined prediction

PREDICT_BOUNDED = "BoundedExists"
PREDICT_NO_BOUNDED_RADIAL = "NoBoundedRadial"
PREDICT_ALL_LARGE = "AllSolutionsLarge"
PREDICT_INCONCLUSIVE = "Inconclusive"
PREDICT_CONFLICT = "Conflict"


@dataclass(frozen=True)
class CriteriaReport:
    keller_osserman: Verdict
    existence_decay: Verdict
    nonexistence_mass: Verdict
    largeness_forcing: tuple[Verdict, ...]
    largeness_necessary: Verdict
    weight_monotone: WeightMonotonicity
    epsilon: float
    radial: bool
    degenerate_coefficients: bool
    prediction: str
    prediction_details: str


def _error_verdict() -> Verdict:
    return Verdict(
        kind=INCONCLUSIVE,
        tail_exponent_estimate=float("nan"),
        window_increments=(),
        evidence_range=(0.0, 0.0),
        decided_by="error",
    )


def predict(problem: ProblemSpec, epsilon: float = 0.5) -> CriteriaReport:
    """Run every condition check and combine them into a single prediction.

    Decision table: slow nonlinearity growth + decaying upper envelopes +
    eventually monotone weight predicts a bounded solution; diverging
    lower-envelope mass predicts no bounded radial solution; for radial
    coefficients, slow growth + diverging accumulated forcing in every
    component + monotone weight predicts that all solutions are large.  The
    two unboundedness branches are compatible; a bounded branch firing
    together with either is a conflict.  All verdicts are always reported.

    A check whose integrand turns out negative or hits an evaluation domain
    error (the structural hypotheses fail) degrades to an Inconclusive
    verdict instead of refusing; users may deliberately probe such inputs.
    """
    phi = problem.coefficients
    psi = problem.coefficients_lower or problem.coefficients
    radial = problem.coefficients_lower is None

    failures: list[str] = []

    def guarded(tag, fn, fallback):
        try:
            return fn()
        except (NonPositiveIntegrandError, DomainError) as err:
            failures.append(f"{tag}: {err}")
            return fallback

    ko = guarded(
        "keller_osserman",
        lambda: check_keller_osserman(problem.nonlinearities, problem.m, problem.p),
        _error_verdict(),
    )
    decay = guarded(
        "existence_decay",
        lambda: check_existence_decay(phi, problem.p, epsilon),
        _error_verdict(),
    )
    mass = guarded(
        "nonexistence_mass",
        lambda: check_nonexistence_mass(psi, problem.p),
        _error_verdict(),
    )
    forcing = tuple(
        guarded(
            "largeness_forcing",
            lambda: check_largeness_forcing(phi, problem.N, problem.p),
            [_error_verdict()] * problem.m,
        )
    )
    necessary = guarded(
        "largeness_necessary",
        lambda: check_largeness_necessary(phi, problem.p, epsilon),
        _error_verdict(),
    )
    weight = guarded(
        "weight_monotone",
        lambda: check_weight_monotonicity(
            phi, problem.p, problem.N, make_grid(32.0, 2049)
        ),
        WeightMonotonicity(kind="NotEventuallyMonotone", radius=None),
    )

    try:
        degenerate = bool(np.max(np.abs(_sum_on(phi, _master_nodes()))) == 0.0)
    except DomainError as err:
        failures.append(f"degeneracy sampling: {err}")
        degenerate = False

    bounded = ko.diverges and decay.converges and weight.eventually_monotone
    no_bounded = mass.diverges
    all_large = (
        radial
        and ko.diverges
        and all(v.diverges for v in forcing)
        and weight.eventually_monotone
    )

    if degenerate:
        prediction = PREDICT_INCONCLUSIVE
        details = "coefficients vanish identically; no conclusion applies"
    elif bounded and (no_bounded or all_large):
        prediction = PREDICT_CONFLICT
        fired = ["BoundedExists"]
        if no_bounded:
            fired.append("NoBoundedRadial")
        if all_large:
            fired.append("AllSolutionsLarge")
        details = "incompatible branches fired: " + ", ".join(fired)
    elif all_large:
        prediction = PREDICT_ALL_LARGE
        details = (
            "forcing accumulates in every component"
            + ("; lower-envelope mass also diverges" if no_bounded else "")
        )
    elif no_bounded:
        prediction = PREDICT_NO_BOUNDED_RADIAL
        details = "lower-envelope mass diverges"
    elif bounded:
        prediction = PREDICT_BOUNDED
        details = f"upper envelopes decay at epsilon={epsilon:g}"
    else:
        prediction = PREDICT_INCONCLUSIVE
        details = "no branch of the decision table fired"
    if failures:
        details += "; checks skipped on invalid inputs: " + "; ".join(failures)

    return CriteriaReport(
        keller_osserman=ko,
        existence_decay=decay,
        nonexistence_mass=mass,
        largeness_forcing=forcing,
        largeness_necessary=necessary,
        weight_monotone=weight,
        epsilon=epsilon,
        radial=radial,
        degenerate_coefficients=degenerate,
        prediction=prediction,
        prediction_details=details,
    )
