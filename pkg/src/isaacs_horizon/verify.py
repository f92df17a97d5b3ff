"""Inequality checks on solver output, each producing a :class:`CheckReport`.

A report passes exactly when ``measured <= bound + slack``. Slack factors are
module-level defaults and every check accepts an override; the values used are
written into the report.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .problem import Bounds, GameProblem, adaptive_simpson, gamma
from .solver import PreconditionError, TruncationTrace, ValueField, fit_log_decay

__all__ = [
    "CheckReport",
    "InsufficientTraceError",
    "scheme_slack",
    "check_truncation_rate",
    "check_bounds",
    "check_lipschitz",
    "check_boundary_decay",
    "check_stationarity",
    "check_isaacs_value",
    "check_comparison",
    "cross_validate",
    "write_reports",
    "any_failed",
]

RATE_FACTOR = 0.8
BOUND_FACTOR = 1.05
LIP_FACTOR = 1.1
SCHEME_SLACK_FRACTION = 0.02
BOUNDARY_MARGIN = 0.1
NOISE_FLOOR = 1e-12


class InsufficientTraceError(ValueError):
    pass


@dataclass
class CheckReport:
    name: str
    property: str
    measured: float
    bound: float
    slack: float
    status: str = "pass"  # pass | fail | info | skipped
    details: dict = field(default_factory=dict)
    artifacts: list = field(default_factory=list)

    def __post_init__(self):
        if self.status in ("pass", "fail"):
            self.status = "pass" if self.measured <= self.bound + self.slack else "fail"

    @property
    def passed(self) -> bool:
        return self.status != "fail"

    def as_dict(self) -> dict:
        def num(a):
            return None if a is None or (isinstance(a, float) and not math.isfinite(a)) else a

        return {
            "name": self.name,
            "property": self.property,
            "measured": num(self.measured),
            "bound": num(self.bound),
            "slack": num(self.slack),
            "status": self.status,
            "passed": self.passed,
            "details": self.details,
            "artifacts": list(self.artifacts),
        }


def scheme_slack(bounds: Bounds, fraction: float = SCHEME_SLACK_FRACTION) -> float:
    """Default allowance for discretization error: a fraction of the uniform bound."""
    return fraction * bounds.M1_inf


def _interior(fld: ValueField, margin: float) -> np.ndarray:
    return fld.values[:, fld.grid.interior_mask(margin)]


def check_truncation_rate(
    trace: TruncationTrace, rho0: float, factor: float = RATE_FACTOR, floor: float = NOISE_FLOOR
) -> CheckReport:
    """Fitted slope of ``log delta_k`` against ``T_k`` must be at most ``-factor * rho0``."""
    above = [d for d in trace.deltas if d > floor]
    if len(above) < 4:
        raise InsufficientTraceError(f"need >= 4 trace points above {floor:g}, have {len(above)}")
    slope, _, resid = fit_log_decay(trace.horizons, trace.deltas, floor)
    # fail when slope > -factor*rho0, i.e. measured = slope, bound = -factor*rho0
    return CheckReport(
        "truncation_rate",
        "Cauchy differences of truncated solutions decay at rate rho0",
        slope,
        -factor * rho0,
        0.0,
        details={"fit_residual": resid, "points": len(above), "factor": factor, "rho0": rho0},
    )


def check_bounds(
    fld: ValueField, bounds: Bounds, factor: float = BOUND_FACTOR, margin: float = BOUNDARY_MARGIN
) -> CheckReport:
    measured = float(np.max(np.abs(_interior(fld, margin)))) if fld.values.size else 0.0
    return CheckReport(
        "uniform_bound",
        "sup |W| over the interior is at most M1_inf",
        measured,
        factor * bounds.M1_inf,
        0.0,
        details={"M1_inf": bounds.M1_inf, "factor": factor, "margin": margin},
    )


def max_adjacent_slope(values: np.ndarray, h, margin_mask: np.ndarray | None = None) -> float:
    """Largest ``|W(x') - W(x)| / |x' - x|`` over grid neighbours inside the mask."""
    best = 0.0
    for ax in range(values.ndim):
        diff = np.abs(np.diff(values, axis=ax)) / h[ax]
        if margin_mask is not None:
            both = np.logical_and(
                np.take(margin_mask, range(margin_mask.shape[ax] - 1), axis=ax),
                np.take(margin_mask, range(1, margin_mask.shape[ax]), axis=ax),
            )
            diff = diff[both]
        if diff.size:
            best = max(best, float(diff.max()))
    return best


def check_lipschitz(
    fld: ValueField, bounds: Bounds, factor: float = LIP_FACTOR, margin: float = BOUNDARY_MARGIN
) -> CheckReport:
    if bounds.Lip_W is None:
        return CheckReport("lipschitz", "spatial Lipschitz constant of W(0, .)", math.nan, math.nan, 0.0,
                           status="skipped", details={"reason": "dissipativity constant too small"})
    measured = max_adjacent_slope(fld.values[0], fld.grid.h, fld.grid.interior_mask(margin))
    return CheckReport(
        "lipschitz",
        "spatial Lipschitz constant of W(0, .)",
        measured,
        factor * bounds.Lip_W,
        0.0,
        details={"Lip_W": bounds.Lip_W, "factor": factor, "margin": margin},
    )


def check_boundary_decay(
    problem: GameProblem,
    fld: ValueField,
    bounds: Bounds,
    slack: float | None = None,
    sample_times=(0.0, 1.0, 2.0, 4.0),
    tol: float = 1e-3,
    t_quad: float = 60.0,
    margin: float = BOUNDARY_MARGIN,
) -> CheckReport:
    """Discount-weighted decay of ``sup_x |W(t, .)|``; with beta2 = 0 also the tail-integral bound.

    The weighted part requires ``Gamma_{0,t} sup_x |W(t, .)|`` at the end of
    the window to sit below ``Gamma_{0,t} * M1_inf * BOUND_FACTOR`` and records
    the first integer time at which ``Gamma_{0,T} * M1_inf`` drops below
    ``tol``. The measured value is the largest excess over all sub-checks.
    """
    slack = scheme_slack(bounds) if slack is None else slack
    sup = fld.sup_abs(margin)
    details: dict = {"slack": slack, "margin": margin}
    weighted = [gamma(problem, 0.0, float(t)) * float(s) for t, s in zip(fld.times, sup)]
    details["weighted_sup"] = weighted
    decay_T = None
    for T in np.arange(fld.times[-1], t_quad + 1e-9, 1.0):
        if gamma(problem, 0.0, float(T)) * bounds.M1_inf <= tol:
            decay_T = float(T)
            break
    details["weighted_below_tol_at"] = decay_T
    g_end = gamma(problem, 0.0, float(fld.times[-1]))
    # compared after dividing out the weight, so the slack keeps its unweighted meaning
    excess = (weighted[-1] - g_end * bounds.M1_inf * BOUND_FACTOR) / g_end
    if decay_T is None:
        excess = math.inf
    if problem.beta2 == 0.0:
        rows = []
        for t in sample_times:
            j = int(np.argmin(np.abs(fld.times - t)))
            if abs(fld.times[j] - t) > 1e-9:
                continue
            tail = adaptive_simpson(lambda s: np.abs(problem.beta1_values(s)), float(t), t_quad, tol=1e-10)
            if problem.beta1_tail is not None:
                c, lam = problem.beta1_tail
                tail += c * math.exp(-lam * t_quad) / lam
            rows.append({"t": float(t), "sup": float(sup[j]), "tail_integral": tail})
            excess = max(excess, float(sup[j]) - tail)
        details["tail_checks"] = rows
    return CheckReport(
        "boundary_decay",
        "W vanishes as t grows (discount-weighted; pointwise when beta2 = 0)",
        excess,
        0.0,
        slack,
        details=details,
    )


def check_stationarity(
    problem: GameProblem,
    fld: ValueField,
    stationary: ValueField | None,
    tol: float,
    slack: float,
) -> CheckReport:
    if not problem.autonomous_flag:
        raise PreconditionError("stationarity check needs an autonomous problem")
    drift_in_time = float(np.max(np.abs(fld.values - fld.values[0:1])))
    budget = 2.0 * (tol + slack)
    measured = drift_in_time
    details = {"max_time_variation": drift_in_time, "tol": tol, "scheme_slack": slack}
    if stationary is not None:
        gap = float(np.max(np.abs(fld.values[0] - stationary.values[0])))
        details["stationary_gap"] = gap
        measured = max(measured, gap)
    return CheckReport(
        "stationarity",
        "W does not depend on t for autonomous problems",
        measured,
        budget,
        0.0,
        details=details,
    )


def check_isaacs_value(
    lower: ValueField, upper: ValueField, gap_scan: float, slack: float, gap_tol: float = 1e-10
) -> CheckReport:
    diff = float(np.max(np.abs(lower.values - upper.values)))
    if gap_scan > gap_tol:
        return CheckReport(
            "isaacs_value",
            "lower and upper values agree when the Hamiltonians do",
            diff,
            math.nan,
            0.0,
            status="info",
            details={"hamiltonian_gap": gap_scan, "reason": "Hamiltonians differ; no equality required"},
        )
    return CheckReport(
        "isaacs_value",
        "lower and upper values agree when the Hamiltonians do",
        diff,
        2.0 * slack,
        0.0,
        details={"hamiltonian_gap": gap_scan, "scheme_slack": slack},
    )


def check_comparison(low: ValueField, high: ValueField) -> CheckReport:
    """``low <= high`` pointwise; used for runs whose generators are ordered."""
    excess = float(np.max(low.values - high.values))
    return CheckReport("comparison", "ordered generators give ordered values", excess, 0.0, 0.0)


def cross_validate(fld: ValueField, estimate, t0: float, x0, slack: float) -> CheckReport:
    w = fld.at(t0, x0)
    return CheckReport(
        "cross_validation",
        "grid value agrees with the Monte Carlo BSDE estimate",
        abs(w - estimate.y0),
        3.0 * estimate.se,
        slack,
        details={"pde": w, "mc": estimate.y0, "se": estimate.se, "t0": t0, "x0": list(np.atleast_1d(x0))},
    )


def write_reports(reports, path: str | Path | None = None) -> str:
    """JSON array ordered by check name."""
    ordered = sorted(reports, key=lambda r: r.name)
    text = json.dumps([r.as_dict() for r in ordered], indent=2, sort_keys=True, allow_nan=False)
    if path is not None:
        Path(path).write_text(text + "\n", encoding="utf-8")
    return text


def any_failed(reports) -> bool:
    return any(r.status == "fail" for r in reports)
