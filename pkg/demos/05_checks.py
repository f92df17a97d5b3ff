"""
Checking a solution
===================

Every numerical output can be held against a bound that follows from the
constants alone. This runs the checks on the dissipative game and writes
them as JSON.
"""

from pathlib import Path

import isaacs_horizon as ih
from isaacs_horizon import verify

PROBLEMS = Path(ih.__file__).parent / "problems"
game = ih.load_problem_file(PROBLEMS / "dissipative_1d.toml")
report = ih.estimate_constants(game)
bounds = ih.value_bounds(report)
slack = verify.scheme_slack(bounds)
grid = ih.make_grid(game, report=report)

lower, trace = ih.solve_infinite(game, grid, tol=1e-6, report=report)
upper, _ = ih.solve_infinite(game, grid, tol=1e-6, kind="upper", report=report)
stationary = ih.solve_stationary(game, grid, tol=1e-6)

reports = [
    verify.check_bounds(lower, bounds),
    verify.check_lipschitz(lower, bounds),
    verify.check_truncation_rate(trace, report.rho0),
    verify.check_boundary_decay(game, lower, bounds, slack),
    verify.check_stationarity(game, lower, stationary, 1e-6, slack),
    verify.check_isaacs_value(lower, upper, ih.isaacs_scan(game, report.sample_box), slack),
]
for r in reports:
    print(f"{r.name:16s} {r.status:5s} measured {r.measured:+.4g}  bound {r.bound:+.4g}  slack {r.slack:.3g}")

verify.write_reports(reports, "dissipative_reports.json")
print("any failed:", verify.any_failed(reports))
