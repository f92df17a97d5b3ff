"""
From finite to infinite horizon
===============================

Solve the game on [0, T] with zero terminal data for growing T and watch
consecutive solutions approach each other geometrically, at roughly the
discount rate. The last solution is the infinite-horizon value on [0, S].
"""

import math
from pathlib import Path

import isaacs_horizon as ih

PROBLEMS = Path(ih.__file__).parent / "problems"
game = ih.load_problem_file(PROBLEMS / "separable_1d.toml")
report = ih.estimate_constants(game)
grid = ih.make_grid(game, report=report)
print(f"grid: {grid.points[0]} nodes on [{grid.lo[0]}, {grid.hi[0]}], dt = {grid.dt:.4f} (stable up to {grid.dt_max:.4f})")

field, trace = ih.solve_infinite(game, grid, tol=1e-6, report=report)
for T, d in zip(trace.horizons, trace.deltas):
    print(f"  T = {T:4.1f}   sup|W^(T+1) - W^T| = {d:.3e}")
print(f"fitted rate {-trace.slope:.3f} vs rho0 = {report.rho0},  tail bound {trace.tail_bound:.2e}")
print("expected ratio per step:", round(math.exp(-report.rho0), 4))

for x in (-2.0, 0.0, 2.0):
    print(f"W(0, {x:+.1f}) = {field.at(0.0, [x]):.5f}")

# autonomous data: the stationary equation gives the same function
stat = ih.solve_stationary(game, grid, tol=1e-7)
mask = grid.interior_mask()
print("max |stationary - W(0, .)| =", abs(stat.values[0][mask] - field.layer(0.0)[mask]).max())

ih.write_field_csv(field, "separable_field.csv", layers="first")
print("wrote separable_field.csv")
