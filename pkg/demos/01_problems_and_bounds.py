"""
Problems, constants and a priori bounds
=======================================

Load a shipped game, look at its coefficients, estimate the structural
constants by sampling and turn them into closed-form bounds on the value.
"""

from pathlib import Path

import isaacs_horizon as ih
from isaacs_horizon import dsl

PROBLEMS = Path(ih.__file__).parent / "problems"

# coefficient strings are a small expression language
tree = dsl.parse("exp(-t)*max(u1, v1)")
print(dsl.to_source(tree), "uses", sorted(dsl.free_vars(tree)))
print("2^3^2 =", dsl.evaluate("2^3^2", {}))  # left-associative

game = ih.load_problem_file(PROBLEMS / "dissipative_1d.toml")
print(game.name, "n =", game.state_dim, "U =", game.control_set_U, "autonomous:", game.autonomous_flag)

# sampled Lipschitz / monotonicity constants on the grid box
report = ih.estimate_constants(game, seed=0)
for key in ("rho0", "L_x", "L_y", "L_z", "mu", "beta1_L1", "beta2"):
    print(f"  {key:9s} {getattr(report, key):.4f}")
print("diagnostics:", report.diagnostics() or "none")

bounds = ih.value_bounds(report)
print(f"sup |W| <= {bounds.M1_inf:.3f},  Lipschitz in x <= {bounds.Lip_W:.3f}")

# the discount kernel over [0, 2]
print("Gamma(0, 2) =", ih.gamma(game, 0.0, 2.0))
