"""
Lower and upper Hamiltonians
============================

With finite control sets the max-min and min-max are plain enumerations.
A game whose payoff separates into a u part plus a v part has no gap; a
bilinear coupling b = u v opens one.
"""

from pathlib import Path

import numpy as np

import isaacs_horizon as ih
from isaacs_horizon.hamiltonian import HamiltonianInput, isaacs_gap, lower_hamiltonian, upper_hamiltonian

PROBLEMS = Path(ih.__file__).parent / "problems"
separable = ih.load_problem_file(PROBLEMS / "separable_1d.toml")
bilinear = ih.load_problem_file(PROBLEMS / "bilinear_1d.toml")

for p in np.linspace(-2, 2, 5):
    inp = HamiltonianInput(t=0.0, x=[0.3], y=0.0, p=[p], A=[[0.5]])
    lo, (u, v) = lower_hamiltonian(bilinear, inp)
    up, _ = upper_hamiltonian(bilinear, inp)
    print(f"p = {p:+.1f}: lower {lo:+.3f} (u={u[0]:+.0f}, v={v[0]:+.0f})  upper {up:+.3f}")

inp = HamiltonianInput(0.0, [0.0], 0.0, [1.0], [[0.0]])
print("gap, bilinear at p = 1:", isaacs_gap(bilinear, inp))

# sampled over states, values and gradients
box = ((-3.0,), (3.0,))
print("largest gap, separable:", ih.isaacs_scan(separable, box, samples=2000))
print("largest gap, bilinear: ", ih.isaacs_scan(bilinear, box, samples=2000))
