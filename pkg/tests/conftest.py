from pathlib import Path

import pytest

from isaacs_horizon.problem import load_problem

PROBLEM_DIR = Path(__file__).resolve().parents[1] / "src" / "isaacs_horizon" / "problems"


def make_problem(
    drift="0",
    diffusion="0",
    g="0",
    rho="1",
    U="[0]",
    V="[0]",
    beta1="0",
    beta2=0.0,
    tail=None,
    n=1,
    d=1,
    extra="",
):
    """Problem document assembled from the given coefficient strings."""
    drift_txt = drift if drift.lstrip().startswith("[") else f'"{drift}"'
    diff_txt = diffusion if diffusion.lstrip().startswith("[") else f'"{diffusion}"'
    tail_txt = f"tail = {list(tail)}" if tail else ""
    text = f"""
[dims]
n = {n}
d = {d}

[dynamics]
drift = {drift_txt}
diffusion = {diff_txt}

[generator]
g = "{g}"

[discount]
rho = "{rho}"

[growth]
beta1 = "{beta1}"
beta2 = {beta2}
{tail_txt}

[controls]
U = {U}
V = {V}
{extra}
"""
    return load_problem(text)


@pytest.fixture
def problem_dir():
    return PROBLEM_DIR
