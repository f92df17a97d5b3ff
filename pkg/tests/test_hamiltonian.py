import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_problem
from isaacs_horizon.hamiltonian import (
    HamiltonianInput,
    isaacs_gap,
    isaacs_scan,
    lower_hamiltonian,
    payoff_tensor,
    transformed_hamiltonian,
    upper_hamiltonian,
)
from isaacs_horizon.problem import gamma

SEPARABLE = make_problem(drift="u1 + v1", diffusion="1", g="u1 - v1", U="[-1, 0, 1]", V="[-1, 0, 1]")
BILINEAR = make_problem(drift="u1*v1", diffusion="1", g="0", U="[-1, 1]", V="[-1, 1]")
ZERO = make_problem()
GAME = make_problem(
    drift="-x1 + 0.5*u1*v1 + 0.2*u1", diffusion="0.5 + 0.2*v1^2", g="sin(x1)*u1 - 0.4*y + 0.3*z1*v1",
    U="[-1, 0, 1]", V="[-1, 0.5, 1]", rho="0.5 + 0.5*exp(-t)",
)


def _inp(p, A=0.0, t=0.0, x=0.0, y=0.0):
    return HamiltonianInput(t, [x], y, [p], [[A]])


def _enumerate(problem, inp):
    """Brute-force max-min and min-max over explicit Python loops."""
    table = {}
    for u in problem.control_set_U:
        for v in problem.control_set_V:
            env = problem.env(inp.t, [np.array([inp.x[0]])], [np.array([u[0]])], [np.array([v[0]])])
            b = problem.drift_values(env, (1,))[0, 0]
            s = problem.diffusion_values(env, (1,))[0, 0, 0]
            env.update(y=problem.rho(inp.t) * inp.y, z1=inp.p[0] * s, z=inp.p[0] * s)
            gval = problem.generator_values(env, (1,))[0]
            table[(u, v)] = 0.5 * s * s * inp.A[0, 0] + b * inp.p[0] + gval
    lower = max(min(table[(u, v)] for v in problem.control_set_V) for u in problem.control_set_U)
    upper = min(max(table[(u, v)] for u in problem.control_set_U) for v in problem.control_set_V)
    return lower, upper


def test_separable_at_zero_gradient():
    assert lower_hamiltonian(SEPARABLE, _inp(0.0))[0] == 0.0
    assert upper_hamiltonian(SEPARABLE, _inp(0.0))[0] == 0.0


def test_separable_at_gradient_two():
    val, (u, v) = lower_hamiltonian(SEPARABLE, _inp(2.0))
    assert val == 2.0
    assert (u, v) == ((1.0,), (-1.0,))
    assert upper_hamiltonian(SEPARABLE, _inp(2.0))[0] == 2.0


def test_zero_problem():
    for fn in (lower_hamiltonian, upper_hamiltonian):
        assert fn(ZERO, _inp(3.0, A=-2.0, y=5.0))[0] == 0.0
    assert isaacs_gap(ZERO, _inp(1.0)) == 0.0


def test_bilinear_gap_is_two():
    inp = _inp(1.0)
    assert lower_hamiltonian(BILINEAR, inp)[0] == -1.0
    assert upper_hamiltonian(BILINEAR, inp)[0] == 1.0
    assert isaacs_gap(BILINEAR, inp) == 2.0


def test_separable_gap_is_exactly_zero():
    assert isaacs_scan(SEPARABLE, ((-3.0,), (3.0,)), samples=500) == 0.0


def test_tie_breaking_prefers_lowest_index():
    # every pair ties at p = 0 for a control-free payoff
    flat = make_problem(U="[-1, 0, 1]", V="[-1, 0, 1]")
    assert lower_hamiltonian(flat, _inp(0.0))[1] == ((-1.0,), (-1.0,))


def test_input_is_symmetrized():
    inp = HamiltonianInput(0.0, [0.0, 0.0], 0.0, [0.0, 0.0], [[1.0, 2.0], [0.0, 1.0]])
    np.testing.assert_array_equal(inp.A, [[1.0, 1.0], [1.0, 1.0]])
    with pytest.raises(ValueError):
        HamiltonianInput(0.0, [0.0], 0.0, [0.0, 1.0], [[0.0]])


_args = st.tuples(
    st.floats(-3, 3), st.floats(-2, 2), st.floats(-3, 3), st.floats(-3, 3), st.floats(0, 4)
)


@settings(max_examples=200, deadline=None)
@given(_args)
def test_vectorized_matches_brute_force(a):
    p, A, x, y, t = a
    inp = _inp(p, A=A, x=x, y=y, t=t)
    lo, up = _enumerate(GAME, inp)
    assert lower_hamiltonian(GAME, inp)[0] == pytest.approx(lo, abs=1e-12)
    assert upper_hamiltonian(GAME, inp)[0] == pytest.approx(up, abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(_args)
def test_minimax_inequality(a):
    p, A, x, y, t = a
    assert isaacs_gap(GAME, _inp(p, A=A, x=x, y=y, t=t)) >= 0.0


@settings(max_examples=100, deadline=None)
@given(_args, st.floats(0, 2))
def test_nonincreasing_in_y(a, dy):
    p, A, x, y, t = a
    h1 = lower_hamiltonian(GAME, _inp(p, A=A, x=x, y=y, t=t))[0]
    h2 = lower_hamiltonian(GAME, _inp(p, A=A, x=x, y=y + dy, t=t))[0]
    assert h1 >= h2 - 1e-12


@settings(max_examples=100, deadline=None)
@given(_args, st.floats(0, 3))
def test_degenerate_ellipticity(a, eps):
    p, A, x, y, t = a
    h1 = lower_hamiltonian(GAME, _inp(p, A=A, x=x, y=y, t=t))[0]
    h2 = lower_hamiltonian(GAME, _inp(p, A=A + eps, x=x, y=y, t=t))[0]
    assert h2 >= h1 - 1e-12


@settings(max_examples=100, deadline=None)
@given(st.floats(-3, 3), st.floats(0.1, 10))
def test_selection_invariant_under_positive_scaling(p, c):
    base = make_problem(drift="u1 + v1", diffusion="1", g="u1 - v1 + 0.3*u1*v1", U="[-1, 0, 1]", V="[-1, 0, 1]")
    scaled = make_problem(drift="0", diffusion="0", g=f"{c!r}*(u1 - v1 + 0.3*u1*v1)", U="[-1, 0, 1]", V="[-1, 0, 1]")
    unscaled = make_problem(drift="0", diffusion="0", g="u1 - v1 + 0.3*u1*v1", U="[-1, 0, 1]", V="[-1, 0, 1]")
    assert lower_hamiltonian(scaled, _inp(p))[1] == lower_hamiltonian(unscaled, _inp(p))[1]
    assert lower_hamiltonian(base, _inp(p))[0] == pytest.approx(_enumerate(base, _inp(p))[0], abs=1e-12)


def test_transformed_equals_lower_at_time_zero():
    inp = _inp(0.7, A=0.3, x=0.2, y=0.4)
    assert transformed_hamiltonian(GAME, 0.0, [0.2], 0.4, [0.7], [[0.3]]) == pytest.approx(
        lower_hamiltonian(GAME, inp)[0], abs=1e-14
    )


def test_transformed_for_linear_control_free_problem():
    # b = -x, sigma = 1, g = exp(-t) - 0.5 y + 0.2 z, rho = 1 + t:
    # H(t,x,y,p,A) = A/2 - x p + exp(-t) - 0.5 rho y + 0.2 p, scaled by G = gamma(0,t)
    lin = make_problem(drift="-x1", diffusion="1", g="exp(-t) - 0.5*y + 0.2*z1", rho="1 + t")
    t, x, r, p, A = 0.8, 0.3, 0.2, -0.4, 1.1
    G = gamma(lin, 0.0, t)
    rho = 1.0 + t
    expected = A / 2 - x * p + G * np.exp(-t) - 0.5 * rho * r + 0.2 * p
    assert transformed_hamiltonian(lin, t, [x], r, [p], [[A]]) == pytest.approx(expected, abs=1e-9)


def test_transformed_zero_problem():
    assert transformed_hamiltonian(ZERO, 3.0, [1.0], 2.0, [1.0], [[1.0]]) == 0.0


def test_payoff_tensor_shape():
    P = payoff_tensor(GAME, 0.0, np.zeros((5, 1)), np.zeros(5), np.ones((5, 1)), np.zeros((5, 1, 1)))
    assert P.shape == (3, 3, 5)
