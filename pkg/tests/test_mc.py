import json
import math

import numpy as np
import pytest

from conftest import PROBLEM_DIR, make_problem
from isaacs_horizon.mc import (
    ContractionError,
    ControlPolicy,
    McError,
    NonFiniteStateError,
    PathBundle,
    estimate_infinite,
    simulate_paths,
    solve_bsde_truncated,
)
from isaacs_horizon.problem import load_problem_file
from isaacs_horizon.solver import make_grid, solve_finite


def _policy(p):
    return ControlPolicy.constant(p, p.control_set_U[0], p.control_set_V[0])


def _run(p, T, N=200, dt=0.01, x0=(0.0,), seed=1, **kw):
    bundle = simulate_paths(p, _policy(p), 0.0, x0, dt, T, N, seed)
    return solve_bsde_truncated(bundle, p, _policy(p), T, **kw)


# -- forward simulation --------------------------------------------------------

def test_frozen_state_without_dynamics():
    p = make_problem()
    b = simulate_paths(p, _policy(p), 0.0, [0.7], 0.1, 2.0, 20, seed=0)
    assert np.all(b.X == 0.7)


def test_brownian_mean_and_variance():
    p = make_problem(diffusion="1")
    b = simulate_paths(p, _policy(p), 0.0, [1.0], 0.05, 1.0, 4000, seed=5)
    end = b.X[:, -1, 0]
    assert abs(end.mean() - 1.0) < 4 / math.sqrt(4000)
    assert end.var() == pytest.approx(1.0, rel=0.1)


def test_euler_ode_is_first_order():
    p = make_problem(drift="-x1")
    errs = []
    for dt in (0.1, 0.05):
        b = simulate_paths(p, _policy(p), 0.0, [2.0], dt, 2.0, 1, seed=0)
        errs.append(abs(b.X[0, -1, 0] - 2.0 * math.exp(-2.0)))
    assert errs[1] < errs[0]
    assert errs[0] / errs[1] == pytest.approx(2.0, rel=0.1)


def test_seed_determinism_and_prefix_sharing():
    p = make_problem(drift="-x1", diffusion="1")
    a = simulate_paths(p, _policy(p), 0.0, [0.0], 0.1, 2.0, 30, seed=9)
    b = simulate_paths(p, _policy(p), 0.0, [0.0], 0.1, 2.0, 30, seed=9)
    np.testing.assert_array_equal(a.X, b.X)
    more = simulate_paths(p, _policy(p), 0.0, [0.0], 0.1, 4.0, 60, seed=9)
    np.testing.assert_array_equal(more.X[:30, :21], a.X)
    other = simulate_paths(p, _policy(p), 0.0, [0.0], 0.1, 2.0, 30, seed=10)
    assert not np.array_equal(other.X, a.X)


def test_exit_freezes_paths():
    p = make_problem(diffusion="1")
    b = simulate_paths(p, _policy(p), 0.0, [0.0], 0.01, 3.0, 200, seed=2, exit_box=((-1.0,), (1.0,)))
    assert b.exited.mean() > 0.9
    for i in np.flatnonzero(b.exited)[:20]:
        s = b.stop_index[i]
        assert abs(b.X[i, s, 0]) >= 1.0
        assert np.all(b.X[i, s:] == b.X[i, s])
        assert np.all(np.abs(b.X[i, :s, 0]) < 1.0)


def test_non_finite_state_is_reported():
    p = make_problem(drift="exp(x1)")
    with pytest.raises(NonFiniteStateError) as err, np.errstate(all="ignore"):
        simulate_paths(p, _policy(p), 0.0, [5.0], 0.5, 20.0, 3, seed=0)
    assert err.value.step >= 1


def test_constant_policy_must_be_admissible():
    p = make_problem(U="[-1, 1]")
    with pytest.raises(ValueError):
        ControlPolicy.constant(p, 0.5, 0.0)


def test_bundle_round_trip(tmp_path):
    p = make_problem(drift="-x1+u1", diffusion="0.5", U="[-1, 1]")
    b = simulate_paths(p, ControlPolicy.constant(p, 1, 0), 0.5, [0.2], 0.1, 2.5, 7, seed=3,
                       exit_box=((-0.5,), (0.5,)))
    b.save(tmp_path / "paths.bin")
    c = PathBundle.load(tmp_path / "paths.bin")
    for name in ("X", "dB", "u", "v", "stop_index", "exited"):
        np.testing.assert_array_equal(getattr(b, name), getattr(c, name))
    assert (c.t0, c.dt, c.seed) == (0.5, 0.1, 3)
    raw = (tmp_path / "paths.bin").read_bytes()
    (tmp_path / "cut.bin").write_bytes(raw[:-3])
    with pytest.raises(ValueError):
        PathBundle.load(tmp_path / "cut.bin")


def test_feedback_policy_from_field():
    p = load_problem_file(PROBLEM_DIR / "separable_1d.toml")
    grid = make_grid(p)
    fld = solve_finite(p, grid, 5.0, record_policy=True)
    pol = ControlPolicy.from_field(p, fld)
    u, v = pol.controls(0.0, np.array([[0.0], [100.0]]))
    assert u.shape == (2, 1) and v.shape == (2, 1)
    with pytest.raises(ValueError):
        ControlPolicy.from_field(p, solve_finite(p, grid, 5.0))


# -- backward regression ---------------------------------------------------------

def test_zero_data_gives_zero():
    p = make_problem(drift="-x1", diffusion="1")
    est = _run(p, 2.0, keep_paths=True)
    assert est.y0 == 0.0 and est.se == 0.0
    assert np.all(est.Z == 0.0)


def test_closed_form_truncated():
    p = load_problem_file(PROBLEM_DIR / "closed_form_1d.toml")
    est = _run(p, 4.0, N=50)
    assert est.y0 == pytest.approx(0.499832, abs=1e-4)
    assert est.se < 1e-12


def test_spec_recursion_bias_is_first_order():
    # theta = 1 is the fully implicit recursion; its O(dt) bias is visible at dt = 0.01
    p = load_problem_file(PROBLEM_DIR / "closed_form_1d.toml")
    implicit = _run(p, 4.0, N=20, theta=1.0)
    trapezoid = _run(p, 4.0, N=20, theta=0.5)
    exact = (1 - math.exp(-8.0)) / 2
    assert abs(implicit.y0 - exact) > 10 * abs(trapezoid.y0 - exact)


def test_constant_generator_gives_discounted_integral():
    # g = c, rho = 1: Y_0^T = c (1 - exp(-T))
    p = make_problem(g="0.7", drift="-x1", diffusion="1")
    est = _run(p, 3.0, N=300)
    assert est.y0 == pytest.approx(0.7 * (1 - math.exp(-3.0)), abs=1e-4)


def test_exit_time_against_direct_simulation():
    # Y_0 = E[exp(-tau) 1{tau <= T}] for g = 0, rho = 1, psi = 1 on exit from (-1, 1)
    p = make_problem(diffusion="1")
    dt, T = 0.005, 4.0
    b = simulate_paths(p, _policy(p), 0.0, [0.0], dt, T, 4000, seed=11, exit_box=((-1.0,), (1.0,)))
    est = solve_bsde_truncated(b, p, _policy(p), T, terminal="1")
    direct = float(np.mean(np.where(b.exited, np.exp(-b.stop_index * dt), 0.0)))
    assert abs(est.y0 - direct) <= 3 * est.se
    assert est.se > 0
    # exits seen on the mesh come late, which biases both estimates below 1/cosh(sqrt 2)
    assert abs(est.y0 - 1 / math.cosh(math.sqrt(2))) < 0.04


def test_separable_game_with_frozen_controls():
    # u = 1, v = -1: b = 0, sigma = 1, g = 2 + 0.5 sin(x);
    # Y_0 = 2 + 0.5 sin(x0) int exp(-s) exp(-s/2) ds = 2 + sin(x0)/3
    p = load_problem_file(PROBLEM_DIR / "separable_1d.toml")
    pol = ControlPolicy.constant(p, 1, -1)
    x0 = 0.5
    factory = lambda Tm: simulate_paths(p, pol, 0.0, [x0], 0.02, Tm, 3000, seed=4)  # noqa: E731
    est = estimate_infinite(factory, p, pol, 0.0, [x0], tol=1e-4)
    exact = 2.0 + math.sin(x0) / 3.0
    assert abs(est.y0 - exact) <= 3 * est.se + 1e-3
    assert est.trace["converged"]


def test_infinite_zero_and_closed_form():
    zero = make_problem(drift="-x1", diffusion="1")
    f0 = lambda Tm: simulate_paths(zero, _policy(zero), 0.0, [0.0], 0.05, Tm, 100, seed=1)  # noqa: E731
    assert estimate_infinite(f0, zero, None, 0.0, [0.0], tol=1e-6).y0 == 0.0

    cf = load_problem_file(PROBLEM_DIR / "closed_form_1d.toml")
    f1 = lambda Tm: simulate_paths(cf, _policy(cf), 0.0, [0.0], 0.01, Tm, 20, seed=1)  # noqa: E731
    est = estimate_infinite(f1, cf, None, 0.0, [0.0], tol=1e-7)
    assert est.y0 == pytest.approx(0.5, abs=1e-4)
    assert est.trace["tail_bound"] >= est.trace["diffs"][-1]


def test_infinite_horizon_cap():
    cf = load_problem_file(PROBLEM_DIR / "closed_form_1d.toml")
    f1 = lambda Tm: simulate_paths(cf, _policy(cf), 0.0, [0.0], 0.05, Tm, 10, seed=1)  # noqa: E731
    with pytest.raises(McError, match="horizon cap"):
        estimate_infinite(f1, cf, None, 0.0, [0.0], tol=1e-12, max_horizons=3)


def test_contraction_violation():
    p = make_problem(rho="4")
    with pytest.raises(ContractionError):
        _run(p, 2.0, dt=0.5, N=10)


def test_horizon_must_be_on_mesh():
    p = make_problem()
    b = simulate_paths(p, _policy(p), 0.0, [0.0], 0.1, 1.0, 5, seed=0)
    with pytest.raises(ValueError):
        solve_bsde_truncated(b, p, None, 2.0)


def test_estimate_json(tmp_path):
    p = make_problem(g="0.5", diffusion="1")
    est = _run(p, 1.0, N=50)
    est.to_json(tmp_path / "bsde.json")
    data = json.loads((tmp_path / "bsde.json").read_text())
    assert data["y0"] == est.y0
    assert data["n_paths"] == 50 and data["seed"] == 1
