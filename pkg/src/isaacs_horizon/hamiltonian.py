"""Lower/upper Hamiltonians over finite control grids.

For ``(t, x, y, p, A)`` the integrand is

    1/2 tr(sigma sigma^T A) + b . p + g(t, x, rho(t) y, p sigma, u, v)

with ``(p sigma)_k = sum_i p_i sigma_ik``. The lower Hamiltonian is
``max_u min_v`` of it, the upper one ``min_v max_u``. Everything is computed by
exhaustive enumeration; ties go to the lowest control-list index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .problem import GameProblem, gamma

__all__ = [
    "HamiltonianInput",
    "payoff_tensor",
    "lower_from_payoffs",
    "upper_from_payoffs",
    "lower_hamiltonian",
    "upper_hamiltonian",
    "isaacs_gap",
    "transformed_hamiltonian",
    "isaacs_scan",
]


@dataclass(frozen=True)
class HamiltonianInput:
    t: float
    x: np.ndarray
    y: float
    p: np.ndarray
    A: np.ndarray

    def __post_init__(self):
        x = np.atleast_1d(np.asarray(self.x, dtype=float))
        p = np.atleast_1d(np.asarray(self.p, dtype=float))
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        if p.shape != x.shape or A.shape != (x.size, x.size):
            raise ValueError("HamiltonianInput: x, p and A dimensions disagree")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "A", 0.5 * (A + A.T))
        object.__setattr__(self, "t", float(self.t))
        object.__setattr__(self, "y", float(self.y))


def _control_env_columns(problem: GameProblem):
    U, V = problem.U, problem.V
    u_cols = [U[:, k][:, None, None] for k in range(U.shape[1])]
    v_cols = [V[:, k][None, :, None] for k in range(V.shape[1])]
    return u_cols, v_cols


def payoff_tensor(problem: GameProblem, t, x, y, p, A) -> np.ndarray:
    """Integrand for every control pair at a batch of points.

    ``x``: (N, n), ``y``: (N,), ``p``: (N, n), ``A``: (N, n, n); ``t`` scalar or (N,).
    Returns an array of shape ``(|U|, |V|, N)``.
    """
    x = np.asarray(x, dtype=float)
    N = x.shape[0]
    shape = (len(problem.control_set_U), len(problem.control_set_V), N)
    u_cols, v_cols = _control_env_columns(problem)
    env = problem.env(t, [x[:, i] for i in range(x.shape[1])], u_cols, v_cols)
    b = problem.drift_values(env, shape)
    sig = problem.diffusion_values(env, shape)
    p = np.asarray(p, dtype=float)
    A = np.asarray(A, dtype=float)
    a = np.einsum("ik...,jk...->ij...", sig, sig)
    total = 0.5 * np.einsum("ij...n,nij->...n", a, A)
    total = total + np.einsum("i...n,ni->...n", b, p)
    z = np.einsum("ni,ik...n->k...n", p, sig)
    env["y"] = np.asarray(problem.rho(t)) * np.asarray(y, dtype=float)
    for k in range(problem.noise_dim):
        env[f"z{k + 1}"] = z[k]
    if problem.noise_dim == 1:
        env["z"] = z[0]
    return total + problem.generator_values(env, shape)


def lower_from_payoffs(P: np.ndarray):
    """``max_u min_v`` along the first two axes; returns (values, u_index, v_index)."""
    row_min = P.min(axis=1)
    ui = np.argmax(row_min, axis=0)
    cols = np.arange(P.shape[2])
    vi = np.argmin(P[ui, :, cols], axis=1)
    return row_min[ui, cols], ui, vi


def upper_from_payoffs(P: np.ndarray):
    """``min_v max_u`` along the first two axes; returns (values, u_index, v_index)."""
    col_max = P.max(axis=0)
    vi = np.argmin(col_max, axis=0)
    cols = np.arange(P.shape[2])
    ui = np.argmax(P[:, vi, cols], axis=0)
    return col_max[vi, cols], ui, vi


def _single(problem: GameProblem, inp: HamiltonianInput, reducer):
    P = payoff_tensor(problem, inp.t, inp.x[None, :], np.array([inp.y]), inp.p[None, :], inp.A[None])
    vals, ui, vi = reducer(P)
    u_star = problem.control_set_U[int(ui[0])]
    v_star = problem.control_set_V[int(vi[0])]
    return float(vals[0]), (u_star, v_star)


def lower_hamiltonian(problem: GameProblem, inp: HamiltonianInput):
    """``(value, (u*, v*))`` for the sup-inf Hamiltonian."""
    return _single(problem, inp, lower_from_payoffs)


def upper_hamiltonian(problem: GameProblem, inp: HamiltonianInput):
    """``(value, (u*, v*))`` for the inf-sup Hamiltonian; ``v*`` is selected first."""
    return _single(problem, inp, upper_from_payoffs)


def isaacs_gap(problem: GameProblem, inp: HamiltonianInput) -> float:
    return upper_hamiltonian(problem, inp)[0] - lower_hamiltonian(problem, inp)[0]


def transformed_hamiltonian(problem: GameProblem, t: float, x, r: float, p, A, kind: str = "lower") -> float:
    """``G * H(t, x, r/G, p/G, A/G)`` with ``G = gamma(0, t)``."""
    G = gamma(problem, 0.0, t)
    inp = HamiltonianInput(t, x, r / G, np.asarray(p, float) / G, np.asarray(A, float) / G)
    fn = lower_hamiltonian if kind == "lower" else upper_hamiltonian
    return G * fn(problem, inp)[0]


def isaacs_scan(
    problem: GameProblem,
    box: tuple,
    t_max: float = 1.0,
    samples: int = 2000,
    seed: int = 0,
    y_scale: float = 1.0,
    p_scale: float = 1.0,
) -> float:
    """Largest Isaacs gap over random ``(t, x, y, p, A)`` in ``[0, t_max] x box``."""
    rng = np.random.default_rng(seed)
    lo, hi = (np.asarray(b, float) for b in box)
    n = problem.state_dim
    t = rng.uniform(0.0, t_max, samples)
    x = lo + (hi - lo) * rng.random((samples, n))
    y = rng.uniform(-y_scale, y_scale, samples)
    p = p_scale * rng.normal(size=(samples, n))
    B = rng.normal(size=(samples, n, n))
    A = p_scale * 0.5 * (B + np.swapaxes(B, 1, 2))
    P = payoff_tensor(problem, t, x, y, p, A)
    gap = upper_from_payoffs(P)[0] - lower_from_payoffs(P)[0]
    return float(np.max(gap))
