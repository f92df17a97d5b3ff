"""Forward simulation and least-squares Monte Carlo for frozen-policy BSDEs.

Paths are generated with Euler-Maruyama. Every path owns a Philox stream keyed
by ``(seed, path index)``, so a path is the same no matter how many other paths
are drawn, and a longer horizon extends a shorter one with the same prefix.

The backward recursion regresses on tensor polynomials (degree <= 2 per state
coordinate) and uses a theta-scheme for the time integral of the driver
``f(t, x, y, z) = g(t, x, rho(t) y, z, u, v) - rho(t) y``:

    Y_j = E[Y_{j+1} + (1 - theta) dt f_{j+1} | X_j] + theta dt f_j(Y_j, Z_j),
    Z_j = E[Y_{j+1} dB_j | X_j] / dt.

The implicit part is resolved by a fixed number of fixed-point passes.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path
from typing import Callable

import numpy as np

from . import dsl
from .problem import AssumptionReport, GameProblem, estimate_constants

__all__ = [
    "McError",
    "SingularRegressionError",
    "ContractionError",
    "NonFiniteStateError",
    "ControlPolicy",
    "PathBundle",
    "BsdeEstimate",
    "simulate_paths",
    "solve_bsde_truncated",
    "estimate_infinite",
]


class McError(RuntimeError):
    pass


class SingularRegressionError(McError):
    def __init__(self, layer: int, message: str):
        super().__init__(f"layer {layer}: {message}")
        self.layer = layer


class ContractionError(McError):
    pass


class NonFiniteStateError(McError):
    def __init__(self, path: int, step: int):
        super().__init__(f"non-finite state on path {path} at step {step}")
        self.path, self.step = path, step


# -- policies ----------------------------------------------------------------


@dataclass(frozen=True)
class ControlPolicy:
    """Either a constant control pair or a feedback table on a solver grid."""

    mode: str
    u: tuple | None = None
    v: tuple | None = None
    table: dict | None = field(default=None, repr=False)

    @classmethod
    def constant(cls, problem: GameProblem, u, v) -> "ControlPolicy":
        u = tuple(float(a) for a in np.atleast_1d(u))
        v = tuple(float(a) for a in np.atleast_1d(v))
        if u not in problem.control_set_U or v not in problem.control_set_V:
            raise ValueError(f"control pair {u}, {v} is not in U x V")
        return cls("constant", u, v)

    @classmethod
    def from_field(cls, problem: GameProblem, fld) -> "ControlPolicy":
        """Feedback table from a field solved with ``record_policy=True``."""
        if "u_index" not in fld.aux or fld.aux["u_index"] is None:
            raise ValueError("field carries no control indices; solve with record_policy=True")
        g = fld.grid
        table = {
            "lo": np.asarray(g.lo, float),
            "h": np.asarray(g.h, float),
            "points": np.asarray(g.points),
            "times": np.asarray(fld.times, float),
            "u_index": fld.aux["u_index"],
            "v_index": fld.aux["v_index"],
            "U": problem.U,
            "V": problem.V,
        }
        return cls("feedback", table=table)

    def indices_free(self) -> bool:
        return self.mode == "constant"

    def controls(self, t: float, X: np.ndarray):
        """Control values for states ``X`` of shape (N, n): arrays (N, du), (N, dv)."""
        N = X.shape[0]
        if self.mode == "constant":
            return np.tile(self.u, (N, 1)), np.tile(self.v, (N, 1))
        tb = self.table
        j = int(np.argmin(np.abs(tb["times"] - t)))
        cell = np.rint((X - tb["lo"]) / tb["h"]).astype(np.int64)
        cell = np.clip(cell, 0, tb["points"] - 1)
        flat = np.ravel_multi_index(tuple(cell.T), tuple(tb["points"]))
        return tb["U"][tb["u_index"][j, flat]], tb["V"][tb["v_index"][j, flat]]


# -- paths -------------------------------------------------------------------


@dataclass
class PathBundle:
    """Simulated paths on the mesh ``t0 + j dt``, ``j = 0..M``.

    After a path leaves the exit box its state is frozen at the stop index.
    """

    t0: float
    dt: float
    seed: int
    X: np.ndarray  # (N, M+1, n)
    dB: np.ndarray  # (N, M, d)
    u: np.ndarray  # (N, M, du)
    v: np.ndarray  # (N, M, dv)
    stop_index: np.ndarray  # (N,)
    exited: np.ndarray  # (N,) bool

    @property
    def n_paths(self) -> int:
        return self.X.shape[0]

    @property
    def steps(self) -> int:
        return self.dB.shape[1]

    @property
    def T_max(self) -> float:
        return self.t0 + self.steps * self.dt

    _MAGIC = b"PBND"
    _HEADER = struct.Struct("<4sIQQIIIIQdd")

    def save(self, path: str | Path) -> None:
        """Binary layout: fixed little-endian header, then one row-major block per path.

        Header: magic ``PBND``, version, N, M, n, d, du, dv, seed, t0, dt.
        Block: stop index (int64), exited flag (uint8), X, dB, u, v (float64).
        """
        N, M1, n = self.X.shape
        d, du, dv = self.dB.shape[2], self.u.shape[2], self.v.shape[2]
        with open(path, "wb") as fh:
            fh.write(self._HEADER.pack(self._MAGIC, 1, N, M1 - 1, n, d, du, dv, self.seed, self.t0, self.dt))
            for i in range(N):
                fh.write(struct.pack("<qB", int(self.stop_index[i]), int(self.exited[i])))
                for arr in (self.X[i], self.dB[i], self.u[i], self.v[i]):
                    fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path: str | Path) -> "PathBundle":
        raw = Path(path).read_bytes()
        magic, version, N, M, n, d, du, dv, seed, t0, dt = cls._HEADER.unpack_from(raw, 0)
        if magic != cls._MAGIC or version != 1:
            raise ValueError("not a path bundle file")
        off = cls._HEADER.size
        sizes = [(M + 1) * n, M * d, M * du, M * dv]
        block = 9 + 8 * sum(sizes)
        if len(raw) != off + N * block:
            raise ValueError("truncated path bundle file")
        X, dB = np.empty((N, M + 1, n)), np.empty((N, M, d))
        u, v = np.empty((N, M, du)), np.empty((N, M, dv))
        stop, exited = np.empty(N, dtype=np.int64), np.empty(N, dtype=bool)
        for i in range(N):
            stop[i], flag = struct.unpack_from("<qB", raw, off)
            exited[i] = bool(flag)
            p = off + 9
            for arr, k in zip((X, dB, u, v), sizes):
                arr[i] = np.frombuffer(raw, dtype="<f8", count=k, offset=p).reshape(arr.shape[1:])
                p += 8 * k
            off += block
        return cls(t0, dt, seed, X, dB, u, v, stop, exited)


def _increments(seed: int, N: int, M: int, d: int, dt: float) -> np.ndarray:
    out = np.empty((N, M, d))
    sd = math.sqrt(dt)
    for i in range(N):
        rng = np.random.Generator(np.random.Philox(key=np.array([seed, i], dtype=np.uint64)))
        out[i] = sd * rng.standard_normal((M, d))
    return out


def simulate_paths(
    problem: GameProblem,
    policy: ControlPolicy,
    t0: float,
    x0,
    dt: float,
    T_max: float,
    N: int,
    seed: int,
    exit_box: tuple | None = None,
) -> PathBundle:
    """Euler-Maruyama paths from ``(t0, x0)`` up to ``T_max``."""
    if not dt > 0 or N < 1:
        raise ValueError("need dt > 0 and N >= 1")
    n, d = problem.state_dim, problem.noise_dim
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if x0.shape != (n,):
        raise ValueError(f"x0 must have {n} components")
    M = int(round((T_max - t0) / dt))
    if M < 1 or abs(M * dt - (T_max - t0)) > 1e-9 * max(1.0, T_max):
        raise ValueError("T_max - t0 must be a positive multiple of dt")
    dB = _increments(seed, N, M, d, dt)
    X = np.empty((N, M + 1, n))
    X[:, 0] = x0
    uu = np.empty((N, M, problem.u_dim))
    vv = np.empty((N, M, problem.v_dim))
    stop = np.full(N, M, dtype=np.int64)
    exited = np.zeros(N, dtype=bool)
    if exit_box is not None:
        lo, hi = (np.asarray(b, float) for b in exit_box)
        outside = lambda x: np.any((x <= lo) | (x >= hi), axis=1)  # noqa: E731
        start_out = outside(X[:, 0])
        stop[start_out], exited[start_out] = 0, True
    alive = ~exited
    shape = (N,)
    for j in range(M):
        t = t0 + j * dt
        x = X[:, j]
        u, v = policy.controls(t, x)
        uu[:, j], vv[:, j] = u, v
        env = problem.env(t, [x[:, i] for i in range(n)], [u[:, k] for k in range(u.shape[1])],
                          [v[:, k] for k in range(v.shape[1])])
        b = problem.drift_values(env, shape)
        s = problem.diffusion_values(env, shape)
        step = b.T * dt + np.einsum("ikn,nk->ni", s, dB[:, j])
        nxt = np.where(alive[:, None], x + step, x)
        bad = ~np.all(np.isfinite(nxt), axis=1)
        if bad.any():
            raise NonFiniteStateError(int(np.flatnonzero(bad)[0]), j + 1)
        X[:, j + 1] = nxt
        if exit_box is not None:
            left = alive & outside(nxt)
            stop[left], exited[left] = j + 1, True
            alive &= ~left
    return PathBundle(float(t0), float(dt), int(seed), X, dB, uu, vv, stop, exited)


# -- backward recursion ------------------------------------------------------


@dataclass
class BsdeEstimate:
    y0: float
    se: float
    horizon: float
    terminal: str
    dt: float
    n_paths: int
    seed: int
    z0: np.ndarray
    coefficients: list = field(default_factory=list, repr=False)
    Z: np.ndarray | None = field(default=None, repr=False)
    max_abs_y: float = 0.0
    theta: float = 0.5
    trace: dict = field(default_factory=dict)

    def as_dict(self, include_coefficients: bool = False) -> dict:
        out = {
            "y0": self.y0,
            "se": self.se,
            "horizon": self.horizon,
            "terminal": self.terminal,
            "dt": self.dt,
            "n_paths": self.n_paths,
            "seed": self.seed,
            "z0": [float(a) for a in self.z0],
            "max_abs_y": self.max_abs_y,
            "theta": self.theta,
        }
        if self.trace:
            out["trace"] = self.trace
        if include_coefficients:
            out["coefficients"] = [c.tolist() for c in self.coefficients]
        return out

    def to_json(self, path: str | Path | None = None, include_coefficients: bool = False) -> str:
        text = json.dumps(self.as_dict(include_coefficients), indent=2, sort_keys=True)
        if path is not None:
            Path(path).write_text(text + "\n", encoding="utf-8")
        return text


def _basis(X: np.ndarray, degree: int, layer: int) -> np.ndarray:
    """Tensor polynomials in standardized active coordinates; constant columns dropped."""
    mean, std = X.mean(axis=0), X.std(axis=0)
    keep = std > 1e-12 * (1.0 + np.abs(mean))
    Xs = (X[:, keep] - mean[keep]) / std[keep]
    k = Xs.shape[1]
    cols = []
    for powers in product(range(degree + 1), repeat=k):
        col = np.ones(X.shape[0])
        for i, p in enumerate(powers):
            if p:
                col = col * Xs[:, i] ** p
        cols.append(col)
    return np.stack(cols, axis=1)


def _layer_basis(X: np.ndarray, degree: int, layer: int, min_paths: int = 10) -> np.ndarray:
    """Highest-degree basis (up to ``degree``) with ``min_paths`` paths per basis function."""
    for deg in range(degree, 0, -1):
        Phi = _basis(X, deg, layer)
        if X.shape[0] >= min_paths * Phi.shape[1]:
            return Phi
    return np.ones((X.shape[0], 1))


def _regress(Phi: np.ndarray, targets: np.ndarray, layer: int):
    coef, _, rank, _ = np.linalg.lstsq(Phi, targets, rcond=None)
    if rank < Phi.shape[1]:
        raise SingularRegressionError(layer, f"rank-deficient basis (rank {rank} < {Phi.shape[1]})")
    return Phi @ coef, coef


def _terminal_fn(problem: GameProblem, terminal) -> tuple[Callable | None, str]:
    if terminal is None or (isinstance(terminal, str) and terminal.strip() in ("", "zero")):
        return None, "zero"
    if callable(terminal):
        return terminal, getattr(terminal, "__name__", "callable")
    expr = dsl.parse(terminal) if isinstance(terminal, str) else terminal
    extra = dsl.free_vars(expr) - {f"x{i + 1}" for i in range(problem.state_dim)} - {"x"}
    if extra:
        raise ValueError(f"terminal data may only depend on x, found {sorted(extra)}")
    fn = dsl.compile_expr(expr)

    def psi(X):
        env = {f"x{i + 1}": X[:, i] for i in range(X.shape[1])}
        env["x"] = X[:, 0]
        return np.broadcast_to(np.asarray(fn(env), dtype=float), (X.shape[0],)).copy()

    return psi, dsl.to_source(expr)


def solve_bsde_truncated(
    bundle: PathBundle,
    problem: GameProblem,
    policy: ControlPolicy | None,
    T: float,
    terminal=None,
    degree: int = 2,
    theta: float = 0.5,
    fixed_point_iters: int = 2,
    L_y: float | None = None,
    keep_paths: bool = False,
) -> BsdeEstimate:
    """Backward regression on ``bundle`` with horizon ``T``.

    Paths that left the exit box before ``T`` end with ``psi(X_stop)``; all
    others end with zero. ``policy`` is only recorded: the controls used are
    those stored in the bundle.
    """
    J = int(round((T - bundle.t0) / bundle.dt))
    if J < 1 or J > bundle.steps or abs(J * bundle.dt - (T - bundle.t0)) > 1e-9 * max(1.0, T):
        raise ValueError(f"horizon {T} is not on the bundle mesh (t0={bundle.t0}, T_max={bundle.T_max})")
    if not 0.0 <= theta <= 1.0:
        raise ValueError("theta must lie in [0, 1]")
    dt, t0 = bundle.dt, bundle.t0
    N, n, d = bundle.n_paths, problem.state_dim, problem.noise_dim
    times = t0 + dt * np.arange(J + 1)
    rho_vals = np.asarray(problem.rho(times), dtype=float) * np.ones(J + 1)
    if L_y is None:
        L_y = estimate_constants(problem, samples=500, seed=0).L_y
    kappa = theta * dt * float(rho_vals.max()) * (1.0 + L_y)
    if kappa >= 1.0:
        raise ContractionError(f"implicit step does not contract: theta*dt*rho_max*(1+L_y) = {kappa:.3g} >= 1")

    psi, descriptor = _terminal_fn(problem, terminal)
    stop = np.minimum(bundle.stop_index, J)
    exited = bundle.exited & (bundle.stop_index <= J)
    idx = np.arange(N)
    Xs = bundle.X[idx, stop]
    term = np.zeros(N)
    if psi is not None and exited.any():
        term[exited] = psi(Xs[exited])

    def driver(j, rows, y, z):
        x = bundle.X[rows, j]
        c = min(j, bundle.steps - 1)
        u, v = bundle.u[rows, c], bundle.v[rows, c]
        env = problem.env(times[j], [x[:, i] for i in range(n)], [u[:, k] for k in range(u.shape[1])],
                          [v[:, k] for k in range(v.shape[1])], y=rho_vals[j] * y,
                          z=[z[:, k] for k in range(d)])
        return problem.generator_values(env, (len(rows),)) - rho_vals[j] * y

    # driver at each path's own end point, with Z = 0 there
    f_next = np.zeros(N)
    for j in np.unique(stop):
        rows = idx[stop == j]
        f_next[rows] = driver(int(j), rows, term[rows], np.zeros((len(rows), d)))

    Y = term.copy()
    # pathwise terminal value plus driver integral; its spread gives the standard error
    pathwise = term.copy()
    Z_store = np.zeros((N, J, d)) if keep_paths else None
    coefs = [None] * J
    max_abs = float(np.max(np.abs(Y))) if N else 0.0
    se = 0.0
    z0 = np.zeros(d)
    for j in range(J - 1, -1, -1):
        rows = idx[stop > j]
        if len(rows) == 0:
            continue
        Yn, fn_ = Y[rows], f_next[rows]
        target = Yn + (1.0 - theta) * dt * fn_
        Phi = _layer_basis(bundle.X[rows, j], degree, j)
        zt = Yn[:, None] * bundle.dB[rows, j] / dt
        both = np.concatenate([target[:, None], zt], axis=1)
        fitted, coef = _regress(Phi, both, j)
        coefs[j] = coef
        cond, z = fitted[:, 0], fitted[:, 1:]
        y = cond.copy()
        for _ in range(fixed_point_iters):
            y = cond + theta * dt * driver(j, rows, y, z)
        if j == 0:
            z0 = z.mean(axis=0)
        Y[rows] = y
        f_new = driver(j, rows, y, z)
        pathwise[rows] += dt * (theta * f_new + (1.0 - theta) * fn_)
        f_next[rows] = f_new
        if keep_paths:
            Z_store[rows, j] = z
        max_abs = max(max_abs, float(np.max(np.abs(y))))
    se = float(np.std(pathwise, ddof=1) / math.sqrt(N)) if N > 1 else 0.0
    return BsdeEstimate(
        y0=float(np.mean(Y)),
        se=se,
        horizon=float(T),
        terminal=descriptor,
        dt=dt,
        n_paths=N,
        seed=bundle.seed,
        z0=np.asarray(z0),
        coefficients=[c for c in coefs if c is not None],
        Z=Z_store,
        max_abs_y=max_abs,
        theta=theta,
    )


def estimate_infinite(
    bundle_factory: Callable[[float], PathBundle],
    problem: GameProblem,
    policy: ControlPolicy | None,
    t0: float,
    x0,
    tol: float,
    T0: float = 1.0,
    horizon_step: float = 1.0,
    max_horizons: int = 40,
    report: AssumptionReport | None = None,
    **bsde_kwargs,
) -> BsdeEstimate:
    """Zero-terminal truncated BSDEs at ``T_k = t0 + T0 + k * horizon_step`` until ``Y_0`` settles.

    ``bundle_factory(T_max)`` must return paths from ``(t0, x0)`` covering ``T_max``;
    with a fixed seed, longer bundles extend shorter ones, so consecutive
    estimates share random numbers.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if report is None:
        report = estimate_constants(problem, samples=500, seed=0)
    if not report.rho0 > 0:
        raise ValueError(f"discount rate must be bounded away from zero, got rho0={report.rho0}")
    bsde_kwargs.setdefault("L_y", report.L_y)
    cover = t0 + T0 + 8 * horizon_step
    bundle = bundle_factory(cover)
    if not np.allclose(bundle.X[:, 0], np.atleast_1d(x0)) or abs(bundle.t0 - t0) > 1e-12:
        raise ValueError("bundle does not start at (t0, x0)")
    horizons, values, diffs = [], [], []
    prev = None
    for k in range(max_horizons + 1):
        T = t0 + T0 + k * horizon_step
        if T > bundle.T_max + 1e-12:
            cover = max(2 * (cover - t0), T - t0) + t0
            bundle = bundle_factory(cover)
        est = solve_bsde_truncated(bundle, problem, policy, T, **bsde_kwargs)
        horizons.append(T)
        values.append(est.y0)
        if prev is not None:
            diffs.append(abs(est.y0 - prev.y0))
            if diffs[-1] <= tol:
                tail = diffs[-1] / (1.0 - math.exp(-report.rho0 * horizon_step))
                est.trace = {"horizons": horizons, "y0": values, "diffs": diffs, "tail_bound": tail,
                             "converged": True}
                return est
        prev = est
    raise McError(f"horizon cap reached: last |dY0| = {diffs[-1]:.3e} > tol = {tol:.3e}")

