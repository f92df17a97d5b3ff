"""Explicit monotone finite-difference solver for the HJBI equations.

The finite-horizon problem

    d/dt W - rho(t) W + H(t, x, W, DW, D^2 W) = 0,   W(T, .) = 0,

is marched backward in time with

    W(t - dt) = W(t) + dt * (H_num(t, W(t)) - rho(t) W(t)),

where the drift term is upwinded per control pair by the sign of each drift
component, second derivatives are centred, and the gradient fed to the
generator (``z = p sigma``) is centred. The infinite-horizon value is obtained
by pushing the truncation horizon out until consecutive solves agree on the
window ``[0, S]``; the stationary equation is solved by value iteration.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.interpolate import interpn

from .hamiltonian import lower_from_payoffs, upper_from_payoffs
from .problem import AssumptionReport, GameProblem, discount_integrals, estimate_constants

logger = logging.getLogger(__name__)

__all__ = [
    "SolverError",
    "CFLError",
    "NonFiniteValueError",
    "TruncationError",
    "NonContractionError",
    "PreconditionError",
    "Grid",
    "ValueField",
    "TruncationTrace",
    "make_grid",
    "cfl_bound",
    "solve_finite",
    "solve_infinite",
    "solve_stationary",
    "solve_transformed",
    "fit_log_decay",
    "write_field_csv",
]

BOUNDARY_POLICIES = ("extrapolate", "one-sided", "reflect")


class SolverError(RuntimeError):
    pass


class CFLError(SolverError):
    pass


class NonFiniteValueError(SolverError):
    pass


class TruncationError(SolverError):
    """Horizon cap reached before the Cauchy tolerance; carries the partial trace."""

    def __init__(self, message: str, trace: "TruncationTrace"):
        super().__init__(message)
        self.trace = trace


class NonContractionError(SolverError):
    pass


class PreconditionError(ValueError):
    pass


# -- grid --------------------------------------------------------------------


@dataclass(frozen=True)
class Grid:
    lo: tuple
    hi: tuple
    points: tuple
    dt: float
    window: float
    boundary: str = "extrapolate"
    dt_max: float = math.inf

    def __post_init__(self):
        if self.boundary not in BOUNDARY_POLICIES:
            raise ValueError(f"unknown boundary policy {self.boundary!r}")
        if any(p < 3 for p in self.points):
            raise ValueError("need at least 3 points per dimension")
        if self.dt > self.dt_max * (1 + 1e-12):
            raise CFLError(f"dt={self.dt:.4g} violates the stability bound dt <= {self.dt_max:.4g}")

    @property
    def n(self) -> int:
        return len(self.points)

    @property
    def shape(self) -> tuple:
        return tuple(self.points)

    @property
    def h(self) -> tuple:
        return tuple((b - a) / (p - 1) for a, b, p in zip(self.lo, self.hi, self.points))

    @property
    def axes(self) -> list:
        return [np.linspace(a, b, p) for a, b, p in zip(self.lo, self.hi, self.points)]

    @property
    def mesh(self) -> np.ndarray:
        """All grid nodes, shape ``(N, n)`` in C order."""
        grids = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)

    def steps(self, T: float) -> int:
        k = T / self.dt
        if abs(k - round(k)) > 1e-6:
            raise ValueError(f"time {T} is not a multiple of dt={self.dt}")
        return int(round(k))

    def interior_mask(self, margin: float = 0.1) -> np.ndarray:
        """Nodes at least ``margin`` (fraction of the box width) away from the boundary."""
        mask = np.ones(self.shape, dtype=bool)
        for i, ax in enumerate(self.axes):
            width = self.hi[i] - self.lo[i]
            keep = (ax >= self.lo[i] + margin * width - 1e-12) & (ax <= self.hi[i] - margin * width + 1e-12)
            idx = [None] * self.n
            idx[i] = slice(None)
            mask &= keep[tuple(idx)] if self.n > 1 else keep
        return mask

    def as_dict(self) -> dict:
        return {
            "lo": list(self.lo),
            "hi": list(self.hi),
            "points": list(self.points),
            "dt": self.dt,
            "window": self.window,
            "boundary": self.boundary,
            "dt_max": self.dt_max,
        }


def _coefficient_sweep(problem: GameProblem, mesh: np.ndarray, t):
    U, V = problem.U, problem.V
    shape = (len(U), len(V), mesh.shape[0])
    env = problem.env(
        t,
        [mesh[:, i] for i in range(mesh.shape[1])],
        [U[:, k][:, None, None] for k in range(U.shape[1])],
        [V[:, k][None, :, None] for k in range(V.shape[1])],
    )
    return env, shape


def cfl_bound(problem: GameProblem, lo, hi, points, L_y: float, t_max: float = 20.0) -> float:
    """Largest stable explicit time step on the given box."""
    h = [(b - a) / (p - 1) for a, b, p in zip(lo, hi, points)]
    mesh = np.stack([g.ravel() for g in np.meshgrid(*[np.linspace(a, b, p) for a, b, p in zip(lo, hi, points)],
                                                    indexing="ij")], axis=1)
    times = [0.0] if problem.dynamics_time_free else np.linspace(0.0, t_max, 9)
    diff_max = np.zeros(problem.state_dim)
    drift_max = np.zeros(problem.state_dim)
    for t in times:
        env, shape = _coefficient_sweep(problem, mesh, t)
        b = problem.drift_values(env, shape)
        s = problem.diffusion_values(env, shape)
        a_diag = np.sum(s**2, axis=1)
        diff_max = np.maximum(diff_max, np.abs(a_diag).reshape(problem.state_dim, -1).max(axis=1))
        drift_max = np.maximum(drift_max, np.abs(b).reshape(problem.state_dim, -1).max(axis=1))
    rho_max = float(np.max(problem.rho(np.linspace(0.0, t_max, 201))))
    total = sum(diff_max[i] / h[i] ** 2 + drift_max[i] / h[i] for i in range(problem.state_dim))
    total += rho_max + L_y * rho_max
    return 1.0 / total if total > 0 else math.inf


def make_grid(
    problem: GameProblem,
    lo=None,
    hi=None,
    points=None,
    window: float | None = None,
    dt: float | None = None,
    boundary: str | None = None,
    report: AssumptionReport | None = None,
    safety: float = 0.9,
) -> Grid:
    """Build a grid, filling unset fields from the problem's ``[grid]`` section.

    When ``dt`` is not given it is chosen as ``1/m`` (m integer) below both
    ``safety`` times the stability bound and the ``dt_cap`` grid setting
    (default 0.05), so integer horizons land on the time mesh.
    """
    cfg = problem.section("grid")
    n = problem.state_dim
    lo = tuple(float(a) for a in (lo if lo is not None else cfg.get("lo", [-3.0] * n)))
    hi = tuple(float(a) for a in (hi if hi is not None else cfg.get("hi", [3.0] * n)))
    points = tuple(int(p) for p in (points if points is not None else cfg.get("points", [61] * n)))
    if not (len(lo) == len(hi) == len(points) == n):
        raise ValueError("grid lo/hi/points must have one entry per state dimension")
    window = float(window if window is not None else cfg.get("window", 4.0))
    boundary = boundary or cfg.get("boundary", "extrapolate")
    if dt is None and "dt" in cfg:
        dt = float(cfg["dt"])
    if report is None:
        report = estimate_constants(problem, box=(lo, hi), samples=500, seed=0)
    t_max = float(problem.section("solver").get("t_max", 20.0))
    dt_max = cfl_bound(problem, lo, hi, points, report.L_y, t_max=t_max)
    if dt is None:
        # stability first; dt_cap bounds the O(dt) time-stepping error
        dt_cap = float(cfg.get("dt_cap", 0.05))
        dt = 1.0 / math.ceil(1.0 / min(safety * dt_max, dt_cap))
    steps = round(window / dt)
    if abs(steps * dt - window) > 1e-9:
        window = steps * dt
    return Grid(lo, hi, points, float(dt), window, boundary, dt_max)


# -- value fields ------------------------------------------------------------


@dataclass
class ValueField:
    grid: Grid
    horizon: float  # math.inf for infinite-horizon / stationary results
    kind: str
    times: np.ndarray
    values: np.ndarray  # (n_times, *grid.shape)
    metadata: dict = field(default_factory=dict)
    aux: dict = field(default_factory=dict, repr=False)

    def layer(self, t: float) -> np.ndarray:
        j = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[j] - t) > 1e-9:
            raise KeyError(f"no saved layer at t={t}")
        return self.values[j]

    def at(self, t: float, x) -> float:
        """Value at ``(t, x)``: nearest saved layer in time, multilinear in space."""
        j = int(np.argmin(np.abs(self.times - t)))
        pt = np.atleast_1d(np.asarray(x, dtype=float))[None, :]
        return float(interpn(tuple(self.grid.axes), self.values[j], pt, method="linear")[0])

    def sup_abs(self, margin: float = 0.1) -> np.ndarray:
        """``max_x |W(t, x)|`` over interior nodes for each saved layer."""
        mask = self.grid.interior_mask(margin)
        return np.abs(self.values[:, mask]).max(axis=1)


@dataclass
class TruncationTrace:
    horizons: list
    deltas: list
    window: float
    horizon_step: float
    rho0: float
    converged: bool = False
    slope: float = math.nan
    residual: float = math.nan
    tail_bound: float = math.nan

    def refit(self, floor: float = 1e-13) -> None:
        if len([d for d in self.deltas if d > floor]) >= 2:
            self.slope, _, self.residual = fit_log_decay(self.horizons, self.deltas, floor)
        if self.deltas:
            self.tail_bound = self.deltas[-1] / (1.0 - math.exp(-self.rho0 * self.horizon_step))

    def as_dict(self) -> dict:
        return {
            "horizons": list(map(float, self.horizons)),
            "deltas": list(map(float, self.deltas)),
            "window": self.window,
            "horizon_step": self.horizon_step,
            "rho0": self.rho0,
            "converged": self.converged,
            "fitted_slope": None if math.isnan(self.slope) else self.slope,
            "fit_residual": None if math.isnan(self.residual) else self.residual,
            "tail_bound": None if math.isnan(self.tail_bound) else self.tail_bound,
        }

    def to_json(self, path: str | Path | None = None) -> str:
        text = json.dumps(self.as_dict(), indent=2, sort_keys=True)
        if path is not None:
            Path(path).write_text(text + "\n", encoding="utf-8")
        return text


def fit_log_decay(horizons, deltas, floor: float = 1e-13):
    """Least-squares line through ``(T_k, log delta_k)`` for deltas above ``floor``.

    Returns ``(slope, intercept, rms_residual)``.
    """
    T = np.asarray(horizons, dtype=float)
    d = np.asarray(deltas, dtype=float)
    keep = d > floor
    if keep.sum() < 2:
        raise ValueError("need at least two trace points above the noise floor")
    A = np.stack([T[keep], np.ones(keep.sum())], axis=1)
    coef, *_ = np.linalg.lstsq(A, np.log(d[keep]), rcond=None)
    resid = np.log(d[keep]) - A @ coef
    return float(coef[0]), float(coef[1]), float(np.sqrt(np.mean(resid**2)))


def write_field_csv(fld: ValueField, path: str | Path, layers: str = "all") -> None:
    """CSV with columns ``t, x1..xn, W``; ``layers='first'`` writes only t=0."""
    mesh = fld.grid.mesh
    header = ",".join(["t"] + [f"x{i + 1}" for i in range(fld.grid.n)] + ["W"])
    idx = range(len(fld.times)) if layers == "all" else [0]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(header + "\n")
        for j in idx:
            vals = fld.values[j].ravel()
            for row, w in zip(mesh, vals):
                fh.write(",".join([repr(float(fld.times[j]))] + [repr(float(a)) for a in row] + [repr(float(w))]))
                fh.write("\n")


# -- numerical Hamiltonian ---------------------------------------------------


def _pad_extrapolate(W: np.ndarray) -> np.ndarray:
    P = W
    for ax in range(W.ndim):
        P = np.pad(P, [(1, 1) if a == ax else (0, 0) for a in range(W.ndim)], mode="edge")
        first = [slice(None)] * W.ndim
        second = [slice(None)] * W.ndim
        first[ax], second[ax] = 0, 2
        P[tuple(first)] = 2.0 * P[tuple(second[:ax] + [1] + second[ax + 1:])] - P[tuple(second)]
        first[ax], second[ax] = -1, -3
        P[tuple(first)] = 2.0 * P[tuple(second[:ax] + [-2] + second[ax + 1:])] - P[tuple(second)]
    return P


def differences(W: np.ndarray, grid: Grid):
    """Forward, backward and centred first differences and the second-difference matrix.

    Returned arrays are flattened to ``(N,)``. Ghost nodes come from linear
    extrapolation; with the one-sided policy, pure second differences on the
    boundary copy the adjacent interior value instead of vanishing. The
    reflect policy mirrors the first interior node across the edge, which
    keeps every stencil weight nonnegative (a reflecting boundary).
    """
    n = W.ndim
    h = grid.h
    P = np.pad(W, 1, mode="reflect") if grid.boundary == "reflect" else _pad_extrapolate(W)

    def shifted(offsets):
        return P[tuple(slice(1 + o, P.shape[a] - 1 + o) for a, o in enumerate(offsets))]

    Dp, Dm, Dc = [], [], []
    D2 = [[None] * n for _ in range(n)]
    for i in range(n):
        e = [0] * n
        e[i] = 1
        up = shifted(e)
        e[i] = -1
        dn = shifted(e)
        Dp.append(((up - W) / h[i]).ravel())
        Dm.append(((W - dn) / h[i]).ravel())
        Dc.append(((up - dn) / (2 * h[i])).ravel())
        d2 = (up - 2.0 * W + dn) / h[i] ** 2
        if grid.boundary == "one-sided":
            d2 = d2.copy()
            sl = [slice(None)] * n
            sl_in = [slice(None)] * n
            sl[i], sl_in[i] = 0, 1
            d2[tuple(sl)] = d2[tuple(sl_in)]
            sl[i], sl_in[i] = -1, -2
            d2[tuple(sl)] = d2[tuple(sl_in)]
        D2[i][i] = d2.ravel()
        for j in range(i + 1, n):
            offs = {}
            for si in (1, -1):
                for sj in (1, -1):
                    e = [0] * n
                    e[i], e[j] = si, sj
                    offs[(si, sj)] = shifted(e)
            cross = (offs[(1, 1)] - offs[(1, -1)] - offs[(-1, 1)] + offs[(-1, -1)]) / (4 * h[i] * h[j])
            D2[i][j] = D2[j][i] = cross.ravel()
    return Dp, Dm, Dc, D2


class _Scheme:
    """Evaluates the upwind numerical Hamiltonian on a fixed grid."""

    def __init__(self, problem: GameProblem, grid: Grid, kind: str):
        if kind not in ("lower", "upper"):
            raise ValueError(f"kind must be 'lower' or 'upper', got {kind!r}")
        if grid.n != problem.state_dim:
            raise ValueError("grid dimension does not match the problem's state dimension")
        self.problem = problem
        self.grid = grid
        self.reduce = lower_from_payoffs if kind == "lower" else upper_from_payoffs
        self.mesh = grid.mesh
        self._env, self.shape = _coefficient_sweep(problem, self.mesh, 0.0)
        self._cached = self._coefficients(0.0) if problem.dynamics_time_free else None

    def _coefficients(self, t):
        env = dict(self._env, t=t)
        b = self.problem.drift_values(env, self.shape)
        s = self.problem.diffusion_values(env, self.shape)
        a = np.einsum("ik...,jk...->ij...", s, s)
        return b, s, a

    def hamiltonian(self, t: float, W: np.ndarray, record: bool = False):
        pb = self.problem
        b, s, a = self._cached if self._cached is not None else self._coefficients(t)
        Dp, Dm, Dc, D2 = differences(W.reshape(self.grid.shape), self.grid)
        n = self.grid.n
        total = np.zeros(self.shape)
        for i in range(n):
            total += b[i] * np.where(b[i] > 0, Dp[i], Dm[i])
            total += 0.5 * a[i, i] * D2[i][i]
            for j in range(i + 1, n):
                total += a[i, j] * D2[i][j]
        env = dict(self._env, t=t)
        env["y"] = pb.rho(t) * W.ravel()
        for k in range(pb.noise_dim):
            env[f"z{k + 1}"] = sum(Dc[i] * s[i, k] for i in range(n))
        if pb.noise_dim == 1:
            env["z"] = env["z1"]
        total += pb.generator_values(env, self.shape)
        vals, ui, vi = self.reduce(total)
        if record:
            return vals, ui, vi
        return vals


def _check_finite(W: np.ndarray, t: float, grid: Grid) -> None:
    bad = ~np.isfinite(W)
    if bad.any():
        k = int(np.flatnonzero(bad)[0])
        x = grid.mesh[k]
        raise NonFiniteValueError(f"non-finite value at t={t:.6g}, x={x.tolist()}")


def _save_indices(grid: Grid, max_floats: float = 4e6) -> tuple[int, list[int]]:
    n_s = grid.steps(grid.window)
    n_nodes = int(np.prod(grid.shape))
    stride = max(1, math.ceil((n_s + 1) * n_nodes / max_floats))
    idx = list(range(0, n_s + 1, stride))
    if idx[-1] != n_s:
        idx.append(n_s)
    return n_s, idx


def solve_finite(
    problem: GameProblem,
    grid: Grid,
    T: float,
    kind: str = "lower",
    record_policy: bool = False,
) -> ValueField:
    """Backward march from ``W(T, .) = 0``; layers in ``[0, grid.window]`` are kept."""
    if grid.dt > grid.dt_max * (1 + 1e-12):
        raise CFLError(f"dt={grid.dt:.4g} violates the stability bound {grid.dt_max:.4g}")
    n_T = grid.steps(T)
    n_S, save = _save_indices(grid)
    if n_T < n_S:
        raise ValueError(f"horizon T={T} is shorter than the window S={grid.window}")
    scheme = _Scheme(problem, grid, kind)
    save_set = {j: k for k, j in enumerate(save)}
    values = np.zeros((len(save),) + grid.shape)
    u_idx = np.zeros((len(save), values[0].size), dtype=np.int32) if record_policy else None
    v_idx = np.zeros_like(u_idx) if record_policy else None
    W = np.zeros(int(np.prod(grid.shape)))
    dt = grid.dt
    if n_T in save_set:
        values[save_set[n_T]] = W.reshape(grid.shape)
    for j in range(n_T, 0, -1):
        t = j * dt
        if record_policy and j - 1 in save_set:
            H, ui, vi = scheme.hamiltonian(t, W, record=True)
            u_idx[save_set[j - 1]], v_idx[save_set[j - 1]] = ui, vi
        else:
            H = scheme.hamiltonian(t, W)
        W = W + dt * (H - problem.rho(t) * W)
        _check_finite(W, (j - 1) * dt, grid)
        if j - 1 in save_set:
            values[save_set[j - 1]] = W.reshape(grid.shape)
    aux = {"u_index": u_idx, "v_index": v_idx} if record_policy else {}
    return ValueField(
        grid=grid,
        horizon=float(T),
        kind=kind,
        times=np.array([j * dt for j in save]),
        values=values,
        metadata={"scheme": "explicit-upwind", "dt": dt, "h": list(grid.h), "grid": grid.as_dict()},
        aux=aux,
    )


def _rho0(problem: GameProblem, report: AssumptionReport | None, t_max: float) -> float:
    if report is not None:
        return report.rho0
    return float(np.min(problem.rho(np.linspace(0.0, t_max, 2001))))


def _truncation_loop(problem, grid, solve, tol, horizon_step, max_horizons, report):
    if tol <= 0:
        raise ValueError("tol must be positive")
    S = grid.window
    if abs(horizon_step / grid.dt - round(horizon_step / grid.dt)) > 1e-6:
        raise ValueError("horizon_step must be a multiple of dt")
    rho0 = _rho0(problem, report, S + (max_horizons + 1) * horizon_step)
    trace = TruncationTrace([], [], S, horizon_step, rho0)
    prev = solve(S + horizon_step)
    for k in range(1, max_horizons + 1):
        T_k = S + k * horizon_step
        cur = solve(T_k + horizon_step)
        delta = float(np.max(np.abs(cur.values - prev.values)))
        trace.horizons.append(T_k)
        trace.deltas.append(delta)
        logger.debug("truncation T=%g delta=%.3e", T_k, delta)
        if delta <= tol:
            trace.converged = True
            break
        prev = cur
    trace.refit()
    if not trace.converged:
        raise TruncationError(
            f"horizon cap reached: delta={trace.deltas[-1]:.3e} > tol={tol:.3e} after {max_horizons} horizons",
            trace,
        )
    return cur, trace


def solve_infinite(
    problem: GameProblem,
    grid: Grid,
    tol: float = 1e-4,
    kind: str = "lower",
    horizon_step: float = 1.0,
    max_horizons: int = 60,
    report: AssumptionReport | None = None,
    record_policy: bool = False,
):
    """Infinite-horizon value on ``[0, grid.window]`` by horizon truncation.

    Solves with ``T_k = S + k * horizon_step`` until the sup-distance between
    consecutive truncations drops to ``tol``. The returned field's metadata
    carries the geometric tail bound ``delta / (1 - exp(-rho0 * horizon_step))``.
    """
    fld, trace = _truncation_loop(
        problem,
        grid,
        lambda T: solve_finite(problem, grid, T, kind, record_policy=record_policy),
        tol,
        horizon_step,
        max_horizons,
        report,
    )
    fld.metadata.update(truncation=trace.as_dict(), tail_bound=trace.tail_bound, tol=tol)
    fld.horizon = math.inf
    return fld, trace


def solve_stationary(
    problem: GameProblem,
    grid: Grid,
    tol: float = 1e-6,
    kind: str = "lower",
    max_sweeps: int = 2_000_000,
) -> ValueField:
    """Value iteration ``w <- w + dt (H(x, w) - rho w)`` for an autonomous problem."""
    if not problem.autonomous_flag:
        raise PreconditionError("stationary solve needs an autonomous problem (no t, constant rho)")
    if grid.dt > grid.dt_max * (1 + 1e-12):
        raise CFLError(f"dt={grid.dt:.4g} violates the stability bound {grid.dt_max:.4g}")
    rho = float(problem.rho(0.0))
    kappa = 1.0 - grid.dt * rho
    stop = tol * (1.0 - kappa)
    scheme = _Scheme(problem, grid, kind)
    w = np.zeros(int(np.prod(grid.shape)))
    growth, last = 0, math.inf
    for sweep in range(1, max_sweeps + 1):
        new = w + grid.dt * (scheme.hamiltonian(0.0, w) - rho * w)
        _check_finite(new, 0.0, grid)
        upd = float(np.max(np.abs(new - w)))
        w = new
        if upd <= stop:
            break
        growth = growth + 1 if upd > last else 0
        if growth >= 10:
            raise NonContractionError(f"update grew for 10 consecutive sweeps (sweep {sweep}, update {upd:.3e})")
        last = upd
    else:
        raise NonContractionError(f"no convergence after {max_sweeps} sweeps (update {upd:.3e})")
    return ValueField(
        grid=grid,
        horizon=math.inf,
        kind="stationary",
        times=np.array([0.0]),
        values=w.reshape((1,) + grid.shape),
        metadata={"sweeps": sweep, "last_update": upd, "contraction": kappa, "tol": tol, "equation": kind,
                  "dt": grid.dt, "h": list(grid.h)},
    )


class _DiscountCache:
    """``Gamma_{0, j dt}`` on the time mesh, extended on demand."""

    def __init__(self, problem: GameProblem, dt: float):
        self.problem, self.dt = problem, dt
        self.integral = np.zeros(1)

    def gammas(self, n: int) -> np.ndarray:
        have = len(self.integral) - 1
        if n > have:
            times = np.arange(have, n + 1) * self.dt
            ext = discount_integrals(self.problem, times) if not self.problem.autonomous_flag else None
            if ext is None:
                self.integral = float(self.problem.rho(0.0)) * np.arange(n + 1) * self.dt
            else:
                # discount_integrals starts from 0; shift onto the stored tail
                ext = ext - ext[0] + self.integral[-1]
                self.integral = np.concatenate([self.integral, ext[1:]])
        return np.exp(-self.integral[: n + 1])


def _solve_transformed_finite(problem, grid, T, kind, cache: _DiscountCache) -> ValueField:
    n_T = grid.steps(T)
    n_S, save = _save_indices(grid)
    save_set = {j: k for k, j in enumerate(save)}
    G = cache.gammas(n_T)
    scheme = _Scheme(problem, grid, kind)
    values = np.zeros((len(save),) + grid.shape)
    Wt = np.zeros(int(np.prod(grid.shape)))
    dt = grid.dt
    for j in range(n_T, 0, -1):
        t = j * dt
        # H~(t, x, r, p, A) = G H(t, x, r/G, p/G, A/G); differences are linear so D(Wt)/G = D(Wt/G)
        Wt = Wt + dt * G[j] * scheme.hamiltonian(t, Wt / G[j])
        _check_finite(Wt, (j - 1) * dt, grid)
        if j - 1 in save_set:
            values[save_set[j - 1]] = (Wt / G[j - 1]).reshape(grid.shape)
    times = np.array([j * dt for j in save])
    return ValueField(grid, float(T), "transformed", times, values,
                      metadata={"scheme": "explicit-upwind-transformed", "dt": dt, "h": list(grid.h)},
                      aux={"gamma": G[save]})


def solve_transformed(
    problem: GameProblem,
    grid: Grid,
    tol: float = 1e-4,
    kind: str = "lower",
    horizon_step: float = 1.0,
    max_horizons: int = 60,
    report: AssumptionReport | None = None,
    direct: ValueField | None = None,
    compare: bool = True,
):
    """Truncation loop on the discount-transformed equation ``Wt_t + H~ = 0``.

    The transformed unknown is ``Gamma_{0,t} W``; values are divided back by
    ``Gamma_{0,t}`` so the returned field is directly comparable with
    :func:`solve_infinite`. With ``compare`` the direct solve is run (unless
    supplied) and the max pointwise discrepancy is recorded.
    """
    cache = _DiscountCache(problem, grid.dt)
    fld, trace = _truncation_loop(
        problem,
        grid,
        lambda T: _solve_transformed_finite(problem, grid, T, kind, cache),
        tol,
        horizon_step,
        max_horizons,
        report,
    )
    fld.horizon = math.inf
    fld.aux["transformed_values"] = fld.values * fld.aux["gamma"].reshape((-1,) + (1,) * grid.n)
    fld.metadata.update(truncation=trace.as_dict(), tail_bound=trace.tail_bound, tol=tol)
    if compare:
        if direct is None:
            direct, _ = solve_infinite(problem, grid, tol, kind, horizon_step, max_horizons, report)
        fld.metadata["max_discrepancy_vs_direct"] = float(np.max(np.abs(direct.values - fld.values)))
    return fld, trace
