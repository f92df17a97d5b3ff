"""Game data, problem files, the discount kernel and the a-priori constants.

A :class:`GameProblem` holds the coefficients of the controlled system

    dX = b(s, X, u, v) ds + sigma(s, X, u, v) dB,
    -dY = (g(s, X, rho(s) Y, Z, u, v) - rho(s) Y) ds - Z dB,

as compiled expressions, together with finite control sets and the declared
growth data ``|g(s, x, 0, 0, u, v)| <= beta1(s) + beta2``.  Note that the
generator sees the *discounted* value ``rho(s) * Y`` through its ``y``
argument.
"""

from __future__ import annotations

import logging
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from . import dsl

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised on 3.10 only
    import tomli as tomllib

logger = logging.getLogger(__name__)

__all__ = [
    "ProblemError",
    "ProblemFormatError",
    "DimensionError",
    "EmptyControlSetError",
    "AssumptionError",
    "QuadratureError",
    "GameProblem",
    "AssumptionReport",
    "Bounds",
    "load_problem",
    "load_problem_file",
    "adaptive_simpson",
    "gamma",
    "estimate_constants",
    "value_bounds",
]


class ProblemError(ValueError):
    """Invalid problem document."""


class ProblemFormatError(ProblemError):
    """Syntax error in a problem document or in one of its expressions."""

    def __init__(self, message: str, key: str | None = None, offset: int | None = None):
        self.key = key
        self.offset = offset
        where = ""
        if key is not None:
            where = f" in {key!r}"
            if offset is not None:
                where += f" at offset {offset}"
        super().__init__(message + where)


class DimensionError(ProblemError):
    pass


class EmptyControlSetError(ProblemError):
    pass


class AssumptionError(ValueError):
    """A standing assumption fails on the sampled data (e.g. rho not bounded away from 0)."""


class QuadratureError(ArithmeticError):
    pass


# -- quadrature --------------------------------------------------------------


def adaptive_simpson(
    f: Callable[[np.ndarray], np.ndarray],
    a: float,
    b: float,
    tol: float = 1e-10,
    max_depth: int = 48,
    max_panel: float = 1.0,
) -> float:
    """Integrate ``f`` over ``[a, b]`` by adaptive Simpson with absolute tolerance ``tol``.

    ``f`` must accept a numpy array of abscissae. The interval is first cut into
    panels no longer than ``max_panel`` so that smooth-but-wiggly integrands are
    not accepted on a lucky first estimate.
    """
    if b == a:
        return 0.0
    if b < a:
        return -adaptive_simpson(f, b, a, tol, max_depth, max_panel)
    n_panels = max(1, int(math.ceil((b - a) / max_panel)))
    edges = np.linspace(a, b, n_panels + 1)

    def fv(xs):
        vals = np.asarray(f(np.asarray(xs, dtype=float)), dtype=float)
        vals = np.broadcast_to(vals, np.shape(xs))
        if not np.all(np.isfinite(vals)):
            raise QuadratureError("integrand is not finite on the quadrature nodes")
        return vals

    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        mid = 0.5 * (lo + hi)
        f_lo, f_mid, f_hi = fv([lo, mid, hi])
        whole = (hi - lo) / 6.0 * (f_lo + 4.0 * f_mid + f_hi)
        stack = [(lo, hi, f_lo, f_mid, f_hi, whole, tol / n_panels, 0)]
        while stack:
            lo_, hi_, fa, fm, fb, s, eps, depth = stack.pop()
            m = 0.5 * (lo_ + hi_)
            lm, rm = 0.5 * (lo_ + m), 0.5 * (m + hi_)
            flm, frm = fv([lm, rm])
            left = (m - lo_) / 6.0 * (fa + 4.0 * flm + fm)
            right = (hi_ - m) / 6.0 * (fm + 4.0 * frm + fb)
            err = left + right - s
            if abs(err) <= 15.0 * eps:
                total += left + right + err / 15.0
            elif depth >= max_depth:
                raise QuadratureError(
                    f"adaptive Simpson did not converge on [{lo_:.6g}, {hi_:.6g}] "
                    f"(discontinuous or invalid integrand?)"
                )
            else:
                stack.append((lo_, m, fa, flm, fm, left, eps / 2.0, depth + 1))
                stack.append((m, hi_, fm, frm, fb, right, eps / 2.0, depth + 1))
    return float(total)


# -- problem -----------------------------------------------------------------


def _bcast(value, shape) -> np.ndarray:
    return np.broadcast_to(np.asarray(value, dtype=float), shape)


@dataclass(frozen=True)
class GameProblem:
    """Coefficients of a zero-sum recursive game with finite control sets."""

    state_dim: int
    noise_dim: int
    drift: tuple
    diffusion: tuple
    generator: dsl.Expr
    discount: dsl.Expr
    beta1: dsl.Expr
    beta2: float
    control_set_U: tuple
    control_set_V: tuple
    autonomous_flag: bool
    beta1_tail: tuple | None = None
    name: str = "problem"
    settings: Mapping[str, Any] = field(default_factory=dict, compare=False, repr=False)
    _compiled: dict = field(default_factory=dict, init=False, compare=False, repr=False)

    def __post_init__(self):
        c = self._compiled
        c["drift"] = [dsl.compile_expr(e) for e in self.drift]
        c["diffusion"] = [[dsl.compile_expr(e) for e in row] for row in self.diffusion]
        c["g"] = dsl.compile_expr(self.generator)
        c["rho"] = dsl.compile_expr(self.discount)
        c["beta1"] = dsl.compile_expr(self.beta1)
        time_free = lambda e: "t" not in dsl.free_vars(e)  # noqa: E731
        c["dynamics_time_free"] = all(time_free(e) for e in self.drift) and all(
            time_free(e) for row in self.diffusion for e in row
        )
        c["g_time_free"] = time_free(self.generator)

    # -- control sets

    @property
    def U(self) -> np.ndarray:
        return np.asarray(self.control_set_U, dtype=float)

    @property
    def V(self) -> np.ndarray:
        return np.asarray(self.control_set_V, dtype=float)

    @property
    def u_dim(self) -> int:
        return len(self.control_set_U[0])

    @property
    def v_dim(self) -> int:
        return len(self.control_set_V[0])

    @property
    def dynamics_time_free(self) -> bool:
        return self._compiled["dynamics_time_free"]

    # -- evaluation

    def env(self, t, x: Sequence, u: Sequence, v: Sequence, y=None, z: Sequence | None = None) -> dict:
        """Variable bindings for expression evaluation; every entry may be an array."""
        env: dict[str, Any] = {"t": t}
        for i, xi in enumerate(x):
            env[f"x{i + 1}"] = xi
        for k, uk in enumerate(u):
            env[f"u{k + 1}"] = uk
        for k, vk in enumerate(v):
            env[f"v{k + 1}"] = vk
        if y is not None:
            env["y"] = y
        if z is not None:
            for k, zk in enumerate(z):
                env[f"z{k + 1}"] = zk
        for alias in "xzuv":
            if f"{alias}1" in env and f"{alias}2" not in env:
                env[alias] = env[f"{alias}1"]
        return env

    def drift_values(self, env: Mapping, shape) -> np.ndarray:
        """Drift components, shape ``(n, *shape)``."""
        return np.stack([_bcast(f(env), shape) for f in self._compiled["drift"]])

    def diffusion_values(self, env: Mapping, shape) -> np.ndarray:
        """Diffusion matrix entries, shape ``(n, d, *shape)``."""
        return np.stack(
            [np.stack([_bcast(f(env), shape) for f in row]) for row in self._compiled["diffusion"]]
        )

    def generator_values(self, env: Mapping, shape) -> np.ndarray:
        return _bcast(self._compiled["g"](env), shape)

    def rho(self, t):
        """Discount rate at time(s) ``t``."""
        t_arr = np.asarray(t, dtype=float)
        out = _bcast(self._compiled["rho"]({"t": t_arr}), t_arr.shape)
        return float(out) if out.ndim == 0 else np.array(out)

    def beta1_values(self, t):
        t_arr = np.asarray(t, dtype=float)
        out = _bcast(self._compiled["beta1"]({"t": t_arr}), t_arr.shape)
        return float(out) if out.ndim == 0 else np.array(out)

    def section(self, name: str) -> dict:
        return dict(self.settings.get(name, {}))

    def with_generator(self, text: str) -> "GameProblem":
        """Copy of this problem with a different generator expression."""
        return _build(
            self.state_dim,
            self.noise_dim,
            self.drift,
            self.diffusion,
            dsl.parse(text),
            self.discount,
            self.beta1,
            self.beta2,
            self.control_set_U,
            self.control_set_V,
            self.beta1_tail,
            self.name,
            self.settings,
        )

    def with_controls(self, U=None, V=None) -> "GameProblem":
        return _build(
            self.state_dim,
            self.noise_dim,
            self.drift,
            self.diffusion,
            self.generator,
            self.discount,
            self.beta1,
            self.beta2,
            _controls(U, "U") if U is not None else self.control_set_U,
            _controls(V, "V") if V is not None else self.control_set_V,
            self.beta1_tail,
            self.name,
            self.settings,
        )


# -- loading -----------------------------------------------------------------


def _parse_expr(text: Any, key: str) -> dsl.Expr:
    if isinstance(text, (int, float)) and not isinstance(text, bool):
        return dsl.Num(float(text))
    if not isinstance(text, str):
        raise ProblemFormatError(f"expected a quoted expression, got {type(text).__name__}", key)
    try:
        return dsl.parse(text)
    except dsl.ParseError as exc:
        raise ProblemFormatError(exc.message, key, exc.offset) from exc


def _controls(raw: Any, name: str) -> tuple:
    if raw is None:
        raise ProblemFormatError(f"missing control set {name}", f"controls.{name}")
    if not isinstance(raw, (list, tuple)):
        raise ProblemFormatError(f"control set {name} must be a bracketed list", f"controls.{name}")
    if len(raw) == 0:
        raise EmptyControlSetError(f"empty control set {name}")
    vectors = []
    for item in raw:
        vec = tuple(float(a) for a in item) if isinstance(item, (list, tuple)) else (float(item),)
        if len(vec) == 0:
            raise DimensionError(f"control set {name} contains an empty vector")
        vectors.append(vec)
    if len({len(vec) for vec in vectors}) != 1:
        raise DimensionError(f"control vectors in {name} have inconsistent lengths")
    return tuple(vectors)


def _check_vars(expr: dsl.Expr, key: str, allowed: dict[str, int]) -> None:
    for name in dsl.free_vars(expr):
        if name in ("t", "y"):
            if name == "y" and "y" not in allowed:
                raise DimensionError(f"{key}: 'y' is only available in the generator")
            continue
        letter, idx = name[0], name[1:]
        limit = allowed.get(letter, 0)
        if idx == "":
            if limit != 1:
                raise DimensionError(
                    f"{key}: bare {letter!r} needs dimension 1 (dimension is {limit})"
                )
            continue
        if int(idx) > limit:
            raise DimensionError(f"{key}: {name!r} exceeds declared dimension {limit}")


def _build(n, d, drift, diffusion, g, rho, beta1, beta2, U, V, tail, name, settings) -> GameProblem:
    exprs = list(drift) + [e for row in diffusion for e in row] + [g, rho]
    autonomous = all("t" not in dsl.free_vars(e) for e in exprs)
    return GameProblem(
        state_dim=n,
        noise_dim=d,
        drift=tuple(drift),
        diffusion=tuple(tuple(row) for row in diffusion),
        generator=g,
        discount=rho,
        beta1=beta1,
        beta2=float(beta2),
        control_set_U=U,
        control_set_V=V,
        autonomous_flag=autonomous,
        beta1_tail=tail,
        name=name,
        settings=settings,
    )


def load_problem(spec_text: str, name: str = "problem") -> GameProblem:
    """Parse a problem document (see ``docs/problem_grammar.ebnf``)."""
    try:
        doc = tomllib.loads(spec_text)
    except tomllib.TOMLDecodeError as exc:
        raise ProblemFormatError(f"syntax error: {exc}") from exc

    def section(key):
        sec = doc.get(key, {})
        if not isinstance(sec, dict):
            raise ProblemFormatError(f"[{key}] must be a section")
        return sec

    dims, dyn = section("dims"), section("dynamics")
    try:
        n, d = int(dims["n"]), int(dims["d"])
    except KeyError as exc:
        raise ProblemFormatError(f"missing key {exc.args[0]!r}", "dims") from None
    if n < 1 or d < 1:
        raise DimensionError("state and noise dimensions must be positive")

    raw_drift = dyn.get("drift")
    if raw_drift is None:
        raise ProblemFormatError("missing drift", "dynamics.drift")
    if isinstance(raw_drift, (str, int, float)):
        raw_drift = [raw_drift]
    if len(raw_drift) != n:
        raise DimensionError(f"drift has {len(raw_drift)} components, expected n={n}")
    drift = [_parse_expr(s, f"dynamics.drift[{i}]") for i, s in enumerate(raw_drift)]

    raw_sigma = dyn.get("diffusion")
    if raw_sigma is None:
        raise ProblemFormatError("missing diffusion", "dynamics.diffusion")
    if isinstance(raw_sigma, (str, int, float)):
        raw_sigma = [[raw_sigma]]
    elif d == 1 and all(not isinstance(r, list) for r in raw_sigma):
        raw_sigma = [[r] for r in raw_sigma]
    if len(raw_sigma) != n or any(not isinstance(r, list) or len(r) != d for r in raw_sigma):
        raise DimensionError(f"diffusion must be an {n}x{d} matrix of expressions")
    diffusion = [
        [_parse_expr(s, f"dynamics.diffusion[{i}][{k}]") for k, s in enumerate(row)]
        for i, row in enumerate(raw_sigma)
    ]

    g = _parse_expr(section("generator").get("g", "0"), "generator.g")
    rho_raw = section("discount").get("rho")
    if rho_raw is None:
        raise ProblemFormatError("missing discount rate", "discount.rho")
    rho = _parse_expr(rho_raw, "discount.rho")

    growth = section("growth")
    beta1 = _parse_expr(growth.get("beta1", "0"), "growth.beta1")
    beta2 = float(growth.get("beta2", 0.0))
    if beta2 < 0:
        raise ProblemError("beta2 must be nonnegative")
    tail = growth.get("tail")
    if tail is not None:
        if len(tail) != 2 or tail[1] <= 0 or tail[0] < 0:
            raise ProblemFormatError("tail must be [c, lambda] with c >= 0, lambda > 0", "growth.tail")
        tail = (float(tail[0]), float(tail[1]))

    controls = section("controls")
    U, V = _controls(controls.get("U"), "U"), _controls(controls.get("V"), "V")

    dims_allowed = {"x": n, "z": d, "u": len(U[0]), "v": len(V[0])}
    no_y = {k: v for k, v in dims_allowed.items() if k in "xuv"}
    for i, e in enumerate(drift):
        _check_vars(e, f"dynamics.drift[{i}]", no_y)
    for i, row in enumerate(diffusion):
        for k, e in enumerate(row):
            _check_vars(e, f"dynamics.diffusion[{i}][{k}]", no_y)
    _check_vars(g, "generator.g", {**dims_allowed, "y": 1})
    for key, e in (("discount.rho", rho), ("growth.beta1", beta1)):
        if dsl.free_vars(e) - {"t"}:
            raise DimensionError(f"{key} may only depend on t")

    settings = {k: v for k, v in doc.items() if isinstance(v, dict)}
    name = str(doc.get("name", section("meta").get("name", name)))
    return _build(n, d, drift, diffusion, g, rho, beta1, beta2, U, V, tail, name, settings)


def load_problem_file(path: str | Path) -> GameProblem:
    path = Path(path)
    return load_problem(path.read_text(encoding="utf-8"), name=path.stem)


# -- discount kernel ---------------------------------------------------------

QUAD_TOL = 1e-10


def gamma(problem: GameProblem, t: float, s: float) -> float:
    """Discount kernel ``exp(-integral_t^s rho(r) dr)`` for ``0 <= t <= s``."""
    if t < 0 or s < t:
        raise ValueError(f"gamma needs 0 <= t <= s, got t={t}, s={s}")
    if s == t:
        return 1.0
    integral = adaptive_simpson(problem.rho, t, s, tol=QUAD_TOL)
    return math.exp(-integral)


def discount_integrals(problem: GameProblem, times: np.ndarray) -> np.ndarray:
    """Cumulative ``integral_0^{times[j]} rho`` on an increasing time mesh."""
    times = np.asarray(times, dtype=float)
    if problem.autonomous_flag:
        return float(problem.rho(0.0)) * times
    out = np.zeros_like(times)
    acc = adaptive_simpson(problem.rho, 0.0, float(times[0]), tol=QUAD_TOL) if times[0] > 0 else 0.0
    out[0] = acc
    for j in range(1, len(times)):
        acc += adaptive_simpson(problem.rho, float(times[j - 1]), float(times[j]), tol=QUAD_TOL)
        out[j] = acc
    return out


# -- constants ---------------------------------------------------------------


@dataclass(frozen=True)
class AssumptionReport:
    rho0: float
    L_x: float
    L_y: float
    L_z: float
    mu: float
    beta1_L1: float
    beta2: float
    b_sigma_bound: float
    monotone_in_y_ok: bool
    dissipativity_ok: bool
    sample_count: int
    sample_box: tuple
    rho_max: float = 0.0
    growth_ok: bool = True
    beta1_nonneg_ok: bool = True
    seed: int = 0
    t_max: float = 0.0

    def as_dict(self) -> dict:
        return {
            "rho0": self.rho0,
            "L_x": self.L_x,
            "L_y": self.L_y,
            "L_z": self.L_z,
            "mu": self.mu,
            "beta1_L1": self.beta1_L1,
            "beta2": self.beta2,
            "b_sigma_bound": self.b_sigma_bound,
            "monotone_in_y_ok": self.monotone_in_y_ok,
            "dissipativity_ok": self.dissipativity_ok,
            "growth_ok": self.growth_ok,
            "beta1_nonneg_ok": self.beta1_nonneg_ok,
            "rho_max": self.rho_max,
            "sample_count": self.sample_count,
            "sample_box": [list(self.sample_box[0]), list(self.sample_box[1])],
            "seed": self.seed,
            "t_max": self.t_max,
        }

    def diagnostics(self) -> list[str]:
        """Human-readable list of failed assumption checks."""
        out = []
        if not self.rho0 > 0:
            out.append(f"discount rate not bounded away from zero: min rho = {self.rho0:.6g}")
        if not self.monotone_in_y_ok:
            out.append("generator is not nonincreasing in y on the sampled set")
        if not self.growth_ok:
            out.append("|g(t,x,0,0,u,v)| exceeds beta1(t) + beta2 on the sampled set")
        if not self.beta1_nonneg_ok:
            out.append("beta1 takes negative values")
        if not self.dissipativity_ok:
            out.append(f"dissipativity fails: mu = {self.mu:.6g} <= -rho0 = {-self.rho0:.6g}")
        return out


def beta1_l1_norm(problem: GameProblem, t_quad: float | None = None) -> float:
    """``||beta1||_{L1(0, inf)}``: quadrature on ``[0, t_quad]`` plus the declared tail majorant."""
    growth = problem.section("growth")
    t_quad = float(t_quad if t_quad is not None else growth.get("t_quad", 60.0))
    if isinstance(problem.beta1, dsl.Num) and problem.beta1.value == 0.0:
        return 0.0
    head = adaptive_simpson(lambda s: np.abs(problem.beta1_values(s)), 0.0, t_quad, tol=1e-10)
    if problem.beta1_tail is None:
        # beta1 nonzero with no declared majorant: L1 over [0, inf) is not certified
        logger.warning("beta1 has no declared tail majorant; using the [0, %g] integral only", t_quad)
        return head
    c, lam = problem.beta1_tail
    return head + c * math.exp(-lam * t_quad) / lam


def _default_box(problem: GameProblem):
    grid = problem.section("grid")
    n = problem.state_dim
    lo = grid.get("lo", [-3.0] * n)
    hi = grid.get("hi", [3.0] * n)
    return tuple(float(a) for a in lo), tuple(float(a) for a in hi)


def estimate_constants(
    problem: GameProblem,
    box: tuple | None = None,
    samples: int = 4000,
    seed: int = 0,
    t_max: float | None = None,
    y_range: float = 5.0,
    z_range: float = 5.0,
) -> AssumptionReport:
    """Sample-based estimates of the standing-assumption constants on ``box``.

    Lipschitz constants are maxima of difference quotients over random pairs
    (pair separations are log-uniform so local slopes are resolved); the
    dissipativity constant is the largest ``mu`` consistent with every sampled
    pair. Deterministic given ``seed``.
    """
    if samples < 2:
        raise ValueError("need at least 2 samples")
    lo, hi = box if box is not None else _default_box(problem)
    lo, hi = np.asarray(lo, float), np.asarray(hi, float)
    n, d = problem.state_dim, problem.noise_dim
    if lo.shape != (n,) or hi.shape != (n,) or np.any(hi <= lo):
        raise ValueError("degenerate or mis-sized sample box")
    if t_max is None:
        t_max = float(problem.section("solver").get("t_max", 20.0))
    rng = np.random.default_rng(seed)
    m = samples
    U, V = problem.U, problem.V

    ts = np.concatenate([np.linspace(0.0, t_max, 1001), rng.uniform(0.0, t_max, m)])
    rhos = np.asarray(problem.rho(ts))
    rho0, rho_max = float(rhos.min()), float(rhos.max())

    t = rng.uniform(0.0, t_max, m)
    xa = lo + (hi - lo) * rng.random((m, n))
    direction = rng.normal(size=(m, n))
    direction /= np.maximum(np.linalg.norm(direction, axis=1, keepdims=True), 1e-300)
    width = float(np.linalg.norm(hi - lo))
    radius = np.exp(rng.uniform(math.log(1e-4 * width), math.log(width), m))
    xb = np.clip(xa + radius[:, None] * direction, lo, hi)
    ui = rng.integers(len(U), size=m)
    vi = rng.integers(len(V), size=m)
    u, v = U[ui], V[vi]
    y = rng.uniform(-y_range, y_range, m)
    yb = np.clip(y + np.exp(rng.uniform(math.log(1e-4), math.log(2 * y_range), m)) * rng.choice([-1, 1], m),
                 -y_range, y_range)
    z = rng.uniform(-z_range, z_range, (m, d))
    zdir = rng.normal(size=(m, d))
    zdir /= np.maximum(np.linalg.norm(zdir, axis=1, keepdims=True), 1e-300)
    zb = z + np.exp(rng.uniform(math.log(1e-4), math.log(2 * z_range), m))[:, None] * zdir

    cols = lambda a: [a[:, i] for i in range(a.shape[1])]  # noqa: E731
    shape = (m,)

    def g_at(x, yy, zz):
        env = problem.env(t, cols(x), cols(u), cols(v), y=yy, z=cols(zz))
        return problem.generator_values(env, shape)

    g0 = g_at(xa, y, z)
    dx = np.linalg.norm(xa - xb, axis=1)
    ok = dx > 0
    L_x = float(np.max(np.abs(g0 - g_at(xb, y, z))[ok] / dx[ok])) if ok.any() else 0.0

    dy = y - yb
    gy = g_at(xa, yb, z)
    oky = dy != 0
    L_y = float(np.max(np.abs(g0 - gy)[oky] / np.abs(dy[oky]))) if oky.any() else 0.0
    scale = max(1.0, float(np.max(np.abs(g0))))
    monotone = bool(np.all((g0 - gy) * dy <= 1e-12 * scale * np.maximum(np.abs(dy), 1.0)))

    dz = np.linalg.norm(z - zb, axis=1)
    okz = dz > 0
    L_z = float(np.max(np.abs(g0 - g_at(xa, y, zb))[okz] / dz[okz])) if okz.any() else 0.0

    env_a = problem.env(t, cols(xa), cols(u), cols(v))
    env_b = problem.env(t, cols(xb), cols(u), cols(v))
    ba, bb = problem.drift_values(env_a, shape), problem.drift_values(env_b, shape)
    sa, sb = problem.diffusion_values(env_a, shape), problem.diffusion_values(env_b, shape)
    delta_x = (xa - xb).T
    dsig = np.sqrt(np.sum((sa - sb) ** 2, axis=(0, 1)))
    form = 2.0 * np.sum(delta_x * (ba - bb), axis=0) + dsig**2 + 2.0 * L_z * dsig * dx
    mu = float(np.min(-form[ok] / dx[ok] ** 2)) if ok.any() else math.inf
    b_sigma = float(max(np.max(np.linalg.norm(ba, axis=0)), np.max(np.sqrt(np.sum(sa**2, axis=(0, 1))))))

    env0 = problem.env(t, cols(xa), cols(u), cols(v), y=np.zeros(m), z=[np.zeros(m)] * d)
    g_origin = np.abs(problem.generator_values(env0, shape))
    b1 = np.asarray(problem.beta1_values(t))
    growth_ok = bool(np.all(g_origin <= b1 + problem.beta2 + 1e-9 * max(1.0, problem.beta2)))
    b1_nonneg = bool(np.all(np.asarray(problem.beta1_values(ts)) >= 0))

    return AssumptionReport(
        rho0=rho0,
        L_x=L_x,
        L_y=L_y,
        L_z=L_z,
        mu=mu,
        beta1_L1=beta1_l1_norm(problem),
        beta2=problem.beta2,
        b_sigma_bound=b_sigma,
        monotone_in_y_ok=monotone,
        dissipativity_ok=bool(mu > -rho0),
        sample_count=m,
        sample_box=(tuple(lo.tolist()), tuple(hi.tolist())),
        rho_max=rho_max,
        growth_ok=growth_ok,
        beta1_nonneg_ok=b1_nonneg,
        seed=seed,
        t_max=t_max,
    )


@dataclass(frozen=True)
class Bounds:
    M1_inf: float
    M2_inf: float
    Lip_W: float | None
    beta1_L1: float
    beta2: float
    rho0: float
    L_x: float
    L_z: float
    mu: float

    def M1(self, xi_bound: float) -> float:
        """Sup bound on Y for terminal data bounded by ``xi_bound``."""
        return xi_bound + self.beta1_L1 + self.beta2 / self.rho0

    def M2(self, xi_bound: float) -> float:
        m1 = self.M1(xi_bound)
        return 4.0 * m1 * (self.beta1_L1 + self.beta2 / self.rho0) + 2.0 * m1**2 * (
            1.0 + 2.0 * self.L_z**2 / self.rho0
        )

    # forward-backward versions: same formulas with B_psi in place of ||xi||
    M3 = M1
    M4 = M2

    def lipschitz_Y(self, L_psi: float = 0.0) -> float | None:
        """Spatial Lipschitz bound for Y with terminal data of Lipschitz constant ``L_psi``."""
        if not self.mu > -self.rho0:
            return None
        return math.sqrt(L_psi**2 + self.L_x**2 / (self.rho0 * (self.rho0 + self.mu)))

    def as_dict(self) -> dict:
        return {"M1_inf": self.M1_inf, "M2_inf": self.M2_inf, "Lip_W": self.Lip_W}


def value_bounds(report: AssumptionReport) -> Bounds:
    """Closed-form bounds from the estimated constants."""
    if not report.rho0 > 0:
        raise AssumptionError(f"rho0 must be positive, got {report.rho0}")
    r = report.rho0
    m1 = report.beta1_L1 + report.beta2 / r
    m2 = 4.0 * m1 * (report.beta1_L1 + report.beta2 / r) + 2.0 * m1**2 * (1.0 + 2.0 * report.L_z**2 / r)
    lip = report.L_x / math.sqrt(r * (r + report.mu)) if report.mu > -r else None
    return Bounds(
        M1_inf=m1,
        M2_inf=m2,
        Lip_W=lip,
        beta1_L1=report.beta1_L1,
        beta2=report.beta2,
        rho0=r,
        L_x=report.L_x,
        L_z=report.L_z,
        mu=report.mu,
    )
