"""Explicit solution of the Brownian indicator game and its counterexample.

Brownian motion, ``l = 1`` on [-1, 1], ``u = lambda/(lambda + r)`` on [-1, 1]
and ``1/(1 + eps)`` elsewhere.  With ``theta = sqrt(2r)`` and
``phi = sqrt(2(lambda + r))`` the value is an even, C^1 function made of five
exponential branches glued at +-1 and +-x*.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .model import (
    BROWNIAN,
    Constant,
    DiffusionSpec,
    FunctionSpec,
    GameSpec,
    Interval,
    IntervalUnion,
    InvalidParametersError,
    StoppingSets,
    eval_function,
)

__all__ = [
    "ClosedFormSolution",
    "DiagnosticsReport",
    "eps_lower_bound",
    "solve_x_star",
    "build_solution",
    "eval_v",
    "eval_dv",
    "eval_d2v",
    "indicator_payoffs",
    "indicator_game",
    "optimal_sets",
    "verify_solution",
    "build_counterexample_payoffs",
    "counterexample_game",
    "emit_figure_data",
]


@dataclass(frozen=True)
class ClosedFormSolution:
    r: float
    lam: float
    theta: float
    phi: float
    eps: float
    x_star: float
    coeff_a: float
    coeff_b: float
    coeff_c: float
    coeff_d: float

    @property
    def kappa(self) -> float:
        """(phi^2 - theta^2)/phi^2, which equals lambda/(lambda + r)."""
        return (self.phi**2 - self.theta**2) / self.phi**2

    @property
    def u_outside(self) -> float:
        return 1.0 / (1.0 + self.eps)

    def to_dict(self) -> dict:
        return asdict(self)


def eps_lower_bound(theta: float, phi: float) -> float:
    """Smallest admissible eps (exclusive) for given theta < phi."""
    if not (phi > theta > 0):
        raise InvalidParametersError("need phi > theta > 0")
    s, c = math.sinh(phi), math.cosh(phi)
    return (theta**2 * s + theta * phi * c) / ((phi**2 - theta**2) * s)


def _f(theta: float, phi: float, x: float) -> float:
    return theta * (theta * math.sinh(phi * x) + phi * math.cosh(phi * x))


def solve_x_star(theta: float, phi: float, eps: float, rtol: float = 1e-10) -> float:
    """Free boundary x* > 1 by bisection on the increasing function f.

    The bracket starts at [1, 2] and its upper end doubles until f exceeds
    the target; bisection then runs until the bracket collapses to adjacent
    floats.  Raises if the relative residual still exceeds ``rtol``.
    """
    bound = eps_lower_bound(theta, phi)
    target = (phi**2 - theta**2) * eps * math.sinh(phi)
    if not eps > bound or not _f(theta, phi, 1.0) < target:
        raise InvalidParametersError(f"eps={eps} is not above the lower bound {bound:.6g}: no root above 1")
    lo, hi = 1.0, 2.0
    while _f(theta, phi, hi) < target:
        lo, hi = hi, 2.0 * hi
    mid = 0.5 * (lo + hi)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        resid = _f(theta, phi, mid) - target
        if resid == 0 or mid in (lo, hi):
            break
        if resid < 0:
            lo = mid
        else:
            hi = mid
    if abs(_f(theta, phi, mid) - target) > rtol * target:
        raise ArithmeticError("bisection residual above tolerance")
    return mid


def build_solution(r: float, lam: float, eps: float) -> ClosedFormSolution:
    if not (r > 0 and lam > 0):
        raise InvalidParametersError("r and lambda must be positive")
    theta, phi = math.sqrt(2 * r), math.sqrt(2 * (lam + r))
    xs = solve_x_star(theta, phi, eps)
    k = 1.0 / (1.0 + eps)
    p2 = phi**2
    a = (theta**2 - theta * phi) / p2 * k * math.exp(-phi * xs) - (p2 - theta**2) / p2 * eps * k * math.exp(-phi)
    b = (theta**2 - theta * phi) / (2 * p2) * k * math.exp(-phi * xs)
    c = (theta**2 + theta * phi) / (2 * p2) * k * math.exp(phi * xs)
    d = k * math.exp(theta * xs)
    return ClosedFormSolution(r, lam, theta, phi, eps, xs, a, b, c, d)


# --------------------------------------------------------------------------
# branches on |x|; index 0: |x| <= 1, 1: 1 < |x| <= x*, 2: |x| > x*


def _branch_values(sol: ClosedFormSolution, y, which: int, order: int):
    """order-th derivative (in y) of branch ``which`` at y >= 0."""
    ph, th = sol.phi, sol.theta
    if which == 0:
        if order == 0:
            return sol.coeff_a * np.cosh(ph * y) + sol.kappa
        if order == 1:
            return sol.coeff_a * ph * np.sinh(ph * y)
        return sol.coeff_a * ph**2 * np.cosh(ph * y)
    if which == 1:
        ep, em = sol.coeff_b * np.exp(ph * y), sol.coeff_c * np.exp(-ph * y)
        if order == 0:
            return ep + em + sol.kappa * sol.u_outside
        if order == 1:
            return ph * (ep - em)
        return ph**2 * (ep + em)
    e = sol.coeff_d * np.exp(-th * y)
    return e * (-th) ** order


def _eval(sol: ClosedFormSolution, x, order: int):
    xa = np.asarray(x, dtype=float)
    y = np.abs(xa)
    which = np.where(y <= 1.0, 0, np.where(y <= sol.x_star, 1, 2))
    out = np.empty_like(y)
    for w in range(3):
        m = which == w
        out[m] = _branch_values(sol, y[m], w, order)
    if order == 1:
        out = out * np.sign(xa)
    return float(out) if np.ndim(x) == 0 else out


def eval_v(sol: ClosedFormSolution, x):
    return _eval(sol, x, 0)


def eval_dv(sol: ClosedFormSolution, x):
    return _eval(sol, x, 1)


def eval_d2v(sol: ClosedFormSolution, x):
    return _eval(sol, x, 2)


# --------------------------------------------------------------------------
# payoffs


def indicator_payoffs(sol: ClosedFormSolution) -> tuple[FunctionSpec, FunctionSpec]:
    k = sol.u_outside
    l = FunctionSpec.indicator(-1.0, 1.0)
    u = FunctionSpec.indicator(-1.0, 1.0, inside=sol.lam / (sol.lam + sol.r), outside=k)
    return l, u


def indicator_game(r: float = 1.0, lam: float = 1.0, eps: float = 9.0, mode: str = "common") -> GameSpec:
    sol = build_solution(r, lam, eps)
    l, u = indicator_payoffs(sol)
    return GameSpec(DiffusionSpec(BROWNIAN, 0.0, 1.0), l, u, r, lam, mode)


def optimal_sets(sol: ClosedFormSolution) -> StoppingSets:
    """A = [-1, 1], B = [-x*, -1) U (1, x*]."""
    xs = sol.x_star
    sup = IntervalUnion([Interval(-1.0, 1.0, True, True)])
    inf = IntervalUnion([Interval(-xs, -1.0, True, False), Interval(1.0, xs, False, True)])
    return StoppingSets(sup, inf)


def _l_reference(x):
    return (np.abs(x) <= 1.0).astype(float)


def _u_reference(sol, x):
    return np.where(np.abs(x) <= 1.0, sol.lam / (sol.lam + sol.r), sol.u_outside)


@dataclass
class DiagnosticsReport:
    grid_step: float
    span: float
    value_at_x_star_error: float
    symmetry_error: float
    monotone_violation: float
    c1_mismatch: dict
    hjb_residual: float
    ordering: dict
    signs_ok: bool
    tolerances: dict = field(default_factory=lambda: {"c1": 1e-10, "hjb": 1e-8, "v_xstar": 1e-12, "margin": 1e-12})

    @property
    def passed(self) -> bool:
        tol = self.tolerances
        return (
            self.signs_ok
            and self.value_at_x_star_error <= tol["v_xstar"]
            and self.symmetry_error == 0.0
            and self.monotone_violation == 0.0
            and max(self.c1_mismatch.values()) <= tol["c1"]
            and self.hjb_residual <= tol["hjb"]
            and all(self.ordering.values())
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["passed"] = self.passed
        return d


def verify_solution(sol: ClosedFormSolution, grid_step: float = 1e-3, span: float = 8.0) -> DiagnosticsReport:
    """Check the properties of the candidate value on a grid over [-span, span].

    Derivatives come from the analytic branches.  Nodes within ``grid_step``
    of +-1 are excluded from the HJB residual.
    """
    if not grid_step > 0:
        raise InvalidParametersError("grid_step must be positive")
    n = int(round(2 * span / grid_step))
    x = np.linspace(-span, span, n + 1)
    v = eval_v(sol, x)
    l, u = _l_reference(x), _u_reference(sol, x)

    sym = float(np.max(np.abs(v - eval_v(sol, -x))))
    pos = v[x >= 0]
    mono = float(max(0.0, np.max(np.diff(pos))))

    c1 = {}
    for edge, (w_in, w_out) in ((1.0, (0, 1)), (sol.x_star, (1, 2))):
        d_in = _branch_values(sol, edge, w_in, 1)
        d_out = _branch_values(sol, edge, w_out, 1)
        c1[f"{edge:.6g}"] = abs(float(d_in - d_out))
        # the negative side mirrors the positive one
        c1[f"{-edge:.6g}"] = abs(float(-d_in + d_out))

    keep = np.abs(np.abs(x) - 1.0) > grid_step * (1 + 1e-9)
    drive = np.maximum(np.minimum(v, u), l)
    resid = 0.5 * eval_d2v(sol, x) - 0.5 * sol.phi**2 * v + 0.5 * (sol.phi**2 - sol.theta**2) * drive
    hjb = float(np.max(np.abs(resid[keep])))

    m = 1e-12
    y = np.abs(x)
    inner, mid, outer = y <= 1.0, (y > 1.0) & (y <= sol.x_star), y > sol.x_star
    ordering = {
        "l>u>V on [-1,1]": bool(np.all(l[inner] - u[inner] >= m) and np.all(u[inner] - v[inner] >= m)),
        "V>=u>l on (1,x*]": bool(np.all(v[mid] - u[mid] >= -m) and np.all(u[mid] - l[mid] >= m)),
        "u>V>l beyond x*": bool(np.all(u[outer] - v[outer] >= m) and np.all(v[outer] - l[outer] >= m)),
    }
    signs = sol.coeff_a < 0 and sol.coeff_b < 0 and sol.coeff_c > 0 and sol.coeff_d > 0
    return DiagnosticsReport(
        grid_step=grid_step,
        span=span,
        value_at_x_star_error=abs(eval_v(sol, sol.x_star) - sol.u_outside),
        symmetry_error=sym,
        monotone_violation=mono,
        c1_mismatch=c1,
        hjb_residual=hjb,
        ordering=ordering,
        signs_ok=bool(signs),
    )


# --------------------------------------------------------------------------
# counterexample


def build_counterexample_payoffs(sol: ClosedFormSolution, delta: float) -> tuple[FunctionSpec, FunctionSpec]:
    """Raise l to V(x* - delta) on the shoulders (-x* + 2 delta, -1) and (1, x* - 2 delta)."""
    xs = sol.x_star
    if not (0 < delta < (xs - 1) / 3):
        raise InvalidParametersError(f"delta must lie in (0, {(xs - 1) / 3:.6g})")
    s = float(eval_v(sol, xs - delta))
    edge = xs - 2 * delta
    lt = FunctionSpec(
        (-edge, -1.0, 1.0, edge),
        (Constant(0.0), Constant(s), Constant(1.0), Constant(s), Constant(0.0)),
    )
    _, u = indicator_payoffs(sol)
    return lt, u


def counterexample_game(r=1.0, lam=1.0, eps=9.0, delta=None, mode="independent") -> GameSpec:
    sol = build_solution(r, lam, eps)
    if delta is None:
        delta = (sol.x_star - 1) / 4
    lt, ut = build_counterexample_payoffs(sol, delta)
    return GameSpec(DiffusionSpec(BROWNIAN, 0.0, 1.0), lt, ut, r, lam, mode)


def emit_figure_data(sol: ClosedFormSolution, payoffs, path, step: float = 1e-3, span: float = 3.0,
                     tilde: bool = False) -> Path:
    """Write x, l, u, V (or x, l_tilde, u_tilde, V) on [-span, span]."""
    l, u = payoffs
    n = int(round(2 * span / step))
    x = np.linspace(-span, span, n + 1)
    cols = ("x", "l_tilde", "u_tilde", "V") if tilde else ("x", "l", "u", "V")
    data = np.column_stack([x, eval_function(l, x), eval_function(u, x), eval_v(sol, x)])
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for row in data:
            w.writerow([f"{v:.12g}" for v in row])
    return path
