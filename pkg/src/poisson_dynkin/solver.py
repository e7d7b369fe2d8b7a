"""Finite-difference value iteration for Poisson-constrained Dynkin games.

Both formulations reduce to a fixed point of ``v = R_rho(driver(v))`` where
``R_rho = (rho - L_h)^{-1}`` is the discrete resolvent of the generator:

* common signals:      rho = lambda + r,   driver = lambda max{l, min(v, u)}
* independent signals: rho = 2 lambda + r, driver = lambda max{l, v} + lambda min{v, u}

``L_h`` is a three-point scheme (central, upwinded where the cell Peclet
number exceeds 2) and ``rho - L_h`` is an M-matrix, so ``R_rho`` is
positive with sup-norm at most ``1/rho``.  The iteration therefore contracts
with factor ``lambda/(lambda + r)`` (common) or ``2 lambda/(2 lambda + r)``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import lapack

from .model import (
    COMMON,
    INDEPENDENT,
    DiffusionSpec,
    DomainError,
    FunctionSpec,
    GameSpec,
    Interval,
    IntervalUnion,
    InvalidParametersError,
    NonConvergenceError,
    StoppingSets,
    eval_function,
)

__all__ = [
    "ROBIN",
    "DIRICHLET",
    "GridConfig",
    "ValueGrid",
    "GameSolution",
    "Resolvent",
    "GameOperator",
    "resolvent_apply",
    "solve",
    "solve_common",
    "solve_independent",
    "extract_sets",
    "classify_nodes",
    "solution_to_dict",
    "write_solution_json",
    "write_solution_csv",
]

ROBIN = "robin"
DIRICHLET = "dirichlet"
EQ_TOL = 1e-9


@dataclass(frozen=True)
class GridConfig:
    lo: float = -8.0
    hi: float = 8.0
    step: float = 1e-3
    max_iterations: int = 1000
    tolerance: float = 1e-10
    boundary: str = ROBIN

    def __post_init__(self):
        if not (math.isfinite(self.lo) and math.isfinite(self.hi) and self.lo < self.hi):
            raise InvalidParametersError("grid needs finite lo < hi")
        if not self.step > 0:
            raise InvalidParametersError("grid step must be positive")
        cells = (self.hi - self.lo) / self.step
        if abs(cells - round(cells)) > 1e-6 * max(1.0, cells) or round(cells) < 10:
            raise InvalidParametersError("(hi - lo)/step must be an integer >= 10")
        if self.boundary not in (ROBIN, DIRICHLET):
            raise InvalidParametersError(f"boundary must be {ROBIN!r} or {DIRICHLET!r}")
        if self.max_iterations < 1 or not self.tolerance > 0:
            raise InvalidParametersError("max_iterations >= 1 and tolerance > 0 required")

    @property
    def n_cells(self) -> int:
        return int(round((self.hi - self.lo) / self.step))

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.n_cells + 1)

    def refined(self, factor: int = 2) -> "GridConfig":
        return GridConfig(self.lo, self.hi, self.step / factor, self.max_iterations, self.tolerance, self.boundary)


@dataclass
class ValueGrid:
    config: GridConfig
    values: np.ndarray
    mode: str

    @property
    def x(self) -> np.ndarray:
        return self.config.nodes

    def __call__(self, x):
        """Linear interpolation; flat beyond the grid ends."""
        return np.interp(x, self.x, self.values)


@dataclass
class GameSolution:
    value: ValueGrid
    sets: StoppingSets
    iterations: int
    final_change: float
    changes: list = field(default_factory=list)

    @property
    def mode(self) -> str:
        return self.value.mode


# --------------------------------------------------------------------------
# discrete resolvent


class Resolvent:
    """LU-factorised ``rate - L_h`` on the grid of ``cfg``.

    The Robin closure uses the decay rate of the homogeneous solution at
    ``closure_rate`` (default: ``rate``).  Time-stepping schemes pass the
    stationary rate so that their fixed point matches the stationary system.
    """

    def __init__(self, diffusion: DiffusionSpec, rate: float, cfg: GridConfig, closure_rate: float | None = None):
        if not rate > 0:
            raise InvalidParametersError("resolvent rate must be positive")
        self.diffusion, self.rate, self.cfg = diffusion, rate, cfg
        x, h = cfg.nodes, cfg.step
        a = diffusion.var_coef(x)
        b = diffusion.drift_coef(x)
        lower = a / (2 * h * h) - b / (2 * h)
        upper = a / (2 * h * h) + b / (2 * h)
        upwind = np.abs(b) * h > a
        lower = np.where(upwind, a / (2 * h * h) + np.maximum(-b, 0.0) / h, lower)
        upper = np.where(upwind, a / (2 * h * h) + np.maximum(b, 0.0) / h, upper)
        diag = rate + lower + upper
        sub = -lower[1:].copy()  # coefficient of w_{j-1} in row j
        sup = -upper[:-1].copy()  # coefficient of w_{j+1} in row j

        if cfg.boundary == ROBIN:
            for end in (0, -1):
                if a[end] <= 0:
                    raise InvalidParametersError("Robin closure needs a non-degenerate diffusion at the grid ends")
            # w' = +k w at the left end, w' = -k w at the right end (decaying tails)
            cr = rate if closure_rate is None else closure_rate
            kl = (-b[0] + math.sqrt(b[0] ** 2 + 2 * a[0] * cr)) / a[0]
            kr = (b[-1] + math.sqrt(b[-1] ** 2 + 2 * a[-1] * cr)) / a[-1]
            diag[0] += lower[0] * 2 * h * kl
            sup[0] = -(lower[0] + upper[0])
            diag[-1] += upper[-1] * 2 * h * kr
            sub[-1] = -(lower[-1] + upper[-1])
        else:
            diag[0] = diag[-1] = 1.0
            sup[0] = 0.0
            sub[-1] = 0.0
        self._bands = (sub, diag, sup)
        dl, d, du, du2, ipiv, info = lapack.dgttrf(sub, diag, sup)
        if info != 0:
            raise ArithmeticError(f"singular resolvent system (dgttrf info={info})")
        self._lu = (dl, d, du, du2, ipiv)

    def __call__(self, g) -> np.ndarray:
        rhs = np.array(g, dtype=float, copy=True)
        if rhs.shape != (self.cfg.n_cells + 1,):
            raise ValueError("grid function has the wrong length")
        if not np.all(np.isfinite(rhs)):
            raise ValueError("grid function must be finite")
        if self.cfg.boundary == DIRICHLET:
            rhs[0] = rhs[-1] = 0.0
        w, info = lapack.dgttrs(*self._lu, rhs)
        if info != 0:
            raise ArithmeticError(f"dgttrs failed (info={info})")
        if self.cfg.boundary == DIRICHLET:
            w[0] = w[-1] = 0.0  # exact, whatever the pivoting left behind
        return w

    def matrix(self) -> np.ndarray:
        """Dense copy of the system matrix (for tests on small grids)."""
        sub, diag, sup = self._bands
        return np.diag(diag) + np.diag(sub, -1) + np.diag(sup, 1)


def resolvent_apply(diffusion: DiffusionSpec, rate: float, g, cfg: GridConfig) -> np.ndarray:
    """Solve ``(rate - L_h) w = g`` on the grid."""
    return Resolvent(diffusion, rate, cfg)(g)


# --------------------------------------------------------------------------
# value iteration


class GameOperator:
    """The map v -> R_rho(driver(v)) for one game, mode and grid.

    The Robin ends use the decay of the discount-only resolvent (rate r):
    in a tail where neither player stops both formulations reduce to
    ``(r - L) v = 0``.  With a shared closure the two modes have the same
    discrete fixed point whenever min(v, l) <= u holds node-wise.
    """

    def __init__(self, game: GameSpec, cfg: GridConfig, mode: str | None = None):
        self.game, self.cfg = game, cfg
        self.mode = mode or game.mode
        lam, r = game.signal_rate, game.discount
        x = cfg.nodes
        self.l = eval_function(game.lower, x)
        self.u = eval_function(game.upper, x)
        if self.mode == COMMON:
            self.rate, self.factor = lam + r, lam / (lam + r)
        elif self.mode == INDEPENDENT:
            self.rate, self.factor = 2 * lam + r, 2 * lam / (2 * lam + r)
        else:
            raise InvalidParametersError(f"unknown mode {self.mode!r}")
        self.closure_rate = r
        self.resolvent = Resolvent(game.diffusion, self.rate, cfg, closure_rate=r)

    def driver(self, v: np.ndarray) -> np.ndarray:
        lam = self.game.signal_rate
        if self.mode == COMMON:
            return lam * np.maximum(self.l, np.minimum(v, self.u))
        return lam * np.maximum(self.l, v) + lam * np.minimum(v, self.u)

    def __call__(self, v: np.ndarray) -> np.ndarray:
        return self.resolvent(self.driver(v))


def solve(game: GameSpec, cfg: GridConfig, mode: str | None = None, v0=None) -> GameSolution:
    op = GameOperator(game, cfg, mode)
    v = np.zeros(cfg.n_cells + 1) if v0 is None else np.array(v0, dtype=float)
    changes = []
    for it in range(1, cfg.max_iterations + 1):
        v_new = op(v)
        change = float(np.max(np.abs(v_new - v)))
        changes.append(change)
        v = v_new
        if change <= cfg.tolerance:
            break
    else:
        raise NonConvergenceError(
            f"no convergence in {cfg.max_iterations} iterations (last change {changes[-1]:.3e})", changes[-1]
        )
    value = ValueGrid(cfg, v, op.mode)
    sets = extract_sets(value, game.lower, game.upper, op.mode, game.diffusion.state_space)
    return GameSolution(value, sets, it, change, changes)


def solve_common(game: GameSpec, cfg: GridConfig) -> GameSolution:
    if game.mode != COMMON:
        raise InvalidParametersError("solve_common needs a common-mode game")
    return solve(game, cfg, COMMON)


def solve_independent(game: GameSpec, cfg: GridConfig) -> GameSolution:
    if game.mode != INDEPENDENT:
        raise InvalidParametersError("solve_independent needs an independent-mode game")
    return solve(game, cfg, INDEPENDENT)


# --------------------------------------------------------------------------
# stopping sets


def classify_nodes(v, l, u, mode: str, tol: float = EQ_TOL):
    """Node masks (in_A, in_B, chain) with chain = {v > l > u}.

    A = {v < l} (plus the chain set in common mode), B = {v >= u}.
    """
    v, l, u = (np.asarray(a, dtype=float) for a in (v, l, u))
    chain = (v > l + tol) & (l > u + tol)
    in_a = v < l - tol
    if mode == COMMON:
        in_a = in_a | chain
    in_b = v >= u - tol
    return in_a, in_b, chain


def _runs(mask: np.ndarray):
    m = np.concatenate([[False], mask, [False]]).astype(np.int8)
    d = np.diff(m)
    return zip(np.flatnonzero(d == 1), np.flatnonzero(d == -1) - 1)


def mask_to_union(x: np.ndarray, mask: np.ndarray, closed: bool, state_space=(-math.inf, math.inf)) -> IntervalUnion:
    """Maximal runs of nodes become intervals whose ends sit half-way to the
    neighbouring node.  Runs touching the grid edge extend to an infinite
    state-space endpoint."""
    out = []
    n = len(x)
    for i, j in _runs(np.asarray(mask, dtype=bool)):
        if i == 0:
            lo, lo_c = (-math.inf, False) if math.isinf(state_space[0]) else (float(x[0]), True)
        else:
            lo, lo_c = 0.5 * (x[i - 1] + x[i]), closed
        if j == n - 1:
            hi, hi_c = (math.inf, False) if math.isinf(state_space[1]) else (float(x[-1]), True)
        else:
            hi, hi_c = 0.5 * (x[j] + x[j + 1]), closed
        out.append(Interval(float(lo), float(hi), lo_c, hi_c))
    return IntervalUnion(out)


def extract_sets(value: ValueGrid, l: FunctionSpec, u: FunctionSpec, mode: str | None = None,
                 state_space=(-math.inf, math.inf), tol: float = EQ_TOL) -> StoppingSets:
    mode = mode or value.mode
    x = value.x
    in_a, in_b, _ = classify_nodes(value.values, eval_function(l, x), eval_function(u, x), mode, tol)
    # A is defined by strict inequalities (open ends), B by weak ones (closed ends)
    return StoppingSets(mask_to_union(x, in_a, False, state_space), mask_to_union(x, in_b, True, state_space))


# --------------------------------------------------------------------------
# export


def solution_to_dict(sol: GameSolution) -> dict:
    cfg = sol.value.config
    return {
        "mode": sol.mode,
        "grid": {"lo": cfg.lo, "hi": cfg.hi, "h": cfg.step},
        "values": [float(v) for v in sol.value.values],
        "A": sol.sets.sup_set.to_pairs(),
        "B": sol.sets.inf_set.to_pairs(),
        "iterations": sol.iterations,
        "finalChange": sol.final_change,
    }


def write_solution_json(sol: GameSolution, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(solution_to_dict(sol)) + "\n")
    return path


def write_solution_csv(sol: GameSolution, game: GameSpec, path) -> Path:
    x = sol.value.x
    l, u = eval_function(game.lower, x), eval_function(game.upper, x)
    in_a = sol.sets.sup_set.contains(x)
    in_b = sol.sets.inf_set.contains(x)
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "v", "l", "u", "inA", "inB"])
        for row in zip(x, sol.value.values, l, u, in_a, in_b):
            w.writerow([f"{row[0]:.10g}", f"{row[1]:.12g}", f"{row[2]:.12g}", f"{row[3]:.12g}", int(row[4]), int(row[5])])
    return path


def check_in_domain(value: ValueGrid, x: float) -> None:
    cfg = value.config
    if not (cfg.lo < x < cfg.hi):
        raise DomainError(f"x={x} is not interior to the grid [{cfg.lo}, {cfg.hi}]")
