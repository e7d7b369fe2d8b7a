"""Finite-horizon truncations of the infinite-horizon value equation.

The truncated problem on [0, k] with zero terminal value is the Markovian
form of the finite-horizon BSDE used to build the perpetual solution.  It
is stepped backward in time with an implicit linear part and a lagged
nonlinearity, one tridiagonal solve per step:

    (1/dt + rho - L_h) w_i = w_{i+1}/dt + driver(w_{i+1})

whose stationary point is exactly the fixed point computed by
:mod:`poisson_dynkin.solver`.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass
from functools import partial
from pathlib import Path

import numpy as np

from . import rng
from .model import COMMON, GameSpec, InvalidParametersError, eval_function
from .montecarlo import SimulationEstimate, estimate, run_blocks
from .solver import GameOperator, GridConfig, Resolvent, ValueGrid, check_in_domain

__all__ = ["TruncationRun", "solve_truncated", "convergence_study", "write_convergence_csv", "check_dpe"]


@dataclass
class TruncationRun:
    horizon: float
    time_step: float
    grid: GridConfig
    times: np.ndarray  # stored time levels, ascending; times[0] == 0
    surface: np.ndarray  # surface[i] = w(times[i], x)

    @property
    def initial(self) -> np.ndarray:
        """w(0, .), the truncated value."""
        return self.surface[0]


def solve_truncated(game: GameSpec, horizon: float, time_step: float, cfg: GridConfig,
                    mode: str | None = None, save_every: int | None = None) -> TruncationRun:
    """Backward Euler from w(horizon, .) = 0 down to t = 0.

    The number of steps is ceil(horizon / time_step) with the step shrunk to
    fit.  ``save_every`` thins the stored surface (default: at most ~200
    slices); t = 0 and t = horizon are always kept.
    """
    if horizon < 0 or not time_step > 0:
        raise InvalidParametersError("horizon must be >= 0 and time_step > 0")
    n_nodes = cfg.n_cells + 1
    if horizon == 0:
        return TruncationRun(0.0, time_step, cfg, np.zeros(1), np.zeros((1, n_nodes)))
    if time_step > horizon:
        raise InvalidParametersError("time_step must not exceed the horizon")
    n_steps = int(math.ceil(horizon / time_step - 1e-9))
    dt = horizon / n_steps
    if save_every is None:
        save_every = max(1, n_steps // 200)

    op = GameOperator(game, cfg, mode)
    # shifted rate 1/dt + rho, boundary closure of the stationary problem
    stepper = Resolvent(game.diffusion, op.rate + 1.0 / dt, cfg, closure_rate=op.closure_rate)
    w = np.zeros(n_nodes)
    saved_t, saved_w = [horizon], [w.copy()]
    for i in range(n_steps - 1, -1, -1):
        w = stepper(w / dt + op.driver(w))
        if i % save_every == 0 or i == 0:
            saved_t.append(i * dt)
            saved_w.append(w.copy())
    if saved_t[-1] != 0.0:
        saved_t.append(0.0)
        saved_w.append(w.copy())
    return TruncationRun(horizon, dt, cfg, np.array(saved_t[::-1]), np.array(saved_w[::-1]))


def convergence_study(game: GameSpec, value: np.ndarray, horizons, time_step: float, cfg: GridConfig,
                      mode: str | None = None, window=None):
    """Sup-distance of w_k(0, .) to a stationary grid solution, per horizon.

    ``window`` optionally restricts the sup to lo <= x <= hi.
    """
    x = cfg.nodes
    m = np.ones_like(x, dtype=bool) if window is None else (x >= window[0]) & (x <= window[1])
    rows = []
    for k in horizons:
        t0 = time.perf_counter()
        run = solve_truncated(game, k, time_step, cfg, mode)
        err = float(np.max(np.abs(run.initial - value)[m]))
        rows.append({"k": k, "supError": err, "runtimeSeconds": time.perf_counter() - t0})
    return rows


def write_convergence_csv(rows, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["k", "supError", "runtimeSeconds"])
        w.writeheader()
        w.writerows(rows)
    return path


def _dpe_block(game: GameSpec, xg, vg, x, seed, mode, start, stop):
    paths = np.arange(start, stop, dtype=np.uint64)
    lam, r = game.signal_rate, game.discount
    rate = lam if mode == COMMON else 2 * lam
    t1, colour = rng.exponential(seed, paths, 0, rng.CH_GAP_SUP, rate)
    z = rng.standard_normal(seed, paths, 0, rng.CH_GAUSS)
    xt = game.diffusion.transition(np.full(paths.size, float(x)), t1, z)
    v = np.interp(xt, xg, vg)
    l, u = eval_function(game.lower, xt), eval_function(game.upper, xt)
    if mode == COMMON:
        g = np.maximum(l, np.minimum(v, u))
    else:
        # first signal of the merged stream belongs to either player with probability 1/2
        g = np.where(colour < 0.5, np.maximum(l, v), np.minimum(v, u))
    return np.exp(-r * t1) * g


def check_dpe(game: GameSpec, value: ValueGrid, x: float, n_paths: int, seed: int = 0, workers: int = 1,
              mode: str | None = None) -> SimulationEstimate:
    """Monte Carlo right-hand side of the one-signal dynamic programming identity.

    Common signals: E^x[e^{-r T1} max{l, min(v, u)}(X_T1)], T1 ~ Exp(lambda).
    Independent signals use the merged stream (rate 2 lambda) and the
    player owning the first signal.  ``v`` is interpolated linearly (flat
    outside the grid).
    """
    check_in_domain(value, x)
    mode = mode or value.mode
    fn = partial(_dpe_block, game, value.x, value.values, x, seed, mode)
    return estimate(run_blocks(fn, n_paths, workers), seed)
