"""Path simulation of Poisson-constrained Dynkin games.

Paths are advanced only from one signal time to the next with the exact
transition law of the diffusion, because hitting strategies look at the
state at signal times only.  All paths of a batch move in lockstep over the
signal index; every random number is addressed by (seed, path, draw index,
channel) through :mod:`poisson_dynkin.rng`, so estimates do not depend on the
batch size or on the number of worker processes.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import partial
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import stats

from . import rng
from .model import (
    COMMON,
    INDEPENDENT,
    GameSpec,
    HypothesisViolationError,
    Interval,
    IntervalUnion,
    InvalidParametersError,
    StoppingSets,
    eval_function,
)

__all__ = [
    "SUP",
    "INF",
    "SignalStream",
    "HittingStrategy",
    "SimulationEstimate",
    "simulate_game",
    "strategies_from_sets",
    "game_payoffs",
    "CouplingReport",
    "coupling_check",
    "coupling_sample",
    "perturb_union",
    "DeviationResult",
    "DeviationReport",
    "saddle_deviation_battery",
    "estimate",
    "run_blocks",
]

SUP = "sup"
INF = "inf"

COMMON_BOTH = "CommonBoth"
SUP_ONLY = "SupOnly"
INF_ONLY = "InfOnly"
MERGED = "MergedTwoColor"

BLOCK = 1 << 16
MIN_KS_SAMPLES = 10_000


# --------------------------------------------------------------------------
# building blocks


@dataclass(frozen=True)
class SignalStream:
    """Event times of one Poisson signal process, per path.

    For ``MergedTwoColor`` the gaps have rate ``2 * rate`` and every event
    carries an independent fair colour (True = red = sup player's signal).
    """

    rate: float
    role: str = COMMON_BOTH
    seed: int = 0

    def __post_init__(self):
        if not self.rate > 0:
            raise InvalidParametersError("signal rate must be positive")
        if self.role not in (COMMON_BOTH, SUP_ONLY, INF_ONLY, MERGED):
            raise InvalidParametersError(f"unknown stream role {self.role!r}")

    @property
    def channel(self) -> int:
        return rng.CH_GAP_INF if self.role == INF_ONLY else rng.CH_GAP_SUP

    @property
    def event_rate(self) -> float:
        return 2 * self.rate if self.role == MERGED else self.rate

    def gaps(self, paths, draw):
        g, _ = rng.exponential(self.seed, paths, draw, self.channel, self.event_rate)
        return g

    def colors(self, paths, draw):
        u, _ = rng.uniform_pair(self.seed, paths, draw, rng.CH_COLOR)
        return u < 0.5

    def times(self, paths, n_events: int):
        """First ``n_events`` event times for each path index, shape (len(paths), n)."""
        paths = np.asarray(paths, dtype=np.uint64)
        draws = np.arange(n_events, dtype=np.uint64)
        g = self.gaps(paths[:, None], draws[None, :])
        return np.cumsum(g, axis=1)


@dataclass(frozen=True)
class HittingStrategy:
    """Stop at the first own signal (index >= start_index) with the state in ``set``."""

    player: str
    set: IntervalUnion = field(default_factory=IntervalUnion)
    start_index: int = 1

    def __post_init__(self):
        if self.player not in (SUP, INF):
            raise InvalidParametersError(f"player must be {SUP!r} or {INF!r}")
        if self.start_index < 1:
            raise InvalidParametersError("start_index must be >= 1")
        if not isinstance(self.set, IntervalUnion):
            object.__setattr__(self, "set", IntervalUnion(self.set))

    def fires(self, n_signal, x):
        return (n_signal >= self.start_index) & self.set.contains(x)


@dataclass
class SimulationEstimate:
    mean: float
    stderr: float
    n_paths: int
    seed: int
    horizon_cap: float = math.inf
    truncation_bias: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)


def estimate(samples: np.ndarray, seed: int, horizon_cap=math.inf, truncation_bias=0.0) -> SimulationEstimate:
    n = samples.size
    sd = float(np.std(samples, ddof=1)) if n > 1 else 0.0
    return SimulationEstimate(float(np.mean(samples)), sd / math.sqrt(n), n, seed, horizon_cap, truncation_bias)


def run_blocks(fn, n_paths: int, workers: int = 1, offset: int = 0, block: int = BLOCK):
    """Evaluate ``fn(start, stop)`` over fixed path blocks and concatenate in path order.

    ``fn`` must be picklable when ``workers > 1``.  Block boundaries do not
    depend on ``workers``, and neither do the results.
    """
    bounds = [(s, min(s + block, offset + n_paths)) for s in range(offset, offset + n_paths, block)]
    if workers <= 1 or len(bounds) == 1:
        parts = [fn(a, b) for a, b in bounds]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(fn, *zip(*bounds)))
    if parts and isinstance(parts[0], tuple):
        return tuple(np.concatenate(cols) for cols in zip(*parts))
    return np.concatenate(parts)


# --------------------------------------------------------------------------
# game simulation


def _common_block(game: GameSpec, x0, sup: HittingStrategy, inf: HittingStrategy, cap, seed, start, stop):
    n = stop - start
    paths = np.arange(start, stop, dtype=np.uint64)
    r, lam, diff = game.discount, game.signal_rate, game.diffusion
    t = np.zeros(n)
    x = np.full(n, float(x0))
    pay = np.zeros(n)
    idx = np.arange(n)
    k = 0
    while idx.size:
        p = paths[idx]
        gap, _ = rng.exponential(seed, p, k, rng.CH_GAP_SUP, lam)
        tt = t[idx] + gap
        ok = tt <= cap
        idx, p, gap, tt = idx[ok], p[ok], gap[ok], tt[ok]
        z = rng.standard_normal(seed, p, k, rng.CH_GAUSS)
        xx = diff.transition(x[idx], gap, z)
        s_fire = sup.fires(k + 1, xx)
        i_fire = inf.fires(k + 1, xx) & ~s_fire  # sup player takes precedence on ties
        if s_fire.any():
            pay[idx[s_fire]] = np.exp(-r * tt[s_fire]) * eval_function(game.lower, xx[s_fire])
        if i_fire.any():
            pay[idx[i_fire]] = np.exp(-r * tt[i_fire]) * eval_function(game.upper, xx[i_fire])
        go = ~(s_fire | i_fire)
        t[idx], x[idx] = tt, xx
        idx = idx[go]
        k += 1
    return pay


def _independent_block(game: GameSpec, x0, sup: HittingStrategy, inf: HittingStrategy, cap, seed, start, stop):
    n = stop - start
    paths = np.arange(start, stop, dtype=np.uint64)
    r, lam, diff = game.discount, game.signal_rate, game.diffusion
    t = np.zeros(n)
    x = np.full(n, float(x0))
    pay = np.zeros(n)
    ns = np.zeros(n, dtype=np.int64)
    ni = np.zeros(n, dtype=np.int64)
    next_s, _ = rng.exponential(seed, paths, 0, rng.CH_GAP_SUP, lam)
    next_i, _ = rng.exponential(seed, paths, 0, rng.CH_GAP_INF, lam)
    idx = np.arange(n)
    k = 0
    while idx.size:
        s_t, i_t = next_s[idx], next_i[idx]
        tt = np.minimum(s_t, i_t)
        ok = tt <= cap
        idx, s_t, i_t, tt = idx[ok], s_t[ok], i_t[ok], tt[ok]
        p = paths[idx]
        z = rng.standard_normal(seed, p, k, rng.CH_GAUSS)
        xx = diff.transition(x[idx], tt - t[idx], z)
        s_ev, i_ev = s_t <= i_t, i_t <= s_t
        ns[idx] += s_ev
        ni[idx] += i_ev
        s_fire = s_ev & sup.fires(ns[idx], xx)
        i_fire = i_ev & inf.fires(ni[idx], xx) & ~s_fire
        if s_fire.any():
            pay[idx[s_fire]] = np.exp(-r * tt[s_fire]) * eval_function(game.lower, xx[s_fire])
        if i_fire.any():
            pay[idx[i_fire]] = np.exp(-r * tt[i_fire]) * eval_function(game.upper, xx[i_fire])
        go = ~(s_fire | i_fire)
        t[idx], x[idx] = tt, xx
        idx, s_ev, i_ev, tt = idx[go], s_ev[go], i_ev[go], tt[go]
        pi = paths[idx]
        if s_ev.any():
            j = idx[s_ev]
            g, _ = rng.exponential(seed, pi[s_ev], ns[j], rng.CH_GAP_SUP, lam)
            next_s[j] = tt[s_ev] + g
        if i_ev.any():
            j = idx[i_ev]
            g, _ = rng.exponential(seed, pi[i_ev], ni[j], rng.CH_GAP_INF, lam)
            next_i[j] = tt[i_ev] + g
        k += 1
    return pay


def _check_strategies(sup: HittingStrategy, inf: HittingStrategy):
    if sup.player != SUP or inf.player != INF:
        raise InvalidParametersError("strategy roles must be (sup, inf)")


def game_payoffs(game: GameSpec, x0: float, sup: HittingStrategy, inf: HittingStrategy, n_paths: int,
                 horizon_cap: float | None = None, seed: int = 0, workers: int = 1, mode: str | None = None,
                 offset: int = 0) -> np.ndarray:
    """Per-path discounted payoffs R(tau, sigma), in path-index order."""
    _check_strategies(sup, inf)
    mode = mode or game.mode
    cap = 20.0 / game.discount if horizon_cap is None else float(horizon_cap)
    if not cap > 0:
        raise InvalidParametersError("horizon cap must be positive")
    if not game.diffusion.contains(x0):
        raise InvalidParametersError(f"x0={x0} is outside the state space")
    block_fn = _common_block if mode == COMMON else _independent_block
    fn = partial(block_fn, game, x0, sup, inf, cap, seed)
    return run_blocks(fn, n_paths, workers, offset)


def simulate_game(game: GameSpec, x0: float, sup: HittingStrategy, inf: HittingStrategy, n_paths: int,
                  horizon_cap: float | None = None, seed: int = 0, workers: int = 1,
                  mode: str | None = None) -> SimulationEstimate:
    """Monte Carlo estimate of J^x0(eta_sup, eta_inf) under the game's signal regime.

    Paths still running at ``horizon_cap`` pay M_inf = 0; the recorded
    ``truncation_bias`` bounds the error this causes.
    """
    cap = 20.0 / game.discount if horizon_cap is None else float(horizon_cap)
    pay = game_payoffs(game, x0, sup, inf, n_paths, cap, seed, workers, mode)
    bias = math.exp(-game.discount * cap) * game.payoff_bound()
    return estimate(pay, seed, cap, bias)


def strategies_from_sets(sets: StoppingSets, start_index: int = 1):
    return HittingStrategy(SUP, sets.sup_set, start_index), HittingStrategy(INF, sets.inf_set, start_index)


# --------------------------------------------------------------------------
# coupling of the two thinning constructions


def _coupling_block(game: GameSpec, x0, d_set: IntervalUnion, e_set: IntervalUnion, approach: int, cap, seed,
                    start, stop):
    """Stopped time and state of tau ^ eta under thinning ``approach``.

    tau is the first red mark with X in D.  Approach 1 keeps only red marks;
    approach 2 keeps red marks in D and blue marks outside D; approach 3 is
    the corrupted variant of 2 which also drops the red marks in D.
    """
    n = stop - start
    paths = np.arange(start, stop, dtype=np.uint64)
    diff, lam = game.diffusion, game.signal_rate
    t = np.zeros(n)
    x = np.full(n, float(x0))
    t_stop = np.full(n, np.inf)
    x_stop = np.full(n, np.inf)
    idx = np.arange(n)
    k = 0
    while idx.size:
        p = paths[idx]
        gap, _ = rng.exponential(seed, p, k, rng.CH_GAP_SUP, 2 * lam)
        tt = t[idx] + gap
        ok = tt <= cap
        idx, p, gap, tt = idx[ok], p[ok], gap[ok], tt[ok]
        red, _ = rng.uniform_pair(seed, p, k, rng.CH_COLOR)
        red = red < 0.5
        z = rng.standard_normal(seed, p, k, rng.CH_GAUSS)
        xx = diff.transition(x[idx], gap, z)
        in_d, in_e = d_set.contains(xx), e_set.contains(xx)
        if approach == 1:
            kept = red
        elif approach == 2:
            kept = (red & in_d) | (~red & ~in_d)
        else:
            kept = ~red & ~in_d
        tau_fire = kept & red & in_d
        eta_fire = kept & in_e
        hit = tau_fire | eta_fire
        t_stop[idx[hit]] = tt[hit]
        x_stop[idx[hit]] = xx[hit]
        t[idx], x[idx] = tt, xx
        idx = idx[~hit]
        k += 1
    return t_stop, x_stop


def coupling_sample(game, x0, sup_set, inf_set, approach, n_samples, seed, horizon_cap=None, workers=1, offset=0):
    cap = 20.0 / game.discount if horizon_cap is None else float(horizon_cap)
    fn = partial(_coupling_block, game, x0, IntervalUnion(sup_set), IntervalUnion(inf_set), approach, cap, seed)
    return run_blocks(fn, n_samples, workers, offset)


@dataclass
class CouplingReport:
    n_samples: int
    seed: int
    time_statistic: float
    time_pvalue: float
    state_statistic: float
    state_pvalue: float
    corrupted: bool = False

    @property
    def min_pvalue(self) -> float:
        return min(self.time_pvalue, self.state_pvalue)

    def to_dict(self) -> dict:
        return asdict(self)


def coupling_check(game: GameSpec, x0: float, sup_set, inf_set, n_samples: int, seed: int,
                   horizon_cap: float | None = None, workers: int = 1, corrupt: bool = False,
                   min_samples: int = MIN_KS_SAMPLES) -> CouplingReport:
    """Compare the laws of (tau ^ eta_E, X at that time) under the two thinnings.

    D = ``sup_set`` and E = ``inf_set`` must be disjoint.  The two arms use
    disjoint path-index ranges, so the samples are independent and the
    asymptotic two-sample Kolmogorov-Smirnov test applies.  Unstopped paths
    are recorded as +inf in both coordinates.
    """
    d_set, e_set = IntervalUnion(sup_set), IntervalUnion(inf_set)
    if not d_set.intersect(e_set).is_empty:
        raise HypothesisViolationError("the sup and inf sets must be disjoint")
    if n_samples < min_samples:
        raise InvalidParametersError(f"at least {min_samples} samples per arm are required")
    t1, x1 = coupling_sample(game, x0, d_set, e_set, 1, n_samples, seed, horizon_cap, workers, offset=0)
    t2, x2 = coupling_sample(game, x0, d_set, e_set, 3 if corrupt else 2, n_samples, seed, horizon_cap,
                             workers, offset=n_samples)
    kt = stats.ks_2samp(t1, t2, method="asymp")
    kx = stats.ks_2samp(x1, x2, method="asymp")
    return CouplingReport(n_samples, seed, float(kt.statistic), float(kt.pvalue), float(kx.statistic),
                          float(kx.pvalue), corrupt)


# --------------------------------------------------------------------------
# unilateral deviations


def perturb_union(union: IntervalUnion, kind: str, amount: float) -> IntervalUnion:
    """grow / shrink every interval by ``amount`` on both sides, or shift it."""

    def one(iv: Interval):
        if kind == "grow":
            lo, hi = iv.lo - amount, iv.hi + amount
        elif kind == "shrink":
            lo, hi = iv.lo + amount, iv.hi - amount
        elif kind == "shift":
            lo, hi = iv.lo + amount, iv.hi + amount
        else:
            raise InvalidParametersError(f"unknown perturbation {kind!r}")
        if lo > hi:
            return None
        return Interval(lo, hi, iv.lo_closed, iv.hi_closed)

    return union.transform(one)


def default_deviations(count: int, step: float = 0.1):
    """grow, shrink, shift right, shift left, then the same with a larger step."""
    plan = []
    for i in range(count):
        amount = step * (i // 4 + 1)
        kind = ("grow", "shrink", "shift", "shift")[i % 4]
        plan.append((kind, -amount if i % 4 == 3 else amount))
    return plan


@dataclass
class DeviationResult:
    deviation_id: int
    player: str
    kind: str
    shift: float
    mean: float
    stderr: float
    diff: float
    diff_stderr: float
    violation: bool


@dataclass
class DeviationReport:
    x0: float
    mode: str
    baseline: SimulationEstimate
    results: list
    n_sigma: float = 3.0

    @property
    def violations(self) -> list:
        return [r for r in self.results if r.violation]

    def to_dict(self) -> dict:
        return {
            "x0": self.x0,
            "mode": self.mode,
            "baseline": self.baseline.to_dict(),
            "n_sigma": self.n_sigma,
            "results": [asdict(r) for r in self.results],
            "violations": len(self.violations),
        }

    def write_json(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2) + "\n")
        return path

    def write_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["deviationId", "player", "shift", "mean", "stderr"])
            for r in self.results:
                w.writerow([r.deviation_id, r.player, f"{r.kind}:{r.shift:g}", f"{r.mean:.10g}", f"{r.stderr:.6g}"])
        return path


def saddle_deviation_battery(game: GameSpec, x0: float, solution, deviations=5, n_paths: int = 100_000,
                             seed: int = 0, horizon_cap: float | None = None, workers: int = 1,
                             mode: str | None = None, n_sigma: float = 3.0) -> DeviationReport:
    """Estimate J for unilateral deviations from the hitting pair of ``solution``.

    ``solution`` is a GameSolution or StoppingSets; ``deviations`` is a count
    or an explicit list of (kind, amount).  All arms share paths (common
    random numbers) and each deviation is judged on the paired per-path
    difference against the baseline: a sup deviation violates the saddle if
    it gains more than ``n_sigma`` standard errors, an inf deviation if it
    loses more.
    """
    sets = getattr(solution, "sets", solution)
    mode = mode or game.mode
    plan = default_deviations(deviations) if isinstance(deviations, int) else list(deviations)
    sup0, inf0 = strategies_from_sets(sets)
    cap = 20.0 / game.discount if horizon_cap is None else float(horizon_cap)
    kw = dict(horizon_cap=cap, seed=seed, workers=workers, mode=mode)
    base = game_payoffs(game, x0, sup0, inf0, n_paths, **kw)
    bias = math.exp(-game.discount * cap) * game.payoff_bound()
    baseline = estimate(base, seed, cap, bias)
    results = []
    did = 0
    for player in (SUP, INF):
        for kind, amount in plan:
            if player == SUP:
                sup, inf = HittingStrategy(SUP, perturb_union(sets.sup_set, kind, amount)), inf0
            else:
                sup, inf = sup0, HittingStrategy(INF, perturb_union(sets.inf_set, kind, amount))
            pay = game_payoffs(game, x0, sup, inf, n_paths, **kw)
            est = estimate(pay, seed, cap, bias)
            d = pay - base
            dse = float(np.std(d, ddof=1)) / math.sqrt(n_paths)
            dm = float(np.mean(d))
            bad = dm > n_sigma * dse if player == SUP else dm < -n_sigma * dse
            results.append(DeviationResult(did, player, kind, amount, est.mean, est.stderr, dm, dse, bool(bad)))
            did += 1
    return DeviationReport(x0, mode, baseline, results, n_sigma)
