"""Transfer conditions between the common and independent formulations.

For a solved grid ``v`` the order-type condition

    min(v, l) <= u                                       (vl_le_u)

decides whether the value and the hitting saddle point carry over from one
signal regime to the other.  In the common formulation it is equivalent to
disjointness of the two stopping sets.  In the independent formulation
disjointness is weaker: the chain set ``{v > l > u}`` must also be empty.

All conditions are evaluated node-wise with the solver's equality
tolerance and then summarised as intervals.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .model import COMMON, INDEPENDENT, FunctionSpec, GameSpec, InvalidParametersError, eval_function
from .montecarlo import simulate_game, strategies_from_sets
from .solver import EQ_TOL, GameSolution, GridConfig, classify_nodes, extract_sets, mask_to_union, solve

__all__ = [
    "TransferVerdict",
    "CrossReport",
    "check_common_to_independent",
    "check_independent_to_common",
    "cross_validate",
]


@dataclass
class TransferVerdict:
    direction: str  # "common->independent" or "independent->common"
    transfers: bool
    conditions: dict  # vl_le_u, disjoint, no_vlu_chain
    witnesses: list = field(default_factory=list)
    notes: list = field(default_factory=list)
    consistent: bool = True  # the equivalence / implication that must hold between the conditions

    @property
    def label(self) -> str:
        return "TRANSFERS" if self.transfers else "NOT-TRANSFERS"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["verdict"] = self.label
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _witnesses(x, v, l, u, bad, limit=8):
    """One witness per maximal run of ``bad`` nodes: the node of largest violation."""
    gap = np.minimum(v, l) - u
    out = []
    union = mask_to_union(x, bad, True)
    for iv in list(union)[:limit]:
        idx = np.flatnonzero(bad & (x >= iv.lo) & (x <= iv.hi))
        k = idx[np.argmax(gap[idx])]
        out.append({
            "x": float(x[k]), "v": float(v[k]), "l": float(l[k]), "u": float(u[k]),
            "gap": float(gap[k]), "region": [iv.lo, iv.hi],
        })
    return out


def _conditions(sol: GameSolution, l: FunctionSpec, u: FunctionSpec, tol: float):
    x, v = sol.value.x, sol.value.values
    lv, uv = eval_function(l, x), eval_function(u, x)
    in_a, in_b, chain = classify_nodes(v, lv, uv, sol.mode, tol)
    bad = np.minimum(v, lv) > uv + tol
    sets = extract_sets(sol.value, l, u, sol.mode, tol=tol)
    disjoint = sets.sup_set.intersect(sets.inf_set).is_empty and not np.any(in_a & in_b)
    cond = {"vl_le_u": not bool(np.any(bad)), "disjoint": bool(disjoint), "no_vlu_chain": not bool(np.any(chain))}
    return cond, _witnesses(x, v, lv, uv, bad), (x, v, lv, uv, chain)


def check_common_to_independent(sol: GameSolution, l: FunctionSpec, u: FunctionSpec,
                                tol: float = EQ_TOL) -> TransferVerdict:
    """Does the common-signal solution transfer to independent signals?

    TRANSFERS iff min(v, l) <= u + tol at every node.  The equivalence with
    disjointness of A^C and B^C is checked in both directions and recorded
    in ``consistent``.
    """
    if sol.mode != COMMON:
        raise InvalidParametersError("check_common_to_independent needs a common-mode solution")
    cond, wit, _ = _conditions(sol, l, u, tol)
    consistent = cond["vl_le_u"] == cond["disjoint"]
    notes = []
    if not consistent:
        notes.append("set disjointness and the order-type condition disagree on this grid")
    if not cond["disjoint"]:
        notes.append("A^C and B^C overlap")
    return TransferVerdict("common->independent", cond["vl_le_u"], cond, wit, notes, consistent)


def check_independent_to_common(sol: GameSolution, l: FunctionSpec, u: FunctionSpec,
                                tol: float = EQ_TOL) -> TransferVerdict:
    """Does the independent-signal solution transfer to common signals?

    TRANSFERS iff min(v, l) <= u + tol at every node.  Disjoint sets alone
    do not suffice; when A^I and B^I are disjoint but {v > l > u} is not
    empty the verdict says so in ``notes``.
    """
    if sol.mode != INDEPENDENT:
        raise InvalidParametersError("check_independent_to_common needs an independent-mode solution")
    cond, wit, (x, v, lv, uv, chain) = _conditions(sol, l, u, tol)
    # disjoint sets and an empty chain set must imply the order-type condition
    consistent = not (cond["disjoint"] and cond["no_vlu_chain"]) or cond["vl_le_u"]
    notes = []
    if cond["disjoint"] and not cond["no_vlu_chain"]:
        regions = [[None if e is None else round(e, 10) for e in pair]
                   for pair in mask_to_union(x, chain, False).to_pairs()]
        notes.append(f"stopping sets are disjoint but {{v > l > u}} is non-empty on {regions}; "
                     "disjointness alone does not transfer the value")
    if not consistent:
        notes.append("disjoint sets with empty chain set but the order-type condition fails")
    return TransferVerdict("independent->common", cond["vl_le_u"], cond, wit, notes, consistent)


# --------------------------------------------------------------------------
# cross-validation


@dataclass
class CrossReport:
    sup_abs_diff: float  # sup |v^C - v^I| on the window
    max_excess: float  # max (v^C - v^I) on the window
    argmax_excess: float
    window: tuple
    common_verdict: TransferVerdict
    independent_verdict: TransferVerdict
    iterations: dict
    transplants: list = field(default_factory=list)
    witness: dict | None = None

    @property
    def transplants_agree(self) -> bool:
        return all(t["agrees"] for t in self.transplants)

    def to_dict(self) -> dict:
        return {
            "supAbsDiff": self.sup_abs_diff,
            "maxExcess": self.max_excess,
            "argmaxExcess": self.argmax_excess,
            "window": list(self.window),
            "common": self.common_verdict.to_dict(),
            "independent": self.independent_verdict.to_dict(),
            "iterations": self.iterations,
            "transplants": self.transplants,
            "transplantsAgree": self.transplants_agree,
            "witness": self.witness,
        }

    def write_json(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2) + "\n")
        return path


def _transplant(game, x0, sets, regime, v_regime, n_paths, seed, workers, cap, n_sigma, abs_tol, source):
    sup, inf = strategies_from_sets(sets)
    est = simulate_game(game, x0, sup, inf, n_paths, cap, seed, workers, regime)
    return {
        "x": x0, "strategiesFrom": source, "regime": regime,
        "mean": est.mean, "stderr": est.stderr, "value": v_regime,
        "agrees": bool(abs(est.mean - v_regime) <= n_sigma * est.stderr + abs_tol),
    }


def cross_validate(game: GameSpec, cfg: GridConfig, n_paths: int, seed: int = 0, points=None,
                   window=None, workers: int = 1, horizon_cap: float | None = None,
                   n_sigma: float = 3.0, abs_tol: float = 1e-3) -> CrossReport:
    """Solve both formulations and compare them on the grid and by simulation.

    Each solution's hitting sets are simulated under the other regime at
    ``points`` (default: the grid centre) and compared with the solved value
    of that regime.  When the common solution does not transfer, the common
    sets are also simulated under independent signals at the node of largest
    ``v^C - v^I``; the witness is confirmed when that payoff lies below
    ``v^C(x) - n_sigma * SE``.

    ``window`` restricts the grid comparison (default: middle half of the grid).
    """
    sol_c = solve(game, cfg, COMMON)
    sol_i = solve(game, cfg, INDEPENDENT)
    x = cfg.nodes
    if window is None:
        q = 0.25 * (cfg.hi - cfg.lo)
        window = (cfg.lo + q, cfg.hi - q)
    m = (x >= window[0]) & (x <= window[1])
    diff = sol_c.value.values - sol_i.value.values
    k = np.flatnonzero(m)[np.argmax(diff[m])]
    vc_ver = check_common_to_independent(sol_c, game.lower, game.upper)
    vi_ver = check_independent_to_common(sol_i, game.lower, game.upper)

    if points is None:
        points = (0.5 * (cfg.lo + cfg.hi),)
    trans = []
    for j, x0 in enumerate(points):
        x0 = float(x0)
        vc, vi = float(sol_c.value(x0)), float(sol_i.value(x0))
        s = seed + 2 * j
        trans.append(_transplant(game, x0, sol_i.sets, COMMON, vc, n_paths, s, workers, horizon_cap,
                                 n_sigma, abs_tol, INDEPENDENT))
        trans.append(_transplant(game, x0, sol_c.sets, INDEPENDENT, vi, n_paths, s + 1, workers, horizon_cap,
                                 n_sigma, abs_tol, COMMON))

    witness = None
    if not vc_ver.transfers:
        xw = float(x[k])
        sup, inf = strategies_from_sets(sol_c.sets)
        est = simulate_game(game, xw, sup, inf, n_paths, horizon_cap, seed + 10_007, workers, INDEPENDENT)
        vc = float(sol_c.value.values[k])
        witness = {
            "x": xw, "J": est.mean, "stderr": est.stderr, "vCommon": vc,
            "vIndependent": float(sol_i.value.values[k]),
            "confirmed": bool(est.mean < vc - n_sigma * est.stderr),
        }
    return CrossReport(
        float(np.max(np.abs(diff[m]))), float(diff[k]), float(x[k]), tuple(window), vc_ver, vi_ver,
        {COMMON: sol_c.iterations, INDEPENDENT: sol_i.iterations}, trans, witness,
    )
