"""Command-line entry point.

Exit codes: 0 pass, 2 configuration error, 3 non-convergence, 4 a
statistical or numerical gate failed (the report is still written).

Every command writes deterministic files into ``--out``; wall-clock
information only goes to the sidecar ``run.log``.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

from . import bsde, closedform, equivalence, montecarlo, solver
from .model import (
    MODES,
    DomainError,
    HypothesisViolationError,
    Interval,
    IntervalUnion,
    InvalidParametersError,
    NonConvergenceError,
    StoppingSets,
    load_game,
)

EXIT_OK, EXIT_CONFIG, EXIT_NONCONV, EXIT_GATE = 0, 2, 3, 4

log = logging.getLogger("poisson_dynkin")


class ConfigError(Exception):
    pass


# --------------------------------------------------------------------------
# helpers


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _grid(args) -> solver.GridConfig:
    try:
        lo, hi, h = (float(s) for s in args.grid.split(","))
    except ValueError:
        raise ConfigError(f"--grid expects lo,hi,h, got {args.grid!r}")
    return solver.GridConfig(lo, hi, h, args.max_iter, args.tol, args.boundary)


def _floats(text: str) -> list[float]:
    try:
        return [float(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}")


def _union(text: str) -> IntervalUnion:
    """'a:b,c:d' -> [a, b] U [c, d]; 'none' -> empty."""
    if text.strip().lower() in ("", "none", "empty"):
        return IntervalUnion()
    out = []
    for part in text.split(","):
        try:
            lo, hi = (float(s) for s in part.split(":"))
        except ValueError:
            raise ConfigError(f"bad interval {part!r}; expected lo:hi")
        out.append(Interval(lo, hi))
    return IntervalUnion(out)


def _game(args):
    try:
        game = load_game(args.config)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"cannot load {args.config}: {exc}")
    mode = getattr(args, "mode", None)
    return game.with_mode(mode) if mode else game


def _sets(args, game) -> StoppingSets:
    """Explicit --sup-set/--inf-set, otherwise the sets of a grid solve."""
    if args.sup_set is not None or args.inf_set is not None:
        return StoppingSets(_union(args.sup_set or "none"), _union(args.inf_set or "none"))
    sol = solver.solve(game, _grid(args), args.sets_from or game.mode)
    return sol.sets


def _sets_doc(sets: StoppingSets) -> dict:
    return {"A": sets.sup_set.to_pairs(), "B": sets.inf_set.to_pairs()}


# --------------------------------------------------------------------------
# commands


def cmd_closed_form(args) -> int:
    sol = closedform.build_solution(args.r, args.lam, args.eps)
    out = _out_dir(args)
    diag = closedform.verify_solution(sol, args.step)
    doc = sol.to_dict()
    doc["epsLowerBound"] = closedform.eps_lower_bound(sol.theta, sol.phi)
    doc["V"] = {f"{x:g}": float(closedform.eval_v(sol, x)) for x in (0.0, 1.0, sol.x_star, 2.0, 3.0)}
    if args.delta is not None:
        payoffs = closedform.build_counterexample_payoffs(sol, args.delta)
        doc["delta"] = args.delta
        doc["shoulder"] = [1.0, sol.x_star - 2 * args.delta]
        closedform.emit_figure_data(sol, payoffs, out / "figure.csv", tilde=True)
    else:
        closedform.emit_figure_data(sol, closedform.indicator_payoffs(sol), out / "figure.csv")
    _write_json(out / "solution.json", doc)
    _write_json(out / "diagnostics.json", diag.to_dict())
    print(f"x* = {sol.x_star:.12f}  diagnostics {'pass' if diag.passed else 'FAIL'}")
    return EXIT_OK if diag.passed else EXIT_GATE


def cmd_solve(args) -> int:
    game = _game(args)
    cfg = _grid(args)
    sol = solver.solve(game, cfg, args.mode or game.mode)
    out = _out_dir(args)
    solver.write_solution_json(sol, out / "solution.json")
    solver.write_solution_csv(sol, game, out / "solution.csv")
    print(f"{sol.mode}: {sol.iterations} iterations, A = {sol.sets.sup_set}, B = {sol.sets.inf_set}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    game = _game(args)
    sets = _sets(args, game)
    sup, inf = montecarlo.strategies_from_sets(sets)
    est = montecarlo.simulate_game(game, args.x0, sup, inf, args.paths, args.horizon_cap, args.seed,
                                   args.workers, game.mode)
    report = {"x0": args.x0, "mode": game.mode, "sets": _sets_doc(sets), "estimate": est.to_dict()}
    ok = True
    if not args.no_gate:
        ref = solver.solve(game, _grid(args), game.mode).value
        value = float(ref(args.x0))
        ok = abs(est.mean - value) <= args.n_sigma * est.stderr + args.abs_tol
        report["gate"] = {"value": value, "nSigma": args.n_sigma, "absTol": args.abs_tol, "passed": bool(ok)}
    _write_json(_out_dir(args) / "report.json", report)
    print(f"J = {est.mean:.6f} +/- {est.stderr:.6f}" + ("" if args.no_gate else f"  gate {'pass' if ok else 'FAIL'}"))
    return EXIT_OK if ok else EXIT_GATE


def cmd_coupling(args) -> int:
    game = _game(args)
    sets = _sets(args, game)
    runs = []
    for s in range(args.seed, args.seed + args.seeds):
        rep = montecarlo.coupling_check(game, args.x0, sets.sup_set, sets.inf_set, args.samples, s,
                                        args.horizon_cap, args.workers, corrupt=args.corrupt)
        runs.append(rep)
    pmin = min(r.min_pvalue for r in runs)
    # the negative control passes when the corruption is detected
    ok = pmin < args.alpha if args.corrupt else pmin > args.alpha
    report = {"x0": args.x0, "sets": _sets_doc(sets), "alpha": args.alpha, "corrupt": args.corrupt,
              "runs": [r.to_dict() for r in runs], "minPvalue": pmin, "passed": bool(ok)}
    _write_json(_out_dir(args) / "report.json", report)
    print(f"min p-value over {len(runs)} seeds: {pmin:.4g}  gate {'pass' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_GATE


def cmd_deviations(args) -> int:
    game = _game(args)
    sets = _sets(args, game)
    rep = montecarlo.saddle_deviation_battery(game, args.x0, sets, args.count, args.paths, args.seed,
                                              args.horizon_cap, args.workers, game.mode, args.n_sigma)
    out = _out_dir(args)
    rep.write_json(out / "report.json")
    rep.write_csv(out / "deviations.csv")
    n_bad = len(rep.violations)
    ok = n_bad > 0 if args.expect_violation else n_bad == 0
    print(f"baseline J = {rep.baseline.mean:.6f}, {n_bad} violation(s)  gate {'pass' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_GATE


def cmd_equivalence(args) -> int:
    game = _game(args)
    points = _floats(args.points) if args.points else None
    rep = equivalence.cross_validate(game, _grid(args), args.paths, args.seed, points, workers=args.workers,
                                     horizon_cap=args.horizon_cap)
    _write_json(_out_dir(args) / "report.json", rep.to_dict())
    cv, iv = rep.common_verdict, rep.independent_verdict
    ok = cv.consistent and iv.consistent
    if cv.transfers:
        ok = ok and rep.transplants_agree
    elif rep.witness is not None:
        ok = ok and rep.witness["confirmed"]
    print(f"common->independent: {cv.label}  independent->common: {iv.label}  "
          f"sup|vC - vI| = {rep.sup_abs_diff:.3e}")
    if rep.witness is not None:
        w = rep.witness
        print(f"witness x = {w['x']:.4f}: J = {w['J']:.5f} +/- {w['stderr']:.5f} vs vC = {w['vCommon']:.5f}")
    return EXIT_OK if ok else EXIT_GATE


def cmd_bsde_converge(args) -> int:
    game = _game(args)
    cfg = _grid(args)
    mode = game.mode
    stat = solver.solve(game, cfg, mode)
    horizons = _floats(args.horizons)
    rows = bsde.convergence_study(game, stat.value.values, horizons, args.dt, cfg, mode)
    for row in rows:
        log.info("k=%g runtime %.3f s", row["k"], row["runtimeSeconds"])
    out = _out_dir(args)
    with (out / "convergence.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "supError"])
        for row in rows:
            w.writerow([f"{row['k']:g}", f"{row['supError']:.10e}"])
    errs = [row["supError"] for row in rows]
    ok = all(b < a for a, b in zip(errs, errs[1:]))
    report = {"mode": mode, "dt": args.dt, "rows": [{"k": r["k"], "supError": r["supError"]} for r in rows],
              "strictlyDecreasing": bool(ok)}
    if args.dpe_points:
        dpe = []
        for j, x in enumerate(_floats(args.dpe_points)):
            est = bsde.check_dpe(game, stat.value, x, args.paths, args.seed + j, args.workers, mode)
            v = float(stat.value(x))
            good = abs(est.mean - v) <= 3 * est.stderr + args.abs_tol
            dpe.append({"x": x, "v": v, "mean": est.mean, "stderr": est.stderr, "passed": bool(good)})
            ok = ok and good
        report["dpe"] = dpe
    report["passed"] = bool(ok)
    _write_json(out / "report.json", report)
    for row in rows:
        print(f"k = {row['k']:g}: sup error {row['supError']:.3e}")
    print(f"gate {'pass' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_GATE


# --------------------------------------------------------------------------
# parser


def _grid_flags(p):
    p.add_argument("--grid", default="-8,8,1e-3", help="lo,hi,h; write --grid=-8,8,1e-3 when lo is negative")
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--max-iter", type=int, default=1000)
    p.add_argument("--boundary", choices=[solver.ROBIN, solver.DIRICHLET], default=solver.ROBIN)


def _mc_flags(p, paths=100_000):
    p.add_argument("--x0", type=float, default=0.0)
    p.add_argument("--paths", type=int, default=paths)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--horizon-cap", type=float, default=None, help="default 20/r")


def _set_flags(p):
    p.add_argument("--sets-from", choices=MODES, default=None,
                   help="solve in this mode to obtain the hitting sets (default: --mode)")
    p.add_argument("--sup-set", default=None, help="explicit sup set, e.g. --sup-set=-1:1")
    p.add_argument("--inf-set", default=None, help="explicit inf set, e.g. --inf-set=-1.65:-1,1:1.65")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="poisson-dynkin",
                                 description="Dynkin games with Poisson-constrained stopping.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("closed-form", help="explicit Brownian indicator example")
    p.add_argument("--r", type=float, default=1.0)
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p.add_argument("--eps", type=float, default=9.0)
    p.add_argument("--delta", type=float, default=None, help="shoulder width of the modified payoffs")
    p.add_argument("--step", type=float, default=1e-3)
    p.set_defaults(func=cmd_closed_form)

    p = sub.add_parser("solve", help="value iteration on a grid")
    p.add_argument("--config", required=True)
    p.add_argument("--mode", choices=MODES, default=None)
    _grid_flags(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("simulate", help="Monte Carlo payoff of a hitting pair")
    p.add_argument("--config", required=True)
    p.add_argument("--mode", choices=MODES, default=None)
    _mc_flags(p)
    _set_flags(p)
    _grid_flags(p)
    p.add_argument("--n-sigma", type=float, default=3.0)
    p.add_argument("--abs-tol", type=float, default=1e-3)
    p.add_argument("--no-gate", action="store_true", help="skip the comparison with the grid value")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("coupling", help="KS test of the two thinning constructions")
    p.add_argument("--config", required=True)
    p.add_argument("--mode", choices=MODES, default=None)
    _mc_flags(p)
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--alpha", type=float, default=0.01)
    p.add_argument("--corrupt", action="store_true", help="negative control: break the thinning")
    _set_flags(p)
    _grid_flags(p)
    p.set_defaults(func=cmd_coupling)

    p = sub.add_parser("deviations", help="unilateral deviation battery")
    p.add_argument("--config", required=True)
    p.add_argument("--mode", choices=MODES, default=None)
    _mc_flags(p)
    p.add_argument("--count", type=int, default=5, help="deviations per player")
    p.add_argument("--n-sigma", type=float, default=3.0)
    p.add_argument("--expect-violation", action="store_true",
                   help="gate passes only if some deviation beats the saddle")
    _set_flags(p)
    _grid_flags(p)
    p.set_defaults(func=cmd_deviations)

    p = sub.add_parser("equivalence", help="transfer verdicts and cross-validation")
    p.add_argument("--config", required=True)
    p.add_argument("--paths", type=int, default=200_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--horizon-cap", type=float, default=None)
    p.add_argument("--points", default=None, help="transplant points, comma-separated")
    _grid_flags(p)
    p.set_defaults(func=cmd_equivalence)

    p = sub.add_parser("bsde-converge", help="finite-horizon truncations and the one-step identity")
    p.add_argument("--config", required=True)
    p.add_argument("--mode", choices=MODES, default=None)
    p.add_argument("--horizons", default="1,2,4,8,16")
    p.add_argument("--dt", type=float, default=1e-2)
    p.add_argument("--dpe-points", default=None, help="points for the Monte Carlo one-step check")
    p.add_argument("--paths", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--abs-tol", type=float, default=5e-3)
    _grid_flags(p)
    p.set_defaults(func=cmd_bsde_converge)

    for p in sub.choices.values():
        p.add_argument("--out", default="out", help="output directory (default ./out)")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    handler = logging.FileHandler(out / "run.log")
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(message)s"))
    log.addHandler(handler)
    log.setLevel(logging.INFO)
    log.info("start %s", " ".join(sys.argv[:1] + list(argv if argv is not None else sys.argv[1:])))
    t0 = time.perf_counter()
    try:
        code = args.func(args)
    except NonConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        code = EXIT_NONCONV
    except (ConfigError, InvalidParametersError, DomainError, HypothesisViolationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        code = EXIT_CONFIG
    log.info("exit %d after %.3f s", code, time.perf_counter() - t0)
    log.removeHandler(handler)
    handler.close()
    return code


if __name__ == "__main__":
    raise SystemExit(main())
