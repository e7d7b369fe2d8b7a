"""Brownian indicator game: explicit solution against the grid solver.

The sup player receives 1 inside [-1, 1]; the inf player pays a level
that drops from lambda/(lambda+r) inside to 1/(1+eps) outside.  The value
has an explicit form; here it is compared with value iteration in both
signal regimes, and with a Monte Carlo run of the optimal hitting pair.
"""

import numpy as np

from poisson_dynkin import closedform, montecarlo, solver

R, LAM, EPS = 1.0, 1.0, 9.0


def main():
    cf = closedform.build_solution(R, LAM, EPS)
    print(f"eps must exceed {closedform.eps_lower_bound(cf.theta, cf.phi):.4f}; using eps = {EPS}")
    print(f"x* = {cf.x_star:.10f}")
    print(f"A, B, C, D = {cf.coeff_a:.6g}, {cf.coeff_b:.6g}, {cf.coeff_c:.6g}, {cf.coeff_d:.6g}")
    diag = closedform.verify_solution(cf)
    print(f"HJB residual {diag.hjb_residual:.1e}, C1 mismatch {max(diag.c1_mismatch.values()):.1e}")

    game = closedform.indicator_game(R, LAM, EPS)
    cfg = solver.GridConfig(-8.0, 8.0, 1e-3)
    x = cfg.nodes
    inner = np.abs(x) <= 4
    print("\nvalue iteration on [-8, 8], h = 1e-3")
    for mode in ("common", "independent"):
        sol = solver.solve(game, cfg, mode)
        err = np.max(np.abs(sol.value.values - closedform.eval_v(cf, x))[inner])
        print(f"  {mode:<12} {sol.iterations:3d} iterations  sup|v - V| on [-4,4] = {err:.2e}")
        print(f"  {'':<12} A = {sol.sets.sup_set}")
        print(f"  {'':<12} B = {sol.sets.inf_set}")

    sup, inf = montecarlo.strategies_from_sets(closedform.optimal_sets(cf))
    print("\nMonte Carlo with the explicit sets (200k paths)")
    print(f"  {'x0':>4} {'V':>9} {'common':>17} {'independent':>17}")
    for x0 in (0.0, 1.2, 3.0):
        row = [f"{x0:4.1f} {closedform.eval_v(cf, x0):9.5f}"]
        for mode in ("common", "independent"):
            est = montecarlo.simulate_game(game, x0, sup, inf, 200_000, seed=1, mode=mode)
            row.append(f"{est.mean:9.5f}+-{est.stderr:.5f}")
        print("  " + " ".join(row))


if __name__ == "__main__":
    main()
