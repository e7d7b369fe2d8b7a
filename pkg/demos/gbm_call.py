"""A call-type reward on geometric Brownian motion with an inert inf player.

With u effectively infinite the inf player never stops, and the sup player
waits for the price to clear a threshold.  The threshold is read off two
grids to show it is stable under refinement.
"""

import math

from poisson_dynkin import montecarlo, solver
from poisson_dynkin.model import GEOMETRIC, DiffusionSpec, FunctionSpec, GameSpec, PositivePartAffine

DOM = (0.0, math.inf)


def main():
    l = FunctionSpec((), (PositivePartAffine(1.0, -1.0),), domain=DOM)
    u = FunctionSpec.constant(1e3, domain=DOM)
    game = GameSpec(DiffusionSpec(GEOMETRIC, 0.02, 0.4), l, u, 0.1, 1.0)
    for h in (1e-3, 5e-4):
        cfg = solver.GridConfig(0.0, 20.0, h, max_iterations=2000, boundary=solver.DIRICHLET)
        sol = solver.solve(game, cfg)
        print(f"h = {h:g}: {sol.iterations} iterations, A = {sol.sets.sup_set}, B = {sol.sets.inf_set}")
    sup, inf = montecarlo.strategies_from_sets(sol.sets)
    for x0 in (1.0, 2.0, 3.0):
        est = montecarlo.simulate_game(game, x0, sup, inf, 100_000, seed=2)
        print(f"x0 = {x0}: grid {float(sol.value(x0)):.4f}   simulated {est.mean:.4f} +- {est.stderr:.4f}")


if __name__ == "__main__":
    main()
