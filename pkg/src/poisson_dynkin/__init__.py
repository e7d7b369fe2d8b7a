"""Perpetual zero-sum Dynkin games whose players may stop only at Poisson signal times.

Two signal regimes are supported: one stream shared by both players
(``"common"``) and one private stream per player (``"independent"``).

Modules
-------
model        diffusions, payoff functions, games, interval sets, JSON I/O
closedform   explicit Brownian indicator example and its verification
solver       finite-difference value iteration and stopping-set extraction
montecarlo   counter-based simulation of hitting strategies, coupling and deviation tests
bsde         finite-horizon truncations and the one-signal identity
equivalence  transfer conditions between the two regimes
cli          command-line entry point
"""

from .model import (
    BROWNIAN,
    COMMON,
    GEOMETRIC,
    INDEPENDENT,
    ORNSTEIN_UHLENBECK,
    DiffusionSpec,
    DomainError,
    FunctionSpec,
    GameSpec,
    HypothesisViolationError,
    Interval,
    IntervalUnion,
    InvalidParametersError,
    NonConvergenceError,
    StoppingSets,
    load_game,
    save_game,
)
from .solver import GridConfig, GameSolution, solve

__version__ = "0.1.0"
