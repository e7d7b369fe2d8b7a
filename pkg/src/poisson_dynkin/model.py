"""Domain types: diffusions, piecewise payoff functions, games, stopping sets."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, Union

import numpy as np

__all__ = [
    "COMMON",
    "INDEPENDENT",
    "MODES",
    "BROWNIAN",
    "GEOMETRIC",
    "ORNSTEIN_UHLENBECK",
    "DomainError",
    "InvalidParametersError",
    "NonConvergenceError",
    "HypothesisViolationError",
    "DiffusionSpec",
    "Constant",
    "Affine",
    "PositivePartAffine",
    "Tabulated",
    "FunctionSpec",
    "GameSpec",
    "Interval",
    "IntervalUnion",
    "StoppingSets",
    "eval_function",
    "payoff_on_tie",
    "function_to_list",
    "function_from_list",
    "game_to_dict",
    "game_from_dict",
    "load_game",
    "save_game",
]

COMMON = "common"
INDEPENDENT = "independent"
MODES = (COMMON, INDEPENDENT)

BROWNIAN = "BrownianMotion"
GEOMETRIC = "GeometricBM"
ORNSTEIN_UHLENBECK = "OrnsteinUhlenbeck"


class DomainError(ValueError):
    """A point lies outside the state space or computational domain."""


class InvalidParametersError(ValueError):
    """Parameters violate a documented precondition."""


class NonConvergenceError(RuntimeError):
    def __init__(self, message, last_change=float("nan")):
        super().__init__(message)
        self.last_change = last_change


class HypothesisViolationError(ValueError):
    """A structural precondition (e.g. disjoint stopping sets) does not hold."""


# --------------------------------------------------------------------------
# diffusions


@dataclass(frozen=True)
class DiffusionSpec:
    """One-dimensional diffusion with an exact transition law.

    ``BrownianMotion``: dX = mu dt + sigma dW on the real line.
    ``GeometricBM``: dX = mu X dt + sigma X dW on (0, inf).
    ``OrnsteinUhlenbeck``: dX = -mu X dt + sigma dW, i.e. ``drift`` is the
    mean-reversion speed towards 0 (mu > 0 required).
    """

    kind: str = BROWNIAN
    drift: float = 0.0
    volatility: float = 1.0

    def __post_init__(self):
        if self.kind not in (BROWNIAN, GEOMETRIC, ORNSTEIN_UHLENBECK):
            raise InvalidParametersError(f"unknown diffusion kind {self.kind!r}")
        if not self.volatility > 0:
            raise InvalidParametersError("volatility must be positive")
        if self.kind == ORNSTEIN_UHLENBECK and not self.drift > 0:
            raise InvalidParametersError("OU mean-reversion speed must be positive")

    @property
    def state_space(self) -> tuple[float, float]:
        if self.kind == GEOMETRIC:
            return (0.0, math.inf)
        return (-math.inf, math.inf)

    def drift_coef(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == BROWNIAN:
            return np.full_like(x, self.drift)
        if self.kind == GEOMETRIC:
            return self.drift * x
        return -self.drift * x

    def var_coef(self, x):
        """Squared diffusion coefficient a(x); the generator is b f' + a f''/2."""
        x = np.asarray(x, dtype=float)
        if self.kind == GEOMETRIC:
            return (self.volatility * x) ** 2
        return np.full_like(x, self.volatility**2)

    def transition(self, x, dt, z):
        """Exact sample of X_{t+dt} given X_t = x and standard normals z."""
        mu, s = self.drift, self.volatility
        if self.kind == BROWNIAN:
            return x + mu * dt + s * np.sqrt(dt) * z
        if self.kind == GEOMETRIC:
            return x * np.exp((mu - 0.5 * s * s) * dt + s * np.sqrt(dt) * z)
        decay = np.exp(-mu * dt)
        sd = s * np.sqrt(-np.expm1(-2.0 * mu * dt) / (2.0 * mu))
        return x * decay + sd * z

    def contains(self, x) -> np.ndarray:
        lo, hi = self.state_space
        x = np.asarray(x, dtype=float)
        return (x > lo) & (x < hi)


# --------------------------------------------------------------------------
# piecewise functions


@dataclass(frozen=True)
class Constant:
    c: float

    def __call__(self, x):
        return np.full_like(np.asarray(x, dtype=float), self.c)


@dataclass(frozen=True)
class Affine:
    a: float
    b: float

    def __call__(self, x):
        return self.a * np.asarray(x, dtype=float) + self.b


@dataclass(frozen=True)
class PositivePartAffine:
    a: float
    b: float

    def __call__(self, x):
        return np.maximum(self.a * np.asarray(x, dtype=float) + self.b, 0.0)


@dataclass(frozen=True)
class Tabulated:
    grid: tuple
    values: tuple

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=float)
        if g.ndim != 1 or g.size < 2 or np.any(np.diff(g) <= 0):
            raise InvalidParametersError("tabulated grid must be strictly increasing with >= 2 points")
        if len(self.values) != g.size:
            raise InvalidParametersError("tabulated grid and values differ in length")
        object.__setattr__(self, "grid", tuple(float(v) for v in self.grid))
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))

    def __call__(self, x):
        # flat extrapolation outside the table
        return np.interp(np.asarray(x, dtype=float), self.grid, self.values)


Piece = Union[Constant, Affine, PositivePartAffine, Tabulated]


def _piece_min_on(piece: Piece, lo: float, hi: float) -> float:
    """Infimum of a piece on the cell [lo, hi) (endpoints may be infinite)."""
    if isinstance(piece, Constant):
        return piece.c
    if isinstance(piece, PositivePartAffine):
        return 0.0
    if isinstance(piece, Tabulated):
        return min(piece.values)
    a, b = piece.a, piece.b
    if (a > 0 and math.isinf(lo)) or (a < 0 and math.isinf(hi)):
        return -math.inf
    ends = [a * e + b for e in (lo, hi) if math.isfinite(e)]
    return min(ends) if ends else b


def _piece_max_on(piece: Piece, lo: float, hi: float) -> float:
    if isinstance(piece, Constant):
        return piece.c
    if isinstance(piece, Tabulated):
        return max(piece.values)
    a, b = piece.a, piece.b
    if (a > 0 and math.isinf(hi)) or (a < 0 and math.isinf(lo)):
        return math.inf
    ends = [a * e + b for e in (lo, hi) if math.isfinite(e)]
    top = max(ends) if ends else b
    return max(top, 0.0) if isinstance(piece, PositivePartAffine) else top


@dataclass(frozen=True)
class FunctionSpec:
    """Piecewise function: breakpoints b_0 < ... < b_m and m + 1 pieces.

    Cell i is [b_{i-1}, b_i) with b_{-1} = -inf and b_m+1 = +inf, so the
    function is right-continuous at every breakpoint.  ``domain`` is the
    closed interval on which evaluation is permitted.
    """

    breakpoints: tuple = ()
    pieces: tuple = (Constant(0.0),)
    domain: tuple = (-math.inf, math.inf)

    def __post_init__(self):
        bps = tuple(float(b) for b in self.breakpoints)
        object.__setattr__(self, "breakpoints", bps)
        object.__setattr__(self, "pieces", tuple(self.pieces))
        if any(not math.isfinite(b) for b in bps):
            raise InvalidParametersError("breakpoints must be finite")
        if any(b1 <= b0 for b0, b1 in zip(bps, bps[1:])):
            raise InvalidParametersError("breakpoints must be strictly increasing")
        if len(self.pieces) != len(bps) + 1:
            raise InvalidParametersError(
                f"{len(bps)} breakpoints need {len(bps) + 1} pieces, got {len(self.pieces)}"
            )
        for (lo, hi), piece in zip(self.cells(), self.pieces):
            lo, hi = max(lo, self.domain[0]), min(hi, self.domain[1])
            if lo < hi and _piece_min_on(piece, lo, hi) < 0:
                raise InvalidParametersError(f"payoff piece {piece} is negative on [{lo}, {hi})")

    def cells(self):
        edges = (-math.inf,) + self.breakpoints + (math.inf,)
        return list(zip(edges[:-1], edges[1:]))

    def __call__(self, x):
        return eval_function(self, x)

    def sup_value(self) -> float:
        best = 0.0
        for (lo, hi), piece in zip(self.cells(), self.pieces):
            lo, hi = max(lo, self.domain[0]), min(hi, self.domain[1])
            if lo < hi:
                best = max(best, _piece_max_on(piece, lo, hi))
        return best

    @classmethod
    def constant(cls, c: float, **kw) -> "FunctionSpec":
        return cls((), (Constant(c),), **kw)

    @classmethod
    def indicator(cls, lo: float, hi: float, inside: float = 1.0, outside: float = 0.0) -> "FunctionSpec":
        """``inside`` on [lo, hi), ``outside`` elsewhere."""
        return cls((lo, hi), (Constant(outside), Constant(inside), Constant(outside)))


def eval_function(f: FunctionSpec, x):
    """Evaluate a piecewise function; scalar in, float out; array in, array out."""
    xa = np.asarray(x, dtype=float)
    lo, hi = f.domain
    if np.any(np.isnan(xa)) or np.any(xa < lo) or np.any(xa > hi):
        raise DomainError(f"point outside the domain [{lo}, {hi}]")
    if not f.breakpoints:
        out = f.pieces[0](xa)
    else:
        cell = np.searchsorted(np.asarray(f.breakpoints), xa, side="right")
        out = np.empty_like(xa)
        for i, piece in enumerate(f.pieces):
            m = cell == i
            if np.any(m):
                out[m] = piece(xa[m])
    if np.ndim(x) == 0:
        return float(out)
    return out


def payoff_on_tie(l_val: float, u_val: float) -> float:
    """Payoff when both players stop at the same signal: the sup player's."""
    return l_val


# --------------------------------------------------------------------------
# games


@dataclass(frozen=True)
class GameSpec:
    diffusion: DiffusionSpec
    lower: FunctionSpec
    upper: FunctionSpec
    discount: float
    signal_rate: float
    mode: str = COMMON
    terminal_payoff: float = 0.0

    def __post_init__(self):
        if not self.discount > 0:
            raise InvalidParametersError("discount rate must be positive")
        if not self.signal_rate > 0:
            raise InvalidParametersError("signal rate must be positive")
        if self.mode not in MODES:
            raise InvalidParametersError(f"mode must be one of {MODES}")
        if self.terminal_payoff != 0:
            raise InvalidParametersError("only M_inf = 0 is supported")

    def with_mode(self, mode: str) -> "GameSpec":
        return GameSpec(self.diffusion, self.lower, self.upper, self.discount, self.signal_rate, mode)

    def payoff_bound(self) -> float:
        return max(self.lower.sup_value(), self.upper.sup_value())


# --------------------------------------------------------------------------
# interval unions


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float
    lo_closed: bool = True
    hi_closed: bool = True

    def __post_init__(self):
        if self.lo > self.hi:
            raise InvalidParametersError(f"empty interval bounds {self.lo} > {self.hi}")
        if math.isinf(self.lo):
            object.__setattr__(self, "lo_closed", False)
        if math.isinf(self.hi):
            object.__setattr__(self, "hi_closed", False)

    @property
    def is_empty(self) -> bool:
        return self.lo == self.hi and not (self.lo_closed and self.hi_closed)

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        left = x >= self.lo if self.lo_closed else x > self.lo
        right = x <= self.hi if self.hi_closed else x < self.hi
        return left & right

    def intersect(self, other: "Interval") -> "Interval | None":
        if self.lo != other.lo:
            lo, lo_c = max((self.lo, self.lo_closed), (other.lo, other.lo_closed))
        else:
            lo, lo_c = self.lo, self.lo_closed and other.lo_closed
        if self.hi != other.hi:
            hi, hi_c = min((self.hi, self.hi_closed), (other.hi, other.hi_closed))
        else:
            hi, hi_c = self.hi, self.hi_closed and other.hi_closed
        if lo > hi:
            return None
        out = Interval(lo, hi, lo_c, hi_c)
        return None if out.is_empty else out

    def __str__(self):
        return f"{'[' if self.lo_closed else '('}{self.lo:g}, {self.hi:g}{']' if self.hi_closed else ')'}"


class IntervalUnion(tuple):
    """Sorted tuple of pairwise-disjoint, non-empty intervals."""

    def __new__(cls, intervals: Sequence[Interval] = ()):
        items = sorted((iv for iv in intervals if not iv.is_empty), key=lambda iv: (iv.lo, not iv.lo_closed))
        merged: list[Interval] = []
        for iv in items:
            if merged:
                last = merged[-1]
                touching = iv.lo < last.hi or (iv.lo == last.hi and (iv.lo_closed or last.hi_closed))
                if touching:
                    if iv.hi > last.hi:
                        hi, hi_c = iv.hi, iv.hi_closed
                    else:
                        hi, hi_c = last.hi, last.hi_closed or (iv.hi == last.hi and iv.hi_closed)
                    merged[-1] = Interval(last.lo, hi, last.lo_closed, hi_c)
                    continue
            merged.append(iv)
        return super().__new__(cls, merged)

    @classmethod
    def from_pairs(cls, pairs, closed: bool = True) -> "IntervalUnion":
        return cls([Interval(float(a), float(b), closed, closed) for a, b in pairs])

    @property
    def is_empty(self) -> bool:
        return len(self) == 0

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape, dtype=bool)
        for iv in self:
            out |= iv.contains(x)
        return out

    def intersect(self, other: "IntervalUnion") -> "IntervalUnion":
        out = []
        for a in self:
            for b in other:
                c = a.intersect(b)
                if c is not None:
                    out.append(c)
        return IntervalUnion(out)

    def transform(self, fn) -> "IntervalUnion":
        """Apply ``fn`` to every interval; ``fn`` may return ``None`` to drop it."""
        return IntervalUnion([iv2 for iv2 in (fn(iv) for iv in self) if iv2 is not None])

    def to_pairs(self):
        return [[_enc(iv.lo), _enc(iv.hi)] for iv in self]

    def __str__(self):
        return " U ".join(str(iv) for iv in self) if self else "{}"


@dataclass(frozen=True)
class StoppingSets:
    sup_set: IntervalUnion = field(default_factory=IntervalUnion)
    inf_set: IntervalUnion = field(default_factory=IntervalUnion)


# --------------------------------------------------------------------------
# JSON


def _enc(v: float):
    return None if math.isinf(v) else float(v)


def _dec(v, default: float) -> float:
    return default if v is None else float(v)


_KINDS = {Constant: "const", Affine: "affine", PositivePartAffine: "pospart", Tabulated: "table"}


def function_to_list(f: FunctionSpec) -> list:
    out = []
    for (lo, hi), piece in zip(f.cells(), f.pieces):
        if isinstance(piece, Constant):
            params = [piece.c]
        elif isinstance(piece, Tabulated):
            params = [list(piece.grid), list(piece.values)]
        else:
            params = [piece.a, piece.b]
        out.append({"cell": [_enc(lo), _enc(hi)], "kind": _KINDS[type(piece)], "params": params})
    return out


def function_from_list(items: list, domain=(-math.inf, math.inf)) -> FunctionSpec:
    if not items:
        raise InvalidParametersError("a payoff needs at least one piece")
    pieces, bps = [], []
    for i, item in enumerate(items):
        lo = _dec(item["cell"][0], -math.inf)
        hi = _dec(item["cell"][1], math.inf)
        if i == 0 and math.isfinite(lo):
            raise InvalidParametersError("first cell must start at -inf (null)")
        if i > 0 and lo != bps[-1]:
            raise InvalidParametersError("cells must be contiguous")
        if i == len(items) - 1 and math.isfinite(hi):
            raise InvalidParametersError("last cell must end at +inf (null)")
        if i < len(items) - 1:
            bps.append(hi)
        kind, p = item["kind"], item["params"]
        if kind == "const":
            pieces.append(Constant(float(p[0])))
        elif kind == "affine":
            pieces.append(Affine(float(p[0]), float(p[1])))
        elif kind == "pospart":
            pieces.append(PositivePartAffine(float(p[0]), float(p[1])))
        elif kind == "table":
            pieces.append(Tabulated(tuple(p[0]), tuple(p[1])))
        else:
            raise InvalidParametersError(f"unknown piece kind {kind!r}")
    return FunctionSpec(tuple(bps), tuple(pieces), domain)


def game_to_dict(game: GameSpec) -> dict:
    d = game.diffusion
    return {
        "diffusion": {"kind": d.kind, "mu": d.drift, "sigma": d.volatility},
        "lower": function_to_list(game.lower),
        "upper": function_to_list(game.upper),
        "r": game.discount,
        "lambda": game.signal_rate,
        "mode": game.mode,
    }


def game_from_dict(doc: dict) -> GameSpec:
    try:
        dd = doc["diffusion"]
        diffusion = DiffusionSpec(dd.get("kind", BROWNIAN), float(dd.get("mu", 0.0)), float(dd.get("sigma", 1.0)))
        lo, hi = diffusion.state_space
        domain = (lo, hi)
        if "M_inf" in doc and float(doc["M_inf"]) != 0.0:
            raise InvalidParametersError("only M_inf = 0 is supported")
        return GameSpec(
            diffusion,
            function_from_list(doc["lower"], domain),
            function_from_list(doc["upper"], domain),
            float(doc["r"]),
            float(doc["lambda"]),
            doc.get("mode", COMMON),
        )
    except (KeyError, TypeError, IndexError) as exc:
        raise InvalidParametersError(f"malformed game document: {exc!r}") from exc


def load_game(path) -> GameSpec:
    return game_from_dict(json.loads(Path(path).read_text()))


def save_game(game: GameSpec, path) -> None:
    Path(path).write_text(json.dumps(game_to_dict(game), indent=2) + "\n")
