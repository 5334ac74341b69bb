"""Third-order positive chain plant and the static maps wrapped around it."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Tuple

import numpy as np

from .errors import DistinctnessError, DomainError, UnreachableDoseError, ValidationError
from .numerics import DEFAULT_SETTINGS, NumericsSettings


@dataclass(frozen=True)
class PlantLTI:
    """Chain plant ``x' = A x + B u``, ``ybar = C x``.

    ``A`` is lower bidiagonal with diagonal ``(-a1, -a2, -a3)`` and
    subdiagonal ``(g1, g2)``; ``B = e1`` and ``C = e3``, so ``CB = 0``.
    """

    a1: float
    a2: float
    a3: float
    g1: float
    g2: float
    settings: NumericsSettings = field(default=DEFAULT_SETTINGS, repr=False, compare=False)

    def __post_init__(self):
        values = (self.a1, self.a2, self.a3, self.g1, self.g2)
        if not all(math.isfinite(v) and v > 0 for v in values):
            raise ValidationError(f"plant constants must be finite and positive, got {values}")
        rates = sorted((self.a1, self.a2, self.a3))
        for lo, hi in zip(rates, rates[1:]):
            if hi - lo <= self.settings.distinct_rel * hi:
                raise DistinctnessError(f"rate constants not distinct: {rates}")

    @classmethod
    def from_matrix(cls, A, settings: NumericsSettings = DEFAULT_SETTINGS) -> "PlantLTI":
        """Accept a dense ``A`` only if it already has the chain structure."""
        A = np.asarray(A, dtype=float)
        if A.shape != (3, 3):
            raise ValidationError("only third-order plants are supported")
        mask = np.array([[1, 0, 0], [1, 1, 0], [0, 1, 1]], dtype=bool)
        if np.any(A[~mask] != 0):
            raise ValidationError("A must be lower bidiagonal (chain structure)")
        return cls(-A[0, 0], -A[1, 1], -A[2, 2], A[1, 0], A[2, 1], settings=settings)

    @property
    def rates(self) -> Tuple[float, float, float]:
        return (self.a1, self.a2, self.a3)

    @cached_property
    def A(self) -> np.ndarray:
        A = np.diag([-self.a1, -self.a2, -self.a3])
        A[1, 0] = self.g1
        A[2, 1] = self.g2
        A.setflags(write=False)
        return A

    @cached_property
    def B(self) -> np.ndarray:
        B = np.array([1.0, 0.0, 0.0])
        B.setflags(write=False)
        return B

    @cached_property
    def C(self) -> np.ndarray:
        C = np.array([0.0, 0.0, 1.0])
        C.setflags(write=False)
        return C

    def dc_gain(self) -> float:
        """Steady-state gain ``C (-A)^{-1} B = g1 g2 / (a1 a2 a3)``."""
        return self.g1 * self.g2 / (self.a1 * self.a2 * self.a3)


@dataclass(frozen=True)
class NmbParams:
    """Neuromuscular-blockade Wiener model parameters.

    ``u_max`` (continuous infusion bound) is kept for bookkeeping only; the
    impulsive controller never uses it.
    """

    alpha: float = 0.0374
    v1: float = 1.0
    v2: float = 4.0
    v3: float = 10.0
    gamma: float = 2.6677
    c50: float = 3.2425
    u_max: Optional[float] = None

    def __post_init__(self):
        if not 0 < self.alpha <= 0.1:
            raise ValidationError(f"alpha must lie in (0, 0.1], got {self.alpha}")
        if not 0 < self.gamma <= 10:
            raise ValidationError(f"gamma must lie in (0, 10], got {self.gamma}")
        if not self.c50 > 0:
            raise ValidationError(f"c50 must be positive, got {self.c50}")
        if min(self.v1, self.v2, self.v3) <= 0:
            raise ValidationError("pole multipliers must be positive")

    def hill(self) -> "HillFunction":
        return HillFunction(gamma=self.gamma, c50=self.c50)


def plant_from_nmb(p: NmbParams, settings: NumericsSettings = DEFAULT_SETTINGS) -> PlantLTI:
    """Realize ``v1 v2 v3 a^3 / ((s + v1 a)(s + v2 a)(s + v3 a))`` as a chain."""
    a = p.alpha
    return PlantLTI(
        a1=p.v1 * a,
        a2=p.v2 * a,
        a3=p.v3 * a,
        g1=p.v1 * a,
        g2=p.v2 * p.v3 * a * a,
        settings=settings,
    )


# ---------------------------------------------------------------------------
# static nonlinearities

class StaticNonlinearity:
    """Strictly monotone, positive scalar map with inverse and derivative.

    Subclasses set ``decreasing`` and ``domain`` and implement
    ``__call__``, ``inverse`` and ``derivative`` for scalars and arrays.
    """

    kind = "abstract"
    decreasing = False
    domain: Tuple[float, float] = (0.0, math.inf)

    def __call__(self, x):
        raise NotImplementedError

    def inverse(self, y):
        raise NotImplementedError

    def derivative(self, x):
        raise NotImplementedError

    def params(self) -> dict:
        """Plain-data description, used when echoing configurations."""
        return {"kind": self.kind}


def _as_out(arr):
    return float(arr) if np.ndim(arr) == 0 else arr


@dataclass(frozen=True)
class HillFunction(StaticNonlinearity):
    """``emax * c50^g / (c50^g + x^g)``: decreasing from ``emax`` at ``x = 0``."""

    gamma: float
    c50: float
    emax: float = 100.0

    kind = "hill"
    decreasing = True
    domain = (0.0, math.inf)

    def __post_init__(self):
        if not (self.gamma > 0 and self.c50 > 0 and self.emax > 0):
            raise ValidationError("Hill parameters must be positive")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if np.any(x < 0) or np.any(np.isnan(x)):
            raise DomainError("Hill function is defined for x >= 0")
        # c50^g / (c50^g + x^g) written as 1 / (1 + (x/c50)^g)
        return _as_out(self.emax / (1.0 + (x / self.c50) ** self.gamma))

    def inverse(self, y):
        y = np.asarray(y, dtype=float)
        if np.any(~((y > 0) & (y <= self.emax))):
            raise DomainError(f"Hill inverse is defined on (0, {self.emax}]")
        return _as_out(self.c50 * (self.emax / y - 1.0) ** (1.0 / self.gamma))

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        if np.any(x < 0) or (self.gamma < 1 and np.any(x == 0)):
            raise DomainError("Hill derivative undefined at this point")
        r = (x / self.c50) ** self.gamma
        with np.errstate(divide="ignore", invalid="ignore"):
            # -g emax c50^g x^(g-1) / (c50^g + x^g)^2 == -g emax r / (x (1 + r)^2)
            d = np.where(x > 0, -self.gamma * self.emax * r / (x * (1.0 + r) ** 2), 0.0)
        if self.gamma == 1:
            d = np.where(x == 0, -self.emax / self.c50, d)
        return _as_out(d)

    def params(self):
        return {"kind": self.kind, "gamma": self.gamma, "c50": self.c50, "emax": self.emax}


@dataclass(frozen=True)
class Identity(StaticNonlinearity):
    kind = "identity"
    decreasing = False
    domain = (0.0, math.inf)

    def __call__(self, x):
        return _as_out(np.asarray(x, dtype=float))

    def inverse(self, y):
        return _as_out(np.asarray(y, dtype=float))

    def derivative(self, x):
        return _as_out(np.ones_like(np.asarray(x, dtype=float)))


@dataclass(frozen=True)
class PowerLaw(StaticNonlinearity):
    """``coef * u^exponent`` on ``u >= 0`` (increasing)."""

    exponent: float
    coef: float = 1.0

    kind = "power"
    decreasing = False
    domain = (0.0, math.inf)

    def __post_init__(self):
        if not (self.exponent > 0 and self.coef > 0):
            raise ValidationError("power law needs positive exponent and coefficient")

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        if np.any(u < 0):
            raise DomainError("power law defined for u >= 0")
        return _as_out(self.coef * u ** self.exponent)

    def inverse(self, y):
        y = np.asarray(y, dtype=float)
        if np.any(y < 0):
            raise DomainError("power law inverse defined for y >= 0")
        return _as_out((y / self.coef) ** (1.0 / self.exponent))

    def derivative(self, u):
        u = np.asarray(u, dtype=float)
        if np.any(u < 0) or (self.exponent < 1 and np.any(u == 0)):
            raise DomainError("power law derivative undefined at this point")
        return _as_out(self.coef * self.exponent * u ** (self.exponent - 1.0))

    def params(self):
        return {"kind": self.kind, "exponent": self.exponent, "coef": self.coef}


class TableNonlinearity(StaticNonlinearity):
    """Piecewise-linear interpolant of a strictly monotone breakpoint table.

    Outside the table the map is undefined. The inverse swaps the roles of
    the two columns.
    """

    kind = "table"

    def __init__(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if x.ndim != 1 or x.shape != y.shape or x.size < 2:
            raise ValidationError("table needs two equal-length columns with >= 2 rows")
        if np.any(np.diff(x) <= 0):
            raise ValidationError("table abscissae must be strictly increasing")
        dy = np.diff(y)
        if not (np.all(dy > 0) or np.all(dy < 0)):
            raise ValidationError("table values must be strictly monotone")
        if np.any(y <= 0):
            raise ValidationError("table values must be positive")
        self.x = x
        self.y = y
        self.decreasing = bool(dy[0] < 0)
        self.domain = (float(x[0]), float(x[-1]))
        self._slopes = dy / np.diff(x)

    def __eq__(self, other):
        return (isinstance(other, TableNonlinearity)
                and np.array_equal(self.x, other.x) and np.array_equal(self.y, other.y))

    def __hash__(self):
        return hash((self.x.tobytes(), self.y.tobytes()))

    def __repr__(self):
        return f"TableNonlinearity(x={self.x.tolist()}, y={self.y.tolist()})"

    def _check(self, x, lo, hi):
        if np.any(x < lo) or np.any(x > hi):
            raise DomainError(f"argument outside the table range [{lo}, {hi}]")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        self._check(x, self.x[0], self.x[-1])
        return _as_out(np.interp(x, self.x, self.y))

    def inverse(self, y):
        y = np.asarray(y, dtype=float)
        ys, xs = (self.y[::-1], self.x[::-1]) if self.decreasing else (self.y, self.x)
        self._check(y, ys[0], ys[-1])
        return _as_out(np.interp(y, ys, xs))

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        self._check(x, self.x[0], self.x[-1])
        seg = np.clip(np.searchsorted(self.x, x, side="right") - 1, 0, self._slopes.size - 1)
        return _as_out(self._slopes[seg])

    def params(self):
        return {"kind": self.kind, "x": self.x.tolist(), "y": self.y.tolist()}


def invert_numeric(
    nl: StaticNonlinearity,
    target: float,
    lo: float,
    hi: float,
    settings: NumericsSettings = DEFAULT_SETTINGS,
) -> float:
    """Solve ``nl(u) = target`` for ``u`` in ``[lo, hi]`` by bisection.

    Stops once ``|nl(u) - target| <= invert_tol * max(1, |target|)`` or the
    bracket cannot be split any further.
    """
    if not hi > lo:
        raise DomainError(f"empty bracket [{lo}, {hi}]")
    f_lo, f_hi = nl(lo) - target, nl(hi) - target
    if f_lo == 0:
        return float(lo)
    if f_hi == 0:
        return float(hi)
    if (f_lo < 0) == (f_hi < 0):
        raise UnreachableDoseError(
            f"target {target} outside [{min(nl(lo), nl(hi))}, {max(nl(lo), nl(hi))}]"
        )
    tol = settings.invert_tol * max(1.0, abs(target))
    a, b = float(lo), float(hi)
    best, best_res = (a, abs(f_lo)) if abs(f_lo) <= abs(f_hi) else (b, abs(f_hi))
    while True:
        m = 0.5 * (a + b)
        if not a < m < b:
            break
        fm = nl(m) - target
        if abs(fm) < best_res:
            best, best_res = m, abs(fm)
        if abs(fm) <= tol:
            break
        if (fm < 0) == (f_lo < 0):
            a, f_lo = m, fm
        else:
            b = m
    return float(best)


@dataclass(frozen=True)
class PlantStructure:
    """Linear chain with optional input (Hammerstein) and output (Wiener) maps."""

    linear: PlantLTI
    input_nl: Optional[StaticNonlinearity] = None
    output_nl: Optional[StaticNonlinearity] = None

    @property
    def kind(self) -> str:
        if self.input_nl is not None and self.output_nl is not None:
            return "wiener-hammerstein"
        if self.input_nl is not None:
            return "hammerstein"
        if self.output_nl is not None:
            return "wiener"
        return "lti"

    def measured(self, ybar):
        """Sensor output ``y`` for linear output ``ybar``."""
        return ybar if self.output_nl is None else self.output_nl(ybar)
