"""Closed-form analysis of 1-cycles of the impulsive loop.

A 1-cycle fires once per period ``T`` with a constant weight ``lam``. Its
pre-jump state ``X`` solves ``X = e^{AT} (X + lam B)``. Between firings the
state is ``x(t) = lam e^{At} (I - e^{AT})^{-1} B``, and the extrema of the
linear output are found among the zeros of its time derivative.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Tuple

import numpy as np

from .errors import AnalysisError, DomainError
from .numerics import (
    DEFAULT_SETTINGS,
    NumericsSettings,
    RootSet,
    divided_difference,
    mat_exp,
    mu,
    mu_derivative,
    solve_linear,
)
from .plant import PlantLTI, StaticNonlinearity


def _check_cycle_args(T, lam):
    if not (math.isfinite(T) and T > 0):
        raise DomainError(f"period must be positive, got {T}")
    if not (math.isfinite(lam) and lam > 0):
        raise DomainError(f"weight must be positive, got {lam}")


def fixed_point_elements(plant: PlantLTI, T: float, lam: float,
                         settings: NumericsSettings = DEFAULT_SETTINGS) -> np.ndarray:
    """Fixed point coordinate by coordinate via divided differences of ``mu``."""
    _check_cycle_args(T, lam)

    def f(z):
        return mu(z, settings)

    def df(z, k):
        return mu_derivative(z, k, settings)

    z = [-plant.a1 * T, -plant.a2 * T, -plant.a3 * T]
    x1 = lam * mu(z[0], settings)
    x2 = lam * plant.g1 * T * divided_difference(f, z[:2], df, settings)
    x3 = lam * plant.g1 * plant.g2 * T ** 2 * divided_difference(f, z, df, settings)
    return np.array([x1, x2, x3])


def fixed_point(plant: PlantLTI, T: float, lam: float, check: bool = True,
                settings: NumericsSettings = DEFAULT_SETTINGS) -> np.ndarray:
    """Pre-jump state ``X = lam e^{AT} (I - e^{AT})^{-1} B`` of the 1-cycle.

    With ``check=True`` the result is compared against
    :func:`fixed_point_elements`; a relative mismatch above
    ``settings.fixed_point_rtol`` raises :class:`AnalysisError`.
    """
    _check_cycle_args(T, lam)
    E = mat_exp(plant.A, T)
    X = lam * solve_linear(np.eye(3) - E, E @ plant.B, settings)
    if check:
        Xd = fixed_point_elements(plant, T, lam, settings)
        rel = np.max(np.abs(X - Xd) / np.abs(Xd))
        if not rel <= settings.fixed_point_rtol:
            raise AnalysisError(
                f"matrix and divided-difference fixed points differ (rel {rel:.3g})"
            )
    return X


@dataclass(frozen=True)
class OneCycle:
    """Periodic solution with one firing per period.

    ``X`` is the state just before each firing; ``y0 = C X`` its output.
    """

    T: float
    lam: float
    X: np.ndarray

    @classmethod
    def from_parameters(cls, plant: PlantLTI, T: float, lam: float,
                        settings: NumericsSettings = DEFAULT_SETTINGS) -> "OneCycle":
        return cls(T=float(T), lam=float(lam), X=fixed_point(plant, T, lam, settings=settings))

    @property
    def y0(self) -> float:
        return float(self.X[2])


class PeriodicProfile:
    """Output shape of the 1-cycle of period ``T`` per unit weight.

    ``w = (I - e^{AT})^{-1} B`` is solved once; the cycle output is
    ``lam C e^{At} w`` and its derivative ``lam C e^{At} A w``.
    """

    def __init__(self, plant: PlantLTI, T: float, settings: NumericsSettings = DEFAULT_SETTINGS):
        if not (math.isfinite(T) and T > 0):
            raise DomainError(f"period must be positive, got {T}")
        self.plant = plant
        self.T = float(T)
        self.settings = settings
        self.E = mat_exp(plant.A, self.T)
        self.w = solve_linear(np.eye(3) - self.E, plant.B, settings)
        # A commutes with (I - e^{AT})^{-1}
        self.v = plant.A @ self.w

    def rows(self, t) -> np.ndarray:
        """``C e^{At}`` for an array of times (one row per time)."""
        return mat_exp(self.plant.A, t)[..., 2, :]

    def output(self, t, lam: float = 1.0):
        out = lam * (self.rows(t) @ self.w)
        return float(out) if np.ndim(out) == 0 else out

    def slope(self, t, lam: float = 1.0):
        out = lam * (self.rows(t) @ self.v)
        return float(out) if np.ndim(out) == 0 else out

    def _grid_rows(self, n: int) -> np.ndarray:
        # C e^{A k h}, k = 0..n, by doubling with powers of one step propagator
        step = mat_exp(self.plant.A, self.T / n)
        rows = self.plant.C[None, :].copy()
        while rows.shape[0] < n + 1:
            rows = np.vstack([rows, rows @ step])
            step = step @ step
        return rows[:n + 1]

    def slope_roots(self, grid_n: Optional[int] = None,
                    tol: Optional[float] = None) -> Tuple[RootSet, np.ndarray]:
        """Sign-change roots of the output derivative on ``[0, T]``.

        Same algorithm as :func:`pulse_corridor.numerics.find_roots` (uniform
        scan, then bisection to width ``tol``), but every evaluation reuses
        the propagators of the grid: the left end of a bracket carries its
        row ``C e^{Aa}`` and each midpoint is reached by one precomputed
        half-step ``e^{A h / 2^j}``.

        Returns the roots and the unit-weight outputs ``C e^{A tau} w`` there.
        """
        n = self.settings.root_grid if grid_n is None else int(grid_n)
        tol = self.settings.root_tol_rel * self.T if tol is None else float(tol)
        h = self.T / n
        rows = self._grid_rows(n)
        taus = np.arange(n + 1) * h
        g = rows @ self.v

        on_grid = np.flatnonzero(g == 0.0)
        neg = g < 0
        cells = np.flatnonzero((neg[:-1] != neg[1:]) & (g[:-1] != 0.0) & (g[1:] != 0.0))

        halvings = max(1, math.ceil(math.log2(h / tol)))
        half = mat_exp(self.plant.A, h / 2.0 ** np.arange(1, halvings + 2))
        r_a = rows[cells]
        g_a = g[cells]
        a = taus[cells]
        for j in range(halvings):
            r_m = r_a @ half[j]
            g_m = r_m @ self.v
            same = (g_m < 0) == (g_a < 0)
            r_a = np.where(same[:, None], r_m, r_a)
            g_a = np.where(same, g_m, g_a)
            a = np.where(same, a + h / 2.0 ** (j + 1), a)
        r_root = r_a @ half[halvings]
        width = h / 2.0 ** halvings

        roots = np.concatenate([taus[on_grid], a + width / 2])
        root_rows = np.vstack([rows[on_grid], r_root])
        order = np.argsort(roots, kind="stable")
        roots, root_rows = roots[order], root_rows[order]
        residuals = np.abs(root_rows @ self.v)
        rs = RootSet(tuple(float(r) for r in roots), float(width if cells.size else 0.0),
                     tuple(float(r) for r in residuals))
        return rs, root_rows @ self.w


def periodic_output(plant: PlantLTI, cycle: OneCycle, t,
                    settings: NumericsSettings = DEFAULT_SETTINGS):
    """Linear output of the 1-cycle at times ``t`` in the open interval ``(0, T)``."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(~((t_arr > 0) & (t_arr < cycle.T))):
        raise DomainError(f"periodic_output needs 0 < t < T = {cycle.T}")
    return PeriodicProfile(plant, cycle.T, settings).output(t_arr, cycle.lam)


@dataclass(frozen=True)
class CorridorAnalysis:
    """Extrema of the periodic output of a 1-cycle.

    ``y_min`` and ``y_max`` stay ``None`` until the corridor is pushed through
    an output map with :func:`map_corridor_through_output_nl`.
    """

    T: float
    lam: float
    extremum_times: Tuple[float, ...]
    extremum_values: Tuple[float, ...]
    y_bar_min: float
    y_bar_max: float
    y0: float
    y_min: Optional[float] = None
    y_max: Optional[float] = None
    roots: Optional[RootSet] = field(default=None, repr=False, compare=False)
    profile: Optional[PeriodicProfile] = field(default=None, repr=False, compare=False)

    @property
    def ratio(self) -> float:
        """``y_bar_max / (y_bar_max - y_bar_min)``, independent of ``lam``."""
        return self.y_bar_max / (self.y_bar_max - self.y_bar_min)


def corridor_extrema(plant: PlantLTI, T: float, lam: float,
                     settings: NumericsSettings = DEFAULT_SETTINGS) -> CorridorAnalysis:
    """Minimum and maximum of the 1-cycle output over a period.

    Only interior zeros of the output derivative are candidates; the
    firing instants themselves are never extrema.
    """
    _check_cycle_args(T, lam)
    profile = PeriodicProfile(plant, T, settings)
    roots, unit_values = profile.slope_roots()
    if len(roots) == 0:
        roots, unit_values = profile.slope_roots(grid_n=16 * settings.root_grid)
    interior = [(r, v) for r, v in zip(roots, unit_values) if 0.0 < r < T]
    if not interior:
        raise AnalysisError(f"no interior extremum of the cycle output for T = {T}")
    times = tuple(r for r, _ in interior)
    values = tuple(lam * float(v) for _, v in interior)
    y0 = lam * float(profile.plant.C @ (profile.E @ profile.w))
    return CorridorAnalysis(
        T=float(T), lam=float(lam),
        extremum_times=times, extremum_values=values,
        y_bar_min=min(values), y_bar_max=max(values), y0=y0,
        roots=roots, profile=profile,
    )


def map_corridor_through_output_nl(ca: CorridorAnalysis,
                                   nl: Optional[StaticNonlinearity]) -> CorridorAnalysis:
    """Fill in the measured-output bounds ``y_min``, ``y_max``."""
    if nl is None:
        return replace(ca, y_min=ca.y_bar_min, y_max=ca.y_bar_max)
    lo, hi = float(nl(ca.y_bar_min)), float(nl(ca.y_bar_max))
    if nl.decreasing:
        lo, hi = hi, lo
    return replace(ca, y_min=lo, y_max=hi)
