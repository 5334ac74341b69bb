"""Synthesis of a corridor-keeping 1-cycle and its pulse modulation.

The pipeline is: pick the period whose output shape has the requested
``max / (max - min)`` ratio, scale the dose to the requested width, fix the
affine modulation offsets so that the cycle is reproduced, and check the
Jacobian of the firing-to-firing map.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence, Tuple

import numpy as np

from .cycle import OneCycle, corridor_extrema
from .errors import (
    DegenerateCycleError,
    DomainError,
    NoStabilizingSlopesError,
    SaturationError,
    UnreachableCorridorError,
    ValidationError,
)
from .numerics import DEFAULT_SETTINGS, NumericsSettings, eigenvalues, mat_exp
from .plant import PlantLTI, StaticNonlinearity


@dataclass(frozen=True)
class CorridorSpec:
    """Requested output corridor, both in measured and in linear units.

    Design always works on ``y_bar_min``/``y_bar_max``. Build instances with
    :meth:`linear` or :meth:`measured`.
    """

    y_bar_min: float
    y_bar_max: float
    y_min: Optional[float] = None
    y_max: Optional[float] = None
    which_given: str = "linear"

    def __post_init__(self):
        if not 0 < self.y_bar_min < self.y_bar_max:
            raise ValidationError(
                f"need 0 < y_bar_min < y_bar_max, got ({self.y_bar_min}, {self.y_bar_max})"
            )
        if self.y_min is not None and not 0 < self.y_min < self.y_max:
            raise ValidationError(f"need 0 < y_min < y_max, got ({self.y_min}, {self.y_max})")

    @classmethod
    def linear(cls, y_bar_min: float, y_bar_max: float) -> "CorridorSpec":
        return cls(float(y_bar_min), float(y_bar_max), which_given="linear")

    @classmethod
    def measured(cls, y_min: float, y_max: float,
                 nl: Optional[StaticNonlinearity] = None) -> "CorridorSpec":
        """Map a measured corridor to linear units through ``nl``'s inverse."""
        if not 0 < y_min < y_max:
            raise ValidationError(f"need 0 < y_min < y_max, got ({y_min}, {y_max})")
        if nl is None:
            lo, hi = y_min, y_max
        else:
            lo, hi = float(nl.inverse(y_min)), float(nl.inverse(y_max))
            if nl.decreasing:
                lo, hi = hi, lo
        return cls(lo, hi, float(y_min), float(y_max), which_given="measured")

    @property
    def width(self) -> float:
        return self.y_bar_max - self.y_bar_min

    @property
    def ratio(self) -> float:
        return self.y_bar_max / self.width


# ---------------------------------------------------------------------------
# period and dose

def corridor_ratio(plant: PlantLTI, T: float, lam: float = 1.0,
                   settings: NumericsSettings = DEFAULT_SETTINGS) -> float:
    """``z_max / (z_max - z_min)`` of the cycle output at period ``T``."""
    return corridor_extrema(plant, T, lam, settings).ratio


@dataclass(frozen=True)
class PeriodDesign:
    """Outcome of :func:`design_period`.

    ``ratio_residual`` is ``|target - achieved| / (target - 1)``, which bounds
    the relative error of both corridor ends once the dose is fitted to the
    corridor width. The sweep arrays hold the grid data (for plotting).
    """

    T: float
    ratio_residual: float
    target_ratio: float
    achieved_ratio: float
    sweep_T: np.ndarray
    sweep_z_min: np.ndarray
    sweep_z_max: np.ndarray

    def __iter__(self):
        yield self.T
        yield self.ratio_residual

    @property
    def sweep_ratio(self) -> np.ndarray:
        return self.sweep_z_max / (self.sweep_z_max - self.sweep_z_min)


def _golden_min(f, a, b, tol):
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    c, d = b - invphi * (b - a), a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return (c, fc) if fc <= fd else (d, fd)


def design_period(plant: PlantLTI, spec: CorridorSpec, T_range: Tuple[float, float],
                  grid_n: Optional[int] = None,
                  settings: NumericsSettings = DEFAULT_SETTINGS) -> PeriodDesign:
    """Period whose cycle shape matches the corridor ratio of ``spec``.

    The ratio is evaluated on a uniform grid over ``T_range`` with unit dose;
    the best grid point (smallest ``T`` on ties) is refined by golden-section
    search over its two neighbouring cells.

    Raises
    ------
    UnreachableCorridorError
        If the best relative mismatch exceeds ``settings.ratio_cap``.
    """
    T_min, T_max = map(float, T_range)
    if not 0 < T_min < T_max:
        raise DomainError(f"need 0 < T_min < T_max, got {T_range}")
    grid_n = settings.period_grid if grid_n is None else int(grid_n)
    if grid_n < 8:
        raise DomainError("period grid needs at least 8 points")

    target = spec.ratio
    grid = np.linspace(T_min, T_max, grid_n)
    z_min = np.empty(grid_n)
    z_max = np.empty(grid_n)
    for j, T in enumerate(grid):
        ca = corridor_extrema(plant, T, 1.0, settings)
        z_min[j], z_max[j] = ca.y_bar_min, ca.y_bar_max
    objective = np.abs(target - z_max / (z_max - z_min))
    k = int(np.argmin(objective))

    def mismatch(T):
        return abs(target - corridor_ratio(plant, T, 1.0, settings))

    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, grid_n - 1)]
    T_best, obj = _golden_min(mismatch, lo, hi, settings.period_refine_rel * (T_max - T_min))
    if objective[k] < obj:
        T_best, obj = float(grid[k]), float(objective[k])

    achieved = corridor_ratio(plant, T_best, 1.0, settings)
    residual = abs(target - achieved) / (target - 1.0)
    if residual > settings.ratio_cap:
        raise UnreachableCorridorError(
            f"corridor ratio {target:.6g} not reachable on [{T_min}, {T_max}] "
            f"(best relative mismatch {residual:.3g} at T = {T_best:.6g})"
        )
    return PeriodDesign(
        T=float(T_best), ratio_residual=float(residual), target_ratio=target,
        achieved_ratio=achieved,
        sweep_T=grid, sweep_z_min=z_min, sweep_z_max=z_max,
    )


def design_weight(plant: PlantLTI, T: float, spec: CorridorSpec,
                  settings: NumericsSettings = DEFAULT_SETTINGS) -> float:
    """Dose that stretches the unit-dose cycle output to the corridor width."""
    ca = corridor_extrema(plant, T, 1.0, settings)
    spread = ca.y_bar_max - ca.y_bar_min
    if not spread > 0:
        raise DegenerateCycleError(f"flat cycle output at T = {T}")
    return spec.width / spread


# ---------------------------------------------------------------------------
# modulation functions

def _clamp(v, lo, hi):
    return min(max(v, lo), hi)


@dataclass(frozen=True)
class ModulationConfig:
    """Clamped affine frequency and amplitude modulation.

    ``period(y) = clamp(k2 * s + k1, Phi1, Phi2)`` and
    ``dose(y) = clamp(k4 * s + k3, F1, F2)``, where ``s = output_nl(y)``
    when ``output_nl`` is set and ``s = y`` otherwise. The ``*_affine``
    methods take ``s`` directly.
    """

    k1: float
    k2: float
    k3: float
    k4: float
    Phi1: float
    Phi2: float
    F1: float
    F2: float
    output_nl: Optional[StaticNonlinearity] = None

    def __post_init__(self):
        if not 0 < self.Phi1 <= self.Phi2:
            raise ValidationError(f"need 0 < Phi1 <= Phi2, got ({self.Phi1}, {self.Phi2})")
        if not 0 < self.F1 <= self.F2:
            raise ValidationError(f"need 0 < F1 <= F2, got ({self.F1}, {self.F2})")

    @classmethod
    def constant(cls, T: float, lam: float) -> "ModulationConfig":
        """Open-loop schedule: fire every ``T`` with weight ``lam``."""
        return cls(k1=T, k2=0.0, k3=lam, k4=0.0, Phi1=T, Phi2=T, F1=lam, F2=lam)

    @property
    def bounds(self) -> Tuple[float, float, float, float]:
        return (self.Phi1, self.Phi2, self.F1, self.F2)

    def bare(self) -> "ModulationConfig":
        """Same affine laws without the composed output map."""
        return replace(self, output_nl=None)

    def _arg(self, ybar):
        return ybar if self.output_nl is None else float(self.output_nl(ybar))

    def period_affine(self, s: float) -> float:
        return _clamp(self.k2 * s + self.k1, self.Phi1, self.Phi2)

    def dose_affine(self, s: float) -> float:
        return _clamp(self.k4 * s + self.k3, self.F1, self.F2)

    def period(self, ybar: float) -> float:
        return self.period_affine(self._arg(ybar))

    def dose(self, ybar: float) -> float:
        return self.dose_affine(self._arg(ybar))

    def _inner_slope(self, ybar):
        return 1.0 if self.output_nl is None else float(self.output_nl.derivative(ybar))

    def period_slope(self, ybar: float) -> float:
        """``d period / d ybar``; zero on a saturated segment."""
        raw = self.k2 * self._arg(ybar) + self.k1
        if not self.Phi1 < raw < self.Phi2:
            return 0.0
        return self.k2 * self._inner_slope(ybar)

    def dose_slope(self, ybar: float) -> float:
        """``d dose / d ybar``; zero on a saturated segment."""
        raw = self.k4 * self._arg(ybar) + self.k3
        if not self.F1 < raw < self.F2:
            return 0.0
        return self.k4 * self._inner_slope(ybar)

    def as_dict(self) -> dict:
        d = {k: getattr(self, k) for k in ("k1", "k2", "k3", "k4", "Phi1", "Phi2", "F1", "F2")}
        d["output_nl"] = None if self.output_nl is None else self.output_nl.params()
        return d


def _check_slope_signs(k2: float, k4: float, output_nl: Optional[StaticNonlinearity]):
    # dose must fall and period must grow with the linear output
    decreasing = output_nl is not None and output_nl.decreasing
    if decreasing:
        ok = k4 >= 0 and k2 <= 0
        rule = "k4 >= 0 and k2 <= 0 for a decreasing output map"
    else:
        ok = k4 <= 0 and k2 >= 0
        rule = "k4 <= 0 and k2 >= 0 for an increasing (or no) output map"
    if not ok:
        raise ValidationError(f"slopes (k2={k2}, k4={k4}) violate {rule}")


def synthesize_modulation(cycle: OneCycle, slopes: Tuple[float, float],
                          bounds: Tuple[float, float, float, float],
                          output_nl: Optional[StaticNonlinearity] = None) -> ModulationConfig:
    """Offsets ``k1``, ``k3`` that make the modulation reproduce ``cycle``.

    ``slopes`` is ``(k2, k4)``; ``bounds`` is ``(Phi1, Phi2, F1, F2)``.

    Raises
    ------
    SaturationError
        If the cycle sits on a clamped segment of a non-constant law.
    """
    k2, k4 = map(float, slopes)
    Phi1, Phi2, F1, F2 = map(float, bounds)
    _check_slope_signs(k2, k4, output_nl)
    if not (F1 <= cycle.lam <= F2 and Phi1 <= cycle.T <= Phi2):
        raise SaturationError(
            f"cycle (T={cycle.T}, lam={cycle.lam}) outside bounds {bounds}"
        )
    if (k4 != 0 and not F1 < cycle.lam < F2) or (k2 != 0 and not Phi1 < cycle.T < Phi2):
        raise SaturationError("design point lies on a clamp boundary")
    s0 = cycle.y0 if output_nl is None else float(output_nl(cycle.y0))
    return ModulationConfig(
        k1=cycle.T - k2 * s0, k2=k2, k3=cycle.lam - k4 * s0, k4=k4,
        Phi1=Phi1, Phi2=Phi2, F1=F1, F2=F2, output_nl=output_nl,
    )


# ---------------------------------------------------------------------------
# stability of the designed cycle

@dataclass(frozen=True)
class StabilityReport:
    """Linearization of the firing-to-firing map at the cycle's fixed point."""

    jacobian: np.ndarray
    K: np.ndarray
    J: np.ndarray
    D: np.ndarray
    dose_slope: float
    period_slope: float
    multipliers: np.ndarray
    spectral_radius: float
    stable: bool
    monotone_convergence: bool


def stability_report(plant: PlantLTI, cycle: OneCycle, mod: ModulationConfig,
                     settings: NumericsSettings = DEFAULT_SETTINGS) -> StabilityReport:
    """Jacobian ``e^{AT} + K C`` with ``K = J F' + D Phi'``.

    ``J = e^{AT} B`` and ``D = A X``; the slopes are those of ``mod`` at the
    cycle output (chain rule through ``mod.output_nl``).
    """
    T, X = cycle.T, cycle.X
    if not (math.isclose(mod.period(cycle.y0), T, rel_tol=1e-9)
            and math.isclose(mod.dose(cycle.y0), cycle.lam, rel_tol=1e-9)):
        raise ValidationError("modulation does not reproduce the cycle at its fixed point")
    E = mat_exp(plant.A, T)
    J = E @ plant.B
    D = plant.A @ X
    dF = mod.dose_slope(cycle.y0)
    dPhi = mod.period_slope(cycle.y0)
    K = J * dF + D * dPhi
    Q = E + np.outer(K, plant.C)
    mults = eigenvalues(Q)
    rho = float(np.max(np.abs(mults)))
    real_positive = bool(np.all(np.abs(mults.imag) <= 1e-12 * max(rho, 1e-300))
                         and np.all(mults.real > 0))
    return StabilityReport(
        jacobian=Q, K=K, J=J, D=D, dose_slope=dF, period_slope=dPhi,
        multipliers=mults, spectral_radius=rho, stable=rho < 1.0,
        monotone_convergence=real_positive,
    )


def slope_grid(lo: float, hi: float, n: int = 33) -> np.ndarray:
    """Signed slope values on ``[lo, hi]``, geometrically spaced in magnitude.

    The range may not straddle zero. When zero is an endpoint it is included
    and the remaining ``n - 1`` magnitudes span three decades below the far end.
    """
    lo, hi = float(lo), float(hi)
    if lo > hi:
        lo, hi = hi, lo
    if lo < 0 < hi:
        raise DomainError("slope range must not change sign")
    if lo == hi:
        return np.array([lo])
    sign = -1.0 if hi <= 0 else 1.0
    near, far = sorted((abs(lo), abs(hi)))
    if near == 0:
        mags = np.concatenate([[0.0], np.geomspace(far * 1e-3, far, n - 1)])
    else:
        mags = np.geomspace(near, far, n)
    return sign * mags


@dataclass(frozen=True)
class SlopeChoice:
    k2: float
    k4: float
    rho: float

    def __iter__(self):
        yield self.k2
        yield self.k4
        yield self.rho


def slope_search(plant: PlantLTI, cycle: OneCycle, bounds: Tuple[float, float, float, float],
                 output_nl: Optional[StaticNonlinearity],
                 k2_values: Sequence[float], k4_values: Sequence[float],
                 settings: NumericsSettings = DEFAULT_SETTINGS) -> SlopeChoice:
    """Grid point ``(k2, k4)`` with the smallest spectral radius.

    Ties go to the gentler feedback (smaller ``|k2| + |k4|``).

    Raises
    ------
    NoStabilizingSlopesError
        If no grid point gives a Schur-stable Jacobian.
    """
    best = None
    for k2 in k2_values:
        for k4 in k4_values:
            mod = synthesize_modulation(cycle, (k2, k4), bounds, output_nl)
            rho = stability_report(plant, cycle, mod, settings).spectral_radius
            key = (rho, abs(k2) + abs(k4))
            if best is None or key < best[0]:
                best = (key, SlopeChoice(float(k2), float(k4), rho))
    if best is None or not best[1].rho < 1.0:
        raise NoStabilizingSlopesError("no Schur-stable slope pair on the grid")
    return best[1]
