"""Event-driven simulation of the pulse-modulated closed loop.

Firings are computed first, from exact propagation ``X_{n+1} = e^{A T_n}
(X_n + jump_n B)``; the dense output samples are filled in afterwards and
never feed back into the event sequence.
"""
from __future__ import annotations

import csv
import math
import os
import tempfile
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .cycle import OneCycle
from .design import CorridorSpec, ModulationConfig
from .errors import DomainError, SimulationAbort, UnreachableDoseError, ValidationError
from .numerics import DEFAULT_SETTINGS, NumericsSettings, mat_exp
from .plant import PlantStructure, StaticNonlinearity, invert_numeric


@dataclass(frozen=True)
class FiringEvent:
    """One firing of the controller.

    ``target_jump`` is the modulation output ``F``; ``lambda_n`` the dose
    actually applied (its preimage under the input map for Hammerstein
    plants) and ``jump`` the resulting state increment along ``B``.
    """

    n: int
    t_n: float
    y_at_fire: float
    y_bar_at_fire: float
    target_jump: float
    lambda_n: float
    jump: float
    T_n: float
    state_pre: np.ndarray
    state_post: np.ndarray


@dataclass
class Trajectory:
    t: np.ndarray
    x: np.ndarray
    y_bar: np.ndarray
    y: np.ndarray
    events: List[FiringEvent]
    final_state: np.ndarray
    t_end: float
    config: dict = field(default_factory=dict)

    @property
    def firing_outputs(self) -> np.ndarray:
        return np.array([e.y_bar_at_fire for e in self.events])


def _dose_bracket(nl: StaticNonlinearity, target: float, n: int):
    lo, hi = nl.domain
    if math.isfinite(hi):
        return lo, hi
    hi = max(1.0, lo + 1.0)
    for _ in range(1100):
        v = nl(hi)
        if (v <= target) if nl.decreasing else (v >= target):
            return lo, hi
        hi *= 2.0
    raise SimulationAbort(f"no dose reaches the jump {target}", n)


def _modulation_laws(structure: PlantStructure, mod: ModulationConfig) -> ModulationConfig:
    # with a Wiener sensor the laws act on the measured output directly
    if structure.output_nl is None:
        return mod
    if mod.output_nl is not None and mod.output_nl != structure.output_nl:
        raise ValidationError("modulation and plant use different output maps")
    return mod.bare()


def simulate(structure: PlantStructure, mod: ModulationConfig, x0, n_firings: int,
             sample_dt: float, settings: NumericsSettings = DEFAULT_SETTINGS) -> Trajectory:
    """Run ``n_firings`` firings of the closed loop starting at ``t = 0``.

    Parameters
    ----------
    structure : PlantStructure
        Chain plant with optional Hammerstein input map and Wiener output map.
    mod : ModulationConfig
        Modulation laws. With a Wiener plant they are evaluated on the
        measured output; otherwise on the linear output (through
        ``mod.output_nl`` if set).
    x0 : array_like
        Non-negative state just before the first firing.
    n_firings : int
        Number of firings; the run ends one interval after the last one.
    sample_dt : float
        Spacing of the dense output samples.

    Raises
    ------
    SimulationAbort
        If a Hammerstein dose cannot be found for some firing.
    """
    plant = structure.linear
    x = np.asarray(x0, dtype=float).copy()
    if x.shape != (3,) or np.any(x < 0) or not np.all(np.isfinite(x)):
        raise DomainError("x0 must be a finite non-negative 3-vector")
    if n_firings < 1:
        raise DomainError("need at least one firing")
    if not sample_dt > 0:
        raise DomainError("sample_dt must be positive")
    laws = _modulation_laws(structure, mod)
    B = plant.B
    q = settings.expm_quantum
    propagators = {}

    events = []
    t = 0.0
    for n in range(n_firings):
        y_bar = float(plant.C @ x)
        y = float(structure.measured(y_bar))
        arg = y if structure.output_nl is not None else y_bar
        T_n = laws.period(arg)
        target = laws.dose(arg)
        if structure.input_nl is None:
            lam_n, jump = target, target
        else:
            nl = structure.input_nl
            try:
                lo, hi = _dose_bracket(nl, target, n)
                lam_n = invert_numeric(nl, target, lo, hi, settings)
            except UnreachableDoseError as exc:
                raise SimulationAbort(str(exc), n) from exc
            jump = float(nl(lam_n))
        post = x + jump * B
        events.append(FiringEvent(
            n=n, t_n=t, y_at_fire=y, y_bar_at_fire=y_bar, target_jump=target,
            lambda_n=lam_n, jump=jump, T_n=T_n, state_pre=x, state_post=post,
        ))
        key = round(T_n / q)
        P = propagators.get(key)
        if P is None:
            P = propagators[key] = mat_exp(plant.A, key * q)
        x = P @ post
        t = t + T_n

    ts = np.arange(math.ceil(t / sample_dt)) * sample_dt
    ts = ts[ts < t]
    starts = np.array([e.t_n for e in events])
    idx = np.searchsorted(starts, ts, side="right") - 1
    posts = np.array([e.state_post for e in events])
    xs = np.einsum("kij,kj->ki", mat_exp(plant.A, ts - starts[idx]), posts[idx])
    y_bar = xs[:, 2].copy()
    y = np.asarray(structure.measured(y_bar), dtype=float)

    config = {
        "structure": structure.kind,
        "modulation": mod.as_dict(),
        "x0": np.asarray(x0, dtype=float).tolist(),
        "n_firings": int(n_firings),
        "sample_dt": float(sample_dt),
    }
    return Trajectory(t=ts, x=xs, y_bar=y_bar, y=y, events=events,
                      final_state=x, t_end=t, config=config)


# ---------------------------------------------------------------------------
# post-processing

@dataclass(frozen=True)
class ConvergenceReport:
    converged: bool
    n_star: Optional[int]
    distances: np.ndarray
    monotone: bool
    direction: int  # +1 increasing, -1 decreasing, 0 constant


def detect_convergence(traj: Trajectory, cycle: OneCycle, tol: Optional[float] = None,
                       window: int = 5) -> ConvergenceReport:
    """First firing after which the pre-jump state stays within ``tol`` of ``X``.

    ``monotone`` reports whether the firing-time outputs are weakly monotone
    up to that firing (over the whole run when there is no convergence).
    """
    if len(traj.events) < window:
        raise DomainError(f"need at least {window} events, have {len(traj.events)}")
    if tol is None:
        tol = 1e-6 * float(np.linalg.norm(cycle.X))
    d = np.array([np.linalg.norm(e.state_pre - cycle.X) for e in traj.events])
    close = d <= tol
    n_star = None
    for n in range(len(d) - window + 1):
        if close[n:n + window].all():
            n_star = n
            break
    upto = len(d) if n_star is None else n_star + 1
    steps = np.diff(traj.firing_outputs[:upto])
    up, down = bool(np.all(steps >= 0)), bool(np.all(steps <= 0))
    direction = 0 if (up and down) else (1 if up else (-1 if down else 0))
    return ConvergenceReport(converged=n_star is not None, n_star=n_star, distances=d,
                             monotone=up or down, direction=direction)


@dataclass(frozen=True)
class CorridorReport:
    y_bar_min: float
    y_bar_max: float
    y_min: Optional[float]
    y_max: Optional[float]
    violated: bool
    worst_excursion: float
    n_samples: int


def corridor_report(traj: Trajectory, spec: CorridorSpec, transient_cut: float,
                    tol: float = 0.0) -> CorridorReport:
    """Sampled extremes after ``transient_cut`` against the requested corridor.

    The measured corridor is checked too when ``spec`` carries one. An
    excursion counts as a violation once it exceeds ``tol``.
    """
    if not traj.t_end > transient_cut:
        raise DomainError("transient_cut beyond the end of the trajectory")
    keep = traj.t > transient_cut
    if not keep.any():
        raise DomainError("no samples after transient_cut; reduce sample_dt")
    yb, ym = traj.y_bar[keep], traj.y[keep]
    lo, hi = float(yb.min()), float(yb.max())
    excursion = max(spec.y_bar_min - lo, hi - spec.y_bar_max, 0.0)
    y_lo = y_hi = None
    if spec.y_min is not None:
        y_lo, y_hi = float(ym.min()), float(ym.max())
        excursion = max(excursion, spec.y_min - y_lo, y_hi - spec.y_max)
    return CorridorReport(y_bar_min=lo, y_bar_max=hi, y_min=y_lo, y_max=y_hi,
                          violated=excursion > tol, worst_excursion=excursion,
                          n_samples=int(keep.sum()))


# ---------------------------------------------------------------------------
# CSV export

def _atomic_write_rows(path, header, rows):
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".csv")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(rows)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def format_float(v) -> str:
    """Locale-free 17-significant-digit rendering used by every artifact."""
    return format(float(v), ".17g")


def write_trajectory_csv(traj: Trajectory, path) -> None:
    rows = ([format_float(t), *map(format_float, x), format_float(yb), format_float(y)]
            for t, x, yb, y in zip(traj.t, traj.x, traj.y_bar, traj.y))
    _atomic_write_rows(path, ["t", "x1", "x2", "x3", "y_bar", "y"], rows)


EVENT_COLUMNS = [
    "n", "t_n", "y_at_fire", "y_bar_at_fire", "target_jump", "lambda_n", "jump", "T_n",
    "pre_x1", "pre_x2", "pre_x3", "post_x1", "post_x2", "post_x3",
]


def write_events_csv(traj: Trajectory, path) -> None:
    rows = ([str(e.n), *map(format_float, (e.t_n, e.y_at_fire, e.y_bar_at_fire, e.target_jump,
                                   e.lambda_n, e.jump, e.T_n)),
             *map(format_float, e.state_pre), *map(format_float, e.state_post)]
            for e in traj.events)
    _atomic_write_rows(path, EVENT_COLUMNS, rows)
