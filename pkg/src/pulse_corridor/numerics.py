"""Small-dimension numerical kernel.

Everything here works on tiny dense matrices (3x3 for the plants handled by
this package), so clarity wins over raw speed. The one place where speed
matters is the matrix exponential evaluated on a dense grid of times, which
is why :func:`mat_exp` accepts an array of times and evaluates the whole
batch with vectorised numpy calls.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import (
    DegeneratePointsError,
    DomainError,
    SingularityError,
    SingularSystemError,
)


@dataclass(frozen=True)
class NumericsSettings:
    """Every tolerance used by the package, in one place.

    Attributes
    ----------
    mu_eps : float
        ``mu(z)`` refuses ``|z| <= mu_eps``.
    confluence_rel : float
        Divided-difference nodes closer than ``confluence_rel * max|z|`` are
        treated as coincident (derivative fallback).
    root_grid : int
        Number of intervals of the sign-change scan in :func:`find_roots`.
    root_tol_rel : float
        Bisection stops at width ``root_tol_rel * (hi - lo)``.
    cond_cap : float
        :func:`solve_linear` rejects matrices with a larger condition number.
    solve_rtol : float
        Accepted relative residual of :func:`solve_linear`.
    distinct_rel : float
        Relative separation required between plant rate constants.
    fixed_point_rtol : float
        Agreement required between matrix and divided-difference fixed points.
    period_grid : int
        Grid points over the period range in the period design sweep.
    period_refine_rel : float
        Golden-section refinement stops at ``period_refine_rel * (T_max - T_min)``.
    ratio_cap : float
        Largest accepted corridor mismatch before declaring it unreachable.
    invert_tol : float
        Absolute residual (scaled by ``max(1, |target|)``) for numeric inversion
        of static nonlinearities.
    expm_quantum : float
        Interval quantum used to key the simulator's propagator cache.
    """

    mu_eps: float = 1e-12
    confluence_rel: float = 1e-6
    root_grid: int = 2048
    root_tol_rel: float = 1e-10
    cond_cap: float = 1e12
    solve_rtol: float = 1e-10
    distinct_rel: float = 1e-9
    fixed_point_rtol: float = 1e-8
    period_grid: int = 256
    period_refine_rel: float = 1e-4
    ratio_cap: float = 0.02
    invert_tol: float = 1e-12
    expm_quantum: float = 1e-12

    def replace(self, **changes) -> "NumericsSettings":
        values = {name: getattr(self, name) for name in self.__dataclass_fields__}
        unknown = set(changes) - set(values)
        if unknown:
            raise DomainError(f"unknown numerics settings: {sorted(unknown)}")
        values.update(changes)
        return NumericsSettings(**values)


DEFAULT_SETTINGS = NumericsSettings()


# ---------------------------------------------------------------------------
# matrix exponential: scaling and squaring with a degree-13 Pade approximant

_PADE13 = np.array([
    64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
    1187353796428800.0, 129060195264000.0, 10559470521600.0,
    670442572800.0, 33522128640.0, 1323241920.0, 40840800.0,
    960960.0, 16380.0, 182.0, 1.0,
])
_THETA13 = 5.371920351148152


def _solve_lower(L, R):
    """Forward substitution ``L X = R`` for a stack of lower-triangular ``L``."""
    X = np.empty_like(R)
    for i in range(L.shape[-1]):
        X[..., i, :] = (R[..., i, :] - np.einsum("...k,...kj->...j", L[..., i, :i], X[..., :i, :])) \
            / L[..., i, i, None]
    return X


def _pade13(M, lower=False):
    """Degree-13 Pade approximant of exp for a stack of matrices ``M``."""
    b = _PADE13
    n = M.shape[-1]
    ident = np.broadcast_to(np.eye(n), M.shape)
    M2 = M @ M
    M4 = M2 @ M2
    M6 = M2 @ M4
    U = M @ (M6 @ (b[13] * M6 + b[11] * M4 + b[9] * M2)
             + b[7] * M6 + b[5] * M4 + b[3] * M2 + b[1] * ident)
    V = (M6 @ (b[12] * M6 + b[10] * M4 + b[8] * M2)
         + b[6] * M6 + b[4] * M4 + b[2] * M2 + b[0] * ident)
    if lower:
        return _solve_lower(V - U, V + U)
    return np.linalg.solve(V - U, V + U)


def _exact_bands(E, M):
    """Overwrite diagonal and first subdiagonal of ``E = exp(M)`` (``M`` lower triangular).

    Diagonal: ``exp(m_ii)``. Subdiagonal: ``m_{i+1,i} (e^{d2} - e^{d1}) / (d2 - d1)``
    written through ``sinh`` so that it stays accurate for close ``d1, d2``.
    """
    n = M.shape[-1]
    d = np.diagonal(M, axis1=-2, axis2=-1)
    idx = np.arange(n)
    E[..., idx, idx] = np.exp(d)
    if n > 1:
        d1, d2 = d[..., :-1], d[..., 1:]
        half = 0.5 * (d2 - d1)
        safe = np.where(half == 0.0, 1.0, half)
        sinhc = np.where(half == 0.0, 1.0, np.sinh(safe) / safe)
        E[..., idx[1:], idx[:-1]] = M[..., idx[1:], idx[:-1]] * np.exp(0.5 * (d1 + d2)) * sinhc


def mat_exp(M, t=1.0):
    """Matrix exponential ``exp(M * t)``.

    Parameters
    ----------
    M : (n, n) array_like
        Real square matrix.
    t : float or array_like of float
        Time(s). For an array of shape ``s`` the result has shape ``s + (n, n)``.

    Returns
    -------
    numpy.ndarray
        ``exp(M t)``; exactly the identity where ``t == 0``.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DomainError(f"expected a square matrix, got shape {M.shape}")
    t_arr = np.asarray(t, dtype=float)
    if not (np.all(np.isfinite(M)) and np.all(np.isfinite(t_arr))):
        raise DomainError("mat_exp requires finite inputs")

    Mt = t_arr.reshape(-1, 1, 1) * M
    norms = np.abs(Mt).sum(axis=-2).max(axis=-1)
    squarings = np.zeros(norms.shape, dtype=int)
    big = norms > _THETA13
    squarings[big] = np.ceil(np.log2(norms[big] / _THETA13)).astype(int)

    # lower-triangular input (every chain plant): solve the Pade denominator by
    # substitution and recompute the two leading bands exactly at each squaring,
    # so tiny entries keep their relative accuracy
    lower = not np.any(np.triu(M, 1))
    scaled = Mt / np.ldexp(1.0, squarings)[:, None, None]
    out = _pade13(scaled, lower)
    if lower:
        _exact_bands(out, scaled)
    for k in range(int(squarings.max(initial=0))):
        todo = squarings > k
        out[todo] = out[todo] @ out[todo]
        if lower:
            scaled[todo] *= 2.0
            _exact_bands(out, scaled)
    # exp(M t) of a Metzler M is entrywise nonnegative for t >= 0; anything
    # below zero is rounding residue
    if not np.any((M - np.diag(np.diag(M))) < 0):
        fwd = t_arr.reshape(-1) >= 0
        out[fwd] = np.maximum(out[fwd], 0.0)
    # the Pade solve at t = 0 is off by an ulp; pin it to the identity
    out[t_arr.reshape(-1) == 0.0] = np.eye(M.shape[0])
    return out.reshape(t_arr.shape + M.shape)


# ---------------------------------------------------------------------------
# the scalar function mu(z) = e^z / (1 - e^z) and its derivatives

def mu(z, settings: NumericsSettings = DEFAULT_SETTINGS):
    """``e^z / (1 - e^z)``, evaluated as ``1 / expm1(-z)``."""
    z_arr = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(z_arr)):
        raise DomainError("mu requires finite arguments")
    if np.any(np.abs(z_arr) <= settings.mu_eps):
        raise SingularityError(f"mu has a pole at z = 0 (|z| <= {settings.mu_eps})")
    out = 1.0 / np.expm1(-z_arr)
    return float(out) if out.ndim == 0 else out


def _mu_derivative_poly(order: int) -> np.polynomial.Polynomial:
    # mu' = mu + mu^2, so d/dz P(mu) = P'(mu) * (mu + mu^2)
    P = np.polynomial.Polynomial([0.0, 1.0])
    step = np.polynomial.Polynomial([0.0, 1.0, 1.0])
    for _ in range(order):
        P = P.deriv() * step
    return P


def mu_derivative(z, order: int = 1, settings: NumericsSettings = DEFAULT_SETTINGS):
    """``order``-th derivative of :func:`mu` (a polynomial in ``mu`` itself)."""
    if order < 0:
        raise DomainError("derivative order must be non-negative")
    return _mu_derivative_poly(order)(mu(z, settings))


# ---------------------------------------------------------------------------
# divided differences

def divided_difference(
    f: Callable[[float], float],
    points: Sequence[float],
    derivative: Optional[Callable[[float, int], float]] = None,
    settings: NumericsSettings = DEFAULT_SETTINGS,
) -> float:
    """Divided difference ``f[z_0, ..., z_k]`` by the recursive definition.

    Nodes are sorted first, which makes the result exactly symmetric in its
    arguments. Whenever the nodes spanned by an entry of the table are closer
    together than ``settings.confluence_rel * max|z|``, the entry is replaced
    by its confluent limit ``f^(m)(mean) / m!``; this needs ``derivative(z, m)``
    and raises :class:`DegeneratePointsError` when it is not supplied.
    """
    z = np.sort(np.asarray(points, dtype=float))
    if z.ndim != 1 or z.size == 0:
        raise DomainError("divided_difference needs at least one point")
    scale = float(np.max(np.abs(z)))
    sep = settings.confluence_rel * (scale if scale > 0 else 1.0)

    table = [float(f(zi)) for zi in z]
    for order in range(1, z.size):
        nxt = []
        for i in range(z.size - order):
            span = z[i + order] - z[i]
            if span > sep:
                nxt.append((table[i + 1] - table[i]) / span)
            elif derivative is None:
                raise DegeneratePointsError(
                    f"nodes {z[i]!r} and {z[i + order]!r} closer than {sep:.3g}"
                )
            else:
                centre = float(np.mean(z[i:i + order + 1]))
                nxt.append(float(derivative(centre, order)) / math.factorial(order))
        table = nxt
    return table[0]


# ---------------------------------------------------------------------------
# root finding

@dataclass(frozen=True)
class RootSet:
    """Roots found by :func:`find_roots`, ascending.

    ``residuals[i]`` is ``|f(roots[i])|``; ``bracket_width`` the final width
    of the bisection intervals.
    """

    roots: tuple
    bracket_width: float
    residuals: tuple = field(default=())

    def __len__(self):
        return len(self.roots)

    def __iter__(self):
        return iter(self.roots)


def find_roots(
    f: Callable,
    lo: float,
    hi: float,
    grid_n: Optional[int] = None,
    tol: Optional[float] = None,
    vectorized: bool = False,
    settings: NumericsSettings = DEFAULT_SETTINGS,
) -> RootSet:
    """All sign-change roots of ``f`` on ``[lo, hi]``.

    ``f`` is scanned on ``grid_n + 1`` uniformly spaced points and every
    sign change is refined by bisection down to width ``tol``. Roots where
    ``f`` touches zero without changing sign are only found if they happen
    to fall on a grid point.

    With ``vectorized=True``, ``f`` is called once with the whole grid.
    """
    if not hi > lo:
        raise DomainError(f"empty bracket [{lo}, {hi}]")
    grid_n = settings.root_grid if grid_n is None else int(grid_n)
    if grid_n < 2:
        raise DomainError("grid_n must be at least 2")
    tol = settings.root_tol_rel * (hi - lo) if tol is None else float(tol)
    if tol <= 0:
        raise DomainError("tol must be positive")

    xs = np.linspace(lo, hi, grid_n + 1)
    if vectorized:
        fs = np.asarray(f(xs), dtype=float)
    else:
        fs = np.array([f(x) for x in xs], dtype=float)

    roots, residuals = [], []
    width = 0.0
    for i in range(grid_n):
        fa, fb = fs[i], fs[i + 1]
        if fa == 0.0:
            if not roots or roots[-1] != xs[i]:
                roots.append(float(xs[i]))
                residuals.append(0.0)
            continue
        if fb == 0.0:
            if i == grid_n - 1:
                roots.append(float(xs[i + 1]))
                residuals.append(0.0)
            continue
        if (fa < 0) == (fb < 0):
            continue
        a, b = xs[i], xs[i + 1]
        while b - a > tol:
            m = 0.5 * (a + b)
            if m <= a or m >= b:
                break
            fm = float(f(m))
            if fm == 0.0:
                a = b = m
                break
            if (fm < 0) == (fa < 0):
                a, fa = m, fm
            else:
                b = m
        width = max(width, b - a)
        r = 0.5 * (a + b)
        roots.append(float(r))
        residuals.append(abs(float(f(r))))
    return RootSet(tuple(roots), width, tuple(residuals))


# ---------------------------------------------------------------------------
# linear algebra

def eigenvalues(M) -> np.ndarray:
    """Eigenvalues of ``M`` with multiplicity, sorted by decreasing modulus."""
    ev = np.linalg.eigvals(np.asarray(M, dtype=float))
    order = np.lexsort((-ev.real, -np.abs(ev)))
    return ev[order]


def spectral_radius(M) -> float:
    return float(np.max(np.abs(eigenvalues(M))))


def solve_linear(M, b, settings: NumericsSettings = DEFAULT_SETTINGS) -> np.ndarray:
    """Solve ``M x = b`` after checking the condition number of ``M``.

    Lower-triangular systems (every ``I - e^{AT}`` of a chain plant) are
    solved by forward substitution rather than pivoted LU, which preserves
    the relative accuracy of components many orders below the largest.
    """
    M = np.asarray(M, dtype=float)
    b = np.asarray(b, dtype=float)
    cond = np.linalg.cond(M)
    if not np.isfinite(cond) or cond > settings.cond_cap:
        raise SingularSystemError(f"condition number {cond:.3g} exceeds {settings.cond_cap:.3g}")
    if M.ndim == 2 and b.ndim == 1 and not np.any(np.triu(M, 1)):
        # forward substitution keeps tiny components accurate to working precision
        x = np.empty_like(b)
        for i in range(b.size):
            x[i] = (b[i] - M[i, :i] @ x[:i]) / M[i, i]
    else:
        x = np.linalg.solve(M, b)
    resid = np.linalg.norm(M @ x - b)
    if resid > settings.solve_rtol * max(np.linalg.norm(b), np.finfo(float).tiny):
        raise SingularSystemError(f"residual {resid:.3g} too large")
    return x
