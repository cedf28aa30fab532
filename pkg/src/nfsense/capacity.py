"""Closed-form multi-person capacity bounds with exact-series companions.

Two symmetric layouts are analyzed: N subjects uniformly spaced on a circle
of radius r around the AP (how many fit?), and 2K+1 subjects bunched together
on that circle (how close can neighbors sit?).  Each bound has a fitted
closed form (power-law fit of the interference series) and an exact variant
that evaluates the series directly.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .geometry import RadioConfig

# Power-law fit coefficients of the interference series for alpha = 4
# (mirror-case values are for K = 2).
DEFAULT_FIT = None  # assigned below, after FitParams is defined

_N_SEARCH_CAP = 1_000_000


@dataclass(frozen=True)
class FitParams:
    """Coefficients of the fitted interference series.

    Radial case: sum ~= p1 * N^p2 + p3.
    Mirror case: sum ~= q1 * sin(phi/2)^q2 + q3.
    """

    p1: float = 0.0230
    p2: float = 3.99
    p3: float = 38.0
    q1: float = 1.06
    q2: float = -4.0
    q3: float = 6.57

    def __post_init__(self) -> None:
        if not (self.p1 > 0):
            raise ValueError(f"p1 must be > 0, got {self.p1}")
        if not (self.q1 > 0):
            raise ValueError(f"q1 must be > 0, got {self.q1}")
        if not (self.q2 < 0):
            raise ValueError(f"q2 must be < 0, got {self.q2}")


DEFAULT_FIT = FitParams()


@dataclass(frozen=True)
class CapacityQuery:
    """Geometry and threshold for a capacity evaluation.

    r: AP-subject radius; delta_r: subject-UE near-field spacing;
    beta: VIR threshold; K: half-count for the mirror case (2K+1 subjects).
    """

    r: float
    delta_r: float
    beta: float
    cfg: RadioConfig
    K: int = 2

    def __post_init__(self) -> None:
        if not (self.r > self.delta_r > 0):
            raise ValueError(f"need r > delta_r > 0, got r={self.r}, delta_r={self.delta_r}")
        if not (self.beta > 0):
            raise ValueError(f"beta must be > 0, got {self.beta}")
        if self.K < 1:
            raise ValueError(f"K must be >= 1, got {self.K}")


def radial_series(n: int, alpha: float) -> float:
    """Interference series of the radial layout: sum_{j=1}^{N-1} sin(j pi / N)^-alpha."""
    if n < 3:
        raise ValueError(f"radial layout needs N >= 3, got {n}")
    j = np.arange(1, n)
    return float(np.sum(np.sin(j * np.pi / n) ** (-alpha)))


def radial_fit(n: int, params: FitParams = DEFAULT_FIT) -> float:
    """Fitted radial series: p1 * N^p2 + p3."""
    if n < 3:
        raise ValueError(f"radial layout needs N >= 3, got {n}")
    return params.p1 * float(n) ** params.p2 + params.p3


def mirror_series(k: int, phi: float, alpha: float) -> float:
    """Interference series of the mirror layout: sum_{j=1}^{K} sin(j phi / 2)^-alpha.

    ``phi`` is the angular spacing of neighbors; the middle subject is the
    worst-interfered one only while (2K+1) phi < 2 pi, so that is the domain.
    """
    if k < 1:
        raise ValueError(f"K must be >= 1, got {k}")
    phi_max = 2.0 * np.pi / (2 * k + 1)
    if not (0.0 < phi <= phi_max * (1 + 1e-12)):
        raise ValueError(f"phi must be in (0, 2pi/(2K+1)] = (0, {phi_max:.6g}], got {phi}")
    j = np.arange(1, k + 1)
    return float(np.sum(np.sin(j * phi / 2.0) ** (-alpha)))


def mirror_fit(phi: float, params: FitParams = DEFAULT_FIT) -> float:
    """Fitted mirror series: q1 * sin(phi/2)^q2 + q3."""
    return params.q1 * math.sin(phi / 2.0) ** params.q2 + params.q3


def _headroom(q: CapacityQuery) -> float:
    """Numerator slack of the VIR >= beta condition, common to both layouts.

    g_tilde * delta_r^-alpha - eta lambda^2 beta - b r^alpha beta: what the
    subject's own variation power leaves for interference after the dynamic
    channel takes its share.
    """
    cfg = q.cfg
    return (cfg.g_tilde * q.delta_r ** (-cfg.alpha)
            - cfg.eta * cfg.lambda_m ** 2 * q.beta
            - cfg.b * q.r ** cfg.alpha * q.beta)


def n_max(q: CapacityQuery, params: FitParams = DEFAULT_FIT) -> int:
    """Upper bound on subject count in the radial layout (0 when infeasible)."""
    cfg = q.cfg
    inner = ((2.0 * q.r) ** cfg.alpha / params.p1
             * _headroom(q) / (cfg.g_tilde * q.beta)
             - params.p3 / params.p1)
    if inner <= 0.0:
        return 0
    n = inner ** (1.0 / params.p2)
    return int(math.floor(n)) if n >= 3.0 else 0


def n_max_exact(q: CapacityQuery) -> int:
    """Exact-search companion of :func:`n_max` using the direct series."""
    cfg = q.cfg
    a = _headroom(q)
    if a <= 0.0:
        return 0
    rhs = (2.0 * q.r) ** cfg.alpha * a / (cfg.g_tilde * q.beta)
    if radial_series(3, cfg.alpha) > rhs:
        return 0
    lo, hi = 3, 6
    while radial_series(hi, cfg.alpha) <= rhs:
        lo = hi
        hi *= 2
        if hi > _N_SEARCH_CAP:
            raise OverflowError(f"exact N search exceeded {_N_SEARCH_CAP}")
    # invariant: series(lo) <= rhs < series(hi)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if radial_series(mid, cfg.alpha) <= rhs:
            lo = mid
        else:
            hi = mid
    return lo


def delta_d_min(q: CapacityQuery, params: FitParams = DEFAULT_FIT) -> float:
    """Minimum neighbor spacing in the mirror layout; NaN when infeasible.

    Infeasible means the fit's inner expression is non-positive, or the bound
    exceeds 2r sin(pi/(2K+1)) where the middle subject stops being the
    worst-interfered one and the layout assumption breaks.
    """
    cfg = q.cfg
    inner = ((2.0 * q.r) ** cfg.alpha / params.q1
             * _headroom(q) / (2.0 * cfg.g_tilde * q.beta)
             - params.q3 / params.q1)
    if inner <= 0.0:
        return math.nan
    dd = 2.0 * q.r * inner ** (1.0 / params.q2)
    if dd > 2.0 * q.r * math.sin(math.pi / (2 * q.K + 1)):
        return math.nan
    return dd


def delta_d_min_exact(q: CapacityQuery, rel_tol: float = 1e-12) -> float:
    """Bisection companion of :func:`delta_d_min` using the direct series."""
    cfg = q.cfg
    a = _headroom(q)
    if a <= 0.0:
        return math.nan
    # VIR >= beta  <=>  mirror_series(K, phi) <= rhs; the series decreases in phi.
    rhs = (2.0 * q.r) ** cfg.alpha * a / (2.0 * cfg.g_tilde * q.beta)
    phi_hi = 2.0 * math.pi / (2 * q.K + 1)
    if mirror_series(q.K, phi_hi, cfg.alpha) > rhs:
        return math.nan
    phi_lo = 1e-12
    if mirror_series(q.K, phi_lo, cfg.alpha) <= rhs:
        return 2.0 * q.r * math.sin(phi_lo / 2.0)
    while (phi_hi - phi_lo) > rel_tol * phi_hi:
        mid = 0.5 * (phi_lo + phi_hi)
        if mirror_series(q.K, mid, cfg.alpha) <= rhs:
            phi_hi = mid
        else:
            phi_lo = mid
    return 2.0 * q.r * math.sin(phi_hi / 2.0)


@dataclass(frozen=True)
class CapacityRow:
    r: float
    n_max_fit: int
    n_max_exact: int
    dd_min_fit: float
    dd_min_exact: float
    feasible: bool


def capacity_curve(cfg: RadioConfig, beta: float, delta_r: float,
                   r_start: float, r_stop: float, r_step: float,
                   k: int = 2, params: FitParams = DEFAULT_FIT) -> list[CapacityRow]:
    """Sweep r and evaluate both bounds; infeasible points are kept as NaN/0."""
    if not (r_step > 0):
        raise ValueError(f"r_step must be > 0, got {r_step}")
    rows: list[CapacityRow] = []
    n_points = int(math.floor((r_stop - r_start) / r_step + 1e-9)) + 1
    for i in range(max(n_points, 0)):
        r = r_start + i * r_step
        if r <= delta_r:
            continue
        q = CapacityQuery(r=r, delta_r=delta_r, beta=beta, cfg=cfg, K=k)
        dd_fit = delta_d_min(q, params)
        rows.append(CapacityRow(
            r=r,
            n_max_fit=n_max(q, params),
            n_max_exact=n_max_exact(q),
            dd_min_fit=dd_fit,
            dd_min_exact=delta_d_min_exact(q),
            feasible=not math.isnan(dd_fit),
        ))
    return rows


def write_capacity_csv(rows: Iterable[CapacityRow], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["r_m", "n_max_fit", "n_max_exact",
                         "dd_min_fit_m", "dd_min_exact_m", "feasible"])
        for row in rows:
            writer.writerow([f"{row.r:.6f}", row.n_max_fit, row.n_max_exact,
                             f"{row.dd_min_fit:.6f}", f"{row.dd_min_exact:.6f}",
                             int(row.feasible)])


def _power_law_lsq(x: np.ndarray, y: np.ndarray, exponents: np.ndarray) -> tuple[float, float, float, float]:
    """Best (c1, e, c3) for y ~= c1 x^e + c3 over a grid of exponents."""
    best = None
    for e in exponents:
        basis = np.column_stack([x ** e, np.ones_like(x)])
        coef, residual, *_ = np.linalg.lstsq(basis, y, rcond=None)
        sse = float(np.sum((basis @ coef - y) ** 2))
        if coef[0] > 0 and (best is None or sse < best[3]):
            best = (float(coef[0]), float(e), float(coef[1]), sse)
    if best is None:
        raise RuntimeError("power-law fit failed: no positive leading coefficient")
    return best


def refit_radial(alpha: float, n_lo: int = 3, n_hi: int = 60) -> tuple[float, float, float]:
    """Recompute (p1, p2, p3) by least squares over the stated N range."""
    n = np.arange(n_lo, n_hi + 1, dtype=float)
    y = np.array([radial_series(int(v), alpha) for v in n])
    exps = np.linspace(1.0, 6.0, 501)
    c1, e, c3, _ = _power_law_lsq(n, y, exps)
    exps = np.linspace(max(e - 0.02, 1.0), e + 0.02, 401)
    c1, e, c3, _ = _power_law_lsq(n, y, exps)
    return c1, e, c3


def refit_mirror(alpha: float, k: int,
                 phi_lo: float = math.pi / 180, phi_hi: float | None = None,
                 n_points: int = 200) -> tuple[float, float, float]:
    """Recompute (q1, q2, q3) by least squares over the stated phi range."""
    if phi_hi is None:
        phi_hi = math.pi / (2 * k + 1)
    phi = np.linspace(phi_lo, phi_hi, n_points)
    s = np.sin(phi / 2.0)
    y = np.array([mirror_series(k, p, alpha) for p in phi])
    # series values span many decades; fit in a log-flattened weighting
    w = 1.0 / y
    exps = np.linspace(-6.0, -2.0, 401)
    best = None
    for e in exps:
        basis = np.column_stack([s ** e, np.ones_like(s)]) * w[:, None]
        coef, *_ = np.linalg.lstsq(basis, y * w, rcond=None)
        sse = float(np.sum((basis @ coef - y * w) ** 2))
        if coef[0] > 0 and (best is None or sse < best[3]):
            best = (float(coef[0]), float(e), float(coef[1]), sse)
    if best is None:
        raise RuntimeError("mirror fit failed: no positive leading coefficient")
    return best[0], best[1], best[2]
