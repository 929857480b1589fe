"""Fredholm tests for ``A = -J d/dt - B`` with periodic or asymptotically periodic ``B``.

Two criteria are compared: the monodromy has no eigenvalue on the unit circle,
and the mean index of ``B + lambda I`` does not depend on ``lambda`` near 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import (EquivalenceViolation, InternalConsistencyError, InvalidArgument,
                     PreconditionError, StructureMismatch)
from .meanindex import mean_index_interval, mean_index_periodic
from .propagator import Control, fundamental_solution, monodromy
from .systems import AsymptoticPeriodic, Periodic, SymmetricField, add_scalar

FREDHOLM, NOT_FREDHOLM, INCONCLUSIVE = "fredholm", "not_fredholm", "inconclusive"


@dataclass
class MonodromyReport:
    monodromy: np.ndarray
    spectrum: np.ndarray
    unit_circle_distance: float
    verdict: str
    pairing_error: float


def monodromy_spectrum_test(field: SymmetricField, tol_lo: float = 1e-8, tol_hi: float = 1e-4,
                            control: Control | None = None) -> MonodromyReport:
    """Distance of the monodromy spectrum from the unit circle, with a verdict band."""
    if not isinstance(field.structure, Periodic):
        raise StructureMismatch("spectrum test needs a periodic field")
    if not 0 < tol_lo < tol_hi:
        raise InvalidArgument("need 0 < tol_lo < tol_hi")
    m = monodromy(field, control)
    mu = np.linalg.eigvals(m)
    dist = float(np.min(np.abs(np.abs(mu) - 1.0)))
    # symplectic spectra are closed under mu -> 1 / conj(mu)
    partner = 1.0 / np.conj(mu)
    pairing = float(max(np.min(np.abs(mu - p) / max(1.0, abs(p))) for p in partner))
    if dist > tol_hi:
        verdict = FREDHOLM
    elif dist < tol_lo:
        verdict = NOT_FREDHOLM
    else:
        verdict = INCONCLUSIVE
    return MonodromyReport(m, mu, dist, verdict, pairing)


@dataclass
class SweepPoint:
    lam: float
    index: float
    residual: float
    lower: float | None = None
    upper: float | None = None


@dataclass
class LambdaSweep:
    points: list
    constant: bool
    jumps: list
    radius: float
    tried: list = dc_field(default_factory=list)

    @property
    def lambdas(self) -> np.ndarray:
        return np.array([p.lam for p in self.points])

    @property
    def values(self) -> np.ndarray:
        return np.array([p.index for p in self.points])

    @property
    def strictly_increasing(self) -> bool:
        v = self.values
        return bool(np.all(np.diff(v) > 0))


def _sweep_points(field, lams, theta_samples, method, estimator, control):
    pts = []
    periodic = isinstance(field.structure, Periodic)
    for lam in lams:
        shifted = add_scalar(field, float(lam))
        if periodic:
            r = mean_index_periodic(shifted, theta_samples, method, control)
            pts.append(SweepPoint(float(lam), r.value, r.quadrature_bound))
        else:
            est = mean_index_interval(shifted, control=control, **estimator)
            mid = 0.5 * (est.lower + est.upper)
            pts.append(SweepPoint(float(lam), mid, est.residual_bound + 0.5 * est.width,
                                  est.lower, est.upper))
    return pts


def lambda_sweep(field: SymmetricField, lambda_max: float = 0.1, steps: int = 5,
                 theta_samples: int = 256, method: str = "arcs", estimator: dict | None = None,
                 min_radius: float | None = None, control: Control | None = None) -> LambdaSweep:
    """Mean index of ``B + lambda I`` on ``steps`` points of ``[-lambda_max, lambda_max]``.

    If the values are not constant the radius is halved down to
    ``min_radius`` (default ``lambda_max / 64``); the largest radius with a
    constant sweep is reported.  The sweep is returned for that radius, or for
    the full radius when none is constant.
    """
    if steps < 5 or steps % 2 == 0:
        raise InvalidArgument("steps must be odd and at least 5")
    if not 0 < lambda_max <= field.bound / 2 + 1e-12:
        raise InvalidArgument("need 0 < lambda_max <= K / 2", K=field.bound)
    estimator = dict(estimator or {"scheme": "direct", "horizon": 500.0})
    floor = lambda_max / 64 if min_radius is None else min_radius
    radius = lambda_max
    first = None
    tried = []
    while radius >= floor * (1 - 1e-12):
        lams = np.linspace(-radius, radius, steps)
        pts = _sweep_points(field, lams, theta_samples, method, estimator, control)
        vals = np.array([p.index for p in pts])
        res = np.array([p.residual for p in pts])
        tol = float(np.max(res)) + 1e-9
        # monotone in lambda up to the residuals
        if np.any(np.diff(vals) < -2 * tol):
            raise InternalConsistencyError("mean index decreased along the lambda sweep",
                                           values=vals.tolist())
        constant = bool(np.max(vals) - np.min(vals) <= tol)
        jumps = [float(0.5 * (a.lam + b.lam)) for a, b in zip(pts, pts[1:])
                 if abs(b.index - a.index) > tol]
        sweep = LambdaSweep(pts, constant, jumps, radius if constant else 0.0)
        tried.append((radius, constant))
        if first is None:
            first = sweep
        if constant:
            sweep.tried = tried
            return sweep
        radius /= 2
    first.tried = tried
    return first


@dataclass
class FredholmReport:
    spectrum: MonodromyReport
    sweep: LambdaSweep
    verdict: str
    agree: bool | None


def fredholm_verdict(field: SymmetricField, lambda_max: float = 0.1, steps: int = 5,
                     tol_lo: float = 1e-8, tol_hi: float = 1e-4, estimator: dict | None = None,
                     control: Control | None = None, strict: bool = True) -> FredholmReport:
    """Spectrum test (on the periodic limit if asymptotic) and lambda-sweep of ``B`` itself."""
    if isinstance(field.structure, Periodic):
        limit = field
    elif isinstance(field.structure, AsymptoticPeriodic):
        limit = field.structure.limit
    else:
        raise StructureMismatch("fredholm_verdict needs a periodic or asymptotically periodic field")
    spectral = monodromy_spectrum_test(limit, tol_lo, tol_hi, control)
    sweep = lambda_sweep(field, lambda_max, steps, estimator=estimator, control=control)
    if spectral.verdict == INCONCLUSIVE:
        return FredholmReport(spectral, sweep, INCONCLUSIVE, None)
    agree = (spectral.verdict == FREDHOLM) == sweep.constant
    if not agree and strict:
        raise EquivalenceViolation("spectrum test and lambda-sweep disagree",
                                   spectrum=spectral.verdict, constant=sweep.constant,
                                   distance=spectral.unit_circle_distance)
    return FredholmReport(spectral, sweep, spectral.verdict, agree)


def spectral_projection(m: np.ndarray) -> np.ndarray:
    """Projection onto the sum of generalised eigenspaces with ``|mu| < 1``."""
    mu, v = np.linalg.eig(m)
    if np.min(np.abs(np.abs(mu) - 1)) < 1e-8:
        raise PreconditionError("monodromy has spectrum on the unit circle")
    sel = (np.abs(mu) < 1).astype(float)
    p = v @ np.diag(sel) @ np.linalg.inv(v)
    return p.real


@dataclass
class DichotomyReport:
    beta: float
    constant: float
    beta_forward: float
    beta_backward: float
    pairs: int
    holds: bool
    beta_guess: float | None = None


def dichotomy_inequality_check(field: SymmetricField, beta_guess: float | None = None,
                               samples: int = 10_000, periods: int = 10, seed: int = 0,
                               swap: bool = False, control: Control | None = None) -> DichotomyReport:
    """Sample ``|gamma(t) P gamma(s)^{-1}|`` (``s <= t``) and ``|gamma(t) (I - P) gamma(s)^{-1}|``
    (``s >= t``) and fit ``C e^{-beta |t - s|}``.

    ``P`` is the spectral projection of the monodromy onto its contracting
    subspace (the expanding one with ``swap=True``).  The inequalities hold
    when both fitted rates are positive (and at least ``beta_guess`` if
    given); ``C`` is the smallest constant covering every sample.
    """
    spectral = monodromy_spectrum_test(field, control=control)
    if spectral.verdict != FREDHOLM:
        raise PreconditionError("monodromy spectrum does not split off the unit circle",
                                distance=spectral.unit_circle_distance)
    p = spectral_projection(spectral.monodromy)
    if swap:
        p = np.eye(p.shape[0]) - p
    q = np.eye(p.shape[0]) - p
    T = field.structure.period
    horizon = periods * T
    grid = np.linspace(0.0, horizon, 401)
    path = fundamental_solution(field, (0.0, horizon), control, nodes=grid)
    gam = path.matrices[[path.node_index(t) for t in grid]]
    inv = np.linalg.inv(gam)
    rng = np.random.default_rng(seed)
    i = rng.integers(0, grid.size, samples)
    j = rng.integers(0, grid.size, samples)
    s_idx, t_idx = np.minimum(i, j), np.maximum(i, j)
    half = samples // 2
    fw = np.linalg.norm(gam[t_idx[:half]] @ p @ inv[s_idx[:half]], 2, axis=(-2, -1))
    bw = np.linalg.norm(gam[s_idx[half:]] @ q @ inv[t_idx[half:]], 2, axis=(-2, -1))
    gap_f = grid[t_idx[:half]] - grid[s_idx[:half]]
    gap_b = grid[t_idx[half:]] - grid[s_idx[half:]]

    def rate(gap, norm):
        keep = (gap >= T) & (norm > 0)
        if np.count_nonzero(keep) < 2:
            return math.inf
        slope = np.polyfit(gap[keep], np.log(norm[keep]), 1)[0]
        return float(-slope)

    bf, bb = rate(gap_f, fw), rate(gap_b, bw)
    beta = min(bf, bb)
    with np.errstate(divide="ignore"):
        logs = np.concatenate([np.log(fw) + beta * gap_f, np.log(bw) + beta * gap_b])
    c = float(np.exp(np.max(logs[np.isfinite(logs)]))) if np.isfinite(beta) else math.inf
    holds = beta > 0 and np.isfinite(c)
    if beta_guess is not None:
        holds = holds and beta >= beta_guess
    return DichotomyReport(beta, c, bf, bb, int(samples), bool(holds), beta_guess)
