"""Rotation numbers of two-dimensional systems.

The argument of a solution ``z(t) = gamma(t) z0`` is lifted continuously
from node to node; the grid is refined wherever one increment reaches
``pi / 2``.  The polar factor ``U(t) = gamma (gamma^T gamma)^{-1/2}`` of the
fundamental solution is a rotation ``e^{J phi}`` whose angle is lifted the same
way.  Both are computed on rescaled products, so exponential growth does not
matter.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InsufficientHorizon, InvalidArgument, LiftFailure, NumericalIntegrityError
from .propagator import Control, SymplecticPath, blocked_products, fundamental_solution
from .systems import SymmetricField

MAX_INCREMENT = math.pi / 2


@dataclass
class AngleLift:
    times: np.ndarray
    theta: np.ndarray | None
    phi: np.ndarray | None
    theta0: float = 0.0

    def polar_gap(self) -> float:
        """``max |theta - (theta0 + phi)|``; at most ``pi / 2`` in exact arithmetic."""
        return float(np.max(np.abs(self.theta - self.theta0 - self.phi)))


def _require_planar(path: SymplecticPath):
    if path.dim_half != 1:
        raise InvalidArgument("rotation numbers are defined for d = 1 only")


def _lift(path, angle_fn, max_rounds=12):
    """Lift ``angle_fn(normalised products)``, subdividing steps with large increments."""
    for _ in range(max_rounds):
        raw = angle_fn(path)
        inc = np.angle(np.exp(1j * np.diff(raw)))
        bad = np.abs(inc) >= MAX_INCREMENT
        if not np.any(bad):
            return path, raw[0] + np.concatenate([[0.0], np.cumsum(inc)])
        path = path.subdivide(bad)
    raise LiftFailure("angle increments stay above pi/2 after refinement")


def _solution_angles(z0):
    def fn(path):
        vals, _ = blocked_products(path.steps, (path.anchor @ z0)[:, None])
        z = vals[:, :, 0]
        return np.arctan2(z[:, 1], z[:, 0])
    return fn


def _polar_angles(path):
    vals, logs = path._normalised
    a, b, c, d = vals[:, 0, 0], vals[:, 0, 1], vals[:, 1, 0], vals[:, 1, 1]
    det = a * d - b * c
    # det of the rescaled matrix is only resolvable while the growth is moderate
    ok = logs < 10
    if np.any(np.abs(det[ok] * np.exp(2 * logs[ok]) - 1.0) > 1e-6):
        raise NumericalIntegrityError("determinant of the fundamental solution drifted")
    return np.arctan2(c - b, a + d)


def angle_lift(path: SymplecticPath, z0=(1.0, 0.0), with_polar: bool = True) -> AngleLift:
    """Continuous argument of ``gamma(t) z0`` (and of the polar factor of ``gamma``)."""
    _require_planar(path)
    z0 = np.asarray(z0, dtype=float)
    if z0.shape != (2,) or not np.any(z0):
        raise InvalidArgument("z0 must be a nonzero 2-vector")
    theta0 = math.atan2(z0[1], z0[0])
    path, theta = _lift(path, _solution_angles(z0))
    phi = None
    if with_polar:
        path2, phi = _lift(path, _polar_angles)
        if path2 is not path:
            path = path2
            path, theta = _lift(path, _solution_angles(z0))
        phi = phi - phi[0]
    return AngleLift(path.times.copy(), theta, phi, theta0)


def polar_split(path: SymplecticPath) -> AngleLift:
    """Lifted angle ``phi`` of the orthogonal factor of ``gamma = M U``, ``phi(t0) = 0``."""
    _require_planar(path)
    path, phi = _lift(path, _polar_angles)
    return AngleLift(path.times.copy(), None, phi - phi[0], 0.0)


@dataclass
class RotationResult:
    value: float
    trend: float
    polar_value: float
    horizon: float
    lift: AngleLift


def rotation_number(field: SymmetricField, horizon: float = 1000.0, z0=(1.0, 0.0),
                    control: Control | None = None) -> RotationResult:
    """``theta(horizon) / horizon`` with a trend (slope over the last half-horizon)."""
    if field.dim_half != 1:
        raise InvalidArgument("rotation numbers are defined for d = 1 only")
    if horizon < 10:
        raise InsufficientHorizon("rotation number needs horizon >= 10", horizon=horizon)
    path = fundamental_solution(field, (0.0, float(horizon)), control, nodes=[horizon / 2])
    lift = angle_lift(path, z0)
    t = lift.times
    total = (lift.theta[-1] - lift.theta[0]) / horizon
    half = int(np.argmin(np.abs(t - horizon / 2)))
    trend = (lift.theta[-1] - lift.theta[half]) / (t[-1] - t[half])
    polar = lift.phi[-1] / horizon
    return RotationResult(float(total), float(trend), float(polar), float(horizon), lift)
