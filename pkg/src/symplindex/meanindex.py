"""Mean indices of linear Hamiltonian systems.

Two estimators of the interval ``[I_L, I_U]`` of limit points of
``i_1(gamma, [0, l]) / l``:

``direct``
    the sequence ``a_l = i_1(gamma, [0, l]) / l`` at integer ``l`` up to the
    horizon, with its minimum and maximum over a tail ``l >= l0``.  The tail
    start is chosen from the heuristic bound ``(d K / pi + 2 d) / l``.
``dyadic``
    windows of length ``2^k``; ``H_{k,n}`` is the mean over ``n`` windows of
    ``h``, the average of ``i_omega`` over the unit circle.  The band of the
    running means over the last half of the windows, divided by ``2^k``, is
    reported with the residual ``2 d / 2^k``.

``h`` is computed exactly by default: ``omega -> i_omega`` is constant on
the arcs between ``1`` and the eigenvalue angles of the window's end point, so
one evaluation per arc suffices.  A uniform jittered quadrature is available
(``method="quadrature"``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import InsufficientHorizon, InternalConsistencyError, InvalidArgument, RangeError
from .maslov import CrossingCounter
from .propagator import Control, SymplecticPath, fundamental_solution
from .systems import Periodic, SymmetricField, reverse, shift

FORWARD, BACKWARD = "forward", "backward"


@dataclass
class DyadicTable:
    k: int
    f: np.ndarray
    g: np.ndarray
    h: np.ndarray

    @property
    def n(self) -> int:
        return int(self.f.size)

    def _running(self, v):
        return np.cumsum(v) / np.arange(1, v.size + 1)

    @property
    def F(self) -> np.ndarray:
        return self._running(self.f)

    @property
    def G(self) -> np.ndarray:
        return self._running(self.g)

    @property
    def H(self) -> np.ndarray:
        return self._running(self.h)

    def sandwich_ok(self, d: int, tol: float = 1e-9) -> bool:
        F, G, H = self.F, self.G, self.H
        return bool(np.all(F >= H - tol) and np.all(H >= G - tol) and np.all(G >= F - 2 * d - tol))


@dataclass
class MeanIndexEstimate:
    lower: float
    upper: float
    direction: str
    scheme: str
    residual_bound: float
    residual_kind: str
    trace: object = None
    params: dict = dc_field(default_factory=dict)

    @property
    def width(self) -> float:
        return self.upper - self.lower


@dataclass
class PeriodicMeanIndex:
    """Mean index per period (``value``) and per unit time (``per_time``)."""
    value: float
    period: float
    quadrature_bound: float
    method: str

    @property
    def per_time(self) -> float:
        return self.value / self.period


def _circle_breaks(end_matrix: np.ndarray) -> np.ndarray:
    """``0`` and the angles of the eigenvalues of ``end_matrix`` in ``[0, 2 pi)``."""
    ang = np.mod(np.angle(np.linalg.eigvals(end_matrix)), 2 * np.pi)
    return np.unique(np.concatenate([[0.0], ang]))


def _theta_nodes(breaks, samples, method):
    """Sample angles and weights (summing to 1) for the circle average."""
    if method == "arcs":
        edges = np.append(breaks, 2 * np.pi)
        lengths = np.diff(edges)
        keep = lengths > 1e-12
        return (0.5 * (edges[:-1] + edges[1:]))[keep], lengths[keep] / (2 * np.pi)
    if method != "quadrature":
        raise InvalidArgument(f"unknown theta method {method!r}")
    theta = 2 * np.pi * (np.arange(samples) + 0.5) / samples
    # move nodes that sit within 1e-6 of a jump
    for _ in range(8):
        gap = np.abs(np.angle(np.exp(1j * (theta[:, None] - breaks[None, :]))))
        close = np.any(gap < 1e-6, axis=1)
        if not np.any(close):
            break
        theta[close] += 0.37 * np.pi / samples
    return theta, np.full(samples, 1.0 / samples)


class _Window:
    """Index data of one path segment anchored at the identity."""

    def __init__(self, path: SymplecticPath):
        self.path = path
        self.d = path.dim_half
        self.start = CrossingCounter(path)

    def f(self) -> int:
        return int(self.start.stable_counts(1.0)[0][0])

    def g(self) -> int:
        end = CrossingCounter(self.path, mode="end")
        return int(end.stable_counts(1.0)[0][0])

    def i_omega(self, omega) -> int:
        v = int(self.start.stable_counts(omega)[0][0])
        return v - self.d if abs(omega - 1.0) < 1e-14 else v

    def end_matrix(self) -> np.ndarray:
        # normalised end point; eigenvalue angles do not depend on the scale
        vals, _ = self.path._normalised
        return vals[-1]

    def h(self, samples=256, method="arcs") -> tuple:
        breaks = _circle_breaks(self.end_matrix())
        theta, weights = _theta_nodes(breaks, samples, method)
        vals = np.array([self.i_omega(np.exp(1j * th)) for th in theta])
        h = float(np.dot(weights, vals))
        bound = 0.0 if method == "arcs" else 2 * self.d * breaks.size / samples
        return h, bound


def _check_sandwich(f, g, h, d, where=""):
    if not (f + 1e-9 >= h >= g - 1e-9 and g >= f - 2 * d):
        raise InternalConsistencyError("f >= h >= g >= f - 2d violated",
                                       f=f, g=g, h=h, where=where)


def fgh(field: SymmetricField, n: int, theta_samples: int = 256, method: str = "quadrature",
        control: Control | None = None) -> tuple:
    """``f = iota(I, gamma, [0, n])``, ``g = iota(gamma(n), gamma, [0, n])`` and the
    circle average ``h`` of ``i_omega(gamma, [0, n])``."""
    if n < 1 or int(n) != n:
        raise InvalidArgument("n must be a positive integer")
    if theta_samples < 16:
        raise InvalidArgument("theta_samples must be at least 16")
    w = _Window(fundamental_solution(field, (0.0, float(n)), control))
    f, g = w.f(), w.g()
    h, _ = w.h(theta_samples, method)
    _check_sandwich(f, g, h, field.dim_half)
    return f, g, h


def mean_index_periodic(field: SymmetricField, theta_samples: int = 256, method: str = "arcs",
                        control: Control | None = None) -> PeriodicMeanIndex:
    """Average of ``i_omega(gamma, [0, T])`` over the unit circle (index per period)."""
    from .errors import StructureMismatch
    if not isinstance(field.structure, Periodic):
        raise StructureMismatch("mean_index_periodic needs a periodic field")
    period = field.structure.period
    w = _Window(fundamental_solution(field, (0.0, period), control))
    h, bound = w.h(theta_samples, method)
    return PeriodicMeanIndex(h, period, bound, method)


def _direct(field, horizon, tail_tol, control):
    d, K = field.dim_half, field.bound
    L = int(math.floor(horizon))
    if L < 10:
        raise InsufficientHorizon("direct scheme needs horizon >= 10", horizon=horizon)
    ls = np.arange(1, L + 1)
    path = fundamental_solution(field, (0.0, float(L)), control, nodes=ls.astype(float))
    counter = CrossingCounter(path)
    idx = np.array([counter.path.node_index(float(l)) for l in ls])
    iota, _ = counter.stable_counts(1.0, idx)
    i1 = iota - d
    a = i1 / ls
    c = d * K / math.pi + 2 * d
    l0 = max(10, int(math.ceil(c / tail_tol)))
    if l0 > L - 3:
        l0 = max(1, L // 2)
    tail = a[l0 - 1:]
    if tail.size < 4:
        raise InsufficientHorizon("horizon too small for four tail samples", horizon=horizon)
    trace = np.column_stack([ls, i1, a])
    return float(tail.min()), float(tail.max()), c / l0, trace, {"l0": l0}


def dyadic_table(field, k, n, theta_samples=256, method="arcs", control=None,
                 path: SymplecticPath | None = None) -> DyadicTable:
    """``f, g, h`` on the windows ``[2^k l, 2^k (l + 1)]``, ``l = 0..n-1``."""
    if not (0 <= k <= 12) or n < 1:
        raise InvalidArgument("need 0 <= k <= 12 and n >= 1")
    w = 2**k
    cuts = w * np.arange(n + 1, dtype=float)
    if path is None:
        path = fundamental_solution(field, (0.0, float(cuts[-1])), control, nodes=cuts)
    idx = [path.node_index(c) for c in cuts]
    d = field.dim_half
    f = np.empty(n)
    g = np.empty(n)
    h = np.empty(n)
    for l in range(n):
        win = _Window(path.segment(idx[l], idx[l + 1]))
        f[l], g[l] = win.f(), win.g()
        h[l], _ = win.h(theta_samples, method)
        _check_sandwich(f[l], g[l], h[l], d, where=f"window {l}")
    return DyadicTable(k, f, g, h)


def _dyadic(field, k, n, theta_samples, method, control):
    if n < 4:
        raise InvalidArgument("dyadic scheme needs n >= 4")
    table = dyadic_table(field, k, n, theta_samples, method, control)
    band = table.H[(n - 1) // 2:] / 2**k
    return float(band.min()), float(band.max()), 2 * field.dim_half / 2**k, table, {}


def mean_index_interval(field: SymmetricField, direction: str = FORWARD, scheme: str = "direct",
                        horizon: float = 500.0, k: int = 8, n: int = 32, tail_tol: float = 0.02,
                        theta_samples: int = 256, method: str = "arcs",
                        control: Control | None = None) -> MeanIndexEstimate:
    """Estimate ``[I_L, I_U]`` (forward) or ``[I_L^-, I_U^-]`` (backward).

    The backward interval of ``B`` is minus the forward interval of the
    reversed field ``-B(-t)``, with lower and upper swapped.
    """
    if direction not in (FORWARD, BACKWARD):
        raise InvalidArgument("direction must be forward or backward")
    target = field if direction == FORWARD else reverse(field)
    if scheme == "direct":
        lo, hi, res, trace, extra = _direct(target, horizon, tail_tol, control)
        kind = "heuristic"
        params = {"horizon": horizon, "tail_tol": tail_tol, **extra}
    elif scheme == "dyadic":
        lo, hi, res, trace, extra = _dyadic(target, k, n, theta_samples, method, control)
        kind = "rigorous"
        params = {"k": k, "n": n, "method": method}
    else:
        raise InvalidArgument(f"unknown scheme {scheme!r}")
    if direction == BACKWARD:
        lo, hi = -hi, -lo
    return MeanIndexEstimate(lo, hi, direction, scheme, res, kind, trace, params)


class Witnesses(list):
    """Integers ``m_k`` with record-decreasing errors ``|a(u m_k) - v|``."""

    def __init__(self, ms, errors, u, success):
        super().__init__(int(m) for m in ms)
        self.errors = list(errors)
        self.u = u
        self.success = success

    @property
    def times(self):
        return [self.u * m for m in self]


def witness_subsequence(field: SymmetricField, v: float, u: float = 1.0,
                        horizon: float = 2000.0, tol: float = 0.05,
                        estimate: MeanIndexEstimate | None = None,
                        control: Control | None = None) -> Witnesses:
    """Times ``u m_k`` at which ``i_1(gamma, [0, u m_k]) / (u m_k)`` approaches ``v``."""
    if u <= 0:
        raise InvalidArgument("u must be positive")
    d = field.dim_half
    if estimate is None:
        estimate = mean_index_interval(field, horizon=horizon, control=control)
    r = estimate.residual_bound
    if not (estimate.lower - r <= v <= estimate.upper + r):
        raise RangeError("value outside the estimated mean index interval",
                         v=v, lower=estimate.lower, upper=estimate.upper, residual=r)
    m_max = int(math.floor(horizon / u))
    ms = np.arange(1, m_max + 1)
    times = u * ms
    path = fundamental_solution(field, (0.0, float(times[-1])), control, nodes=times)
    counter = CrossingCounter(path)
    idx = np.array([counter.path.node_index(float(t)) for t in times])
    iota, _ = counter.stable_counts(1.0, idx)
    err = np.abs((iota - d) / times - v)
    out_m, out_e = [], []
    best = np.inf
    for m, e in zip(ms, err):
        if e < best:
            best = e
            out_m.append(m)
            out_e.append(float(e))
    return Witnesses(out_m, out_e, u, bool(out_e and out_e[-1] < tol))


@dataclass
class TranslationReport:
    shift: float
    base: MeanIndexEstimate
    shifted: MeanIndexEstimate
    difference: float
    envelope: float

    @property
    def ok(self) -> bool:
        return self.difference <= self.envelope + 1e-12


def translation_invariance_check(field: SymmetricField, shifts, horizon: float = 500.0,
                                 scheme: str = "direct", **kw) -> list:
    """Compare estimates for ``B`` and ``B(. + s)`` against the displacement envelope
    ``(2 d K s / pi + 4 d) / L`` plus both residuals."""
    d, K = field.dim_half, field.bound
    base = mean_index_interval(field, scheme=scheme, horizon=horizon, **kw)
    out = []
    for s in shifts:
        s = float(s)
        other = base if s == 0 else mean_index_interval(shift(field, s), scheme=scheme,
                                                        horizon=horizon, **kw)
        diff = max(abs(base.lower - other.lower), abs(base.upper - other.upper))
        length = horizon if scheme == "direct" else 2**kw.get("k", 8) * kw.get("n", 32)
        env = (2 * d * K * abs(s) / math.pi + 4 * d) / length
        env += base.residual_bound + other.residual_bound
        out.append(TranslationReport(s, base, other, diff, env))
    return out
