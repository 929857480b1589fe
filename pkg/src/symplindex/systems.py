"""Coefficient fields ``t -> B(t)`` of linear Hamiltonian systems ``z' = J B(t) z``.

A :class:`SymmetricField` bundles a vectorised evaluator with the half
dimension ``d``, a declared operator-norm bound ``K`` and a structural tag.
Fields built from trigonometric terms can be serialised to and from the JSON
system-definition document used by the command line.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Callable, Sequence

import numpy as np

from .errors import CatalogMiss, ConstructionError, InvalidArgument, StructureMismatch

SYMMETRY_TOL = 1e-12
CHECK_GRID = np.concatenate([[0.0], np.linspace(-50.0, 50.0, 63)])


def standard_j(d: int) -> np.ndarray:
    """Return ``J = [[0, -I], [I, 0]]`` of size ``2d``."""
    eye = np.eye(d)
    zero = np.zeros((d, d))
    return np.block([[zero, -eye], [eye, zero]])


def symplectic_residual(m: np.ndarray) -> float:
    """Max-norm of ``M^T J M - J``; works on stacks of matrices."""
    m = np.asarray(m)
    j = standard_j(m.shape[-1] // 2)
    r = np.swapaxes(m, -1, -2) @ j @ m - j
    return float(np.max(np.abs(r))) if r.size else 0.0


# ---------------------------------------------------------------------------
# structure tags


@dataclass(frozen=True)
class Generic:
    kind = "generic"


@dataclass(frozen=True)
class Periodic:
    period: float
    kind = "periodic"

    def __post_init__(self):
        if not (np.isfinite(self.period) and self.period > 0):
            raise InvalidArgument("period must be a positive real", period=self.period)


@dataclass(frozen=True)
class QuasiPeriodic:
    torus: "TorusField"
    kind = "quasi_periodic"


@dataclass(frozen=True)
class AsymptoticPeriodic:
    limit: "SymmetricField"
    kind = "asymptotic_periodic"

    def __post_init__(self):
        if not isinstance(self.limit.structure, Periodic):
            raise StructureMismatch("asymptotic limit must be a periodic field")


GENERIC = Generic()

MODES = ("constant", "cos", "sin", "gauss")


@dataclass(frozen=True)
class TrigTerm:
    """One summand ``coefficient * g(t)`` of a field.

    ``g`` is ``1``, ``cos(frequency*t)``, ``sin(frequency*t)`` or
    ``exp(-(frequency*(t - center))**2)``.  On a torus surface ``frequency``
    is an integer wave vector and the argument is ``frequency . theta``.
    """

    coefficient: np.ndarray
    mode: str = "constant"
    frequency: float | tuple = 0.0
    center: float = 0.0

    def __post_init__(self):
        if self.mode not in MODES:
            raise InvalidArgument(f"unknown term mode {self.mode!r}")
        c = np.array(self.coefficient, dtype=float)
        if c.ndim != 2 or c.shape[0] != c.shape[1] or c.shape[0] % 2:
            raise InvalidArgument("term coefficient must be a square matrix of even size")
        if not np.all(np.isfinite(c)):
            raise InvalidArgument("term coefficient must be finite")
        if np.max(np.abs(c - c.T), initial=0.0) > SYMMETRY_TOL:
            raise ConstructionError("term coefficient is not symmetric")
        c.setflags(write=False)
        object.__setattr__(self, "coefficient", c)
        if isinstance(self.frequency, (list, tuple, np.ndarray)):
            object.__setattr__(self, "frequency", tuple(float(x) for x in self.frequency))
        else:
            object.__setattr__(self, "frequency", float(self.frequency))

    def weights(self, arg: np.ndarray) -> np.ndarray:
        if self.mode == "constant":
            return np.ones_like(arg)
        if self.mode == "cos":
            return np.cos(arg)
        if self.mode == "sin":
            return np.sin(arg)
        return np.exp(-(arg**2))

    def __eq__(self, other):
        if not isinstance(other, TrigTerm):
            return NotImplemented
        return (
            self.mode == other.mode
            and self.frequency == other.frequency
            and self.center == other.center
            and np.array_equal(self.coefficient, other.coefficient)
        )

    __hash__ = None


def _sum_terms(terms: Sequence[TrigTerm], t: np.ndarray) -> np.ndarray:
    n = terms[0].coefficient.shape[0]
    out = np.zeros(t.shape + (n, n))
    for term in terms:
        if term.mode == "gauss":
            w = term.weights(term.frequency * (t - term.center))
        else:
            w = term.weights(term.frequency * t)
        out += w[..., None, None] * term.coefficient
    return out


def _sum_surface_terms(terms: Sequence[TrigTerm], theta: np.ndarray) -> np.ndarray:
    n = terms[0].coefficient.shape[0]
    out = np.zeros(theta.shape[:-1] + (n, n))
    for term in terms:
        if term.mode == "constant":
            w = np.ones(theta.shape[:-1])
        else:
            w = term.weights(theta @ np.asarray(term.frequency, dtype=float))
        out += w[..., None, None] * term.coefficient
    return out


def _shift_terms(terms, s):
    out = []
    for term in terms:
        c, f = term.coefficient, term.frequency
        if term.mode == "constant":
            out.append(term)
        elif term.mode == "gauss":
            out.append(TrigTerm(c, "gauss", f, term.center - s))
        elif term.mode == "cos":
            # cos(f(t+s)) = cos(fs) cos(ft) - sin(fs) sin(ft)
            out.append(TrigTerm(math.cos(f * s) * c, "cos", f))
            out.append(TrigTerm(-math.sin(f * s) * c, "sin", f))
        else:
            out.append(TrigTerm(math.cos(f * s) * c, "sin", f))
            out.append(TrigTerm(math.sin(f * s) * c, "cos", f))
    return tuple(out)


def _reverse_terms(terms):
    out = []
    for term in terms:
        if term.mode == "sin":
            out.append(term)  # -sin(-ft) = sin(ft)
        elif term.mode == "gauss":
            out.append(TrigTerm(-term.coefficient, "gauss", term.frequency, -term.center))
        else:
            out.append(TrigTerm(-term.coefficient, term.mode, term.frequency))
    return tuple(out)


# ---------------------------------------------------------------------------
# torus fields


@dataclass(frozen=True, eq=False)
class TorusField:
    """``B(t) = S(p + q t)`` for a surface ``S`` on the ``m``-torus (angles mod 2*pi).

    Rational independence of ``frequency`` and of ``(frequency, 1/step)`` is a
    declared attribute; it is not (and cannot be) checked numerically.
    """

    surface: Callable[[np.ndarray], np.ndarray]
    base_point: np.ndarray
    frequency: np.ndarray
    step: float = 1.0
    surface_terms: tuple | None = None

    def __post_init__(self):
        p = np.atleast_1d(np.asarray(self.base_point, dtype=float))
        q = np.atleast_1d(np.asarray(self.frequency, dtype=float))
        if p.shape != q.shape or p.ndim != 1:
            raise InvalidArgument("base_point and frequency must be vectors of equal length")
        if not (self.step > 0):
            raise InvalidArgument("step u must be positive")
        p.setflags(write=False)
        q.setflags(write=False)
        object.__setattr__(self, "base_point", p)
        object.__setattr__(self, "frequency", q)

    @property
    def torus_dim(self) -> int:
        return self.base_point.shape[0]

    def evaluate(self, t):
        t = np.asarray(t, dtype=float)
        theta = self.base_point + t[..., None] * self.frequency
        return self.surface(theta)

    def translate(self, s: float) -> "TorusField":
        return TorusField(self.surface, self.base_point + self.frequency * s,
                          self.frequency, self.step, self.surface_terms)

    def reversed(self) -> "TorusField":
        surface = self.surface
        terms = None
        if self.surface_terms is not None:
            terms = tuple(TrigTerm(-tm.coefficient, tm.mode, tm.frequency) for tm in self.surface_terms)

        def neg_surface(theta):
            return -surface(theta)

        return TorusField(neg_surface, self.base_point, -self.frequency, self.step, terms)

    @classmethod
    def from_terms(cls, terms, base_point, frequency, step=1.0):
        terms = tuple(terms)
        m = len(np.atleast_1d(frequency))
        for term in terms:
            if term.mode == "gauss":
                raise InvalidArgument("gauss terms are not allowed on a torus surface")
            if term.mode != "constant" and len(np.atleast_1d(term.frequency)) != m:
                raise InvalidArgument("surface term wave vector must have length m")

        def surface(theta):
            return _sum_surface_terms(terms, np.asarray(theta, dtype=float))

        return cls(surface, base_point, frequency, step, terms)


# ---------------------------------------------------------------------------
# fields


class SymmetricField:
    """A bounded continuous map ``t -> B(t)`` into symmetric ``2d x 2d`` matrices.

    Parameters
    ----------
    dim_half : int
        Half dimension ``d``.
    bound : float
        Declared bound ``K`` on the operator norm of ``B(t)``.
    evaluator : callable
        Vectorised map: an array of times of shape ``(...)`` to an array of
        shape ``(..., 2d, 2d)``.
    structure : Generic, Periodic, QuasiPeriodic or AsymptoticPeriodic
    terms : tuple of TrigTerm, optional
        Present when the field is a finite sum of terms (makes it serialisable).
    check : bool
        Spot-check symmetry, the bound and periodicity on a sample grid; a
        violation raises :class:`ConstructionError`.
    """

    def __init__(self, dim_half, bound, evaluator, structure=GENERIC, name=None,
                 terms=None, check=True):
        if int(dim_half) != dim_half or dim_half < 1:
            raise InvalidArgument("dim_half must be a positive integer", dim_half=dim_half)
        if not (np.isfinite(bound) and bound > 0):
            raise InvalidArgument("bound K must be a positive real", bound=bound)
        self.dim_half = int(dim_half)
        self.bound = float(bound)
        self._evaluator = evaluator
        self.structure = structure
        self.name = name
        self.terms = None if terms is None else tuple(terms)
        if check:
            self.check(CHECK_GRID)

    @property
    def dim(self) -> int:
        return 2 * self.dim_half

    @property
    def period(self) -> float | None:
        return self.structure.period if isinstance(self.structure, Periodic) else None

    def __call__(self, t):
        return evaluate(self, t)

    def batch(self, t: np.ndarray) -> np.ndarray:
        """Evaluate at an array of times without argument validation."""
        t = np.asarray(t, dtype=float)
        out = np.asarray(self._evaluator(t), dtype=float)
        return np.broadcast_to(out, t.shape + (self.dim, self.dim))

    def check(self, times) -> None:
        times = np.asarray(times, dtype=float)
        values = self.batch(times)
        asym = np.max(np.abs(values - np.swapaxes(values, -1, -2)))
        if asym > SYMMETRY_TOL:
            raise ConstructionError("field is not symmetric", residual=float(asym))
        norms = np.linalg.norm(values, ord=2, axis=(-2, -1))
        worst = float(np.max(norms))
        if worst > self.bound * (1 + 1e-12) + 1e-15:
            raise ConstructionError("field exceeds its declared bound K", bound=self.bound,
                                    observed=worst)
        if isinstance(self.structure, Periodic):
            shifted = self.batch(times + self.structure.period)
            scale = max(1.0, float(np.max(np.abs(values))))
            drift = float(np.max(np.abs(shifted - values)))
            if drift > 1e-12 * scale * max(1.0, float(np.max(np.abs(times))) / 10):
                raise ConstructionError("field is not periodic with the declared period",
                                        drift=drift)
        if isinstance(self.structure, QuasiPeriodic):
            torus_vals = self.structure.torus.evaluate(times)
            if np.max(np.abs(torus_vals - values)) > 1e-12 * max(1.0, float(np.max(np.abs(values)))):
                raise ConstructionError("evaluator disagrees with its torus surface")

    def __repr__(self):
        label = self.name or "field"
        return f"<SymmetricField {label} d={self.dim_half} K={self.bound:g} {self.structure.kind}>"


def evaluate(field: SymmetricField, t):
    """Return ``B(t)`` (a single matrix for scalar ``t``, a stack otherwise)."""
    arr = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise InvalidArgument("time must be finite", t=repr(t))
    return field.batch(arr)


def from_terms(terms, bound=None, structure=GENERIC, name=None, check=True) -> SymmetricField:
    terms = tuple(terms)
    if not terms:
        raise InvalidArgument("a field needs at least one term")
    n = terms[0].coefficient.shape[0]
    if any(tm.coefficient.shape != (n, n) for tm in terms):
        raise InvalidArgument("all term coefficients must share one shape")
    if bound is None:
        bound = sum(np.linalg.norm(tm.coefficient, 2) for tm in terms) or 1.0

    def evaluator(t):
        return _sum_terms(terms, t)

    return SymmetricField(n // 2, bound, evaluator, structure, name, terms, check)


def from_torus(torus: TorusField, bound, name=None, check=True) -> SymmetricField:
    return SymmetricField(torus.surface_terms[0].coefficient.shape[0] // 2 if torus.surface_terms
                          else torus.evaluate(np.zeros(1)).shape[-1] // 2,
                          bound, torus.evaluate, QuasiPeriodic(torus), name, None, check)


def constant(matrix, bound=None, period=None, name=None) -> SymmetricField:
    matrix = np.asarray(matrix, dtype=float)
    structure = Periodic(period) if period else GENERIC
    if bound is None:
        bound = float(np.linalg.norm(matrix, 2)) or 1.0
    return from_terms([TrigTerm(matrix)], bound, structure, name)


def tabulated(times, matrices, bound=None, name=None) -> SymmetricField:
    """Piecewise-linear interpolation of sampled matrices (held constant outside)."""
    times = np.asarray(times, dtype=float)
    mats = np.asarray(matrices, dtype=float)
    if times.ndim != 1 or mats.shape[0] != times.size or np.any(np.diff(times) <= 0):
        raise InvalidArgument("tabulated field needs increasing times and one matrix per time")
    mats = 0.5 * (mats + np.swapaxes(mats, -1, -2))
    if bound is None:
        bound = float(np.max(np.linalg.norm(mats, 2, axis=(-2, -1)))) or 1.0
    flat = mats.reshape(times.size, -1)

    def evaluator(t):
        t = np.asarray(t, dtype=float)
        cols = [np.interp(t, times, flat[:, j]) for j in range(flat.shape[1])]
        return np.stack(cols, axis=-1).reshape(t.shape + mats.shape[1:])

    return SymmetricField(mats.shape[-1] // 2, bound, evaluator, GENERIC, name, None,
                          check=False)


# ---------------------------------------------------------------------------
# transformations


def shift(field: SymmetricField, s: float) -> SymmetricField:
    """The translated field ``t -> B(s + t)``."""
    s = float(s)
    struct = field.structure
    if isinstance(struct, QuasiPeriodic):
        struct = QuasiPeriodic(struct.torus.translate(s))
    elif isinstance(struct, AsymptoticPeriodic):
        struct = AsymptoticPeriodic(shift(struct.limit, s))
    terms = _shift_terms(field.terms, s) if field.terms is not None else None
    base = field._evaluator
    if isinstance(struct, QuasiPeriodic):
        evaluator = struct.torus.evaluate
    else:
        def evaluator(t):
            return base(np.asarray(t, dtype=float) + s)
    name = f"{field.name}+{s:g}" if field.name else None
    return SymmetricField(field.dim_half, field.bound, evaluator, struct, name, terms, check=False)


def reverse(field: SymmetricField) -> SymmetricField:
    """The field ``t -> -B(-t)``, whose fundamental solution is ``t -> gamma(-t)``."""
    struct = field.structure
    if isinstance(struct, QuasiPeriodic):
        struct = QuasiPeriodic(struct.torus.reversed())
    elif isinstance(struct, AsymptoticPeriodic):
        struct = AsymptoticPeriodic(reverse(struct.limit))
    terms = _reverse_terms(field.terms) if field.terms is not None else None
    base = field._evaluator
    if isinstance(struct, QuasiPeriodic):
        evaluator = struct.torus.evaluate
    else:
        def evaluator(t):
            return -base(-np.asarray(t, dtype=float))
    name = f"reverse({field.name})" if field.name else None
    return SymmetricField(field.dim_half, field.bound, evaluator, struct, name, terms, check=False)


def add_scalar(field: SymmetricField, lam: float, name=None) -> SymmetricField:
    """``B + lam * I`` with bound ``K + |lam|``; structure is kept."""
    lam = float(lam)
    struct = field.structure
    eye = np.eye(field.dim)
    if isinstance(struct, QuasiPeriodic):
        tor = struct.torus
        surf = tor.surface
        terms = None
        if tor.surface_terms is not None:
            terms = tor.surface_terms + (TrigTerm(lam * eye),)
        struct = QuasiPeriodic(TorusField(lambda th: surf(th) + lam * eye, tor.base_point,
                                          tor.frequency, tor.step, terms))
    elif isinstance(struct, AsymptoticPeriodic):
        struct = AsymptoticPeriodic(add_scalar(struct.limit, lam))
    terms = field.terms + (TrigTerm(lam * eye),) if field.terms is not None else None
    base = field._evaluator
    if isinstance(struct, QuasiPeriodic):
        evaluator = struct.torus.evaluate
    else:
        def evaluator(t):
            return base(t) + lam * eye
    return SymmetricField(field.dim_half, field.bound + abs(lam), evaluator, struct,
                          name or (f"{field.name}{lam:+g}I" if field.name else None), terms,
                          check=False)


def with_period(field: SymmetricField, period: float) -> SymmetricField:
    """Re-tag a field as periodic (checked on the sample grid)."""
    return SymmetricField(field.dim_half, field.bound, field._evaluator, Periodic(period),
                          field.name, field.terms, check=True)


# ---------------------------------------------------------------------------
# catalog


def _example_45_psi(t):
    a = np.abs(t)
    return np.sign(t) * a * np.sin(np.log1p(a))


def _example_45_dpsi(t):
    a = np.abs(t)
    lg = np.log1p(a)
    return np.sin(lg) + a / (1.0 + a) * np.cos(lg)


def example_45_solution(t):
    """Closed form ``e^{J psi(t)} diag(e^t, e^-t)`` for the ``example_45`` field."""
    t = np.asarray(t, dtype=float)
    psi = _example_45_psi(t)
    c, s = np.cos(psi), np.sin(psi)
    rot = np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)
    diag = np.zeros(t.shape + (2, 2))
    diag[..., 0, 0] = np.exp(t)
    diag[..., 1, 1] = np.exp(-t)
    return rot @ diag


def _example_45_evaluator(t):
    t = np.asarray(t, dtype=float)
    psi = _example_45_psi(t)
    dpsi = _example_45_dpsi(t)
    s2, c2 = np.sin(2 * psi), np.cos(2 * psi)
    out = np.empty(t.shape + (2, 2))
    out[..., 0, 0] = dpsi + s2
    out[..., 1, 1] = dpsi - s2
    out[..., 0, 1] = -c2
    out[..., 1, 0] = -c2
    return out


def _param(params, key, default):
    value = params.get(key, default)
    if isinstance(default, int) and not isinstance(default, bool):
        if int(value) != value:
            raise InvalidArgument(f"parameter {key} must be an integer")
        return int(value)
    value = float(value)
    if not np.isfinite(value):
        raise InvalidArgument(f"parameter {key} must be finite")
    return value


def catalog(name: str, params: dict | None = None, **kwargs) -> SymmetricField:
    """Build one of the named example systems.

    ``constant_k``           ``B = k I`` (tagged periodic with ``period``, default 1)
    ``rotation_k``           ``B = k I`` tagged with its natural period ``2 pi / |k|``
    ``hyperbolic``           ``B = a diag(I, -I)``, period ``period`` (default 1)
    ``periodic_demo``        ``B = diag(1 + eps cos t, 1)``, period ``2 pi``
    ``quasi_periodic_demo``  ``S(th) = (c + a cos th1 + a cos th2) I``, ``q = (1, sqrt 2)``
    ``example_45``           ``B = -J gamma' gamma^-1`` for ``gamma = e^{J psi} diag(e^t, e^-t)``,
                             ``psi(t) = t sin(log(1 + t))`` (odd extension to ``t < 0``)
    ``asymptotic_blend``     ``B_hyp + amp exp(-t^2) I`` with periodic limit ``B_hyp``
    """
    params = dict(params or {}, **kwargs)
    d = _param(params, "d", 1)
    if d < 1:
        raise InvalidArgument("d must be a positive integer")
    eye = np.eye(2 * d)
    if name == "constant_k":
        k = _param(params, "k", 1.0)
        return constant(k * eye, bound=abs(k) or 1.0, period=_param(params, "period", 1.0),
                        name=name)
    if name == "rotation_k":
        k = _param(params, "k", 1.0)
        if k == 0:
            raise InvalidArgument("rotation_k needs k != 0")
        return constant(k * eye, bound=abs(k), period=2 * math.pi / abs(k), name=name)
    if name == "hyperbolic":
        a = _param(params, "a", 1.0)
        if a == 0:
            raise InvalidArgument("hyperbolic needs a != 0")
        mat = a * np.diag(np.concatenate([np.ones(d), -np.ones(d)]))
        return constant(mat, bound=abs(a), period=_param(params, "period", 1.0), name=name)
    if name == "periodic_demo":
        eps = _param(params, "eps", 1.0)
        c0 = np.eye(2 * d)
        c1 = np.zeros((2 * d, 2 * d))
        c1[0, 0] = eps
        terms = [TrigTerm(c0), TrigTerm(c1, "cos", 1.0)]
        return from_terms(terms, 1 + abs(eps), Periodic(2 * math.pi), name)
    if name == "quasi_periodic_demo":
        c = _param(params, "c", 1.5)
        a = _param(params, "a", 0.3)
        b = _param(params, "b", 0.0)
        q = np.array([1.0, math.sqrt(2.0)])
        p = np.array([_param(params, "p1", 0.0), _param(params, "p2", 0.0)])
        terms = [TrigTerm(c * eye), TrigTerm(a * eye, "cos", (1, 0)),
                 TrigTerm(a * eye, "cos", (0, 1))]
        if b:
            # non-commuting part: b cos(th1 - th2) diag(I, -I)
            sig = np.diag(np.concatenate([np.ones(d), -np.ones(d)]))
            terms.append(TrigTerm(b * sig, "cos", (1, -1)))
        torus = TorusField.from_terms(terms, p, q, step=1.0)
        bound = abs(c) + 2 * abs(a) + abs(b)
        return from_torus(torus, bound, name)
    if name == "example_45":
        if d != 1:
            raise InvalidArgument("example_45 is two-dimensional (d = 1)")
        return SymmetricField(1, 3.0, _example_45_evaluator, GENERIC, name)
    if name == "asymptotic_blend":
        a = _param(params, "a", 1.0)
        amp = _param(params, "amp", 0.5)
        limit = catalog("hyperbolic", d=d, a=a, period=_param(params, "period", 1.0))
        terms = limit.terms + (TrigTerm(amp * eye, "gauss", 1.0),)
        return from_terms(terms, abs(a) + abs(amp), AsymptoticPeriodic(limit), name)
    raise CatalogMiss(f"unknown catalog system {name!r}", name=name)


CATALOG_NAMES = ("constant_k", "rotation_k", "hyperbolic", "periodic_demo",
                 "quasi_periodic_demo", "example_45", "asymptotic_blend")


# ---------------------------------------------------------------------------
# random fields (test and experiment generators)


def random_trig_field(rng: np.random.Generator, d: int, bound: float, n_terms: int = 3,
                      max_freq: float = 2.0, period: float | None = None) -> SymmetricField:
    """Random finite trigonometric sum scaled so that ``sum ||C_k|| = bound``.

    With ``period`` set, frequencies are integer multiples of ``2 pi / period``.
    """
    n = 2 * d
    terms = []
    for k in range(n_terms + 1):
        a = rng.standard_normal((n, n))
        c = 0.5 * (a + a.T)
        if k == 0:
            terms.append(TrigTerm(c))
            continue
        if period is None:
            freq = float(rng.uniform(0.2, max_freq))
        else:
            freq = 2 * math.pi / period * int(rng.integers(1, 4))
        terms.append(TrigTerm(c, str(rng.choice(["cos", "sin"])), freq))
    total = sum(np.linalg.norm(tm.coefficient, 2) for tm in terms)
    scale = bound / total
    terms = [TrigTerm(tm.coefficient * scale, tm.mode, tm.frequency) for tm in terms]
    structure = Periodic(period) if period else GENERIC
    return from_terms(terms, bound, structure, name="random")


def random_positive_field(rng: np.random.Generator, d: int, bound: float, n_terms: int = 2,
                          max_freq: float = 2.0, floor: float = 0.1) -> SymmetricField:
    """``B(t) = Q(t)^T Q(t) + floor I`` with ``Q`` a random trigonometric sum."""
    n = 2 * d
    mats = [rng.standard_normal((n, n)) for _ in range(n_terms + 1)]
    freqs = rng.uniform(0.2, max_freq, size=n_terms)
    phases = rng.uniform(0, 2 * math.pi, size=n_terms)
    total = sum(np.linalg.norm(m, 2) for m in mats)
    scale = math.sqrt(max(bound - floor, 1e-12)) / total
    mats = [m * scale for m in mats]

    def evaluator(t):
        t = np.asarray(t, dtype=float)
        q = np.broadcast_to(mats[0], t.shape + (n, n)).copy()
        for m, f, ph in zip(mats[1:], freqs, phases):
            q += np.cos(f * t + ph)[..., None, None] * m
        return np.swapaxes(q, -1, -2) @ q + floor * np.eye(n)

    return SymmetricField(d, bound, evaluator, GENERIC, "random_positive")


# ---------------------------------------------------------------------------
# JSON documents


def _term_to_doc(term: TrigTerm) -> dict:
    doc = {
        "coefficient": term.coefficient.tolist(),
        "mode": term.mode,
        "frequency": list(term.frequency) if isinstance(term.frequency, tuple) else term.frequency,
    }
    if term.mode == "gauss" and term.center != 0.0:
        doc["center"] = term.center
    return doc


def _term_from_doc(doc, n, where):
    if not isinstance(doc, dict):
        raise InvalidArgument(f"{where}: term must be an object")
    for key in ("coefficient", "mode"):
        if key not in doc:
            raise InvalidArgument(f"{where}: missing field {key!r}")
    coef = np.asarray(doc["coefficient"], dtype=float)
    if coef.ndim == 1 and coef.size == n * n:
        coef = coef.reshape(n, n)
    if coef.shape != (n, n):
        raise InvalidArgument(f"{where}: coefficient must be {n}x{n} (row-major)")
    freq = doc.get("frequency", 0.0)
    try:
        return TrigTerm(coef, doc["mode"], freq, float(doc.get("center", 0.0)))
    except ConstructionError as exc:
        raise ConstructionError(f"{where}: {exc}") from None


def field_to_document(field: SymmetricField) -> dict:
    """Serialisable description; only term-built fields can be written."""
    struct = field.structure
    sdoc: dict = {"kind": struct.kind}
    if isinstance(struct, Periodic):
        sdoc["period"] = struct.period
    elif isinstance(struct, QuasiPeriodic):
        tor = struct.torus
        if tor.surface_terms is None:
            raise InvalidArgument("torus surface is not term-based; cannot serialise")
        sdoc["torus"] = {
            "m": tor.torus_dim,
            "p": tor.base_point.tolist(),
            "q": tor.frequency.tolist(),
            "u": tor.step,
            "surface_terms": [_term_to_doc(tm) for tm in tor.surface_terms],
        }
    elif isinstance(struct, AsymptoticPeriodic):
        sdoc["limit"] = field_to_document(struct.limit)
    if field.terms is None and not isinstance(struct, QuasiPeriodic):
        raise InvalidArgument("field is not term-based; cannot serialise")
    return {
        "name": field.name or "",
        "d": field.dim_half,
        "K": field.bound,
        "structure": sdoc,
        "terms": [_term_to_doc(tm) for tm in field.terms] if field.terms is not None else [],
    }


def field_from_document(doc: dict, check_grid=None) -> SymmetricField:
    if not isinstance(doc, dict):
        raise InvalidArgument("system document must be a JSON object")
    for key in ("d", "K", "structure"):
        if key not in doc:
            raise InvalidArgument(f"missing field {key!r}")
    d = doc["d"]
    if not isinstance(d, int) or d < 1:
        raise InvalidArgument("field 'd' must be a positive integer")
    bound = doc["K"]
    if not isinstance(bound, (int, float)) or not bound > 0:
        raise InvalidArgument("field 'K' must be a positive number")
    n = 2 * d
    sdoc = doc["structure"]
    if not isinstance(sdoc, dict) or "kind" not in sdoc:
        raise InvalidArgument("field 'structure' must be an object with a 'kind'")
    kind = sdoc["kind"]
    name = doc.get("name") or None
    terms = [_term_from_doc(t, n, f"terms[{i}]") for i, t in enumerate(doc.get("terms", []))]
    if kind == "quasi_periodic":
        tdoc = sdoc.get("torus")
        if not isinstance(tdoc, dict):
            raise InvalidArgument("structure.torus is required for quasi_periodic")
        for key in ("m", "p", "q", "surface_terms"):
            if key not in tdoc:
                raise InvalidArgument(f"structure.torus: missing field {key!r}")
        if len(tdoc["p"]) != tdoc["m"] or len(tdoc["q"]) != tdoc["m"]:
            raise InvalidArgument("structure.torus: p and q must have length m")
        sterms = [_term_from_doc(t, n, f"structure.torus.surface_terms[{i}]")
                  for i, t in enumerate(tdoc["surface_terms"])]
        if not sterms:
            raise InvalidArgument("structure.torus.surface_terms must not be empty")
        torus = TorusField.from_terms(sterms, tdoc["p"], tdoc["q"], float(tdoc.get("u", 1.0)))
        field = from_torus(torus, float(bound), name, check=False)
    else:
        if not terms:
            raise InvalidArgument("field 'terms' must not be empty")
        if kind == "generic":
            struct = GENERIC
        elif kind == "periodic":
            if "period" not in sdoc:
                raise InvalidArgument("structure.period is required for periodic")
            struct = Periodic(float(sdoc["period"]))
        elif kind == "asymptotic_periodic":
            if "limit" not in sdoc:
                raise InvalidArgument("structure.limit is required for asymptotic_periodic")
            struct = AsymptoticPeriodic(field_from_document(sdoc["limit"], check_grid))
        else:
            raise InvalidArgument(f"unknown structure kind {kind!r}")
        field = from_terms(terms, float(bound), struct, name, check=False)
    field.check(CHECK_GRID if check_grid is None else check_grid)
    return field
