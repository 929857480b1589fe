"""Fundamental solutions of ``gamma' = J B(t) gamma``.

Steps are taken with the fourth-order Magnus method (two Gauss points).  Each
step propagator is the exponential of a Hamiltonian matrix and is therefore
symplectic to rounding error; a first-order symplectic correction is applied
if a step drifts anyway.  Step sizes start from a uniform grid with
``K h <= 0.25`` and intervals are bisected until the step-doubling error
estimate meets the tolerance.

A :class:`SymplecticPath` stores the one-step propagators
``gamma(t_{i+1}) gamma(t_i)^{-1}`` rather than the cumulative matrices, so that
paths over long horizons with exponentially growing solutions remain usable.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from functools import cached_property

import numpy as np
import scipy.linalg

from .errors import DomainError, InvalidArgument, PropagationFailure, StructureMismatch
from .systems import Periodic, SymmetricField, reverse, shift, standard_j

_C1 = 0.5 - math.sqrt(3.0) / 6.0
_C2 = 0.5 + math.sqrt(3.0) / 6.0
_SQ3_12 = math.sqrt(3.0) / 12.0
BLOCK = 32


@dataclass(frozen=True)
class Control:
    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    max_step: float = 0.25
    max_depth: int = 24
    sympl_tol: float = 1e-8

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol >= 0 and self.max_step > 0):
            raise InvalidArgument("tolerances and max_step must be positive")


DEFAULT_CONTROL = Control()


def _expm_hamiltonian(a: np.ndarray) -> np.ndarray:
    """Batched exponential; closed form for traceless 2x2 matrices."""
    if a.shape[-1] != 2:
        return scipy.linalg.expm(a)
    delta = a[..., 0, 0] ** 2 + a[..., 0, 1] * a[..., 1, 0]
    root = np.sqrt(delta.astype(complex))
    small = np.abs(delta) < 1e-12
    safe = np.where(small, 1.0, root)
    c = np.where(small, 1.0 + delta / 2.0, np.cosh(safe).real)
    s = np.where(small, 1.0 + delta / 6.0, (np.sinh(safe) / safe).real)
    out = s[..., None, None] * a
    out[..., 0, 0] += c
    out[..., 1, 1] += c
    return out


def _magnus(field: SymmetricField, s0: np.ndarray, h: np.ndarray) -> np.ndarray:
    j = standard_j(field.dim_half)
    b = field.batch(np.stack([s0 + _C1 * h, s0 + _C2 * h]))
    a1 = j @ b[0]
    a2 = j @ b[1]
    hh = h[:, None, None]
    omega = 0.5 * hh * (a1 + a2) + _SQ3_12 * hh**2 * (a2 @ a1 - a1 @ a2)
    return _expm_hamiltonian(omega)


def _symplectic_fix(m: np.ndarray, tol: float) -> np.ndarray:
    j = standard_j(m.shape[-1] // 2)
    for _ in range(3):
        e = np.swapaxes(m, -1, -2) @ j @ m - j
        bad = np.max(np.abs(e), axis=(-2, -1)) > tol / 2
        if not np.any(bad):
            break
        m = m.copy()
        m[bad] = m[bad] @ (np.eye(m.shape[-1]) + 0.5 * j @ e[bad])
    return m


def _adaptive_steps(field, grid, control):
    """Propagators for every interval of ``grid`` (refined where needed).

    Returns the refined grid and the step matrices.
    """
    pending = [(grid[:-1], np.diff(grid), 0)]
    accepted_s, accepted_h, accepted_m = [], [], []
    worst = 0.0
    while pending:
        s0, h, depth = pending.pop()
        if s0.size == 0:
            continue
        full = _magnus(field, s0, h)
        half = h / 2
        first = _magnus(field, s0, half)
        second = _magnus(field, s0 + half, half)
        fine = second @ first
        err = np.max(np.abs(fine - full), axis=(-2, -1)) / 15.0
        scale = np.max(np.abs(fine), axis=(-2, -1))
        ok = err <= control.abs_tol + control.rel_tol * scale
        if depth >= control.max_depth and not np.all(ok):
            worst = float(np.max(err[~ok]))
            raise PropagationFailure("step control failed to meet tolerance",
                                     worst_error=worst, time=float(s0[~ok][0]))
        if np.any(ok):
            accepted_s.append(np.stack([s0[ok], s0[ok] + half[ok]], -1).ravel())
            accepted_h.append(np.repeat(half[ok], 2))
            accepted_m.append(np.stack([first[ok], second[ok]], 1).reshape(-1, *fine.shape[1:]))
        if not np.all(ok):
            bad_s, bad_h = s0[~ok], half[~ok]
            pending.append((np.concatenate([bad_s, bad_s + bad_h]),
                            np.concatenate([bad_h, bad_h]), depth + 1))
    s = np.concatenate(accepted_s)
    order = np.argsort(s, kind="stable")
    steps = np.concatenate(accepted_m)[order]
    s = s[order]
    hs = np.concatenate(accepted_h)[order]
    new_grid = np.append(s, s[-1] + hs[-1])
    new_grid[-1] = grid[-1]
    steps = _symplectic_fix(steps, control.sympl_tol)
    return new_grid, steps


def propagate_between(field, s0, s1, control=DEFAULT_CONTROL) -> np.ndarray:
    """Propagator from param time ``s0`` to ``s1 >= s0`` by fresh integration."""
    if s1 == s0:
        return np.eye(field.dim)
    n = max(1, int(math.ceil((s1 - s0) * max(field.bound, 1e-9) / 0.25)),
            int(math.ceil((s1 - s0) / control.max_step)))
    grid = np.linspace(s0, s1, n + 1)
    _, steps = _adaptive_steps(field, grid, control)
    out = np.eye(field.dim)
    for m in steps:
        out = m @ out
    return out


def blocked_products(steps: np.ndarray, start: np.ndarray, renorm=None):
    """Cumulative products ``steps[i-1] ... steps[0] @ start`` at every node.

    Works block-wise: products inside blocks of ``BLOCK`` steps are formed in
    a vectorised loop, and the sequential pass over blocks rescales the
    carried matrix (or re-orthonormalises it when ``renorm == "qr"``).  The
    carried matrix is only ever transformed by its left factor, so the result
    spans the right subspace even when the raw product would overflow.

    Returns ``(values, log_scale)`` with ``values[i] * exp(log_scale[i])``
    equal to the product (for ``renorm="qr"`` only the column span is meaningful).
    """
    n_steps = steps.shape[0]
    dim = steps.shape[-1]
    start = np.asarray(start)
    nb = max(1, -(-n_steps // BLOCK))
    pad = nb * BLOCK - n_steps
    if pad:
        eye = np.broadcast_to(np.eye(dim, dtype=steps.dtype), (pad, dim, dim))
        padded = np.concatenate([steps, eye])
    else:
        padded = steps
    blocks = padded.reshape(nb, BLOCK, dim, dim)
    partial = np.empty_like(blocks)
    partial[:, 0] = blocks[:, 0]
    for j in range(1, BLOCK):
        partial[:, j] = blocks[:, j] @ partial[:, j - 1]
    carried = np.empty((nb,) + start.shape, dtype=np.result_type(start, steps))
    logs = np.zeros(nb)
    cur = start.astype(carried.dtype)
    cur_log = 0.0
    totals = partial[:, -1]
    for b in range(nb):
        carried[b] = cur
        logs[b] = cur_log
        nxt = totals[b] @ cur
        if renorm == "qr":
            cur, _ = np.linalg.qr(nxt)
        else:
            scale = float(np.max(np.abs(nxt)))
            if not np.isfinite(scale) or scale == 0:
                raise PropagationFailure("cumulative product is not finite")
            cur = nxt / scale
            cur_log += math.log(scale)
    inner = partial @ carried[:, None]
    values = np.concatenate([start[None].astype(carried.dtype),
                             inner.reshape((-1,) + start.shape)[:n_steps]])
    log_scale = np.concatenate([[0.0], np.repeat(logs, BLOCK)[:n_steps]])
    if renorm != "qr":
        mx = np.max(np.abs(values), axis=tuple(range(1, values.ndim)))
        mx = np.where(mx > 0, mx, 1.0)
        values = values / mx.reshape((-1,) + (1,) * (values.ndim - 1))
        log_scale = log_scale + np.log(mx)
    return values, log_scale


def symplectic_inverse(m: np.ndarray) -> np.ndarray:
    j = standard_j(m.shape[-1] // 2)
    return -j @ np.swapaxes(m, -1, -2) @ j


class SymplecticPath:
    """A discretised fundamental solution.

    Attributes
    ----------
    times : ndarray
        Node labels, strictly monotone (decreasing for backward paths).
    params : ndarray
        Increasing integration parameter; ``params == direction * times``.
    steps : ndarray, shape (N, 2d, 2d)
        One-step propagators between consecutive nodes.
    anchor : ndarray
        ``gamma`` at the first node.
    field : SymmetricField
        The field integrated in the parameter variable (the reversed field for
        backward paths); it generates every step.
    """

    def __init__(self, times, params, steps, anchor, field, control=DEFAULT_CONTROL):
        self.times = np.asarray(times, dtype=float)
        self.params = np.asarray(params, dtype=float)
        self.steps = np.asarray(steps, dtype=float)
        self.anchor = np.asarray(anchor, dtype=float)
        self.field = field
        self.control = control
        self.direction = 1 if self.times[-1] > self.times[0] else -1
        for arr in (self.times, self.params, self.steps, self.anchor):
            arr.setflags(write=False)

    @property
    def dim_half(self) -> int:
        return self.anchor.shape[0] // 2

    @property
    def n_steps(self) -> int:
        return self.steps.shape[0]

    @property
    def t0(self) -> float:
        return float(self.times[0])

    @property
    def t1(self) -> float:
        return float(self.times[-1])

    @cached_property
    def _normalised(self):
        return blocked_products(self.steps, self.anchor)

    @property
    def matrices(self) -> np.ndarray:
        """``gamma(t_i)`` at every node (may overflow on long unstable paths)."""
        vals, logs = self._normalised
        with np.errstate(over="ignore"):
            out = vals * np.exp(logs)[:, None, None]
        out[0] = self.anchor
        return out

    @property
    def log_norms(self) -> np.ndarray:
        vals, logs = self._normalised
        return logs + np.log(np.max(np.abs(vals), axis=(-2, -1)))

    @cached_property
    def sympl_residual(self) -> float:
        """Max over nodes of ``|gamma^T J gamma - J| / max(1, |gamma|^2)`` (max-norms).

        For bounded paths this is the plain residual; the scaling keeps it
        meaningful when ``gamma`` grows exponentially.
        """
        vals, logs = self._normalised
        j = standard_j(self.dim_half)
        c2 = np.exp(-2 * logs)
        res = np.swapaxes(vals, -1, -2) @ j @ vals - c2[:, None, None] * j
        rel = np.max(np.abs(res), axis=(-2, -1)) / np.maximum(c2, 1.0)
        return float(np.max(rel))

    @cached_property
    def step_residual(self) -> float:
        j = standard_j(self.dim_half)
        r = np.swapaxes(self.steps, -1, -2) @ j @ self.steps - j
        return float(np.max(np.abs(r))) if r.size else 0.0

    def node_index(self, t: float, tol=1e-12) -> int:
        s = self.direction * t
        i = int(np.searchsorted(self.params, s))
        for k in (i - 1, i):
            if 0 <= k < self.params.size and abs(self.params[k] - s) <= tol * max(1.0, abs(s)):
                return k
        raise DomainError("time is not a grid node", t=t)

    def local(self, i: int, s: float) -> np.ndarray:
        """``phi(s, s_i)`` in the parameter variable, by local re-integration."""
        return propagate_between(self.field, float(self.params[i]), float(s), self.control)

    def refine(self, t: float) -> np.ndarray:
        """``gamma(t)`` for any ``t`` in the domain, re-integrated from the nearest node below."""
        s = self.direction * float(t)
        if not (self.params[0] - 1e-12 <= s <= self.params[-1] + 1e-12):
            raise DomainError("time outside path domain", t=t)
        i = max(0, min(int(np.searchsorted(self.params, s, side="right")) - 1, self.n_steps))
        base = self.matrices[i]
        if s == self.params[i]:
            return base
        return self.local(i, s) @ base

    def with_nodes(self, labels) -> "SymplecticPath":
        """A copy whose grid also contains ``labels`` (steps split by re-integration)."""
        extra = np.setdiff1d(self.direction * np.asarray(labels, dtype=float), self.params)
        extra = extra[(extra > self.params[0]) & (extra < self.params[-1])]
        if extra.size == 0:
            return self
        params = list(self.params)
        steps = list(self.steps)
        for s in np.sort(extra)[::-1]:
            i = int(np.searchsorted(self.params, s)) - 1
            lo, hi = self.params[i], self.params[i + 1]
            # locate current position of this interval in the (growing) lists
            k = params.index(lo)
            nxt = params[k + 1]
            left = propagate_between(self.field, float(lo), float(s), self.control)
            right = propagate_between(self.field, float(s), float(nxt), self.control)
            params.insert(k + 1, s)
            steps[k:k + 1] = [left, right]
            del hi
        params = np.array(params)
        return SymplecticPath(self.direction * params, params, np.array(steps), self.anchor,
                              self.field, self.control)

    def subdivide(self, mask) -> "SymplecticPath":
        """Split the steps selected by ``mask`` into halves."""
        mask = np.asarray(mask, dtype=bool)
        if not np.any(mask):
            return self
        idx = np.nonzero(mask)[0]
        mids = 0.5 * (self.params[idx] + self.params[idx + 1])
        h = mids - self.params[idx]
        _, left = _adaptive_steps_pairs(self.field, self.params[idx], h, self.control)
        _, right = _adaptive_steps_pairs(self.field, mids, h, self.control)
        params = np.insert(self.params, idx + 1, mids)
        steps = list(self.steps)
        for k in idx[::-1]:
            pos = int(np.searchsorted(idx, k))
            steps[k:k + 1] = [left[pos], right[pos]]
        return SymplecticPath(self.direction * params, params, np.array(steps), self.anchor,
                              self.field, self.control)

    def segment(self, i0: int, i1: int, anchor=None) -> "SymplecticPath":
        """Nodes ``i0..i1`` re-anchored (identity by default)."""
        if anchor is None:
            anchor = np.eye(self.anchor.shape[0])
        return SymplecticPath(self.times[i0:i1 + 1], self.params[i0:i1 + 1],
                              self.steps[i0:i1], anchor, self.field, self.control)

    def to_csv(self, path) -> None:
        mats = self.matrices
        j = standard_j(self.dim_half)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            n = mats.shape[-1]
            w.writerow(["t"] + [f"g{r}{c}" for r in range(n) for c in range(n)] + ["residual"])
            for t, m in zip(self.times, mats):
                res = float(np.max(np.abs(m.T @ j @ m - j)))
                w.writerow([repr(float(t))] + [repr(float(x)) for x in m.ravel()] + [repr(res)])

    def __repr__(self):
        return (f"<SymplecticPath [{self.t0:g}, {self.t1:g}] nodes={self.times.size} "
                f"d={self.dim_half}>")


def _adaptive_steps_pairs(field, s0, h, control):
    out = []
    for a, b in zip(s0, s0 + h):
        out.append(propagate_between(field, float(a), float(b), control))
    return None, np.array(out).reshape(-1, field.dim, field.dim)


def fundamental_solution(field: SymmetricField, interval, control: Control | None = None,
                         anchor=None, nodes=None) -> SymplecticPath:
    """Integrate ``gamma' = J B gamma`` over ``interval = (a, b)``.

    ``a > b`` yields a backward path, integrated as the reversed field
    ``-B(-s)`` over ``s`` in ``[-a, -b]``.  ``nodes`` are extra times that
    must appear in the grid (used for checkpoints such as integer times).
    """
    control = control or DEFAULT_CONTROL
    a, b = (float(x) for x in interval)
    if not (np.isfinite(a) and np.isfinite(b)) or a == b:
        raise InvalidArgument("interval must be two distinct finite times")
    direction = 1 if b > a else -1
    integrand = field if direction == 1 else reverse(field)
    p0, p1 = direction * a, direction * b
    h0 = min(control.max_step, 0.25 / max(field.bound, 1e-12))
    n = max(1, int(math.ceil((p1 - p0) / h0)))
    grid = np.linspace(p0, p1, n + 1)
    if nodes is not None:
        extra = direction * np.asarray(nodes, dtype=float)
        extra = extra[(extra > p0) & (extra < p1)]
        grid = np.union1d(grid, extra)
        # drop nodes closer than 1e-9 to a neighbour (keeps requested ones)
        keep = np.concatenate([[True], np.diff(grid) > 1e-9])
        keep |= np.isin(grid, extra)
        grid = grid[keep]
    grid, steps = _adaptive_steps(integrand, grid, control)
    if anchor is None:
        anchor = np.eye(field.dim)
    path = SymplecticPath(direction * grid, grid, steps, anchor, integrand, control)
    return path


def monodromy(field: SymmetricField, control: Control | None = None) -> np.ndarray:
    """``gamma(T)`` for a ``T``-periodic field."""
    if not isinstance(field.structure, Periodic):
        raise StructureMismatch("monodromy needs a periodic field")
    path = fundamental_solution(field, (0.0, field.structure.period), control)
    return path.matrices[-1]


def compose_restart(path: SymplecticPath, s: float) -> SymplecticPath:
    """The path ``t -> gamma(s + t) gamma(s)^{-1}`` on the remaining domain, anchored at ``I``."""
    sp = path.direction * float(s)
    if not (path.params[0] - 1e-12 <= sp <= path.params[-1] - 1e-12):
        raise DomainError("restart time outside path domain", s=s)
    p = path.with_nodes([s])
    i = int(np.argmin(np.abs(p.params - sp)))
    new_field = shift(p.field, float(p.params[i]))
    params = p.params[i:] - p.params[i]
    return SymplecticPath(p.direction * params, params, p.steps[i:], np.eye(p.anchor.shape[0]),
                          new_field, p.control)
