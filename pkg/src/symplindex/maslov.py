"""Maslov-type indices of symplectic paths.

``iota(M, path, omega)`` counts intersections of the perturbed path
``X_eps(t) = exp(-eps J) gamma(t) M^{-1}`` with the hypersurface
``{X : det(X - omega I) = 0}``; ``i_omega`` is the normalised index of a path
starting at the identity.

Counting engine
---------------
The graph of ``X(t)`` is a Lagrangian subspace of ``C^{4d}`` for the form
``diag(-J, J)``, and so is the graph of ``omega I``.  Each Lagrangian ``L`` is
encoded by a unitary ``W(L)`` so that ``dim(L1 & L2) = dim ker(W1 - W2)``.  A
crossing is an eigenvalue of ``U(t) = W_omega^* W(t)`` passing through 1, and
the signed count over an interval telescopes::

    count = (Phi - sum theta(U_end) + sum theta(U_start)) / (2 pi)

where ``Phi`` is the unwrapped change of ``arg det W`` (accumulated from
small steps) and ``theta`` are eigen-angles in ``[0, 2 pi)``.  ``Phi`` does not
depend on ``omega``, so indices for many ``omega`` and many end points cost one
pass over the path.  Graph frames are propagated with periodic QR
re-orthonormalisation, which keeps long exponentially growing paths usable.

Crossing records (time, kernel dimension, crossing-form signature) are located
afterwards by bisection inside the steps where the count changes; they are a
ledger and a cross-check, the index value comes from the count.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field as dc_field

import numpy as np
import scipy.linalg
from scipy.optimize import minimize_scalar

from .errors import (IndexUnstable, InvalidArgument, NumericalIntegrityError,
                     PreconditionError, PropagationFailure)
from .propagator import (SymplecticPath, blocked_products, propagate_between,
                         symplectic_inverse)
from .systems import standard_j

EPS_LEVELS = tuple(1e-3 * 0.5**k for k in range(24))
ANGLE_LIMIT = math.pi / 4
KERNEL_TOL = 1e-8
TIME_TOL = 1e-10
# orientation of the unitary phase relative to the co-orientation of the
# hypersurface (positive fields give positive crossings); checked in the tests
_SIGN = 1


@dataclass(frozen=True)
class CrossingRecord:
    time: float
    kernel_dim: int
    signature: int
    degenerate: bool = False
    endpoint: bool = False
    contribution: int = 0
    d_slope: float = float("nan")


@dataclass(frozen=True)
class IndexValue:
    value: int
    omega: complex
    anchor: np.ndarray
    crossings: list = dc_field(default_factory=list)
    epsilon: float = EPS_LEVELS[0]

    def __int__(self):
        return int(self.value)


def _check_omega(omega) -> complex:
    omega = complex(omega)
    if not np.isfinite(omega) or abs(abs(omega) - 1.0) > 1e-12:
        raise InvalidArgument("omega must lie on the unit circle", omega=str(omega))
    return omega


def _check_symplectic(m, d) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if m.shape != (2 * d, 2 * d):
        raise InvalidArgument("anchor has the wrong shape", shape=list(m.shape))
    j = standard_j(d)
    scale = max(1.0, float(np.max(np.abs(m))) ** 2)
    if np.max(np.abs(m.T @ j @ m - j)) > 1e-8 * scale:
        raise InvalidArgument("anchor matrix is not symplectic")
    return m


_BASES: dict = {}


def _bases(d: int):
    """Rows of ``E+^*`` and ``E-^*`` for the form ``i diag(-J, J)`` on ``C^{4d}``."""
    if d not in _BASES:
        j = standard_j(d)
        omega_t = scipy.linalg.block_diag(-j, j)
        w, v = np.linalg.eigh(1j * omega_t)
        _BASES[d] = (v[:, w > 0].conj().T, v[:, w < 0].conj().T)
    return _BASES[d]


def _unitary(frames: np.ndarray, d: int) -> np.ndarray:
    ap, am = _bases(d)
    p = ap @ frames
    q = am @ frames
    # W P = Q
    w = np.linalg.solve(np.swapaxes(p, -1, -2), np.swapaxes(q, -1, -2))
    return np.swapaxes(w, -1, -2)


def _perturb(frames: np.ndarray, eps: float, d: int) -> np.ndarray:
    if eps == 0:
        return frames
    rot = scipy.linalg.expm(-eps * standard_j(d))
    out = frames.copy()
    out[..., 2 * d:, :] = rot @ frames[..., 2 * d:, :]
    return out


def _omega_unitary(omega: complex, d: int) -> np.ndarray:
    eye = np.eye(2 * d)
    z = np.concatenate([eye, omega * eye]).astype(complex)
    return _unitary(z, d)


def _angles(u: np.ndarray) -> np.ndarray:
    return np.mod(np.angle(np.linalg.eigvals(u)), 2 * np.pi)


def _graph_frames(path: SymplecticPath, m: np.ndarray, mode: str) -> np.ndarray:
    """Orthonormal frames of ``Gr(gamma(t) M^{-1})`` (``mode="start"``) or of
    ``Gr(gamma(t) gamma(t_end)^{-1})`` (``mode="end"``) at every node."""
    d = path.dim_half
    n = 2 * d
    eye = np.eye(n)
    if mode == "start":
        steps = path.steps
        z0 = np.concatenate([m, path.anchor])
    else:
        steps = symplectic_inverse(path.steps[::-1])
        z0 = np.concatenate([eye, eye])
    big = np.zeros((steps.shape[0], 2 * n, 2 * n))
    big[:, :n, :n] = eye
    big[:, n:, n:] = steps
    z0, _ = np.linalg.qr(z0)
    frames, _ = blocked_products(big, z0, renorm="qr")
    if mode != "start":
        frames = frames[::-1]
    return frames


class CrossingCounter:
    """Signed intersection counts of one path with the ``omega``-hypersurface.

    Parameters
    ----------
    path : SymplecticPath
    M : array, optional
        Anchor matrix (identity by default).  With ``mode="end"`` the anchor
        is the end point ``gamma(t_end)`` and ``M`` is ignored.
    """

    def __init__(self, path: SymplecticPath, M=None, mode: str = "start", max_rounds: int = 10):
        d = path.dim_half
        self.d = d
        self.mode = mode
        self.M = np.eye(2 * d) if M is None else _check_symplectic(M, d)
        for _ in range(max_rounds):
            self.path = path
            self.frames = _graph_frames(path, self.M, mode)
            self._cache = {}
            worst = self._increments(EPS_LEVELS[0])[1]
            bad = worst > ANGLE_LIMIT
            if not np.any(bad):
                break
            path = path.subdivide(bad)
        else:
            raise NumericalIntegrityError("phase increments stay too large after subdivision")

    def _increments(self, eps):
        if eps not in self._cache:
            w = _unitary(_perturb(self.frames, eps, self.d), self.d)
            r = w[1:] @ np.conj(np.swapaxes(w[:-1], -1, -2))
            args = np.angle(np.linalg.eigvals(r))
            phi = np.concatenate([[0.0], np.cumsum(np.sum(args, axis=-1))])
            worst = np.max(np.abs(args), axis=-1) if args.size else np.zeros(0)
            self._cache[eps] = (w, worst, phi)
        w, worst, phi = self._cache[eps]
        return w, worst, phi

    def theta_sums(self, omega, eps, idx) -> np.ndarray:
        w = self._increments(eps)[0]
        wo = _omega_unitary(omega, self.d)
        u = np.conj(wo.T) @ w[idx]
        return np.sum(_angles(u), axis=-1)

    def counts(self, omega, eps, idx, base: int = 0) -> np.ndarray:
        """Counts over ``[t_base, t_idx]`` for each node index in ``idx``."""
        idx = np.atleast_1d(np.asarray(idx, dtype=int))
        phi = self._increments(eps)[2]
        s = self.theta_sums(omega, eps, np.concatenate([[base], idx]))
        raw = _SIGN * (phi[idx] - phi[base] - s[1:] + s[0]) / (2 * np.pi)
        out = np.rint(raw)
        if raw.size and np.max(np.abs(raw - out)) > 0.05:
            raise NumericalIntegrityError("non-integer crossing count",
                                          residual=float(np.max(np.abs(raw - out))))
        return out.astype(int)

    def stable_counts(self, omega, idx=None, base: int = 0):
        """Counts with the perturbation halved until two levels agree."""
        omega = _check_omega(omega)
        if idx is None:
            idx = [self.path.n_steps]
        prev = None
        for eps in EPS_LEVELS:
            cur = self.counts(omega, eps, idx, base)
            if prev is not None and np.array_equal(cur, prev):
                return cur, eps
            prev = cur
            last = eps
        raise IndexUnstable("index did not stabilise in epsilon",
                            values=[int(v) for v in np.atleast_1d(prev)], epsilon=last)

    def step_counts(self, omega, eps) -> np.ndarray:
        n = self.path.n_steps
        phi = self._increments(eps)[2]
        s = self.theta_sums(omega, eps, np.arange(n + 1))
        raw = _SIGN * (np.diff(phi) - np.diff(s)) / (2 * np.pi)
        return np.rint(raw).astype(int)

    # -- local refinement inside one step --------------------------------------

    def local_frame(self, i: int, s: float) -> np.ndarray:
        """Frame at param time ``s`` inside step ``i`` (re-integrated)."""
        p = self.path
        n = 2 * self.d
        z = self.frames[i]
        if self.mode == "start":
            phi = propagate_between(p.field, float(p.params[i]), float(s), p.control)
            return np.concatenate([z[:n], phi @ z[n:]])
        phi = propagate_between(p.field, float(s), float(p.params[i + 1]), p.control)
        z = self.frames[i + 1]
        return np.concatenate([z[:n], symplectic_inverse(phi) @ z[n:]])

    def local_count(self, omega, eps, i, s) -> int:
        z = _perturb(self.local_frame(i, s), eps, self.d)
        w0 = self._increments(eps)[0][i]
        w1 = _unitary(z, self.d)
        phi = float(np.sum(np.angle(np.linalg.eigvals(w1 @ np.conj(w0.T)))))
        wo = _omega_unitary(omega, self.d)
        s0 = np.sum(_angles(np.conj(wo.T) @ w0))
        s1 = np.sum(_angles(np.conj(wo.T) @ w1))
        return int(np.rint(_SIGN * (phi - s1 + s0) / (2 * np.pi)))

    def locate(self, omega, eps, i, lo=None, level=0) -> tuple:
        """First time after ``lo`` in step ``i`` where the count leaves ``level``.

        Returns the time and the count just after it.
        """
        lo = float(self.path.params[i]) if lo is None else lo
        hi = float(self.path.params[i + 1])
        top = self.local_count(omega, eps, i, hi)
        while hi - lo > TIME_TOL * max(1.0, abs(hi)):
            mid = 0.5 * (lo + hi)
            c = self.local_count(omega, eps, i, mid)
            if c != level:
                hi, top = mid, c
            else:
                lo = mid
        return hi, top

    def crossing_at(self, omega, eps, i, s, endpoint=False, expected=None) -> CrossingRecord:
        """Kernel and crossing form of the perturbed path at param time ``s``."""
        d, n = self.d, 2 * self.d
        p = self.path
        if s == p.params[i]:
            z = self.frames[i]
        elif i + 1 <= p.n_steps and s == p.params[i + 1]:
            z = self.frames[i + 1]
        else:
            z = self.local_frame(i, s)
        z = _perturb(z, eps, d)
        top, bot = z[:n], z[n:]
        _, sv, vh = np.linalg.svd(bot - omega * top)
        kdim = int(np.sum(sv <= KERNEL_TOL * max(1.0, sv[0])))
        t_label = float(p.direction * s)
        if kdim == 0:
            return CrossingRecord(t_label, 0, 0, True, endpoint, int(expected or 0))
        coeff = np.conj(vh[-kdim:]).T
        x = top @ coeff
        x, _ = np.linalg.qr(x)
        rot = scipy.linalg.expm(-eps * standard_j(d))
        b = rot @ p.field(s) @ rot.T
        form = np.conj(x.T) @ b @ x
        ev = np.linalg.eigvalsh(0.5 * (form + np.conj(form.T)))
        scale = max(1e-300, float(np.max(np.abs(ev))))
        pos = int(np.sum(ev > 1e-9 * scale))
        neg = int(np.sum(ev < -1e-9 * scale))
        sig = pos - neg
        degenerate = pos + neg < kdim
        if endpoint == "start":
            contribution = pos
        elif endpoint == "end":
            contribution = -neg
        else:
            contribution = sig
        if expected is not None and expected != contribution:
            degenerate = True
            contribution = int(expected)
        slope = _d_slope(p, self.M if self.mode == "start" else None, omega, s, eps)
        return CrossingRecord(t_label, kdim, sig, degenerate, bool(endpoint), contribution, slope)

    def crossings(self, omega, eps) -> list:
        """Crossing ledger of the perturbed path (``eps = 0`` adds endpoint entries)."""
        omega = _check_omega(omega)
        p = self.path
        records = []
        steps = self.step_counts(omega, eps)
        for i in np.nonzero(steps)[0]:
            i = int(i)
            lo, level = None, 0
            for _ in range(4 * self.d):
                s, c = self.locate(omega, eps, i, lo, level)
                records.append(self.crossing_at(omega, eps, i, s, expected=c - level))
                lo, level = s, c
                if level == steps[i]:
                    break
        # tangential touches: local minima of the distance of the spectrum of U to 1
        w = self._increments(eps)[0]
        wo = _omega_unitary(omega, self.d)
        ang = np.angle(np.linalg.eigvals(np.conj(wo.T) @ w))
        dist = np.min(np.abs(ang), axis=-1)
        for i in range(1, p.n_steps):
            if dist[i] <= dist[i - 1] and dist[i] <= dist[i + 1] and dist[i] < 1e-2 \
                    and steps[i - 1] == 0 and steps[i] == 0:
                rec = self._touch(omega, eps, i, wo)
                if rec is not None:
                    records.append(rec)
        if eps == 0:
            for pos, idx in (("start", 0), ("end", p.n_steps)):
                z = self.frames[idx]
                n = 2 * self.d
                sv = np.linalg.svd(z[n:] - omega * z[:n], compute_uv=False)
                if sv[-1] <= KERNEL_TOL * max(1.0, sv[0]):
                    i = idx if pos == "start" else idx - 1
                    records.append(self.crossing_at(omega, 0.0, i, float(p.params[idx]),
                                                    endpoint=pos))
        records.sort(key=lambda r: p.direction * r.time)
        return records

    def _touch(self, omega, eps, i, wo):
        p = self.path

        def f(s):
            j = i - 1 if s < p.params[i] else i
            z = _perturb(self.local_frame(j, s), eps, self.d)
            u = np.conj(wo.T) @ _unitary(z, self.d)
            return float(np.min(np.abs(np.angle(np.linalg.eigvals(u)))))

        res = minimize_scalar(f, bounds=(float(p.params[i - 1]), float(p.params[i + 1])),
                              method="bounded", options={"xatol": TIME_TOL})
        if res.fun > 1e-7:
            return None
        j = i - 1 if res.x < p.params[i] else i
        rec = self.crossing_at(omega, eps, j, float(res.x), expected=0)
        return rec


def _d_slope(path, m, omega, s, eps, h=1e-6) -> float:
    if m is None:
        return float("nan")
    lo = max(float(path.params[0]), s - h)
    hi = min(float(path.params[-1]), s + h)
    if hi <= lo:
        return float("nan")
    minv = np.linalg.inv(m)
    rot = scipy.linalg.expm(-eps * standard_j(path.dim_half))
    with np.errstate(all="ignore"):
        vals = [_normalized_det(rot @ path.refine(path.direction * x) @ minv, omega).real
                for x in (lo, hi)]
    return float((vals[1] - vals[0]) / (hi - lo)) * path.direction


def _paired_det(x, omega):
    """``conj(omega)^d det(x - omega)`` from the reciprocal pairing of the spectrum of ``x``.

    On Sp(2d) the eigenvalues split into ``mu_j`` and ``1 / mu_j``, and each
    pair contributes ``2 Re omega - mu_j - 1 / mu_j``.  The small partners
    are never used, so exponential growth does not cancel.  Returns None
    when the computed spectrum is not paired to working accuracy.
    """
    n = x.shape[-1]
    d = n // 2
    ev = np.linalg.eigvals(x)
    ev = ev[np.argsort(-np.abs(ev), kind="stable")]
    big, small = ev[:d], ev[d:]
    scale = max(1.0, float(np.linalg.norm(x, 2)))
    tol = 1e-12 * scale + 1e-9
    left = list(small)
    for mu in big:
        k = int(np.argmin([abs(s - 1 / mu) for s in left]))
        if abs(left[k] - 1 / mu) > tol:
            return None
        left.pop(k)
    return np.prod(2 * omega.real - big - 1 / big)


def _normalized_det(x, omega):
    """``conj(omega)^d det(x - omega I)``, switching to the paired evaluation where the
    LU determinant has lost its realness to cancellation (large ``|x|``)."""
    omega = complex(omega)
    d = x.shape[-1] // 2
    vals = np.conj(omega) ** d * np.linalg.det(x - omega * np.eye(x.shape[-1]))
    vals = np.atleast_1d(vals)
    flat = x.reshape(-1, *x.shape[-2:])
    for k in np.flatnonzero(np.abs(vals.imag) > 1e-9 * np.maximum(1.0, np.abs(vals))):
        alt = _paired_det(flat[k], omega)
        if alt is not None:
            vals[k] = alt
    return vals.reshape(x.shape[:-2])


def det_function(path: SymplecticPath, M=None, omega=1.0) -> np.ndarray:
    """Samples of ``D(t) = Re[conj(omega)^d det(gamma(t) M^{-1} - omega I)]`` at the nodes.

    The imaginary part vanishes on the symplectic group; a value above
    ``1e-9 * max(1, |D|)`` signals loss of symplecticity upstream.  Paths
    whose entries overflow double precision raise PropagationFailure.
    """
    omega = _check_omega(omega)
    d = path.dim_half
    if np.max(path.log_norms) > 300:
        raise PropagationFailure("determinant samples overflow double precision",
                                 log_norm=float(np.max(path.log_norms)))
    m = np.eye(2 * d) if M is None else _check_symplectic(M, d)
    x = path.matrices @ np.linalg.inv(m)
    vals = _normalized_det(x, omega)
    bad = np.abs(vals.imag) > 1e-9 * np.maximum(1.0, np.abs(vals))
    if np.any(bad):
        k = int(np.argmax(bad))
        raise NumericalIntegrityError("normalised determinant is not real",
                                      time=float(path.times[k]), imag=float(vals.imag[k]))
    return vals.real


def find_crossings(path: SymplecticPath, M=None, omega=1.0, epsilon: float = 0.0) -> list:
    if epsilon < 0:
        raise InvalidArgument("epsilon must be non-negative")
    return CrossingCounter(path, M).crossings(_check_omega(omega), float(epsilon))


def iota(M, path: SymplecticPath, omega=1.0, ledger: bool = True) -> IndexValue:
    """``iota(omega M, gamma)`` over the whole path."""
    omega = _check_omega(omega)
    counter = CrossingCounter(path, M)
    value, eps = counter.stable_counts(omega)
    crossings = counter.crossings(omega, eps) if ledger else []
    return IndexValue(int(value[0]), omega, counter.M, crossings, eps)


def i_omega(path: SymplecticPath, omega=1.0, ledger: bool = True) -> IndexValue:
    """The ``omega``-index of a path starting at the identity.

    Normalised so that ``i_1(gamma) + d = iota(I, gamma)``; for ``omega != 1``
    it equals ``iota(omega I, gamma)``.
    """
    d = path.dim_half
    if np.max(np.abs(path.anchor - np.eye(2 * d))) > 1e-12:
        raise PreconditionError("i_omega needs a path starting at the identity")
    v = iota(None, path, omega, ledger)
    corr = d if abs(v.omega - 1.0) < 1e-14 else 0
    return IndexValue(v.value - corr, v.omega, v.anchor, v.crossings, v.epsilon)


def positive_path_oracle(path: SymplecticPath, M=None, omega=1.0) -> int:
    """Sum of ``dim ker(gamma(t) M^{-1} - omega)`` over ``t`` in ``[a, b)``.

    Valid for positive fields only.  Crossings are found as zeros of the
    smallest singular value, independently of the counting engine.
    """
    omega = _check_omega(omega)
    d = path.dim_half
    m = np.eye(2 * d) if M is None else _check_symplectic(M, d)
    p = path.params
    mids = 0.5 * (p[1:] + p[:-1])
    test = path.field.batch(np.concatenate([p, mids]))
    if np.min(np.linalg.eigvalsh(test)) < 1e-9:
        raise PreconditionError("field is not positive definite on the path")
    minv = np.linalg.inv(m)
    eye = np.eye(2 * d)

    def x_at(s):
        return path.refine(path.direction * s) @ minv

    def smin(s):
        return float(np.linalg.svd(x_at(s) - omega * eye, compute_uv=False)[-1])

    def kdim(x):
        sv = np.linalg.svd(x - omega * eye, compute_uv=False)
        return int(np.sum(sv <= 1e-7 * max(1.0, float(np.max(np.abs(x))))))

    # sample at nodes and midpoints
    grid = np.sort(np.concatenate([p, mids]))
    xs = path.matrices @ minv
    gx = np.empty((grid.size, 2 * d, 2 * d))
    gx[0::2] = xs
    for k, s in enumerate(mids):
        gx[2 * k + 1] = path.local(k, s) @ path.matrices[k] @ minv
    sig = np.linalg.svd(gx - omega * eye, compute_uv=False)[:, -1]
    found = []
    start_dim = kdim(xs[0])
    if start_dim:
        found.append((grid[0], start_dim))
    for k in range(1, grid.size - 1):
        if sig[k] <= sig[k - 1] and sig[k] <= sig[k + 1]:
            res = minimize_scalar(smin, bounds=(grid[k - 1], grid[k + 1]), method="bounded",
                                  options={"xatol": 1e-13})
            s_star = float(res.x)
            kd = kdim(x_at(s_star))
            if kd and s_star < grid[-1] - 1e-9 and all(abs(s_star - f) > 1e-7 for f, _ in found):
                found.append((s_star, kd))
    return int(sum(k for _, k in found))


def path_additivity_check(path: SymplecticPath, split: float, M=None, omega=1.0) -> bool:
    """``iota`` over the whole path equals the sum over the two pieces.

    The right piece is restarted at the identity with the anchor transported
    to ``M gamma(c)^{-1}``.
    """
    from .propagator import compose_restart
    omega = _check_omega(omega)
    d = path.dim_half
    m = np.eye(2 * d) if M is None else _check_symplectic(M, d)
    whole = iota(m, path, omega, ledger=False).value
    sp = path.direction * split
    if abs(sp - path.params[0]) < 1e-12:
        return whole == 0 + whole
    p2 = path.with_nodes([split])
    c = p2.node_index(split)
    left = iota(m, p2.segment(0, c, p2.anchor), omega, ledger=False).value
    gc = p2.matrices[c]
    right_path = compose_restart(p2, split)
    transported = m @ symplectic_inverse(gc)
    right = iota(transported, right_path, omega, ledger=False).value
    return whole == left + right


def write_ledger(records, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time", "kernel_dim", "signature", "d_slope"])
        for r in records:
            w.writerow([repr(r.time), r.kernel_dim, r.signature, repr(r.d_slope)])
