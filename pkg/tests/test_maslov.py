import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st

from symplindex import maslov as M
from symplindex import systems as S
from symplindex.errors import InvalidArgument, PreconditionError, PropagationFailure
from symplindex.propagator import fundamental_solution


def rotation_path(t1, k=1.0, t0=0.0):
    return fundamental_solution(S.catalog("rotation_k", k=k), (t0, t1))


def random_symplectic(rng, d, scale=0.7):
    a = rng.standard_normal((2 * d, 2 * d))
    return scipy.linalg.expm(scale * S.standard_j(d) @ (0.5 * (a + a.T)))


# -- det_function ------------------------------------------------------------


def test_det_function_identity_path_is_zero():
    p = fundamental_solution(S.catalog("constant_k", k=0.0), (0.0, 1.0))
    assert np.all(M.det_function(p) == 0.0)


def test_det_function_rotation():
    p = rotation_path(7.0)
    t = p.times
    assert np.allclose(M.det_function(p), 2 - 2 * np.cos(t), atol=1e-9)
    di = M.det_function(p, omega=1j)
    # conj(w) det(e^{Jt} - w) = 2 Re w - 2 cos t; for w = i zero at t = pi/2
    assert np.allclose(di, -2 * np.cos(t), atol=1e-9)


def test_det_function_stays_real_on_growing_paths():
    p = fundamental_solution(S.catalog("hyperbolic"), (0.0, 20.0))
    w = np.exp(0.7j)
    # d = 1: conj(w) det(X - w) = 2 Re w - tr X
    want = 2 * w.real - np.trace(p.matrices, axis1=-2, axis2=-1)
    assert np.allclose(M.det_function(p, omega=w), want, rtol=1e-7)
    with pytest.raises(PropagationFailure):
        M.det_function(fundamental_solution(S.catalog("hyperbolic"), (0.0, 2000.0)))


def test_det_function_rejects_bad_omega():
    with pytest.raises(InvalidArgument):
        M.det_function(rotation_path(1.0), omega=0.5)


# -- crossings ---------------------------------------------------------------


def test_no_crossings_for_identity_path():
    p = fundamental_solution(S.catalog("constant_k", k=0.0), (0.0, 1.0))
    assert M.find_crossings(p, None, -1.0, 0.0) == []


def test_single_crossing_at_quarter_turn():
    rec = M.find_crossings(rotation_path(3.0), None, 1j, 0.0)
    assert len(rec) == 1
    assert rec[0].time == pytest.approx(math.pi / 2, abs=1e-9)
    assert rec[0].kernel_dim == 1 and rec[0].signature == 1


def test_full_kernel_crossing():
    rec = M.find_crossings(rotation_path(7.0), None, 1.0, 0.0)
    interior = [r for r in rec if not r.endpoint]
    assert len(interior) == 1
    assert interior[0].time == pytest.approx(2 * math.pi, abs=1e-9)
    assert interior[0].kernel_dim == 2 and interior[0].signature == 2
    start = [r for r in rec if r.endpoint]
    assert start and start[0].time == 0.0 and start[0].contribution == 2


def test_crossing_record_invariants_random():
    rng = np.random.default_rng(11)
    for d in (1, 2):
        f = S.random_trig_field(rng, d, 1.5)
        p = fundamental_solution(f, (0.0, 8.0))
        for r in M.find_crossings(p, None, np.exp(0.4j), 1e-3):
            assert 1 <= r.kernel_dim <= 2 * d
            assert abs(r.signature) <= r.kernel_dim
            if not r.degenerate:
                assert (r.kernel_dim - r.signature) % 2 == 0


def test_ledger_csv(tmp_path):
    v = M.iota(None, rotation_path(10.0), 1.0)
    out = tmp_path / "ledger.csv"
    M.write_ledger(v.crossings, out)
    assert out.read_text().splitlines()[0] == "time,kernel_dim,signature,d_slope"


# -- iota / i_omega ------------------------------------------------------------


def test_iota_examples():
    const = fundamental_solution(S.catalog("constant_k", k=0.0), (0.0, 1.0))
    assert M.iota(None, const, -1.0).value == 0
    v = M.iota(None, rotation_path(10.0), 1.0)
    assert v.value - 1 == 3
    assert sum(c.contribution for c in v.crossings) == v.value


def test_i_omega_examples():
    const = fundamental_solution(S.catalog("constant_k", k=0.0), (0.0, 1.0))
    assert M.i_omega(const, 1.0).value == -1
    const2 = fundamental_solution(S.catalog("constant_k", k=0.0, d=2), (0.0, 1.0))
    assert M.i_omega(const2, 1.0).value == -2
    assert M.i_omega(rotation_path(10.0), 1.0).value == 3
    full = fundamental_solution(S.catalog("rotation_k", k=2 * math.pi), (0.0, 1.0))
    assert M.i_omega(full, -1.0).value == 2


def test_i_omega_needs_identity_start():
    p = fundamental_solution(S.catalog("hyperbolic"), (0.0, 1.0), anchor=2 * np.eye(2) @ np.diag([1, 0.5]))
    with pytest.raises(PreconditionError):
        M.i_omega(p)


@pytest.mark.parametrize("l", [3.0, 10.0, 25.0, 100.0])
def test_rotation_formula(l):
    assert M.i_omega(rotation_path(l), 1.0, ledger=False).value == 2 * math.floor(l / (2 * math.pi)) + 1


def test_negative_rotation_counts_end_point():
    # e^{-Jt} on [0, 2 pi]: start excluded, end counted with -2
    p = rotation_path(2 * math.pi, k=-1.0)
    assert M.iota(None, p, 1.0, ledger=False).value == -2


def test_index_of_higher_frequency_rotation():
    # I(K I) = d K / pi: e^{2 J t} on [0, 10] passes 1 at t = k pi, k = 0..3
    p = rotation_path(10.0, k=2.0)
    assert M.iota(None, p, 1.0, ledger=False).value == 8


# -- oracles -----------------------------------------------------------------


def test_positive_path_oracle_examples():
    assert M.positive_path_oracle(rotation_path(4 * math.pi - 1e-3), None, 1.0) == 4
    assert M.positive_path_oracle(rotation_path(3.0), None, 1j) == 1
    assert M.positive_path_oracle(rotation_path(1.0), None, -1.0) == 0
    with pytest.raises(PreconditionError):
        M.positive_path_oracle(fundamental_solution(S.catalog("hyperbolic"), (0.0, 1.0)))


def test_oracle_agreement_random_positive():
    rng = np.random.default_rng(12)
    for j in range(8):
        d = 1 + j % 2
        f = S.random_positive_field(rng, d, 2.0)
        p = fundamental_solution(f, (0.0, 5.0))
        w = np.exp(1j * rng.uniform(0, 2 * math.pi)) if j % 2 else 1.0
        m = None if j < 4 else random_symplectic(rng, d)
        v = M.iota(m, p, w)
        assert v.value == M.positive_path_oracle(p, m, w)
        assert v.value == sum(c.contribution for c in v.crossings)


# -- structural properties ---------------------------------------------------


def test_path_additivity():
    p = rotation_path(10.0)
    assert M.path_additivity_check(p, 0.0)
    assert M.path_additivity_check(p, 5.0)
    assert M.path_additivity_check(p, 2 * math.pi)
    rng = np.random.default_rng(13)
    q = fundamental_solution(S.random_trig_field(rng, 1, 1.0), (0.0, 8.0))
    assert M.path_additivity_check(q, 3.0)
    assert M.path_additivity_check(q, 3.0, random_symplectic(rng, 1), np.exp(1.1j))


def test_anchor_comparison_and_finite_difference():
    rng = np.random.default_rng(14)
    for d in (1, 2):
        f = S.random_trig_field(rng, d, 1.5)
        p = fundamental_solution(f, (0.0, 6.0))
        top = M.iota(None, p, 1.0, ledger=False).value
        bottom = M.iota(p.matrices[-1], p, 1.0, ledger=False).value
        vals = [M.iota(random_symplectic(rng, d), p, 1.0, ledger=False).value for _ in range(20)]
        assert all(bottom <= v <= top for v in vals)
        assert max(vals + [top, bottom]) - min(vals + [top, bottom]) <= 2 * d


def test_growth_bound():
    rng = np.random.default_rng(15)
    for d in (1, 2):
        f = S.random_trig_field(rng, d, 2.0)
        for a, b in ((0.0, 5.0), (3.0, 17.0)):
            p = fundamental_solution(f, (a, b))
            v = M.iota(None, p, 1.0, ledger=False).value
            assert abs(v) <= d * f.bound * (b - a) / math.pi + 4 * d


def test_grid_refinement_and_time_rescaling_invariance():
    rng = np.random.default_rng(16)
    f = S.random_trig_field(rng, 2, 1.5)
    p = fundamental_solution(f, (0.0, 9.0))
    fine = p.subdivide(np.ones(p.n_steps, dtype=bool))
    assert M.iota(None, p, 1.0, ledger=False).value == M.iota(None, fine, 1.0, ledger=False).value
    # B_c(t) = c B(c t) on [0, 9 / c] has the same fundamental solution reparametrised
    c = 1.5
    g = S.SymmetricField(2, c * f.bound, lambda t: c * f.batch(c * np.asarray(t)), check=False)
    q = fundamental_solution(g, (0.0, 9.0 / c))
    assert M.iota(None, q, 1.0, ledger=False).value == M.iota(None, p, 1.0, ledger=False).value


def test_i1_plus_d_equals_iota():
    rng = np.random.default_rng(17)
    for d in (1, 2):
        p = fundamental_solution(S.random_trig_field(rng, d, 1.0), (0.0, 7.0))
        assert M.i_omega(p, 1.0, ledger=False).value + d == M.iota(None, p, 1.0, ledger=False).value


def test_backward_path_index_is_negated_reverse():
    # the backward path of B is the forward path of -B(-t); for B = I that is e^{-Jt}
    p = fundamental_solution(S.catalog("rotation_k", k=1.0), (0.0, -10.0))
    assert M.iota(None, p, 1.0, ledger=False).value == -2


@settings(max_examples=25, deadline=None)
@given(st.floats(0.3, 3.0), st.floats(0.5, 12.0), st.floats(0.05, 6.2))
def test_rotation_counts_property(k, l, theta):
    # e^{kJt} meets e^{i theta} (and its conjugate) at t = (theta + 2 pi m) / k etc.
    p = rotation_path(l, k=k)
    got = M.iota(None, p, np.exp(1j * theta), ledger=False).value
    times = np.concatenate([(theta + 2 * math.pi * np.arange(20)) / k,
                            (2 * math.pi - theta + 2 * math.pi * np.arange(20)) / k])
    hits = times[times < l]
    if np.min(np.abs(times - l)) < 1e-6:
        return
    assert got == hits.size
