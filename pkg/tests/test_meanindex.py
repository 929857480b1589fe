import math

import numpy as np
import pytest

from symplindex import meanindex as MI
from symplindex import systems as S
from symplindex.errors import InsufficientHorizon, InvalidArgument, RangeError, StructureMismatch
from symplindex.maslov import CrossingCounter
from symplindex.propagator import fundamental_solution

INV_PI = 1 / math.pi


def test_fgh_zero_field():
    assert MI.fgh(S.catalog("constant_k", k=0.0), 3, 64) == (0, 0, 0.0)


def test_fgh_unit_rotation():
    f, g, h = MI.fgh(S.catalog("constant_k", k=1.0), 10, 256)
    assert abs(h / 10 - INV_PI) <= 0.15
    assert f >= h >= g >= f - 2


def test_fgh_random_sandwich():
    rng = np.random.default_rng(21)
    for d in (1, 2):
        fld = S.random_trig_field(rng, d, 1.5)
        for n in (1, 4, 9):
            f, g, h = MI.fgh(fld, n, 64)
            assert f - g <= 2 * d
            assert f >= h - 1e-12 and h >= g - 1e-12


def test_fgh_arguments():
    with pytest.raises(InvalidArgument):
        MI.fgh(S.catalog("hyperbolic"), 0, 64)
    with pytest.raises(InvalidArgument):
        MI.fgh(S.catalog("hyperbolic"), 2, 8)


def test_periodic_mean_index_examples():
    assert MI.mean_index_periodic(S.catalog("constant_k", k=0.0)).value == 0.0
    rot = MI.mean_index_periodic(S.catalog("rotation_k", k=1.0))
    assert rot.value == pytest.approx(2.0, abs=1e-9)
    assert rot.per_time == pytest.approx(INV_PI, abs=1e-9)
    assert MI.mean_index_periodic(S.catalog("hyperbolic")).value == 0.0
    with pytest.raises(StructureMismatch):
        MI.mean_index_periodic(S.catalog("example_45"))


def test_quadrature_agrees_with_arcs():
    fld = S.catalog("periodic_demo", eps=0.7)
    arcs = MI.mean_index_periodic(fld, method="arcs")
    quad = MI.mean_index_periodic(fld, 256, method="quadrature")
    assert abs(arcs.value - quad.value) <= quad.quadrature_bound


def test_periodic_mean_index_matches_iterated_limit():
    # i_1(gamma, [0, kT]) / k tends to the per-period mean index
    fld = S.catalog("periodic_demo", eps=0.7)
    per = MI.mean_index_periodic(fld).value
    T = fld.period
    k = 60
    p = fundamental_solution(fld, (0.0, k * T))
    c = CrossingCounter(p)
    v = c.stable_counts(1.0)[0][0] - 1
    assert abs(v / k - per) <= 2 * 1 / k + 1e-9


def test_direct_constant_field():
    est = MI.mean_index_interval(S.catalog("constant_k", k=1.0), horizon=500)
    assert abs(est.lower - INV_PI) <= 0.02 and abs(est.upper - INV_PI) <= 0.02
    assert est.residual_kind == "heuristic"
    assert est.lower <= est.upper + est.residual_bound


def test_direct_needs_horizon():
    with pytest.raises(InsufficientHorizon):
        MI.mean_index_interval(S.catalog("hyperbolic"), horizon=5)
    with pytest.raises(InvalidArgument):
        MI.mean_index_interval(S.catalog("hyperbolic"), scheme="weird")


def test_example_45_interval_is_plus_minus_one_over_pi():
    est = MI.mean_index_interval(S.catalog("example_45"), horizon=2000)
    assert abs(est.lower + INV_PI) <= 0.03
    assert abs(est.upper - INV_PI) <= 0.03


def test_bounds_on_random_fields():
    rng = np.random.default_rng(22)
    for d in (1, 2):
        fld = S.random_trig_field(rng, d, 2.0)
        est = MI.mean_index_interval(fld, horizon=200, tail_tol=0.05)
        lim = d * fld.bound / math.pi + est.residual_bound
        assert -lim <= est.lower <= est.upper <= lim


def test_dyadic_table_sandwich_and_monotone_f():
    rng = np.random.default_rng(23)
    fld = S.random_trig_field(rng, 1, 1.5)
    t3 = MI.dyadic_table(fld, 3, 8)
    t4 = MI.dyadic_table(fld, 4, 4)
    assert t3.sandwich_ok(1) and t4.sandwich_ok(1)
    # subadditivity of f: F_{k+1, n} <= 2 F_{k, 2n}
    assert t4.F[-1] <= 2 * t3.F[-1] + 1e-12
    # superadditivity of g
    assert t4.G[-1] >= 2 * t3.G[-1] - 1e-12


def test_dyadic_scheme_constant_field():
    est = MI.mean_index_interval(S.catalog("constant_k", k=1.0), scheme="dyadic", k=5, n=8)
    assert est.residual_bound == pytest.approx(2 / 32)
    assert est.lower - est.residual_bound <= INV_PI <= est.upper + est.residual_bound
    with pytest.raises(InvalidArgument):
        MI.mean_index_interval(S.catalog("constant_k", k=1.0), scheme="dyadic", k=2, n=2)


def test_sub_and_superadditivity_exact():
    rng = np.random.default_rng(24)
    for _ in range(3):
        fld = S.random_trig_field(rng, 1 + int(rng.integers(0, 2)), 1.5)
        p = fundamental_solution(fld, (0.0, 16.0), nodes=np.arange(17.0))
        f = {}
        g = {}
        for a in range(0, 16):
            for b in range(a + 1, min(a + 9, 17)):
                win = MI._Window(p.segment(p.node_index(a), p.node_index(b)))
                f[a, b], g[a, b] = win.f(), win.g()
        for (a, b), fab in f.items():
            for c in range(b + 1, min(a + 9, 17)):
                assert f[a, c] <= fab + f[b, c]
                assert g[a, c] >= g[a, b] + g[b, c]


def test_forward_backward_agree_on_periodic_field():
    fld = S.catalog("periodic_demo", eps=0.7)
    fw = MI.mean_index_interval(fld, "forward", horizon=300, tail_tol=0.05)
    bw = MI.mean_index_interval(fld, "backward", horizon=300, tail_tol=0.05)
    tol = fw.residual_bound + bw.residual_bound
    assert abs(fw.lower - bw.lower) <= tol and abs(fw.upper - bw.upper) <= tol


def test_monotonicity_in_the_field():
    rng = np.random.default_rng(25)
    fld = S.random_trig_field(rng, 1, 1.0)
    a = MI.mean_index_interval(fld, horizon=300, tail_tol=0.05)
    b = MI.mean_index_interval(S.add_scalar(fld, 0.2), horizon=300, tail_tol=0.05)
    res = a.residual_bound + b.residual_bound
    assert b.upper >= a.upper - res and b.lower >= a.lower - res


def test_witnesses():
    const = S.catalog("constant_k", k=1.0)
    w = MI.witness_subsequence(const, INV_PI, horizon=200)
    assert w.success and list(w) == sorted(w)
    assert all(e2 < e1 for e1, e2 in zip(w.errors, w.errors[1:]))
    ex = S.catalog("example_45")
    est = MI.mean_index_interval(ex, horizon=2000)
    assert MI.witness_subsequence(ex, 0.0, horizon=2000, estimate=est).success
    assert MI.witness_subsequence(ex, -0.25, horizon=2000, estimate=est).success
    with pytest.raises(RangeError):
        MI.witness_subsequence(ex, 2.0, horizon=2000, estimate=est)


def test_witness_with_step_u():
    w = MI.witness_subsequence(S.catalog("constant_k", k=1.0), INV_PI, u=2.5, horizon=300)
    assert w.success
    assert w.times[-1] == pytest.approx(2.5 * w[-1])


def test_translation_invariance():
    fld = S.catalog("periodic_demo", eps=0.7)
    reps = MI.translation_invariance_check(fld, [0.0, fld.period, 1.7], horizon=200, tail_tol=0.05)
    assert reps[0].difference == 0.0
    assert reps[1].difference <= 1e-12
    assert all(r.ok for r in reps)
