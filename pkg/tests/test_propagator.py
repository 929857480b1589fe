import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st

from symplindex import systems as S
from symplindex.errors import DomainError, InvalidArgument, StructureMismatch
from symplindex.propagator import (Control, compose_restart, fundamental_solution, monodromy,
                                   propagate_between, symplectic_inverse)

J = S.standard_j(1)


def test_zero_field_gives_identity():
    p = fundamental_solution(S.catalog("constant_k", k=0.0), (0.0, 5.0))
    assert np.max(np.abs(p.matrices - np.eye(2))) == 0.0


def test_rotation_quarter_turn():
    p = fundamental_solution(S.catalog("rotation_k", k=1.0), (0.0, math.pi / 2))
    assert np.allclose(p.matrices[-1], J, atol=1e-8)


def test_hyperbolic_closed_form():
    p = fundamental_solution(S.catalog("hyperbolic"), (0.0, 1.0))
    want = math.cosh(1) * np.eye(2) + math.sinh(1) * np.array([[0.0, 1.0], [1.0, 0.0]])
    assert np.allclose(p.matrices[-1], want, atol=1e-8)


def test_against_matrix_exponential_d2():
    rng = np.random.default_rng(0)
    a = rng.standard_normal((4, 4))
    b = 0.5 * (a + a.T)
    f = S.constant(b)
    p = fundamental_solution(f, (0.0, 3.0))
    want = scipy.linalg.expm(3.0 * S.standard_j(2) @ b)
    assert np.allclose(p.matrices[-1], want, rtol=1e-8, atol=1e-8)


def test_anchor_is_exact_and_grid_dense():
    rng = np.random.default_rng(1)
    f = S.random_trig_field(rng, 2, 2.0)
    anchor = scipy.linalg.expm(S.standard_j(2) @ np.diag([0.3, -0.2, 0.1, 0.5]))
    p = fundamental_solution(f, (0.0, 4.0), anchor=anchor)
    assert np.array_equal(p.matrices[0], anchor)
    assert np.max(np.linalg.norm(p.steps - np.eye(4), 2, axis=(-2, -1))) <= 0.5


def test_backward_path_is_time_reversed_solution():
    f = S.catalog("periodic_demo")
    fwd = fundamental_solution(f, (-3.0, 0.0))
    back = fundamental_solution(f, (0.0, -3.0))
    assert back.times[0] == 0.0 and back.times[-1] == -3.0
    # gamma(-3) for the solution normalised at 0 is the inverse of the forward propagator
    assert np.allclose(back.matrices[-1], np.linalg.inv(fwd.matrices[-1]), atol=1e-8)


def test_monodromy_examples():
    assert np.allclose(monodromy(S.catalog("constant_k", k=0.0, period=2.0)), np.eye(2))
    assert np.allclose(monodromy(S.catalog("rotation_k", k=1.0)), np.eye(2), atol=1e-8)
    mu = np.sort(np.linalg.eigvals(monodromy(S.catalog("hyperbolic"))).real)
    assert np.allclose(mu, [math.exp(-1), math.e], atol=1e-6)
    with pytest.raises(StructureMismatch):
        monodromy(S.catalog("example_45"))


def test_compose_restart():
    f = S.catalog("rotation_k", k=1.0)
    p = fundamental_solution(f, (0.0, 3.0))
    r = compose_restart(p, math.pi / 4)
    assert np.allclose(r.refine(math.pi / 4), scipy.linalg.expm(J * math.pi / 4), atol=1e-8)
    same = compose_restart(p, 0.0)
    assert np.allclose(same.matrices, p.matrices)
    with pytest.raises(DomainError):
        compose_restart(p, 4.0)


def test_cocycle_property():
    rng = np.random.default_rng(2)
    f = S.random_trig_field(rng, 1, 1.5)
    p = fundamental_solution(f, (0.0, 6.0))
    a = compose_restart(compose_restart(p, 1.1), 2.3)
    b = compose_restart(p, 3.4)
    assert np.allclose(a.refine(1.5), b.refine(1.5), atol=1e-8)
    # gamma(t) = gamma(t) gamma(s)^{-1} gamma(s)
    r = compose_restart(p, 2.0)
    assert np.allclose(r.refine(2.5) @ p.refine(2.0), p.refine(4.5), atol=1e-7)


def test_refine_matches_fine_grid():
    f = S.catalog("example_45")
    p = fundamental_solution(f, (0.0, 8.0))
    for t in (0.123, 3.3333, 7.99):
        assert np.allclose(p.refine(t), S.example_45_solution(t), rtol=1e-7, atol=1e-7)
    with pytest.raises(DomainError):
        p.refine(9.0)


def test_symplecticity_and_determinant():
    rng = np.random.default_rng(4)
    for d in (1, 2):
        p = fundamental_solution(S.random_trig_field(rng, d, 2.0), (0.0, 20.0))
        assert p.sympl_residual <= 1e-8
        dets = np.linalg.det(p.matrices)
        assert np.max(np.abs(dets - 1)) <= 1e-8


def test_gronwall_growth_bound():
    rng = np.random.default_rng(5)
    f = S.random_trig_field(rng, 2, 1.0)
    p = fundamental_solution(f, (0.0, 10.0))
    norms = np.linalg.norm(p.matrices, 2, axis=(-2, -1))
    assert np.all(norms <= np.exp(f.bound * p.times) * (1 + 1e-8))


def test_continuity_in_the_field():
    # |gamma_1(1) - gamma_2(1)| <= e^{K} e^{K} delta, checked with margin 2
    rng = np.random.default_rng(6)
    f = S.random_trig_field(rng, 1, 1.0)
    for delta in (0.1, 0.01):
        g = S.add_scalar(f, delta)
        a = fundamental_solution(f, (0.0, 1.0)).matrices[-1]
        b = fundamental_solution(g, (0.0, 1.0)).matrices[-1]
        bound = math.exp(f.bound) * math.exp(g.bound) * delta
        assert 2 * np.linalg.norm(a - b, 2) <= bound


def test_long_unstable_path_stays_usable():
    p = fundamental_solution(S.catalog("hyperbolic"), (0.0, 2000.0))
    # largest entry is cosh(2000)
    assert p.log_norms[-1] == pytest.approx(2000.0 - math.log(2.0), abs=1e-6)
    assert p.sympl_residual <= 1e-8
    assert p.step_residual <= 1e-12


def test_invalid_interval():
    with pytest.raises(InvalidArgument):
        fundamental_solution(S.catalog("hyperbolic"), (1.0, 1.0))
    with pytest.raises(InvalidArgument):
        Control(rel_tol=0.0)


def test_symplectic_inverse():
    m = scipy.linalg.expm(S.standard_j(2) @ np.diag([1.0, 0.5, -0.3, 2.0]))
    assert np.allclose(symplectic_inverse(m) @ m, np.eye(4))


def test_csv_dump(tmp_path):
    p = fundamental_solution(S.catalog("rotation_k", k=1.0), (0.0, 1.0))
    out = tmp_path / "path.csv"
    p.to_csv(out)
    rows = out.read_text().splitlines()
    assert rows[0].split(",")[0] == "t" and len(rows) == p.times.size + 1


@settings(max_examples=15, deadline=None)
@given(st.floats(0.1, 2.0), st.floats(-3.0, 3.0), st.floats(0.2, 4.0))
def test_propagate_between_is_a_flow(k, s0, h):
    f = S.catalog("periodic_demo", eps=k / 2)
    mid = s0 + h / 3
    direct = propagate_between(f, s0, s0 + h)
    split = propagate_between(f, mid, s0 + h) @ propagate_between(f, s0, mid)
    assert np.allclose(direct, split, atol=1e-8)
