import math

import numpy as np
import pytest

from symplindex import systems as S
from symplindex.errors import InvalidArgument, PreconditionError, StructureMismatch
from symplindex.fredholm import (FREDHOLM, NOT_FREDHOLM, dichotomy_inequality_check,
                                 fredholm_verdict, lambda_sweep, monodromy_spectrum_test,
                                 spectral_projection)


def test_spectrum_test_examples():
    hyp = monodromy_spectrum_test(S.catalog("hyperbolic"))
    assert hyp.verdict == FREDHOLM
    assert hyp.unit_circle_distance == pytest.approx(1 - math.exp(-1), abs=1e-6)
    assert hyp.pairing_error <= 1e-8
    assert monodromy_spectrum_test(S.catalog("rotation_k", k=1.0)).verdict == NOT_FREDHOLM
    assert monodromy_spectrum_test(S.catalog("constant_k", k=0.0)).verdict == NOT_FREDHOLM
    with pytest.raises(StructureMismatch):
        monodromy_spectrum_test(S.catalog("example_45"))
    with pytest.raises(InvalidArgument):
        monodromy_spectrum_test(S.catalog("hyperbolic"), tol_lo=1e-3, tol_hi=1e-4)


def test_sweep_constant_for_hyperbolic_field():
    sw = lambda_sweep(S.catalog("hyperbolic"), 0.1, 5)
    assert sw.constant
    assert np.all(sw.values == sw.values[0])


def test_sweep_strictly_increasing_for_degenerate_fields():
    for f in (S.catalog("rotation_k", k=1.0), S.catalog("constant_k", k=0.0, period=1.0)):
        sw = lambda_sweep(f, 0.1, 5)
        assert not sw.constant and sw.strictly_increasing


def test_sweep_arguments():
    with pytest.raises(InvalidArgument):
        lambda_sweep(S.catalog("hyperbolic"), 0.1, 4)
    with pytest.raises(InvalidArgument):
        lambda_sweep(S.catalog("hyperbolic"), 5.0, 5)


def test_verdicts_agree():
    for name in ("hyperbolic", "rotation_k", "asymptotic_blend"):
        rep = fredholm_verdict(S.catalog(name))
        assert rep.agree
    assert fredholm_verdict(S.catalog("hyperbolic")).verdict == FREDHOLM
    with pytest.raises(StructureMismatch):
        fredholm_verdict(S.catalog("example_45"))


def test_spectral_projection():
    m = np.diag([2.0, 0.5])
    assert np.allclose(spectral_projection(m), np.diag([0.0, 1.0]))
    with pytest.raises(PreconditionError):
        spectral_projection(np.eye(2))


def test_dichotomy_hyperbolic():
    rep = dichotomy_inequality_check(S.catalog("hyperbolic"), samples=4000)
    assert rep.holds and rep.beta == pytest.approx(1.0, abs=0.05)
    bad = dichotomy_inequality_check(S.catalog("hyperbolic"), samples=4000, swap=True)
    assert not bad.holds
    with pytest.raises(PreconditionError):
        dichotomy_inequality_check(S.catalog("rotation_k"))
