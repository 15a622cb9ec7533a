import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import paired_t_oracle
from proce.errors import UsageError
from proce.stats import betainc, paired_t_test, t_cdf


def test_differences_one_two_three():
    res = paired_t_test([1, 2, 3], [0, 0, 0])
    assert res.t == pytest.approx(2 * math.sqrt(3), abs=1e-12)
    assert res.df == 2
    # frozen from scipy.integrate.quad over the Student-t density
    assert res.p == pytest.approx(0.07417990022744855, abs=1e-10)


def test_degenerate_cases():
    res = paired_t_test([1, 2, 3], [1, 2, 3])
    assert res.degenerate and res.p == 1.0
    res = paired_t_test([2, 3, 4], [1, 2, 3])
    assert res.degenerate and res.p == 0.0 and res.t == math.inf


def test_sign_flip_symmetry():
    a, b = [0.3, 1.2, 0.8, 2.0], [0.1, 0.4, 1.0, 0.5]
    r1, r2 = paired_t_test(a, b), paired_t_test(b, a)
    assert r1.t == pytest.approx(-r2.t, abs=1e-15)
    assert r1.p == pytest.approx(r2.p, abs=1e-15)


def test_bad_inputs():
    with pytest.raises(UsageError):
        paired_t_test([1, 2], [1, 2, 3])
    with pytest.raises(UsageError):
        paired_t_test([1], [2])


def test_betainc_frozen_value():
    # mpmath.betainc(2, 3, 0, 0.4, regularized=True) = 0.5248
    assert betainc(2, 3, 0.4) == pytest.approx(0.5248, abs=1e-13)
    assert betainc(2, 3, 0.0) == 0.0 and betainc(2, 3, 1.0) == 1.0


def test_t_cdf_symmetry():
    assert t_cdf(0.0, 5) == pytest.approx(0.5)
    assert t_cdf(1.3, 7) + t_cdf(-1.3, 7) == pytest.approx(1.0, abs=1e-14)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 40), st.integers(0, 2**31 - 1))
def test_matches_quadrature_oracle(n, seed):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=n), rng.normal(0.3, 1.2, size=n)
    res = paired_t_test(a, b)
    t, df, p = paired_t_oracle(a, b)
    assert res.t == pytest.approx(t, rel=1e-9)
    assert res.df == df
    assert abs(res.p - p) < 1e-8
