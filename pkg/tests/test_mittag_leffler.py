import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fracwave.errors import ParameterError, UnsupportedDomainError
from fracwave.mittag_leffler import MLQuery, ml_batch, ml_eval


def series_oracle(alpha, beta, z):
    """Extended-precision Taylor series, precision raised with the cancellation depth."""
    x = -z
    r0 = x ** (1.0 / alpha) if x > 0 else 0.0
    with mp.workdps(int(0.45 * r0) + 40):
        zz, a, b = mp.mpf(z), mp.mpf(alpha), mp.mpf(beta)
        total, k = mp.mpf(0), 0
        while True:
            term = zz**k * mp.rgamma(a * k + b)
            total += term
            if k > r0 / alpha + 10 and abs(term) < mp.mpf(10) ** -30:
                break
            k += 1
        return float(total)


class TestSpecialValues:
    def test_exponential(self):
        assert ml_eval(1, 1, -1) == pytest.approx(math.exp(-1), abs=1e-15)

    def test_cosine_zero(self):
        assert abs(ml_eval(2, 1, -((math.pi / 2) ** 2))) <= 1e-12

    def test_series_head(self):
        assert ml_eval(0.5, 0.5, 0.0) == pytest.approx(1 / math.sqrt(math.pi), abs=1e-15)

    def test_sinc(self):
        assert ml_eval(2, 2, -1.0) == pytest.approx(math.sin(1.0), abs=1e-13)

    def test_batch_exponentials(self):
        np.testing.assert_allclose(ml_batch(1, 1, [0, -1, -2]), np.exp([0, -1, -2]), rtol=1e-14)

    def test_against_oracle(self):
        assert ml_eval(0.8, 0.8, -3.0) == pytest.approx(series_oracle(0.8, 0.8, -3.0), abs=1e-12)

    @pytest.mark.parametrize("alpha", [0.3, 0.8, 1.0, 1.5, 1.9, 2.0])
    @pytest.mark.parametrize("beta", [0.5, 1.0, 2.5])
    @pytest.mark.parametrize("z", [-0.5, -4.0, -9.5, -25.0, -60.0])
    def test_oracle_grid(self, alpha, beta, z):
        if (-z) ** (1 / alpha) > 300:
            pytest.skip("oracle precision requirement too large")
        ref = series_oracle(alpha, beta, z)
        val = ml_eval(alpha, beta, z)
        if abs(z) <= 10:
            assert abs(val - ref) <= 1e-12
        else:
            assert abs(val - ref) <= 1e-8 * abs(ref) + 1e-15


class TestErrors:
    def test_positive_z(self):
        with pytest.raises(UnsupportedDomainError):
            ml_eval(0.5, 1.0, 0.1)

    @pytest.mark.parametrize("alpha, beta", [(0.0, 1.0), (2.5, 1.0), (1.0, 0.0), (1.0, 4.5)])
    def test_parameters(self, alpha, beta):
        with pytest.raises(ParameterError):
            ml_eval(alpha, beta, -1.0)

    def test_batch_reports_index(self):
        with pytest.raises(UnsupportedDomainError, match=r"zs\[2\]"):
            ml_batch(0.5, 1.0, [-1.0, -2.0, 3.0])

    def test_query(self):
        assert MLQuery(1.0, 1.0, -2.0).evaluate() == pytest.approx(math.exp(-2.0), rel=1e-14)


class TestProperties:
    @given(alpha=st.floats(0.1, 2.0), beta=st.floats(0.1, 2.0), z=st.floats(-200.0, 0.0))
    def test_recurrence(self, alpha, beta, z):
        lhs = ml_eval(alpha, beta, z)
        rhs = z * ml_eval(alpha, alpha + beta, z) + 1.0 / math.gamma(beta)
        assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(lhs))

    @given(x=st.floats(0.0, 7.0))
    def test_trig_identities(self, x):
        assert ml_eval(2, 1, -(x * x)) == pytest.approx(math.cos(x), abs=1e-10)
        sinc = math.sin(x) / x if x > 0 else 1.0
        assert ml_eval(2, 2, -(x * x)) == pytest.approx(sinc, abs=1e-10)

    @given(zs=st.lists(st.floats(-80.0, 0.0), min_size=1, max_size=12), alpha=st.floats(0.2, 2.0))
    def test_batch_matches_scalar(self, zs, alpha):
        batch = ml_batch(alpha, 1.0, zs)
        loop = np.array([ml_eval(alpha, 1.0, z) for z in zs])
        assert np.array_equal(batch, loop)

    @given(alpha=st.floats(0.1, 1.0), z=st.floats(-100.0, 0.0))
    def test_bounds(self, alpha, z):
        for beta in (alpha, alpha + 1, alpha + 2):
            v = ml_eval(alpha, beta, z)
            assert -1.0 <= v <= max(1.0, 1.0 / math.gamma(beta)) + 1e-12

    def test_monotone_in_modulus(self):
        x = np.linspace(0, 150, 3001)
        for alpha in (0.3, 0.7, 1.0):
            vals = ml_batch(alpha, alpha + 0.5, -x)
            assert np.all(np.diff(vals) <= 1e-13)
