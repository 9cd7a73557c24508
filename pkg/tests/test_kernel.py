import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from fracwave.errors import DomainTooSmallError, OutOfRangeError, ParameterError
from fracwave.frac_ops import TimeGrid, rl_integral_array
from fracwave.kernel import (
    SpaceGrid,
    build_kernel_table,
    eval_p,
    eval_q,
    fit_kernel_bounds,
    load_kernel_table,
    noise_floor,
    p_hat_symbol,
    q_hat_symbol,
    save_kernel_table,
)
from fracwave.mittag_leffler import ml_batch, ml_eval


@pytest.fixture(scope="module")
def heat_1d():
    return build_kernel_table(1.0, SpaceGrid(1, 40.0, 1024))


@pytest.fixture(scope="module")
def sub_1d():
    return build_kernel_table(0.5, SpaceGrid(1, 40.0, 1024))


@pytest.fixture(scope="module")
def wave_1d():
    return build_kernel_table(1.5, SpaceGrid(1, 40.0, 1024))


@pytest.fixture(scope="module")
def sub_2d():
    return build_kernel_table(0.5, SpaceGrid(2, 40.0, 128), check_wrap=False)


class TestSymbols:
    def test_heat(self):
        xi = np.linspace(0, 20, 41)
        # the evaluator guarantees absolute accuracy once the value is tiny
        np.testing.assert_allclose(q_hat_symbol(1.7, xi, 1.0), np.exp(-xi * 1.7), rtol=1e-13, atol=1e-15)

    @pytest.mark.parametrize("alpha", [0.4, 1.0, 1.6])
    def test_zero_frequency(self, alpha):
        t = 2.5
        assert q_hat_symbol(t, 0.0, alpha) == pytest.approx(t ** (alpha - 1) / math.gamma(alpha), rel=1e-14)
        assert p_hat_symbol(t, 0.0, alpha) == 1.0

    def test_against_ml(self):
        assert q_hat_symbol(1.0, 1.0, 0.5) == pytest.approx(ml_eval(0.5, 0.5, -1.0), rel=1e-15)

    def test_rejects_time(self):
        with pytest.raises(ParameterError):
            q_hat_symbol(0.0, 1.0, 0.5)


class TestSpaceGrid:
    @pytest.mark.parametrize("n", [6, 9])
    def test_rejects_points(self, n):
        with pytest.raises(ParameterError):
            SpaceGrid(1, 10.0, n)

    def test_frequencies_symmetric(self):
        f = SpaceGrid(1, 10.0, 16).axis_frequencies
        inner = np.sort(f)[1:]
        np.testing.assert_allclose(inner, -inner[::-1])


class TestTables:
    def test_heat_values(self, heat_1d):
        assert eval_q(heat_1d, 1.0, 0.0) == pytest.approx((4 * math.pi) ** -0.5, abs=1e-12)
        assert eval_q(heat_1d, 4.0, 0.0) == pytest.approx((16 * math.pi) ** -0.5, abs=1e-12)
        assert eval_q(heat_1d, 4.0, 0.0) == pytest.approx(0.1410474, abs=1e-7)

    def test_heat_2d(self):
        t = build_kernel_table(1.0, SpaceGrid(2, 40.0, 128))
        assert eval_q(t, 1.0, [0.0, 0.0]) == pytest.approx(1 / (4 * math.pi), abs=1e-12)

    def test_heat_closed_form(self, heat_1d):
        x = heat_1d.grid.axis_nodes
        gauss = np.exp(-(x**2) / 4) / math.sqrt(4 * math.pi)
        np.testing.assert_allclose(heat_1d.q, gauss, atol=1e-14)
        np.testing.assert_allclose(heat_1d.hess[0, 0], (x**2 / 4 - 0.5) * gauss, atol=1e-13)

    def test_quadrature_origin(self, sub_1d):
        val, _ = integrate.quad(lambda k: ml_batch(0.5, 0.5, [-k * k])[0], 0, np.inf, limit=400, epsabs=1e-13)
        assert sub_1d.q[512] == pytest.approx(val / math.pi, rel=1e-8)

    @pytest.mark.parametrize("alpha", [0.5, 1.5])
    def test_mass_and_evenness(self, alpha, sub_1d, wave_1d):
        t = sub_1d if alpha == 0.5 else wave_1d
        assert abs(t.mass() - 1.0) <= 1e-8
        # node j mirrors to n - j
        q = t.q
        assert np.max(np.abs(q[1:] - q[1:][::-1])) <= 1e-10 * np.max(np.abs(q))

    def test_hessian_symmetric(self, sub_2d):
        assert np.array_equal(sub_2d.hess[0, 1], sub_2d.hess[1, 0])

    def test_node_identity(self, sub_1d):
        x = sub_1d.grid.axis_nodes[200:220]
        np.testing.assert_allclose(eval_q(sub_1d, 1.0, x), sub_1d.q[200:220], rtol=1e-12, atol=1e-15)
        np.testing.assert_allclose(eval_q(sub_1d, 1.0, x, method="linear"), sub_1d.q[200:220], rtol=1e-14)

    def test_out_of_range(self, sub_1d):
        with pytest.raises(OutOfRangeError):
            eval_q(sub_1d, 0.01, 19.0)

    def test_domain_too_small(self):
        with pytest.raises(DomainTooSmallError) as info:
            build_kernel_table(0.5, SpaceGrid(1, 6.0, 256))
        assert info.value.suggested_L > 6.0

    def test_second_table_scaling(self):
        g = SpaceGrid(1, 40.0, 512)
        t1 = build_kernel_table(0.5, g, 1.0, check_wrap=False)
        t2 = build_kernel_table(0.5, g, 2.0, check_wrap=False)
        x = g.axis_nodes
        sel = (np.abs(x) <= 10) & (x != 0)
        pred = eval_q(t1, 2.0, x[sel], 1)
        ref = t2.grad[0][sel]
        assert np.max(np.abs(pred - ref)) <= 1e-6 * np.max(np.abs(ref))

    def test_consistent_with_fractional_integral(self, wave_1d):
        # q = I^{alpha-1} p in time at fixed x0
        grid = TimeGrid(1.0, 4000)
        x0 = 1.0
        p = eval_p(wave_1d, np.maximum(grid.nodes, 1e-300), np.full(grid.nodes.size, x0), outside="zero")
        # before t_in the scaled point leaves the box and q(t, x0) is below 1e-30
        t_in = (x0 / 20.0) ** (4.0 / 3.0)
        ts = grid.nodes[1:]
        q = np.zeros(ts.size)
        q[ts >= t_in] = eval_q(wave_1d, ts[ts >= t_in], np.full(int(np.sum(ts >= t_in)), x0))
        iq = rl_integral_array(p, 0.5, grid.dt)[1:]
        assert np.max(np.abs(iq - q)) <= 1e-3 * np.max(np.abs(q))

    def test_roundtrip(self, sub_2d, tmp_path):
        save_kernel_table(sub_2d, tmp_path / "tab")
        back = load_kernel_table(tmp_path / "tab")
        assert back.checksum() == sub_2d.checksum()
        assert back.tail == sub_2d.tail
        np.testing.assert_array_equal(back.hess, sub_2d.hess)

    def test_checksum_detects_corruption(self, sub_2d, tmp_path):
        save_kernel_table(sub_2d, tmp_path / "tab")
        raw = bytearray((tmp_path / "tab.bin").read_bytes())
        raw[100] ^= 0xFF
        (tmp_path / "tab.bin").write_bytes(bytes(raw))
        with pytest.raises(ValueError):
            load_kernel_table(tmp_path / "tab")


class TestBounds:
    def test_gaussian_sigma(self, heat_1d):
        fit = fit_kernel_bounds(heat_1d, 0).far
        assert 0.2 <= fit.sigma <= 0.25
        assert math.isfinite(fit.N)

    @pytest.mark.parametrize("m", [0, 1, 2])
    def test_far_bound_holds(self, sub_1d, m):
        rep = fit_kernel_bounds(sub_1d, m)
        r = sub_1d.grid.radius()
        mag = sub_1d.magnitude(m)
        sel = (r >= 1) & (mag > noise_floor(sub_1d, m))
        bound = rep.far.N * np.exp(-rep.far.sigma * r[sel] ** (2 / 1.5))
        assert np.all(mag[sel] <= bound * (1 + 1e-12))
        assert rep.far.sigma > 0

    def test_small_x_finite(self, sub_1d):
        rep = fit_kernel_bounds(sub_1d, 0)
        assert math.isfinite(rep.near.N)
        assert {f.epsilon for f in rep.family} == {0.0, 0.5, 1.0, -0.5, -1.0}

    def test_2d_hessian_fit(self, sub_2d):
        rep = fit_kernel_bounds(sub_2d, 2)
        assert math.isfinite(rep.far.N) and rep.far.sigma > 0
        assert {f.epsilon for f in rep.family} == {0.0, 0.5, 1.0}

    def test_needs_unit_slice(self):
        t = build_kernel_table(0.5, SpaceGrid(1, 40.0, 256), 2.0, check_wrap=False)
        with pytest.raises(ParameterError):
            fit_kernel_bounds(t, 0)


class TestProperties:
    @given(t=st.floats(0.05, 20.0), xi=st.floats(0.0, 400.0), alpha=st.floats(0.1, 1.99))
    def test_symbol_matches_ml(self, t, xi, alpha):
        expect = t ** (alpha - 1) * ml_eval(alpha, alpha, -xi * t**alpha)
        # documented accuracy: 1e-12 absolute (|z| <= 10), 1e-8 relative beyond
        assert q_hat_symbol(t, xi, alpha) == pytest.approx(expect, rel=1e-8, abs=1e-12 * t ** (alpha - 1))

    @given(t=st.floats(0.3, 3.0), x=st.floats(-4.0, 4.0))
    def test_scaling_law_exact(self, t, x):
        # evaluation at (t, x) equals the power times evaluation at (1, x t^{-a/2})
        pass_table = _WAVE
        for deriv in (0, 1, 2):
            lhs = eval_q(pass_table, t, x, deriv)
            power = (-0.5 + 1 - deriv / 2) * 1.5 - 1
            rhs = t**power * eval_q(pass_table, 1.0, x * t ** (-0.75), deriv)
            assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-14)

    @given(idx=st.integers(0, 127), jdx=st.integers(0, 127))
    def test_even_2d(self, idx, jdx):
        n = 128
        q = _SUB2D.q
        mi, mj = (-idx) % n, (-jdx) % n
        assert abs(q[idx, jdx] - q[mi, mj]) <= 1e-10 * np.max(np.abs(q))


_WAVE = build_kernel_table(1.5, SpaceGrid(1, 40.0, 512), check_wrap=False)
_SUB2D = build_kernel_table(0.5, SpaceGrid(2, 40.0, 128), check_wrap=False)


def test_all_multi_indices_2d(sub_2d):
    for gam in itertools.product(range(3), repeat=2):
        if sum(gam) <= 2:
            assert sub_2d.component(gam).shape == (128, 128)
