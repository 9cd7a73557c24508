import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp
from oracles import brute_maximal, brute_sharp

from fracwave.errors import DegenerateInputError, ParameterError
from fracwave.frac_ops import TimeGrid
from fracwave.kernel import SpaceGrid
from fracwave.maximal import (
    ParabolicCube,
    ParabolicMetricSpec,
    ball_constant,
    ball_measure,
    ball_measure_mc,
    cube_widths,
    dyadic_widths,
    maximal_fn,
    maximal_values,
    parabolic_distance,
    sharp_estimate_check,
    sharp_fn,
    sharp_values,
)
from fracwave.solver import Field

small = hnp.arrays(np.float64, (8, 8), elements=st.floats(-10, 10, allow_subnormal=False))


class TestGeometry:
    def test_ball_constant(self):
        assert ball_constant(ParabolicMetricSpec(1.0, 1)) == pytest.approx(4 / 3, rel=1e-12)

    @pytest.mark.parametrize("alpha", [0.5, 1.0, 1.5])
    @pytest.mark.parametrize("dim", [1, 2])
    def test_doubling(self, alpha, dim):
        spec = ParabolicMetricSpec(alpha, dim)
        assert ball_measure(spec, 2.0) / ball_measure(spec, 1.0) == pytest.approx(2 ** (2 / alpha + dim), rel=1e-12)

    def test_homogeneity_slope(self):
        spec = ParabolicMetricSpec(0.7, 2)
        r = np.array([0.1, 1.0, 10.0])
        slope = np.polyfit(np.log(r), np.log([ball_measure(spec, x) for x in r]), 1)[0]
        assert slope == pytest.approx(2 / 0.7 + 2, rel=1e-12)

    def test_monte_carlo(self, rng):
        spec = ParabolicMetricSpec(1.0, 1)
        assert ball_measure_mc(spec, 1.0, 400_000, rng) == pytest.approx(4 / 3, rel=1e-2)

    @pytest.mark.parametrize("alpha", [0.3, 1.0, 1.7])
    def test_triangle_inequality(self, alpha, rng):
        spec = ParabolicMetricSpec(alpha, 2)
        a, b, c = (rng.normal(size=(100_000, 3)) * [3, 1, 1] for _ in range(3))
        ab, bc, ac = parabolic_distance(spec, a, b), parabolic_distance(spec, b, c), parabolic_distance(spec, a, c)
        assert np.all(ac <= ab + bc + 1e-12)
        assert np.array_equal(ab, parabolic_distance(spec, b, a))

    @given(delta=st.floats(0.01, 10), alpha=st.floats(0.1, 1.9), dim=st.integers(1, 3))
    def test_cube_volume(self, delta, alpha, dim):
        cube = ParabolicCube.at_origin(delta, alpha, dim)
        assert cube.volume == pytest.approx(delta ** (2 / alpha + dim), rel=1e-12)
        lo, hi = cube.extent()[0]
        assert hi == pytest.approx(0.0, abs=1e-12 * delta ** (2 / alpha))

    @pytest.mark.parametrize("alpha", [0.5, 1.0, 1.5])
    @pytest.mark.parametrize("dim", [1, 2])
    def test_ball_cube_sandwich(self, alpha, dim, rng):
        delta = 0.8
        spec = ParabolicMetricSpec(alpha, dim)
        centre = np.zeros(1 + dim)
        # points of B_delta lie in Q_{2 delta}
        pts = rng.uniform(-1, 1, (200_000, 1 + dim)) * np.r_[delta ** (2 / alpha), [delta] * dim]
        ball = pts[parabolic_distance(spec, pts, centre) < delta]
        assert np.all(ParabolicCube(2 * delta, alpha, centre).contains(ball))
        # points of Q_delta lie in B_{(2^{-alpha/2} + sqrt(d)/2) delta}
        cube = ParabolicCube(delta, alpha, centre)
        box = np.array(cube.extent())
        inside = rng.uniform(box[:, 0], box[:, 1], (200_000, 1 + dim))
        radius = (2 ** (-alpha / 2) + math.sqrt(dim) / 2) * delta
        assert np.all(parabolic_distance(spec, inside, centre) <= radius * (1 + 1e-12))

    def test_rejects_alpha(self):
        with pytest.raises(ParameterError):
            ParabolicMetricSpec(2.0, 1)


class TestMaximal:
    def test_constant(self):
        assert np.all(maximal_values(np.full((8, 8), -3.0)) == 3.0)

    def test_half_indicator(self):
        h = np.zeros((8, 8))
        h[:, :4] = 1.0
        assert np.all(maximal_values(h)[:, :4] == 1.0)

    def test_single_cell(self):
        h = np.zeros((8, 8))
        h[3, 2] = 1.0
        m = maximal_values(h)
        dy = dyadic_widths(8)
        assert np.array_equal(m, brute_maximal(h, dy, dy))
        # on the same time slab, k cells away: best dyadic window covering both cells
        for k in range(1, 6):
            j = 2 + k
            best = max(1.0 / (w0 * w1) for w0 in dy for w1 in dy
                       if w1 > k and any(s <= 2 and j < s + w1 for s in range(8 - w1 + 1)))
            assert m[3, j] == best

    def test_dominates(self, rng):
        a = rng.normal(size=(16, 12))
        assert np.all(maximal_values(a) >= np.abs(a))

    @given(a=small)
    def test_matches_dyadic_oracle(self, a):
        dy = dyadic_widths(8)
        np.testing.assert_allclose(maximal_values(a), brute_maximal(a, dy, dy), rtol=1e-13, atol=1e-13)

    @given(a=small)
    def test_full_sweep_comparable(self, a):
        m = maximal_values(a)
        full = brute_maximal(a)
        assert np.all(m <= full + 1e-12)
        assert np.all(full <= 4 * m + 1e-12)

    @given(a=small, b=small)
    def test_sublinear(self, a, b):
        assert np.all(maximal_values(a + b) <= maximal_values(a) + maximal_values(b) + 1e-12)

    def test_field_wrapper(self):
        f = Field.from_function(TimeGrid(1.0, 7), SpaceGrid(1, 8.0, 8), lambda t, x: t - x)
        assert np.array_equal(maximal_fn(f).values, maximal_values(f.values))


class TestSharp:
    def test_constant(self):
        assert not np.any(sharp_values(np.full((8, 8), 2.5), 0.5, 1 / 8, 0.5))

    @pytest.mark.parametrize("alpha", [0.5, 1.0, 1.5])
    def test_linear_profile(self, alpha):
        x = np.arange(8.0)
        h = np.broadcast_to(x, (8, 8))
        family = cube_widths(alpha, 1 / 8, 0.5, h.shape)
        np.testing.assert_allclose(sharp_values(h, alpha, 1 / 8, 0.5), brute_sharp(h, family), atol=1e-13)

    @given(a=small, alpha=st.sampled_from([0.5, 1.0, 1.5]))
    def test_matches_oracle(self, a, alpha):
        family = cube_widths(alpha, 1 / 8, 0.5, a.shape)
        np.testing.assert_allclose(sharp_values(a, alpha, 1 / 8, 0.5), brute_sharp(a, family), atol=1e-12)

    @given(a=small)
    def test_below_twice_maximal(self, a):
        assert np.all(sharp_values(a, 0.7, 1 / 8, 0.5) <= 2 * maximal_values(a) + 1e-12)

    @given(a=small, b=small)
    def test_sublinear(self, a, b):
        lhs = sharp_values(a + b, 1.2, 1 / 8, 0.5)
        assert np.all(lhs <= sharp_values(a, 1.2, 1 / 8, 0.5) + sharp_values(b, 1.2, 1 / 8, 0.5) + 1e-12)

    def test_cube_family_dyadic(self):
        for wt, wx in cube_widths(0.8, 1e-3, 0.05, (513, 256)):
            assert wx in dyadic_widths(256)
            assert wt == 513 or (wt & (wt - 1)) == 0

    def test_rejects_alpha(self):
        f = Field.zeros(TimeGrid(1.0, 7), SpaceGrid(1, 8.0, 8))
        with pytest.raises(ParameterError):
            sharp_fn(f, 2.0)


def bump_source(n_t, n_x, L=20.0):
    tg, sg = TimeGrid(1.0, n_t), SpaceGrid(1, L, n_x)

    def fn(t, x):
        s = np.clip(t * (1 - t) * 4, 1e-300, 1)
        r = np.clip(1 - (x / 4) ** 2, 1e-300, 1)
        return np.where((t > 0) & (t < 1) & (np.abs(x) < 4), np.exp(2 - 1 / s - 1 / r), 0.0)

    return Field.from_function(tg, sg, fn)


class TestSharpEstimate:
    def test_zero_is_degenerate(self):
        with pytest.raises(DegenerateInputError):
            sharp_estimate_check(Field.zeros(TimeGrid(1.0, 16), SpaceGrid(1, 8.0, 16)), 0.5, 2.0, 2)

    def test_rejects_p0(self):
        with pytest.raises(ParameterError):
            sharp_estimate_check(bump_source(16, 16), 0.5, 1.0, 0)

    def test_refinement_stable(self):
        consts = [sharp_estimate_check(bump_source(n, n), 0.5, 2.0, 2, compare_2T=False).constant
                  for n in (64, 128)]
        assert all(math.isfinite(c) for c in consts)
        assert max(consts) / min(consts) <= 1.5

    def test_doubled_T(self):
        res = sharp_estimate_check(bump_source(64, 64), 0.5, 2.0, 2)
        assert res.constant_2T is not None
        assert res.t_ratio <= 1.5

    def test_homogeneous(self):
        f = bump_source(32, 32)
        a = sharp_estimate_check(f, 1.5, 2.0, 1)
        b = sharp_estimate_check(f.with_values(10 * f.values), 1.5, 2.0, 1)
        assert b.constant == pytest.approx(a.constant, rel=1e-13)
