r"""Parabolic geometry, maximal and sharp functions on space-time grids.

The parabolic distance is :math:`d_\alpha((t,x),(s,y)) = |t-s|^{\alpha/2} + |x-y|`;
its balls satisfy :math:`|B^\alpha_r| = c(\alpha,d)\,r^{2/\alpha+d}`. Cubes are
:math:`Q_\delta(s,y) = [s-\delta^{2/\alpha}/2, s+\delta^{2/\alpha}/2]\times\prod_i[y^i-\delta/2, y^i+\delta/2]`.

On a grid the supremum in the maximal function runs over grid-aligned
rectangles whose side lengths (in cells) are powers of two, or the full
axis. The sharp function runs over grid cubes with dyadic spatial side
``2^k dx`` and time side ``delta^(2/alpha)`` rounded to a power-of-two
number of steps, so every cube it uses is also a maximal-function
rectangle.

Comparability with exhaustive sweeps: a rectangle of arbitrary integer
sides lies inside a dyadic-side rectangle at most twice as long per axis,
so the sweep over all rectangles is at most ``2^(1+d)`` times the dyadic
maximal function. For cubes ``Q`` inside ``Q'``,
``avg_Q |h - h_Q| <= 2 (|Q'|/|Q|) avg_Q' |h - h_Q'|``, which bounds any
cube sweep by the grid sharp function times twice the worst volume ratio
to an enclosing family cube. Since ``avg_Q |h - h_Q| <= 2 avg_Q |h|``, the
sharp function never exceeds twice the maximal function.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import integrate, ndimage

from fracwave.errors import DegenerateInputError, ParameterError
from fracwave.solver import Field, apply_L

DENOMINATOR_FLOOR = 1e-12


@dataclass(frozen=True)
class ParabolicMetricSpec:
    alpha: float
    dim: int = 1

    def __post_init__(self):
        if not 0.0 < self.alpha < 2.0:
            raise ParameterError(f"alpha must lie in (0, 2), got {self.alpha!r}")
        if self.dim < 1:
            raise ParameterError("dim must be >= 1")

    @property
    def homogeneity(self) -> float:
        """Exponent ``2/alpha + d`` of the ball measure."""
        return 2.0 / self.alpha + self.dim


def parabolic_distance(spec: ParabolicMetricSpec, a, b) -> np.ndarray:
    """``d_alpha`` between points ``(..., 1 + dim)`` laid out as ``(t, x_1, ..., x_d)``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    dt = np.abs(a[..., 0] - b[..., 0])
    dx = np.sqrt(np.sum((a[..., 1:] - b[..., 1:]) ** 2, axis=-1))
    return dt ** (spec.alpha / 2.0) + dx


def _unit_sphere_area(dim: int) -> float:
    return 2.0 * math.pi ** (dim / 2.0) / math.gamma(dim / 2.0)


def ball_constant(spec: ParabolicMetricSpec) -> float:
    """``c(alpha, d) = 2 int_{|x|<1} (1 - |x|)^{2/alpha} dx`` by radial quadrature."""
    a = 2.0 / spec.alpha
    val, _ = integrate.quad(lambda rho: (1.0 - rho) ** a * rho ** (spec.dim - 1), 0.0, 1.0,
                            epsabs=0.0, epsrel=1e-13)
    return 2.0 * _unit_sphere_area(spec.dim) * val


def ball_measure(spec: ParabolicMetricSpec, r: float) -> float:
    """Lebesgue measure of ``{(s,y): d_alpha((s,y),(t,x)) < r}``."""
    if not r > 0:
        raise ParameterError(f"r must be positive, got {r!r}")
    return ball_constant(spec) * r**spec.homogeneity


def ball_measure_mc(spec: ParabolicMetricSpec, r: float, n_samples: int, rng: np.random.Generator,
                    chunk: int = 1_000_000) -> float:
    """Monte-Carlo estimate of :func:`ball_measure` from the bounding box."""
    t_half = r ** (2.0 / spec.alpha)
    box = 2.0 * t_half * (2.0 * r) ** spec.dim
    hits = 0
    done = 0
    while done < n_samples:
        m = min(chunk, n_samples - done)
        t = rng.uniform(-t_half, t_half, m)
        x = rng.uniform(-r, r, (m, spec.dim))
        d = np.abs(t) ** (spec.alpha / 2.0) + np.sqrt(np.sum(x * x, axis=1))
        hits += int(np.count_nonzero(d < r))
        done += m
    return box * hits / n_samples


@dataclass(frozen=True)
class ParabolicCube:
    """``[s - delta^(2/alpha)/2, s + delta^(2/alpha)/2] x prod [y_i - delta/2, y_i + delta/2]``."""

    delta: float
    alpha: float
    anchor: tuple[float, ...]

    def __post_init__(self):
        if not self.delta > 0:
            raise ParameterError("delta must be positive")
        if not 0.0 < self.alpha < 2.0:
            raise ParameterError("alpha must lie in (0, 2)")
        object.__setattr__(self, "anchor", tuple(float(v) for v in self.anchor))

    @classmethod
    def at_origin(cls, delta: float, alpha: float, dim: int) -> "ParabolicCube":
        """``Q_delta = [-delta^(2/alpha), 0] x [-delta/2, delta/2]^d``."""
        return cls(delta, alpha, (-0.5 * delta ** (2.0 / alpha),) + (0.0,) * dim)

    @property
    def dim(self) -> int:
        return len(self.anchor) - 1

    @property
    def time_side(self) -> float:
        return self.delta ** (2.0 / self.alpha)

    def extent(self) -> list[tuple[float, float]]:
        s, ys = self.anchor[0], self.anchor[1:]
        h = 0.5 * self.time_side
        return [(s - h, s + h)] + [(y - 0.5 * self.delta, y + 0.5 * self.delta) for y in ys]

    @property
    def volume(self) -> float:
        return self.time_side * self.delta**self.dim

    def contains(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        inside = np.ones(pts.shape[:-1], dtype=bool)
        for k, (lo, hi) in enumerate(self.extent()):
            inside &= (pts[..., k] >= lo) & (pts[..., k] <= hi)
        return inside


# --- grid operators ---------------------------------------------------------------


def dyadic_widths(n: int) -> list[int]:
    """Powers of two below ``n`` plus ``n`` itself."""
    out = []
    w = 1
    while w < n:
        out.append(w)
        w *= 2
    out.append(n)
    return out


def _window_sums(a: np.ndarray, widths: tuple[int, ...]) -> np.ndarray:
    """Sum over every window ``widths`` (indexed by window start) via cumulative sums."""
    out = a
    for ax, w in enumerate(widths):
        c = np.cumsum(out, axis=ax)
        pad = [(0, 0)] * out.ndim
        pad[ax] = (1, 0)
        c = np.pad(c, pad)
        hi = np.take(c, np.arange(w, c.shape[ax]), axis=ax)
        lo = np.take(c, np.arange(0, c.shape[ax] - w), axis=ax)
        out = hi - lo
    return out


def _spread_max(vals: np.ndarray, widths: tuple[int, ...]) -> np.ndarray:
    """For each grid point, max of ``vals`` over the window starts whose window contains it.

    ``vals`` has length ``n - w + 1`` along each axis; the result has length ``n``.
    """
    out = vals
    for ax, w in enumerate(widths):
        if w == 1:
            continue
        n = out.shape[ax] + w - 1
        pad = [(0, 0)] * out.ndim
        pad[ax] = (w - 1, w - 1)
        x = np.pad(out, pad, constant_values=-np.inf)
        # starts j-w+1..j sit at padded positions j..j+w-1, a window centred at j + w//2
        c = ndimage.maximum_filter1d(x, size=w, axis=ax, mode="constant", cval=-np.inf)
        out = np.take(c, np.arange(w // 2, w // 2 + n), axis=ax)
    return out


def maximal_values(h: np.ndarray, widths_per_axis: list[list[int]] | None = None) -> np.ndarray:
    """Grid maximal function of ``|h|`` over rectangles with the given side widths."""
    a = np.abs(np.asarray(h, dtype=float))
    if widths_per_axis is None:
        widths_per_axis = [dyadic_widths(n) for n in a.shape]
    # the unit rectangle gives |h| itself; seeding with it keeps M h >= |h| free of rounding
    best = a.copy()
    for widths in itertools.product(*widths_per_axis):
        if all(w == 1 for w in widths):
            continue
        means = _window_sums(a, widths) / float(np.prod(widths))
        best = np.maximum(best, _spread_max(means, widths))
    return best


def maximal_fn(h: Field) -> Field:
    """Maximal function of ``|h|`` over grid rectangles with dyadic sides."""
    return h.with_values(maximal_values(h.values))


def cube_widths(alpha: float, dt: float, dx: float, shape: tuple[int, ...]) -> list[tuple[int, ...]]:
    """Grid widths ``(w_t, w_x, ...)`` of the sharp-function cubes.

    Spatial side ``2^k`` cells; time side ``(2^k dx)^(2/alpha) / dt`` steps,
    rounded to a power of two; both clipped to the grid.
    """
    n_t, n_x = shape[0], shape[1]
    out = []
    for wx in dyadic_widths(n_x):
        delta = wx * dx
        steps = delta ** (2.0 / alpha) / dt
        wt = 2 ** max(0, int(round(math.log2(steps)))) if steps > 0 else 1
        wt = min(wt, n_t)
        item = (wt,) + (wx,) * (len(shape) - 1)
        if item not in out:
            out.append(item)
    return out


def _oscillations(a: np.ndarray, widths: tuple[int, ...], budget: int = 2_000_000) -> np.ndarray:
    """Mean oscillation ``avg |a - a_Q|`` for every window (indexed by start)."""
    vol = int(np.prod(widths))
    means = _window_sums(a, widths) / vol
    out = np.empty_like(means)
    n0 = means.shape[0]
    step = max(1, budget // max(1, vol * int(np.prod(means.shape[1:]))))
    for lo in range(0, n0, step):
        hi = min(n0, lo + step)
        block = a[lo : hi + widths[0] - 1]
        win = sliding_window_view(block, widths)
        dev = np.abs(win - means[lo:hi][(...,) + (None,) * len(widths)])
        out[lo:hi] = dev.reshape(dev.shape[: len(widths)] + (-1,)).mean(axis=-1)
    return out


def sharp_values(h: np.ndarray, alpha: float, dt: float, dx: float,
                 widths: list[tuple[int, ...]] | None = None) -> np.ndarray:
    a = np.asarray(h, dtype=float)
    if widths is None:
        widths = cube_widths(alpha, dt, dx, a.shape)
    best = np.zeros_like(a)
    for w in widths:
        best = np.maximum(best, _spread_max(_oscillations(a, w), w))
    return best


def sharp_fn(h: Field, alpha: float) -> Field:
    """Grid sharp function ``sup_{Q containing (t,x)} avg_Q |h - h_Q|``."""
    if not 0.0 < alpha < 2.0:
        raise ParameterError(f"alpha must lie in (0, 2), got {alpha!r}")
    return h.with_values(sharp_values(h.values, alpha, h.tgrid.dt, h.sgrid.dx))


# --- empirical sharp-function estimate ----------------------------------------------


@dataclass(frozen=True)
class SharpCheckResult:
    """Empirical constant ``N_k = max (L_k f)^# / M(|f|^p0)^(1/p0)``."""

    constant: float
    ratio: np.ndarray
    k: int
    alpha: float
    p0: float
    T: float
    constant_2T: float | None = None

    @property
    def t_ratio(self) -> float | None:
        if self.constant_2T is None:
            return None
        return max(self.constant, self.constant_2T) / min(self.constant, self.constant_2T)


def _components(k: int, dim: int):
    if k == 0:
        return [None]
    if k == 1:
        return [(i,) for i in range(dim)]
    return [(i, j) for i in range(dim) for j in range(i, dim)]


def _sharp_ratio(f: Field, alpha: float, p0: float, k: int, T: float, indices):
    den = maximal_values(np.abs(f.values) ** p0) ** (1.0 / p0)
    mask = den > DENOMINATOR_FLOOR
    if not np.any(mask):
        raise DegenerateInputError("maximal function of |f|^p0 vanishes everywhere")
    comps = _components(k, f.sgrid.dim) if indices is None else [indices]
    ratio = np.zeros(f.values.shape)
    for idx in comps:
        lf = apply_L(k, f, alpha, T, idx)
        sharp = sharp_values(lf.values, alpha, f.tgrid.dt, f.sgrid.dx)
        ratio = np.maximum(ratio, np.where(mask, sharp / np.where(mask, den, 1.0), 0.0))
    return float(np.max(ratio)), ratio


def _extend_in_time(f: Field, factor: int) -> Field:
    from fracwave.frac_ops import TimeGrid

    tg = TimeGrid(f.tgrid.t_end * factor, f.tgrid.n_steps * factor)
    vals = np.zeros((tg.n_steps + 1,) + f.sgrid.shape)
    vals[: f.tgrid.n_steps + 1] = f.values
    return Field(tg, f.sgrid, vals)


def sharp_estimate_check(f: Field, alpha: float, p0: float, k: int, T: float | None = None,
                         indices=None, compare_2T: bool | None = None) -> SharpCheckResult:
    """Max of ``(L_k f)^# / M(|f|^p0)^(1/p0)`` over the grid.

    ``T`` (default: the field's time range) is the lag cutoff of ``L_k``.
    With ``compare_2T`` (default for ``k = 2``) the check is repeated with
    cutoff ``2T`` on the time grid extended by zero to twice its length at
    the same step, and the second constant is reported as ``constant_2T``.
    """
    if not p0 > 1:
        raise ParameterError(f"p0 must exceed 1, got {p0!r}")
    if k not in (0, 1, 2):
        raise ParameterError(f"k must be 0, 1 or 2, got {k!r}")
    if not np.any(f.values):
        raise DegenerateInputError("f vanishes identically")
    T = f.tgrid.t_end if T is None else float(T)
    const, ratio = _sharp_ratio(f, alpha, p0, k, T, indices)
    if compare_2T is None:
        compare_2T = k == 2
    const_2 = None
    if compare_2T:
        factor = max(1, math.ceil(2 * T / f.tgrid.t_end - 1e-12))
        g = _extend_in_time(f, factor) if factor > 1 else f
        const_2, _ = _sharp_ratio(g, alpha, p0, k, 2 * T, indices)
    return SharpCheckResult(const, ratio, k, alpha, p0, T, const_2)
