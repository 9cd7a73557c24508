r"""Power weights :math:`|x - x_0|^\gamma`, their :math:`A_p` characteristic, and
weighted mixed norms.

A power weight on :math:`\mathbb{R}^d` belongs to :math:`A_p` exactly when
:math:`-d < \gamma < d(p-1)`. The characteristic

.. math::

    [w]_p = \sup_B \Big(\frac{1}{|B|}\int_B w\Big)
            \Big(\frac{1}{|B|}\int_B w^{-1/(p-1)}\Big)^{p-1}

is estimated over sampled balls. Ball integrals are evaluated in closed
form around the weight's centre (1d), or by a polar rule that is exact in
the radial variable on the concentric part and Gauss-Legendre on the
off-centre annulus (2d). Local integrability is probed by cutting a disk
of radius ``eps`` around the centre and refining ``eps``: for members of
the class the estimate is stable, otherwise it drifts or blows up.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np

from fracwave.errors import ParameterError, QuadratureInconsistencyError
from fracwave.frac_ops import TimeGrid
from fracwave.kernel import SpaceGrid


def in_power_class(gamma: float, dim: int, p: float) -> bool:
    """``|x|^gamma`` is an ``A_p(R^dim)`` weight iff ``-dim < gamma < dim (p - 1)``."""
    return -dim < gamma < dim * (p - 1.0)


@dataclass(frozen=True)
class PowerWeight:
    """``w(x) = |x - center|^gamma`` on ``R^dim`` (space) or ``R`` (time).

    ``p`` is the exponent whose class membership is recorded in ``member``.
    """

    gamma: float
    dim: int = 1
    center: tuple[float, ...] | float = 0.0
    role: str = "space"
    p: float | None = None
    member: bool | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.role not in ("space", "time"):
            raise ParameterError(f"role must be 'space' or 'time', got {self.role!r}")
        if self.role == "time" and self.dim != 1:
            raise ParameterError("time weights live on R (dim = 1)")
        if not math.isfinite(self.gamma):
            raise ParameterError("gamma must be finite")
        c = np.broadcast_to(np.asarray(self.center, dtype=float), (self.dim,))
        object.__setattr__(self, "center", tuple(float(v) for v in c))
        if self.p is not None:
            object.__setattr__(self, "member", in_power_class(self.gamma, self.dim, self.p))

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.dim == 1 and (x.ndim == 0 or x.shape[-1] != 1):
            x = x[..., None]
        r = np.sqrt(np.sum((x - np.asarray(self.center)) ** 2, axis=-1))
        with np.errstate(divide="ignore"):
            return r**self.gamma

    def for_p(self, p: float) -> "PowerWeight":
        return PowerWeight(self.gamma, self.dim, self.center, self.role, p)

    @property
    def is_trivial(self) -> bool:
        return self.gamma == 0.0


def dual_weight(w: PowerWeight, p: float) -> PowerWeight:
    """``w^{-1/(p-1)}``: exponent ``-gamma/(p-1)``, membership flagged for ``p' = p/(p-1)``."""
    if not 1.0 < p < math.inf:
        raise ParameterError(f"p must lie in (1, inf), got {p!r}")
    return PowerWeight(-w.gamma / (p - 1.0), w.dim, w.center, w.role, p / (p - 1.0))


@dataclass(frozen=True)
class WeightedNormSpec:
    """Exponents and weights of ``L_q((0,T), w2; L_p(w1))``."""

    p: float
    q: float
    w1: PowerWeight
    w2: PowerWeight
    T: float

    def __post_init__(self):
        for name in ("p", "q"):
            v = getattr(self, name)
            if not 1.0 < v < math.inf:
                raise ParameterError(f"{name} must lie in (1, inf), got {v!r}")
        if not self.T > 0:
            raise ParameterError(f"T must be positive, got {self.T!r}")
        if self.w2.role != "time" or self.w1.role != "space":
            raise ParameterError("w1 must be a space weight and w2 a time weight")


# --- exact 1d integrals -------------------------------------------------------------


def _radial_moment(gamma: float, a, b):
    """``int_a^b s^gamma ds`` for ``0 <= a <= b`` (``inf`` when divergent at 0)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        if gamma == -1.0:
            out = np.log(b) - np.log(a)
        else:
            e = gamma + 1.0
            out = (b**e - a**e) / e
    out = np.where(b <= a, 0.0, out)
    if gamma <= -1.0:
        out = np.where((a == 0) & (b > a), np.inf, out)
    return out


def interval_integral(gamma: float, lo, hi, hole: float = 0.0):
    """``int_{[lo, hi] minus (-hole, hole)} |s|^gamma ds`` in closed form."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    # positive part [max(lo, hole), hi], negative part [max(-hi, hole), -lo]
    pos = _radial_moment(gamma, np.maximum(np.maximum(lo, 0.0), hole), np.maximum(hi, 0.0))
    neg = _radial_moment(gamma, np.maximum(np.maximum(-hi, 0.0), hole), np.maximum(-lo, 0.0))
    return pos + neg


# --- ball integrals ------------------------------------------------------------------


_GL_ANNULUS = 64


def _annulus_angle(rho, c, r):
    """Angle of the circle of radius ``rho`` (around the centre) inside ``B_r`` at distance ``c``."""
    cosv = np.clip((rho**2 + c**2 - r**2) / (2.0 * rho * c), -1.0, 1.0)
    return 2.0 * np.arccos(cosv)


def ball_integral(gamma: float, dim: int, c: float, r: float, hole: float = 0.0, n_quad: int = _GL_ANNULUS) -> float:
    """``int_{B_r(x0) minus B_hole(0)} |x|^gamma dx`` with ``|x0| = c``.

    ``hole`` must not exceed the inner radius ``|c - r|`` of the
    off-centre annulus when ``0 < c``.
    """
    if dim == 1:
        return float(interval_integral(gamma, c - r, c + r, hole))
    inner = max(r - c, 0.0)
    total = 0.0
    if inner > hole:
        total += 2.0 * math.pi * float(_radial_moment(gamma + 1.0, hole, inner))
    if c > 0:
        a, b = abs(c - r), c + r
        if hole > a * (1 + 1e-12):
            raise ParameterError("hole radius exceeds the annulus inner radius")
        # rho = mid - half cos(theta) cancels the square-root behaviour at both ends
        x, w = np.polynomial.legendre.leggauss(n_quad)
        theta = 0.5 * math.pi * (x + 1.0)
        wt = 0.5 * math.pi * w
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        rho = mid - half * np.cos(theta)
        jac = half * np.sin(theta)
        total += float(np.sum(wt * jac * rho ** (gamma + 1.0) * _annulus_angle(rho, c, r)))
    return total


@dataclass(frozen=True)
class SamplingSpec:
    """Balls ``B_r(x0)`` used by :func:`ap_characteristic`.

    ``radii`` are log-spaced; ``offsets`` give ``|x0 - center| / r``
    (0 is concentric; every non-zero offset must be ``>= 1/2`` or ``>= 3/2``
    so the annulus stays clear of the cut disk). The centre is cut out with
    radius ``min(radii) * 2**-level`` for each entry of ``levels``;
    convergence means the last two levels agree to ``rtol``.
    """

    radii: tuple[float, ...] = tuple(np.logspace(-2, 2, 9))
    offsets: tuple[float, ...] = (0.0, 0.5, 2.0)
    levels: tuple[int, ...] = tuple(range(10, 201, 10))
    n_quad: int = _GL_ANNULUS
    rtol: float = 1e-2
    cap: float = 1e6

    def __post_init__(self):
        if not self.radii or min(self.radii) <= 0:
            raise ParameterError("radii must be positive")
        if any(o != 0 and abs(o - 1.0) < 0.5 for o in self.offsets):
            raise ParameterError("offsets must be 0 or at distance >= 1/2 from 1")
        if len(self.levels) < 2 or min(self.levels) < 1:
            raise ParameterError("need at least two refinement levels >= 1")


@dataclass(frozen=True)
class ApEstimate:
    """Empirical ``[w]_p``; ``diverged_at`` is the cut radius where the cap was crossed."""

    value: float
    converged: bool
    history: tuple[float, ...]
    cut_radii: tuple[float, ...]
    diverged_at: float | None = None

    def __float__(self) -> float:
        return self.value


def _ball_integrals(gamma, dim, c, r, holes, n_quad) -> np.ndarray:
    """:func:`ball_integral` for an array of hole radii (the annulus part is shared)."""
    holes = np.asarray(holes, dtype=float)
    if dim == 1:
        return np.asarray(interval_integral(gamma, c - r, c + r, holes), dtype=float)
    inner = max(r - c, 0.0)
    disk = np.where(inner > holes, 2.0 * math.pi * _radial_moment(gamma + 1.0, np.minimum(holes, inner), inner), 0.0)
    ring = ball_integral(gamma, dim, c, r, 0.0, n_quad) if c > 0 else 0.0
    if c > 0 and inner > 0:
        ring -= 2.0 * math.pi * float(_radial_moment(gamma + 1.0, 0.0, inner))
    return disk + ring


def _ball_products(w: PowerWeight, p: float, sampling: SamplingSpec, holes: np.ndarray) -> np.ndarray:
    """Running sup over balls of the ``A_p`` product, one entry per hole radius."""
    dual = -w.gamma / (p - 1.0)
    best = np.zeros(holes.size)
    if w.gamma == 0.0:
        return np.ones(holes.size)
    for r in sampling.radii:
        for off in sampling.offsets:
            c = off * r
            h = holes if off < 1.0 else np.zeros_like(holes)
            measure = _ball_integrals(0.0, w.dim, c, r, h, sampling.n_quad)
            with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
                a1 = _ball_integrals(w.gamma, w.dim, c, r, h, sampling.n_quad) / measure
                a2 = _ball_integrals(dual, w.dim, c, r, h, sampling.n_quad) / measure
                val = a1 * a2 ** (p - 1.0)
            val = np.where(np.isfinite(val), val, np.inf)
            low = val < 1.0 - 1e-9
            if np.any(low):
                raise QuadratureInconsistencyError(
                    f"ball average product {float(val[low][0])!r} < 1 "
                    f"(gamma={w.gamma}, p={p}, r={r}, offset={off})"
                )
            best = np.maximum(best, val)
    return best


def ap_characteristic(w: PowerWeight, p: float, sampling: SamplingSpec | None = None) -> ApEstimate:
    """Estimate ``[w]_p`` over the sampled balls.

    Returns an :class:`ApEstimate`; ``converged`` is False when refining the
    cut disk changes the estimate by more than ``sampling.rtol`` or the
    running estimate exceeds ``sampling.cap`` (the weight or its dual is
    not locally integrable).
    """
    if not 1.0 < p < math.inf:
        raise ParameterError(f"p must lie in (1, inf), got {p!r}")
    sampling = SamplingSpec() if sampling is None else sampling
    holes = min(sampling.radii) * 2.0 ** (-np.asarray(sampling.levels, dtype=float))
    history = _ball_products(w, p, sampling, holes)
    cuts = tuple(float(h) for h in holes)
    over = np.flatnonzero(~(history <= sampling.cap))
    if over.size:
        k = int(over[0])
        return ApEstimate(float(history[k]), False, tuple(map(float, history[: k + 1])), cuts[: k + 1], cuts[k])
    last, prev = float(history[-1]), float(history[-2])
    converged = abs(last - prev) <= sampling.rtol * prev
    return ApEstimate(last, converged, tuple(map(float, history)), cuts, None if converged else cuts[-1])


# --- cell weights and mixed norms -------------------------------------------------


def _axis_pieces(grid: SpaceGrid, c: float):
    """Per node, the periodic cell ``[x - dx/2, x + dx/2]`` split at ``+-L/2``,
    shifted so the weight centre sits at 0."""
    x = grid.axis_nodes
    h = 0.5 * grid.dx
    half = 0.5 * grid.L
    pieces = []
    for xi in x:
        lo, hi = xi - h, xi + h
        if lo < -half:
            parts = [(-half, hi), (lo + grid.L, half)]
        elif hi > half:
            parts = [(lo, half), (-half, hi - grid.L)]
        else:
            parts = [(lo, hi)]
        pieces.append([(a - c, b - c) for a, b in parts])
    return pieces


def _square_centre_integral(gamma: float, h: float, n: int = 64) -> float:
    """``int_{[-h,h]^2} |x|^gamma dx`` via polar coordinates (``gamma > -2``)."""
    if gamma <= -2.0:
        return math.inf
    x, w = np.polynomial.legendre.leggauss(n)
    theta = 0.125 * math.pi * (x + 1.0)
    ang = 0.125 * math.pi * np.sum(w * np.cos(theta) ** (-(gamma + 2.0)))
    return 8.0 * h ** (gamma + 2.0) / (gamma + 2.0) * ang


def cell_weights(w: PowerWeight, grid: SpaceGrid, n_sub: int = 8) -> np.ndarray:
    """Integral of ``w`` over every grid cell (not divided by the cell volume)."""
    if w.is_trivial:
        return np.full(grid.shape, grid.dx**grid.dim)
    if w.dim != grid.dim:
        raise ParameterError("weight and grid dimensions differ")
    if grid.dim == 1:
        pieces = _axis_pieces(grid, w.center[0])
        return np.array([sum(float(interval_integral(w.gamma, a, b)) for a, b in ps) for ps in pieces])
    px = _axis_pieces(grid, w.center[0])
    py = _axis_pieces(grid, w.center[1])
    xg, wg = np.polynomial.legendre.leggauss(n_sub)
    out = np.zeros(grid.shape)
    h = 0.5 * grid.dx
    for i, pi in enumerate(px):
        for j, pj in enumerate(py):
            total = 0.0
            for ax, bx in pi:
                for ay, by in pj:
                    if ax < 0 < bx and ay < 0 < by:
                        if not (math.isclose(-ax, h) and math.isclose(bx, h)
                                and math.isclose(-ay, h) and math.isclose(by, h)):
                            raise ParameterError("weight centre must sit on a grid node")
                        total += _square_centre_integral(w.gamma, h)
                        continue
                    xs = 0.5 * (bx - ax) * xg + 0.5 * (bx + ax)
                    ys = 0.5 * (by - ay) * xg + 0.5 * (by + ay)
                    r = np.sqrt(xs[:, None] ** 2 + ys[None, :] ** 2)
                    ww = np.outer(wg, wg) * 0.25 * (bx - ax) * (by - ay)
                    total += float(np.sum(ww * r**w.gamma))
            out[i, j] = total
    return out


def time_cell_weights(w: PowerWeight, tgrid: TimeGrid, T: float) -> np.ndarray:
    """Integral of ``w`` over ``[t_j - dt/2, t_j + dt/2] cap [0, T]`` for nodes ``t_j <= T``."""
    t = tgrid.nodes
    keep = t <= T * (1 + 1e-12)
    lo = np.clip(t[keep] - 0.5 * tgrid.dt, 0.0, T) - w.center[0]
    hi = np.clip(t[keep] + 0.5 * tgrid.dt, 0.0, T) - w.center[0]
    if w.is_trivial:
        return hi - lo
    return np.asarray(interval_integral(w.gamma, lo, hi), dtype=float)


@functools.lru_cache(maxsize=64)
def _cached_space_weights(w: PowerWeight, grid: SpaceGrid) -> np.ndarray:
    out = cell_weights(w, grid)
    out.setflags(write=False)
    return out


@functools.lru_cache(maxsize=64)
def _cached_time_weights(w: PowerWeight, tgrid: TimeGrid, T: float) -> np.ndarray:
    out = time_cell_weights(w, tgrid, T)
    out.setflags(write=False)
    return out


def mixed_norm_values(values: np.ndarray, spec: WeightedNormSpec, tgrid: TimeGrid, sgrid: SpaceGrid) -> float:
    """:func:`weighted_norm` of raw samples ``values`` (time on axis 0); cell weights are cached."""
    if spec.T > tgrid.t_end * (1 + 1e-12):
        raise ParameterError(f"T={spec.T} exceeds the field's time range {tgrid.t_end}")
    wt = _cached_time_weights(spec.w2, tgrid, spec.T)
    ws = _cached_space_weights(spec.w1, sgrid)
    vals = np.abs(np.asarray(values)[: wt.size])
    scale = float(np.max(vals)) if vals.size else 0.0
    if scale == 0.0:
        return 0.0
    axes = tuple(range(1, sgrid.dim + 1))
    with np.errstate(over="ignore", invalid="ignore"):
        inner = np.sum((vals / scale) ** spec.p * ws, axis=axes)
        total = np.sum(wt * inner ** (spec.q / spec.p))
        out = scale * total ** (1.0 / spec.q)
    if not math.isfinite(out):
        raise OverflowError(
            f"weighted norm is not finite for p={spec.p}, q={spec.q}, "
            f"gamma1={spec.w1.gamma}, gamma2={spec.w2.gamma}"
        )
    return float(out)


def weighted_norm(f, spec: WeightedNormSpec) -> float:
    """``||f||_{L_q((0,T), w2; L_p(w1))}`` with exact cell integrals of the weights."""
    return mixed_norm_values(f.values, spec, f.tgrid, f.sgrid)
