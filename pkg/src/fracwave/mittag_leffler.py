r"""Two-parameter Mittag-Leffler function on the non-positive real axis.

.. math::

    E_{\alpha,\beta}(z) = \sum_{k\ge0} \frac{z^k}{\Gamma(\alpha k + \beta)},
    \qquad 0 < \alpha \le 2,\ 0 < \beta \le 4,\ z \le 0.

With ``x = -z`` and ``r0 = x**(1/alpha)`` (the modulus of the poles of the
Laplace-domain representation) three evaluation paths are used:

* ``r0 <= SERIES_RADIUS``: Taylor series, Kahan-compensated.
* ``r0 >= ASYMPTOTIC_RADIUS``: algebraic asymptotic expansion with optimal
  truncation, plus the pole residues when ``alpha > 1``.
* in between: Laplace inversion along a contour made of an arc of radius one
  and two rays ``arg s = +-phi``; the residues of poles inside the sector are
  added explicitly.

Every path is elementwise, so :func:`ml_batch` reproduces scalar calls
bitwise.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from fracwave.errors import InputDomainError, ParameterError, UnsupportedDomainError

SERIES_RADIUS = 5.0
ASYMPTOTIC_RADIUS = 40.0

_GL_ARC = 48
_GL_PANEL = 16
_CHUNK = 2048


@dataclass(frozen=True)
class MLQuery:
    alpha: float
    beta: float
    z: float

    def __post_init__(self):
        _check_params(self.alpha, self.beta)
        if not math.isfinite(self.z):
            raise InputDomainError(f"z must be finite, got {self.z!r}")
        if self.z > 0:
            raise UnsupportedDomainError(f"only z <= 0 is supported, got z={self.z!r}")

    def evaluate(self) -> float:
        return ml_eval(self.alpha, self.beta, self.z)


def _check_params(alpha, beta):
    if not (0.0 < alpha <= 2.0) or not math.isfinite(alpha):
        raise ParameterError(f"alpha must lie in (0, 2], got {alpha!r}")
    if not (0.0 < beta <= 4.0) or not math.isfinite(beta):
        raise ParameterError(f"beta must lie in (0, 4], got {beta!r}")


def ml_eval(alpha: float, beta: float, z: float) -> float:
    """Evaluate :math:`E_{\\alpha,\\beta}(z)` for a single ``z <= 0``."""
    MLQuery(float(alpha), float(beta), float(z))
    return float(_ml_neg(float(alpha), float(beta), np.array([-float(z)]))[0])


def ml_batch(alpha: float, beta: float, zs) -> np.ndarray:
    """Elementwise :func:`ml_eval` over an array of non-positive arguments.

    The output has the shape of ``zs``.
    """
    alpha = float(alpha)
    beta = float(beta)
    _check_params(alpha, beta)
    z = np.asarray(zs, dtype=float)
    flat = z.ravel()
    bad = np.flatnonzero(~np.isfinite(flat))
    if bad.size:
        raise InputDomainError(f"non-finite argument at index {int(bad[0])}")
    bad = np.flatnonzero(flat > 0)
    if bad.size:
        i = int(bad[0])
        raise UnsupportedDomainError(
            f"only z <= 0 is supported; zs[{i}] = {flat[i]!r}"
        )
    return _ml_neg(alpha, beta, -flat).reshape(z.shape)


def _ml_neg(alpha: float, beta: float, x: np.ndarray) -> np.ndarray:
    """E_{alpha,beta}(-x) for x >= 0 (no validation)."""
    out = np.empty_like(x)
    r0 = x ** (1.0 / alpha)
    series = r0 <= SERIES_RADIUS
    asym = r0 >= ASYMPTOTIC_RADIUS
    middle = ~(series | asym)
    if series.any():
        out[series] = _series(alpha, beta, x[series])
    if asym.any():
        out[asym] = _asymptotic(alpha, beta, x[asym])
    if middle.any():
        xm = x[middle]
        vals = np.empty_like(xm)
        for lo in range(0, xm.size, _CHUNK):
            vals[lo : lo + _CHUNK] = _contour(alpha, beta, xm[lo : lo + _CHUNK])
        out[middle] = vals
    return out


@functools.lru_cache(maxsize=None)
def _series_coeffs(alpha: float, beta: float) -> np.ndarray:
    # R^{alpha k} / Gamma(alpha k + beta) < 1e-20 for R = SERIES_RADIUS
    n_terms = int(math.ceil(55.0 / alpha)) + 8
    k = np.arange(n_terms, dtype=float)
    return special.rgamma(alpha * k + beta)


def _series(alpha, beta, x):
    coeffs = _series_coeffs(alpha, beta)
    total = np.zeros_like(x)
    comp = np.zeros_like(x)
    power = np.ones_like(x)
    for c in coeffs:
        y = power * c - comp
        t = total + y
        comp = (t - total) - y
        total = t
        power = power * (-x)
    return total


def _residues(alpha, beta, x):
    """Contribution of the two conjugate poles s**alpha = -x (alpha > 1)."""
    s = x ** (1.0 / alpha) * np.exp(1j * math.pi / alpha)
    return (2.0 / alpha) * np.real(np.exp(s + (1.0 - beta) * np.log(s)))


def _asymptotic(alpha, beta, x):
    total = np.zeros_like(x)
    active = np.ones(x.shape, dtype=bool)
    log_x = np.log(x)
    prev_env = np.full_like(x, np.inf)
    step = -1.0 / x
    power = np.ones_like(x)
    k_max = min(int(math.ceil(80.0 / alpha)) + 10, 4000)
    for k in range(1, k_max + 1):
        a = beta - alpha * k
        if a < -170.0:
            break
        power = power * step
        term = -power * special.rgamma(a)
        if 1.0 - a >= 1.0:
            # |1/Gamma(a)| <= Gamma(1 - a)/pi; truncate where this envelope turns up
            env = special.gammaln(1.0 - a) - k * log_x
            active &= env <= prev_env
            prev_env = env
        total = np.where(active, total + term, total)
        if 1.0 - a >= 1.0:
            active &= env > math.log(1e-18) + np.log(np.abs(total) + 1e-300)
        if not active.any():
            break
    if alpha > 1.0:
        total = total + _residues(alpha, beta, x)
    return total


@functools.lru_cache(maxsize=None)
def _contour_setup(alpha: float):
    """Ray angle and quadrature nodes/weights along the upper contour half."""
    phis = np.linspace(0.55 * math.pi, math.pi, 451)
    sep = np.minimum(np.abs(alpha * phis - math.pi), math.pi / 2)
    score = np.minimum(-np.cos(phis), np.sin(sep))
    phi = float(phis[int(np.argmax(score))])

    xg, wg = np.polynomial.legendre.leggauss(_GL_ARC)
    theta = 0.5 * phi * (xg + 1.0)
    arc_s = np.exp(1j * theta)
    arc_w = 0.5 * phi * wg * 1j * arc_s  # ds = i e^{i theta} d theta

    r_max = 1.0 + 62.0 / -math.cos(phi)
    edges = [1.0]
    while edges[-1] < min(8.0, r_max):
        edges.append(edges[-1] * 1.25)
    while edges[-1] < r_max:
        edges.append(edges[-1] + 2.5)
    xp, wp = np.polynomial.legendre.leggauss(_GL_PANEL)
    rs, ws = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        rs.append(0.5 * (b - a) * xp + 0.5 * (b + a))
        ws.append(0.5 * (b - a) * wp)
    r = np.concatenate(rs)
    direction = np.exp(1j * phi)
    ray_s = r * direction
    ray_w = np.concatenate(ws) * direction

    s = np.concatenate([arc_s, ray_s])
    w = np.concatenate([arc_w, ray_w])
    log_s = np.concatenate([1j * theta, np.log(r) + 1j * phi])
    return phi, s, w, log_s


def _contour(alpha, beta, x):
    phi, s, w, log_s = _contour_setup(alpha)
    num = np.exp(s + (alpha - beta) * log_s) * w
    s_alpha = np.exp(alpha * log_s)
    vals = num[None, :] / (s_alpha[None, :] + x[:, None])
    total = np.sum(vals, axis=1).imag / math.pi
    if alpha > 1.0 and math.pi / alpha < phi:
        total = total + _residues(alpha, beta, x)
    return total
