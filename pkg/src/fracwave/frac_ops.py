r"""Fractional integrals and derivatives on uniform time grids.

The Riemann-Liouville integral

.. math::

    I^\alpha \varphi(t) = \frac{1}{\Gamma(\alpha)} \int_0^t (t-s)^{\alpha-1}\varphi(s)\,ds

is approximated by product integration: :math:`\varphi` is replaced by its
piecewise-linear interpolant and the singular kernel moments are integrated
exactly on every subinterval. Derivatives are obtained by differentiating
:math:`I^{n-\alpha}\varphi` with second-order finite differences, and the
Caputo derivative subtracts the Taylor head first.

All routines accept arrays whose leading axis is time; trailing axes are
treated as independent columns.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import signal

from fracwave.errors import GridTooCoarseError, InputDomainError, ParameterError


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t_j = j * t_end / n_steps`` on ``[0, t_end]``."""

    t_end: float
    n_steps: int

    def __post_init__(self):
        if not (self.t_end > 0 and math.isfinite(self.t_end)):
            raise ParameterError(f"t_end must be positive and finite, got {self.t_end!r}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 2:
            raise ParameterError(f"n_steps must be an integer >= 2, got {self.n_steps!r}")
        object.__setattr__(self, "n_steps", int(self.n_steps))

    @property
    def dt(self) -> float:
        return self.t_end / self.n_steps

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt

    def refined(self, factor: int = 2) -> "TimeGrid":
        return TimeGrid(self.t_end, self.n_steps * factor)


@dataclass(frozen=True)
class TimeSeries:
    """Samples of a function at the nodes of a :class:`TimeGrid`.

    ``values`` may be real or complex; extra trailing axes are allowed.
    """

    grid: TimeGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.dtype.kind not in "fc":
            v = v.astype(float)
        if v.shape[:1] != (self.grid.n_steps + 1,):
            raise InputDomainError(
                f"expected {self.grid.n_steps + 1} samples along axis 0, got shape {v.shape}"
            )
        if not np.all(np.isfinite(v)):
            raise InputDomainError("time series contains non-finite values")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, grid: TimeGrid, fn) -> "TimeSeries":
        return cls(grid, fn(grid.nodes))

    def with_values(self, values) -> "TimeSeries":
        return TimeSeries(self.grid, values)


@dataclass(frozen=True)
class IdentityReport:
    semigroup_error: float
    inversion_error: float
    equivalence_error: float
    precondition_ok: bool
    alpha: float
    beta: float
    n_steps: int

    def max_error(self) -> float:
        return max(self.semigroup_error, self.inversion_error, self.equivalence_error)


def _second_difference_powers(p: float, k: np.ndarray) -> np.ndarray:
    """(k+1)^p - 2 k^p + (k-1)^p for integer k >= 1, without cancellation."""
    inv = 1.0 / k
    with np.errstate(divide="ignore"):
        return k**p * (np.expm1(p * np.log1p(inv)) + np.expm1(p * np.log1p(-inv)))


def product_trapezoid_weights(alpha: float, n_steps: int):
    """Weights of the piecewise-linear product rule for ``I^alpha``.

    Returns ``(start, conv)``: with ``c = dt**alpha / Gamma(alpha + 2)``,

    ``I^alpha phi(t_n) ~ c * (start[n] * phi_0 + sum_{j=1..n} conv[n-j] * phi_j)``.
    """
    p = alpha + 1.0
    k = np.arange(1, n_steps + 1, dtype=float)
    conv = np.empty(n_steps + 1)
    conv[0] = 1.0
    conv[1:] = _second_difference_powers(p, k)
    start = np.zeros(n_steps + 1)
    # (n-1)^{a+1} - (n-a-1) n^a
    with np.errstate(divide="ignore"):
        start[1:] = k**p * (np.expm1(p * np.log1p(-1.0 / k)) + p / k)
    return start, conv


def _convolve_time(kernel: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Causal convolution along axis 0, truncated to len(v)."""
    n = v.shape[0]
    if v.ndim == 1:
        return np.convolve(kernel[:n], v)[:n]
    shape = (n,) + (1,) * (v.ndim - 1)
    out = signal.fftconvolve(kernel[:n].reshape(shape), v, axes=0)
    return out[:n]


def rl_integral_array(values: np.ndarray, alpha: float, dt: float) -> np.ndarray:
    """Array form of :func:`rl_integral` (time on axis 0)."""
    if not (0.0 < alpha <= 2.0):
        raise ParameterError(f"alpha must lie in (0, 2], got {alpha!r}")
    v = np.asarray(values)
    if not np.all(np.isfinite(v)):
        raise InputDomainError("rl_integral received non-finite samples")
    n_steps = v.shape[0] - 1
    start, conv = product_trapezoid_weights(alpha, n_steps)
    out = np.zeros_like(v, dtype=np.result_type(v.dtype, float))
    tail = _convolve_time(conv, v[1:])
    bshape = (n_steps,) + (1,) * (v.ndim - 1)
    out[1:] = tail + start[1:].reshape(bshape) * v[0]
    out[1:] *= dt**alpha / math.gamma(alpha + 2.0)
    return out


def rl_integral(phi: TimeSeries, alpha: float) -> TimeSeries:
    """Riemann-Liouville integral of order ``alpha`` in (0, 2].

    Node 0 maps to exactly 0.
    """
    return phi.with_values(rl_integral_array(phi.values, alpha, phi.grid.dt))


def _derivative(v: np.ndarray, dt: float, order: int) -> np.ndarray:
    if order == 1:
        return np.gradient(v, dt, axis=0, edge_order=2)
    out = np.empty_like(v)
    out[1:-1] = (v[2:] - 2.0 * v[1:-1] + v[:-2]) / dt**2
    out[0] = (2.0 * v[0] - 5.0 * v[1] + 4.0 * v[2] - v[3]) / dt**2
    out[-1] = (2.0 * v[-1] - 5.0 * v[-2] + 4.0 * v[-3] - v[-4]) / dt**2
    return out


def _check_derivative_args(v, alpha):
    if not (0.0 < alpha < 2.0):
        raise ParameterError(f"alpha must lie in (0, 2), got {alpha!r}")
    if v.shape[0] - 1 < 4:
        raise GridTooCoarseError("fractional derivatives need n_steps >= 4")
    if not np.all(np.isfinite(v)):
        raise InputDomainError("fractional derivative received non-finite samples")


def rl_derivative_array(values: np.ndarray, alpha: float, dt: float) -> np.ndarray:
    v = np.asarray(values)
    _check_derivative_args(v, alpha)
    n = math.ceil(alpha)
    # alpha = 1 is the classical derivative: I^0 is the identity
    inner = v if n == alpha else rl_integral_array(v, n - alpha, dt)
    return _derivative(inner, dt, n)


def rl_derivative(phi: TimeSeries, alpha: float) -> TimeSeries:
    """Riemann-Liouville derivative ``(d/dt)^n I^{n-alpha} phi``, ``n = ceil(alpha)``."""
    return phi.with_values(rl_derivative_array(phi.values, alpha, phi.grid.dt))


def initial_slope(values: np.ndarray, dt: float) -> np.ndarray:
    """Second-order one-sided estimate of phi'(0)."""
    v = np.asarray(values)
    return (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * dt)


def caputo_head(values: np.ndarray, alpha: float, dt: float) -> np.ndarray:
    """Taylor head ``phi(0) + 1_{alpha>1} phi'(0) t`` sampled on the grid."""
    v = np.asarray(values)
    head = np.broadcast_to(v[0], v.shape).copy()
    if alpha > 1.0:
        t = np.arange(v.shape[0]) * dt
        head = head + t.reshape((-1,) + (1,) * (v.ndim - 1)) * initial_slope(v, dt)
    return head


def caputo_derivative_array(values: np.ndarray, alpha: float, dt: float) -> np.ndarray:
    v = np.asarray(values)
    _check_derivative_args(v, alpha)
    return rl_derivative_array(v - caputo_head(v, alpha, dt), alpha, dt)


def caputo_derivative(phi: TimeSeries, alpha: float) -> TimeSeries:
    """Caputo derivative: RL derivative of phi minus its Taylor head."""
    return phi.with_values(caputo_derivative_array(phi.values, alpha, phi.grid.dt))


def _rel_max(a, b) -> float:
    scale = np.max(np.abs(b))
    diff = np.max(np.abs(a - b))
    if scale == 0.0:
        return float(diff)
    return float(diff / scale)


def verify_calculus_identities(
    phi: TimeSeries, alpha: float, beta: float, head_tol: float = 1e-4
) -> IdentityReport:
    """Max-norm relative errors of three calculus identities on ``phi``.

    * semigroup: ``I^alpha I^beta phi`` against ``I^{alpha+beta} phi``;
    * inversion: ``I^alpha d^alpha phi`` against ``phi``;
    * equivalence: ``phi - phi(0) - 1_{alpha>1} phi'(0) t`` against
      ``I^alpha f`` with ``f = d^alpha phi``.

    ``precondition_ok`` is False when ``phi(0)`` (or ``phi'(0)`` for
    ``alpha > 1``) is not negligible; the errors are still reported.
    """
    if not (0.0 < alpha < 2.0 and 0.0 < beta < 2.0 and alpha + beta <= 2.0):
        raise ParameterError(
            f"need alpha, beta in (0, 2) with alpha + beta <= 2, got {alpha!r}, {beta!r}"
        )
    v = phi.values
    dt = phi.grid.dt
    scale = float(np.max(np.abs(v)))
    ok = abs(v[0]) <= head_tol * scale
    if alpha > 1.0:
        ok = ok and abs(initial_slope(v, dt)) * phi.grid.t_end <= head_tol * scale
    if scale == 0.0:
        return IdentityReport(0.0, 0.0, 0.0, True, alpha, beta, phi.grid.n_steps)

    semi = _rel_max(
        rl_integral_array(rl_integral_array(v, beta, dt), alpha, dt),
        rl_integral_array(v, alpha + beta, dt),
    )
    f = caputo_derivative_array(v, alpha, dt)
    back = rl_integral_array(f, alpha, dt)
    inv = _rel_max(back, v)
    equiv = _rel_max(back, v - caputo_head(v, alpha, dt))
    return IdentityReport(semi, inv, equiv, bool(ok), alpha, beta, phi.grid.n_steps)
