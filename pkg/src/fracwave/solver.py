r"""Periodic solver for :math:`\partial_t^\alpha u = \Delta u + f` with zero initial data.

Every Fourier mode obeys :math:`\partial_t^\alpha \hat u = -\lambda \hat u + \hat f`
with :math:`\lambda = |\xi|^2`, whose solution is the Duhamel integral

.. math::

    \hat u(t) = \int_0^t k(t-s) \hat f(s)\,ds, \qquad
    k(\tau) = \tau^{\alpha-1} E_{\alpha,\alpha}(-\lambda\tau^\alpha) = K'(\tau),
    \quad K(\tau) = \tau^\alpha E_{\alpha,\alpha+1}(-\lambda\tau^\alpha).

The integral is discretised by product quadrature: ``f`` is replaced by its
subinterval midpoint values (``order="midpoint"``) or by its piecewise-linear
interpolant (``order="linear"``, which also needs
:math:`K_2(\tau) = \tau^{\alpha+1}E_{\alpha,\alpha+2}(-\lambda\tau^\alpha)`), and
the kernel moments are integrated exactly.
"""

from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np
from scipy import signal

from fracwave import io
from fracwave.errors import InputDomainError, ParameterError, ShapeError
from fracwave.frac_ops import TimeGrid, TimeSeries, caputo_derivative_array, rl_integral_array
from fracwave.kernel import SpaceGrid
from fracwave.mittag_leffler import ml_batch

IMAG_TOLERANCE = 1e-8
ORDERS = ("midpoint", "linear")
_CACHE_SIZE = 8


@dataclass(frozen=True, eq=False)
class Field:
    """Samples ``u(t_j, x)`` with time on axis 0 and space on the remaining axes."""

    tgrid: TimeGrid
    sgrid: SpaceGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        expected = (self.tgrid.n_steps + 1,) + self.sgrid.shape
        if v.shape != expected:
            raise ShapeError(f"field shape {v.shape} does not match grids {expected}")
        if not np.all(np.isfinite(v)):
            raise InputDomainError("field contains non-finite values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, tgrid: TimeGrid, sgrid: SpaceGrid, fn) -> "Field":
        """Sample ``fn(t, *x)`` with broadcasting over the space-time mesh."""
        t = tgrid.nodes.reshape((-1,) + (1,) * sgrid.dim)
        xs = [c[None] for c in sgrid.mesh()]
        vals = np.broadcast_to(fn(t, *xs), (tgrid.n_steps + 1,) + sgrid.shape)
        return cls(tgrid, sgrid, vals)

    @classmethod
    def zeros(cls, tgrid: TimeGrid, sgrid: SpaceGrid) -> "Field":
        return cls(tgrid, sgrid, np.zeros((tgrid.n_steps + 1,) + sgrid.shape))

    def with_values(self, values) -> "Field":
        return Field(self.tgrid, self.sgrid, values)

    def same_grids(self, other: "Field") -> bool:
        return self.tgrid == other.tgrid and self.sgrid == other.sgrid

    def save(self, path, **meta):
        header = {"t_end": self.tgrid.t_end, "n_steps": self.tgrid.n_steps, **self.sgrid.to_dict(), **meta}
        return io.save_bundle(path, {"values": self.values}, header)

    @classmethod
    def load(cls, path) -> "Field":
        arrays, meta = io.load_bundle(path)
        tgrid = TimeGrid(meta["t_end"], meta["n_steps"])
        sgrid = SpaceGrid(meta["dim"], meta["L"], meta["n_points"])
        return cls(tgrid, sgrid, arrays["values"])


@dataclass(frozen=True)
class ModeSolution:
    lam: float
    fhat: TimeSeries
    uhat: TimeSeries


@dataclass(frozen=True)
class CheckReport:
    """Relative residual of the equation and of its weak form."""

    residual: float
    weak_form: float
    alpha: float
    n_steps: int
    n_points: int

    def max_error(self) -> float:
        return max(self.residual, self.weak_form)


# --- per-mode quadrature ---------------------------------------------------------


def _check_alpha(alpha):
    if not (0.0 < alpha < 2.0):
        raise ParameterError(f"alpha must lie in (0, 2), got {alpha!r}")


def _check_order(order):
    if order not in ORDERS:
        raise ParameterError(f"order must be one of {ORDERS}, got {order!r}")


def _moment(alpha: float, beta_shift: float, lams: np.ndarray, tau: np.ndarray) -> np.ndarray:
    """``tau^(alpha+b-1) E_{alpha,alpha+b}(-lam tau^alpha)`` on a (lam, tau) mesh, ``b = beta_shift``."""
    lt = lams[:, None] * tau[None, :] ** alpha
    vals = ml_batch(alpha, alpha + beta_shift, -lt)
    return tau[None, :] ** (alpha + beta_shift - 1.0) * vals


_weight_cache: "OrderedDict[tuple, tuple]" = OrderedDict()


def quadrature_weights(alpha: float, lams, dt: float, n_steps: int, order: str = "midpoint", T=None):
    """Convolution weights of the product rule for every ``lam``.

    Returns ``(W, V)`` of shape ``(len(lams), n_steps + 1)`` (index = lag
    ``m``; column 0 is zero). For ``order="midpoint"``

    ``u(t_n) = sum_m W[m] * (f_{n-m} + f_{n-m+1}) / 2``

    and for ``order="linear"``

    ``u(t_n) = sum_m (W[m] - V[m]) f_{n-m} + V[m] f_{n-m+1}``.

    ``T`` truncates the kernel to lags ``tau < T``.
    """
    _check_alpha(alpha)
    _check_order(order)
    lams = np.atleast_1d(np.asarray(lams, dtype=float))
    if np.any(lams < 0) or not np.all(np.isfinite(lams)):
        raise ParameterError("lambda must be finite and non-negative")
    key = (alpha, dt, n_steps, order, T, lams.tobytes())
    hit = _weight_cache.get(key)
    if hit is not None:
        _weight_cache.move_to_end(key)
        return hit

    m = np.arange(n_steps + 1, dtype=float)
    b = m * dt
    a = np.maximum(m - 1.0, 0.0) * dt
    if T is not None:
        b_cut, a_cut = np.minimum(b, T), np.minimum(a, T)
    else:
        b_cut, a_cut = b, a
    nodes, inv = np.unique(np.concatenate([a_cut, b_cut]), return_inverse=True)
    k1 = _moment(alpha, 1.0, lams, nodes)
    ka, kb = k1[:, inv[: n_steps + 1]], k1[:, inv[n_steps + 1 :]]
    w = kb - ka
    w[:, 0] = 0.0
    v = np.zeros_like(w)
    if order == "linear":
        k2 = _moment(alpha, 2.0, lams, nodes)
        k2a, k2b = k2[:, inv[: n_steps + 1]], k2[:, inv[n_steps + 1 :]]
        # int_a^b' k(tau) (b - tau) / dt dtau with b' = min(b, T)
        v = (b[None, :] * (kb - ka) - b_cut[None, :] * kb + a_cut[None, :] * ka + k2b - k2a) / dt
        v[:, 0] = 0.0
    out = (w, v)
    _weight_cache[key] = out
    if len(_weight_cache) > _CACHE_SIZE:
        _weight_cache.popitem(last=False)
    return out


def _causal(kernel: np.ndarray, data: np.ndarray) -> np.ndarray:
    """``out[n] = sum_{m=1..n} kernel[m] data[n-m]`` along axis 0 (both ``(n+1, M)``)."""
    n1 = data.shape[0]
    return signal.fftconvolve(kernel, data, axes=0)[:n1]


def _duhamel(fhat: np.ndarray, w: np.ndarray, v: np.ndarray, order: str) -> np.ndarray:
    """Apply the weights (``(n+1, M)`` each, lag on axis 0) to ``fhat`` ``(n+1, M)``."""
    f = np.asarray(fhat)
    shifted = np.zeros_like(f)
    shifted[:-1] = f[1:]  # shifted[j] = f_{j+1}
    if order == "midpoint":
        u = _causal(w, 0.5 * (f + shifted))
    else:
        u = _causal(w - v, f) + _causal(v, shifted)
    u[0] = 0.0
    return u


def solve_mode(lam: float, fhat: TimeSeries, alpha: float, order: str = "midpoint") -> TimeSeries:
    """Duhamel solution of one mode, ``u_hat(0) = 0``."""
    if not lam >= 0:
        raise ParameterError(f"lambda must be non-negative, got {lam!r}")
    g = fhat.grid
    w, v = quadrature_weights(alpha, [lam], g.dt, g.n_steps, order)
    f = fhat.values.reshape(g.n_steps + 1, -1)
    u = _duhamel(f.astype(complex), w.T, v.T, order)
    if fhat.values.dtype.kind != "c":
        u = u.real
    return fhat.with_values(u.reshape(fhat.values.shape))


def solve_mode_report(lam: float, fhat: TimeSeries, alpha: float, order: str = "midpoint") -> ModeSolution:
    return ModeSolution(float(lam), fhat, solve_mode(lam, fhat, alpha, order))


# --- fields --------------------------------------------------------------------


def _spatial_axes(sgrid: SpaceGrid) -> tuple[int, ...]:
    return tuple(range(1, sgrid.dim + 1))


def _symbol(sgrid: SpaceGrid, k: int, indices) -> np.ndarray:
    """Multiplier of the operator ``D^gamma`` (identity, ``d_i`` or ``d_i d_j``)."""
    xis = sgrid.frequency_mesh()
    if k == 0:
        return np.ones(sgrid.shape)
    nyq = np.abs(np.abs(sgrid.axis_frequencies) - np.pi / sgrid.dx) < 1e-9 / sgrid.dx

    def odd(i):
        shape = [1] * sgrid.dim
        shape[i] = -1
        return np.where(nyq.reshape(shape), 0.0, xis[i])

    idx = _check_indices(sgrid, k, indices)
    if k == 1:
        return 1j * odd(idx[0])
    i, j = idx
    return -(xis[i] ** 2) if i == j else -odd(i) * odd(j)


def _check_indices(sgrid, k, indices):
    if k not in (0, 1, 2):
        raise ParameterError(f"k must be 0, 1 or 2, got {k!r}")
    if indices is None:
        raise ParameterError(f"L_{k} needs {'an index i' if k == 1 else 'indices (i, j)'}")
    idx = tuple(int(i) for i in np.atleast_1d(indices))
    if len(idx) != k or any(not 0 <= i < sgrid.dim for i in idx):
        raise ParameterError(f"bad indices {indices!r} for L_{k} in dim {sgrid.dim}")
    return idx


def _real_part(vals: np.ndarray) -> np.ndarray:
    scale = float(np.max(np.abs(vals)))
    resid = float(np.max(np.abs(vals.imag)))
    if scale > 0 and resid > IMAG_TOLERANCE * scale:
        raise ArithmeticError(f"imaginary residue {resid / scale:.3e} exceeds {IMAG_TOLERANCE:.0e}")
    return vals.real


def _convolve_field(f: Field, alpha: float, multiplier: np.ndarray, order: str, T=None) -> Field:
    _check_alpha(alpha)
    _check_order(order)
    sg, tg = f.sgrid, f.tgrid
    axes = _spatial_axes(sg)
    fhat = np.fft.fftn(f.values, axes=axes).reshape(tg.n_steps + 1, -1)
    lam = sg.xi_sq().ravel()
    uniq, inv = np.unique(lam, return_inverse=True)
    w, v = quadrature_weights(alpha, uniq, tg.dt, tg.n_steps, order, T)
    uhat = _duhamel(fhat, w.T[:, inv], v.T[:, inv], order)
    uhat = uhat.reshape((tg.n_steps + 1,) + sg.shape) * multiplier
    return f.with_values(_real_part(np.fft.ifftn(uhat, axes=axes)))


def solve(f: Field, alpha: float, order: str = "midpoint") -> Field:
    """Solution of ``d_t^alpha u = Delta u + f`` with ``u(0) = 0`` (and ``u_t(0) = 0``)."""
    return _convolve_field(f, alpha, 1.0, order)


def apply_L(k: int, f: Field, alpha: float, T: float, indices=None, order: str = "midpoint") -> Field:
    """``L_k f``: the Duhamel convolution with ``D^gamma q`` over lags ``0 < t - s < T``.

    ``k=0`` uses ``q`` itself, ``k=1`` uses ``D_i q`` (``indices=i``) and
    ``k=2`` uses ``D_i D_j q`` (``indices=(i, j)``).
    """
    if not T > 0:
        raise ParameterError(f"T must be positive, got {T!r}")
    mult = _symbol(f.sgrid, k, indices if k else None) if k else 1.0
    if k == 0 and indices is not None:
        raise ParameterError("L_0 takes no indices")
    cut = None if T >= f.tgrid.t_end else float(T)
    return _convolve_field(f, alpha, mult, order, cut)


def spectral_derivative(u: Field, indices) -> Field:
    """``D_i u`` or ``D_i D_j u`` computed spectrally (same multipliers as :func:`apply_L`)."""
    idx = tuple(np.atleast_1d(indices))
    mult = _symbol(u.sgrid, len(idx), idx)
    axes = _spatial_axes(u.sgrid)
    return u.with_values(_real_part(np.fft.ifftn(np.fft.fftn(u.values, axes=axes) * mult, axes=axes)))


def laplacian(u: Field) -> Field:
    axes = _spatial_axes(u.sgrid)
    vals = np.fft.ifftn(-u.sgrid.xi_sq() * np.fft.fftn(u.values, axes=axes), axes=axes)
    return u.with_values(_real_part(vals))


def bump(sgrid: SpaceGrid, radius: float | None = None) -> np.ndarray:
    """Smooth compactly supported test function ``exp(-1/(1 - |x/rho|^2))``."""
    rho = sgrid.L / 4 if radius is None else radius
    r2 = (sgrid.radius() / rho) ** 2
    out = np.zeros(sgrid.shape)
    inside = r2 < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - r2[inside]))
    return out


def residual_and_weakform_check(u: Field, f: Field, alpha: float, phi: np.ndarray | None = None) -> CheckReport:
    """Residuals of ``d_t^alpha u = Delta u + f`` in strong and weak form.

    * strong: ``max |d^alpha u - Delta u - f| / max |f|`` with the Caputo
      derivative from :mod:`fracwave.frac_ops` at every spatial node and a
      spectral Laplacian;
    * weak: ``max_t |(u, phi) - I^alpha (f + Delta u, phi)| / max_t |(f, phi)|``
      for a bump ``phi``, with ``(Delta u, phi) = (u, Delta phi)``.
    """
    _check_alpha(alpha)
    if not u.same_grids(f):
        raise ShapeError("u and f live on different grids")
    n = u.tgrid.n_steps
    dt = u.tgrid.dt
    fmax = float(np.max(np.abs(f.values)))
    if fmax == 0.0 and not np.any(u.values):
        return CheckReport(0.0, 0.0, alpha, n, u.sgrid.n_points)
    flat = u.values.reshape(n + 1, -1)
    caputo = caputo_derivative_array(flat, alpha, dt).reshape(u.values.shape)
    resid = caputo - laplacian(u).values - f.values
    strong = float(np.max(np.abs(resid)) / fmax) if fmax else float(np.max(np.abs(resid)))

    phi = bump(u.sgrid) if phi is None else np.asarray(phi, dtype=float)
    cell = u.sgrid.dx**u.sgrid.dim
    axes = _spatial_axes(u.sgrid)
    lap_phi = np.fft.ifftn(-u.sgrid.xi_sq() * np.fft.fftn(phi)).real
    u_phi = np.sum(u.values * phi, axis=axes) * cell
    f_phi = np.sum(f.values * phi, axis=axes) * cell
    g_phi = f_phi + np.sum(u.values * lap_phi, axis=axes) * cell
    rhs = rl_integral_array(g_phi, alpha, dt)
    scale = float(np.max(np.abs(f_phi)))
    diff = float(np.max(np.abs(u_phi - rhs)))
    weak = diff / scale if scale else diff
    return CheckReport(strong, weak, alpha, n, u.sgrid.n_points)


def manufactured(tgrid: TimeGrid, sgrid: SpaceGrid, alpha: float) -> tuple[Field, Field]:
    """``u* = t^2 cos(2 pi x_1 / L)`` and its source ``f = d^alpha u* - Delta u*``."""
    k = 2.0 * math.pi / sgrid.L
    c = math.gamma(3.0) / math.gamma(3.0 - alpha)

    def u_fn(t, *xs):
        return t**2 * np.cos(k * xs[0])

    def f_fn(t, *xs):
        return (c * t ** (2.0 - alpha) + k * k * t**2) * np.cos(k * xs[0])

    return Field.from_function(tgrid, sgrid, u_fn), Field.from_function(tgrid, sgrid, f_fn)
