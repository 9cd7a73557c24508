r"""Fundamental solution ``p`` and source kernel ``q`` on a periodic box.

Both kernels are built in frequency space:

.. math::

    \hat p(t,\xi) = E_{\alpha,1}(-|\xi|^2 t^\alpha), \qquad
    \hat q(t,\xi) = t^{\alpha-1} E_{\alpha,\alpha}(-|\xi|^2 t^\alpha).

For ``alpha != 1`` the symbol of ``q`` decays only algebraically,
``q_hat ~ sum_k a_k |xi|^{-2k}``, which makes ``D^2 q`` non-smooth at the
origin (a kink in 1d, a logarithmic singularity in 2d). The leading tail
terms are therefore matched by a combination of Bessel-potential symbols
``(1 + |xi|^2)^{-s}`` whose real-space kernels are known in closed form
(Matern functions); only the smooth remainder goes through the DFT.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage, special

from fracwave.errors import DomainTooSmallError, OutOfRangeError, ParameterError
from fracwave.mittag_leffler import ml_batch

WRAP_TOLERANCE = 1e-10
NOISE_FLOOR = 1e-11
SIGMA_SAFETY = 0.98
TAIL_TERMS = 2


@dataclass(frozen=True)
class SpaceGrid:
    """Periodic grid on ``[-L/2, L/2)^dim`` with ``n_points`` nodes per axis."""

    dim: int
    L: float
    n_points: int

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ParameterError(f"dim must be 1 or 2, got {self.dim!r}")
        if not (self.L > 0 and math.isfinite(self.L)):
            raise ParameterError(f"L must be positive, got {self.L!r}")
        if self.n_points < 8 or self.n_points % 2:
            raise ParameterError(f"n_points must be even and >= 8, got {self.n_points!r}")

    @property
    def dx(self) -> float:
        return self.L / self.n_points

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n_points,) * self.dim

    @property
    def axis_nodes(self) -> np.ndarray:
        return -0.5 * self.L + np.arange(self.n_points) * self.dx

    @property
    def axis_frequencies(self) -> np.ndarray:
        """Angular frequencies in FFT order."""
        return 2.0 * np.pi * np.fft.fftfreq(self.n_points, self.dx)

    def mesh(self) -> list[np.ndarray]:
        return np.meshgrid(*([self.axis_nodes] * self.dim), indexing="ij")

    def frequency_mesh(self) -> list[np.ndarray]:
        return np.meshgrid(*([self.axis_frequencies] * self.dim), indexing="ij")

    def radius(self) -> np.ndarray:
        return np.sqrt(sum(c**2 for c in self.mesh()))

    def xi_sq(self) -> np.ndarray:
        return sum(k**2 for k in self.frequency_mesh())

    def refined(self, factor: int = 2) -> "SpaceGrid":
        return SpaceGrid(self.dim, self.L, self.n_points * factor)

    def to_dict(self) -> dict:
        return {"dim": self.dim, "L": self.L, "n_points": self.n_points}


def q_hat_symbol(t, xi_sq, alpha: float):
    """Fourier symbol of ``q(t, .)``: ``t^(alpha-1) E_{alpha,alpha}(-xi_sq t^alpha)``."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ParameterError("q_hat_symbol needs t > 0")
    xi_sq = np.asarray(xi_sq, dtype=float)
    if np.any(xi_sq < 0):
        raise ParameterError("xi_sq must be non-negative")
    out = t ** (alpha - 1.0) * _ml_unique(alpha, alpha, -xi_sq * t**alpha)
    return out if out.ndim else float(out)


def p_hat_symbol(t, xi_sq, alpha: float):
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ParameterError("p_hat_symbol needs t > 0")
    out = _ml_unique(alpha, 1.0, -np.asarray(xi_sq, dtype=float) * t**alpha)
    return out if out.ndim else float(out)


def _ml_unique(alpha, beta, z):
    z = np.asarray(z, dtype=float)
    uniq, inv = np.unique(z, return_inverse=True)
    return ml_batch(alpha, beta, uniq)[inv].reshape(z.shape)


# --- Bessel-potential (Matern) tail terms -------------------------------------


def tail_coefficients(alpha: float, t: float, n_terms: int = TAIL_TERMS) -> dict[int, float]:
    """Weights ``b_s`` so that ``sum_s b_s (1+r^2)^{-s}`` matches the first
    ``n_terms`` algebraic tail terms of ``q_hat(t, r)`` at large ``r``."""
    # E_{a,a}(-y) ~ sum_{k>=1} (-1)^{k+1} y^{-k} / Gamma(a - a k); k = 1 vanishes
    ks = range(2, 2 + n_terms)
    a = {k: (-1) ** (k + 1) * special.rgamma(alpha - alpha * k) * t ** (alpha - 1 - alpha * k) for k in ks}
    b: dict[int, float] = {}
    for k in ks:
        acc = a[k]
        for s, bs in b.items():
            m = k - s
            acc -= bs * (-1) ** m * special.comb(s + m - 1, m, exact=True)
        b[k] = float(acc)
    if all(abs(v) == 0.0 for v in b.values()):
        return {}
    return b


def _bessel_k(r: np.ndarray, top: float) -> dict[float, np.ndarray]:
    """``K_mu(r)`` for ``mu = base, base+1, ..., top`` with ``base`` in {0, 1/2}.

    Uses closed forms / ``k0``, ``k1`` and the upward recurrence
    ``K_{mu+1} = K_{mu-1} + (2 mu / r) K_mu``, which is stable for K.
    """
    if float(top).is_integer():
        ks = {0.0: special.k0(r), 1.0: special.k1(r)}
        mu = 1.0
    else:
        half = np.sqrt(0.5 * np.pi / r) * np.exp(-r)
        ks = {0.5: half, 1.5: half * (1.0 + 1.0 / r)}
        mu = 1.5
    while mu < top:
        ks[mu + 1] = ks[mu - 1] + (2.0 * mu / r) * ks[mu]
        mu += 1.0
    return ks


class _Matern:
    """Radial kernel ``g(r) = C r^nu K_nu(r)`` with ``FT[g] = (1+|xi|^2)^{-s}``.

    Methods take a table of ``K_mu(r)`` from :func:`_bessel_k`
    (``K_{-mu} = K_mu``).
    """

    def __init__(self, s: int, dim: int):
        self.nu = s - dim / 2.0
        self.c = 2.0 ** (1 - s) / ((2 * np.pi) ** (dim / 2.0) * math.gamma(s))

    def value(self, r, ks):
        return self.c * r**self.nu * ks[abs(self.nu)]

    def value0(self):
        return self.c * math.gamma(self.nu) * 2.0 ** (self.nu - 1)

    def d1_over_r(self, r, ks):
        """g'(r) / r."""
        return -self.c * r ** (self.nu - 1) * ks[abs(self.nu - 1)]

    def d2(self, r, ks):
        return self.c * (r**self.nu * ks[abs(self.nu - 2)] - r ** (self.nu - 1) * ks[abs(self.nu - 1)])

    def d2_at0(self):
        """Isotropic limit of the Hessian at r = 0 (finite for nu > 1)."""
        return -self.c * math.gamma(self.nu - 1) * 2.0 ** (self.nu - 2)


_IMAGE_CUTOFF = 40.0  # K_nu(r) ~ e^{-r}: images farther than this are below 1e-17
_ORIGIN_RADIUS = 1e-12  # below this the origin limits are used (the K recurrence overflows near 0)


def _matern_component(terms: dict[int, float], pts: np.ndarray, L: float, gamma, cell: float) -> np.ndarray:
    """Periodised ``D^gamma sum_s b_s g_s`` at points ``pts`` (..., dim).

    For ``|x| < 1e-12`` value and gradient take their limits at 0; the Hessian takes its
    isotropic limit where finite and otherwise (log-singular, 2d) the
    average over the grid cell of width ``cell`` centred at the origin.
    """
    dim = pts.shape[-1]
    order = sum(gamma)
    axes = [i for i, k in enumerate(gamma) for _ in range(k)]
    flat = pts.reshape(-1, dim)
    out = np.zeros(flat.shape[0])
    if not terms:
        return out.reshape(pts.shape[:-1])
    reach = int(math.ceil(_IMAGE_CUTOFF / L))
    for shift in itertools.product(range(-reach, reach + 1), repeat=dim):
        xs = flat + L * np.asarray(shift, dtype=float)
        r = np.sqrt(np.sum(xs**2, axis=1))
        near = r < _IMAGE_CUTOFF
        idx = np.flatnonzero(near & (r >= _ORIGIN_RADIUS))
        zero = np.flatnonzero(r < _ORIGIN_RADIUS)
        rr, xx = r[idx], xs[idx]
        ks = _bessel_k(rr, max(terms) - dim / 2.0)
        for s, bs in terms.items():
            g = _Matern(s, dim)
            if order == 0:
                out[idx] += bs * g.value(rr, ks)
                out[zero] += bs * g.value0()
            elif order == 1:
                out[idx] += bs * g.d1_over_r(rr, ks) * xx[:, axes[0]]
            else:
                i, j = axes
                h1 = g.d1_over_r(rr, ks)
                xij = xx[:, i] * xx[:, j] / rr**2
                out[idx] += bs * (g.d2(rr, ks) * xij + h1 * ((i == j) - xij))
                if i == j:
                    out[zero] += bs * (g.d2_at0() if g.nu > 1 else _origin_hessian(g, cell))
    return out.reshape(pts.shape[:-1])


def _matern_tables(terms: dict[int, float], grid: SpaceGrid):
    """Periodised value, gradient and Hessian of ``sum_s b_s g_s`` on the grid."""
    d = grid.dim
    pts = np.stack(grid.mesh(), axis=-1)
    val = _matern_component(terms, pts, grid.L, (0,) * d, grid.dx)
    grad = np.zeros((d,) + grid.shape)
    hess = np.zeros((d, d) + grid.shape)
    if not terms:
        return val, grad, hess
    for i in range(d):
        grad[i] = _matern_component(terms, pts, grid.L, tuple(int(k == i) for k in range(d)), grid.dx)
        for j in range(i, d):
            gam = tuple(int(k == i) + int(k == j) for k in range(d))
            hess[i, j] = _matern_component(terms, pts, grid.L, gam, grid.dx)
            hess[j, i] = hess[i, j]
    return val, grad, hess


def _origin_hessian(g: _Matern, h: float) -> float:
    # log-singular (2d): cell average of D_ii g = (1/2) flux of grad g / cell area
    x, w = np.polynomial.legendre.leggauss(64)
    y = 0.5 * h * x
    r = np.sqrt(0.25 * h * h + y * y)
    integral = 0.5 * h * np.sum(w * g.d1_over_r(r, _bessel_k(r, g.nu + 1)))
    return integral / h


# --- tables --------------------------------------------------------------------


def _multi_indices(dim: int, order: int):
    return [g for g in itertools.product(range(order + 1), repeat=dim) if sum(g) == order]


@dataclass(frozen=True, eq=False)
class KernelTable:
    """``q``, ``D q``, ``D^2 q`` and ``p`` tabulated at one time slice ``t``.

    Arrays are indexed in node order (index 0 is ``x = -L/2``).
    """

    alpha: float
    grid: SpaceGrid
    t: float
    q: np.ndarray = field(repr=False)
    grad: np.ndarray = field(repr=False)
    hess: np.ndarray = field(repr=False)
    p: np.ndarray = field(repr=False)
    tail: dict = field(default_factory=dict)
    imag_residue: float = 0.0
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def smooth_part(self, deriv) -> np.ndarray:
        """``D^gamma q`` minus the closed-form tail terms: the smooth remainder."""
        gamma = _as_multi_index(deriv, self.grid.dim)
        arr = self.component(gamma)
        if not self.tail:
            return arr
        if "matern" not in self._cache:
            self._cache["matern"] = _matern_tables(self.tail, self.grid)
        val, grad, hess = self._cache["matern"]
        return arr - KernelTable._pick(gamma, val, grad, hess)

    def spline(self, key) -> np.ndarray:
        """Cached periodic cubic B-spline coefficients of ``p`` (key ``"p"``) or
        of the smooth part of ``D^gamma q`` (key: multi-index)."""
        if key not in self._cache:
            arr = self.p if key == "p" else self.smooth_part(key)
            self._cache[key] = ndimage.spline_filter(arr, order=3, mode="grid-wrap")
        return self._cache[key]

    @staticmethod
    def _pick(gamma, val, grad, hess):
        axes = [i for i, k in enumerate(gamma) for _ in range(k)]
        if not axes:
            return val
        if len(axes) == 1:
            return grad[axes[0]]
        return hess[axes[0], axes[1]]

    def component(self, deriv) -> np.ndarray:
        """Table of ``D^gamma q`` for a multi-index ``deriv``."""
        deriv = _as_multi_index(deriv, self.grid.dim)
        if sum(deriv) > 2:
            raise ParameterError(f"derivative order must be <= 2, got {deriv}")
        return self._pick(deriv, self.q, self.grad, self.hess)

    def magnitude(self, m: int) -> np.ndarray:
        """Pointwise max over ``|gamma| = m`` of ``|D^gamma q|``."""
        comps = [np.abs(self.component(g)) for g in _multi_indices(self.grid.dim, m)]
        return np.max(comps, axis=0)

    def mass(self) -> float:
        return float(np.sum(self.p) * self.grid.dx**self.grid.dim)

    def checksum(self) -> str:
        h = hashlib.sha256()
        for arr in (self.q, self.grad, self.hess, self.p):
            h.update(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        return h.hexdigest()

    def header(self) -> dict:
        return {
            "alpha": self.alpha,
            "t": self.t,
            **self.grid.to_dict(),
            "checksum": self.checksum(),
            "tail": {str(k): v for k, v in self.tail.items()},
            "arrays": ["q", "grad", "hess", "p"],
            "dtype": "<f8",
        }


def _as_multi_index(deriv, dim):
    if deriv is None or deriv == 0:
        return (0,) * dim
    deriv = tuple(int(k) for k in np.atleast_1d(deriv))
    if len(deriv) != dim or any(k < 0 for k in deriv):
        raise ParameterError(f"bad multi-index {deriv} for dim {dim}")
    return deriv


def _inverse_dft(symbol: np.ndarray, grid: SpaceGrid):
    vals = np.fft.ifftn(symbol) * (grid.n_points / grid.L) ** grid.dim
    vals = np.fft.fftshift(vals)
    scale = np.max(np.abs(vals.real))
    resid = float(np.max(np.abs(vals.imag)) / scale) if scale > 0 else 0.0
    return vals.real, resid


def _axis_mask(mask_1d, axis, dim):
    shape = [1] * dim
    shape[axis] = -1
    return mask_1d.reshape(shape)


def build_kernel_table(alpha: float, grid: SpaceGrid, t: float = 1.0, check_wrap: bool = True) -> KernelTable:
    """Tabulate ``q(t, .)``, its first and second derivatives, and ``p(t, .)``.

    Raises :class:`DomainTooSmallError` when the fitted tail bound predicts a
    wrap-around contribution above ``WRAP_TOLERANCE`` (relative).
    """
    if not (0.0 < alpha < 2.0):
        raise ParameterError(f"alpha must lie in (0, 2), got {alpha!r}")
    if t <= 0:
        raise ParameterError("t must be positive")
    d = grid.dim
    xis = grid.frequency_mesh()
    xi_sq = grid.xi_sq()

    terms = tail_coefficients(alpha, t)
    q_sym = q_hat_symbol(t, xi_sq, alpha)
    for s, bs in terms.items():
        q_sym = q_sym - bs * (1.0 + xi_sq) ** (-s)
    m_val, m_grad, m_hess = _matern_tables(terms, grid)

    resid = 0.0
    q, r = _inverse_dft(q_sym, grid)
    resid = max(resid, r)
    q = q + m_val
    grad = np.empty((d,) + grid.shape)
    hess = np.empty((d, d) + grid.shape)
    # odd powers of xi at the unpaired Nyquist mode would break Hermitian symmetry
    nyq = np.abs(np.abs(grid.axis_frequencies) - np.pi / grid.dx) < 1e-9 / grid.dx
    xis_odd = [np.where(_axis_mask(nyq, i, d), 0.0, k)
               for i, k in enumerate(xis)]
    for i in range(d):
        g, r = _inverse_dft(1j * xis_odd[i] * q_sym, grid)
        resid = max(resid, r)
        grad[i] = g + m_grad[i]
        for j in range(i, d):
            prod = xis[i] ** 2 if i == j else xis_odd[i] * xis_odd[j]
            h, r = _inverse_dft(-prod * q_sym, grid)
            resid = max(resid, r)
            hess[i, j] = h + m_hess[i, j]
            hess[j, i] = hess[i, j]
    p, r = _inverse_dft(p_hat_symbol(t, xi_sq, alpha), grid)
    resid = max(resid, r)
    if resid > 1e-10:
        raise ParameterError(f"imaginary residue {resid:.3e} exceeds 1e-10; symbol not even?")

    table = KernelTable(alpha, grid, float(t), q, grad, hess, p, terms, resid)
    for arr in (table.q, table.grad, table.hess, table.p):
        arr.setflags(write=False)
    if check_wrap:
        check_wraparound(table)
    return table


def check_wraparound(table: KernelTable, tol: float = WRAP_TOLERANCE) -> float:
    """Predicted relative size of ``q`` at the box edge from the fitted tail bound."""
    fit = fit_far_bound(table, 0)
    kappa = 2.0 / (2.0 - table.alpha)
    scale = float(np.max(np.abs(table.q)))
    edge = table.grid.L / 2 * table.t ** (-table.alpha / 2)
    predicted = fit.N * math.exp(-fit.sigma * edge**kappa) / scale
    if not predicted < tol:
        need = (math.log(fit.N / (tol * scale)) / fit.sigma) ** (1.0 / kappa) if fit.sigma > 0 else float("inf")
        suggested = 2.0 * need * table.t ** (table.alpha / 2) * 1.1
        raise DomainTooSmallError(
            f"box L={table.grid.L} predicts wrap-around {predicted:.2e} > {tol:.0e}; "
            f"try L >= {suggested:.1f}",
            suggested_L=suggested,
        )
    return predicted


# --- evaluation via scaling ---------------------------------------------------------


def _interp_periodic(arr: np.ndarray, grid: SpaceGrid, pts: np.ndarray, order: int) -> np.ndarray:
    """Periodic interpolation at ``pts`` (..., dim).

    ``order=3`` expects prefiltered B-spline coefficients; ``order=1`` is
    multilinear on raw node values.
    """
    u = (pts + 0.5 * grid.L) / grid.dx
    coords = np.moveaxis(u, -1, 0).reshape(grid.dim, -1)
    vals = ndimage.map_coordinates(arr, coords, order=order, mode="grid-wrap", prefilter=False)
    return vals.reshape(pts.shape[:-1])


_METHODS = ("cubic", "linear")


def eval_q(table: KernelTable, t, x, deriv=0, method: str = "cubic"):
    """``D^gamma q(t, x)`` from the table through the scaling law

    ``D^gamma q(t, x) = (t/t0)^{(-d/2 + 1 - |gamma|/2) alpha - 1} D^gamma q(t0, x (t/t0)^{-alpha/2})``

    where ``t0`` is the table's time slice (normally 1). ``x`` has shape
    ``(..., dim)`` (a scalar or 1-d array is accepted in 1d).

    ``method="cubic"`` interpolates the smooth remainder with periodic cubic
    splines and adds the closed-form tail terms exactly at the scaled point;
    ``method="linear"`` interpolates the full table multilinearly.
    """
    if method not in _METHODS:
        raise ParameterError(f"method must be one of {_METHODS}, got {method!r}")
    d = table.grid.dim
    gamma = _as_multi_index(deriv, d)
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ParameterError("eval_q needs t > 0")
    pts = np.asarray(x, dtype=float)
    if d == 1 and (pts.ndim == 0 or pts.shape[-1] != 1):
        pts = pts[..., None]
    ratio = t / table.t
    scaled = pts * (ratio ** (-table.alpha / 2))[..., None]
    half = 0.5 * table.grid.L
    if np.any(np.abs(scaled) > half):
        raise OutOfRangeError("scaled point lies outside the tabulated box")
    if method == "linear":
        vals = _interp_periodic(table.component(gamma), table.grid, scaled, 1)
    else:
        vals = _interp_periodic(table.spline(gamma), table.grid, scaled, 3)
        vals = vals + _matern_component(table.tail, scaled, table.grid.L, gamma, table.grid.dx)
    power = (-d / 2 + 1 - sum(gamma) / 2) * table.alpha - 1
    out = ratio**power * vals
    return out if out.ndim else float(out)


def eval_p(table: KernelTable, t, x, outside: str = "raise"):
    """``p(t, x) = (t/t0)^{-alpha d/2} p(t0, x (t/t0)^{-alpha/2})``.

    With ``outside="zero"`` points beyond the box return 0 (the tail is
    below the wrap tolerance there).
    """
    d = table.grid.dim
    pts = np.asarray(x, dtype=float)
    if d == 1 and (pts.ndim == 0 or pts.shape[-1] != 1):
        pts = pts[..., None]
    ratio = np.asarray(t, dtype=float) / table.t
    scaled = pts * (ratio ** (-table.alpha / 2))[..., None]
    inside = np.all(np.abs(scaled) <= 0.5 * table.grid.L, axis=-1)
    if outside == "raise" and not np.all(inside):
        raise OutOfRangeError("scaled point lies outside the tabulated box")
    vals = _interp_periodic(table.spline("p"), table.grid, np.where(inside[..., None], scaled, 0.0), 3)
    out = np.where(inside, ratio ** (-table.alpha * d / 2) * vals, 0.0)
    return out if out.ndim else float(out)


# --- bound fitting ------------------------------------------------------------------


@dataclass(frozen=True)
class KernelBoundFit:
    """Constants of a pointwise bound on ``|D^m q(1, x)|`` over one region."""

    N: float
    sigma: float
    m: int
    region: str
    epsilon: float | None = None
    n_nodes: int = 0
    violated: bool = False


@dataclass(frozen=True)
class KernelBoundReport:
    far: KernelBoundFit
    near: KernelBoundFit
    family: tuple[KernelBoundFit, ...]

    @property
    def ok(self) -> bool:
        fits = (self.far, self.near) + self.family
        return all(not f.violated and math.isfinite(f.N) for f in fits)


def _unit_slice(table: KernelTable):
    if table.t != 1.0:
        raise ParameterError("bound fits use the t = 1 table")


def noise_floor(table: KernelTable, m: int) -> float:
    """Absolute accuracy level of the ``|gamma| = m`` tables.

    Spectral truncation leaves a ripple of the size of the discarded
    Fourier tail; it is estimated (with a safety factor 10) by the retained
    coefficients in the outermost tenth of the frequency box.
    """
    g = table.grid
    kmax = np.pi / g.dx
    kabs = np.max(np.abs(np.stack(g.frequency_mesh())), axis=0)
    shell = kabs >= 0.9 * kmax
    level = 0.0
    for gam in _multi_indices(g.dim, m):
        arr = table.smooth_part(gam)
        coeffs = np.abs(np.fft.fftn(np.fft.ifftshift(arr))) / arr.size
        level = max(level, 10.0 * float(np.sum(coeffs[shell])))
    return max(level, NOISE_FLOOR * float(np.max(table.magnitude(m))))


def fit_far_bound(table: KernelTable, m: int) -> KernelBoundFit:
    """``|D^m q(1,x)| <= N exp(-sigma |x|^{2/(2-alpha)})`` on ``|x| >= 1``.

    Only nodes above :func:`noise_floor` are sampled. ``sigma`` is the
    least-squares decay rate of ``log |D^m q|`` against ``|x|^{2/(2-alpha)}``,
    shrunk by ``SIGMA_SAFETY``; ``N`` is then the smallest constant that
    makes the bound hold at every sampled node.
    """
    r = table.grid.radius() * table.t ** (-table.alpha / 2)
    mag = table.magnitude(m)
    kappa = 2.0 / (2.0 - table.alpha)
    sel = (r >= 1.0) & (mag > noise_floor(table, m))
    if sel.sum() < 3:
        return KernelBoundFit(float("inf"), 0.0, m, "R>=1", n_nodes=int(sel.sum()), violated=True)
    s = r[sel] ** kappa
    y = np.log(mag[sel])
    slope, _ = np.polyfit(s, y, 1)
    sigma = -slope * SIGMA_SAFETY
    if not sigma > 0:
        return KernelBoundFit(float("inf"), float(sigma), m, "R>=1", n_nodes=int(sel.sum()), violated=True)
    n_const = float(np.max(np.exp(y + sigma * s)))
    return KernelBoundFit(n_const, float(sigma), m, "R>=1", n_nodes=int(sel.sum()))


def _near_shape(r, d, m):
    big_r = r**2
    shape = r ** (-d - m) * (big_r**2 + (big_r**2 * np.abs(np.log(big_r)) if d == 2 else 0.0))
    if m == 0:
        shape = shape + r ** (-d) * (big_r**0.5 if d == 1 else big_r)
    return shape


def fit_kernel_bounds(table: KernelTable, m: int) -> KernelBoundReport:
    """Fit the tail bound (``R >= 1``), the small-``R`` algebraic bound and
    the family ``|D^m q(1,x)| <= N(eps) |x|^{-d-eps}``.

    ``eps`` runs over ``{0, 1/2, 1}`` and additionally ``{-1/2}`` (and
    ``-1``) when ``m <= 1``.
    """
    _unit_slice(table)
    if m not in (0, 1, 2):
        raise ParameterError("m must be 0, 1 or 2")
    d = table.grid.dim
    far = fit_far_bound(table, m)
    r = table.grid.radius()
    mag = table.magnitude(m)
    near_sel = (r > 0) & (r <= 1.0)
    ratio = mag[near_sel] / _near_shape(r[near_sel], d, m)
    near_n = float(np.max(ratio)) if ratio.size else float("inf")
    near = KernelBoundFit(near_n, 0.0, m, "R<=1", n_nodes=int(near_sel.sum()),
                          violated=not math.isfinite(near_n))
    eps_set = [0.0, 0.5, 1.0] + ([-0.5, -1.0] if m <= 1 else [])
    fam = []
    sel = r > 0
    for eps in eps_set:
        n_eps = float(np.max(mag[sel] * r[sel] ** (d + eps)))
        fam.append(KernelBoundFit(n_eps, 0.0, m, "all", epsilon=eps, n_nodes=int(sel.sum()),
                                  violated=not math.isfinite(n_eps)))
    return KernelBoundReport(far, near, tuple(fam))


# --- serialization ---------------------------------------------------------------------


def save_kernel_table(table: KernelTable, path) -> tuple[Path, Path]:
    """Write ``<path>.bin`` (raw little-endian float64) and ``<path>.json``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    bin_path = path.with_suffix(".bin")
    json_path = path.with_suffix(".json")
    try:
        with open(bin_path, "wb") as fh:
            for arr in (table.q, table.grad, table.hess, table.p):
                fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        json_path.write_text(json.dumps(table.header(), indent=2, sort_keys=True))
    except OSError as exc:
        raise OSError(f"cannot write kernel table to {path}: {exc}") from exc
    return bin_path, json_path


def load_kernel_table(path) -> KernelTable:
    path = Path(path)
    header = json.loads(path.with_suffix(".json").read_text())
    grid = SpaceGrid(header["dim"], header["L"], header["n_points"])
    raw = np.frombuffer(path.with_suffix(".bin").read_bytes(), dtype="<f8")
    d, shp = grid.dim, grid.shape
    size = int(np.prod(shp))
    parts, pos = [], 0
    for lead in ((), (d,), (d, d), ()):
        count = size * int(np.prod(lead, dtype=int))
        parts.append(raw[pos : pos + count].reshape(lead + shp).copy())
        pos += count
    tail = {int(k): float(v) for k, v in header.get("tail", {}).items()}
    table = KernelTable(header["alpha"], grid, header["t"], *parts, tail=tail)
    if table.checksum() != header["checksum"]:
        raise ValueError(f"checksum mismatch for kernel table {path}")
    for arr in (table.q, table.grad, table.hess, table.p):
        arr.setflags(write=False)
    return table
