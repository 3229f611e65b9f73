"""Fractional-calculus kernels, product-integration quadratures and the
Mittag-Leffler function.

All routines are pure functions of their arguments. Time signals are sampled
on grids starting at ``t = 0`` and are interpreted as piecewise linear between
samples; every quadrature here integrates the weakly singular kernel
``omega_nu(t) = t**(nu - 1) / Gamma(nu)`` exactly against that interpolant.
"""

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate, special

from ._validation import DomainError, check_alpha, check_count, check_time_grid

__all__ = [
    "FractionalOrder",
    "TimeSamples",
    "omega",
    "power_rule",
    "caputo_power_rule",
    "rl_integral",
    "caputo_l1_weights",
    "caputo_l1",
    "mittag_leffler",
    "verify_leibniz_identity",
    "positivity_check",
]

#: Upper end of the power-series regime of :func:`mittag_leffler`.
ML_SERIES_MAX = 1.0
#: Lower end of the asymptotic regime of :func:`mittag_leffler`.
ML_ASYMPTOTIC_MIN = 1.0e4
_ML_ASYMPTOTIC_TERMS = 8


@dataclass(frozen=True)
class FractionalOrder:
    """Order ``alpha`` of the Caputo derivative, strictly inside (0, 1)."""

    alpha: float

    def __post_init__(self):
        object.__setattr__(self, "alpha", check_alpha(self.alpha))

    def __float__(self):
        return self.alpha


@dataclass(frozen=True)
class TimeSamples:
    """A scalar signal sampled on a grid ``0 = t_0 < t_1 < ... < t_N``."""

    grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        grid = check_time_grid(self.grid)
        values = np.asarray(self.values, dtype=float)
        if values.shape != grid.shape:
            raise DomainError(
                f"values shape {values.shape} does not match grid shape {grid.shape}"
            )
        grid.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_function(cls, func, grid):
        grid = check_time_grid(grid)
        return cls(grid, np.asarray(func(grid), dtype=float) * np.ones_like(grid))


def omega(nu, t):
    """Kernel ``t**(nu - 1) / Gamma(nu)``; exactly 1 for ``nu == 1``."""
    if not nu > 0:
        raise DomainError(f"omega requires nu > 0, got {nu!r}")
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr <= 0):
        raise DomainError("omega requires t > 0")
    out = t_arr ** (nu - 1.0) * special.rgamma(nu)
    return float(out) if out.ndim == 0 else out


def _omega0(nu, t):
    # omega_nu extended by zero for t <= 0; only used with nu > 1.
    t = np.asarray(t, dtype=float)
    return np.where(t > 0, np.abs(t) ** (nu - 1.0), 0.0) * special.rgamma(nu)


def _omega_diff(nu, base, step):
    """``omega_nu(base + step) - omega_nu(base)`` without cancellation.

    ``base >= 0``, ``step > 0`` and ``nu > 1``.
    """
    base = np.asarray(base, dtype=float)
    step = np.asarray(step, dtype=float)
    safe = np.where(base > 0, base, 1.0)
    rel = (
        safe ** (nu - 1.0)
        * np.expm1((nu - 1.0) * np.log1p(step / safe))
        * special.rgamma(nu)
    )
    return np.where(base > 0, rel, _omega0(nu, step))


def power_rule(sigma, nu, t):
    """Riemann-Liouville integral of ``t**sigma``: exact closed form."""
    return math.gamma(sigma + 1.0) / math.gamma(sigma + 1.0 + nu) * np.asarray(t) ** (
        sigma + nu
    )


def caputo_power_rule(sigma, alpha, t):
    """Caputo derivative of ``t**sigma`` of order ``alpha``; zero for ``sigma == 0``."""
    alpha = check_alpha(alpha)
    t = np.asarray(t, dtype=float)
    if sigma == 0:
        return np.zeros_like(t)
    if sigma < 0:
        raise DomainError("caputo_power_rule requires sigma >= 0")
    return special.gamma(sigma + 1.0) * special.rgamma(sigma + 1.0 - alpha) * t ** (
        sigma - alpha
    )


def rl_integral(signal, nu):
    """Riemann-Liouville integral of order ``nu`` at every grid point.

    The signal is treated as its piecewise-linear interpolant, so the result
    is exact (up to rounding) for piecewise-linear inputs.

    Parameters
    ----------
    signal : TimeSamples
    nu : float
        Order in (0, 2).

    Returns
    -------
    TimeSamples
        ``(I^nu signal)(t_n)`` on the same grid.
    """
    if not 0.0 < nu < 2.0:
        raise DomainError(f"rl_integral requires nu in (0, 2), got {nu!r}")
    t = signal.grid
    phi = signal.values
    out = np.zeros_like(t)
    if t.size == 1:
        return TimeSamples(t, out)
    dt = np.diff(t)
    dphi = np.diff(phi)
    for n in range(1, t.size):
        base = t[n] - t[1 : n + 1]
        weights = _omega_diff(nu + 2.0, base, dt[:n]) / dt[:n]
        out[n] = phi[0] * _omega0(nu + 1.0, t[n]) + weights @ dphi[:n]
    return TimeSamples(t, out)


def caputo_l1_weights(grid, alpha, n):
    """L1 weights ``b_{n,j}``, ``j = 1..n``, for the Caputo derivative at ``t_n``.

    ``sum_j b[j-1] * (v(t_j) - v(t_{j-1}))`` approximates the Caputo
    derivative of ``v`` at ``t_n``. Weights are positive and increase with j.
    """
    alpha = check_alpha(alpha)
    t = check_time_grid(grid)
    n = check_count(n, "n", minimum=1)
    if n > t.size - 1:
        raise IndexError(f"step index {n} out of range 1..{t.size - 1}")
    dt = np.diff(t[: n + 1])
    base = t[n] - t[1 : n + 1]
    return _omega_diff(2.0 - alpha, base, dt) / dt


def caputo_l1(signal, alpha):
    """Apply the L1 Caputo approximation at every grid point (0 at ``t_0``)."""
    alpha = check_alpha(alpha)
    t = signal.grid
    dphi = np.diff(signal.values)
    out = np.zeros_like(t)
    for n in range(1, t.size):
        out[n] = caputo_l1_weights(t, alpha, n) @ dphi[:n]
    return TimeSamples(t, out)


# Mittag-Leffler function E_alpha(-x) for x >= 0.


def _ml_series(alpha, x):
    terms = []
    k = 0
    while True:
        term = (-x) ** k * special.rgamma(alpha * k + 1.0)
        terms.append(term)
        if k > 10 and abs(term) < 1e-18:
            break
        k += 1
    return math.fsum(terms)


def _quad(f, a, b, points=(), epsabs=0.0):
    pts = sorted(p for p in set(points) if a < p < b)
    value, _ = integrate.quad(f, a, b, points=pts or None, epsabs=epsabs, epsrel=1e-13, limit=1000)
    return value


@lru_cache(maxsize=65536)
def _ml_contour(alpha, x):
    # Bromwich contour collapsed onto the branch cut of s**alpha; after the
    # substitution u = r**alpha the integrand is exp(-u**(1/alpha)) times a
    # Lorentzian in u centred at c = -x cos(alpha pi) with half width
    # w = x sin(alpha pi). 1 - alpha is exact in floating point, so the
    # trigonometric factors are formed from it.
    eps = 1.0 - alpha
    sin_a = math.sin(math.pi * eps)
    centre = x * math.cos(math.pi * eps)
    width = x * sin_a
    inv = 1.0 / alpha
    u_max = 50.0**alpha

    def f(u):
        return math.exp(-(u**inv))

    def lorentz(v):
        return x / (v * v + width * width)

    if not 0.0 < centre < u_max:
        value = _quad(lambda u: f(u) * lorentz(u - centre), 0.0, u_max,
                      [centre + k * width for k in (-10.0, -1.0, 0.0, 1.0, 10.0)])
        return sin_a / (alpha * math.pi) * value
    # peak removed in closed form; x sin_a / width == 1
    fc = f(centre)
    peak = fc * (math.atan((u_max - centre) / width) + math.atan(centre / width))
    d = min(centre, u_max - centre)
    # rounding in the folded difference is harmless next to the peak term
    tol = 1e-15 * peak / sin_a
    scales = [k * width for k in (1.0, 10.0, 100.0, 1e3, 1e4, 1e5)]
    sym = _quad(lambda v: (f(centre + v) + f(centre - v) - 2.0 * fc) * lorentz(v), 0.0, d, scales, tol)
    if centre - d > 0.0:
        rest = _quad(lambda u: (f(u) - fc) * lorentz(u - centre), 0.0, centre - d, (), tol)
    else:
        rest = _quad(lambda u: (f(u) - fc) * lorentz(u - centre), centre + d, u_max, (), tol)
    return (peak + sin_a * (sym + rest)) / (alpha * math.pi)


def _ml_asymptotic(alpha, x):
    k = np.arange(1, _ML_ASYMPTOTIC_TERMS + 1)
    x = np.asarray(x, dtype=float)[..., None]
    # 1 - alpha k written so that it stays accurate next to the poles at 1 - k
    arg = (1.0 - k) + k * (1.0 - alpha)
    terms = (-1.0) ** (k + 1) * x ** (-k) * special.rgamma(arg)
    return terms.sum(axis=-1)


def mittag_leffler(alpha, x):
    """Evaluate ``E_alpha(-x)`` for ``x >= 0`` and ``0 < alpha < 1``.

    Three regimes: compensated power series for small ``x``, quadrature along
    the collapsed Hankel contour for moderate ``x`` and the algebraic
    asymptotic expansion for ``x >= 1e4``. Relative accuracy is about 1e-13.
    """
    alpha = check_alpha(alpha)
    x_arr = np.asarray(x, dtype=float)
    if np.any(x_arr < 0) or np.any(~np.isfinite(x_arr)):
        raise DomainError("mittag_leffler requires finite x >= 0")
    flat = x_arr.ravel()
    out = np.empty_like(flat)
    big = flat >= ML_ASYMPTOTIC_MIN
    out[big] = _ml_asymptotic(alpha, flat[big])
    for i in np.flatnonzero(~big):
        xi = float(flat[i])
        if xi <= ML_SERIES_MAX:
            out[i] = _ml_series(alpha, xi)
        else:
            out[i] = _ml_contour(alpha, xi)
    out = out.reshape(x_arr.shape)
    return float(out) if out.ndim == 0 else out


def verify_leibniz_identity(poly_degree, alpha, t):
    """Residual of the weighted Leibniz identity for ``v(t) = t**poly_degree``.

    Checks ``t^2 I^a v' = I^a v2' + 2(a-1) I^a v1 + a(a-1) I^(1+a) v
    - t^2 omega_a(t) v(0)`` with ``v1 = t v`` and ``v2 = t^2 v``; every term
    uses the closed-form power rule.
    """
    alpha = check_alpha(alpha)
    d = check_count(poly_degree, "poly_degree", minimum=0)
    if not t > 0:
        raise DomainError("t must be positive")
    lhs = t * t * d * power_rule(d - 1, alpha, t) if d > 0 else 0.0
    v0 = 1.0 if d == 0 else 0.0
    rhs = (
        (d + 2) * power_rule(d + 1, alpha, t)
        + 2.0 * (alpha - 1.0) * power_rule(d + 1, alpha, t)
        + alpha * (alpha - 1.0) * power_rule(d, 1.0 + alpha, t)
        - t * t * omega(alpha, t) * v0
    )
    return float(abs(lhs - rhs))


def _local_moment(beta, phi_left, slope, step):
    # int_a^{a+step} (phi_left + slope (t - a)) omega_beta(t - a) dt
    return phi_left * _omega0(beta + 1.0, step) + slope * beta * _omega0(
        beta + 2.0, step
    )


def positivity_check(signal, alpha, n_gauss=20):
    """Value of ``int_0^T (I^alpha phi)(t) phi(t) dt`` for a piecewise-linear phi.

    On each interval the part of ``I^alpha phi`` that is singular at the left
    endpoint is integrated in closed form; the remainder is analytic there and
    is integrated by Gauss-Legendre.
    """
    alpha = check_alpha(alpha)
    t = signal.grid
    phi = signal.values
    if t.size < 2:
        return 0.0
    dt = np.diff(t)
    slope = np.diff(phi) / dt
    nodes, weights = np.polynomial.legendre.leggauss(n_gauss)
    nodes = 0.5 * (nodes + 1.0)
    weights = 0.5 * weights
    total = []
    for n in range(1, t.size):
        a, h = t[n - 1], dt[n - 1]
        m_here = slope[n - 1]
        m_prev = slope[n - 2] if n >= 2 else 0.0
        # local singular part: (m_n - m_{n-1}) omega_{a+2}(t - t_{n-1}) [+ const]
        local = _local_moment(alpha + 2.0, phi[n - 1], m_here, h) * (m_here - m_prev)
        if n == 1:
            local += phi[0] * _local_moment(alpha + 1.0, phi[0], m_here, h)
            total.append(float(local))
            continue
        tq = a + h * nodes
        smooth = phi[0] * _omega0(alpha + 1.0, tq)
        # ramps with shift below t_{n-1}, written as slope * (omega(t - t_{k-1}) - omega(t - t_k))
        k = np.arange(1, n - 1)
        if k.size:
            base = tq[:, None] - t[k][None, :]
            smooth = smooth + (
                _omega_diff(alpha + 2.0, base, dt[k - 1][None, :]) @ slope[k - 1]
            )
        smooth = smooth + m_prev * _omega0(alpha + 2.0, tq - t[n - 2])
        phi_q = phi[n - 1] + m_here * (tq - a)
        total.append(float(local) + h * float(weights @ (phi_q * smooth)))
    return math.fsum(total)
