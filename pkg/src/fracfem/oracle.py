"""Reference solutions for verification.

Constant-diffusivity problems on the unit interval or unit square are solved
exactly by eigenfunction expansion with Mittag-Leffler decay per mode.
Time-dependent diffusivity is covered by manufactured solutions whose source
term is built from the Caputo power rule.
"""

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np
from scipy import integrate

from . import femcore
from ._validation import DomainError, check_alpha, check_count, check_points
from .fracops import caputo_power_rule, mittag_leffler
from .march import ProblemSpec

__all__ = [
    "SpectralBasis",
    "InitialData",
    "SpaceFactor",
    "TruncationError",
    "HdotNorm",
    "eigen_coeffs",
    "hdot_norm",
    "spectral_solution",
    "SpectralSolution",
    "manufactured_problem",
    "regularity_scan",
    "sine_data",
    "indicator_data",
    "closure_data",
    "load_catalog",
    "save_catalog",
    "CATALOG_VERSION",
]

MAX_MODES = 100_000
CATALOG_VERSION = 1


class TruncationError(RuntimeError):
    """The truncated eigen-expansion cannot meet its tail tolerance."""


@dataclass(frozen=True)
class SpectralBasis:
    """Dirichlet Laplacian eigenpairs on the unit interval or unit square.

    Modes are indexed by tuples: ``(j,)`` in 1D, ``(j, k)`` in 2D; the 2D
    list is ordered by eigenvalue.
    """

    domain: str = "interval"

    def __post_init__(self):
        if self.domain not in ("interval", "square"):
            raise DomainError(f"unknown domain {self.domain!r}")

    @property
    def dim(self):
        return 1 if self.domain == "interval" else 2

    def modes(self, J):
        J = check_count(J, "J")
        if self.dim == 1:
            return np.arange(1, J + 1)[:, None]
        m = int(math.ceil(math.sqrt(J))) + 1
        jj, kk = np.meshgrid(np.arange(1, m + 1), np.arange(1, m + 1), indexing="ij")
        pairs = np.column_stack([jj.ravel(), kk.ravel()])
        lam = (pairs**2).sum(axis=1)
        order = np.lexsort((pairs[:, 1], pairs[:, 0], lam))
        return pairs[order][:J]

    def eigenvalues(self, modes):
        return math.pi**2 * (np.asarray(modes, dtype=float) ** 2).sum(axis=1)

    def values(self, x, modes):
        """Eigenfunctions at points, shape ``(n_points, n_modes)``."""
        x = check_points(x, self.dim)
        modes = np.asarray(modes)
        out = np.full((x.shape[0], modes.shape[0]), math.sqrt(2.0) ** self.dim)
        for d in range(self.dim):
            out *= np.sin(math.pi * x[:, d : d + 1] * modes[None, :, d])
        return out

    def gradients(self, x, modes):
        """Eigenfunction gradients, shape ``(n_points, n_modes, dim)``."""
        x = check_points(x, self.dim)
        modes = np.asarray(modes, dtype=float)
        scale = math.sqrt(2.0) ** self.dim
        s = [np.sin(math.pi * x[:, d : d + 1] * modes[None, :, d]) for d in range(self.dim)]
        c = [
            math.pi * modes[None, :, d] * np.cos(math.pi * x[:, d : d + 1] * modes[None, :, d])
            for d in range(self.dim)
        ]
        if self.dim == 1:
            return (scale * c[0])[..., None]
        return scale * np.stack([c[0] * s[1], s[0] * c[1]], axis=2)


@dataclass(frozen=True)
class InitialData:
    """Initial datum ``u0`` in one of three forms.

    ``eigen_series``: finitely many expansion coefficients keyed by mode;
    ``indicator``: characteristic function of ``(a, b)`` on the interval,
    with closed-form coefficients; ``closure``: arbitrary function with
    coefficients obtained by quadrature. ``delta_class`` is the supremum of
    the smoothness indices ``r <= 2`` with finite ``||u0||_r``.
    """

    form: str
    name: str = ""
    coefficients: Optional[dict] = None
    interval: Optional[tuple] = None
    func: Optional[Callable] = None
    grad_func: Optional[Callable] = None
    delta_class: float = 2.0
    delta_nominal: float = 2.0
    dim: int = 1
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if self.form not in ("eigen_series", "indicator", "closure"):
            raise DomainError(f"unknown initial data form {self.form!r}")
        if self.form == "eigen_series" and not self.coefficients:
            raise DomainError("eigen_series data needs coefficients")
        if self.form == "indicator" and self.interval is None:
            raise DomainError("indicator data needs an interval")
        if self.form == "closure" and self.func is None:
            raise DomainError("closure data needs a function")

    @property
    def basis(self):
        return SpectralBasis("interval" if self.dim == 1 else "square")

    @property
    def max_modes(self):
        if self.form == "eigen_series":
            return self.basis_index_limit()
        return MAX_MODES if self.form == "indicator" else 256

    def basis_index_limit(self):
        modes = [tuple(k) for k in self.coefficients]
        J = 1
        while True:
            listed = {tuple(m) for m in self.basis.modes(J)}
            if all(m in listed for m in modes):
                return J
            J *= 2

    def coeffs(self, J=None):
        """Expansion coefficients for the first ``J`` modes of :attr:`basis`."""
        J = self.max_modes if J is None else int(J)
        key = ("coeffs", J)
        if key in self._cache:
            return self._cache[key]
        modes = self.basis.modes(J)
        if self.form == "eigen_series":
            lookup = {tuple(int(i) for i in k): float(v) for k, v in self.coefficients.items()}
            c = np.array([lookup.get(tuple(int(i) for i in m), 0.0) for m in modes])
        elif self.form == "indicator":
            a, b = self.interval
            jp = math.pi * modes[:, 0]
            c = math.sqrt(2.0) * (np.cos(jp * a) - np.cos(jp * b)) / jp
        else:
            c = eigen_coeffs(self.func, self.basis, J)
        self._cache[key] = c
        return c

    def __call__(self, x):
        x = check_points(x, self.dim)
        if self.form == "indicator":
            a, b = self.interval
            return ((x[:, 0] > a) & (x[:, 0] < b)).astype(float)
        if self.form == "closure":
            return np.asarray(self.func(x), dtype=float)
        modes = np.array([k for k in self.coefficients], dtype=int).reshape(-1, self.dim)
        c = np.array(list(self.coefficients.values()), dtype=float)
        return self.basis.values(x, modes) @ c

    @property
    def grad(self):
        if self.form == "eigen_series":
            modes = np.array([k for k in self.coefficients], dtype=int).reshape(-1, self.dim)
            c = np.array(list(self.coefficients.values()), dtype=float)
            return lambda x: np.einsum("pmd,m->pd", self.basis.gradients(x, modes), c)
        return self.grad_func


def sine_data(dim=1):
    """``sin(pi x)`` (1D) or ``sin(pi x) sin(pi y)`` (2D) as a one-mode series."""
    if dim == 1:
        return InitialData("eigen_series", "sine", {(1,): 1.0 / math.sqrt(2.0)})
    return InitialData("eigen_series", "sine2d", {(1, 1): 0.5}, dim=2)


def indicator_data(a=0.0, b=0.5):
    """Characteristic function of ``(a, b)``: in every ``H^r`` with ``r < 1/2``."""
    return InitialData(
        "indicator",
        f"indicator({a:g},{b:g})",
        interval=(float(a), float(b)),
        delta_class=0.5,
        delta_nominal=0.0,
    )


def closure_data(func, grad=None, name="closure", delta_class=2.0, dim=1):
    return InitialData(
        "closure", name, func=func, grad_func=grad, delta_class=delta_class,
        delta_nominal=delta_class, dim=dim,
    )


def eigen_coeffs(u0, basis, J):
    """``c_j = (u0, phi_j)`` by adaptive Gauss-Kronrod quadrature.

    In 1D the sine weight is handled by QUADPACK's oscillatory rule.
    """
    J = check_count(J, "J")
    modes = basis.modes(J)
    out = np.empty(J)
    opts = dict(epsabs=1e-13, epsrel=1e-11, limit=400)
    if basis.dim == 1:
        f = lambda s: float(np.asarray(u0(np.array([[s]])))[0])
        for i, (j,) in enumerate(modes):
            val, _ = integrate.quad(f, 0.0, 1.0, weight="sin", wvar=j * math.pi, **opts)
            out[i] = math.sqrt(2.0) * val
        return out
    for i, (j, k) in enumerate(modes):
        g = lambda y, x: float(np.asarray(u0(np.array([[x, y]])))[0]) * math.sin(
            j * math.pi * x
        ) * math.sin(k * math.pi * y)
        val, _ = integrate.dblquad(g, 0.0, 1.0, 0.0, 1.0, epsabs=1e-12, epsrel=1e-10)
        out[i] = 2.0 * val
    return out


@dataclass(frozen=True)
class HdotNorm:
    value: float
    tail: float
    diverged: bool
    n_terms: int

    def __float__(self):
        return self.value


def _decade_tail(terms):
    """Extrapolated tail and growth ratio from the last two decade block sums."""
    n = terms.size
    if n < 100 or not np.any(terms[n // 10 :]):
        return 0.0, 0.0
    last = terms[n // 10 :].sum()
    prev = terms[n // 100 : n // 10].sum()
    if prev == 0.0:
        return 0.0, 0.0
    q = last / prev
    if q >= 1.0:
        return math.inf, q
    # blocks of geometrically growing length: remaining decades sum to q/(1-q) * last
    return last * q / (1.0 - q), q


def hdot_norm(data, r, basis=None, J=None):
    """``sqrt(sum_j lambda_j**r c_j**2)`` with a decade-extrapolated tail.

    Divergence (``data`` not in the space) is flagged when block sums over
    successive decades of modes do not shrink.
    """
    if not 0.0 <= r <= 2.0:
        raise DomainError("r must lie in [0, 2]")
    basis = basis or data.basis
    J = data.max_modes if J is None else J
    c = data.coeffs(J)
    lam = basis.eigenvalues(basis.modes(J))
    terms = lam**r * c**2
    partial = math.fsum(terms)
    if data.form == "eigen_series":
        return HdotNorm(math.sqrt(partial), 0.0, False, J)
    tail, q = _decade_tail(terms)
    if math.isinf(tail):
        return HdotNorm(math.inf, math.inf, True, J)
    return HdotNorm(math.sqrt(partial + tail), math.sqrt(partial + tail) - math.sqrt(partial), False, J)


class SpectralSolution:
    """Exact solution ``u(t) = sum_j E_alpha(-lambda_j t**alpha) c_j phi_j``.

    For each time the expansion is truncated at the smallest ``J`` beyond which
    every amplitude is below ``amp_tol``; :class:`TruncationError` is raised if
    the L2 tail estimate then exceeds ``tail_tol``.
    """

    def __init__(self, data, alpha, basis=None, amp_tol=1e-12, tail_tol=1e-10, max_modes=None):
        self.data = data
        self.alpha = check_alpha(alpha)
        self.basis = basis or data.basis
        self.amp_tol = amp_tol
        self.tail_tol = tail_tol
        J = data.max_modes if max_modes is None else max_modes
        self._modes = self.basis.modes(J)
        self._lam = self.basis.eigenvalues(self._modes)
        self._c = data.coeffs(J)
        self._amps = {}

    def amplitudes(self, t):
        """``(modes, c_j E_alpha(-lambda_j t**alpha))`` after truncation."""
        if t in self._amps:
            return self._amps[t]
        if t < 0:
            raise DomainError("t must be >= 0")
        if t == 0:
            amp = self._c.copy()
        else:
            amp = self._c * mittag_leffler(self.alpha, self._lam * t**self.alpha)
        big = np.flatnonzero(np.abs(amp) > self.amp_tol)
        J = int(big[-1]) + 1 if big.size else 1
        tail = float(np.sqrt(np.sum(amp[J:] ** 2)))
        if J == amp.size and self.data.form != "eigen_series":
            if amp.size >= 100:
                extra, _ = _decade_tail(amp**2)
            else:
                # too few modes to fit a decay rate; assume only 1/j decay
                extra = amp.size * amp[-1] ** 2
            tail = math.sqrt(extra) if math.isfinite(extra) else math.inf
        if tail > self.tail_tol:
            raise TruncationError(
                f"L2 tail {tail:.2e} exceeds {self.tail_tol:.1e} at t={t} with {J} modes"
            )
        out = (self._modes[:J], amp[:J])
        self._amps[t] = out
        return out

    def n_modes(self, t):
        return self.amplitudes(t)[1].size

    def value(self, x, t, chunk=2048):
        modes, amp = self.amplitudes(t)
        x = check_points(x, self.basis.dim)
        out = np.zeros(x.shape[0])
        for s in range(0, amp.size, chunk):
            out += self.basis.values(x, modes[s : s + chunk]) @ amp[s : s + chunk]
        return out

    def gradient(self, x, t, chunk=2048):
        modes, amp = self.amplitudes(t)
        x = check_points(x, self.basis.dim)
        out = np.zeros((x.shape[0], self.basis.dim))
        for s in range(0, amp.size, chunk):
            g = self.basis.gradients(x, modes[s : s + chunk])
            out += np.einsum("pmd,m->pd", g, amp[s : s + chunk])
        return out

    def __call__(self, t):
        """Closures ``(u, grad_u)`` of space at time ``t``."""
        return (lambda x: self.value(x, t)), (lambda x: self.gradient(x, t))

    def norm(self, t, q=0.0):
        """``||u(t)||_q`` with the tail extrapolated over all available modes."""
        amp = self._c * mittag_leffler(self.alpha, self._lam * t**self.alpha)
        terms = self._lam**q * amp**2
        tail, _ = _decade_tail(terms) if self.data.form != "eigen_series" else (0.0, 0.0)
        return math.sqrt(math.fsum(terms) + tail)


def spectral_solution(data, alpha, basis=None, **kwargs):
    return SpectralSolution(data, alpha, basis, **kwargs)


def spectral_problem(data, alpha, T=1.0):
    """Constant-diffusivity problem with its exact spectral solution attached."""
    sol = SpectralSolution(data, alpha)
    return ProblemSpec(
        alpha=alpha,
        kappa=femcore.Coefficient.constant(1.0),
        u0=data,
        T=T,
        domain=data.basis.domain,
        exact=sol,
        name=data.name,
    )


@dataclass(frozen=True)
class SpaceFactor:
    """Spatial factor ``S(x)`` of a separable solution with its derivatives."""

    value: Callable
    grad: Callable
    laplacian: Callable


def manufactured_problem(space_factor, time_powers, kappa, alpha, T=1.0, name="manufactured"):
    """Problem whose exact solution is ``S(x) * sum_m a_m t**sigma_m``.

    The source is ``f = C(t) S - T(t) (grad kappa . grad S + kappa lap S)``
    with ``C`` the Caputo derivative of the time factor by the power rule.
    """
    alpha = check_alpha(alpha)
    for attr in ("value", "grad", "laplacian"):
        if getattr(space_factor, attr, None) is None:
            raise DomainError(f"space factor is missing its {attr} closure")
    if kappa.grad is None:
        raise DomainError("manufactured sources need the diffusivity gradient")
    powers = [(float(a), float(s)) for a, s in time_powers]
    if any(s < 0 for _, s in powers):
        raise DomainError("time exponents must be >= 0")

    def tfac(t):
        return sum(a * t**s for a, s in powers)

    def caputo(t):
        return sum(a * float(caputo_power_rule(s, alpha, t)) for a, s in powers)

    S, gS, lS = space_factor.value, space_factor.grad, space_factor.laplacian

    def source(x, t):
        flux = np.einsum("pd,pd->p", np.asarray(kappa.grad(x, t)), np.asarray(gS(x)))
        div = flux + kappa.evaluate(x, t) * np.asarray(lS(x))
        return caputo(t) * np.asarray(S(x)) - tfac(t) * div

    def exact(t):
        return (lambda x: tfac(t) * np.asarray(S(x))), (lambda x: tfac(t) * np.asarray(gS(x)))

    u0 = closure_data(lambda x: tfac(0.0) * np.asarray(S(x)), lambda x: tfac(0.0) * np.asarray(gS(x)), name=name)
    return ProblemSpec(
        alpha=alpha, kappa=kappa, u0=u0, T=T, source=source, exact=exact, name=name
    )


def regularity_scan(data, alpha, basis=None, p=0.0, q=2.0, times=None, max_ratio=10.0):
    """Tabulate ``||u(t)||_q * t**(-alpha (p - q) / 2)`` for a spectral solution.

    ``constant_estimate`` is the table maximum over ``||u0||_p``, an estimate
    of the constant in the smoothing bound; ``passed`` means it is at most
    ``max_ratio``. ``ratio`` (max over min of the table) is reported too: for
    ``p < q`` it measures flatness, for ``p == q`` it is the decay of the
    solution itself.
    """
    if not 0.0 <= p <= q <= 2.0:
        raise DomainError("need 0 <= p <= q <= 2")
    alpha = check_alpha(alpha)
    times = np.logspace(-3, 0, 7) if times is None else np.asarray(times, dtype=float)
    sol = SpectralSolution(data, alpha, basis)
    u0_norm = float(hdot_norm(data, p, basis))
    scaled = np.array([sol.norm(t, q) * t ** (-alpha * (p - q) / 2.0) for t in times])
    ratio = float(scaled.max() / scaled.min())
    return {
        "times": times.tolist(),
        "scaled_norms": scaled.tolist(),
        "u0_norm_p": u0_norm,
        "constant_estimate": float(scaled.max() / u0_norm),
        "ratio": ratio,
        "passed": bool(scaled.max() / u0_norm <= max_ratio),
    }


# Named closures the catalog can refer to.
CLOSURES = {
    "x(1-x)": (
        lambda x: x[:, 0] * (1.0 - x[:, 0]),
        lambda x: (1.0 - 2.0 * x[:, :1]),
    ),
    "sin(pi x)": (
        lambda x: np.sin(math.pi * x[:, 0]),
        lambda x: math.pi * np.cos(math.pi * x[:, :1]),
    ),
}


def save_catalog(entries, path):
    """Write named initial data as versioned JSON."""
    out = {"version": CATALOG_VERSION, "entries": []}
    for name, data in entries.items():
        item = {"name": name, "form": data.form, "delta_nominal": data.delta_nominal,
                "delta_class": data.delta_class, "dim": data.dim}
        if data.form == "eigen_series":
            item["coefficients"] = [[list(map(int, k)), float(v)] for k, v in data.coefficients.items()]
        elif data.form == "indicator":
            item["interval"] = list(data.interval)
        else:
            if data.name not in CLOSURES:
                raise DomainError(f"closure {data.name!r} has no catalog id")
            item["closure_id"] = data.name
        out["entries"].append(item)
    Path(path).write_text(json.dumps(out, indent=2) + "\n")


def load_catalog(path):
    raw = json.loads(Path(path).read_text())
    if raw.get("version") != CATALOG_VERSION:
        raise DomainError(f"unsupported catalog version {raw.get('version')!r}")
    entries = {}
    for item in raw["entries"]:
        common = dict(name=item["name"], delta_class=item.get("delta_class", 2.0),
                      delta_nominal=item.get("delta_nominal", 2.0), dim=item.get("dim", 1))
        if item["form"] == "eigen_series":
            coeffs = {tuple(k): v for k, v in item["coefficients"]}
            entries[item["name"]] = InitialData("eigen_series", coefficients=coeffs, **common)
        elif item["form"] == "indicator":
            entries[item["name"]] = InitialData("indicator", interval=tuple(item["interval"]), **common)
        else:
            func, grad = CLOSURES[item["closure_id"]]
            common["name"] = item["closure_id"]
            entries[item["name"]] = InitialData("closure", func=func, grad_func=grad, **common)
    return entries


BUILTIN_CATALOG = {
    "sine": sine_data(1),
    "sine2d": sine_data(2),
    "indicator": indicator_data(0.0, 0.5),
}
