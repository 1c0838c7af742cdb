"""Bath spectral densities and the time-domain kernels built from them.

Every path functional in the package is an integral of a piecewise-constant
spin path against one of a few one-dimensional kernels.  For a density
``rho(omega)`` the basic object is the Laplace-type kernel

    w(t) = 1/2 * int rho(omega) exp(-|t| omega) d omega,

together with its odd first antiderivative ``w1`` (``w1(0) = 0``) and its even
second antiderivative ``u2`` (``u2(0) = u2'(0) = 0``).  With ``u2`` at hand a
rectangle integral of ``w(t - s)`` reduces to four function evaluations, which
is what makes exact segment-pair sums possible.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import special
from scipy.interpolate import CubicHermiteSpline


class KernelError(ValueError):
    pass


class InfraredDivergent(KernelError):
    """The integral of rho / omega^2 is not finite."""


class NonPositiveDensity(KernelError):
    pass


class OrderOutOfRange(ValueError):
    pass


# series cut-over for the cancellation-prone combinations below
_SMALL = 1e-3


def _expm1_plus(z):
    """Return exp(-z) - 1 + z for z >= 0 without cancellation."""
    z = np.asarray(z, dtype=float)
    shape = z.shape
    z = z.reshape(-1)
    out = np.expm1(-z) + z
    if z.size and z.min() < _SMALL:
        small = z < _SMALL
        zs = z[small]
        out[small] = zs * zs * (0.5 - zs * (1 / 6 - zs * (1 / 24 - zs * (1 / 120 - zs / 720))))
    return out.reshape(shape)


def _pow_remainder(x, q):
    """Return (1 + x)^q - 1 - q x for x >= 0 without cancellation."""
    x = np.asarray(x, dtype=float)
    shape = x.shape
    x = x.reshape(-1)
    out = np.expm1(q * np.log1p(x)) - q * x
    if x.size and x.min() < _SMALL:
        small = x < _SMALL
        xs = x[small]
        acc = np.zeros_like(xs)
        coef = q
        xp = xs.copy()
        for k in range(2, 8):
            coef = coef * (q - k + 1) / k
            xp = xp * xs
            acc = acc + coef * xp
        out[small] = acc
    return out.reshape(shape)


# ---------------------------------------------------------------------------
# spectral densities


@dataclass(frozen=True)
class PowerLawExpCutoff:
    """rho(omega) = amplitude * omega**exponent * exp(-omega / cutoff)."""

    amplitude: float
    exponent: float
    cutoff: float

    def __post_init__(self):
        if not (self.amplitude >= 0 and math.isfinite(self.amplitude)):
            raise NonPositiveDensity(f"amplitude must be >= 0, got {self.amplitude}")
        if not self.cutoff > 0:
            raise ValueError(f"cutoff must be > 0, got {self.cutoff}")
        if not self.exponent > -1:
            raise InfraredDivergent(f"exponent {self.exponent} <= -1: density not integrable")

    def density(self, omega):
        omega = np.asarray(omega, dtype=float)
        return self.amplitude * omega**self.exponent * np.exp(-omega / self.cutoff)

    def moment(self, k: float) -> float:
        """Integral of rho(omega) * omega**k."""
        order = self.exponent + k + 1
        if order <= 0:
            if self.amplitude == 0:
                return 0.0
            raise InfraredDivergent(f"moment {k} diverges for exponent {self.exponent}")
        return self.amplitude * math.gamma(order) * self.cutoff**order

    def reweighted(self, p: float) -> "PowerLawExpCutoff":
        """Density rho(omega) * omega**(-p)."""
        return PowerLawExpCutoff(self.amplitude, self.exponent - p, self.cutoff)

    def scaled(self, c: float) -> "PowerLawExpCutoff":
        return PowerLawExpCutoff(self.amplitude * c, self.exponent, self.cutoff)

    def nodes(self, n: int = 160):
        """Gauss-Laguerre nodes and masses representing the measure."""
        x, wts = special.roots_genlaguerre(n, self.exponent)
        omega = x * self.cutoff
        mass = self.amplitude * self.cutoff ** (self.exponent + 1) * wts
        return omega, mass

    def laplace(self, t_max: float | None = None) -> "LaplaceKernel":
        return _PowerLawLaplace(self)


@dataclass(frozen=True)
class DiscreteModes:
    """rho(omega) = sum_m g_m^2 delta(omega - omega_m)."""

    couplings: tuple
    frequencies: tuple

    def __post_init__(self):
        g = tuple(float(x) for x in np.atleast_1d(self.couplings))
        w = tuple(float(x) for x in np.atleast_1d(self.frequencies))
        object.__setattr__(self, "couplings", g)
        object.__setattr__(self, "frequencies", w)
        if len(g) != len(w) or not g:
            raise ValueError("couplings and frequencies must be non-empty and of equal length")
        if any(not math.isfinite(x) for x in g):
            raise ValueError("couplings must be finite")
        if any(not x > 0 for x in w):
            raise InfraredDivergent("all mode frequencies must be > 0")

    @property
    def masses(self) -> np.ndarray:
        return np.square(self.couplings)

    def moment(self, k: float) -> float:
        return float(np.sum(self.masses * np.asarray(self.frequencies) ** k))

    def reweighted(self, p: float) -> "DiscreteModes":
        w = np.asarray(self.frequencies)
        return DiscreteModes(tuple(np.asarray(self.couplings) * w ** (-p / 2)), self.frequencies)

    def scaled(self, c: float) -> "DiscreteModes":
        if c < 0:
            raise NonPositiveDensity("negative rescaling of a density")
        return DiscreteModes(tuple(np.asarray(self.couplings) * math.sqrt(c)), self.frequencies)

    def nodes(self, n: int | None = None):
        return np.asarray(self.frequencies), self.masses

    def laplace(self, t_max: float | None = None) -> "LaplaceKernel":
        return _ExpSumLaplace(*self.nodes(), density=self)


@dataclass(frozen=True)
class Tabulated:
    """Density given on a grid; log-linear interpolation, zero outside the grid."""

    omega: tuple
    rho: tuple
    refine: int = 8

    def __post_init__(self):
        om = np.asarray(self.omega, dtype=float)
        rh = np.asarray(self.rho, dtype=float)
        object.__setattr__(self, "omega", tuple(om))
        object.__setattr__(self, "rho", tuple(rh))
        if om.ndim != 1 or om.shape != rh.shape:
            raise ValueError("omega and rho must be 1-D arrays of equal length")
        if om.size < 8:
            raise ValueError(f"tabulated density needs at least 8 points, got {om.size}")
        if np.any(np.diff(om) <= 0):
            raise ValueError("omega grid must be strictly increasing")
        if om[0] < 0:
            raise ValueError("omega grid must be non-negative")
        if np.any(rh < 0) or not np.all(np.isfinite(rh)):
            raise NonPositiveDensity("tabulated density must be finite and >= 0")
        if om[0] == 0 and rh[0] > 0:
            raise InfraredDivergent("rho(0) > 0: the integral of rho/omega^2 diverges")

    def density(self, omega):
        om = np.asarray(self.omega)
        rh = np.asarray(self.rho)
        x = np.asarray(omega, dtype=float)
        out = np.zeros_like(x)
        inside = (x >= om[0]) & (x <= om[-1])
        xi = x[inside]
        k = np.clip(np.searchsorted(om, xi, side="right") - 1, 0, om.size - 2)
        lo, hi = rh[k], rh[k + 1]
        frac = (xi - om[k]) / (om[k + 1] - om[k])
        with np.errstate(divide="ignore", invalid="ignore"):
            loglin = np.exp((1 - frac) * np.log(lo) + frac * np.log(hi))
        lin = (1 - frac) * lo + frac * hi
        out[inside] = np.where((lo > 0) & (hi > 0), loglin, lin)
        return out

    def nodes(self, n: int | None = None):
        """Trapezoid nodes on the refined grid, dropping the omega = 0 node."""
        om = np.asarray(self.omega)
        fine = np.concatenate(
            [np.linspace(om[i], om[i + 1], self.refine, endpoint=False) for i in range(om.size - 1)]
            + [om[-1:]]
        )
        rho = self.density(fine)
        h = np.diff(fine)
        mass = np.zeros_like(fine)
        mass[:-1] += h / 2
        mass[1:] += h / 2
        mass *= rho
        keep = (fine > 0) & (mass > 0)
        return fine[keep], mass[keep]

    def moment(self, k: float) -> float:
        om, mass = self.nodes()
        val = float(np.sum(mass * om**k))
        if not math.isfinite(val):
            raise InfraredDivergent(f"moment {k} is not finite")
        return val

    def reweighted(self, p: float) -> DiscreteModes:
        om, mass = self.nodes()
        return DiscreteModes(tuple(np.sqrt(mass * om ** (-p))), tuple(om))

    def scaled(self, c: float) -> "Tabulated":
        if c < 0:
            raise NonPositiveDensity("negative rescaling of a density")
        return Tabulated(self.omega, tuple(np.asarray(self.rho) * c), self.refine)

    def laplace(self, t_max: float | None = None) -> "LaplaceKernel":
        inner = _ExpSumLaplace(*self.nodes(), density=self)
        return _CachedLaplace(inner, t_max or 200.0)


SpectralDensity = PowerLawExpCutoff | DiscreteModes | Tabulated


def load_tabulated(path) -> Tabulated:
    """Read a two-column (omega, rho) CSV file; a header line is optional."""
    omega, rho = [], []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            cells = [c.strip() for c in row if c.strip()]
            if not cells or cells[0].startswith("#"):
                continue
            try:
                a, b = float(cells[0]), float(cells[1])
            except (ValueError, IndexError):
                if lineno == 1 and not omega:
                    continue
                raise ValueError(f"{path}:{lineno}: expected two numeric columns") from None
            omega.append(a)
            rho.append(b)
    return Tabulated(tuple(omega), tuple(rho))


# ---------------------------------------------------------------------------
# Laplace-type kernels


class LaplaceKernel:
    """w, its antiderivatives, and the scalar integrals of one density."""

    density: object

    def w(self, t):
        raise NotImplementedError

    def w1(self, t):
        raise NotImplementedError

    def u2(self, t):
        raise NotImplementedError

    def tail_moment(self, t):
        """Integral of u * w(u) for u from t to infinity."""
        raise NotImplementedError

    @property
    def norm_sq(self) -> float:
        """Integral of rho / omega^2."""
        return self.density.moment(-2)

    @property
    def w1_inf(self) -> float:
        """Limit of w1 at +infinity, (1/2) * integral of rho / omega."""
        return 0.5 * self.density.moment(-1)

    def rect(self, a, b, c, d):
        """Integral of w(t - s) over t in [a, b], s in [c, d]."""
        u = self.u2
        return u(b - c) - u(a - c) - u(b - d) + u(a - d)


class _PowerLawLaplace(LaplaceKernel):
    def __init__(self, density: PowerLawExpCutoff):
        self.density = density
        s = density.exponent
        self.a = 1.0 / density.cutoff
        self.p = s + 1.0
        self.c0 = 0.5 * density.amplitude * math.gamma(s + 1.0)

    def w(self, t):
        return self.c0 * (self.a + np.abs(t)) ** (-self.p)

    def w1(self, t):
        t = np.asarray(t, dtype=float)
        x = np.abs(t) / self.a
        if self.p == 1.0:
            val = self.c0 * np.log1p(x)
        else:
            # a^{1-p} (1 - (1+x)^{1-p}) / (p-1)
            val = -self.c0 * self.a ** (1 - self.p) * np.expm1((1 - self.p) * np.log1p(x)) / (self.p - 1)
        return np.sign(t) * val

    def u2(self, t):
        t = np.asarray(t, dtype=float)
        if t.ndim == 0:
            return self.u2(t.reshape(1))[0]
        x = np.abs(t) / self.a
        p, a, c0 = self.p, self.a, self.c0
        if p == 1.0:
            # a[(1+x)log(1+x) - x]
            lx = np.log1p(x)
            val = a * ((1 + x) * lx - x)
            small = x < _SMALL
            if np.any(small):
                xs = x[small]
                val[small] = a * xs * xs * (0.5 - xs * (1 / 6 - xs * (1 / 12 - xs / 20)))
            return c0 * val
        if p == 2.0:
            val = x - np.log1p(x)
            small = x < _SMALL
            if np.any(small):
                xs = x[small]
                val[small] = xs * xs * (0.5 - xs * (1 / 3 - xs * (1 / 4 - xs / 5)))
            return c0 * val
        q = 2.0 - p
        return c0 * a**q / ((p - 1) * (p - 2)) * _pow_remainder(x, q)

    def tail_moment(self, t):
        p, a, c0 = self.p, self.a, self.c0
        if p <= 2:
            return math.inf
        b = a + t
        return c0 * (b ** (2 - p) / (p - 2) - a * b ** (1 - p) / (p - 1))


class _ExpSumLaplace(LaplaceKernel):
    """Finite exponential sum; exact for discrete modes and quadrature measures."""

    def __init__(self, rates, masses, density=None):
        self.rates = np.asarray(rates, dtype=float)
        self.masses = np.asarray(masses, dtype=float)
        self.density = density
        self._half = 0.5 * self.masses
        self._c1 = self._half / self.rates
        self._c2 = self._half / self.rates**2

    def _outer(self, t):
        t = np.asarray(t, dtype=float)
        return t, np.abs(t)[..., None] * self.rates

    def w(self, t):
        t, z = self._outer(t)
        return np.exp(-z) @ self._half

    def w1(self, t):
        t, z = self._outer(t)
        return np.sign(t) * ((-np.expm1(-z)) @ self._c1)

    def u2(self, t):
        t, z = self._outer(t)
        return _expm1_plus(z) @ self._c2

    def tail_moment(self, t):
        z = t * self.rates
        return float(np.sum(self._c2 * np.exp(-z) * (1 + z)))

    @property
    def norm_sq(self) -> float:
        return float(np.sum(self.masses / self.rates**2))

    @property
    def w1_inf(self) -> float:
        return float(np.sum(self._c1))


class _CachedLaplace(LaplaceKernel):
    """Wraps an exponential sum with an interpolation table for u2."""

    def __init__(self, inner: _ExpSumLaplace, t_max: float, n_grid: int = 6000):
        self.inner = inner
        self.density = inner.density
        self.t_max = float(t_max)
        grid = np.concatenate(([0.0], np.geomspace(1e-6, self.t_max, n_grid)))
        d1 = inner.w1(grid)
        self._spline = CubicHermiteSpline(grid, inner.u2(grid), d1)
        self._u_end = float(inner.u2(self.t_max))
        self._slope_end = float(d1[-1])
        self._w0 = float(inner.w(0.0))

    def w(self, t):
        return self.inner.w(t)

    def w1(self, t):
        return self.inner.w1(t)

    def u2(self, t):
        x = np.abs(np.asarray(t, dtype=float))
        out = np.empty_like(x)
        far = x > self.t_max
        tiny = x < 1e-6
        mid = ~(far | tiny)
        out[mid] = self._spline(x[mid])
        out[far] = self._u_end + self._slope_end * (x[far] - self.t_max)
        out[tiny] = 0.5 * self._w0 * x[tiny] ** 2
        return out

    def tail_moment(self, t):
        return self.inner.tail_moment(t)

    @property
    def norm_sq(self) -> float:
        return self.inner.norm_sq

    @property
    def w1_inf(self) -> float:
        return self.inner.w1_inf


# ---------------------------------------------------------------------------
# test functions and the kernel bundle


@dataclass(frozen=True)
class TestFunction:
    """A real test function f described through its overlap densities.

    ``overlap`` is rho_hf, the density of conj(h_hat) f_hat in omega, and
    ``norm_sq`` is the squared L2 norm of f.
    """

    name: str
    overlap: object
    norm_sq: float
    power: float | None = None

    @classmethod
    def from_power(cls, bath, p: float = 0.0, name: str | None = None) -> "TestFunction":
        """f_hat = omega**(-p) h_hat."""
        return cls(name or ("h" if p == 0 else f"w^-{p:g}h"), bath.reweighted(p), bath.moment(-2 * p), p)


@dataclass
class KernelSet:
    bath: object
    kernel: LaplaceKernel
    tests: dict = field(default_factory=dict)
    cross: dict = field(default_factory=dict)
    norm_h_over_omega_sq: float = 0.0
    norm_f_sq: dict = field(default_factory=dict)
    overlap_h_over_omega_f: dict = field(default_factory=dict)
    t_max: float = 200.0
    _modified: dict = field(default_factory=dict, repr=False)

    def w_amp(self, t):
        return self.kernel.w(t)

    def u2(self, t):
        return self.kernel.u2(t)

    def c_cross(self, name: str, r):
        return 2.0 * self.cross[name].w(r)

    def c_cross_antideriv(self, name: str, r):
        """Odd antiderivative of c_cross, zero at r = 0."""
        return 2.0 * self.cross[name].w1(r)

    def c_cross_total(self, name: str) -> float:
        """Integral of c_cross over the positive half line."""
        return 2.0 * self.cross[name].w1_inf

    def modified(self, rho_op, beta: float) -> LaplaceKernel:
        """Kernel of rho(omega) (1 - exp(-beta rho_op(omega))).

        ``rho_op`` is a constant or a callable of omega.
        """
        key = (rho_op, float(beta))
        try:
            return self._modified[key]
        except (KeyError, TypeError):
            pass
        if not callable(rho_op):
            factor = -math.expm1(-beta * float(rho_op))
            if factor < 0:
                raise NonPositiveDensity("1 - exp(-beta rho_op) must be >= 0")
            if isinstance(self.bath, Tabulated):
                lk = self.bath.scaled(factor).laplace(self.t_max)
            else:
                lk = self.bath.scaled(factor).laplace()
        else:
            omega, mass = self.bath.nodes()
            fac = -np.expm1(-beta * np.asarray(rho_op(omega), dtype=float))
            if np.any(fac < 0):
                raise NonPositiveDensity("1 - exp(-beta rho_op) must be >= 0")
            keep = mass * fac > 0
            lk = _ExpSumLaplace(omega[keep], (mass * fac)[keep])
            lk.density = DiscreteModes(tuple(np.sqrt(lk.masses)), tuple(lk.rates))
            if lk.rates.size > 64:
                lk = _CachedLaplace(lk, self.t_max)
        try:
            self._modified[key] = lk
        except TypeError:
            pass
        return lk

    def w_amp_mod(self, t, rho_op, beta: float):
        return self.modified(rho_op, beta).w(t)


def build_kernels(bath, test_functions: Iterable[TestFunction] = (), t_max: float = 200.0) -> KernelSet:
    """Assemble the kernel bundle for ``bath`` and the given test functions.

    A test function named ``"h"`` (f = h) is always included.
    """
    if not isinstance(bath, (PowerLawExpCutoff, DiscreteModes, Tabulated)):
        raise TypeError(f"unsupported density type {type(bath).__name__}")
    if isinstance(bath, PowerLawExpCutoff) and not bath.exponent > 1:
        raise InfraredDivergent(f"exponent must be > 1 for a finite rho/omega^2 integral, got {bath.exponent}")
    norm = bath.moment(-2)
    if not math.isfinite(norm):
        raise InfraredDivergent("integral of rho/omega^2 is not finite")
    kernel = bath.laplace(t_max) if isinstance(bath, Tabulated) else bath.laplace()
    ks = KernelSet(bath=bath, kernel=kernel, norm_h_over_omega_sq=norm, t_max=t_max)
    tests = {"h": TestFunction.from_power(bath, 0.0, "h")}
    for tf in test_functions:
        tests[tf.name] = tf
    for name, tf in tests.items():
        ks.tests[name] = tf
        ks.cross[name] = tf.overlap.laplace()
        ks.norm_f_sq[name] = float(tf.norm_sq)
        ks.overlap_h_over_omega_f[name] = tf.overlap.moment(-1)
    return ks


def levy_density(s: float, y):
    """Density of the Levy measure of the s/2-stable subordinator."""
    if not 0 < s < 2:
        raise OrderOutOfRange(f"order s must lie in (0, 2), got {s}")
    y = np.asarray(y, dtype=float)
    if np.any(y <= 0):
        raise ValueError("y must be positive")
    return s / (2 * math.gamma(1 - s / 2)) * y ** (-1 - s / 2)
