"""Ground-state observables from sampled path functionals.

Each estimator maps per-sweep records (:class:`sbmc.sampler.Samples`) to a
number with a blocked standard error.  Functionals measured at several probe
centres are averaged over centres per sample before the error analysis, which
keeps the records independent of the probe layout.

Field observables enter through the Gaussian law of phi(f) conditional on a
path: mean K(f), variance ||f||^2 / 2.  Boson-number observables enter through
the quadrant functional W.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy import integrate
from scipy.interpolate import CubicSpline

from .kernel import KernelSet, levy_density
from .oracle import free_action_mean
from .sampler import McmcConfig, Samples, run_action_chain
from .stats import blocked, jackknife

FORMULA_IDS = {
    "energy": "eq:energy",
    "spin_correlation": "eq:corr",
    "gap": "eq:gap",
    "char_fn": "eq:charfn",
    "field_moment": "eq:phimoments",
    "field_function": "eq:fieldfn",
    "fluctuations": "eq:fluct",
    "gaussian_moment": "eq:gauss3",
    "fractional_moment": "eq:ab2",
    "exp_moment": "eq:dd",
    "exp_moment_sigma": "eq:ddd",
    "boson_generating": "eq:nnnn",
    "boson_growth": "eq:N",
    "parity": "eq:n3",
    "sigma_parity": "eq:n4",
    "n_moments": "eq:m",
    "resolvent": "eq:gk",
    "n_resolvent": "eq:pt",
    "n_chain": "eq:ine1",
    "quadrant_bound": "eq:bound",
}


class LadderTooCoarse(RuntimeError):
    pass


class FitWindowBad(ValueError):
    pass


class DomainError(ValueError):
    pass


class IdentityCheckWarning(UserWarning):
    pass


@dataclass
class EstimatorResult:
    name: str
    value: float
    stderr: float
    tau_int: float
    n_samples: int
    systematic: float = 0.0
    paper_ref: str = ""
    config_fingerprint: str = ""
    truncation: dict = field(default_factory=dict)
    source: str = "mcmc"
    extra: dict = field(default_factory=dict)

    @property
    def total_error(self) -> float:
        return self.stderr + self.systematic

    def record(self) -> dict:
        return {
            "name": self.name,
            "value": _finite(self.value),
            "stderr": _finite(self.stderr),
            "tau_int": _finite(self.tau_int),
            "n_samples": int(self.n_samples),
            "systematic": _finite(self.systematic),
            "config_fingerprint": self.config_fingerprint,
            "paper_ref": self.paper_ref,
            "source": self.source,
            "truncation": self.truncation,
            "extra": jsonable(self.extra),
        }

    def checks_passed(self) -> bool:
        return all(c.get("passed", True) for c in self.extra.get("checks", []))


def _finite(x):
    x = float(x)
    return x if math.isfinite(x) else None


def jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return _finite(obj)
    if isinstance(obj, (np.integer, int)) and not isinstance(obj, bool):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, complex):
        return {"re": _finite(obj.real), "im": _finite(obj.imag)}
    return obj


@dataclass
class GroundStateReport:
    energy: EstimatorResult | None
    gap: EstimatorResult | None
    table: dict = field(default_factory=dict)

    def records(self) -> list[dict]:
        out = []
        for r in (self.energy, self.gap):
            if r is not None:
                out.append(r.record())
        for r in self.table.values():
            out.append(r.record())
        return out


# ---------------------------------------------------------------------------
# helpers


def _trunc_meta(samples: Samples) -> dict:
    m = samples.meta
    return {"T": m.get("T"), "t_w": m.get("t_w"), "T_prime": m.get("truncation")}


def _alpha(samples: Samples) -> float:
    return float(samples.meta["alpha"])


def _result(name, series, samples, key, systematic=0.0, scale=1.0, offset=0.0, **extra) -> EstimatorResult:
    st = blocked(series, samples.chain)
    return EstimatorResult(
        name=name,
        value=scale * st.mean + offset,
        stderr=abs(scale) * st.stderr,
        tau_int=st.tau,
        n_samples=st.n,
        systematic=systematic,
        paper_ref=FORMULA_IDS[key],
        truncation=_trunc_meta(samples),
        extra={"block_size": st.block_size, "n_blocks": st.n_blocks, **extra},
    )


def k_truncation_bound(kernels: KernelSet, name: str, alpha: float, truncation: float) -> float:
    """Largest change of K(f) from cutting the time integral at +-T'."""
    rest = kernels.c_cross_total(name) - float(kernels.c_cross_antideriv(name, truncation))
    return abs(alpha) * max(rest, 0.0)


def w_truncation_bound(kernels: KernelSet, truncation: float, mode=None) -> float:
    """Largest change of the quadrant functional from cutting it to a T' x T' square."""
    kern = kernels.kernel if mode is None else kernels.modified(*mode)
    square = float(kern.u2(2 * truncation) - 2 * kern.u2(truncation))
    return max(0.5 * kern.norm_sq - square, 0.0)


def _symmetrize(kfun, K, y=None):
    """Flip-symmetrised per-sample centre average of kfun(K) or y * kfun(K)."""
    if y is None:
        return (0.5 * (kfun(K) + kfun(-K))).mean(axis=1)
    return (0.5 * y * (kfun(K) - kfun(-K))).mean(axis=1)


def _check(name: str, passed: bool, **detail) -> dict:
    return {"check": name, "passed": bool(passed), **detail}


# ---------------------------------------------------------------------------
# energy


def simpson_weights(x: np.ndarray) -> np.ndarray:
    n = x.size
    if n < 3 or n % 2 == 0:
        raise LadderTooCoarse("Simpson quadrature needs an odd number (>= 3) of equally spaced nodes")
    h = x[1] - x[0]
    w = np.ones(n)
    w[1:-1:2] = 4
    w[2:-1:2] = 2
    return w * h / 3


def energy(config: McmcConfig, kernels: KernelSet, n_nodes: int = 5, ladder=None, chains: int = 1,
           top_actions: np.ndarray | None = None, rel_tol: float = 2e-3) -> tuple[EstimatorResult, list]:
    """Ground-state energy by thermodynamic integration in the coupling.

    E_T = -eps - (1/2T) * int_0^{alpha^2/2} <A>_lam d lam, the integrand
    sampled on an equally spaced ladder with Simpson weights.  The lam = 0
    node uses the free flip-process value.  Returns the result and the
    integrand table.
    """
    lam_max = config.alpha**2 / 2
    T, eps = config.T, config.epsilon
    if lam_max == 0:
        res = EstimatorResult("energy", -eps, 0.0, 0.0, 0, paper_ref=FORMULA_IDS["energy"],
                              truncation={"T": T})
        return res, []
    nodes = np.linspace(0, lam_max, n_nodes) if ladder is None else np.asarray(ladder, dtype=float)
    if nodes.size < 5:
        raise LadderTooCoarse("the coupling ladder needs at least 5 nodes")
    if abs(nodes[0]) > 1e-15 or abs(nodes[-1] - lam_max) > 1e-12 * lam_max:
        raise ValueError("ladder must span [0, alpha^2/2]")
    w = simpson_weights(nodes)
    table = []
    means, errs = [], []
    for i, lam in enumerate(nodes):
        if i == 0:
            mean, err, tau, n = free_action_mean(kernels, T, eps), 0.0, 0.0, 0
        elif i == nodes.size - 1 and top_actions is not None:
            st = blocked(top_actions)
            mean, err, tau, n = st.mean, st.stderr, st.tau, st.n
        else:
            series = []
            for c in range(chains):
                cfg = replace(config, lam=float(lam), chain=config.chain + 1000 * (i + 1) + c)
                acts, _ = run_action_chain(cfg, kernels)
                series.append(acts)
            ids = np.concatenate([np.full(s.size, c) for c, s in enumerate(series)])
            st = blocked(np.concatenate(series), ids)
            mean, err, tau, n = st.mean, st.stderr, st.tau, st.n
        means.append(mean)
        errs.append(err)
        table.append({"lam": float(lam), "mean_action": mean, "stderr": err, "tau_int": tau, "n": n})
    means, errs = np.array(means), np.array(errs)
    integral = float(w @ means)
    stat = float(math.sqrt(np.sum((w * errs) ** 2)))
    coarse = simpson_weights(nodes[::2]) @ means[::2] if nodes.size >= 5 and (nodes.size - 1) % 4 == 0 else None
    if coarse is not None:
        est = abs(integral - coarse) / 15
        if est > rel_tol * abs(integral) and est > 2 * stat:
            raise LadderTooCoarse(f"quadrature error estimate {est:.3g} exceeds tolerance")
    else:
        est = math.nan
    value = -eps - integral / (2 * T)
    # finite-window bias: 0 <= E_T - E_0 <= alpha^2 ||h/w||^2 / (4T)
    sys = config.alpha**2 * kernels.norm_h_over_omega_sq / (4 * T)
    res = EstimatorResult(
        "energy", value, stat / (2 * T), float(max(r["tau_int"] for r in table)), int(sum(r["n"] for r in table)),
        systematic=sys, paper_ref=FORMULA_IDS["energy"], truncation={"T": T},
        extra={"quadrature_error_estimate": est / (2 * T) if math.isfinite(est) else None,
               "bias_direction": "E_T >= E_0"},
    )
    return res, table


# ---------------------------------------------------------------------------
# spin correlations


def _lag_index(samples: Samples, t: float) -> int:
    lags = samples.lags
    j = int(np.argmin(np.abs(lags - t)))
    if abs(lags[j] - t) > 1e-9 * max(1.0, t):
        raise ValueError(f"lag {t} is not on the recorded lag grid (spacing {lags[1] - lags[0]:g})")
    return j


def spin_correlation(samples: Samples, t: float) -> EstimatorResult:
    """Time-averaged <Y_s Y_{s+t}> within the measurement window."""
    j = _lag_index(samples, t)
    res = _result("spin_correlation", samples.corr[:, j], samples, "spin_correlation", lag=float(samples.lags[j]))
    return res


def _loglinear_slope(t, c):
    A = np.vstack([np.ones_like(t), -t]).T
    coef, *_ = np.linalg.lstsq(A, np.log(c), rcond=None)
    return float(coef[1]), float(coef[0])


def _check_window(c):
    if np.any(c <= 0):
        raise FitWindowBad("correlation is not positive throughout the fit window")
    if np.any(np.diff(c) >= 0):
        raise FitWindowBad("correlation is not decreasing throughout the fit window")


def gap_fit(samples_or_corr, window=(0.5, 3.0), lags=None) -> EstimatorResult:
    """Slope of log <Y_0 Y_t> over ``window``.

    Accepts either :class:`Samples` (error by blocked jackknife) or an array
    of correlation values together with ``lags`` (deterministic fit).
    """
    if isinstance(samples_or_corr, Samples):
        s = samples_or_corr
        lags = s.lags
        sel = (lags >= window[0] - 1e-12) & (lags <= window[1] + 1e-12)
        if sel.sum() < 2:
            raise FitWindowBad("fit window contains fewer than two lags")
        t = lags[sel]
        mean_c = s.corr[:, sel].mean(axis=0)
        _check_window(mean_c)
        cols = [s.corr[:, j] for j in np.flatnonzero(sel)]

        def f(means):
            c = np.asarray(means)
            if np.any(c <= 0):
                return math.nan
            return _loglinear_slope(t, c)[0]

        val, err, tau, b = jackknife(f, cols, s.chain)
        slope, icpt = _loglinear_slope(t, mean_c)
        resid = np.log(mean_c) - (icpt - slope * t)
        return EstimatorResult("gap", val, err, tau, len(s), paper_ref=FORMULA_IDS["gap"],
                               truncation=_trunc_meta(s),
                               extra={"window": list(window), "log_residual_rms": float(np.sqrt(np.mean(resid**2))),
                                      "intercept": icpt})
    c = np.asarray(samples_or_corr, dtype=float)
    lags = np.asarray(lags, dtype=float)
    sel = (lags >= window[0] - 1e-12) & (lags <= window[1] + 1e-12)
    _check_window(c[sel])
    slope, icpt = _loglinear_slope(lags[sel], c[sel])
    return EstimatorResult("gap", slope, 0.0, 0.0, 0, paper_ref=FORMULA_IDS["gap"], source="exact",
                           extra={"window": list(window), "intercept": icpt})


# ---------------------------------------------------------------------------
# field observables


def _fnorm(kernels: KernelSet, f: str) -> float:
    return kernels.norm_f_sq[f]


def _kdata(samples: Samples, kernels: KernelSet, f: str):
    if f not in samples.k:
        raise KeyError(f"K was not recorded for test function {f!r}")
    return samples.k[f], k_truncation_bound(kernels, f, _alpha(samples), samples.meta["truncation"])


def char_fn(samples: Samples, kernels: KernelSet, f: str, beta: float) -> EstimatorResult:
    """<exp(i beta phi(f))> = exp(-beta^2 F/4) <cos(beta K)>; the sine part vanishes by flip symmetry."""
    K, dk = _kdata(samples, kernels, f)
    F = _fnorm(kernels, f)
    pref = math.exp(-beta * beta * F / 4)
    series = np.cos(beta * K).mean(axis=1)
    res = _result("char_fn", series, samples, "char_fn", systematic=pref * abs(beta) * dk, scale=pref,
                  f=f, beta=beta)
    res.extra["checks"] = [_check("modulus_bound", abs(res.value) <= pref * (1 + 1e-12), bound=pref)]
    if abs(res.value) > pref * (1 + 1e-12):
        raise AssertionError("characteristic function exceeds its Gaussian envelope")
    return res


def gaussian_moments(k: int) -> float:
    """E[Z^k] for a standard normal Z."""
    if k % 2:
        return 0.0
    return float(math.prod(range(k - 1, 0, -2))) if k else 1.0


def conditional_power(K, c: float, n: int):
    """E[(K + c Z)^n], i.e. i^n c^n He_n(-i K / c)."""
    out = np.zeros_like(np.asarray(K, dtype=float))
    for j in range(0, n + 1, 2):
        out = out + math.comb(n, j) * gaussian_moments(j) * c**j * np.asarray(K, dtype=float) ** (n - j)
    return out


def field_moment(samples: Samples, kernels: KernelSet, f: str, n: int, xi: str = "1") -> EstimatorResult:
    """<xi phi(f)^n> with xi = "1" or "sigma"."""
    K, dk = _kdata(samples, kernels, f)
    c = math.sqrt(_fnorm(kernels, f) / 2)
    y = samples.y if xi == "sigma" else None
    if xi not in ("1", "sigma"):
        raise ValueError("xi must be '1' or 'sigma'")
    series = _symmetrize(lambda k: conditional_power(k, c, n), K, y)
    kmax = float(np.max(np.abs(K))) + dk if K.size else dk
    deriv = sum(math.comb(n, j) * gaussian_moments(j) * c**j * (n - j) * kmax ** max(n - j - 1, 0)
                for j in range(0, n, 2))
    return _result("field_moment", series, samples, "field_moment", systematic=deriv * dk, f=f, n=n, xi=xi)


def gaussian_smooth(func: Callable, c: float, kmax: float, n_grid: int = 8192):
    """Return G with G(K) = E[F(K + c Z)], computed by FFT convolution on a grid."""
    half = kmax + 12 * c + 1.0
    x = np.linspace(-2 * half, 2 * half, n_grid, endpoint=False)
    h = x[1] - x[0]
    vals = np.asarray(func(x), dtype=complex)
    k = 2 * np.pi * np.fft.fftfreq(n_grid, d=h)
    g = np.fft.ifft(np.fft.fft(vals) * np.exp(-0.5 * (c * k) ** 2))
    if np.all(np.isreal(vals)):
        g = g.real
    inside = np.abs(x) <= half

    def G(K):
        K = np.asarray(K, dtype=float)
        if np.iscomplexobj(g):
            return np.interp(K, x[inside], g.real[inside]) + 1j * np.interp(K, x[inside], g.imag[inside])
        return np.interp(K, x[inside], g[inside])

    return G


def field_function(samples: Samples, kernels: KernelSet, f: str, F, xi: str = "1", grid=None) -> EstimatorResult:
    """<xi F(phi(f))> = <xi G(K)> with G the Gaussian smoothing of F.

    ``F`` is a callable, or an array of values on ``grid`` (linearly
    interpolated, zero outside).  F should decay fast enough for the FFT
    convolution to be free of wrap-around.
    """
    K, dk = _kdata(samples, kernels, f)
    c = math.sqrt(_fnorm(kernels, f) / 2)
    if not callable(F):
        gx, gv = np.asarray(grid, dtype=float), np.asarray(F, dtype=float)
        F = lambda x: np.interp(x, gx, gv, left=0.0, right=0.0)
    G = gaussian_smooth(F, c, float(np.max(np.abs(K))) + dk + 1.0)
    y = samples.y if xi == "sigma" else None
    series = _symmetrize(G, K, y)
    probe = np.linspace(-1, 1, 201) * (float(np.max(np.abs(K))) + dk)
    lip = float(np.max(np.abs(np.gradient(G(probe), probe)))) if np.ptp(probe) > 0 else 0.0
    return _result("field_function", series, samples, "field_function", systematic=lip * dk, f=f, xi=xi)


def fluctuations(samples: Samples, kernels: KernelSet, f: str) -> tuple[EstimatorResult, EstimatorResult]:
    """F_alpha = <phi(f)^2> and G_alpha = <phi(f)^2> - <sigma phi(f)>^2."""
    K, dk = _kdata(samples, kernels, f)
    F = _fnorm(kernels, f)
    k2 = (K * K).mean(axis=1)
    yk = (samples.y * K).mean(axis=1)
    kmax = float(np.max(np.abs(K))) + dk
    Fa = _result("fluctuations_F", k2, samples, "fluctuations", systematic=2 * kmax * dk, offset=F / 2, f=f)
    val, err, tau, b = jackknife(lambda m: m[0] - m[1] ** 2 + F / 2, [k2, yk], samples.chain)
    Ga = EstimatorResult("fluctuations_G", val, err, tau, len(samples), systematic=4 * kmax * dk,
                         paper_ref=FORMULA_IDS["fluctuations"], truncation=_trunc_meta(samples), extra={"f": f})
    Fa.extra["checks"] = [_check("F_alpha>=F_0", Fa.value >= F / 2 - 1e-15, F0=F / 2)]
    Ga.extra["checks"] = [_check("G_alpha>0", Ga.value > 0)]
    if not Fa.value >= F / 2 - 1e-15:
        raise AssertionError("F_alpha below the free value")
    return Fa, Ga


def gaussian_moment(samples: Samples, kernels: KernelSet, f: str, beta: float) -> EstimatorResult:
    """||exp(beta phi(f)^2 / 2) psi||^2 = (1 - beta F)^{-1/2} <exp(beta K^2 / (1 - beta F))>."""
    K, dk = _kdata(samples, kernels, f)
    F = _fnorm(kernels, f)
    if not beta * F < 1:
        raise DomainError(f"gaussian_moment requires beta < 1/||f||^2 = {1 / F:g}, got beta = {beta:g}")
    d = 1 - beta * F
    series = np.exp(beta * K * K / d).mean(axis=1)
    kmax = float(np.max(np.abs(K))) + dk
    lip = abs(2 * beta * kmax / d) * math.exp(max(beta, 0) * kmax * kmax / d)
    return _result("gaussian_moment", series, samples, "gaussian_moment", systematic=d**-0.5 * lip * dk,
                   scale=d**-0.5, f=f, beta=beta)


def _fractional_profile(s: float, F: float, kmax: float, n_u: int = 1601):
    """Spline of K -> int (1 - (1+bF)^{-1/2} exp(-b K^2/(1+bF))) lambda(db)."""
    u = np.linspace(-60.0, 60.0, n_u)
    b = np.exp(u)
    weight = levy_density(s, b) * b * (u[1] - u[0])
    weight[0] *= 0.5
    weight[-1] *= 0.5
    kk = np.linspace(0.0, max(kmax, 1e-6) * 1.05 + 1e-3, 400)
    # -expm1 keeps the small-b region free of cancellation
    expo = -0.5 * np.log1p(b * F)[None, :] - (kk[:, None] ** 2) * (b / (1 + b * F))[None, :]
    vals = (-np.expm1(expo)) @ weight
    # analytic tails beyond the grid: the integrand is ~ b (F/2 + K^2) below
    # it and ~ 1 - (bF)^{-1/2} exp(-K^2/F) above it
    lo, hi = b[0], b[-1]
    pref = s / (2 * math.gamma(1 - s / 2))
    vals = vals + pref * (0.5 * F + kk**2) * lo ** (1 - s / 2) / (1 - s / 2)
    vals = vals + hi ** (-s / 2) / math.gamma(1 - s / 2)
    vals = vals - pref * np.exp(-kk**2 / F) * F**-0.5 * hi ** (-(1 + s) / 2) * 2 / (1 + s)
    return CubicSpline(kk, vals)


def fractional_moment(samples: Samples, kernels: KernelSet, f: str, s: float) -> EstimatorResult:
    """Lambda_alpha = <|phi(f)|^s> through the subordinator representation, 0 < s < 2."""
    K, dk = _kdata(samples, kernels, f)
    F = _fnorm(kernels, f)
    kmax = float(np.max(np.abs(K))) + dk
    prof = _fractional_profile(s, F, kmax)
    series = prof(np.abs(K)).mean(axis=1)
    lam0 = float(prof(0.0))
    lip = float(np.max(np.abs(prof(np.linspace(0, kmax, 200), 1))))
    res = _result("fractional_moment", series, samples, "fractional_moment", systematic=lip * dk, f=f, s=s,
                  lambda_0=lam0)
    ok = res.value >= lam0 - 3 * res.stderr - res.systematic
    res.extra["checks"] = [_check("Lambda_alpha>=Lambda_0", ok, lambda_0=lam0)]
    if not ok:
        warnings.warn("fractional moment fell below its free value", IdentityCheckWarning)
    return res


def exp_moment(samples: Samples, kernels: KernelSet, f: str, beta: float) -> tuple[EstimatorResult, EstimatorResult]:
    """(<exp(beta phi(f))>, <sigma exp(beta phi(f))>) = exp(beta^2 F/4) (<e^{beta K}>, <Y_0 e^{beta K}>)."""
    K, dk = _kdata(samples, kernels, f)
    F = _fnorm(kernels, f)
    pref = math.exp(beta * beta * F / 4)
    kmax = float(np.max(np.abs(K))) + dk
    sys = pref * abs(beta) * math.exp(abs(beta) * kmax) * dk
    first = _result("exp_moment", _symmetrize(lambda k: np.exp(beta * k), K), samples, "exp_moment",
                    systematic=sys, scale=pref, f=f, beta=beta, xi="1")
    second = _result("exp_moment_sigma", _symmetrize(lambda k: np.exp(beta * k), K, samples.y), samples,
                     "exp_moment_sigma", systematic=sys, scale=pref, f=f, beta=beta, xi="sigma")
    first.extra["checks"] = [_check("jensen", first.value >= pref * (1 - 1e-12), bound=pref)]
    if first.value < pref * (1 - 1e-12):
        raise AssertionError("exponential moment below its Jensen bound")
    return first, second


# ---------------------------------------------------------------------------
# boson statistics


def _wdata(samples: Samples, kernels: KernelSet):
    return samples.quadrant, w_truncation_bound(kernels, samples.meta["truncation"])


def boson_generating(samples: Samples, kernels: KernelSet, beta: complex) -> EstimatorResult:
    """<exp(-beta N)> = <exp(-alpha^2 (1 - e^{-beta}) W)>; ``value`` is the real part."""
    W, dw = _wdata(samples, kernels)
    a2 = _alpha(samples) ** 2
    coef = a2 * (1 - np.exp(-complex(beta)))
    vals = np.exp(-coef * W).mean(axis=1)
    half = 0.5 * kernels.norm_h_over_omega_sq
    sys = abs(coef) * math.exp(abs(coef.real) * half) * dw
    key = "boson_growth" if complex(beta).real < 0 else "boson_generating"
    res = _result("boson_generating", vals.real, samples, key, systematic=sys, beta=str(complex(beta)))
    if abs(coef.imag) > 0:
        im = blocked(vals.imag, samples.chain)
        res.extra["imag"] = im.mean
        res.extra["imag_stderr"] = im.stderr
    return res


def parity_pair(samples: Samples, kernels: KernelSet) -> tuple[EstimatorResult, EstimatorResult]:
    """(<(-1)^N>, <sigma (-1)^N>) as (<exp(-2 alpha^2 W)>, <Y_0 exp(-2 alpha^2 W)>)."""
    W, dw = _wdata(samples, kernels)
    a2 = _alpha(samples) ** 2
    weights = np.exp(-2 * a2 * W)
    sys = 2 * a2 * math.exp(a2 * kernels.norm_h_over_omega_sq) * dw
    first = _result("parity", weights.mean(axis=1), samples, "parity", systematic=sys)
    # W is even under the global flip and Y_0 is odd: the symmetrised product vanishes
    second = _result("sigma_parity", (samples.y * weights).mean(axis=1), samples, "sigma_parity", systematic=sys)
    lower = math.exp(-a2 * kernels.norm_h_over_omega_sq)
    ok_first = bool(np.all(weights >= lower * (1 - 1e-12)))
    first.extra["checks"] = [_check("parity>=exp(-alpha^2 |h/w|^2)", ok_first and first.value >= lower, bound=lower)]
    if not ok_first:
        raise AssertionError("parity weight below its path-wise lower bound")
    tol = 3 * second.stderr + second.systematic
    ok_second = abs(second.value + 1) <= tol
    second.extra["checks"] = [_check("sigma_parity==-1", ok_second, target=-1.0, tolerance=tol)]
    if a2 > 0 and not ok_second:
        warnings.warn(
            f"<Y_0 exp(-2 alpha^2 W)> = {second.value:.4g} +- {tol:.2g}, not -1; the measure is flip "
            "invariant, so this average is zero for every window", IdentityCheckWarning)
    return first, second


def stirling2(m: int, r: int) -> int:
    """Stirling number of the second kind by the alternating sum (exact integers)."""
    if not 0 <= m <= 20:
        raise ValueError("moment order must lie in 0..20")
    if r < 0 or r > m:
        return 0
    total = sum((-1) ** (r - j) * math.comb(r, j) * j**m for j in range(r + 1))
    return total // math.factorial(r)


def n_moments(samples: Samples, kernels: KernelSet, m: int) -> EstimatorResult:
    """<N^m> = sum_r S(m, r) alpha^{2r} <W^r>."""
    W, dw = _wdata(samples, kernels)
    a2 = _alpha(samples) ** 2
    coef = [stirling2(m, r) * a2**r for r in range(1, m + 1)]
    poly = sum(c * W ** (r + 1) for r, c in enumerate(coef))
    series = poly.mean(axis=1)
    half = 0.5 * kernels.norm_h_over_omega_sq
    deriv = sum(c * (r + 1) * half**r for r, c in enumerate(coef))
    res = _result("n_moments", series, samples, "n_moments", systematic=deriv * dw, m=m,
                  coefficients=[stirling2(m, r) for r in range(1, m + 1)])
    if m == 1:
        bound = a2 * half
        ok = -3 * res.stderr - res.systematic <= res.value <= bound + 3 * res.stderr + res.systematic
        res.extra["checks"] = [_check("0<=<N><=alpha^2|h/w|^2/2", ok, bound=bound)]
        if not ok:
            warnings.warn("mean boson number outside [0, alpha^2 |h/w|^2 / 2]", IdentityCheckWarning)
    return res


def n_from_generating(samples: Samples, kernels: KernelSet, h: float = 1e-3) -> EstimatorResult:
    """<N> as minus the central-difference derivative of the generating function at 0."""
    W, dw = _wdata(samples, kernels)
    a2 = _alpha(samples) ** 2
    d = (np.exp(-a2 * (1 - math.exp(h)) * W) - np.exp(-a2 * (1 - math.exp(-h)) * W)) / (2 * h)
    return _result("n_generating", d.mean(axis=1), samples, "boson_generating", systematic=a2 * dw * 1.01, step=h)


# ---------------------------------------------------------------------------
# resolvent route


def _corr_with_tail(samples: Samples, window):
    """Mean correlation on the lag grid plus the fitted gap for the tail."""
    g = gap_fit(samples, window)
    return samples.corr.mean(axis=0), g


def _resolvent_from(lags, c, gap, omega):
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    body = integrate.simpson(np.exp(-np.outer(omega, lags)) * c[None, :], x=lags, axis=1)
    L = lags[-1]
    tail = c[-1] * np.exp(-omega * L) / (omega + gap)
    return body + tail


def _n_pt_from(lags, c, gap, kernels: KernelSet, alpha: float):
    body = integrate.simpson(lags * kernels.w_amp(lags) * c, x=lags)
    L = lags[-1]
    tail = integrate.quad(lambda u: u * float(kernels.w_amp(u)) * c[-1] * math.exp(-gap * (u - L)), L, np.inf,
                          epsabs=1e-13, limit=200)[0]
    return alpha**2 * (body + tail)


def resolvent_kernel(samples: Samples, kernels: KernelSet, omegas, window=(0.5, 3.0),
                     sigma_test: str | None = None) -> dict:
    """Resolvent-kernel table, <N> via the squared-resolvent route, and the <N> inequality chain.

    R(w) = int_0^inf e^{-w r} <Y_0 Y_r> dr; the Riesz representative of
    f -> <sigma phi(f)> is G(w) = -alpha R(w) h(w).  The chain checked is
    <N> <= -(alpha/2) <sigma phi(w^{-1} h)> <= (alpha^2/2) ||h/w||^2.
    """
    alpha = _alpha(samples)
    lags = samples.lags
    omega = np.atleast_1d(np.asarray(omegas, dtype=float))
    g = gap_fit(samples, window)
    gap = g.value
    ncol = samples.corr.shape[1]
    cols = [samples.corr[:, j] for j in range(ncol)]

    def R_of(means):
        return _resolvent_from(lags, np.asarray(means), gap, omega)

    Rvals = R_of([c.mean() for c in cols])
    Rerr = np.array([jackknife(lambda m, k=k: R_of(m)[k], cols, samples.chain)[1] for k in range(omega.size)])
    n_val, n_err, tau, b = jackknife(lambda m: _n_pt_from(lags, np.asarray(m), gap, kernels, alpha), cols,
                                     samples.chain)
    meta = _trunc_meta(samples)
    n_res = EstimatorResult("n_resolvent", n_val, n_err, tau, len(samples), paper_ref=FORMULA_IDS["n_resolvent"],
                            truncation=meta, extra={"fit_window": list(window), "gap": gap})

    # middle term of the chain
    if sigma_test is not None and sigma_test in samples.k:
        mid = field_moment(samples, kernels, sigma_test, 1, xi="sigma")
        mid_val, mid_err, mid_sys = -0.5 * alpha * mid.value, 0.5 * abs(alpha) * mid.stderr, 0.5 * abs(alpha) * mid.systematic
        route = f"sigma K({sigma_test})"
    else:
        om, mass = kernels.bath.nodes()
        kern = lambda m: 0.5 * alpha**2 * float(np.sum(mass / om * _resolvent_from(lags, np.asarray(m), gap, om)))
        mid_val, mid_err, _, _ = jackknife(kern, cols, samples.chain)
        mid_sys = 0.0
        route = "resolvent"
    bound = 0.5 * alpha**2 * kernels.norm_h_over_omega_sq
    e1 = 3 * math.hypot(n_err, mid_err) + mid_sys
    e2 = 3 * mid_err + mid_sys
    ok = (n_val <= mid_val + e1) and (mid_val <= bound + e2)
    mid_res = EstimatorResult("n_chain_middle", mid_val, mid_err, tau, len(samples), systematic=mid_sys,
                              paper_ref=FORMULA_IDS["n_chain"], truncation=meta,
                              extra={"route": route, "upper": bound,
                                     "checks": [_check("<N><=middle<=bound", ok, n=n_val, upper=bound)]})
    if not ok:
        warnings.warn("boson-number inequality chain violated beyond errors", IdentityCheckWarning)
    table = EstimatorResult("resolvent", float(Rvals[0]), float(Rerr[0]), tau, len(samples),
                            paper_ref=FORMULA_IDS["resolvent"], truncation=meta,
                            extra={"omega": omega, "R": Rvals, "R_stderr": Rerr, "G_over_h": -alpha * Rvals,
                                   "gap": gap})
    return {"table": table, "n": n_res, "middle": mid_res}


def n_consistency(samples: Samples, kernels: KernelSet, window=(0.5, 3.0)) -> dict:
    """Three routes to <N> and whether they agree within three combined standard errors."""
    a = n_moments(samples, kernels, 1)
    b = resolvent_kernel(samples, kernels, [1.0], window)["n"]
    c = n_from_generating(samples, kernels)
    routes = {"stirling": a, "resolvent": b, "generating": c}
    ok = True
    pairs = []
    for (na, ra), (nb, rb) in [(("stirling", a), ("resolvent", b)), (("stirling", a), ("generating", c)),
                               (("resolvent", b), ("generating", c))]:
        tol = 3 * math.hypot(ra.total_error, rb.total_error)
        agree = abs(ra.value - rb.value) <= tol
        ok &= agree
        pairs.append({"routes": [na, nb], "difference": ra.value - rb.value, "tolerance": tol, "agree": agree})
    return {"routes": routes, "pairs": pairs, "agree": ok}
