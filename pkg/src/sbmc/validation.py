"""Check suites shared by ``sbmc validate`` and the test suite.

Every suite returns a list of :class:`Check` rows: a measured value, the
tolerance it was held to and a verdict.  ``quick`` runs use fewer samples and
skip the long exact-diagonalisation comparison.
"""
from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import integrate

from . import estimators as est
from . import oracle
from .kernel import DiscreteModes, PowerLawExpCutoff, TestFunction, build_kernels
from .path import SpinPath, delta_action_flip, pair_action
from .sampler import McmcConfig, MeasurementPlan, grid_transition_matrix, run_chain, run_chains, run_grid_histogram


@dataclass
class Check:
    suite: str
    name: str
    value: float
    tolerance: float
    passed: bool
    detail: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return f"{verdict}  {self.suite:<14s} {self.name:<44s} value={self.value:<14.6g} tol={self.tolerance:.3g}"


def _within(suite, name, got, ref, tol, **detail) -> Check:
    diff = abs(got - ref)
    return Check(suite, name, diff, tol, bool(diff <= tol), {"estimate": got, "reference": ref, **detail})


# ---------------------------------------------------------------------------
# independent quadrature references


_GL = leggauss(64)


def _gl(a, b):
    x, w = _GL
    a = np.asarray(a, dtype=float)[..., None]
    b = np.asarray(b, dtype=float)[..., None]
    return 0.5 * (b - a) * x + 0.5 * (b + a), 0.5 * (b - a) * w


def rect_reference(w, a1, b1, a2, b2) -> float:
    """Integral of w(|t - s|) over [a1, b1] x [a2, b2] by piecewise Gauss-Legendre.

    The inner t integral is split at t = s and the outer s integral at a1, b1,
    so every piece has a smooth integrand.
    """
    cuts = sorted({a2, b2} | {x for x in (a1, b1) if a2 < x < b2})
    total = 0.0
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        s, ws = _gl(lo, hi)
        inner = np.zeros_like(s)
        left_hi = np.clip(s, a1, b1)
        t, wt = _gl(np.full_like(s, a1), left_hi)
        inner += np.sum(wt * w(np.abs(s[:, None] - t)), axis=1)
        t, wt = _gl(left_hi, np.full_like(s, b1))
        inner += np.sum(wt * w(np.abs(t - s[:, None])), axis=1)
        total += float(ws @ inner)
    return total


def action_reference(path: SpinPath, w) -> float:
    a, b, s = path.segments()
    return float(sum(s[i] * s[j] * rect_reference(w, a[i], b[i], a[j], b[j])
                     for i in range(a.size) for j in range(a.size)))


def negated_on(path: SpinPath, lo: float, hi: float) -> SpinPath:
    """The path with Y replaced by -Y on [lo, hi)."""
    v = path.v
    extra = []
    if lo > -path.T:
        extra.append(lo)
    else:
        v = -v
    if hi < path.T:
        extra.append(hi)
    vals, counts = np.unique(np.concatenate((path.jumps, extra)), return_counts=True)
    return SpinPath(path.T, v, vals[counts % 2 == 1])


def random_path(rng, T=None, n_max=6) -> SpinPath:
    T = float(rng.uniform(0.5, 3.0)) if T is None else T
    n = int(rng.integers(0, n_max + 1))
    jumps = np.sort(rng.uniform(-T, T, n))
    if n > 1 and np.any(np.diff(jumps) <= 0):
        jumps = np.unique(jumps)
    return SpinPath(T, int(rng.choice([-1, 1])), jumps)


# ---------------------------------------------------------------------------
# suites


def kernel_exactness(n_rect: int = 100, seed: int = 1) -> list[Check]:
    t0 = time.perf_counter()
    bath = PowerLawExpCutoff(1.0, 2.0, 1.0)
    kern = build_kernels(bath).kernel
    out = []
    ts = np.array([0.0, 0.3, 1.0, 2.5, 7.0, 30.0])
    closed = (1 + ts) ** -3.0
    quad = np.array([integrate.quad(lambda o, t=t: 0.5 * bath.density(o) * math.exp(-t * o), 0, np.inf,
                                    epsabs=0, epsrel=1e-13)[0] for t in ts])
    got = kern.w(ts)
    rel = float(max(np.max(np.abs(got / closed - 1)), np.max(np.abs(got / quad - 1))))
    out.append(Check("kernel", "w(t) = (1+t)^-3 vs closed form and quadrature", rel, 1e-8, rel <= 1e-8))
    u_quad = integrate.quad(lambda t: integrate.quad(lambda u: float(kern.w(u)), 0, t, epsabs=0, epsrel=1e-13)[0],
                            0, 2, epsabs=0, epsrel=1e-13)[0]
    u2 = float(kern.u2(2.0))
    rel = max(abs(u2 / (2 / 3) - 1), abs(u2 / u_quad - 1))
    out.append(Check("kernel", "U(2) = 2/3 vs closed form and quadrature", rel, 1e-8, rel <= 1e-8))
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_rect):
        a1, b1 = np.sort(rng.uniform(-4, 4, 2))
        a2, b2 = np.sort(rng.uniform(-4, 4, 2))
        ref = rect_reference(kern.w, a1, b1, a2, b2)
        got = float(kern.rect(a1, b1, a2, b2))
        worst = max(worst, abs(got - ref) / max(abs(ref), 1e-300))
    out.append(Check("kernel", f"rectangle identity on {n_rect} rectangles", worst, 1e-8, worst <= 1e-8))
    dt = time.perf_counter() - t0
    for c in out:
        c.seconds = dt
    out.append(Check("kernel", "runtime [s]", dt, 1.0, dt < 1.0))
    return out


def action_oracle(n_paths: int = 1000, seed: int = 2) -> list[Check]:
    t0 = time.perf_counter()
    kern = build_kernels(PowerLawExpCutoff(1.0, 2.0, 1.0))
    w = kern.kernel.w
    rng = np.random.default_rng(seed)
    worst_a = worst_d = 0.0
    for _ in range(n_paths):
        p = random_path(rng)
        A = pair_action(p, kern)
        ref = action_reference(p, w)
        worst_a = max(worst_a, abs(A - ref) / abs(ref))
        lo = float(rng.uniform(-p.T, p.T))
        hi = float(rng.uniform(lo, p.T)) if rng.random() < 0.5 else None
        d = delta_action_flip(p, kern, lo, hi)
        q = negated_on(p, lo, p.T if hi is None else hi)
        diff = abs((pair_action(q, kern) - A) - d)
        worst_d = max(worst_d, diff / max(1.0, abs(A)))
    dt = time.perf_counter() - t0
    return [
        Check("action", f"pair action vs 2-D quadrature, {n_paths} paths", worst_a, 1e-7, worst_a <= 1e-7),
        Check("action", "flip delta vs full recompute", worst_d, 1e-9, worst_d <= 1e-9),
        Check("action", "runtime [s]", dt, 60.0, dt < 60.0),
    ]


def stationarity(steps: int = 10**6, seed: int = 1) -> list[Check]:
    t0 = time.perf_counter()
    kern = build_kernels(DiscreteModes((1.0,), (1.0,)))
    cfg = McmcConfig(T=2.0, epsilon=1.0, alpha=0.5, grid_slots=10, seed=seed, shift_width=0.8, pair_width=0.8)
    P = grid_transition_matrix(cfg, kern)
    bf = oracle.brute_force_path_sum(cfg.T, cfg.epsilon, cfg.alpha, kern, 10)
    pi = bf.probabilities
    resid = float(np.max(np.abs(pi @ P - pi)))
    rows = float(np.max(np.abs(P.sum(axis=1) - 1)))
    hist = run_grid_histogram(cfg, kern, steps)
    emp = hist / hist.sum()
    tv = oracle.total_variation(dict(zip(("n", "occupancy", "same_sign"), oracle.marginals_from_distribution(emp, 10))),
                                bf.marginals())
    worst = max(tv.values())
    dt = time.perf_counter() - t0
    return [
        Check("stationarity", "pi P = pi residual (10 slots)", resid, 1e-10, resid < 1e-10, {"row_sum_error": rows}),
        Check("stationarity", f"marginal TV after {steps} steps", worst, 0.01, worst < 0.01, tv),
        Check("stationarity", "runtime [s]", dt, 120.0, dt < 120.0),
    ]


def free_theory(sweeps: int = 4000, seed: int = 3) -> list[Check]:
    t0 = time.perf_counter()
    kern = build_kernels(DiscreteModes((1.0,), (1.0,)))
    cfg = McmcConfig(T=10.0, epsilon=1.0, alpha=0.0, burn_in=100, sweeps=sweeps, seed=seed)
    plan = MeasurementPlan(t_w=5.0, truncation=5.0, lag_max=2.0, record_quadrant=False, record_k=False)
    s = run_chain(cfg, kern, plan).samples
    out = []
    st = est.blocked(s.n.astype(float))
    target = 2 * cfg.T * cfg.epsilon
    out.append(_within("free", "<n> vs 2 T eps", st.mean, target, 3 * st.stderr, stderr=st.stderr))
    for t in (0.25, 0.5, 1.0, 1.5, 2.0):
        r = est.spin_correlation(s, t)
        out.append(_within("free", f"<Y_0 Y_t> vs exp(-2 eps t), t={t:g}", r.value, math.exp(-2 * t),
                           3 * r.stderr, stderr=r.stderr))
    dt = time.perf_counter() - t0
    out.append(Check("free", "runtime [s]", dt, 60.0, dt < 60.0))
    return out


# ---------------------------------------------------------------------------
# exact diagonalisation comparison at the Rabi point


RABI = {"epsilon": 1.0, "alpha": 0.3, "g": 1.0, "omega": 1.0, "T": 20.0, "t_w": 10.0, "n_max": 30}
GAP_WINDOW = (0.1, 1.0)


def rabi_run(sweeps: int = 5000, chains: int = 4, ladder_sweeps: int = 4000, seed: int = 11):
    """Chains, energy ladder and ED solution at the Rabi point."""
    bath = DiscreteModes((RABI["g"],), (RABI["omega"],))
    kern = build_kernels(bath, [TestFunction.from_power(bath, 1.0, "w1h")])
    cfg = McmcConfig(T=RABI["T"], epsilon=RABI["epsilon"], alpha=RABI["alpha"], burn_in=300, sweeps=sweeps,
                     seed=seed)
    plan = MeasurementPlan(t_w=RABI["t_w"], lag_max=6.0)
    samples, diags = run_chains(cfg, kern, plan, chains)
    e_cfg = McmcConfig(T=RABI["T"], epsilon=RABI["epsilon"], alpha=RABI["alpha"], burn_in=300,
                       sweeps=ladder_sweeps, seed=seed + 1)
    top = samples.action[samples.chain == samples.chain[0]]
    energy, table = est.energy(e_cfg, kern, n_nodes=5, top_actions=top)
    model = oracle.TruncatedModel(RABI["epsilon"], RABI["alpha"], (RABI["g"],), (RABI["omega"],), RABI["n_max"])
    sol = oracle.ground_state(model)
    return {"samples": samples, "kernels": kern, "energy": energy, "ladder": table, "ed": sol,
            "certificate": oracle.cutoff_certificate(model), "diagnostics": diags}


def ed_comparison(run: dict, target_rel: float = 0.01) -> list[Check]:
    s, k, sol = run["samples"], run["kernels"], run["ed"]
    ref = oracle.observables(sol)
    F = k.norm_f_sq["h"]
    exact_corr = sol.spin_correlation(s.lags)
    gap_ref = est.gap_fit(exact_corr, GAP_WINDOW, s.lags).value
    pairs = [
        ("energy", run["energy"], ref["energy"]),
        (f"gap (log-linear fit on {GAP_WINDOW})", est.gap_fit(s, GAP_WINDOW), gap_ref),
        ("<N>", est.n_moments(s, k, 1), ref["N^1"]),
        ("<N^2>", est.n_moments(s, k, 2), ref["N^2"]),
        ("<(-1)^N>", est.parity_pair(s, k)[0], ref["parity"]),
        ("<phi(h)^2>", est.field_moment(s, k, "h", 2), ref["field_sq"]),
        ("<exp(i 0.5 phi(h))>", est.char_fn(s, k, "h", 0.5), ref["char_fn[0.5]"]),
        ("<exp(i phi(h))>", est.char_fn(s, k, "h", 1.0), ref["char_fn[1]"]),
        ("<exp(beta phi(h)^2)>, beta = 0.5/|h|^2", est.gaussian_moment(s, k, "h", 0.5 / F),
         ref["gaussian_moment[0.5/F]"]),
    ]
    out = []
    for name, res, r in pairs:
        tol = 3 * (res.stderr + res.systematic)
        out.append(_within("ed", name, res.value, r, tol, stderr=res.stderr, systematic=res.systematic))
        rel = res.stderr / abs(r)
        out.append(Check("ed", f"{name} relative stat. error", rel, target_rel, rel <= target_rel))
    out[2].detail["lowest_sigma_level_gap"] = sol.gap
    return out


def identities(run: dict | None = None, continuum_sweeps: int = 3000, seed: int = 21) -> list[Check]:
    """Parity identities and a-priori bounds at a discrete and a continuum point."""
    out = []
    points = []
    if run is not None:
        points.append(("discrete", run["samples"], run["kernels"]))
    bath = PowerLawExpCutoff(1.0, 2.0, 1.0)
    kern = build_kernels(bath, [TestFunction.from_power(bath, 1.0, "w1h")])
    cfg = McmcConfig(T=10.0, epsilon=1.0, alpha=0.5, burn_in=200, sweeps=continuum_sweeps, seed=seed)
    s = run_chain(cfg, kern, MeasurementPlan(t_w=4.0, truncation=4.0, lag_max=4.0)).samples
    points.append(("continuum", s, kern))
    for label, s, k in points:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", est.IdentityCheckWarning)
            p1, p2 = est.parity_pair(s, k)
            rk = est.resolvent_kernel(s, k, [1.0], GAP_WINDOW, sigma_test="w1h")
        bound = math.exp(-_alpha(s) ** 2 * k.norm_h_over_omega_sq)
        tol = 3 * p2.stderr + p2.systematic
        out.append(Check("identities", f"{label}: <Y_0 exp(-2 a^2 W)> = -1", abs(p2.value + 1), tol,
                         abs(p2.value + 1) <= tol, {"estimate": p2.value, "stderr": p2.stderr}))
        out.append(Check("identities", f"{label}: <exp(-2 a^2 W)> >= exp(-a^2 |h/w|^2)", bound - p1.value, 0.0,
                         p1.value >= bound, {"estimate": p1.value, "bound": bound}))
        wmax = float(np.max(np.abs(s.quadrant)))
        half = 0.5 * k.norm_h_over_omega_sq
        out.append(Check("bounds", f"{label}: max |W| <= |h/w|^2 / 2", wmax, half, wmax <= half * (1 + 1e-9)))
        mid = rk["middle"]
        chain = mid.extra["checks"][0]
        out.append(Check("bounds", f"{label}: <N> <= middle <= alpha^2 |h/w|^2 / 2", chain["n"], mid.value,
                         chain["passed"], {"middle": mid.value, "upper": chain["upper"]}))
    return out


def _alpha(s):
    return float(s.meta["alpha"])


def monotonicity(run: dict) -> list[Check]:
    s, k = run["samples"], run["kernels"]
    F = k.norm_f_sq["h"]
    Fa, _ = est.fluctuations(s, k, "h")
    lam = est.fractional_moment(s, k, "h", 1.0)
    out = [
        Check("monotone", "F_alpha >= F_0", F / 2 - Fa.value, 0.0, Fa.value >= F / 2, {"F_alpha": Fa.value}),
        Check("monotone", "Lambda_alpha >= Lambda_0 (s = 1)", lam.extra["lambda_0"] - lam.value,
              3 * lam.stderr + lam.systematic, lam.checks_passed(), {"Lambda_alpha": lam.value}),
    ]
    ladder = [est.gaussian_moment(s, k, "h", c / F).value for c in (0.5, 0.8, 0.9, 0.95)]
    inc = bool(np.all(np.diff(ladder) > 0))
    out.append(Check("monotone", "gaussian moment increasing on {0.5,0.8,0.9,0.95}/|f|^2",
                     float(np.min(np.diff(ladder))), 0.0, inc, {"values": ladder}))
    return out


def consistency(run: dict) -> list[Check]:
    res = est.n_consistency(run["samples"], run["kernels"], GAP_WINDOW)
    out = []
    for p in res["pairs"]:
        a, b = p["routes"]
        out.append(Check("consistency", f"<N>: {a} vs {b}", abs(p["difference"]), p["tolerance"], p["agree"]))
    return out


def error_scaling(sweeps: int = 4000, seed: int = 31) -> list[Check]:
    """Doubling the record count shrinks the blocked error of <N> by sqrt(2)."""
    kern = build_kernels(DiscreteModes((1.0,), (1.0,)))
    errs, nbs = [], []
    for n in (sweeps, 2 * sweeps):
        cfg = McmcConfig(T=10.0, epsilon=1.0, alpha=0.5, burn_in=200, sweeps=n, seed=seed)
        s = run_chain(cfg, kern, MeasurementPlan(t_w=4.0, lag_max=2.0, record_k=False)).samples
        r = est.n_moments(s, kern, 1)
        errs.append(r.stderr)
        nbs.append(r.extra["n_blocks"])
    ratio = errs[0] / errs[1]
    band = 2 * ratio * math.sqrt(1 / (2 * (nbs[0] - 1)) + 1 / (2 * (nbs[1] - 1)))
    return [Check("reproducible", "stderr ratio for doubled samples vs sqrt(2)", abs(ratio - math.sqrt(2)), band,
                  abs(ratio - math.sqrt(2)) <= band, {"ratio": ratio, "blocks": nbs})]


def run_suites(level: str = "quick") -> list[Check]:
    if level not in ("quick", "full"):
        raise ValueError("level must be 'quick' or 'full'")
    full = level == "full"
    checks = kernel_exactness(100 if full else 20)
    checks += action_oracle(1000 if full else 100)
    checks += stationarity(10**6 if full else 2 * 10**5)
    checks += free_theory(4000 if full else 1000)
    if full:
        run = rabi_run()
        checks += ed_comparison(run)
        checks += identities(run)
        checks += monotonicity(run)
        checks += consistency(run)
        checks += error_scaling()
    else:
        run = rabi_run(sweeps=800, chains=1, ladder_sweeps=600)
        checks += [c for c in ed_comparison(run) if "relative" not in c.name]
        checks += identities(run, continuum_sweeps=600)
        checks += monotonicity(run)
    return checks
