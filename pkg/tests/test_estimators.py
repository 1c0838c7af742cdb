import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.polynomial.hermite_e import hermegauss
from scipy import integrate

from sbmc import estimators as est
from sbmc.kernel import DiscreteModes, PowerLawExpCutoff, build_kernels
from sbmc.sampler import McmcConfig, Samples

ONE = build_kernels(DiscreteModes((1.0,), (1.0,)))
NODES, WEIGHTS = hermegauss(80)
WEIGHTS = WEIGHTS / WEIGHTS.sum()


def gauss_mean(func, K, c):
    """E[func(K + c Z)] by Gauss-Hermite."""
    return float(WEIGHTS @ func(K + c * NODES))


def synthetic(K=None, W=None, y=None, corr=None, lags=None, alpha=0.3, n=400, seed=0, truncation=4.0):
    rng = np.random.default_rng(seed)
    if K is None:
        size = max([np.size(a) for a in (W, y) if a is not None] or [n])
        K = 0.2 * rng.standard_normal(size)
    K = np.asarray(K, dtype=float).reshape(-1, 1)
    n = K.shape[0]
    W = np.zeros((n, 1)) if W is None else np.asarray(W, dtype=float).reshape(-1, 1)
    y = np.ones((n, 1)) if y is None else np.asarray(y).reshape(-1, 1)
    if lags is None:
        lags = np.linspace(0, 4, 401)
        corr = np.tile(np.exp(-2 * lags), (n, 1)) if corr is None else corr
    return Samples(action=np.zeros(n), n=np.zeros(n, dtype=int), y=y, quadrant=W, k={"h": K},
                   corr=np.asarray(corr, dtype=float), chain=np.zeros(n, dtype=int), centers=np.zeros(1),
                   lags=lags, meta={"alpha": alpha, "truncation": truncation, "T": 10.0, "t_w": 5.0})


def test_stirling_numbers():
    assert [est.stirling2(3, r) for r in range(1, 4)] == [1, 3, 1]
    assert [est.stirling2(4, r) for r in range(1, 5)] == [1, 7, 6, 1]
    bell = [1, 1, 2, 5, 15, 52, 203, 877]
    assert [sum(est.stirling2(m, r) for r in range(m + 1)) for m in range(8)] == bell
    assert est.stirling2(20, 10) == 5917584964655
    with pytest.raises(ValueError):
        est.stirling2(21, 3)


@given(st.integers(1, 19), st.integers(1, 19))
def test_stirling_recurrence(m, r):
    assert est.stirling2(m + 1, r) == r * est.stirling2(m, r) + est.stirling2(m, r - 1)


@settings(max_examples=50)
@given(st.floats(-3, 3), st.floats(0.05, 2.0), st.integers(0, 8))
def test_conditional_power_is_gaussian_expectation(K, c, n):
    ref = gauss_mean(lambda x: x**n, K, c)
    assert float(est.conditional_power(K, c, n)) == pytest.approx(ref, rel=1e-9, abs=1e-12)


@settings(max_examples=30)
@given(st.floats(-2, 2), st.floats(0.1, 1.5), st.integers(0, 7))
def test_conditional_power_matches_complex_hermite(K, c, n):
    # E[(K + cZ)^n] = (ic)^n He_n(-iK/c)
    herm = np.polynomial.hermite_e.hermeval(-1j * K / c, [0] * n + [1])
    assert float(est.conditional_power(K, c, n)) == pytest.approx(((1j * c) ** n * herm).real, rel=1e-9, abs=1e-10)


def test_gaussian_smooth_matches_quadrature():
    F = lambda x: np.exp(-x * x) * np.cos(2 * x)
    c = 0.7
    G = est.gaussian_smooth(F, c, 3.0)
    for K in (-2.0, 0.0, 0.4, 2.5):
        assert float(G(K)) == pytest.approx(gauss_mean(F, K, c), abs=1e-6)


def test_trivial_path_values():
    s = synthetic(K=np.zeros(50))
    F = ONE.norm_f_sq["h"]
    assert est.char_fn(s, ONE, "h", 0.8).value == pytest.approx(math.exp(-0.16 * F))
    assert est.field_moment(s, ONE, "h", 2).value == pytest.approx(F / 2)
    assert est.field_moment(s, ONE, "h", 4).value == pytest.approx(3 * (F / 2) ** 2)
    assert est.gaussian_moment(s, ONE, "h", 0.5).value == pytest.approx((1 - 0.5 * F) ** -0.5)
    first, second = est.exp_moment(s, ONE, "h", 0.6)
    assert first.value == pytest.approx(math.exp(0.09 * F))
    assert est.boson_generating(s, ONE, 0.7).value == 1.0
    assert est.n_moments(s, ONE, 2).value == 0.0


def test_field_function_identity():
    s = synthetic()
    assert est.field_function(s, ONE, "h", lambda x: np.ones_like(x)).value == pytest.approx(1.0, abs=1e-10)


def test_flip_symmetrisation_is_per_sample():
    s = synthetic(seed=3)
    for n in (1, 3):
        assert abs(est.field_moment(s, ONE, "h", n).value) < 1e-15
    odd = est.field_function(s, ONE, "h", lambda x: np.tanh(x))
    assert abs(odd.value) < 1e-12


def test_sigma_moment_uses_the_spin():
    K = np.array([0.3, -0.3, 0.1, -0.1])
    y = np.sign(K)
    s = synthetic(K=K, y=y)
    assert est.field_moment(s, ONE, "h", 1, xi="sigma").value == pytest.approx(0.2)


def test_char_fn_curvature_is_second_moment():
    s = synthetic(seed=5)
    h = 1e-3
    c0 = est.char_fn(s, ONE, "h", 0.0).value
    ch = est.char_fn(s, ONE, "h", h).value
    curv = 2 * (ch - c0) / h**2
    assert -curv == pytest.approx(est.field_moment(s, ONE, "h", 2).value, rel=1e-5)


def test_char_fn_against_gaussian_quadrature():
    s = synthetic(seed=7)
    c = math.sqrt(ONE.norm_f_sq["h"] / 2)
    ref = np.mean([gauss_mean(lambda x: np.cos(0.9 * x), k, c) for k in s.k["h"][:, 0]])
    assert est.char_fn(s, ONE, "h", 0.9).value == pytest.approx(ref, rel=1e-10)


def test_gaussian_moment_domain():
    s = synthetic()
    with pytest.raises(est.DomainError):
        est.gaussian_moment(s, ONE, "h", 1.0)


@pytest.mark.parametrize("s_", [0.3, 1.0, 1.7])
def test_fractional_moment_free_and_shifted(s_):
    F = ONE.norm_f_sq["h"]
    c = math.sqrt(F / 2)
    free = est.fractional_moment(synthetic(K=np.zeros(20)), ONE, "h", s_)
    exact = c**s_ * 2 ** (s_ / 2) * math.gamma((s_ + 1) / 2) / math.sqrt(math.pi)
    assert free.value == pytest.approx(exact, rel=1e-5)
    K = 0.8
    shifted = est.fractional_moment(synthetic(K=np.full(20, K)), ONE, "h", s_)
    ref = integrate.quad(lambda z: abs(K + c * z) ** s_ * math.exp(-z * z / 2) / math.sqrt(2 * math.pi),
                         -np.inf, np.inf, points=None)[0]
    assert shifted.value == pytest.approx(ref, rel=1e-5)
    assert shifted.value >= free.value


def test_fractional_moment_small_order_tends_to_one():
    assert est.fractional_moment(synthetic(), ONE, "h", 1e-3).value == pytest.approx(1.0, abs=5e-3)


def test_boson_generating_and_parity():
    W = np.full(30, 0.2)
    s = synthetic(W=W)
    a2 = 0.09
    assert est.boson_generating(s, ONE, 0.5).value == pytest.approx(math.exp(-a2 * (1 - math.exp(-0.5)) * 0.2))
    assert est.boson_generating(s, ONE, -0.5).paper_ref == est.FORMULA_IDS["boson_growth"]
    cplx = est.boson_generating(s, ONE, 1j * math.pi / 3)
    coef = a2 * (1 - np.exp(-1j * math.pi / 3))
    assert cplx.value == pytest.approx(np.exp(-coef * 0.2).real)
    assert cplx.extra["imag"] == pytest.approx(np.exp(-coef * 0.2).imag)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", est.IdentityCheckWarning)
        par, spar = est.parity_pair(s, ONE)
    assert par.value == pytest.approx(math.exp(-2 * a2 * 0.2))
    assert est.boson_generating(s, ONE, math.pi * 1j).value == pytest.approx(par.value)


def test_second_parity_identity_fails_on_flip_symmetric_samples():
    rng = np.random.default_rng(1)
    y = rng.choice([-1, 1], 200)
    s = synthetic(W=np.full(200, 0.1), y=y)
    with pytest.warns(est.IdentityCheckWarning):
        _, spar = est.parity_pair(s, ONE)
    assert not spar.checks_passed()


def test_n_routes_on_synthetic_w():
    rng = np.random.default_rng(2)
    s = synthetic(W=0.1 + 0.02 * rng.standard_normal(500))
    n1 = est.n_moments(s, ONE, 1)
    assert n1.value == pytest.approx(0.09 * s.quadrant.mean())
    assert est.n_from_generating(s, ONE).value == pytest.approx(n1.value, rel=1e-5)
    n2 = est.n_moments(s, ONE, 2)
    W = s.quadrant[:, 0]
    assert n2.value == pytest.approx(np.mean(0.09 * W + 0.09**2 * W**2))


def test_gap_fit_exact_and_errors():
    t = np.linspace(0, 3, 31)
    g = est.gap_fit(2 * np.exp(-1.7 * t), window=(0.5, 2.5), lags=t)
    assert g.value == pytest.approx(1.7, rel=1e-12)
    with pytest.raises(est.FitWindowBad):
        est.gap_fit(np.exp(1.7 * t), window=(0.5, 2.5), lags=t)
    with pytest.raises(est.FitWindowBad):
        est.gap_fit(np.cos(2 * t), window=(0.5, 2.5), lags=t)
    with pytest.raises(est.FitWindowBad):
        est.gap_fit(synthetic(), window=(1.0, 1.005))


def test_resolvent_of_free_correlation():
    eps, alpha = 1.0, 0.3
    s = synthetic(alpha=alpha)
    out = est.resolvent_kernel(s, ONE, [0.5, 1.0, 3.0], window=(0.5, 3.0))
    R = out["table"].extra["R"]
    np.testing.assert_allclose(R, 1 / (np.array([0.5, 1.0, 3.0]) + 2 * eps), rtol=1e-7)
    np.testing.assert_allclose(out["table"].extra["G_over_h"], -alpha * R)
    # single mode: <N> at leading order = alpha^2 g^2 / (omega + 2 eps)^2 / 2 ... via u w(u) e^{-2 eps u}
    ref = alpha**2 * integrate.quad(lambda u: u * 0.5 * math.exp(-u) * math.exp(-2 * u), 0, np.inf)[0]
    assert out["n"].value == pytest.approx(ref, rel=1e-4)


def test_simpson_and_ladder_checks():
    x = np.linspace(0, 1, 5)
    assert est.simpson_weights(x) @ x**3 == pytest.approx(0.25)
    with pytest.raises(est.LadderTooCoarse):
        est.simpson_weights(np.linspace(0, 1, 4))
    cfg = McmcConfig(T=4.0, epsilon=1.0, alpha=0.3, burn_in=10, sweeps=20)
    with pytest.raises(est.LadderTooCoarse):
        est.energy(cfg, ONE, n_nodes=3)
    free, _ = est.energy(McmcConfig(T=4.0, epsilon=1.0, alpha=0.0), ONE)
    assert free.value == -1.0


def test_truncation_bounds_shrink():
    ks = build_kernels(PowerLawExpCutoff(1.0, 2.0, 1.0))
    a = [est.w_truncation_bound(ks, t) for t in (1.0, 4.0, 16.0)]
    assert a[0] > a[1] > a[2] > 0
    b = [est.k_truncation_bound(ks, "h", 0.5, t) for t in (1.0, 4.0, 16.0)]
    assert b[0] > b[1] > b[2] > 0


def test_result_record_is_json_ready():
    import json

    res = est.n_moments(synthetic(W=np.full(40, 0.1)), ONE, 1)
    rec = res.record()
    json.dumps(est.jsonable(rec))
    assert rec["value"] == pytest.approx(0.009)
    assert res.total_error >= res.stderr
