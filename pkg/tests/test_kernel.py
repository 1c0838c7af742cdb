import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from sbmc.kernel import TestFunction as Probe
from sbmc.kernel import (DiscreteModes, InfraredDivergent, NonPositiveDensity, OrderOutOfRange, PowerLawExpCutoff,
                         Tabulated, build_kernels, levy_density, load_tabulated)


def quad_w(bath, t):
    return integrate.quad(lambda o: 0.5 * bath.density(o) * math.exp(-abs(t) * o), 0, np.inf, epsrel=1e-13)[0]


BATHS = [
    PowerLawExpCutoff(1.0, 2.0, 1.0),
    PowerLawExpCutoff(0.7, 1.5, 2.0),
    PowerLawExpCutoff(1.3, 3.25, 0.5),
    PowerLawExpCutoff(1.0, 3.0, 1.0),
]


@pytest.mark.parametrize("bath", BATHS, ids=lambda b: f"s={b.exponent}")
def test_power_law_kernel_matches_quadrature(bath):
    kern = build_kernels(bath).kernel
    for t in (0.0, 1e-5, 0.01, 0.4, 2.0, 9.0):
        assert kern.w(t) == pytest.approx(quad_w(bath, t), rel=1e-9)
        w1 = integrate.quad(lambda u: float(kern.w(u)), 0, t, epsrel=1e-13)[0]
        assert kern.w1(t) == pytest.approx(w1, rel=1e-9, abs=1e-15)
        u2 = integrate.quad(lambda u: (t - u) * float(kern.w(u)), 0, t, epsrel=1e-13)[0]
        assert kern.u2(t) == pytest.approx(u2, rel=1e-8, abs=1e-15)
        tail = integrate.quad(lambda u: u * float(kern.w(u)), t, np.inf, epsrel=1e-12)[0]
        assert kern.tail_moment(t) == pytest.approx(tail, rel=1e-8)


def test_reference_point_closed_forms():
    kern = build_kernels(PowerLawExpCutoff(1.0, 2.0, 1.0)).kernel
    t = np.linspace(0, 5, 11)
    np.testing.assert_allclose(kern.w(t), (1 + t) ** -3.0, rtol=1e-13)
    assert kern.u2(2.0) == pytest.approx(2 / 3, rel=1e-13)
    assert kern.norm_sq == pytest.approx(1.0)
    assert kern.tail_moment(0.0) == pytest.approx(0.5)
    assert kern.w1_inf == pytest.approx(0.5)


def test_kernel_parity():
    kern = build_kernels(PowerLawExpCutoff(1.0, 2.0, 1.0)).kernel
    t = np.array([0.3, 1.7, 4.0])
    np.testing.assert_allclose(kern.w(-t), kern.w(t))
    np.testing.assert_allclose(kern.w1(-t), -kern.w1(t))
    np.testing.assert_allclose(kern.u2(-t), kern.u2(t))


def test_discrete_modes_exact():
    bath = DiscreteModes((1.0, 0.5), (1.0, 3.0))
    kern = build_kernels(bath).kernel
    t = 0.8
    expected_w = 0.5 * (math.exp(-t) + 0.25 * math.exp(-3 * t))
    assert kern.w(t) == pytest.approx(expected_w, rel=1e-14)
    expected_u = 0.5 * ((math.exp(-t) - 1 + t) + 0.25 / 9 * (math.exp(-3 * t) - 1 + 3 * t))
    assert kern.u2(t) == pytest.approx(expected_u, rel=1e-14)
    assert build_kernels(DiscreteModes((1.0,), (1.0,))).kernel.u2(1.0) == pytest.approx(math.exp(-1) / 2)
    assert kern.norm_sq == pytest.approx(1 + 0.25 / 9)


def test_small_argument_series_is_continuous():
    kern = build_kernels(PowerLawExpCutoff(1.0, 2.0, 1.0)).kernel
    x = np.array([0.999e-3, 1.001e-3])
    ref = [integrate.quad(lambda u: (t - u) * float(kern.w(u)), 0, t, epsrel=1e-14)[0] for t in x]
    np.testing.assert_allclose(kern.u2(x), ref, rtol=1e-10)


def test_tabulated_matches_discrete_continuum():
    bath = PowerLawExpCutoff(1.0, 2.0, 1.0)
    omega = np.geomspace(1e-4, 60, 3000)
    tab = Tabulated(omega, bath.density(omega))
    kern = build_kernels(tab).kernel
    for t in (0.0, 0.5, 3.0):
        assert kern.w(t) == pytest.approx(float((1 + t) ** -3.0), rel=5e-4)
    assert kern.u2(2.0) == pytest.approx(2 / 3, rel=5e-4)
    assert build_kernels(tab).norm_h_over_omega_sq == pytest.approx(1.0, rel=1e-3)


def test_load_tabulated(tmp_path):
    p = tmp_path / "rho.csv"
    omega = np.linspace(0, 20, 50)
    rows = "\n".join(f"{float(o)!r},{float(r)!r}" for o, r in zip(omega, omega**2 * np.exp(-omega)))
    p.write_text("omega,rho\n" + rows + "\n")
    tab = load_tabulated(p)
    assert len(tab.omega) == 50
    p.write_text(rows + "\n")
    assert len(load_tabulated(p).omega) == 50


def test_errors():
    with pytest.raises(InfraredDivergent):
        build_kernels(PowerLawExpCutoff(1.0, 1.0, 1.0))
    with pytest.raises(InfraredDivergent):
        build_kernels(PowerLawExpCutoff(1.0, 0.5, 1.0))
    with pytest.raises(InfraredDivergent):
        DiscreteModes((1.0,), (0.0,))
    omega = np.linspace(0, 5, 20)
    with pytest.raises(NonPositiveDensity):
        Tabulated(omega, np.where(omega > 2, -1.0, 1.0) * omega)
    with pytest.raises(InfraredDivergent):
        Tabulated(omega, np.ones_like(omega))
    with pytest.raises(OrderOutOfRange):
        levy_density(2.0, 1.0)
    with pytest.raises(NonPositiveDensity):
        PowerLawExpCutoff(-1.0, 2.0, 1.0)


def test_test_function_cross_kernels():
    bath = PowerLawExpCutoff(1.0, 2.0, 1.0)
    ks = build_kernels(bath, [Probe.from_power(bath, 1.0, "w1h")])
    assert set(ks.cross) == {"h", "w1h"}
    # rho_hf = rho / omega for f = h / omega: total of C_hf over r > 0 is int rho / omega^2
    assert ks.c_cross_total("w1h") == pytest.approx(bath.moment(-2))
    assert ks.overlap_h_over_omega_f["w1h"] == pytest.approx(bath.moment(-2))
    assert ks.norm_f_sq["w1h"] == pytest.approx(bath.moment(-2))
    assert ks.c_cross("h", 0.0) == pytest.approx(bath.moment(0))


def test_modified_kernel_scales_constant_operator():
    bath = DiscreteModes((1.0,), (1.0,))
    ks = build_kernels(bath)
    beta = 0.7
    mod = ks.modified(2.0, beta)
    assert mod.w(0.3) == pytest.approx((1 - math.exp(-1.4)) * ks.kernel.w(0.3))
    mod2 = ks.modified(lambda w: 2.0 * np.ones_like(w), beta)
    assert mod2.u2(1.2) == pytest.approx(mod.u2(1.2), rel=1e-12)


def test_levy_density_reproduces_absolute_power():
    s, x = 1.0, 1.7
    val = integrate.quad(lambda y: (1 - math.exp(-y * x * x)) * float(levy_density(s, y)), 0, np.inf, limit=200)[0]
    assert val == pytest.approx(x**s, rel=1e-8)


@settings(max_examples=60, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(-5, 5), st.floats(0.01, 3))
def test_rect_is_additive(a, c, d, split):
    kern = build_kernels(PowerLawExpCutoff(1.0, 2.0, 1.0)).kernel
    b = a + split
    m = a + split / 3
    whole = kern.rect(a, b, c, d)
    assert whole == pytest.approx(kern.rect(a, m, c, d) + kern.rect(m, b, c, d), abs=1e-12)
    # swapping the roles of the two intervals leaves the integral of the even w unchanged
    assert whole == pytest.approx(kern.rect(c, d, a, b), abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.floats(1e-3, 20))
def test_u2_derivative_is_w1(t):
    kern = build_kernels(PowerLawExpCutoff(1.0, 2.5, 1.0)).kernel
    h = 1e-3 * max(t, 1e-2)
    d1 = (kern.u2(t + h) - kern.u2(t - h)) / (2 * h)
    assert d1 == pytest.approx(kern.w1(t), rel=1e-5, abs=1e-10)
