import math

import numpy as np
import pytest
from scipy import integrate

from sbmc import oracle
from sbmc.kernel import DiscreteModes, PowerLawExpCutoff, build_kernels
from sbmc.oracle import TooManySlots, TruncatedModel, ground_state

ONE = DiscreteModes((1.0,), (1.0,))


def solve(eps=1.0, alpha=0.3, bath=ONE, n_max=30):
    return ground_state(TruncatedModel.from_bath(bath, eps, alpha, n_max))


def test_decoupled_spin():
    sol = solve(alpha=0.0, n_max=6)
    assert sol.energy == pytest.approx(-1.0, abs=1e-12)
    assert sol.n_moment(1) == pytest.approx(0.0, abs=1e-14)
    assert sol.parity() == pytest.approx(1.0)
    assert sol.gap == pytest.approx(2.0)
    assert sol.field_moment([1.0], 2) == pytest.approx(0.5)
    t = np.array([0.0, 0.4, 1.3])
    np.testing.assert_allclose(sol.spin_correlation(t), oracle.free_spin_correlation(1.0, t), atol=1e-12)
    assert sol.resolvent(0.5) == pytest.approx(1 / (0.5 + 2.0))


def test_reference_point_values():
    sol = solve()
    assert sol.energy == pytest.approx(-1.0151521, abs=5e-7)
    obs = oracle.observables(sol)
    assert obs["N^1"] == pytest.approx(0.0053085, abs=5e-7)
    assert obs["parity"] == pytest.approx(0.989848, abs=5e-6)
    assert obs["field_sq"] == pytest.approx(0.520615, abs=5e-6)
    assert obs["n_bound"] == pytest.approx(0.045)
    assert obs["N^1"] <= obs["n_bound"]
    assert sol.original_frame_parity() == pytest.approx(-1.0, abs=1e-10)


def test_perturbative_energy_at_weak_coupling():
    bath = DiscreteModes((1.0, 0.7), (1.0, 2.0))
    for alpha in (0.05, 0.1):
        sol = solve(alpha=alpha, bath=bath, n_max=8)
        pert = oracle.perturbative_energy(1.0, alpha, bath)
        assert abs(sol.energy - pert) < 5 * alpha**4
    cont = oracle.perturbative_energy(1.0, 0.3, PowerLawExpCutoff(1.0, 2.0, 1.0))
    ref = -1 - 0.045 * integrate.quad(lambda w: w * w * math.exp(-w) / (2 + w), 0, np.inf)[0]
    assert cont == pytest.approx(ref, rel=1e-10)


def test_van_hove_limit():
    alpha = 0.4
    ks = build_kernels(ONE)
    sol = solve(eps=1e-6, alpha=alpha, n_max=25)
    ref = oracle.van_hove_closed_forms(ks, "h", 0.8, alpha)
    assert sol.energy == pytest.approx(ref["energy"], abs=1e-5)
    assert sol.n_moment(1) == pytest.approx(ref["n_mean"], abs=1e-6)
    assert sol.char_fn([1.0], 0.8).real == pytest.approx(ref["char_fn"], abs=1e-5)
    assert sol.parity() == pytest.approx(ref["parity"], abs=1e-5)


def test_cutoff_certificate():
    cert = oracle.cutoff_certificate(TruncatedModel.from_bath(ONE, 1.0, 0.3, 20))
    assert cert["ok"]
    assert cert["delta"] < 1e-8


def test_field_density_normalised_and_consistent():
    sol = solve()
    x = np.linspace(-12, 12, 6001)
    rho = sol.field_density([1.0], x)
    assert integrate.simpson(rho, x=x) == pytest.approx(1.0, abs=1e-10)
    assert integrate.simpson(x * x * rho, x=x) == pytest.approx(sol.field_moment([1.0], 2), abs=1e-9)
    assert sol.abs_moment([1.0], 1.0) == pytest.approx(0.575741, abs=5e-6)
    free = solve(alpha=0.0, n_max=6)
    assert free.abs_moment([1.0], 1.0) == pytest.approx(1 / math.sqrt(math.pi), abs=1e-9)
    with pytest.raises(ValueError):
        solve(bath=DiscreteModes((1.0, 1.0), (1.0, 2.0)), n_max=4).field_density([1.0, 1.0], x)


def test_resolvent_is_laplace_transform_of_correlation():
    sol = solve()
    for omega in (0.3, 1.0):
        ref = integrate.quad(lambda t: math.exp(-omega * t) * float(sol.spin_correlation(t)), 0, np.inf,
                             epsrel=1e-11)[0]
        assert sol.resolvent(omega) == pytest.approx(ref, rel=1e-8)


def test_brute_force_single_slot_free():
    ks = build_kernels(ONE)
    T, eps = 1.5, 0.7
    res = oracle.brute_force_path_sum(T, eps, 0.0, ks, 1)
    q = eps * 2 * T
    np.testing.assert_allclose(res.n_marginal, [1 / (1 + q), q / (1 + q)], rtol=1e-12)
    assert res.log_normalization == pytest.approx(math.log(2 * (1 + q)))


def test_brute_force_is_a_distribution_and_flip_symmetric():
    ks = build_kernels(ONE)
    res = oracle.brute_force_path_sum(2.0, 1.0, 0.6, ks, 5)
    assert res.probabilities.sum() == pytest.approx(1.0)
    # bit 0 labels the initial sign; flipping it leaves the weight unchanged
    p = res.probabilities
    np.testing.assert_allclose(p[0::2], p[1::2], rtol=1e-12)
    # reversing the slot order is time reversal of the path
    m = 5
    codes = np.arange(p.size)
    occ = [(codes >> (k + 1)) & 1 for k in range(m)]
    rev = sum(occ[m - 1 - k] << (k + 1) for k in range(m))
    parity = np.sum(occ, axis=0) & 1
    rev |= (codes & 1) ^ parity
    np.testing.assert_allclose(p[rev], p, rtol=1e-10)


def test_too_many_slots():
    with pytest.raises(TooManySlots):
        oracle.brute_force_path_sum(1.0, 1.0, 0.3, build_kernels(ONE), 13)


def test_free_action_mean_matches_direct_integral():
    ks = build_kernels(PowerLawExpCutoff(1.0, 2.0, 1.0))
    T, eps = 3.0, 1.0
    ref = integrate.dblquad(lambda s, t: math.exp(-2 * eps * abs(t - s)) * float(ks.w_amp(t - s)),
                            -T, T, -T, T, epsabs=1e-10)[0]
    assert oracle.free_action_mean(ks, T, eps) == pytest.approx(ref, rel=1e-7)
