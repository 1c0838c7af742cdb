import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sbmc.stats import autocorr, block_means, blocked, chain_tau, jackknife, tau_int


def ar1(phi, n, rng):
    e = rng.standard_normal(n)
    x = np.empty(n)
    x[0] = e[0] / math.sqrt(1 - phi * phi)
    for i in range(1, n):
        x[i] = phi * x[i - 1] + e[i]
    return x


@pytest.mark.parametrize("phi", [0.0, 0.5, 0.8])
def test_tau_of_ar1(phi):
    rng = np.random.default_rng(4)
    x = ar1(phi, 200_000, rng)
    exact = (1 + phi) / (2 * (1 - phi))
    assert tau_int(x) == pytest.approx(exact, rel=0.06)


def test_autocorr_normalised():
    rho = autocorr(np.random.default_rng(0).standard_normal(1000))
    assert rho[0] == 1.0
    assert abs(rho[1:50]).max() < 0.15
    assert autocorr(np.ones(5))[0] == 1.0


def test_blocked_error_of_iid_and_ar1():
    rng = np.random.default_rng(1)
    x = rng.standard_normal(100_000)
    bs = blocked(x)
    assert bs.stderr == pytest.approx(1 / math.sqrt(x.size), rel=0.1)
    y = ar1(0.8, 100_000, rng)
    by = blocked(y)
    exact = math.sqrt(2 * 4.5 * (1 / (1 - 0.64)) / y.size)
    assert by.stderr == pytest.approx(exact, rel=0.2)


def test_blocks_never_straddle_chains():
    x = np.concatenate([np.zeros(10), np.ones(10)])
    ids = np.repeat([0, 1], 10)
    bm = block_means(x, 3, ids)
    assert set(bm.tolist()) == {0.0, 1.0}
    assert bm.size == 6


def test_jackknife_of_ratio():
    rng = np.random.default_rng(2)
    a = 2 + 0.1 * rng.standard_normal(20_000)
    b = 1 + 0.1 * rng.standard_normal(20_000)
    val, err, tau, block = jackknife(lambda m: m[0] / m[1], [a, b])
    assert val == pytest.approx(2.0, abs=5 * err)
    # delta method: var(a/b) ~ (0.1^2 + 4 * 0.1^2) / n
    assert err == pytest.approx(math.sqrt(5 * 0.01 / a.size), rel=0.3)


def test_jackknife_matches_blocked_for_linear_function():
    rng = np.random.default_rng(3)
    x = rng.standard_normal(5000)
    bs = blocked(x, block_size=50)
    _, err, _, _ = jackknife(lambda m: m[0], [x], block_size=50)
    assert err == pytest.approx(bs.stderr, rel=1e-10)


def test_chain_tau_takes_the_worst_chain():
    rng = np.random.default_rng(5)
    x = np.concatenate([rng.standard_normal(20_000), ar1(0.9, 20_000, rng)])
    ids = np.repeat([0, 1], 20_000)
    assert chain_tau(x, ids) > 5


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=300))
def test_tau_at_least_half(values):
    assert tau_int(np.array(values)) >= 0.5
