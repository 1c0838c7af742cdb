"""Acceptance criteria, each at its stated tolerance and runtime limit.

Every test records its checks through the ``criterion`` fixture; the terminal
summary prints one PASS/FAIL line per criterion.
"""
import json
import math
import time
import warnings

import numpy as np
import pytest

from sbmc import estimators as est
from sbmc import oracle, validation as val
from sbmc.cli import main
from sbmc.path import QuadrantBoundViolated

pytestmark = pytest.mark.slow

# ED reference values at the Rabi point (n_max = 30), computed once by the
# oracle and frozen here; the gap entry is the log-linear fit of the exact
# correlation on the fit window.
ED_FROZEN = {
    "energy": -1.0151521261135081,
    "N^1": 0.005308531299766359,
    "N^2": 0.005543571408439014,
    "parity": 0.9898478481859043,
    "field_sq": 0.5206149359134524,
    "char_fn[0.5]": 0.9369944033224101,
    "char_fn[1]": 0.7708009130662004,
    "gaussian_moment[0.5/F]": 1.4439804642538945,
    "gap_fit": 1.9196249016579185,
}


def timed(fn, *args, **kw):
    t0 = time.perf_counter()
    out = fn(*args, **kw)
    return out, time.perf_counter() - t0


@pytest.fixture(scope="module")
def rabi():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", est.IdentityCheckWarning)
        run, dt = timed(val.rabi_run)
    run["seconds"] = dt
    return run


def test_criterion_01_kernel_exactness(criterion):
    rec = criterion(1, "kernel exactness")
    for c in val.kernel_exactness(100):
        rec.add(c)
    assert rec.verdict()


def test_criterion_02_action_oracle(criterion):
    rec = criterion(2, "action oracle")
    for c in val.action_oracle(1000):
        rec.add(c)
    assert rec.verdict()


def test_criterion_03_sampler_stationarity(criterion):
    rec = criterion(3, "sampler stationarity (10 slots, 1e6 steps)")
    for c in val.stationarity(10**6):
        rec.add(c)
    assert rec.verdict()


def test_criterion_04_free_theory(criterion):
    rec = criterion(4, "free-theory laws at alpha = 0")
    for c in val.free_theory(4000):
        rec.add(c)
    assert rec.verdict()


def test_criterion_05_ed_cross_validation(criterion, rabi):
    rec = criterion(5, "ED cross-validation at the Rabi point")
    ref = oracle.observables(rabi["ed"])
    lags = rabi["samples"].lags
    frozen_now = dict(ref, gap_fit=est.gap_fit(rabi["ed"].spin_correlation(lags), val.GAP_WINDOW, lags).value)
    drift = max(abs(frozen_now[k] - v) for k, v in ED_FROZEN.items())
    rec.add(val.Check("ed", "oracle reproduces frozen reference table", drift, 1e-9, drift <= 1e-9))
    cert = rabi["certificate"]
    rec.add(val.Check("ed", "photon cutoff certificate n_max -> n_max + 10", cert["delta"], 1e-8, cert["ok"]))
    for c in val.ed_comparison(rabi):
        rec.add(c)
    rec.add(val.Check("ed", "runtime [s]", rabi["seconds"], 900.0, rabi["seconds"] <= 900.0))
    assert rec.verdict()


@pytest.fixture(scope="module")
def identity_checks(rabi):
    return timed(val.identities, rabi)


def test_criterion_06_parity_lower_bound(criterion, identity_checks):
    rec = criterion(6, "parity identities, part <exp(-2 a^2 W)> >= exp(-a^2 |h/w|^2)")
    checks, dt = identity_checks
    for c in checks:
        if c.suite == "identities" and ">=" in c.name:
            rec.add(c)
    rec.add(val.Check("identities", "runtime [s]", dt, 600.0, dt <= 600.0))
    assert rec.verdict()


def test_criterion_06_sigma_parity_identity(criterion, identity_checks):
    rec = criterion(6, "parity identities, part <Y_0 exp(-2 a^2 W)> = -1")
    checks, _ = identity_checks
    for c in checks:
        if c.suite == "identities" and "= -1" in c.name:
            rec.add(c)
    assert rec.verdict()


def test_criterion_07_bounds(criterion, rabi, identity_checks):
    rec = criterion(7, "quadrant bound and boson-number chain")
    checks, _ = identity_checks
    for c in checks:
        if c.suite == "bounds":
            rec.add(c)
    # the quadrant bound is a hard assertion inside every measurement: a
    # tightened bound must raise
    from sbmc.path import SpinPath, quadrant

    try:
        quadrant(SpinPath(20.0, 1), rabi["kernels"], 10.0, bound=1e-3)
        raised = False
    except QuadrantBoundViolated:
        raised = True
    rec.add(val.Check("bounds", "quadrant bound is enforced as an assertion", float(raised), 1.0, raised))
    assert rec.verdict()


def test_criterion_08_monotonicity(criterion, rabi):
    rec = criterion(8, "monotonicity of F, Lambda and the gaussian-moment ladder")
    out, dt = timed(val.monotonicity, rabi)
    for c in out:
        rec.add(c)
    rec.add(val.Check("monotone", "runtime [s]", dt, 600.0, dt <= 600.0))
    assert rec.verdict()


def test_criterion_09_n_consistency(criterion, rabi):
    rec = criterion(9, "three routes to <N>")
    for c in val.consistency(rabi):
        rec.add(c)
    assert rec.verdict()


def test_criterion_10_reproducibility(criterion, tmp_path):
    rec = criterion(10, "reproducibility and error scaling")
    from pathlib import Path

    cfg = Path(__file__).resolve().parents[1] / "configs" / "quick.toml"
    blobs = []
    for i in range(2):
        out = tmp_path / f"r{i}"
        main(["estimate", str(cfg), "--out", str(out)])
        data = json.loads((out / "results.json").read_text())
        data.pop("created")
        blobs.append(json.dumps(data, sort_keys=True).encode())
    same = blobs[0] == blobs[1]
    rec.add(val.Check("reproducible", "identical seed and config give identical payloads", float(not same), 0.0,
                      same))
    for c in val.error_scaling():
        rec.add(c)
    assert rec.verdict()
