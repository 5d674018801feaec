import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from svrobs.bounds import (
    BoundParams, Interval, compute_bounds, epsilon_norm_bounds, error_intervals, h_bound,
    parameter_interval_a, radii, theta_a, theta_b,
)
from svrobs.estimator import Estimate, Mode
from svrobs.exceptions import DimensionMismatch

BASE = BoundParams(n=3, m=1, big_m=1.1, delta=0.01, gamma=0.05, n_rollouts=100, t0=11)


def with_(p, **kw):
    d = dict(p.__dict__)
    d.update(kw)
    return BoundParams(**d)


def svr_est(a, b, gamma):
    return Estimate(np.asarray(a, float), np.asarray(b, float), gamma, Mode.SVR)


def test_theta_a_reference():
    # independent recomputation of the printed formula
    n, m, big_m, su2, sw2, N, t0 = 3, 1, 1.1, 1.0, 1.0, 100, 11
    ref = 4 * n * (m * big_m * su2 + sw2) / (N * (n * big_m ** (2 * t0 - 1) * su2 + big_m ** (2 * t0 - 2) * sw2))
    assert theta_a(BASE) == pytest.approx(ref, rel=1e-12)
    assert theta_a(BASE) == pytest.approx(0.008711, abs=5e-7)


def test_theta_a_properties():
    for c in (0.1, 3.0, 17.0):
        scaled = with_(BASE, sigma_u=c, sigma_w=c)
        assert theta_a(scaled) == pytest.approx(theta_a(BASE), rel=1e-12)
    assert theta_a(with_(BASE, n_rollouts=200)) == pytest.approx(theta_a(BASE) / 2, rel=1e-12)


def test_theta_b_reference():
    assert theta_b(BASE) == pytest.approx(4 * (3 * 1.1 ** 21 + 1.1 ** 20 + 1) / 100, rel=1e-12)
    assert theta_b(BASE) == pytest.approx(1.19712, abs=2e-5)
    p0 = with_(BASE, sigma_w=0.0)
    assert theta_b(p0) == pytest.approx(4 * 1 * 3 * 1.1 ** 21 / 100, rel=1e-12)
    assert theta_b(with_(BASE, n_rollouts=10 ** 9)) < 1e-6


def test_large_horizon_is_finite():
    p = with_(BASE, t0=100_000)
    assert math.isfinite(theta_a(p)) and theta_a(p) >= 0
    assert theta_b(p) == math.inf or theta_b(p) > 0


def test_h_bound_examples():
    assert h_bound(theta_a(BASE), 3, BASE) == pytest.approx(0.05431, abs=1e-5)
    assert h_bound(0.0, 3, with_(BASE, gamma=0.0)) == 0.0
    p = with_(BASE, delta=1 - 1e-15)
    th = theta_a(p)
    assert h_bound(th, 3, p) == pytest.approx(math.sqrt((th + 3 * 0.05 * 1.21) / (1.05 * p.n0)), rel=1e-6)
    with pytest.raises(ValueError):
        h_bound(-1.0, 3, BASE)


def test_params_validation():
    for bad in (dict(delta=0.0), dict(delta=1.0), dict(big_m=0.0), dict(n_rollouts=0), dict(t0=1)):
        with pytest.raises(ValueError):
            with_(BASE, **bad)


def test_interval():
    iv = Interval(0.5, 0.1)
    assert iv.contains(0.6) and not iv.contains(0.61)
    assert (iv.lo, iv.hi) == pytest.approx((0.4, 0.6))
    with pytest.raises(ValueError):
        Interval(0.0, -1.0)


def test_error_intervals_examples():
    a = np.full((3, 3), 0.9)
    est = svr_est(a, np.ones((3, 1)), 0.05)
    da, db = error_intervals(est, BASE)
    assert da[0][0].center == pytest.approx(0.045)
    assert da[0][0].radius == pytest.approx(0.23879, abs=1e-5)
    p0 = with_(BASE, gamma=0.0)
    da0, _ = error_intervals(Estimate(a, np.ones((3, 1)), 0.0, Mode.OLS), p0)
    assert da0[1][2].center == 0.0
    assert da0[1][2].radius == pytest.approx(math.sqrt(h_bound(theta_a(p0), 3, p0)))
    assert len(db) == 3 and len(db[0]) == 1


def test_parameter_interval_a():
    a = np.full((3, 3), 0.9 / 1.05)
    ai = parameter_interval_a(svr_est(a, np.ones((3, 1)), 0.05), BASE)
    assert ai[2][1].center == pytest.approx(0.9)
    p0 = with_(BASE, gamma=0.0)
    ai0 = parameter_interval_a(Estimate(a, np.ones((3, 1)), 0.0, Mode.OLS), p0)
    assert ai0[0][0].center == pytest.approx(a[0, 0])


def test_epsilon_examples():
    p0 = with_(BASE, gamma=0.0)
    # H_A is 0 only with infinite data; check the Frobenius sum structure directly instead
    est = svr_est(np.zeros((3, 3)), np.zeros((3, 1)), 0.05)
    ra, rb = radii(BASE)
    ea, eb = epsilon_norm_bounds(est, BASE)
    assert ea == pytest.approx(3 * ra) and eb == pytest.approx(math.sqrt(3) * rb)
    est = svr_est(np.full((3, 3), 0.4), np.full((3, 1), 2.0), 0.05)
    ea, eb = epsilon_norm_bounds(est, BASE)
    assert ea >= abs(0.05 * 0.4) + ra
    assert eb == pytest.approx(math.sqrt(3) * (0.1 + rb))
    assert p0.n0 == 1000


def test_dimension_check():
    with pytest.raises(DimensionMismatch):
        error_intervals(svr_est(np.eye(2), np.ones((2, 1)), 0.05), BASE)


@given(st.integers(1, 5000), st.floats(0.0, 2.0), st.floats(0.001, 0.5), st.integers(2, 30),
       st.floats(0.1, 5), st.floats(0.0, 5))
def test_nonnegative_and_monotone_in_n(n_roll, gamma, delta, t0, su, sw):
    p = BoundParams(3, 1, 1.1, delta, gamma, n_roll, t0, su, sw)
    q = BoundParams(3, 1, 1.1, delta, gamma, n_roll + 1, t0, su, sw)
    ta, tb = theta_a(p), theta_b(p)
    assert ta >= 0 and tb >= 0
    ha, hb = h_bound(ta, 3, p), h_bound(tb, 1, p)
    assert ha >= 0 and hb >= 0
    assert h_bound(theta_a(q), 3, q) < ha or ha == 0
    assert h_bound(theta_b(q), 1, q) < hb or hb == 0


def test_sqrt_n_law():
    for n in (100, 400, 1600):
        p, q = with_(BASE, n_rollouts=n), with_(BASE, n_rollouts=4 * n)
        ratio = h_bound(theta_a(p), 3, p) / h_bound(theta_a(q), 3, q)
        assert 1.8 <= ratio <= 2.2


def test_compute_bounds_json():
    est = svr_est(np.eye(3) * 0.8, np.ones((3, 1)), 0.05)
    br = compute_bounds(est, BASE)
    doc = json.loads(br.to_json())
    for key in ("theta_a", "theta_b", "h_a", "h_b", "eps_a", "eps_b"):
        assert doc[key] >= 0
    assert doc["a_intervals"][0][0] == {"center": pytest.approx(0.84), "radius": pytest.approx(br.radius_a)}
    assert br.radius_a == pytest.approx(math.sqrt(1.05 * br.h_a))
    assert np.allclose(br.a_centers(), 1.05 * est.a_hat)
