import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from svrobs.exceptions import DimensionMismatch, RankDeficientC
from svrobs.lti import NoiseSpec, RngStream, SystemMatrices, stable_system, unstable_system
from svrobs.observer import (
    DEFAULT_TARGETS, IntervalMatrix, design_gain, gershgorin_feasible, kalman_gain,
    verify_stability_exhaustive,
)

I3 = np.eye(3)


def test_targets_grid():
    assert DEFAULT_TARGETS[0] == 0.0 and len(DEFAULT_TARGETS) == 37
    assert max(DEFAULT_TARGETS) == pytest.approx(0.9) and min(DEFAULT_TARGETS) == pytest.approx(-0.9)


def test_interval_matrix():
    iv = IntervalMatrix(0.9 * I3, 0.1)
    assert iv.member(0.9 * I3 + 0.1) and not iv.member(0.9 * I3 + 0.11)
    assert iv.corners().shape == (512, 3, 3)
    with pytest.raises(ValueError):
        IntervalMatrix(I3, -0.1)
    with pytest.raises(DimensionMismatch):
        IntervalMatrix(np.ones((2, 3)), 0.1)


def test_gershgorin_examples():
    cert = gershgorin_feasible(np.zeros((3, 3)), IntervalMatrix(0.9 * I3, 0.0), I3)
    assert cert.feasible and np.allclose(cert.per_row_margin, 0.1)
    cert = gershgorin_feasible(np.zeros((3, 3)), IntervalMatrix(0.9 * I3, 0.2), I3)
    assert not cert.feasible and np.all(cert.per_row_margin < 0)
    a = stable_system().a
    cert = gershgorin_feasible(a, IntervalMatrix(a, 0.0), I3)
    assert cert.feasible and np.allclose(cert.per_row_margin, 1.0)
    with pytest.raises(DimensionMismatch):
        gershgorin_feasible(np.zeros((3, 2)), IntervalMatrix(a, 0.0), I3)


def test_design_examples():
    a = stable_system().a
    cert = design_gain(IntervalMatrix(a, 0.0), I3)
    assert cert.feasible and cert.target == 0.0
    assert np.max(np.abs(np.linalg.eigvals(a - cert.gain))) < 1
    assert design_gain(IntervalMatrix(a, 1.0), I3) is None
    with pytest.raises(RankDeficientC):
        design_gain(IntervalMatrix(a, 0.0), np.array([[1.0, 0, 0], [2.0, 0, 0]]))


def test_design_prefers_margin_then_small_target():
    # with C = I every row margin is 1 - |tau| - 3 r, so the smallest |tau| wins
    cert = design_gain(IntervalMatrix(0.5 * I3, 0.05), I3, targets=(0.3, -0.3, 0.2))
    assert cert.target == 0.2
    assert design_gain(IntervalMatrix(0.5 * I3, 0.05), I3).target == 0.0
    # equal margin and equal |tau|: search order decides
    assert design_gain(IntervalMatrix(0.5 * I3, 0.05), I3, targets=(-0.3, 0.3)).target == -0.3


def test_design_non_identity_output():
    c = np.array([[1.0, 0.0, 1.0], [0.0, 1.0, 0.0]])
    cert = design_gain(IntervalMatrix(0.3 * I3, 0.01), c)
    if cert is not None:
        worst = verify_stability_exhaustive(cert, cert.interval, c, 200, RngStream(1))
        assert worst < 1


def test_verify_examples():
    a = stable_system().a
    iv0 = IntervalMatrix(a, 0.0)
    cert = gershgorin_feasible(0.5 * a, iv0, I3)
    worst = verify_stability_exhaustive(cert, iv0, I3, 0, RngStream(0))
    assert worst == pytest.approx(np.max(np.abs(np.linalg.eigvals(0.5 * a))), rel=1e-12)
    iv = IntervalMatrix(a, 0.05)
    cert = design_gain(iv, I3)
    assert verify_stability_exhaustive(cert, iv, I3, 1000, RngStream(2)) < 1
    ua = unstable_system().a
    bad = gershgorin_feasible(-ua, IntervalMatrix(ua, 0.0), I3)
    assert not bad.feasible
    forced = type(bad)(bad.gain, True, bad.per_row_margin)
    assert verify_stability_exhaustive(forced, IntervalMatrix(ua, 0.0), I3, 0, RngStream(0)) > 1
    with pytest.raises(ValueError):
        verify_stability_exhaustive(bad, IntervalMatrix(ua, 0.0), I3, 0, RngStream(0))


@st.composite
def intervals(draw):
    seed = draw(st.integers(0, 2 ** 32 - 1))
    rng = np.random.default_rng(seed)
    centers = rng.uniform(-1.2, 1.2, size=(3, 3)) * rng.uniform(0, 1)
    r1 = draw(st.floats(0.0, 0.3))
    r2 = draw(st.floats(0.0, 0.3))
    return centers, min(r1, r2), max(r1, r2)


@given(intervals())
def test_soundness_and_monotone_conservatism(data):
    centers, r_small, r_big = data
    big = IntervalMatrix(centers, r_big)
    cert = design_gain(big, I3)
    if cert is None:
        return
    assert verify_stability_exhaustive(cert, big, I3, 50, RngStream(3)) < 1
    small = gershgorin_feasible(cert.gain, IntervalMatrix(centers, r_small), I3)
    assert small.feasible
    assert np.all(small.per_row_margin >= cert.per_row_margin - 1e-15)


@given(intervals())
def test_feasible_targets_shrink_with_radius(data):
    centers, r_small, r_big = data

    def feasible_set(r):
        iv = IntervalMatrix(centers, r)
        return {t for t in DEFAULT_TARGETS if gershgorin_feasible((centers - t * I3), iv, I3).feasible}

    assert feasible_set(r_big) <= feasible_set(r_small)


def test_design_deterministic():
    iv = IntervalMatrix(stable_system().a * 1.02, 0.08)
    a, b = design_gain(iv, I3), design_gain(iv, I3)
    assert np.array_equal(a.gain, b.gain) and a.target == b.target


def test_certificate_json():
    iv = IntervalMatrix(stable_system().a, 0.05)
    doc = json.loads(design_gain(iv, I3, confidence=0.99).to_json())
    assert doc["feasible"] and doc["confidence"] == 0.99
    assert np.array(doc["gain"]).shape == (3, 3)
    assert doc["interval"]["radius"] == 0.05


def test_kalman_examples():
    k = kalman_gain(SystemMatrices([[0.9]], [[1.0]], [[1.0]]), NoiseSpec(1.0, 1.0, 1.0))
    p = (0.81 + np.sqrt(4.6561)) / 2
    assert k[0, 0] == pytest.approx(0.9 * p / (p + 1), abs=1e-9)
    s = stable_system()
    assert np.allclose(kalman_gain(s, NoiseSpec(1.0, 0.0, 1.0)), s.a, atol=1e-10)
    zero = SystemMatrices(np.zeros((2, 2)), np.ones((2, 1)), np.eye(2))
    assert np.allclose(kalman_gain(zero, NoiseSpec(1.0, 1.0, 1.0)), 0)
    k = kalman_gain(unstable_system(), NoiseSpec(1.0, 0.5, 1.0))
    assert np.max(np.abs(np.linalg.eigvals(unstable_system().a - k))) < 1
