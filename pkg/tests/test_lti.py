import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from svrobs.exceptions import DimensionMismatch
from svrobs.lti import (
    NoiseSpec, RngStream, RolloutSet, SystemMatrices, collect_rollouts, gaussian, gaussian_vector, observe,
    stable_system, step,
)


def test_system_validation():
    with pytest.raises(DimensionMismatch):
        SystemMatrices(np.ones((2, 3)), np.ones((2, 1)), np.eye(2))
    with pytest.raises(DimensionMismatch):
        SystemMatrices(np.eye(2), np.ones((3, 1)), np.eye(2))
    s = SystemMatrices.from_dict({"a": [[0.5]], "b": [[1.0]]})
    assert s.c.tolist() == [[1.0]]
    assert SystemMatrices.from_dict(s.to_dict()).to_dict() == s.to_dict()


def test_noise_validation():
    with pytest.raises(ValueError):
        NoiseSpec(sigma_u=0.0)
    with pytest.raises(ValueError):
        NoiseSpec(sigma_w=float("nan"))
    with pytest.raises(ValueError):
        NoiseSpec(sigma_v=-1.0)


def test_gaussian_vector_contract():
    s = RngStream(42, 0)
    assert np.array_equal(gaussian_vector(s, 5, 0.0), np.zeros(5))
    assert np.array_equal(gaussian_vector(s, 2, 1.0), gaussian_vector(RngStream(42, 0), 2, 1.0))
    with pytest.raises(ValueError):
        gaussian_vector(s, 0, 1.0)


def test_gaussian_moments():
    z = gaussian(RngStream(7), 1_000_000, 1.0)
    assert abs(z.mean()) < 0.01
    assert abs(z.var() - 1.0) < 0.01


def test_streams_independent():
    a = gaussian(RngStream(1, 0), 100_000)
    b = gaussian(RngStream(1, 1), 100_000)
    c = gaussian(RngStream(1).child(3), 100_000)
    assert abs(np.corrcoef(a, b)[0, 1]) < 0.02
    assert abs(np.corrcoef(a, c)[0, 1]) < 0.02


def test_input_covariance():
    u = gaussian(RngStream(3), (200_000, 2), 1.5)
    cov = np.cov(u.T)
    se = 1.5 ** 2 * np.sqrt(2.0 / len(u))
    assert np.all(np.abs(cov - 1.5 ** 2 * np.eye(2)) < 3 * se * np.array([[1, 0.71], [0.71, 1]]))


def test_step_and_observe_examples():
    s = stable_system()
    assert np.allclose(step(s, np.zeros(3), [0.0], np.zeros(3)), 0)
    assert np.allclose(step(s, np.zeros(3), [1.0], np.zeros(3)), [1, 1.5, 2])
    assert np.allclose(step(s, [1, 0, 0], [0.0], np.zeros(3)), [0.9, 0.01, 0])
    assert np.allclose(observe(s, [1, 2, 3], np.zeros(3)), [1, 2, 3])
    assert np.allclose(observe(s, np.zeros(3), [0.1, 0.2, 0.3]), [0.1, 0.2, 0.3])
    proj = SystemMatrices(s.a, s.b, [[1.0, 0.0, 0.0]])
    assert observe(proj, [2, 3, 4], [0.5]) == pytest.approx([2.5])
    with pytest.raises(DimensionMismatch):
        step(s, np.zeros(2), [0.0], np.zeros(3))
    with pytest.raises(DimensionMismatch):
        observe(proj, np.zeros(3), np.zeros(3))


def test_rollout_shapes_and_first_step():
    s = stable_system()
    data = collect_rollouts(s, NoiseSpec(0.0, 0.0, 1.0), 2, 3, seed=5)
    assert data.n_rollouts == 2
    assert data.states_array().shape == (2, 4, 3) and data.inputs_array().shape == (2, 3, 1)
    r = data.rollouts[0]
    assert np.all(r.states[0] == 0)
    assert np.array_equal(r.states[1], step(s, r.states[0], r.inputs[0], np.zeros(3)))
    with pytest.raises(ValueError):
        collect_rollouts(s, NoiseSpec(), 1, 1, seed=0)
    with pytest.raises(ValueError):
        collect_rollouts(s, NoiseSpec(), 0, 3, seed=0)


def test_noiseless_replay_matches_step():
    s = stable_system()
    data = collect_rollouts(s, NoiseSpec(0.0, 0.0, 1.0), 5, 11, seed=9)
    for r in data.rollouts:
        x = np.zeros(3)
        for k in range(11):
            x = step(s, x, r.inputs[k], np.zeros(3))
            assert np.array_equal(x, r.states[k + 1])
        assert np.array_equal(r.outputs, r.states)


@given(st.integers(0, 2 ** 64 - 1), st.integers(1, 6))
def test_collect_deterministic_and_nested(seed, n):
    s = stable_system()
    big = collect_rollouts(s, NoiseSpec(1.0, 0.1, 1.0), n + 2, 4, seed)
    small = collect_rollouts(s, NoiseSpec(1.0, 0.1, 1.0), n, 4, seed)
    assert np.array_equal(big.head(n).states_array(), small.states_array())
    again = collect_rollouts(s, NoiseSpec(1.0, 0.1, 1.0), n, 4, seed)
    assert small.to_json() == again.to_json()


def test_json_roundtrip_lossless():
    data = collect_rollouts(stable_system(), NoiseSpec(1.0, 0.3, 1.0), 3, 5, seed=11)
    doc = json.loads(data.to_json())
    assert set(doc) == {"seed", "t0", "noise", "rollouts"}
    back = RolloutSet.from_json(data.to_json())
    assert np.array_equal(back.states_array(), data.states_array())
    assert np.array_equal(back.rollouts[1].outputs, data.rollouts[1].outputs)
    assert back.noise == data.noise and back.seed == data.seed


def test_check_bound():
    s = stable_system()
    # the benchmark B has norm sqrt(7.25) > 1.1
    assert not s.check_bound(1.1)
    assert s.check_bound(3.0)
