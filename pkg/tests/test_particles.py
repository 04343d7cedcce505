from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from swarm_hierarchy import particles as P
from swarm_hierarchy.coeffs import ModelParams, relaxation_speed_sq
from swarm_hierarchy.errors import BlowupError, ParameterError, StabilityError


def _state(x, v, box=1.0, seed=0):
    return P.ParticleState(np.asarray(x, float), np.asarray(v, float), box, 0.0, seed)


def test_single_particle_at_comfort_speed():
    p = ModelParams(a=1.3, tau=1.0, sigma=1.0, diff=0.0)
    s = _state([[0.1]], [[1.3, 0.0]], box=10.0)
    s, _ = P.run(s, p, 0.01, 500)
    assert np.linalg.norm(s.velocities[0]) == pytest.approx(1.3, rel=1e-14)


def test_two_body_consensus_decay():
    sigma, dt, steps = 0.5, 1e-3, 1000
    p = ModelParams(tau=math.inf, sigma=sigma, diff=0.0, radius=0.2)
    s = _state([[0.3], [0.35]], [[0.0, 0.4], [0.0, -0.4]], box=1.0)
    s, _ = P.run(s, p, dt, steps)
    t = dt * steps
    expected = 0.4 * math.exp(-t / sigma)
    assert np.linalg.norm(s.velocities[0]) == pytest.approx(expected, abs=5 * dt)
    np.testing.assert_allclose(s.velocities[0], -s.velocities[1], atol=1e-15)


def test_single_particle_speed_curve():
    a, tau, dt, steps = 1.0, 1.0, 1e-4, 10_000
    p = ModelParams(a=a, tau=tau, sigma=1.0, diff=0.0)
    s = _state([[0.0]], [[0.3, 0.4]], box=10.0)
    s, _ = P.run(s, p, dt, steps)
    oracle = relaxation_speed_sq(0.25, dt * steps, a * a, 1.0 / (tau * a * a))
    assert np.sum(s.velocities[0] ** 2) == pytest.approx(oracle, abs=1e-4)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.05, 3.0).filter(lambda x: abs(x - 1.0) > 1e-3))
def test_prop_single_speed_monotone_to_a(v0):
    p = ModelParams(a=1.0, tau=1.0, sigma=1.0, diff=0.0)
    s = _state([[0.0]], [[v0, 0.0]], box=10.0)
    speeds = [v0]
    for _ in range(400):
        s = P.step(s, p, 0.02)
        speeds.append(float(np.linalg.norm(s.velocities[0])))
    gaps = np.abs(np.array(speeds) - 1.0)
    assert np.all(np.diff(gaps) <= 0)
    assert gaps[-1] < gaps[0]


def test_neighbor_isolated_and_coincident():
    s = _state([[0.1], [0.7], [0.7]], [[1.0, 2.0], [0.5, 0.0], [0.1, 0.4]])
    np.testing.assert_array_equal(P.neighbor_mean_velocity(s, 0, 0.2), [1.0, 2.0])
    np.testing.assert_allclose(P.neighbor_mean_velocity(s, 1, 0.2), [0.3, 0.2], rtol=1e-15)


def test_neighbor_five_particles():
    x = [[0.5, 0.5], [0.6, 0.5], [0.5, 0.75], [0.3, 0.4], [0.9, 0.9]]
    v = [[1.0, 0.0], [0.0, 1.0], [2.0, 2.0], [-1.0, 1.0], [5.0, 5.0]]
    s = _state(x, v, box=2.0)
    expected = np.mean(np.array(v[:4]), axis=0)
    np.testing.assert_allclose(P.neighbor_mean_velocity(s, 0, 0.3), expected, rtol=1e-15)
    np.testing.assert_allclose(P.neighbor_mean_all(s, 0.3, "pairs")[0], expected, rtol=1e-15)


def test_minimum_image_wraps():
    s = _state([[0.02], [0.97]], [[1.0, 0.0], [0.0, 1.0]])
    np.testing.assert_allclose(P.neighbor_mean_velocity(s, 0, 0.1), [0.5, 0.5])


def test_radius_guard():
    s = _state([[0.1]], [[1.0, 0.0]])
    with pytest.raises(ParameterError):
        P.neighbor_mean_all(s, 0.5)
    with pytest.raises(ParameterError):
        P.neighbor_mean_velocity(s, 0, 0.6)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 512), st.sampled_from([1, 2]), st.floats(0.02, 0.3), st.integers(0, 10_000))
def test_prop_cells_equal_pairs(n, dx, radius, seed):
    s = P.random_state(n, 1.0, dx=dx, d=2, speed=0.3, temp=0.2, seed=seed)
    ref = P.neighbor_mean_all(s, radius, "pairs")
    np.testing.assert_array_equal(P.neighbor_mean_all(s, radius, "cells"), ref)
    if dx == 1:
        np.testing.assert_allclose(P.neighbor_mean_all(s, radius, "sweep"), ref, rtol=1e-12, atol=1e-12)


def test_neighbor_all_matches_single():
    s = P.random_state(64, 1.0, dx=2, d=2, temp=0.3, seed=5)
    allv = P.neighbor_mean_all(s, 0.2, "cells")
    for i in range(0, 64, 7):
        np.testing.assert_allclose(allv[i], P.neighbor_mean_velocity(s, i, 0.2), rtol=1e-13, atol=1e-15)


def test_replay_and_chunking_identical():
    p = ModelParams(a=1.0, tau=1.0, sigma=0.05, diff=4.0, radius=0.05)
    s0 = P.random_state(300, 1.0, dx=1, speed=0.5, temp=0.2, seed=11)
    a, _ = P.run(s0.copy(), p, 0.005, 40)
    b, _ = P.run(s0.copy(), p, 0.005, 40)
    c, _ = P.run(s0.copy(), p, 0.005, 25)
    c, _ = P.run(c, p, 0.005, 15)
    assert a.positions.tobytes() == b.positions.tobytes() == c.positions.tobytes()
    assert a.velocities.tobytes() == b.velocities.tobytes() == c.velocities.tobytes()
    d, _ = P.run(P.random_state(300, 1.0, dx=1, speed=0.5, temp=0.2, seed=12), p, 0.005, 40)
    assert d.velocities.tobytes() != a.velocities.tobytes()


def test_step_noise_streams_distinct():
    a = P.step_noise(1, 0, (1000,))
    b = P.step_noise(1, 1, (1000,))
    assert not np.any(np.isin(a, b))
    assert abs(np.corrcoef(a, b)[0, 1]) < 0.1


def test_positions_wrapped():
    p = ModelParams(a=1.0, tau=1.0, sigma=1.0, diff=0.5, radius=0.1)
    s = P.random_state(200, 1.0, dx=2, speed=1.0, temp=0.5, seed=2)
    for _ in range(50):
        s = P.step(s, p, 0.02)
        assert np.all((s.positions >= 0) & (s.positions < 1.0))


def test_dt_guard_and_blowup():
    p = ModelParams(a=1.0, tau=0.5, sigma=1.0, diff=0.0, radius=0.1)
    s = _state([[0.1]], [[1.0, 0.0]])
    with pytest.raises(StabilityError):
        P.step(s, p, 0.051)
    big = _state([[0.1], [0.5]], [[1e200, 0.0], [0.0, 0.0]])
    with np.errstate(all="ignore"), pytest.raises(BlowupError, match="particle 0"):
        P.step(big, p, 0.01)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 40))
def test_prop_zero_noise_alignment_nondecreasing(seed, n):
    p = ModelParams(a=1.0, tau=math.inf, sigma=1.0, diff=0.0, radius=0.45)
    s = P.random_state(n, 1.0, dx=1, speed=0.0, temp=1.0, seed=seed)
    s = P.ParticleState(np.full((n, 1), 0.5), s.velocities, 1.0)
    dt = 0.05
    phis = [P.observables(s, 1).order_parameter]
    for _ in range(40):
        s = P.step(s, p, dt)
        phis.append(P.observables(s, 1).order_parameter)
    assert np.all(np.diff(phis) >= -dt * 1e-3)


def test_observables_phi_examples():
    same = _state(np.random.default_rng(0).uniform(size=(10, 1)), np.tile([0.3, -0.4], (10, 1)))
    assert P.observables(same, 2).order_parameter == pytest.approx(1.0, rel=1e-15)
    anti = _state([[0.1], [0.2], [0.3], [0.4]], [[1, 0], [-1, 0], [0.2, 0.5], [-0.2, -0.5]])
    assert P.observables(anti, 2).order_parameter == pytest.approx(0.0, abs=1e-16)
    four = _state([[0.1], [0.2], [0.3], [0.4]], [[1, 0], [0, 1], [-1, 0], [0, 1]])
    assert P.observables(four, 2).order_parameter == pytest.approx(0.5, rel=1e-15)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 300), st.sampled_from([1, 2]), st.sampled_from([1, 2, 4, 5, 8]), st.integers(0, 1000))
def test_prop_observables_counting(n, dx, cells, seed):
    s = P.random_state(n, 2.0, dx=dx, temp=0.5, seed=seed)
    rec = P.observables(s, cells)
    vol = (2.0 / cells) ** dx
    assert np.sum(rec.binned_density * vol) == n
    assert 0.0 <= rec.order_parameter <= 1.0
    empty = rec.binned_density == 0
    assert np.all(rec.binned_velocity.mask[empty])
    if dx == 1:
        cic = P.observables(s, cells, deposit="cic")
        assert np.sum(cic.binned_density * vol) == pytest.approx(n, rel=1e-12)


def test_sample_from_fields_statistics():
    rho = np.array([1.0, 3.0])
    u = np.array([[0.5, 0.0], [-0.5, 0.0]])
    s = P.sample_from_fields(40_000, 1.0, rho, u, 0.1, seed=4)
    left = s.positions[:, 0] < 0.5
    assert left.mean() == pytest.approx(0.25, abs=0.01)
    assert s.velocities[left, 0].mean() == pytest.approx(0.5, abs=0.01)
    assert s.velocities[~left, 0].var() == pytest.approx(0.1, rel=0.05)


def test_interaction_radius():
    assert P.interaction_radius(ModelParams(radius=2.0)) == 2.0
    assert P.interaction_radius(ModelParams(radius=2.0, eps=0.1)) == pytest.approx(0.2)
