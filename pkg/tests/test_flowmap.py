"""Particle advection, Jacobian evolution, and velocity samplers."""

import csv
import math

import numpy as np
import pytest

import vspc
from vspc.fields import GridSpec, ScalarField, VectorField, TensorField
from vspc.flowmap import (
    AnalyticFlow, MissingDataError, ParticleSet, SnapshotSampler,
    advect, compare_with_eulerian, evolve_jacobian, identity_tensor_at,
    tensor_sampler, write_trajectories_csv,
)

TAU = 2.0 * math.pi


def _rotation_flow():
    """Rigid rotation about (π, π): u = (−(x2−π), x1−π), ∇u constant."""
    def vel(t, pts):
        pts = np.atleast_2d(pts)
        return np.column_stack([-(pts[:, 1] - math.pi), pts[:, 0] - math.pi])

    def grad(t, pts):
        pts = np.atleast_2d(pts)
        J = np.zeros((len(pts), 2, 2))
        J[:, 0, 1] = -1.0
        J[:, 1, 0] = 1.0
        return J

    return AnalyticFlow(vel, grad)


def test_particle_lattice():
    ps = ParticleSet.on_lattice(4)
    assert len(ps.labels) == 16
    assert np.all(ps.positions >= 0.0) and np.all(ps.positions < TAU)
    np.testing.assert_array_equal(ps.labels, ps.positions)
    np.testing.assert_allclose(ps.determinants(), 1.0)
    assert ps.t == 0.0


def test_particles_validate_shapes():
    with pytest.raises(ValueError):
        ParticleSet(np.zeros((4, 2)), np.zeros((3, 2)), np.zeros((4, 2, 2)), 0.0)


def test_advection_in_rotation_flow():
    flow = _rotation_flow()
    start = np.array([[math.pi + 1.0, math.pi]])
    ps = ParticleSet.at(start, 0.0)
    steps, T = 400, math.pi / 2.0   # quarter turn
    for _ in range(steps):
        ps = advect(ps, flow, T / steps)
    np.testing.assert_allclose(ps.positions, [[math.pi, math.pi + 1.0]], atol=1e-9)
    # labels never move
    np.testing.assert_array_equal(ps.labels, start)


def test_jacobian_in_rotation_flow_is_rotation_matrix():
    flow = _rotation_flow()
    ps = ParticleSet.on_lattice(3)
    T = 0.7
    steps = 200
    for _ in range(steps):
        ps = evolve_jacobian(ps, flow, T / steps)
    R = np.array([[math.cos(T), -math.sin(T)], [math.sin(T), math.cos(T)]])
    for J in ps.jacobians:
        np.testing.assert_allclose(J, R, atol=1e-10)
    np.testing.assert_allclose(ps.determinants(), 1.0, atol=1e-12)


def test_advect_and_evolve_agree_on_positions():
    flow = _rotation_flow()
    a = ParticleSet.on_lattice(3)
    b = ParticleSet.on_lattice(3)
    for _ in range(50):
        a = advect(a, flow, 0.01)
        b = evolve_jacobian(b, flow, 0.01)
    np.testing.assert_allclose(a.positions, b.positions, atol=1e-14)


def test_step_validation():
    flow = _rotation_flow()
    ps = ParticleSet.on_lattice(2)
    with pytest.raises(ValueError):
        advect(ps, flow, 0.0)
    with pytest.raises(ValueError):
        evolve_jacobian(ps, flow, -0.1)


def test_spectral_sampler_matches_closed_form():
    g = GridSpec(64)
    u = vspc.taylor_green_state(g).u
    sam = SnapshotSampler(g, method="spectral")
    sam.add(0.0, u)
    rng = np.random.default_rng(11)
    pts = rng.uniform(0.0, TAU, size=(100, 2))
    vel, grad = sam.sample(0.0, pts, with_gradient=True)
    np.testing.assert_allclose(vel[:, 0], np.sin(pts[:, 0]) * np.cos(pts[:, 1]),
                               atol=1e-12)
    np.testing.assert_allclose(vel[:, 1], -np.cos(pts[:, 0]) * np.sin(pts[:, 1]),
                               atol=1e-12)
    np.testing.assert_allclose(grad[:, 0, 0], np.cos(pts[:, 0]) * np.cos(pts[:, 1]),
                               atol=1e-12)
    np.testing.assert_allclose(grad[:, 1, 0], np.sin(pts[:, 0]) * np.sin(pts[:, 1]),
                               atol=1e-12)


def test_bicubic_sampler_accuracy():
    g = GridSpec(64)
    u = vspc.taylor_green_state(g).u
    sam = SnapshotSampler(g, method="bicubic")
    sam.add(0.0, u)
    rng = np.random.default_rng(12)
    pts = rng.uniform(0.0, TAU, size=(100, 2))
    vel, grad = sam.sample(0.0, pts, with_gradient=True)
    assert np.max(np.abs(vel[:, 0] - np.sin(pts[:, 0]) * np.cos(pts[:, 1]))) < 1e-5
    assert np.max(np.abs(grad[:, 0, 0] - np.cos(pts[:, 0]) * np.cos(pts[:, 1]))) < 1e-5


def test_sampler_time_blending_is_linear():
    g = GridSpec(32)
    x1, x2 = g.mesh()
    zero = np.zeros_like(x1)
    uA = VectorField.from_samples(g, np.sin(x1), zero)
    uB = VectorField.from_samples(g, 3.0 * np.sin(x1), zero)
    sam = SnapshotSampler(g)
    sam.add(0.0, uA)
    sam.add(1.0, uB)
    pts = np.array([[0.3, 4.0], [2.0, 0.1]])
    mid, _ = sam.sample(0.5, pts)
    np.testing.assert_allclose(mid[:, 0], 2.0 * np.sin(pts[:, 0]), atol=1e-13)
    at_node, _ = sam.sample(1.0, pts)
    np.testing.assert_allclose(at_node[:, 0], 3.0 * np.sin(pts[:, 0]), atol=1e-13)


def test_sampler_guards():
    g = GridSpec(32)
    u = vspc.taylor_green_state(g).u
    sam = SnapshotSampler(g)
    with pytest.raises(MissingDataError):
        sam.sample(0.0, [[0.0, 0.0]])
    sam.add(0.0, u)
    sam.add(0.5, u)
    with pytest.raises(ValueError):
        sam.add(0.5, u)         # not strictly increasing
    with pytest.raises(MissingDataError):
        sam.sample(0.6, [[0.0, 0.0]])
    with pytest.raises(MissingDataError):
        sam.sample(-0.1, [[0.0, 0.0]])
    other = vspc.taylor_green_state(GridSpec(16)).u
    with pytest.raises(ValueError):
        sam.add(1.0, other)
    with pytest.raises(ValueError):
        SnapshotSampler(g, method="nearest")


def test_tensor_sampler_identity():
    g = GridSpec(32)
    F = TensorField.identity(g)
    at = tensor_sampler(F)
    rng = np.random.default_rng(4)
    pts = rng.uniform(0.0, TAU, size=(7, 2))
    vals = at(pts)
    assert vals.shape == (7, 2, 2)
    np.testing.assert_allclose(vals, np.broadcast_to(np.eye(2), (7, 2, 2)), atol=1e-12)
    np.testing.assert_allclose(identity_tensor_at(pts), vals, atol=1e-12)


def test_compare_with_eulerian_requires_matching_time():
    g = GridSpec(32)
    ps = ParticleSet.on_lattice(2, t=0.4)
    F = TensorField.identity(g)
    with pytest.raises(ValueError):
        compare_with_eulerian(ps, F, identity_tensor_at, t=0.3)
    # at the right time, identity data gives zero discrepancy
    assert compare_with_eulerian(ps, F, identity_tensor_at, t=0.4) < 1e-12


def test_trajectory_csv(tmp_path):
    flow = _rotation_flow()
    ps = ParticleSet.on_lattice(2)
    history = [ps]
    for _ in range(5):
        ps = evolve_jacobian(ps, flow, 0.05)
        history.append(ps)
    path = tmp_path / "traj.csv"
    write_trajectories_csv(path, history)
    with open(path) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "label_x1", "label_x2", "x1", "x2",
                       "J11", "J12", "J21", "J22", "detJ"]
    assert len(rows) == 1 + 6 * 4
    assert math.isclose(float(rows[-1][-1]), 1.0, abs_tol=1e-8)
