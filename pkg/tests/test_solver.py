"""Time stepper, CFL control, conservation, and run-control behavior."""

import math

import numpy as np
import pytest

import vspc
from vspc.fields import GridSpec, ScalarField, VectorField, TensorField, ensure_physical
from vspc.solver import (
    BlowupError, ForcingSpec, SolverConfig, State,
    adaptive_dt, divergence_drift, rhs, simulate, state_from_arrays,
    state_sup_distance, step,
    taylor_green_state, steady_identity_state, perturbed_identity_state,
)


def test_state_requires_matching_grids():
    u = vspc.taylor_green_state(GridSpec(16)).u
    F = TensorField.identity(GridSpec(32))
    with pytest.raises(ValueError):
        State(0.0, u, F)


def test_initial_states_satisfy_constraints():
    g = GridSpec(64)
    for st in (taylor_green_state(g), steady_identity_state(g),
               perturbed_identity_state(g, 0.1), perturbed_identity_state(g, 0.5)):
        du, dF = divergence_drift(st)
        assert du < 1e-12
        assert dF < 1e-12


def test_perturbed_identity_scales_with_amplitude():
    # velocity is fixed (Taylor–Green); the deformation deviation is linear in
    # the amplitude knob
    g = GridSpec(32)

    def dev(amp):
        st = perturbed_identity_state(g, amp)
        worst = 0.0
        eye = np.eye(2)
        for i in range(2):
            for k in range(2):
                vals = ensure_physical(st.F.entry(i, k)) - eye[i, k]
                worst = max(worst, float(np.max(np.abs(vals))))
        return worst

    assert math.isclose(dev(0.1), 10 * dev(0.01), rel_tol=1e-10)
    st = perturbed_identity_state(g, 0.1)
    assert state_sup_distance(st, taylor_green_state(g)) > 0.05


def test_adaptive_dt_oracle():
    # TG velocity has sup |u| = 1 and F = I has Frobenius sup √2:
    # dt = 0.4·(2π/64)/(1+√2)
    g = GridSpec(64)
    cfg = SolverConfig(g, nu=0.0, t_end=1.0, cfl=0.4, dt_max=1.0)
    dt = adaptive_dt(taylor_green_state(g), cfg)
    assert math.isclose(dt, 0.016266128556433397, rel_tol=1e-12)
    capped = SolverConfig(g, nu=0.0, t_end=1.0, cfl=0.4, dt_max=1e-3)
    assert adaptive_dt(taylor_green_state(g), capped) == 1e-3


def test_step_rejects_bad_dt():
    g = GridSpec(16)
    st = taylor_green_state(g)
    cfg = SolverConfig(g, nu=0.0, t_end=1.0)
    with pytest.raises(ValueError):
        step(st, 0.0, cfg)
    with pytest.raises(ValueError):
        step(st, -1e-3, cfg)


def test_steady_identity_is_a_fixed_point():
    g = GridSpec(32)
    st = steady_identity_state(g)
    cfg = SolverConfig(g, nu=0.1, t_end=1.0)
    cur = st
    for _ in range(20):
        cur = step(cur, 5e-3, cfg)
    assert state_sup_distance(cur, State(cur.t, st.u, st.F)) < 1e-13


def test_config_validation():
    g = GridSpec(16)
    with pytest.raises(ValueError):
        SolverConfig(g, nu=-0.1, t_end=1.0)
    with pytest.raises(ValueError):
        SolverConfig(g, nu=0.0, t_end=-1.0)
    with pytest.raises(ValueError):
        SolverConfig(g, nu=0.0, t_end=1.0, cfl=0.0)
    with pytest.raises(ValueError):
        SolverConfig(g, nu=0.0, t_end=1.0, dt_max=0.0)
    SolverConfig(g, nu=0.0, t_end=0.0)  # zero-length runs are fine


def test_simulate_rejects_divergent_initial_data():
    g = GridSpec(32)
    x1, _ = g.mesh()
    u = VectorField.from_samples(g, np.sin(x1), np.zeros_like(x1))
    bad = State(0.0, u, TensorField.identity(g))
    cfg = SolverConfig(g, nu=0.0, t_end=0.1)
    with pytest.raises(ValueError, match="divergence"):
        simulate(cfg, bad)


def test_simulate_zero_horizon():
    g = GridSpec(16)
    cfg = SolverConfig(g, nu=0.0, t_end=0.0)
    res = simulate(cfg, taylor_green_state(g))
    assert res.termination == "completed"
    assert res.steps == 0
    assert len(res.records) == 1


def test_short_inviscid_energy_conservation():
    g = GridSpec(32)
    cfg = SolverConfig(g, nu=0.0, t_end=0.1, dt_max=5e-3, diagnostics_interval=4)
    res = simulate(cfg, perturbed_identity_state(g, 0.1))
    assert res.termination == "completed"
    assert abs(res.records[-1].energy_residual) < 1e-10


def test_gradu_ceiling_triggers_blowup_path():
    g = GridSpec(16)
    cfg = SolverConfig(g, nu=0.0, t_end=0.5, gradu_ceiling=0.5)
    res = simulate(cfg, taylor_green_state(g))
    assert res.termination == "blowup-detected"
    assert res.blowup_time is not None
    assert res.blowup_time <= 0.5
    assert np.all(np.isfinite([res.final_state.t]))


def test_strict_mode_halts_on_certificate():
    g = GridSpec(16)
    cfg = SolverConfig(g, nu=0.1, t_end=0.5, strict=True, energy_tolerance=1e-18,
                       diagnostics_interval=2)
    res = simulate(cfg, perturbed_identity_state(g, 0.1))
    assert res.termination == "certificate-violation-halt"
    assert res.violated_certificate == "energy-identity"


def test_observer_cadence():
    g = GridSpec(16)
    seen = []
    cfg = SolverConfig(g, nu=0.0, t_end=0.1, dt_max=5e-3, snapshot_interval=10)
    simulate(cfg, taylor_green_state(g), observer=lambda s: seen.append(s.t))
    # 20 steps: t = 0, t = 0.05, and the final state
    assert len(seen) == 3
    assert seen[0] == 0.0
    assert math.isclose(seen[-1], 0.1, abs_tol=1e-12)


def test_records_cadence_includes_endpoints():
    g = GridSpec(16)
    cfg = SolverConfig(g, nu=0.0, t_end=0.1, dt_max=5e-3, diagnostics_interval=7)
    res = simulate(cfg, taylor_green_state(g))
    times = [r.t for r in res.records]
    assert times[0] == 0.0
    assert math.isclose(times[-1], 0.1, abs_tol=1e-12)
    assert all(b > a for a, b in zip(times, times[1:]))


def test_forcing_spec_drives_velocity():
    # constant mean acceleration: g_u = (1, 0) should produce u ≈ (t, 0);
    # the deformation stays at identity because ∇u = 0
    g = GridSpec(16)
    one = np.ones((g.n, g.n))

    def g_u(t):
        return VectorField.from_samples(g, one, np.zeros_like(one))

    cfg = SolverConfig(g, nu=0.0, t_end=0.1, dt_max=5e-3,
                       forcing=ForcingSpec(g_u=g_u, g_F=None))
    res = simulate(cfg, steady_identity_state(g))
    u1 = ensure_physical(res.final_state.u.components[0])
    np.testing.assert_allclose(u1, 0.1, atol=1e-12)
    assert state_sup_distance(
        res.final_state,
        State(res.final_state.t, res.final_state.u, TensorField.identity(g))) < 1e-12


def test_manufactured_taylor_green_is_exact():
    # band-2 fields: no truncation tail, so the discrete trajectory tracks the
    # closed form to roundoff
    g = GridSpec(32)
    prob = vspc.manufactured(g, 0.05, "taylor-green")
    cfg = SolverConfig(g, nu=0.05, t_end=0.1, dt_max=2e-3, forcing=prob.forcing,
                       diagnostics_interval=10 ** 9)
    res = simulate(cfg, prob.initial)
    assert state_sup_distance(res.final_state, prob.analytic(0.1)) < 1e-12


def test_state_round_trip_through_arrays():
    g = GridSpec(16)
    st = perturbed_identity_state(g, 0.2)
    arrays = [ensure_physical(st.u.components[0]), ensure_physical(st.u.components[1]),
              ensure_physical(st.F.entry(0, 0)), ensure_physical(st.F.entry(1, 0)),
              ensure_physical(st.F.entry(0, 1)), ensure_physical(st.F.entry(1, 1))]
    back = state_from_arrays(g, 0.0, *arrays)
    assert state_sup_distance(st, back) < 1e-14


def test_rhs_is_divergence_free():
    g = GridSpec(32)
    st = perturbed_identity_state(g, 0.1)
    cfg = SolverConfig(g, nu=0.01, t_end=1.0)
    d = rhs(st, cfg)
    du = vspc.operators.divergence(d.du)
    assert float(np.max(np.abs(ensure_physical(du)))) < 1e-12
    for col in d.dF.columns:
        dc = vspc.operators.divergence(col)
        assert float(np.max(np.abs(ensure_physical(dc)))) < 1e-12
