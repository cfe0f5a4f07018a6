"""Closed-form blowup family, its ODE reduction, and manufactured problems."""

import math

import numpy as np
import pytest

import vspc
from vspc.exact import (
    LinearProfileState, PoleError, ZghParams,
    manufactured, ode_reduce_step, zgh_amplitude, zgh_bkm_integral,
    zgh_fields, zgh_residual, zgh_synthetic_history,
)
from vspc.fields import GridSpec, ensure_spectral
from vspc.solver import SolverConfig, simulate, state_sup_distance

LN10_OVER_3 = math.log(10.0) / 3.0   # ∫₀^0.3 dt/(1−3t)


def test_params_derived_quantities():
    p = ZghParams(2.0, 1.0, 1.0)
    assert p.c == 3.0
    assert p.blows_up
    assert math.isclose(p.t_star, 1.0 / 3.0, rel_tol=1e-15)
    q = ZghParams(2.0, 1.0, -1.0)   # c·f0 < 0: amplitude decays, no pole
    assert not q.blows_up
    assert q.t_star == math.inf


def test_params_rejects_degenerate_pairs():
    with pytest.raises(ValueError):
        ZghParams(1.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        ZghParams(-2.0, 2.0, 1.0)
    with pytest.raises(ValueError):
        ZghParams(float("nan"), 1.0, 1.0)


def test_amplitude_and_pole():
    p = ZghParams(2.0, 1.0, 1.0)
    a = zgh_amplitude(p)
    assert a(0.0) == 1.0
    assert math.isclose(a(0.3), 10.0, rel_tol=1e-12)
    with pytest.raises(PoleError):
        a(p.t_star)
    with pytest.raises(PoleError):
        a(0.4)


def test_corrected_residual_vanishes():
    p = ZghParams(2.0, 1.0, 1.0)
    pts = [[1.0, -0.5], [0.3, 2.2], [-3.0, 0.01]]
    for t in (0.0, 0.1, 0.2, 0.3):
        res = zgh_residual(p, t, pts)
        assert np.max(np.abs(res.momentum)) < 1e-12
        assert np.max(np.abs(res.deformation)) < 1e-12
        assert abs(res.div_u) < 1e-12


def test_printed_variant_defects():
    # the as-printed display: div u = 2a(t) and the F22 transport breaks
    p = ZghParams(2.0, 1.0, 1.0)
    t = 0.2
    a = zgh_amplitude(p)(t)
    res = zgh_residual(p, t, [[1.0, -0.5]], fidelity="printed")
    assert math.isclose(res.div_u, 2.0 * a, rel_tol=1e-12)
    assert abs(res.deformation[1, 1]) > 1e-3
    # the F11 column happens to transport correctly in both variants
    assert abs(res.deformation[0, 0]) < 1e-12


def test_fields_variants_and_volume():
    p = ZghParams(2.0, 1.0, 1.0)
    good = zgh_fields(p, 0.25)
    assert math.isclose(float(np.linalg.det(good.F)), 1.0, rel_tol=1e-13)
    shown = zgh_fields(p, 0.25, fidelity="printed")
    assert abs(float(np.linalg.det(shown.F)) - 1.0) > 1e-3
    with pytest.raises(ValueError):
        zgh_fields(p, 0.25, fidelity="folklore")


def test_bkm_integral_closed_form():
    p = ZghParams(2.0, 1.0, 1.0)
    assert math.isclose(zgh_bkm_integral(p, 0.3), LN10_OVER_3, rel_tol=1e-14)
    assert zgh_bkm_integral(p, p.t_star) == math.inf
    assert zgh_bkm_integral(p, 1.0) == math.inf
    assert zgh_bkm_integral(p, 0.0) == 0.0
    with pytest.raises(ValueError):
        zgh_bkm_integral(p, -0.1)
    # decaying branch stays finite forever
    q = ZghParams(2.0, 1.0, -1.0)
    assert math.isclose(zgh_bkm_integral(q, 1.0), math.log(4.0) / 3.0, rel_tol=1e-14)


def test_ode_reduction_matches_family():
    p = ZghParams(2.0, 1.0, 1.0)
    amp = zgh_amplitude(p)
    state = LinearProfileState(np.diag([1.0, -1.0]), np.eye(2), 0.0)
    dt = 1e-4
    for _ in range(2500):
        state = ode_reduce_step(state, amp, dt)
    F_exact = zgh_fields(p, 0.25).F
    assert np.max(np.abs(state.F - F_exact)) < 1e-9
    assert math.isclose(state.t, 0.25, abs_tol=1e-12)


def test_ode_reduce_step_is_fourth_order():
    target = np.diag([math.e, 1.0 / math.e])
    errs = []
    for dt in (1e-2, 5e-3):
        st = LinearProfileState(np.diag([1.0, -1.0]), np.eye(2), 0.0)
        for _ in range(round(1.0 / dt)):
            st = ode_reduce_step(st, lambda t: 1.0, dt)
        errs.append(np.max(np.abs(st.F - target)))
    order = math.log2(errs[0] / errs[1])
    assert 3.7 <= order <= 4.1


def test_linear_profile_validation():
    with pytest.raises(ValueError):
        LinearProfileState(np.eye(2), np.eye(2), 0.0)        # trace 2, not 0
    with pytest.raises(ValueError):
        LinearProfileState(np.zeros((3, 3)), np.eye(2), 0.0)


def test_synthetic_history_columns():
    p = ZghParams(2.0, 1.0, 1.0)
    recs = zgh_synthetic_history(p, [0.0, 0.15, 0.3])
    last = recs[-1]
    # g(0.3) = 0.1: columns are |g|^{∓1/3} times the measure factor (2π)^{2/p}
    assert math.isclose(last.lpinf_F_c1, 0.1 ** (-1.0 / 3.0), rel_tol=1e-12)
    assert math.isclose(last.lpinf_F_c2, 0.1 ** (1.0 / 3.0), rel_tol=1e-12)
    assert math.isclose(last.lpinf_F_c1, 2.154434690031884, rel_tol=1e-12)
    assert math.isclose(last.lpinf_F_c2, 0.4641588833612779, rel_tol=1e-12)
    assert math.isclose(last.lp4_F_c1, math.sqrt(2 * math.pi) * 0.1 ** (-1.0 / 3.0),
                        rel_tol=1e-12)
    assert math.isclose(last.linf_gradu, 10.0, rel_tol=1e-12)
    with pytest.raises(ValueError):
        zgh_synthetic_history(p, [0.0, 0.2, 0.1])
    with pytest.raises(PoleError):
        zgh_synthetic_history(p, [0.0, 0.35])   # beyond the pole


def test_manufactured_validation():
    g = GridSpec(32)
    with pytest.raises(ValueError):
        manufactured(g, 0.02, "no-such-case")


def test_manufactured_initial_is_band_limited():
    g = GridSpec(32)
    prob = manufactured(g, 0.02, "broadband")
    for comp in prob.initial.u.components:
        c = ensure_spectral(comp)
        assert float(np.max(np.abs(c * ~g.dealias_mask))) < 1e-15
    du, dF = vspc.divergence_drift(prob.initial)
    assert du < 1e-12
    assert dF < 1e-12


def test_manufactured_truncation_tail():
    # the analytic broadband state carries modes up to band 24: invisible at
    # n = 128 (band ≤ 42 kept) but a genuine tail at n = 32 (band 10 kept)
    coarse = manufactured(GridSpec(32), 0.02, "broadband")
    d32 = state_sup_distance(coarse.initial, coarse.analytic(0.0))
    assert 1e-8 < d32 < 1e-4
    fine = manufactured(GridSpec(128), 0.02, "broadband")
    d128 = state_sup_distance(fine.initial, fine.analytic(0.0))
    assert d128 < 1e-13


def test_manufactured_taylor_green_forcing_only_on_deformation():
    # momentum forcing is a pure gradient (projected to zero); all the work is
    # in g_F cancelling the identity-column stretching
    g = GridSpec(32)
    prob = manufactured(g, 0.05, "taylor-green")
    gu, gF = prob.forcing.g_u(0.0), prob.forcing.g_F(0.0)
    sup_gu = max(float(np.max(np.abs(vspc.ensure_physical(c)))) for c in gu.components)
    from vspc.operators import leray_project
    proj = leray_project(gu)
    sup_proj = max(float(np.max(np.abs(vspc.ensure_physical(c)))) for c in proj.components)
    assert sup_proj < 1e-12
    sup_gF = max(float(np.max(np.abs(vspc.ensure_physical(gF.entry(i, k)))))
                 for i in range(2) for k in range(2))
    assert sup_gF > 0.1


def test_manufactured_broadband_is_consistent_in_evolution():
    g = GridSpec(64)
    prob = manufactured(g, 0.02, "broadband")
    cfg = SolverConfig(g, nu=0.02, t_end=0.05, dt_max=1e-3, forcing=prob.forcing,
                       diagnostics_interval=10 ** 9)
    res = simulate(cfg, prob.initial)
    assert state_sup_distance(res.final_state, prob.analytic(0.05)) < 1e-10
