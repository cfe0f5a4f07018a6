"""Pseudo-spectral solver for 2D incompressible viscoelastic (Oldroyd) flow.

The state is a velocity u and a deformation tensor F on the torus obeying

    ∂ₜu − νΔu + (u·∇)u + ∇p = Σ_k (F(·,k)·∇) F(·,k),      ∇·u = 0,
    ∂ₜF(·,k) + (u·∇) F(·,k) = (F(·,k)·∇) u,               ∇·F(·,k) = 0,

where the elastic term is the divergence of FFᵀ written column-wise.  The
pressure never appears explicitly: the momentum right-hand side is Leray
projected, which subtracts exactly the gradient part ∇p = (I−P)(F·∇F − u·∇u).

Time stepping is the classical RK4 scheme with an integrating factor
e^{−ν|k|²t} on the velocity block (the deformation block has no diffusion and
is stepped plainly), so stiff viscous decay never limits the step size.  The
step size itself is CFL-limited by the transport and elastic-wave speeds.

All quadratic terms are formed pointwise in physical space from 2/3-rule
dealiased inputs; retained modes therefore carry no aliasing error, and the
scheme conserves ‖u‖₂² + ‖F‖₂² in the inviscid unforced case up to time
integration error alone.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .fields import (
    GridSpec,
    TensorField,
    VectorField,
    ensure_physical,
    ensure_spectral,
    _to_coeffs,
    _to_samples,
)
from .operators import _project_pair
from . import diagnostics as _diag

__all__ = [
    "State", "StateDerivative", "ForcingSpec", "SolverConfig", "RunResult",
    "BlowupError", "rhs", "step", "adaptive_dt", "simulate",
    "taylor_green_state", "steady_identity_state", "perturbed_identity_state",
    "state_from_arrays", "divergence_drift",
]

# packed spectral layout: channel order u₁, u₂, F₁₁, F₂₁, F₁₂, F₂₂
_U1, _U2, _F11, _F21, _F12, _F22 = range(6)
_COLS = ((_F11, _F21), (_F12, _F22))


class BlowupError(RuntimeError):
    """Signals loss of regularity: non-finite fields or ‖∇u‖_∞ past the ceiling."""

    def __init__(self, t, message, record=None):
        super().__init__(f"blowup detected at t = {t:.6g}: {message}")
        self.t = t
        self.record = record


@dataclass(frozen=True, eq=False)
class State:
    """Solver state (t, u, F); u and F share one grid and one representation."""

    t: float
    u: VectorField
    F: TensorField

    def __post_init__(self):
        if self.u.grid != self.F.grid:
            raise ValueError("u and F live on different grids")

    @property
    def grid(self):
        return self.u.grid


@dataclass(frozen=True, eq=False)
class StateDerivative:
    """Time derivative of a state, spectral representation."""

    du: VectorField
    dF: TensorField


@dataclass(frozen=True)
class ForcingSpec:
    """External body forces: time-functions for the velocity and deformation equations.

    g_u(t) is Leray-projected before use, so any gradient part it carries is
    discarded; g_F columns are taken as given (they should be divergence-free).
    Either may be None for an unforced block.
    """

    g_u: Optional[Callable[[float], VectorField]]
    g_F: Optional[Callable[[float], TensorField]]


@dataclass(frozen=True)
class SolverConfig:
    grid: GridSpec
    nu: float
    t_end: float
    cfl: float = 0.4
    dt_max: float = 5.0e-3
    forcing: Optional[ForcingSpec] = None
    snapshot_interval: int = 0
    diagnostics_interval: int = 1
    gradu_ceiling: float = 1.0e6
    strict: bool = False
    energy_tolerance: float = 1.0e-5
    lp_tolerance: float = 1.0e-7
    divergence_tolerance: float = 1.0e-8

    def __post_init__(self):
        if self.nu < 0 or not np.isfinite(self.nu):
            raise ValueError(f"viscosity must be finite and >= 0, got {self.nu}")
        if self.t_end < 0:
            raise ValueError("t_end must be >= 0")
        if not 0 < self.cfl <= 1.0:
            raise ValueError(f"cfl must lie in (0, 1], got {self.cfl}")
        if self.dt_max <= 0:
            raise ValueError("dt_max must be positive")
        if self.diagnostics_interval < 1:
            raise ValueError("diagnostics_interval must be >= 1")
        if self.snapshot_interval < 0:
            raise ValueError("snapshot_interval must be >= 0")
        if self.gradu_ceiling <= 0:
            raise ValueError("gradu_ceiling must be positive")


@dataclass(eq=False)
class RunResult:
    """Outcome of simulate(): final state, diagnostics history, and bookkeeping."""

    final_state: State
    records: list
    termination: str            # completed | blowup-detected | certificate-violation-halt
    steps: int
    max_div_drift_u: float
    max_div_drift_F: float
    max_projection_correction: float
    blowup_time: Optional[float] = None
    violated_certificate: Optional[str] = None


# ---------------------------------------------------------------------------
# packing helpers

def _pack(state: State) -> np.ndarray:
    """Stack the six spectral coefficient arrays into one (6, n, n) block."""
    n = state.grid.n
    Z = np.empty((6, n, n), dtype=np.complex128)
    Z[_U1] = ensure_spectral(state.u.components[0])
    Z[_U2] = ensure_spectral(state.u.components[1])
    for k, (ci, cj) in enumerate(_COLS):
        col = state.F.columns[k]
        Z[ci] = ensure_spectral(col.components[0])
        Z[cj] = ensure_spectral(col.components[1])
    return Z


def _unpack(grid: GridSpec, t: float, Z) -> State:
    u = VectorField.from_spectra(grid, Z[_U1], Z[_U2])
    cols = [VectorField.from_spectra(grid, Z[ci], Z[cj]) for ci, cj in _COLS]
    return State(t, u, TensorField.from_columns(cols[0], cols[1]))


def state_from_arrays(grid, t, u1, u2, F11, F21, F12, F22) -> State:
    """Build a physical-representation state from six sample arrays."""
    u = VectorField.from_samples(grid, u1, u2)
    col1 = VectorField.from_samples(grid, F11, F21)
    col2 = VectorField.from_samples(grid, F12, F22)
    return State(float(t), u, TensorField.from_columns(col1, col2))


def _samples(grid, c):
    """Unchecked inverse transform; inputs here are built from real data."""
    return (np.fft.ifft2(c) * (grid.n * grid.n)).real


def state_sup_distance(a: State, b: State) -> float:
    """Largest pointwise difference over all six components of two states."""
    if a.grid != b.grid:
        raise ValueError("states live on different grids")
    dist = 0.0
    for pair in [(a.u.components[i], b.u.components[i]) for i in range(2)] + \
                [(a.F.entry(i, k), b.F.entry(i, k)) for i in range(2) for k in range(2)]:
        sa = ensure_physical(pair[0])
        sb = ensure_physical(pair[1])
        dist = max(dist, float(np.max(np.abs(sa - sb))))
    return dist


# ---------------------------------------------------------------------------
# right-hand side

def _nonlinear(grid: GridSpec, Z):
    """Unprojected nonlinear terms: (−u·∇u + F·∇F, −u·∇F + F·∇u), spectral, dealiased."""
    mask = grid.dealias_mask
    ik1, ik2 = grid.ik1, grid.ik2

    up = [_samples(grid, Z[_U1]), _samples(grid, Z[_U2])]
    # velocity Jacobian G[i][j] = ∂_j u_i
    G = [[_samples(grid, ik1 * Z[_U1 + i]), _samples(grid, ik2 * Z[_U1 + i])] for i in range(2)]
    Fp = {c: _samples(grid, Z[c]) for c in (_F11, _F21, _F12, _F22)}
    dF = {c: (_samples(grid, ik1 * Z[c]), _samples(grid, ik2 * Z[c]))
          for c in (_F11, _F21, _F12, _F22)}

    Nu = np.empty_like(Z[:2])
    for i in range(2):
        conv = up[0] * G[i][0] + up[1] * G[i][1]
        elastic = np.zeros_like(conv)
        for ci, cj in _COLS:
            row = (ci, cj)[i]
            elastic += Fp[ci] * dF[row][0] + Fp[cj] * dF[row][1]
        Nu[i] = _to_coeffs(grid, elastic - conv) * mask

    NF = np.empty_like(Z[2:])
    for k, (ci, cj) in enumerate(_COLS):
        for i, c in enumerate((ci, cj)):
            conv = up[0] * dF[c][0] + up[1] * dF[c][1]
            stretch = Fp[ci] * G[i][0] + Fp[cj] * G[i][1]
            NF[c - 2] = _to_coeffs(grid, stretch - conv) * mask
    return Nu, NF


def _forcing_terms(grid, forcing: ForcingSpec, t):
    """Projected, dealiased spectral forcing contributions (gu (2,n,n), gF (4,n,n)).

    Either channel may be None, meaning no forcing on that block.
    """
    mask = grid.dealias_mask
    if forcing.g_u is None:
        gu = np.zeros((2, grid.n, grid.n), dtype=np.complex128)
    else:
        gu_field = forcing.g_u(t)
        g1 = ensure_spectral(gu_field.components[0]) * mask
        g2 = ensure_spectral(gu_field.components[1]) * mask
        g1, g2 = _project_pair(grid, g1, g2)
        gu = np.stack([g1, g2])
    gF = np.zeros((4, grid.n, grid.n), dtype=np.complex128)
    if forcing.g_F is not None:
        gF_field = forcing.g_F(t)
        for k, (ci, cj) in enumerate(_COLS):
            col = gF_field.columns[k]
            gF[ci - 2] = ensure_spectral(col.components[0]) * mask
            gF[cj - 2] = ensure_spectral(col.components[1]) * mask
    return gu, gF


def _rhs_transport(grid, Z, t, forcing):
    """dZ/dt without the viscous term: projected nonlinearity plus forcing."""
    if not np.all(np.isfinite(Z)):
        raise BlowupError(t, "non-finite field values")
    Nu, NF = _nonlinear(grid, Z)
    Nu[0], Nu[1] = _project_pair(grid, Nu[0], Nu[1])
    if forcing is not None:
        gu, gF = _forcing_terms(grid, forcing, t)
        Nu += gu
        NF += gF
    return np.concatenate([Nu, NF])


def rhs(state: State, cfg: SolverConfig) -> StateDerivative:
    """Instantaneous time derivative of a state, including the viscous term."""
    grid = state.grid
    Z = _pack(state) * grid.dealias_mask
    dZ = _rhs_transport(grid, Z, state.t, cfg.forcing)
    dZ[_U1] -= cfg.nu * grid.k_sq * Z[_U1]
    dZ[_U2] -= cfg.nu * grid.k_sq * Z[_U2]
    du = VectorField.from_spectra(grid, dZ[_U1], dZ[_U2])
    cols = [VectorField.from_spectra(grid, dZ[ci], dZ[cj]) for ci, cj in _COLS]
    return StateDerivative(du, TensorField.from_columns(cols[0], cols[1]))


# ---------------------------------------------------------------------------
# time stepping

def _apply_factor(Z, E):
    """Multiply the velocity block by the viscous integrating factor E."""
    out = Z.copy()
    out[_U1] *= E
    out[_U2] *= E
    return out


def _step_packed(grid, Z, t, dt, nu, forcing):
    """One integrating-factor RK4 step; returns (Z_new, projection correction L²)."""
    E = np.exp(-nu * grid.k_sq * (0.5 * dt))
    E2 = E * E

    a = _rhs_transport(grid, Z, t, forcing)
    b = _rhs_transport(grid, _apply_factor(Z + 0.5 * dt * a, E), t + 0.5 * dt, forcing)
    c = _rhs_transport(grid, _apply_factor(Z, E) + 0.5 * dt * b, t + 0.5 * dt, forcing)
    d = _rhs_transport(grid, _apply_factor(Z, E2) + dt * _apply_factor(c, E), t + dt, forcing)

    Znew = _apply_factor(Z, E2) + (dt / 6.0) * (
        _apply_factor(a, E2) + 2.0 * _apply_factor(b + c, E) + d)

    # re-project u and each F column onto the divergence-free subspace; the
    # scheme preserves the constraints to roundoff, so this only mops up noise
    correction = 0.0
    for ci, cj in ((_U1, _U2),) + _COLS:
        p1, p2 = _project_pair(grid, Znew[ci], Znew[cj])
        correction += np.sum(np.abs(Znew[ci] - p1) ** 2) + np.sum(np.abs(Znew[cj] - p2) ** 2)
        Znew[ci] = p1
        Znew[cj] = p2
    Znew *= grid.dealias_mask
    return Znew, float(2.0 * np.pi * np.sqrt(correction))


def step(state: State, dt: float, cfg: SolverConfig) -> State:
    """Advance one step of size dt; returns the new state (spectral fields)."""
    if dt <= 0 or not np.isfinite(dt):
        raise ValueError(f"step size must be positive and finite, got {dt}")
    grid = state.grid
    Z = _pack(state) * grid.dealias_mask
    Znew, _ = _step_packed(grid, Z, state.t, dt, cfg.nu, cfg.forcing)
    if not np.all(np.isfinite(Znew)):
        raise BlowupError(state.t + dt, "non-finite field values after step")
    return _unpack(grid, state.t + dt, Znew)


def _sup_speeds(grid, Z):
    """Pointwise sup of |u| and of the Frobenius norm of F."""
    u1 = _samples(grid, Z[_U1])
    u2 = _samples(grid, Z[_U2])
    u_sup = float(np.max(np.hypot(u1, u2)))
    fro = np.zeros_like(u1)
    for c in (_F11, _F21, _F12, _F22):
        fro += _samples(grid, Z[c]) ** 2
    return u_sup, float(np.max(np.sqrt(fro)))


def adaptive_dt(state: State, cfg: SolverConfig) -> float:
    """CFL step dt = min(dt_max, cfl·Δx/(‖u‖_∞ + ‖F‖_∞ + ε)); ε guards u = F = 0."""
    grid = state.grid
    u_sup, f_sup = _sup_speeds(grid, _pack(state))
    return float(min(cfg.dt_max, cfg.cfl * grid.spacing / (u_sup + f_sup + 1e-10)))


def divergence_drift(state: State):
    """Sup-norm divergence of u and the worst F column (constraint monitors)."""
    grid = state.grid
    Z = _pack(state)
    ik1, ik2 = grid.ik1, grid.ik2
    du = float(np.max(np.abs(_samples(grid, ik1 * Z[_U1] + ik2 * Z[_U2]))))
    dF = 0.0
    for ci, cj in _COLS:
        dF = max(dF, float(np.max(np.abs(_samples(grid, ik1 * Z[ci] + ik2 * Z[cj])))))
    return du, dF


def _validate_initial(state: State, cfg: SolverConfig):
    Z = _pack(state)
    if not np.all(np.isfinite(Z)):
        raise ValueError("initial state contains non-finite values")
    du, dF = divergence_drift(state)
    tol = cfg.divergence_tolerance
    if du > tol or dF > tol:
        raise ValueError(
            f"initial state violates the divergence constraints: "
            f"|div u| = {du:.3e}, |div F| = {dF:.3e} > {tol:.1e}")


def _strict_violation(record, first, cfg):
    """Name of the first violated runtime certificate, or None."""
    if cfg.forcing is None and record.energy_residual > cfg.energy_tolerance:
        return "energy-identity"
    if max(record.div_drift_u, record.div_drift_F) > cfg.divergence_tolerance:
        return "divergence-constraint"
    for prev_norm, now_norm in ((first.lpinf_F_c1, record.lpinf_F_c1),
                                (first.lpinf_F_c2, record.lpinf_F_c2)):
        if prev_norm > 0 and np.log(now_norm / prev_norm) > record.bkm + cfg.lp_tolerance:
            return "lp-growth"
    return None


def simulate(cfg: SolverConfig, initial: State, observer=None) -> RunResult:
    """March the solution to t_end with CFL-adaptive steps.

    Diagnostics are recorded every diagnostics_interval steps (and always at
    the first and last instant); observer(state) is invoked at the same cadence
    of snapshot_interval when that is positive.  Blowup (non-finite values or
    ‖∇u‖_∞ > gradu_ceiling) ends the run early with the last good state.
    """
    _validate_initial(initial, cfg)
    grid = cfg.grid
    Z = _pack(initial) * grid.dealias_mask
    t = float(initial.t)
    t_end = t + cfg.t_end

    engine = _diag.DiagnosticsEngine(nu=cfg.nu)
    records = [engine.observe(_unpack(grid, t, Z))]
    max_du = records[0].div_drift_u
    max_dF = records[0].div_drift_F
    max_corr = 0.0
    if observer is not None and cfg.snapshot_interval > 0:
        observer(_unpack(grid, t, Z))

    termination = "completed"
    blowup_time = None
    violated = None
    steps = 0
    while t < t_end - 1e-12:
        dt = min(adaptive_dt(_unpack(grid, t, Z), cfg), t_end - t)
        try:
            Znew, corr = _step_packed(grid, Z, t, dt, cfg.nu, cfg.forcing)
            if not np.all(np.isfinite(Znew)):
                raise BlowupError(t + dt, "non-finite field values after step")
        except BlowupError as exc:
            termination = "blowup-detected"
            blowup_time = exc.t
            break
        Z = Znew
        t += dt
        steps += 1
        max_corr = max(max_corr, corr)

        at_end = t >= t_end - 1e-12
        if steps % cfg.diagnostics_interval == 0 or at_end:
            record = engine.observe(_unpack(grid, t, Z))
            records.append(record)
            max_du = max(max_du, record.div_drift_u)
            max_dF = max(max_dF, record.div_drift_F)
            if record.linf_gradu > cfg.gradu_ceiling:
                termination = "blowup-detected"
                blowup_time = t
                break
            if cfg.strict:
                violated = _strict_violation(record, records[0], cfg)
                if violated is not None:
                    termination = "certificate-violation-halt"
                    break
        if observer is not None and cfg.snapshot_interval > 0 and (
                steps % cfg.snapshot_interval == 0 or at_end):
            observer(_unpack(grid, t, Z))

    final = _unpack(grid, t, Z)
    return RunResult(
        final_state=final,
        records=records,
        termination=termination,
        steps=steps,
        max_div_drift_u=max_du,
        max_div_drift_F=max_dF,
        max_projection_correction=max_corr,
        blowup_time=blowup_time,
        violated_certificate=violated,
    )


# ---------------------------------------------------------------------------
# ready-made initial data

def taylor_green_state(grid: GridSpec) -> State:
    """Taylor–Green velocity with an identity deformation tensor."""
    x1, x2 = grid.mesh()
    u1 = np.sin(x1) * np.cos(x2)
    u2 = -np.cos(x1) * np.sin(x2)
    return State(0.0, VectorField.from_samples(grid, u1, u2), TensorField.identity(grid))


def steady_identity_state(grid: GridSpec) -> State:
    """The rest state u = 0, F = I (an exact steady solution)."""
    zero = np.zeros((grid.n, grid.n))
    return State(0.0, VectorField.from_samples(grid, zero, zero), TensorField.identity(grid))


def perturbed_identity_state(grid: GridSpec, amplitude: float = 0.1) -> State:
    """Taylor–Green velocity with F = I plus a divergence-free low-mode perturbation.

    Each column gains the perpendicular gradient (∂₂ψ, −∂₁ψ) of a fixed smooth
    stream function scaled by amplitude, so the column constraints hold exactly.
    """
    x1, x2 = grid.mesh()
    psi1 = amplitude * (np.sin(x1) * np.sin(x2) + 0.4 * np.cos(2.0 * x1 + x2))
    psi2 = amplitude * (np.cos(x1 + 2.0 * x2) - 0.6 * np.sin(x1) * np.cos(x2))
    base = taylor_green_state(grid)
    cols = []
    for k, psi in enumerate((psi1, psi2)):
        c = _to_coeffs(grid, psi)
        col1 = _to_samples(grid, grid.ik2 * c) + (1.0 if k == 0 else 0.0)
        col2 = _to_samples(grid, -grid.ik1 * c) + (1.0 if k == 1 else 0.0)
        cols.append(VectorField.from_samples(grid, col1, col2))
    return State(0.0, base.u, TensorField.from_columns(cols[0], cols[1]))
