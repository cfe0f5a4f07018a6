"""Closed-form reference solutions and manufactured-solution generators.

The centerpiece is the Zhao–Guo–Huang family of exact self-similar solutions
with spatially linear velocity and constant-in-space deformation,

    u(t, x) = a(t) (x₁, −x₂),     a(t) = f₀ / (1 − c f₀ t),   c = (α+β)/(α−β),
    F(t)    = diag(|1 − c f₀ t|^{−1/c}, |1 − c f₀ t|^{1/c}),
    p(t, x) = a(t)² (α x₁² − β x₂²) / (β − α),

which blows up at t* = 1/(c f₀) when c f₀ > 0 and makes ∫₀ᵀ ‖∇u‖_∞ dt
integrable in closed form — the ideal oracle for the BKM accumulator and the
blowup-time extrapolator.  The published display of the family carries two
typos (a velocity sign that breaks incompressibility and a reciprocal exponent
on F₂₂); the corrected fields above annihilate the equations to machine
precision, and the printed variant stays available behind fidelity="printed"
so the defect itself can be demonstrated.

The module also provides the spatially-linear ODE reduction
dF/dt = diag(a(t), −a(t)) F stepped with RK4 (used for temporal-order
measurements), synthetic diagnostics histories of the family, and manufactured
solutions with exact forcing for convergence studies of the full solver.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .fields import GridSpec, TensorField, VectorField, TAU
from .operators import _project_pair
from . import solver as _solver
from .diagnostics import DiagnosticsRecord

__all__ = [
    "ZghParams", "ZghFields", "ZghResidual", "PoleError", "zgh_fields",
    "zgh_residual", "zgh_bkm_integral", "zgh_amplitude", "zgh_synthetic_history",
    "LinearProfileState", "ode_reduce_step", "Manufactured", "manufactured",
]


class PoleError(ArithmeticError):
    """Evaluation at (or past) the blowup time of the family."""


@dataclass(frozen=True)
class ZghParams:
    """Exponents α ≠ ±β and amplitude f₀ of the self-similar family."""

    alpha: float
    beta: float
    f0: float

    def __post_init__(self):
        scale = max(abs(self.alpha), abs(self.beta), 1.0)
        if abs(self.alpha + self.beta) <= 1e-12 * scale:
            raise ValueError("parameters need alpha + beta != 0")
        if abs(self.alpha - self.beta) <= 1e-12 * scale:
            raise ValueError("parameters need alpha - beta != 0")
        for name, v in (("alpha", self.alpha), ("beta", self.beta), ("f0", self.f0)):
            if not math.isfinite(v):
                raise ValueError(f"{name} must be finite")

    @property
    def c(self) -> float:
        return (self.alpha + self.beta) / (self.alpha - self.beta)

    @property
    def blows_up(self) -> bool:
        return self.c * self.f0 > 0

    @property
    def t_star(self) -> float:
        """Blowup time 1/(c f₀); +inf when the amplitude never diverges."""
        if self.f0 == 0.0:
            return math.inf
        t = 1.0 / (self.c * self.f0)
        return t if t > 0 else math.inf


@dataclass(frozen=True)
class ZghFields:
    """Snapshot of the family: ∇u, F (both 2×2) and the quadratic-pressure coefficients."""

    t: float
    gradu: np.ndarray
    F: np.ndarray
    pressure_coeffs: np.ndarray   # p = coeffs[0] x₁² + coeffs[1] x₂²


@dataclass(frozen=True)
class ZghResidual:
    """Equation residuals at sample points: momentum rows, the (constant) deformation residual, div u."""

    momentum: np.ndarray     # (N, 2)
    deformation: np.ndarray  # (2, 2)
    div_u: float


def _signs_and_exponents(p: ZghParams, fidelity: str):
    c = p.c
    if fidelity == "corrected":
        return (1.0, -1.0), (-1.0 / c, 1.0 / c)
    if fidelity == "printed":
        return (1.0, 1.0), (-1.0 / c, c)
    raise ValueError(f"fidelity must be 'corrected' or 'printed', got {fidelity!r}")


def _denominator(p: ZghParams, t: float) -> float:
    g = 1.0 - p.c * p.f0 * t
    if abs(g) < 1e-14:
        raise PoleError(f"the family has its pole at t* = {p.t_star:.6g}; got t = {t:.6g}")
    if p.blows_up and t >= p.t_star:
        raise PoleError(f"t = {t:.6g} is past the blowup time t* = {p.t_star:.6g}")
    return g


def zgh_amplitude(p: ZghParams) -> Callable[[float], float]:
    """The scalar amplitude a(t) = f₀/(1 − c f₀ t) driving the whole family."""
    return lambda t: p.f0 / _denominator(p, t)


def zgh_fields(p: ZghParams, t: float, fidelity: str = "corrected") -> ZghFields:
    """Evaluate ∇u, F and the pressure coefficients at time t."""
    signs, exps = _signs_and_exponents(p, fidelity)
    g = _denominator(p, t)
    a = p.f0 / g
    gradu = np.diag([signs[0] * a, signs[1] * a])
    F = np.diag([abs(g) ** exps[0], abs(g) ** exps[1]])
    coeffs = a * a * np.array([p.alpha, -p.beta]) / (p.beta - p.alpha)
    return ZghFields(float(t), gradu, F, coeffs)


def zgh_residual(p: ZghParams, t: float, x, fidelity: str = "corrected") -> ZghResidual:
    """Insert the family into the inviscid equations at points x (shape (N, 2)).

    The corrected fields give machine-zero rows; the printed variant exhibits
    div u = 2a(t) and a nonzero F₂₂ transport residual for t > 0.
    """
    signs, exps = _signs_and_exponents(p, fidelity)
    pts = np.atleast_2d(np.asarray(x, dtype=np.float64))
    f = zgh_fields(p, t, fidelity)
    g = _denominator(p, t)
    a = p.f0 / g
    a_dot = p.c * a * a

    # momentum: ∂ₜu + (u·∇)u + ∇p  (ν = 0, F·∇F = 0 for constant F)
    momentum = np.empty_like(pts)
    for i, s in enumerate(signs):
        du_dt = s * pts[:, i] * a_dot
        adv = pts[:, i] * a * a          # u_i ∂_i u_i = (s_i a)² x_i
        grad_p = 2.0 * f.pressure_coeffs[i] * pts[:, i]
        momentum[:, i] = du_dt + adv + grad_p

    # deformation: dF/dt − (∇u) F, constant in space
    deformation = np.zeros((2, 2))
    for i, (s, e) in enumerate(zip(signs, exps)):
        dF_dt = -e * p.c * a * f.F[i, i]
        deformation[i, i] = dF_dt - s * a * f.F[i, i]

    div_u = (signs[0] + signs[1]) * a
    return ZghResidual(momentum, deformation, float(div_u))


def zgh_bkm_integral(p: ZghParams, T: float) -> float:
    """∫₀ᵀ ‖∇u(t)‖_∞ dt = −sign(f₀)/c · log(1 − c f₀ T), +inf once T ≥ t*."""
    if T < 0:
        raise ValueError("integration horizon must be >= 0")
    if p.f0 == 0.0:
        return 0.0
    if p.blows_up and T >= p.t_star:
        return math.inf
    return -math.copysign(1.0, p.f0) / p.c * math.log(1.0 - p.c * p.f0 * T)


# ---------------------------------------------------------------------------
# spatially-linear ODE reduction

@dataclass(frozen=True)
class LinearProfileState:
    """State of the reduction u = A(t)x: trace-free A, deformation F, time t."""

    A: np.ndarray
    F: np.ndarray
    t: float

    def __post_init__(self):
        A = np.asarray(self.A, dtype=np.float64)
        F = np.asarray(self.F, dtype=np.float64)
        if A.shape != (2, 2) or F.shape != (2, 2):
            raise ValueError("A and F must be 2×2 matrices")
        if abs(np.trace(A)) > 1e-12 * (1.0 + np.abs(A).max()):
            raise ValueError(f"A must be trace-free, got trace {np.trace(A):.3e}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "F", F)


def ode_reduce_step(state: LinearProfileState, a_of_t: Callable[[float], float],
                    dt: float) -> LinearProfileState:
    """One RK4 step of dF/dt = A(t) F with A(t) = diag(a(t), −a(t))."""
    if dt <= 0 or not math.isfinite(dt):
        raise ValueError(f"step size must be positive and finite, got {dt}")

    def gen(s):
        a = a_of_t(s)
        return np.diag([a, -a])

    t, F = state.t, state.F
    k1 = gen(t) @ F
    k2 = gen(t + 0.5 * dt) @ (F + 0.5 * dt * k1)
    k3 = gen(t + 0.5 * dt) @ (F + 0.5 * dt * k2)
    k4 = gen(t + dt) @ (F + dt * k3)
    F_new = F + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return LinearProfileState(gen(t + dt), F_new, t + dt)


def zgh_synthetic_history(p: ZghParams, times: Sequence[float]):
    """Diagnostics records of the family sampled at the given times.

    Only the transport-relevant entries are populated (‖∇u‖_∞ = |a|, the
    BKM trapezoid, and the Lᵖ norms of the constant-in-space F); the velocity
    profile a(t)(x₁,−x₂) does not live on the torus, so its norms are zero.
    """
    times = list(times)
    if len(times) < 1 or any(t2 <= t1 for t1, t2 in zip(times, times[1:])):
        raise ValueError("times must be strictly increasing and non-empty")
    records = []
    bkm = 0.0
    prev_t = None
    prev_gradu = None
    f0_fields = zgh_fields(p, times[0])
    fro0 = float(np.sqrt(np.sum(f0_fields.F ** 2)))
    e0 = (TAU * fro0) ** 2
    for t in times:
        f = zgh_fields(p, t)
        a_abs = abs(f.gradu[0, 0])
        if prev_t is not None:
            bkm += 0.5 * (t - prev_t) * (prev_gradu + a_abs)
        cols = [abs(f.F[0, 0]), abs(f.F[1, 1])]
        fro = float(np.sqrt(np.sum(f.F ** 2)))

        def lp(v, pexp):
            return v if pexp == math.inf else TAU ** (2.0 / pexp) * v

        records.append(DiagnosticsRecord(
            t=float(t), l2_u=0.0, l2_F=TAU * fro, h1_u=0.0, h1_F=0.0,
            h2_u=0.0, h2_F=0.0, h2s_gradu=0.0,
            lp2_F=lp(fro, 2), lp4_F=lp(fro, 4), lp6_F=lp(fro, 6), lpinf_F=fro,
            lp2_F_c1=lp(cols[0], 2), lp4_F_c1=lp(cols[0], 4),
            lp6_F_c1=lp(cols[0], 6), lpinf_F_c1=cols[0],
            lp2_F_c2=lp(cols[1], 2), lp4_F_c2=lp(cols[1], 4),
            lp6_F_c2=lp(cols[1], 6), lpinf_F_c2=cols[1],
            l6_gradF=0.0, linf_gradu=a_abs, linf_curl_u=0.0, linf_curl_F=0.0,
            l2_ut=0.0, bkm=bkm, visc=0.0, hs2_gradu_int=0.0, e0=e0,
            energy_residual=abs((TAU * fro) ** 2 - e0) / e0,
            div_drift_u=0.0, div_drift_F=0.0,
        ))
        prev_t = t
        prev_gradu = a_abs
    return records


# ---------------------------------------------------------------------------
# manufactured solutions
#
# A manufactured pair (u, F) = (λ_u(t)·U(x), I + λ_F(t)·G(x)) with div-free
# shapes is made an exact solution of the dealiased discrete system by the
# forcing  g_u = λ_u' U − P N_u(Z) + ν|k|² λ_u U,  g_F = λ_F' G − N_F(Z),
# where N_u, N_F are the solver's own dealiased nonlinear terms.  The solver
# then tracks the band-limited trajectory to time-integration accuracy, and
# the discrepancy against the full analytic fields is the spectral-truncation
# tail — the quantity spatial-convergence studies measure.

@dataclass(frozen=True)
class Manufactured:
    """A forced problem with known solution: initial state, forcing, analytic(t)."""

    initial: "_solver.State"
    forcing: "_solver.ForcingSpec"
    analytic: Callable[[float], "_solver.State"]


def _taylor_green_shapes(grid):
    x1, x2 = grid.mesh()
    n2 = grid.n * grid.n
    u = np.stack([np.fft.fft2(np.sin(x1) * np.cos(x2)) / n2,
                  np.fft.fft2(-np.cos(x1) * np.sin(x2)) / n2])
    G = np.zeros((4, grid.n, grid.n), dtype=np.complex128)
    return u, G


def _broadband_shapes(grid, band=24, decay=0.28, amp_u=0.05, amp_F=0.03):
    """Fixed random-phase trig polynomials with geometric spectral decay.

    The band intentionally exceeds the dealias limit of coarse grids so the
    truncation tail — hence the measured spatial error — shrinks geometrically
    with resolution.
    """
    rng = np.random.default_rng(774236011)

    def stream_modes(amp):
        ks = np.array([(k1, k2) for k1 in range(-band, band + 1)
                       for k2 in range(-band, band + 1)
                       if (k2 > 0) or (k2 == 0 and k1 > 0)])
        weights = amp * decay ** (np.abs(ks[:, 0]) + np.abs(ks[:, 1]))
        phases = rng.uniform(0.0, TAU, size=len(ks))
        return ks, 0.5 * weights * np.exp(1j * phases)

    def fold_perp_grad(ks, coeffs):
        """Exact grid samples (as spectra) of (∂₂ψ, −∂₁ψ) for the mode list."""
        n = grid.n
        out = np.zeros((2, n, n), dtype=np.complex128)
        for sign in (1, -1):
            kk = sign * ks
            cc = coeffs if sign == 1 else np.conj(coeffs)
            comp1 = 1j * kk[:, 1] * cc
            comp2 = -1j * kk[:, 0] * cc
            np.add.at(out[0], (kk[:, 0] % n, kk[:, 1] % n), comp1)
            np.add.at(out[1], (kk[:, 0] % n, kk[:, 1] % n), comp2)
        return out

    u = fold_perp_grad(*stream_modes(amp_u))
    G = np.concatenate([fold_perp_grad(*stream_modes(amp_F)),
                        fold_perp_grad(*stream_modes(amp_F))])
    return u, G


def _project_block(grid, block):
    out = block.copy()
    for i in range(0, block.shape[0], 2):
        out[i], out[i + 1] = _project_pair(grid, block[i], block[i + 1])
    return out


def _spectral_state(grid, t, U, Fblock):
    u = VectorField.from_spectra(grid, U[0], U[1])
    col1 = VectorField.from_spectra(grid, Fblock[0], Fblock[1])
    col2 = VectorField.from_spectra(grid, Fblock[2], Fblock[3])
    return _solver.State(float(t), u, TensorField.from_columns(col1, col2))


def manufactured(grid: GridSpec, nu: float, case: str = "broadband") -> Manufactured:
    """Build a manufactured problem on the given grid.

    case="taylor-green": u = e^{−2νt}·Taylor–Green, F = I.  The momentum
    forcing vanishes identically (Taylor–Green advection is a pure gradient
    and ∂ₜ balances νΔ), while the deformation forcing cancels the stretching
    of the identity columns.

    case="broadband": fixed band-limited random-phase shapes with smooth time
    modulation, for convergence measurement.
    """
    if case == "taylor-green":
        ushape, Gshape = _taylor_green_shapes(grid)
        lam_u = lambda t: math.exp(-2.0 * nu * t)
        dlam_u = lambda t: -2.0 * nu * math.exp(-2.0 * nu * t)
        lam_F = lambda t: 0.0
        dlam_F = lambda t: 0.0
    elif case == "broadband":
        ushape, Gshape = _broadband_shapes(grid)
        lam_u = lambda t: 1.0 + 0.5 * math.sin(1.1 * t)
        dlam_u = lambda t: 0.55 * math.cos(1.1 * t)
        lam_F = lambda t: 1.0 + 0.4 * math.sin(0.7 * t + 0.4)
        dlam_F = lambda t: 0.28 * math.cos(0.7 * t + 0.4)
    else:
        raise ValueError(f"unknown manufactured case {case!r}")

    mask = grid.dealias_mask
    u_d = _project_block(grid, ushape * mask)
    G_d = _project_block(grid, Gshape * mask)
    ident = np.zeros((4, grid.n, grid.n), dtype=np.complex128)
    ident[0, 0, 0] = 1.0
    ident[3, 0, 0] = 1.0
    ksq = grid.k_sq

    def packed(t):
        return np.concatenate([lam_u(t) * u_d, ident + lam_F(t) * G_d])

    @lru_cache(maxsize=8)
    def terms(t):
        Z = packed(t)
        Nu, NF = _solver._nonlinear(grid, Z)
        Nu[0], Nu[1] = _project_pair(grid, Nu[0], Nu[1])
        gu = dlam_u(t) * u_d - Nu + nu * ksq * (lam_u(t) * u_d)
        gF = dlam_F(t) * G_d - NF
        return gu, gF

    def g_u(t):
        gu, _ = terms(float(t))
        return VectorField.from_spectra(grid, gu[0], gu[1])

    def g_F(t):
        _, gF = terms(float(t))
        col1 = VectorField.from_spectra(grid, gF[0], gF[1])
        col2 = VectorField.from_spectra(grid, gF[2], gF[3])
        return TensorField.from_columns(col1, col2)

    def analytic(t):
        return _spectral_state(grid, t, lam_u(t) * ushape, ident + lam_F(t) * Gshape)

    initial = _spectral_state(grid, 0.0, lam_u(0.0) * u_d, ident + lam_F(0.0) * G_d)
    return Manufactured(initial, _solver.ForcingSpec(g_u, g_F), analytic)
