"""Spectral differential and singular-integral operators on the torus.

Derivatives are exact Fourier multipliers ik (Nyquist column zeroed).  The
Leray projection P = I − ∇Δ⁻¹∇· acts mode-wise as v̂ − k(k·v̂)/|k|² and leaves
the k = 0 mode untouched, so mean flow passes through.  Λˢ denotes the
fractional Laplacian power |k|ˢ; the inhomogeneous variant J ˢ = (1−Δ)^{s/2}
uses (1+|k|²)^{s/2}.

Quadratic terms (convection, the elastic stress divergence, commutator
products) are always formed in physical space from dealiased inputs and the
result is dealiased again, so retained modes carry no aliasing error.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .fields import (
    TAU,
    GridSpec,
    ScalarField,
    TensorField,
    VectorField,
    ensure_spectral,
    _to_samples,
    _to_coeffs,
)

__all__ = [
    "SobolevOrder", "CommutatorReport", "ConstraintWarning",
    "InequalityViolationError", "gradient", "divergence", "curl", "laplacian",
    "leray_project", "pressure_gradient", "convective_term", "lambda_s",
    "sobolev_norm", "commutator_check",
]


class ConstraintWarning(UserWarning):
    """A differential constraint (e.g. a divergence-free condition) drifted past tolerance."""


class InequalityViolationError(RuntimeError):
    """An inequality that should hold analytically failed numerically."""


@dataclass(frozen=True)
class SobolevOrder:
    """Order s ≥ 0 of a Sobolev multiplier; inhomogeneous selects (1+|k|²)^{s/2}."""

    s: float
    inhomogeneous: bool = False

    def __post_init__(self):
        if not np.isfinite(self.s) or self.s < 0:
            raise ValueError(f"Sobolev order must be finite and >= 0, got {self.s}")


def _order(s) -> SobolevOrder:
    return s if isinstance(s, SobolevOrder) else SobolevOrder(float(s))


def _wrap_like(template: ScalarField, coeffs) -> ScalarField:
    """Return coeffs as a field in the same representation as template."""
    grid = template.grid
    if template.is_physical:
        return ScalarField.from_samples(grid, _to_samples(grid, coeffs))
    return ScalarField.from_spectrum(grid, coeffs)


def gradient(f):
    """∇f for a scalar, or the Jacobian (entry (i,j) = ∂ⱼfᵢ) for a vector.

    The result matches the input representation.
    """
    if isinstance(f, VectorField):
        rows = [gradient(c) for c in f.components]
        col = lambda j: VectorField((rows[0].components[j], rows[1].components[j]))
        return TensorField.from_columns(col(0), col(1))
    grid = f.grid
    c = ensure_spectral(f)
    return VectorField((_wrap_like(f, grid.ik1 * c), _wrap_like(f, grid.ik2 * c)))


def divergence(v: VectorField) -> ScalarField:
    """∇·v; the result matches the input representation."""
    grid = v.grid
    c1 = ensure_spectral(v.components[0])
    c2 = ensure_spectral(v.components[1])
    return _wrap_like(v.components[0], grid.ik1 * c1 + grid.ik2 * c2)


def curl(v: VectorField) -> ScalarField:
    """Scalar curl ∂₁v₂ − ∂₂v₁ of a planar vector field."""
    grid = v.grid
    c1 = ensure_spectral(v.components[0])
    c2 = ensure_spectral(v.components[1])
    return _wrap_like(v.components[0], grid.ik1 * c2 - grid.ik2 * c1)


def laplacian(f: ScalarField) -> ScalarField:
    """Δf via the −|k|² multiplier."""
    return _wrap_like(f, -f.grid.k_sq * ensure_spectral(f))


def _project_pair(grid: GridSpec, c1, c2):
    """Leray-project a spectral component pair; returns new pair.

    Uses Nyquist-zeroed wavenumbers (the Nyquist mode maps to itself under
    k → −k, so projecting it would break conjugate symmetry); those modes pass
    through like the mean mode.  Dealiased fields are unaffected.
    """
    k1 = grid.ik1.imag
    k2 = grid.ik2.imag
    ksq = k1 * k1 + k2 * k2
    inv = np.zeros_like(ksq)
    nz = ksq > 0
    inv[nz] = 1.0 / ksq[nz]
    div = k1 * c1 + k2 * c2          # k·v̂ (factor i omitted, cancels)
    corr = div * inv
    return c1 - k1 * corr, c2 - k2 * corr


def leray_project(v: VectorField) -> VectorField:
    """P v = v − ∇Δ⁻¹(∇·v); idempotent, self-adjoint, keeps the mean mode."""
    grid = v.grid
    c1 = ensure_spectral(v.components[0])
    c2 = ensure_spectral(v.components[1])
    p1, p2 = _project_pair(grid, c1, c2)
    return VectorField((_wrap_like(v.components[0], p1), _wrap_like(v.components[1], p2)))


def convective_term(v: VectorField, w: VectorField) -> VectorField:
    """(v·∇)w with dealiased physical-space products; returned spectral."""
    if v.grid != w.grid:
        raise ValueError("convective term of fields on different grids")
    grid = v.grid
    mask = grid.dealias_mask
    vs = [ensure_spectral(c) * mask for c in v.components]
    ws = [ensure_spectral(c) * mask for c in w.components]
    vp = [_to_samples(grid, c) for c in vs]
    out = []
    for cw in ws:
        d1 = _to_samples(grid, grid.ik1 * cw)
        d2 = _to_samples(grid, grid.ik2 * cw)
        out.append(_to_coeffs(grid, vp[0] * d1 + vp[1] * d2) * mask)
    return VectorField.from_spectra(grid, out[0], out[1])


def pressure_gradient(u: VectorField, F) -> VectorField:
    """∇p recovered from the Riesz-transform identity ∇p = (I−P)(F·∇F − u·∇u).

    Warns (without failing) when u or the columns of F are not divergence-free
    to 1e-8; the result is always a mean-zero gradient field.
    """
    grid = u.grid
    for name, vec in (("u", u), ("F column 1", F.columns[0]), ("F column 2", F.columns[1])):
        drift = _div_max(vec)
        if drift > 1e-8:
            warnings.warn(f"{name} has divergence sup-norm {drift:.3e} > 1e-8", ConstraintWarning)
    adv = convective_term(u, u)
    n1 = np.zeros((grid.n, grid.n), dtype=np.complex128)
    n2 = np.zeros_like(n1)
    for col in F.columns:
        el = convective_term(col, col)
        n1 += ensure_spectral(el.components[0])
        n2 += ensure_spectral(el.components[1])
    n1 -= ensure_spectral(adv.components[0])
    n2 -= ensure_spectral(adv.components[1])
    k1, k2 = grid.k1, grid.k2
    coef = (k1 * n1 + k2 * n2) * grid.inv_k_sq
    return VectorField((_wrap_like(u.components[0], k1 * coef),
                        _wrap_like(u.components[1], k2 * coef)))


def _div_max(v: VectorField) -> float:
    grid = v.grid
    c = grid.ik1 * ensure_spectral(v.components[0]) + grid.ik2 * ensure_spectral(v.components[1])
    return float(np.max(np.abs(_to_samples(grid, c))))


def lambda_s(f: ScalarField, s) -> ScalarField:
    """Λˢ f = |k|ˢ f̂ (zero at k = 0), or (1+|k|²)^{s/2} f̂ for the inhomogeneous order."""
    order = _order(s)
    grid = f.grid
    c = ensure_spectral(f)
    if order.inhomogeneous:
        mult = (1.0 + grid.k_sq) ** (order.s / 2.0)
    else:
        mult = np.zeros_like(grid.k_sq)
        nz = grid.k_sq > 0
        mult[nz] = grid.k_sq[nz] ** (order.s / 2.0)
    return _wrap_like(f, mult * c)


def sobolev_norm(f: ScalarField, s) -> float:
    """Inhomogeneous Sobolev norm ((2π)² Σ_k (1+|k|²)ˢ |f̂(k)|²)^{1/2}."""
    order = _order(s)
    c = ensure_spectral(f)
    return float(TAU * np.sqrt(np.sum((1.0 + f.grid.k_sq) ** order.s * np.abs(c) ** 2)))


# ---------------------------------------------------------------------------
# Kato–Ponce commutator check
#
# For band-limited f, g the commutator Λˢ(fg) − fΛˢg is evaluated exactly on a
# padded 2n grid (products of n/3-band inputs stay below the padded Nyquist),
# and compared against ‖∇f‖_∞‖Λ^{s−1}g‖₂ + ‖Λˢf‖₂‖g‖_∞.

@dataclass(frozen=True)
class CommutatorReport:
    """lhs = ‖Λˢ(fg) − fΛˢg‖₂, rhs = the product bound, ratio = lhs/rhs."""

    s: float
    lhs: float
    rhs: float
    ratio: float


def _pad_spectrum(coeffs, n, m):
    """Embed an n-grid coefficient array in an m-grid one (m > n), same modes."""
    shifted = np.fft.fftshift(coeffs)
    out = np.zeros((m, m), dtype=np.complex128)
    lo = (m - n) // 2
    out[lo:lo + n, lo:lo + n] = shifted
    return np.fft.ifftshift(out)


def _require_band_limited(grid, coeffs, what):
    scale = float(np.max(np.abs(coeffs)))
    if scale == 0.0:
        return
    out_of_band = float(np.max(np.abs(coeffs * ~grid.dealias_mask)))
    if out_of_band > 1e-12 * scale:
        raise ValueError(f"{what} carries energy beyond the n/3 dealias band")


def commutator_check(s, f: ScalarField, g: ScalarField) -> CommutatorReport:
    """Evaluate the Kato–Ponce commutator inequality at (p₁,p₂,p₃,p₄) = (∞,2,2,∞)."""
    order = _order(s)
    if order.s <= 0:
        raise ValueError("commutator check needs s > 0")
    if f.grid != g.grid:
        raise ValueError("commutator operands live on different grids")
    grid = f.grid
    cf = ensure_spectral(f)
    cg = ensure_spectral(g)
    _require_band_limited(grid, cf, "f")
    _require_band_limited(grid, cg, "g")

    n = grid.n
    big = GridSpec(2 * n)
    pf = _pad_spectrum(cf, n, big.n)
    pg = _pad_spectrum(cg, n, big.n)
    fs = _to_samples(big, pf)
    gs = _to_samples(big, pg)

    def lam(coeffs, order_s):
        mult = np.zeros_like(big.k_sq)
        nz = big.k_sq > 0
        mult[nz] = big.k_sq[nz] ** (order_s / 2.0)
        return mult * coeffs

    prod = _to_coeffs(big, fs * gs)
    lhs_coeffs = lam(prod, order.s) - _to_coeffs(big, fs * _to_samples(big, lam(pg, order.s)))
    lhs = float(TAU * np.sqrt(np.sum(np.abs(lhs_coeffs) ** 2)))

    grad_f_sup = float(np.max(np.hypot(_to_samples(big, big.ik1 * pf),
                                       _to_samples(big, big.ik2 * pf))))
    lam_g = float(TAU * np.sqrt(np.sum(np.abs(lam(pg, order.s - 1.0)) ** 2)))
    lam_f = float(TAU * np.sqrt(np.sum(np.abs(lam(pf, order.s)) ** 2)))
    g_sup = float(np.max(np.abs(gs)))
    rhs = grad_f_sup * lam_g + lam_f * g_sup

    if rhs == 0.0:
        if lhs > 1e-10:
            raise InequalityViolationError(
                f"commutator bound degenerate: rhs = 0 with lhs = {lhs:.3e}")
        return CommutatorReport(order.s, lhs, rhs, 0.0)
    return CommutatorReport(order.s, lhs, rhs, lhs / rhs)
