"""Runtime diagnostics and regularity certificates.

Every solver step can be condensed into a DiagnosticsRecord: norms of u and F,
the accumulated Beale–Kato–Majda integral ∫₀ᵗ ‖∇u‖_∞ ds, the viscous
dissipation 2ν∫₀ᵗ ‖∇u‖₂² ds, curl monitors, and constraint drifts.  Records
are plain rows of floats, round-trippable through CSV, and the certificate
functions below consume only records — so verdicts can be recomputed offline
from a diagnostics file and must agree with the in-run ones.

Conventions baked into the record fields:

* h1_* are homogeneous seminorms ‖∇·‖₂ and h2_* are ‖Δ·‖₂;
* linf_gradu is the grid sup of the pointwise operator norm (largest singular
  value) of the velocity Jacobian — with that choice the transport bound
  ‖F(·,k)(t)‖_p ≤ ‖F(·,k)(0)‖_p · exp(∫₀ᵗ ‖∇u‖_∞) holds with constant exactly 1
  column-wise for every p ∈ [2, ∞];
* linf_curl_F is the larger of the two column curls (Hu–Hynd style monitor);
* accumulated integrals use the trapezoid rule on the record times;
* l2_ut is a backward difference ‖(u(t) − u(t_prev))/Δt‖₂, zero on the first
  record.
"""

from __future__ import annotations

import csv
import dataclasses
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .fields import TAU, ensure_spectral

__all__ = [
    "DiagnosticsRecord", "DiagnosticsEngine", "CertificateReport", "BkmReport",
    "record", "energy_certificate", "lp_growth_certificate",
    "h1_growth_certificate", "bkm_report", "curl_report", "certificate_bundle",
    "relative_difference", "write_records_csv", "read_records_csv",
    "CSV_FIELDS",
]


@dataclass(frozen=True)
class DiagnosticsRecord:
    t: float
    l2_u: float
    l2_F: float
    h1_u: float
    h1_F: float
    h2_u: float
    h2_F: float
    h2s_gradu: float          # ‖∇u‖_{H²} (inhomogeneous), instantaneous
    lp2_F: float
    lp4_F: float
    lp6_F: float
    lpinf_F: float
    lp2_F_c1: float
    lp4_F_c1: float
    lp6_F_c1: float
    lpinf_F_c1: float
    lp2_F_c2: float
    lp4_F_c2: float
    lp6_F_c2: float
    lpinf_F_c2: float
    l6_gradF: float
    linf_gradu: float
    linf_curl_u: float
    linf_curl_F: float
    l2_ut: float
    bkm: float                # ∫₀ᵗ ‖∇u‖_∞ ds
    visc: float               # 2ν ∫₀ᵗ ‖∇u‖₂² ds
    hs2_gradu_int: float      # ∫₀ᵗ ‖∇u‖²_{H²} ds
    e0: float                 # initial ‖u‖₂² + ‖F‖₂²
    energy_residual: float    # |‖u‖₂² + ‖F‖₂² + visc − e0| / e0
    div_drift_u: float
    div_drift_F: float

    def lp_F(self, p) -> float:
        """Look up ‖F‖_p for p ∈ {2, 4, 6, ∞}."""
        return getattr(self, _lp_field(p, None))

    def lp_F_column(self, p, k) -> float:
        """Look up ‖F(·,k)‖_p for column k ∈ {1, 2}."""
        return getattr(self, _lp_field(p, k))


CSV_FIELDS = [f.name for f in dataclasses.fields(DiagnosticsRecord)]


def _lp_field(p, column):
    if p == 2:
        stem = "lp2_F"
    elif p == 4:
        stem = "lp4_F"
    elif p == 6:
        stem = "lp6_F"
    elif p == math.inf or p == "inf":
        stem = "lpinf_F"
    else:
        raise ValueError(f"recorded Lᵖ norms cover p in {{2, 4, 6, inf}}, got {p!r}")
    return stem if column is None else f"{stem}_c{column}"


def _samples(grid, c):
    return (np.fft.ifft2(c) * (grid.n * grid.n)).real


def _l2_from_spectra(coeff_list):
    return float(TAU * np.sqrt(sum(np.sum(np.abs(c) ** 2) for c in coeff_list)))


def _weighted_l2(grid, coeff_list, weight):
    return float(TAU * np.sqrt(sum(np.sum(weight * np.abs(c) ** 2) for c in coeff_list)))


def _lp_norm(grid, values, p):
    if p == math.inf:
        return float(np.max(values))
    h2 = (TAU / grid.n) ** 2
    return float((h2 * np.sum(values ** p)) ** (1.0 / p))


def record(state, prior: Optional[DiagnosticsRecord] = None, dt_since_prior: float = 0.0,
           nu: float = 0.0, prior_state=None) -> DiagnosticsRecord:
    """Condense a solver state into one diagnostics row.

    When prior is given, dt_since_prior must be the (positive) time elapsed
    since it; the accumulated integrals extend the prior's by one trapezoid.
    """
    if prior is not None and dt_since_prior <= 0.0:
        raise ValueError("dt_since_prior must be positive when a prior record is given")
    grid = state.grid
    cu = [ensure_spectral(c) for c in state.u.components]
    cF = [[ensure_spectral(state.F.entry(i, k)) for i in range(2)] for k in range(2)]
    flatF = [cF[k][i] for k in range(2) for i in range(2)]

    l2_u = _l2_from_spectra(cu)
    l2_F = _l2_from_spectra(flatF)
    ksq = grid.k_sq
    h1_u = _weighted_l2(grid, cu, ksq)
    h1_F = _weighted_l2(grid, flatF, ksq)
    h2_u = _weighted_l2(grid, cu, ksq ** 2)
    h2_F = _weighted_l2(grid, flatF, ksq ** 2)
    h2s_gradu = _weighted_l2(grid, cu, (1.0 + ksq) ** 2 * ksq)

    # physical-space quantities
    ik1, ik2 = grid.ik1, grid.ik2
    G = [[_samples(grid, ik1 * cu[i]), _samples(grid, ik2 * cu[i])] for i in range(2)]
    Fp = [[_samples(grid, cF[k][i]) for i in range(2)] for k in range(2)]
    dF = [[( _samples(grid, ik1 * cF[k][i]), _samples(grid, ik2 * cF[k][i]))
           for i in range(2)] for k in range(2)]

    col_sq = [Fp[k][0] ** 2 + Fp[k][1] ** 2 for k in range(2)]
    fro = np.sqrt(col_sq[0] + col_sq[1])
    col = [np.sqrt(s) for s in col_sq]

    lp = {p: _lp_norm(grid, fro, p) for p in (2, 4, 6, math.inf)}
    lp_c = [{p: _lp_norm(grid, col[k], p) for p in (2, 4, 6, math.inf)} for k in range(2)]

    gradF_sq = sum(d[0] ** 2 + d[1] ** 2 for k in range(2) for d in (dF[k][0], dF[k][1]))
    l6_gradF = _lp_norm(grid, np.sqrt(gradF_sq), 6)

    # sup of the Jacobian operator norm: σ_max² = (T + √(T² − 4 det²))/2
    T = G[0][0] ** 2 + G[0][1] ** 2 + G[1][0] ** 2 + G[1][1] ** 2
    detG = G[0][0] * G[1][1] - G[0][1] * G[1][0]
    disc = np.sqrt(np.maximum(T ** 2 - 4.0 * detG ** 2, 0.0))
    linf_gradu = float(np.sqrt(np.max(0.5 * (T + disc))))

    linf_curl_u = float(np.max(np.abs(G[1][0] - G[0][1])))
    linf_curl_F = max(
        float(np.max(np.abs(dF[k][1][0] - dF[k][0][1]))) for k in range(2))
    div_drift_u = float(np.max(np.abs(G[0][0] + G[1][1])))
    div_drift_F = max(
        float(np.max(np.abs(dF[k][0][0] + dF[k][1][1]))) for k in range(2))

    if prior is None:
        bkm = 0.0
        visc = 0.0
        hs2_int = 0.0
        e0 = l2_u ** 2 + l2_F ** 2
        l2_ut = 0.0
    else:
        dt = dt_since_prior
        bkm = prior.bkm + 0.5 * dt * (prior.linf_gradu + linf_gradu)
        visc = prior.visc + nu * dt * (prior.h1_u ** 2 + h1_u ** 2)
        hs2_int = prior.hs2_gradu_int + 0.5 * dt * (prior.h2s_gradu ** 2 + h2s_gradu ** 2)
        e0 = prior.e0
        if prior_state is not None:
            pu = [ensure_spectral(c) for c in prior_state.u.components]
            l2_ut = _l2_from_spectra([(cu[i] - pu[i]) / dt for i in range(2)])
        else:
            l2_ut = 0.0

    energy_now = l2_u ** 2 + l2_F ** 2
    energy_residual = abs(energy_now + visc - e0) / e0 if e0 > 0 else 0.0

    return DiagnosticsRecord(
        t=float(state.t), l2_u=l2_u, l2_F=l2_F, h1_u=h1_u, h1_F=h1_F,
        h2_u=h2_u, h2_F=h2_F, h2s_gradu=h2s_gradu,
        lp2_F=lp[2], lp4_F=lp[4], lp6_F=lp[6], lpinf_F=lp[math.inf],
        lp2_F_c1=lp_c[0][2], lp4_F_c1=lp_c[0][4], lp6_F_c1=lp_c[0][6],
        lpinf_F_c1=lp_c[0][math.inf],
        lp2_F_c2=lp_c[1][2], lp4_F_c2=lp_c[1][4], lp6_F_c2=lp_c[1][6],
        lpinf_F_c2=lp_c[1][math.inf],
        l6_gradF=l6_gradF, linf_gradu=linf_gradu,
        linf_curl_u=linf_curl_u, linf_curl_F=linf_curl_F, l2_ut=l2_ut,
        bkm=bkm, visc=visc, hs2_gradu_int=hs2_int, e0=e0,
        energy_residual=energy_residual,
        div_drift_u=div_drift_u, div_drift_F=div_drift_F,
    )


class DiagnosticsEngine:
    """Stateful wrapper around record() that threads accumulators through a run."""

    def __init__(self, nu: float):
        self.nu = float(nu)
        self._prior = None
        self._prior_state = None

    def observe(self, state) -> DiagnosticsRecord:
        dt = 0.0 if self._prior is None else state.t - self._prior.t
        rec = record(state, prior=self._prior, dt_since_prior=dt,
                     nu=self.nu, prior_state=self._prior_state)
        self._prior = rec
        self._prior_state = state
        return rec


def curl_report(state):
    """(‖∇×u‖_∞, max column ‖∇×F(·,k)‖_∞) for a single state."""
    rec = record(state)
    return rec.linf_curl_u, rec.linf_curl_F


# ---------------------------------------------------------------------------
# certificates

@dataclass(frozen=True)
class CertificateReport:
    """Outcome of one certificate: margin is bound minus observed (normalized)."""

    name: str
    satisfied: bool
    margin: float
    worst_t: float
    applicable: bool = True
    fitted_constant: Optional[float] = None


@dataclass(frozen=True)
class BkmReport:
    """Accumulated ∫‖∇u‖_∞ and, when growth is monotone, a blowup-time estimate."""

    integral: float
    t_star_estimate: Optional[float]
    window: int


def energy_certificate(records: Sequence[DiagnosticsRecord], tolerance: float = 1e-5,
                       applicable: bool = True) -> CertificateReport:
    """Check |‖u‖₂² + ‖F‖₂² + 2ν∫‖∇u‖₂² − E₀| / E₀ ≤ tolerance at every record.

    Marked not-applicable (and trivially satisfied) for forced runs, where the
    identity does not hold.
    """
    if not records:
        raise ValueError("energy certificate needs at least one record")
    if not applicable:
        return CertificateReport("energy-identity", True, 0.0, records[0].t, applicable=False)
    worst = -1.0
    worst_t = records[0].t
    for rec in records:
        e_now = rec.l2_u ** 2 + rec.l2_F ** 2
        resid = abs(e_now + rec.visc - rec.e0) / rec.e0 if rec.e0 > 0 else 0.0
        if resid > worst:
            worst = resid
            worst_t = rec.t
    return CertificateReport("energy-identity", worst <= tolerance, tolerance - worst, worst_t)


def lp_growth_certificate(records: Sequence[DiagnosticsRecord], p,
                          tolerance: float = 1e-7) -> CertificateReport:
    """Column-wise transport bound log‖F(·,k)(t)‖_p − log‖F(·,k)(0)‖_p ≤ ∫₀ᵗ‖∇u‖_∞.

    The margin is the smallest log-slack over both columns and all records
    after the first; satisfied when it stays above −tolerance.
    """
    if not records:
        raise ValueError("Lᵖ growth certificate needs at least one record")
    p_val = math.inf if p in ("inf", math.inf) else p
    name = f"lp-growth-p{'inf' if p_val == math.inf else p_val}"
    margin = math.inf
    worst_t = records[0].t
    first = records[0]
    for rec in records[1:]:
        for k in (1, 2):
            norm0 = first.lp_F_column(p_val, k)
            norm_t = rec.lp_F_column(p_val, k)
            if norm0 <= 0.0:
                if norm_t > 1e-13:
                    return CertificateReport(name, False, -math.inf, rec.t)
                continue
            slack = (math.log(norm0) + rec.bkm) - math.log(norm_t)
            if slack < margin:
                margin = slack
                worst_t = rec.t
    if margin == math.inf:  # degenerate history (single record or zero columns)
        margin = 0.0
    return CertificateReport(name, margin >= -tolerance, margin, worst_t)


def h1_growth_certificate(records: Sequence[DiagnosticsRecord]) -> CertificateReport:
    """Fit the Gronwall envelope ‖∇u‖₂² + ‖∇F‖₂² ≤ H₀² exp(C_obs ∫‖∇u‖_∞).

    C_obs is the smallest constant making the bound hold over the whole record
    history (clamped at 0 for decaying flows); the certificate is satisfied
    when C_obs is finite.  Stability of C_obs under grid refinement is what
    certifies the envelope — compare fitted_constant across runs.
    """
    if not records:
        raise ValueError("H¹ certificate needs at least one record")
    first = records[0]
    h0 = first.h1_u ** 2 + first.h1_F ** 2
    c_obs = 0.0
    worst_t = first.t
    for rec in records[1:]:
        h_now = rec.h1_u ** 2 + rec.h1_F ** 2
        if rec.bkm <= 1e-14:
            continue
        if h0 <= 0.0:
            if h_now > 1e-20:
                c_obs = math.inf
                worst_t = rec.t
                break
            continue
        cand = math.log(h_now / h0) / rec.bkm
        if cand > c_obs:
            c_obs = cand
            worst_t = rec.t
    return CertificateReport("h1-gronwall", math.isfinite(c_obs), c_obs, worst_t,
                             fitted_constant=c_obs)


def bkm_report(records: Sequence[DiagnosticsRecord], window: int = 10) -> BkmReport:
    """Report ∫₀ᵗ‖∇u‖_∞ and extrapolate a blowup time from 1/‖∇u‖_∞ when it shrinks.

    The estimate fits a line to 1/‖∇u‖_∞ over the last `window` records and
    returns its root; it is None unless ‖∇u‖_∞ grew strictly monotonically
    there and the fitted line actually crosses zero ahead of the data.
    """
    if len(records) < 3:
        raise ValueError("blowup-time extrapolation needs at least 3 records")
    w = min(window, len(records))
    seg = records[-w:]
    vals = np.array([r.linf_gradu for r in seg])
    times = np.array([r.t for r in seg])
    integral = records[-1].bkm
    if np.any(vals <= 0.0) or np.any(np.diff(vals) <= 0.0):
        return BkmReport(integral, None, w)
    slope, intercept = np.polyfit(times, 1.0 / vals, 1)
    if slope >= 0.0:
        return BkmReport(integral, None, w)
    root = -intercept / slope
    if root <= times[-1]:
        return BkmReport(integral, None, w)
    return BkmReport(integral, float(root), w)


def relative_difference(a: float, b: float) -> float:
    """|a − b| / max(|a|, |b|), zero when both vanish."""
    scale = max(abs(a), abs(b))
    return abs(a - b) / scale if scale > 0 else 0.0


def certificate_bundle(records: Sequence[DiagnosticsRecord], forced: bool = False,
                       energy_tolerance: float = 1e-5, lp_tolerance: float = 1e-7,
                       divergence_tolerance: float = 1e-8) -> dict:
    """All certificates plus the BKM report as one JSON-ready dictionary.

    Consumes records only, so re-running it on a diagnostics CSV reproduces the
    in-run verdicts exactly.
    """
    reports = [energy_certificate(records, energy_tolerance, applicable=not forced)]
    for p in (2, 4, 6, math.inf):
        reports.append(lp_growth_certificate(records, p, lp_tolerance))
    reports.append(h1_growth_certificate(records))
    worst_div = max(max(r.div_drift_u, r.div_drift_F) for r in records)
    worst_div_t = max(records, key=lambda r: max(r.div_drift_u, r.div_drift_F)).t
    reports.append(CertificateReport("divergence-constraint",
                                     worst_div <= divergence_tolerance,
                                     divergence_tolerance - worst_div, worst_div_t))
    if len(records) >= 3:
        bkm = bkm_report(records)
        bkm_dict = {"integral": bkm.integral, "t_star_estimate": bkm.t_star_estimate,
                    "window": bkm.window}
    else:
        bkm_dict = {"integral": records[-1].bkm, "t_star_estimate": None,
                    "window": len(records)}
    return {
        "certificates": [dataclasses.asdict(r) for r in reports],
        "bkm": bkm_dict,
    }


# ---------------------------------------------------------------------------
# CSV round trip (full float precision via repr)

def write_records_csv(path, records: Sequence[DiagnosticsRecord]):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_FIELDS)
        for rec in records:
            writer.writerow([repr(getattr(rec, name)) for name in CSV_FIELDS])


def read_records_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError("diagnostics CSV is empty") from None
        if header != CSV_FIELDS:
            raise ValueError("diagnostics CSV header does not match the record schema")
        records = []
        for row in reader:
            if len(row) != len(CSV_FIELDS):
                raise ValueError(f"diagnostics CSV row has {len(row)} columns, "
                                 f"expected {len(CSV_FIELDS)}")
            try:
                values = [float(v) for v in row]
            except ValueError as exc:
                raise ValueError(f"diagnostics CSV has a non-numeric entry: {exc}") from None
            records.append(DiagnosticsRecord(**dict(zip(CSV_FIELDS, values))))
    return records
