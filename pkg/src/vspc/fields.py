"""Fields on the 2π-periodic square torus and their Fourier representations.

Fields are sampled on a uniform n×n lattice x_j = 2πj/n.  The forward
transform is normalized so the k = 0 coefficient is the field mean,

    f̂(k) = (1/n²) Σ_j f(x_j) e^{−i k·x_j},        f(x_j) = Σ_k f̂(k) e^{i k·x_j},

which gives the Parseval identity ‖f‖₂² = (2π)² Σ_k |f̂(k)|².  Wavenumbers are
integers in FFT layout; axis 0 of every data array is x₁ and axis 1 is x₂.

Field objects are immutable value types: every operation returns a new field
and the wrapped arrays are marked read-only, so fields can be shared freely
across threads.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

__all__ = [
    "TAU", "PHYSICAL", "SPECTRAL", "GridSpec", "ScalarField", "VectorField",
    "TensorField", "ConjugateSymmetryError", "to_spectral", "to_physical",
    "ensure_spectral", "ensure_physical", "dealias", "pointwise_product",
    "max_abs", "l2_norm", "write_snapshot", "read_snapshot",
    "SNAPSHOT_MAGIC", "SNAPSHOT_VERSION",
]

TAU = 2.0 * np.pi

PHYSICAL = "physical"
SPECTRAL = "spectral"


class ConjugateSymmetryError(RuntimeError):
    """Spectral coefficients no longer describe a real-valued field."""


@dataclass(frozen=True)
class GridSpec:
    """Uniform n×n sampling of the 2π-periodic torus (n a power of two ≥ 8)."""

    n: int
    length: float = TAU

    def __post_init__(self):
        if not isinstance(self.n, (int, np.integer)) or self.n < 8 or (self.n & (self.n - 1)) != 0:
            raise ValueError(f"grid size must be a power of two >= 8, got {self.n!r}")
        if abs(self.length - TAU) > 1e-15:
            raise ValueError("only the 2π-periodic torus is supported")

    @cached_property
    def x(self):
        """1D sample coordinates 2πj/n."""
        return TAU * np.arange(self.n) / self.n

    def mesh(self):
        """Coordinate arrays (X1, X2), axis 0 ↔ x₁."""
        return np.meshgrid(self.x, self.x, indexing="ij")

    @cached_property
    def k(self):
        """Integer wavenumbers along one axis, FFT layout (0, 1, …, −1)."""
        return np.rint(np.fft.fftfreq(self.n, d=1.0 / self.n)).astype(np.int64)

    @cached_property
    def k1(self):
        return self.k[:, None]

    @cached_property
    def k2(self):
        return self.k[None, :]

    @cached_property
    def k_sq(self):
        """|k|² on the full 2D lattice."""
        return (self.k1 ** 2 + self.k2 ** 2).astype(np.float64)

    @cached_property
    def inv_k_sq(self):
        """1/|k|² with the k = 0 entry set to zero (mean modes pass through)."""
        with np.errstate(divide="ignore"):
            inv = np.where(self.k_sq > 0, 1.0 / np.where(self.k_sq > 0, self.k_sq, 1.0), 0.0)
        return inv

    @cached_property
    def ik1(self):
        """∂/∂x₁ multiplier; the Nyquist column is zeroed so real fields stay real."""
        kd = self.k.astype(np.float64).copy()
        kd[self.n // 2] = 0.0
        return 1j * kd[:, None]

    @cached_property
    def ik2(self):
        kd = self.k.astype(np.float64).copy()
        kd[self.n // 2] = 0.0
        return 1j * kd[None, :]

    @property
    def dealias_limit(self):
        """Largest retained wavenumber under the 2/3 rule."""
        return self.n // 3

    @cached_property
    def dealias_mask(self):
        lim = self.dealias_limit
        return (np.abs(self.k1) <= lim) & (np.abs(self.k2) <= lim)

    @property
    def spacing(self):
        return TAU / self.n


def _frozen_array(values, dtype):
    arr = np.array(values, dtype=dtype, copy=True, order="C")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class ScalarField:
    """A single real field, stored either as samples or Fourier coefficients."""

    grid: GridSpec
    data: np.ndarray
    rep: str

    def __post_init__(self):
        if self.rep not in (PHYSICAL, SPECTRAL):
            raise ValueError(f"unknown representation {self.rep!r}")
        dtype = np.float64 if self.rep == PHYSICAL else np.complex128
        arr = np.asarray(self.data)
        if arr.shape != (self.grid.n, self.grid.n):
            raise ValueError(f"field shape {arr.shape} does not match grid n={self.grid.n}")
        object.__setattr__(self, "data", _frozen_array(arr, dtype))

    @classmethod
    def from_samples(cls, grid, values):
        return cls(grid, values, PHYSICAL)

    @classmethod
    def from_spectrum(cls, grid, coeffs):
        return cls(grid, coeffs, SPECTRAL)

    @property
    def is_physical(self):
        return self.rep == PHYSICAL

    @property
    def is_spectral(self):
        return self.rep == SPECTRAL


@dataclass(frozen=True, eq=False)
class VectorField:
    """Two scalar components sharing one grid and one representation."""

    components: tuple

    def __post_init__(self):
        c1, c2 = self.components
        if c1.grid != c2.grid:
            raise ValueError("vector components live on different grids")
        if c1.rep != c2.rep:
            raise ValueError("vector components mix representations")
        object.__setattr__(self, "components", (c1, c2))

    @classmethod
    def from_samples(cls, grid, v1, v2):
        return cls((ScalarField.from_samples(grid, v1), ScalarField.from_samples(grid, v2)))

    @classmethod
    def from_spectra(cls, grid, c1, c2):
        return cls((ScalarField.from_spectrum(grid, c1), ScalarField.from_spectrum(grid, c2)))

    @property
    def grid(self):
        return self.components[0].grid

    @property
    def rep(self):
        return self.components[0].rep


@dataclass(frozen=True, eq=False)
class TensorField:
    """2×2 tensor stored as two column vector fields F(·,1), F(·,2)."""

    columns: tuple

    def __post_init__(self):
        c1, c2 = self.columns
        if c1.grid != c2.grid:
            raise ValueError("tensor columns live on different grids")
        if c1.rep != c2.rep:
            raise ValueError("tensor columns mix representations")
        object.__setattr__(self, "columns", (c1, c2))

    @classmethod
    def from_columns(cls, col1, col2):
        return cls((col1, col2))

    @classmethod
    def identity(cls, grid):
        one = np.ones((grid.n, grid.n))
        zero = np.zeros((grid.n, grid.n))
        return cls((VectorField.from_samples(grid, one, zero),
                    VectorField.from_samples(grid, zero, one)))

    @property
    def grid(self):
        return self.columns[0].grid

    @property
    def rep(self):
        return self.columns[0].rep

    def entry(self, i, k):
        """Scalar entry F_{ik} (0-based row i, column k)."""
        return self.columns[k].components[i]


# ---------------------------------------------------------------------------
# transforms

def _check_symmetry(grid, coeffs):
    """Raise unless ĉ(−k) = conj(ĉ(k)) to within 1e-10 of the peak magnitude.

    The absolute floor keeps fields that are pure roundoff noise (all
    coefficients at machine scale) from tripping the relative test.
    """
    scale = float(np.max(np.abs(coeffs)))
    if scale == 0.0:
        return
    mirrored = np.roll(coeffs[::-1, ::-1], shift=1, axis=(0, 1))
    violation = float(np.max(np.abs(coeffs - np.conj(mirrored))))
    if violation > 1e-10 * scale + 1e-14:
        raise ConjugateSymmetryError(
            f"conjugate symmetry violated: residual {violation:.3e} against scale {scale:.3e}")


def _to_samples(grid, coeffs):
    """Checked inverse transform of one coefficient array; returns real samples."""
    _check_symmetry(grid, coeffs)
    w = np.fft.ifft2(coeffs) * (grid.n * grid.n)
    resid = float(np.max(np.abs(w.imag)))
    scale = max(float(np.max(np.abs(w.real))), 1.0)
    if resid > 1e-10 * scale:
        raise ConjugateSymmetryError(
            f"imaginary residue {resid:.3e} left after inverse transform")
    return np.ascontiguousarray(w.real)


def _to_coeffs(grid, samples):
    return np.fft.fft2(samples) / (grid.n * grid.n)


def to_spectral(f: ScalarField) -> ScalarField:
    """Forward transform; mean-normalized so f̂(0) is the field average."""
    if not f.is_physical:
        raise ValueError("to_spectral expects a physical-representation field")
    return ScalarField.from_spectrum(f.grid, _to_coeffs(f.grid, f.data))


def to_physical(f: ScalarField) -> ScalarField:
    """Inverse transform with a conjugate-symmetry check before discarding imag."""
    if not f.is_spectral:
        raise ValueError("to_physical expects a spectral-representation field")
    return ScalarField.from_samples(f.grid, _to_samples(f.grid, f.data))


def ensure_spectral(f: ScalarField) -> np.ndarray:
    """Coefficient array of f, transforming if needed."""
    return f.data if f.is_spectral else _to_coeffs(f.grid, f.data)


def ensure_physical(f: ScalarField) -> np.ndarray:
    """Sample array of f, transforming (checked) if needed."""
    return f.data if f.is_physical else _to_samples(f.grid, f.data)


def dealias(f: ScalarField) -> ScalarField:
    """Zero every coefficient with max(|k₁|, |k₂|) > n/3 (2/3-rule truncation)."""
    if not f.is_spectral:
        raise ValueError("dealias expects a spectral-representation field")
    return ScalarField.from_spectrum(f.grid, f.data * f.grid.dealias_mask)


def pointwise_product(f: ScalarField, g: ScalarField) -> ScalarField:
    """Pointwise product of two physical fields on the same grid."""
    if f.grid != g.grid:
        raise ValueError("pointwise product of fields on different grids")
    if not (f.is_physical and g.is_physical):
        raise ValueError("pointwise product expects physical-representation fields")
    return ScalarField.from_samples(f.grid, f.data * g.data)


def _scalar_parts(f):
    if isinstance(f, ScalarField):
        return (f,)
    if isinstance(f, VectorField):
        return f.components
    if isinstance(f, TensorField):
        return tuple(c for col in f.columns for c in col.components)
    raise TypeError(f"expected a field, got {type(f).__name__}")


def max_abs(f) -> float:
    """Grid sup-norm max_j |f(x_j)|, maximized over components."""
    worst = 0.0
    for part in _scalar_parts(f):
        if not part.is_physical:
            raise ValueError("max_abs expects a physical-representation field")
        worst = max(worst, float(np.max(np.abs(part.data))))
    return worst


def l2_norm(f) -> float:
    """L² norm on the torus (components summed in quadrature); spectral and
    physical routes agree by Parseval."""
    total = 0.0
    for part in _scalar_parts(f):
        if part.is_spectral:
            total += TAU ** 2 * float(np.sum(np.abs(part.data) ** 2))
        else:
            total += (TAU / part.grid.n) ** 2 * float(np.sum(part.data ** 2))
    return math.sqrt(total)


# ---------------------------------------------------------------------------
# snapshot container
#
# Layout: 32-byte header — magic "VSPC", format version u32, grid size u32,
# field count u32, time f64, 8 reserved bytes — followed by each field's
# row-major float64 samples.  All integers and floats are little-endian.

SNAPSHOT_MAGIC = b"VSPC"
SNAPSHOT_VERSION = 1
_HEADER = struct.Struct("<4sIIId8x")


def write_snapshot(path, time, fields: Sequence[ScalarField]):
    """Write physical samples of the given fields with a timestamped header."""
    if not fields:
        raise ValueError("snapshot needs at least one field")
    grid = fields[0].grid
    if any(f.grid != grid for f in fields):
        raise ValueError("snapshot fields live on different grids")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(SNAPSHOT_MAGIC, SNAPSHOT_VERSION, grid.n, len(fields), float(time)))
        for f in fields:
            fh.write(np.ascontiguousarray(ensure_physical(f), dtype="<f8").tobytes())


def read_snapshot(path):
    """Read a snapshot; returns (time, GridSpec, list of sample arrays)."""
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) < _HEADER.size:
            raise ValueError("snapshot header truncated")
        magic, version, n, count, time = _HEADER.unpack(header)
        if magic != SNAPSHOT_MAGIC:
            raise ValueError(f"bad snapshot magic {magic!r}")
        if version != SNAPSHOT_VERSION:
            raise ValueError(f"unsupported snapshot version {version}")
        grid = GridSpec(n)
        payload = fh.read()
    expected = count * n * n * 8
    if len(payload) != expected:
        raise ValueError(f"snapshot payload has {len(payload)} bytes, expected {expected}")
    fields = []
    for idx in range(count):
        chunk = payload[idx * n * n * 8:(idx + 1) * n * n * 8]
        fields.append(np.frombuffer(chunk, dtype="<f8").reshape(n, n).copy())
    return float(time), grid, fields
