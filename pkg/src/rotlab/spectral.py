"""
Uniform-grid fields on the 2*pi-periodic torus with Fourier differentiation.

Arrays are indexed ``a[i, j]`` at ``(x_i, y_j) = (i*dx, j*dx)``, so axis 0 is
``x`` and axis 1 is ``y``.  Spectral coefficients use numpy's FFT ordering
with the Nyquist index carried as ``+n/2``; the integer wavenumbers per axis
are therefore ``-n/2+1, ..., n/2``.

The :class:`TorusGrid` methods work on bare arrays and are what the solvers
call in their inner loops.  The module-level operations take
:class:`ScalarField` / :class:`VectorField` and validate their inputs.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from rotlab.errors import GridMismatchError, NonFiniteFieldError

SNAPSHOT_MAGIC = b"RTLB"
SNAPSHOT_VERSION = 1
_HEADER = struct.Struct("<4sIII")


@dataclass(frozen=True)
class TorusGrid:
    """Square grid of ``n x n`` points on ``[0, 2*pi)^2``."""

    n: int

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 16 or self.n % 2:
            raise ValueError(f"grid size must be an even integer >= 16, got {self.n!r}")

    @property
    def dx(self) -> float:
        return 2.0 * np.pi / self.n

    @cached_property
    def x(self) -> np.ndarray:
        return np.arange(self.n) * self.dx

    @cached_property
    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return tuple(np.meshgrid(self.x, self.x, indexing="ij"))

    @cached_property
    def k(self) -> np.ndarray:
        k = np.fft.fftfreq(self.n, 1.0 / self.n)
        k[self.n // 2] = self.n // 2
        return k

    def wavenumbers(self) -> np.ndarray:
        return np.arange(-self.n // 2 + 1, self.n // 2 + 1)

    @cached_property
    def _ik(self) -> tuple[np.ndarray, np.ndarray]:
        # Nyquist derivative is sign-ambiguous on an even grid: zero it.
        k = self.k.copy()
        k[self.n // 2] = 0.0
        return 1j * k[:, None], 1j * k[None, :]

    @cached_property
    def k2(self) -> np.ndarray:
        return self.k[:, None] ** 2 + self.k[None, :] ** 2

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        ak = np.abs(self.k)
        return np.maximum(ak[:, None], ak[None, :]) <= self.n / 3.0

    # -- array kernels -----------------------------------------------------

    def fft(self, a):
        return np.fft.fft2(a)

    def ifft(self, a_hat):
        return np.fft.ifft2(a_hat).real

    def diff(self, a, axis):
        ikx, iky = self._ik
        mult = ikx if axis == 0 else iky
        return np.fft.ifft2(mult * np.fft.fft2(a)).real

    def grad(self, a):
        """Return ``(da/dx, da/dy)`` from one forward transform."""
        a_hat = np.fft.fft2(a)
        ikx, iky = self._ik
        return np.fft.ifft2(ikx * a_hat).real, np.fft.ifft2(iky * a_hat).real

    def div(self, u):
        ikx, iky = self._ik
        return np.fft.ifft2(ikx * np.fft.fft2(u[0]) + iky * np.fft.fft2(u[1])).real

    def jacobian(self, u):
        """Velocity gradient ``M[i, j] = d u_i / d x_j``, shape ``(2, 2, n, n)``."""
        g0 = self.grad(u[0])
        g1 = self.grad(u[1])
        return np.array([[g0[0], g0[1]], [g1[0], g1[1]]])

    def dealias(self, a):
        return np.fft.ifft2(self.dealias_mask * np.fft.fft2(a)).real

    def quadrature(self, a):
        """Trapezoidal (spectrally exact) integral over the torus."""
        return float(np.sum(a)) * self.dx**2

    def coefficients(self, a):
        """Normalized discrete transform; entry ``[0, 0]`` is the mean."""
        return np.fft.fft2(a) / self.n**2


@dataclass(frozen=True, eq=False)
class ScalarField:
    grid: TorusGrid
    values: np.ndarray

    def __post_init__(self):
        n = self.grid.n
        v = np.array(self.values, dtype=float)
        if v.size != n * n:
            raise GridMismatchError(f"expected {n * n} samples, got {v.size}")
        v = v.reshape(n, n)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, grid, func):
        X, Y = grid.mesh
        return cls(grid, np.broadcast_to(func(X, Y), X.shape))

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.values)))


@dataclass(frozen=True, eq=False)
class VectorField:
    x: ScalarField
    y: ScalarField

    def __post_init__(self):
        if self.x.grid != self.y.grid:
            raise GridMismatchError("vector components live on different grids")

    @property
    def grid(self) -> TorusGrid:
        return self.x.grid

    @property
    def values(self) -> np.ndarray:
        return np.stack([self.x.values, self.y.values])

    @classmethod
    def from_array(cls, grid, a):
        return cls(ScalarField(grid, a[0]), ScalarField(grid, a[1]))

    @classmethod
    def from_function(cls, grid, func):
        X, Y = grid.mesh
        ux, uy = func(X, Y)
        return cls(
            ScalarField(grid, np.broadcast_to(ux, X.shape)),
            ScalarField(grid, np.broadcast_to(uy, X.shape)),
        )


def require_finite(values):
    values = np.asarray(values)
    bad = ~np.isfinite(values)
    if bad.any():
        idx = np.unravel_index(int(np.argmax(bad)), values.shape)
        raise NonFiniteFieldError(tuple(int(i) for i in idx), float(values[idx]))


def _axis_index(axis):
    if axis in (0, "x"):
        return 0
    if axis in (1, "y"):
        return 1
    raise ValueError(f"axis must be 'x' or 'y', got {axis!r}")


def spectral_derivative(f: ScalarField, axis) -> ScalarField:
    """Partial derivative along ``axis`` ('x' or 'y') by multiplication with ``ik``."""
    require_finite(f.values)
    return ScalarField(f.grid, f.grid.diff(f.values, _axis_index(axis)))


def dealias(f: ScalarField) -> ScalarField:
    """Two-thirds rule: drop modes with ``max(|k1|, |k2|) > n/3``."""
    return ScalarField(f.grid, f.grid.dealias(f.values))


def sobolev_norm_array(grid: TorusGrid, a, s: float) -> float:
    if s < 0:
        raise ValueError(f"Sobolev index must be >= 0, got {s}")
    c = grid.coefficients(a)
    w = (1.0 + grid.k2) ** s
    return float(2.0 * np.pi * np.sqrt(np.sum(w * np.abs(c) ** 2)))


def sobolev_norm(f, s: float) -> float:
    """
    H^s norm with continuum normalization.

    ``||f||_s^2 = (2 pi)^2 * sum_k (1 + |k|^2)^s |f_k|^2`` where ``f_k`` is the
    normalized transform.  A :class:`VectorField` gets the root-sum-square of
    its component norms.
    """
    if s < 0:
        raise ValueError(f"Sobolev index must be >= 0, got {s}")
    if isinstance(f, VectorField):
        return float(np.hypot(sobolev_norm(f.x, s), sobolev_norm(f.y, s)))
    require_finite(f.values)
    return sobolev_norm_array(f.grid, f.values, s)


def linf_norm(f) -> float:
    if isinstance(f, VectorField):
        return float(np.max(np.hypot(f.x.values, f.y.values)))
    return float(np.max(np.abs(f.values)))


def grad_linf_array(grid: TorusGrid, u) -> float:
    M = grid.jacobian(u)
    return float(np.sqrt(np.max(np.sum(M**2, axis=(0, 1)))))


def grad_linf(v: VectorField) -> float:
    """Max over the grid of the Frobenius norm of the velocity gradient."""
    return grad_linf_array(v.grid, v.values)


class TrigInterpolant:
    """
    Off-grid evaluation of band-limited grid fields by their trigonometric sum.

    Several fields on one grid are bundled so that a batch of points is
    evaluated in one pass.  Only the band ``|k| <= K`` holding non-negligible
    coefficients is kept, which keeps the cost proportional to the data's
    bandwidth rather than to ``n^2``.  Nyquist modes are dropped.
    """

    def __init__(self, grid: TorusGrid, fields, rtol=1e-13):
        fields = np.asarray(fields, dtype=float)
        if fields.ndim == 2:
            fields = fields[None]
        self.grid = grid
        c = np.fft.fft2(fields, axes=(-2, -1)) / grid.n**2
        k = grid.k.astype(int)
        c[:, grid.n // 2, :] = 0.0
        c[:, :, grid.n // 2] = 0.0
        mag = np.abs(c).max(axis=0)
        scale = mag.max()
        if scale == 0.0:
            band = 0
        else:
            keep = mag > rtol * scale
            kk = np.maximum(np.abs(k)[:, None], np.abs(k)[None, :])
            band = int(kk[keep].max())
        self.band = band
        idx = np.r_[np.arange(band + 1), np.arange(-band, 0)] % grid.n
        self._k = np.r_[np.arange(band + 1), np.arange(-band, 0)].astype(float)
        self._c = c[:, idx][:, :, idx]

    def __call__(self, px, py):
        """Evaluate at points ``(px, py)``; returns shape ``(fields,) + px.shape``."""
        shape = np.shape(px)
        px = np.ravel(px)
        py = np.ravel(py)
        ex = np.exp(1j * px[:, None] * self._k[None, :])
        ey = np.exp(1j * py[:, None] * self._k[None, :])
        a = np.matmul(ex[None], self._c)
        out = np.einsum("fpk,pk->fp", a, ey).real
        return out.reshape((self._c.shape[0],) + shape)


def save_snapshot(path, fields) -> Path:
    """
    Write fields in the binary snapshot format.

    Layout: little-endian header ``("RTLB", version u32, n u32, count u32)``
    followed by ``count`` blocks of ``n*n`` float64 values, each row-major.
    """
    arrays = [np.asarray(getattr(f, "values", f), dtype="<f8") for f in fields]
    n = arrays[0].shape[-1]
    for a in arrays:
        if a.shape != (n, n):
            raise GridMismatchError(f"snapshot fields must all be {n}x{n}")
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(SNAPSHOT_MAGIC, SNAPSHOT_VERSION, n, len(arrays)))
        for a in arrays:
            fh.write(np.ascontiguousarray(a).tobytes())
    return path


def load_snapshot(path):
    """Read a snapshot; returns ``(grid, array of shape (count, n, n))``."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError("snapshot truncated before header end")
    magic, version, n, count = _HEADER.unpack_from(raw)
    if magic != SNAPSHOT_MAGIC:
        raise ValueError(f"bad snapshot magic {magic!r}")
    if version != SNAPSHOT_VERSION:
        raise ValueError(f"unsupported snapshot version {version}")
    body = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    if body.size != count * n * n:
        raise ValueError(f"snapshot body holds {body.size} values, expected {count * n * n}")
    return TorusGrid(int(n)), body.reshape(count, n, n).astype(float)
