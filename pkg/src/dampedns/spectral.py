"""Fourier representation of periodic 2D fields on the box [0, L]^2.

Coefficients are Fourier-series coefficients, ``c = fft2(u) / n**2``, so that
``u(x) = sum_k c(k) exp(i k.x)``. With this convention the L2 norm over the
box is ``||u||**2 = L**2 * sum_k |c(k)|**2`` and every Sobolev norm below uses
the same ``L**2`` prefactor, so ``sobolev_norm(f, 0)`` is exactly the
physical-space L2 norm.

Array layout: scalar fields are ``(..., n, n)``, vector fields
``(..., 2, n, n)``. Axis ``-2`` carries the x1 direction, axis ``-1`` the x2
direction, both in FFT index order.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.fft as sfft

__all__ = [
    "Grid",
    "SpectralVectorField",
    "ScalarSpectralField",
    "fft_workers",
    "leray_project",
    "sobolev_norm",
    "rot",
    "div",
    "grad",
    "laplacian",
    "nonlinear_term",
    "inner_product",
    "transform_to_physical",
    "transform_to_spectral",
    "single_mode",
    "field_from_modes",
    "random_field",
    "resample",
]

THREADS_ENV = "DAMPEDNS_THREADS"


def fft_workers() -> int:
    """Worker count for scipy.fft, from ``DAMPEDNS_THREADS`` (default 1)."""
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


class Grid:
    """Square periodic grid with ``n`` points per axis on a box of side ``box_length``.

    ``n`` must be an even power of two. Wavenumber indices follow
    ``{-n/2+1, ..., n/2}``; the Nyquist index is reported as ``+n/2`` but is
    excluded from derivatives and removed by the two-thirds dealias mask.
    """

    def __init__(self, n: int, box_length: float = 2 * np.pi):
        n = int(n)
        if n < 4 or n & (n - 1):
            raise ValueError(f"n_modes_per_axis must be a power of two >= 4, got {n}")
        if not box_length > 0:
            raise ValueError(f"box_length must be positive, got {box_length}")
        self.n = n
        self.box_length = float(box_length)

        idx = np.fft.fftfreq(n, 1.0 / n).astype(np.int64)
        idx[n // 2] = n // 2
        self.index = idx
        self.k0 = 2 * np.pi / self.box_length
        self.wavenumbers = self.k0 * idx

        ix, iy = np.meshgrid(idx, idx, indexing="ij")
        self.ix = ix
        self.iy = iy
        self.kx = self.k0 * ix
        self.ky = self.k0 * iy
        self.k2 = self.kx**2 + self.ky**2
        self.dealias_mask = (np.abs(ix) <= n / 3) & (np.abs(iy) <= n / 3)

        # derivative multipliers: Nyquist row/column zeroed to keep outputs real
        nyq = (np.abs(ix) == n // 2) | (np.abs(iy) == n // 2)
        self.dx = np.where(nyq, 0.0, self.kx)
        self.dy = np.where(nyq, 0.0, self.ky)
        self.inv_k2 = np.zeros_like(self.k2)
        self.inv_k2[self.k2 > 0] = 1.0 / self.k2[self.k2 > 0]

    # ------------------------------------------------------------------ basics
    @property
    def area(self) -> float:
        return self.box_length**2

    @property
    def cell_area(self) -> float:
        return (self.box_length / self.n) ** 2

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n, self.n)

    @cached_property
    def coordinates(self) -> tuple[np.ndarray, np.ndarray]:
        x = np.arange(self.n) * (self.box_length / self.n)
        return tuple(np.meshgrid(x, x, indexing="ij"))

    def __eq__(self, other):
        return (
            isinstance(other, Grid)
            and self.n == other.n
            and self.box_length == other.box_length
        )

    def __hash__(self):
        return hash((self.n, self.box_length))

    def __repr__(self):
        return f"Grid(n={self.n}, box_length={self.box_length!r})"

    def with_box_length(self, box_length: float) -> "Grid":
        return Grid(self.n, box_length)

    def band_mask(self, k_max: float, k_min: float = 0.0, square: bool = True) -> np.ndarray:
        """Boolean mask of lattice points in a band of integer wavenumber indices.

        ``square=True`` selects ``max(|k1|, |k2|) <= k_max`` (box band);
        otherwise the annulus ``k_min <= |k| <= k_max``. The mean mode is never
        included.
        """
        if square:
            m = (np.abs(self.ix) <= k_max) & (np.abs(self.iy) <= k_max)
            m &= np.maximum(np.abs(self.ix), np.abs(self.iy)) >= k_min
        else:
            r = np.hypot(self.ix, self.iy)
            m = (r <= k_max) & (r >= k_min)
        m &= (self.ix != 0) | (self.iy != 0)
        m &= (np.abs(self.ix) < self.n // 2) & (np.abs(self.iy) < self.n // 2)
        return m

    # ----------------------------------------------------------- array kernels
    def reflect(self, a: np.ndarray) -> np.ndarray:
        """Return ``a`` evaluated at ``-k`` (index map ``i -> -i mod n``) on the last two axes."""
        return np.roll(np.flip(a, axis=(-2, -1)), 1, axis=(-2, -1))

    def to_physical(self, c: np.ndarray) -> np.ndarray:
        """Inverse transform of Hermitian coefficient arrays ``(..., n, n)`` to real values.

        Two real fields are carried by one complex transform.
        """
        lead = c.shape[:-2]
        flat = c.reshape((-1,) + self.shape)
        m = flat.shape[0]
        out = np.empty(flat.shape, dtype=np.float64)
        half = m // 2
        w = fft_workers()
        if half:
            z = flat[0 : 2 * half : 2] + 1j * flat[1 : 2 * half : 2]
            zp = sfft.ifft2(z, workers=w, norm="forward")
            out[0 : 2 * half : 2] = zp.real
            out[1 : 2 * half : 2] = zp.imag
        if m % 2:
            out[-1] = sfft.ifft2(flat[-1], workers=w, norm="forward").real
        return out.reshape(lead + self.shape)

    def to_spectral(self, f: np.ndarray) -> np.ndarray:
        """Forward transform of real arrays ``(..., n, n)``; output is exactly Hermitian."""
        lead = f.shape[:-2]
        flat = np.asarray(f, dtype=np.float64).reshape((-1,) + self.shape)
        m = flat.shape[0]
        out = np.empty(flat.shape, dtype=np.complex128)
        half = m // 2
        w = fft_workers()
        if half:
            z = sfft.fft2(
                flat[0 : 2 * half : 2] + 1j * flat[1 : 2 * half : 2], workers=w, norm="forward"
            )
            zr = np.conj(self.reflect(z))
            out[0 : 2 * half : 2] = 0.5 * (z + zr)
            out[1 : 2 * half : 2] = -0.5j * (z - zr)
        if m % 2:
            z = sfft.fft2(flat[-1], workers=w, norm="forward")
            out[-1] = 0.5 * (z + np.conj(self.reflect(z)))
        return out.reshape(lead + self.shape)

    def project(self, c: np.ndarray) -> np.ndarray:
        """Leray projection of vector coefficient arrays ``(..., 2, n, n)``; zeroes the mean."""
        c1 = c[..., 0, :, :]
        c2 = c[..., 1, :, :]
        dot = (self.kx * c1 + self.ky * c2) * self.inv_k2
        out = np.empty_like(c)
        out[..., 0, :, :] = c1 - self.kx * dot
        out[..., 1, :, :] = c2 - self.ky * dot
        out[..., 0, 0] = 0.0
        return out

    def curl(self, c: np.ndarray) -> np.ndarray:
        """Scalar vorticity coefficients ``i k1 c2 - i k2 c1``."""
        return 1j * (self.dx * c[..., 1, :, :] - self.dy * c[..., 0, :, :])

    def symmetrize(self, c: np.ndarray) -> np.ndarray:
        """Enforce reality symmetry ``c(-k) = conj(c(k))`` by averaging."""
        return 0.5 * (c + np.conj(self.reflect(c)))

    def inner(self, a: np.ndarray, b: np.ndarray, axes: int = 3) -> np.ndarray:
        """L2 inner product over the trailing ``axes`` axes (3 for vectors, 2 for scalars)."""
        ax = tuple(range(-axes, 0))
        return self.area * np.sum(a.real * b.real + a.imag * b.imag, axis=ax)

    def weighted_sq(self, c: np.ndarray, weight: np.ndarray, axes: int = 3) -> np.ndarray:
        ax = tuple(range(-axes, 0))
        return self.area * np.sum(weight * (c.real**2 + c.imag**2), axis=ax)


# ---------------------------------------------------------------------- fields
@dataclass(frozen=True, eq=False)
class SpectralVectorField:
    """Two-component field stored as Fourier coefficients ``(2, n, n)``."""

    coefficients: np.ndarray
    grid: Grid
    divergence_free: bool = False

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=np.complex128)
        if c.shape != (2,) + self.grid.shape:
            raise ValueError(f"expected coefficient shape {(2,) + self.grid.shape}, got {c.shape}")
        object.__setattr__(self, "coefficients", c)

    @classmethod
    def zeros(cls, grid: Grid) -> "SpectralVectorField":
        return cls(np.zeros((2,) + grid.shape, dtype=np.complex128), grid, True)

    @classmethod
    def from_physical(cls, values: np.ndarray, grid: Grid) -> "SpectralVectorField":
        return transform_to_spectral(values, grid)

    def to_physical(self) -> np.ndarray:
        return transform_to_physical(self)

    def norm(self) -> float:
        return sobolev_norm(self, 0.0)

    def copy(self) -> "SpectralVectorField":
        return SpectralVectorField(self.coefficients.copy(), self.grid, self.divergence_free)

    def _check(self, other):
        if not isinstance(other, SpectralVectorField):
            return NotImplemented
        if other.grid != self.grid:
            raise ValueError("fields live on different grids")
        return other

    def __add__(self, other):
        if self._check(other) is NotImplemented:
            return NotImplemented
        return SpectralVectorField(
            self.coefficients + other.coefficients,
            self.grid,
            self.divergence_free and other.divergence_free,
        )

    def __sub__(self, other):
        if self._check(other) is NotImplemented:
            return NotImplemented
        return SpectralVectorField(
            self.coefficients - other.coefficients,
            self.grid,
            self.divergence_free and other.divergence_free,
        )

    def __mul__(self, scalar):
        if not np.isscalar(scalar) or np.iscomplexobj(scalar):
            return NotImplemented
        return SpectralVectorField(self.coefficients * scalar, self.grid, self.divergence_free)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def __truediv__(self, scalar):
        return self * (1.0 / scalar)

    def max_divergence(self) -> float:
        """``max_k |k . c(k)|`` in scaled wavenumber units."""
        g = self.grid
        return float(np.max(np.abs(g.kx * self.coefficients[0] + g.ky * self.coefficients[1])))

    def hermitian_defect(self) -> float:
        c = self.coefficients
        return float(np.max(np.abs(c - np.conj(self.grid.reflect(c)))))


@dataclass(frozen=True, eq=False)
class ScalarSpectralField:
    coefficients: np.ndarray
    grid: Grid

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=np.complex128)
        if c.shape != self.grid.shape:
            raise ValueError(f"expected coefficient shape {self.grid.shape}, got {c.shape}")
        object.__setattr__(self, "coefficients", c)

    def to_physical(self) -> np.ndarray:
        return self.grid.to_physical(self.coefficients)

    def norm(self) -> float:
        return float(np.sqrt(self.grid.weighted_sq(self.coefficients, 1.0, axes=2)))


# ------------------------------------------------------------------ operations
def leray_project(f: SpectralVectorField) -> SpectralVectorField:
    """Orthogonal projection onto divergence-free, mean-free fields."""
    return SpectralVectorField(f.grid.project(f.coefficients), f.grid, True)


def sobolev_norm(f: SpectralVectorField | ScalarSpectralField, s: float) -> float:
    """Homogeneous Sobolev norm ``(L^2 sum_{k != 0} |k|^{2s} |c(k)|^2)^{1/2}``.

    Only ``s`` in ``[-2, 2]`` is accepted. The mean mode never contributes,
    so for ``s = 0`` this is the L2 norm of a mean-free field.
    """
    s = float(s)
    if not -2.0 <= s <= 2.0:
        raise ValueError(f"Sobolev order must lie in [-2, 2], got {s}")
    g = f.grid
    weight = np.zeros_like(g.k2)
    nz = g.k2 > 0
    weight[nz] = g.k2[nz] ** s
    axes = 3 if isinstance(f, SpectralVectorField) else 2
    return float(np.sqrt(g.weighted_sq(f.coefficients, weight, axes=axes)))


def inner_product(a: SpectralVectorField, b: SpectralVectorField) -> float:
    return float(a.grid.inner(a.coefficients, b.coefficients))


def rot(u: SpectralVectorField) -> ScalarSpectralField:
    """Vorticity ``d1 u2 - d2 u1``."""
    return ScalarSpectralField(u.grid.curl(u.coefficients), u.grid)


def div(u: SpectralVectorField) -> ScalarSpectralField:
    g = u.grid
    c = u.coefficients
    return ScalarSpectralField(1j * (g.dx * c[0] + g.dy * c[1]), g)


def grad(phi: ScalarSpectralField) -> SpectralVectorField:
    g = phi.grid
    c = phi.coefficients
    return SpectralVectorField(np.stack([1j * g.dx * c, 1j * g.dy * c]), g)


def laplacian(u: SpectralVectorField) -> SpectralVectorField:
    return SpectralVectorField(-u.grid.k2 * u.coefficients, u.grid, u.divergence_free)


def gradient_tensor(c: np.ndarray, grid: Grid) -> np.ndarray:
    """Physical-space Jacobian ``J[..., i, j] = d_i u^j`` of vector coefficients."""
    d = np.stack([1j * grid.dx * c, 1j * grid.dy * c], axis=-4)
    return grid.to_physical(d)


def nonlinear_term(u: SpectralVectorField) -> SpectralVectorField:
    """Dealiased pseudo-spectral advection ``(u, grad) u`` (not projected)."""
    g = u.grid
    up = g.to_physical(u.coefficients)
    jac = gradient_tensor(u.coefficients, g)
    prod = up[0] * jac[0] + up[1] * jac[1]
    out = g.to_spectral(prod) * g.dealias_mask
    return SpectralVectorField(out, g)


def transform_to_physical(f: SpectralVectorField | ScalarSpectralField) -> np.ndarray:
    return f.grid.to_physical(f.coefficients)


def transform_to_spectral(values: np.ndarray, grid: Grid) -> SpectralVectorField | ScalarSpectralField:
    values = np.asarray(values, dtype=np.float64)
    c = grid.to_spectral(values)
    if values.shape == grid.shape:
        return ScalarSpectralField(c, grid)
    return SpectralVectorField(c, grid)


# ------------------------------------------------------------- constructors
def single_mode(grid: Grid, k: tuple[int, int], amplitude: complex = 0.5) -> SpectralVectorField:
    """Divergence-free mode ``a e^{ik.x} + c.c.`` with ``a`` along ``k_perp / |k|``.

    ``k`` is an integer lattice index. ``amplitude=0.5`` gives a unit-amplitude
    cosine, e.g. ``k=(0, 1)`` yields ``u = (-cos x2, 0)`` on the 2*pi box.
    """
    k1, k2 = int(k[0]), int(k[1])
    if k1 == 0 and k2 == 0:
        raise ValueError("single_mode requires k != 0")
    perp = np.array([-k2, k1], dtype=float) / np.hypot(k1, k2)
    return field_from_modes(grid, [((k1, k2), amplitude * perp)])


def field_from_modes(grid: Grid, modes, project: bool = True) -> SpectralVectorField:
    """Build a real field from ``[(k_index, amplitude_vector), ...]``, adding conjugates.

    Each entry contributes ``a e^{ik.x} + c.c.``; a ``k`` listed together with
    ``-k`` simply adds. The result is Leray-projected unless ``project=False``.
    """
    c = np.zeros((2,) + grid.shape, dtype=np.complex128)
    n = grid.n
    for k, a in modes:
        k1, k2 = int(k[0]), int(k[1])
        if max(abs(k1), abs(k2)) >= n // 2:
            raise ValueError(f"mode {k} is outside the resolvable lattice for n={n}")
        a = np.asarray(a, dtype=np.complex128).reshape(2)
        c[:, k1 % n, k2 % n] += a
        c[:, (-k1) % n, (-k2) % n] += np.conj(a)
    field = SpectralVectorField(c, grid)
    return leray_project(field) if project else field


def random_field(
    grid: Grid,
    rng: np.random.Generator | int | None = None,
    band: float | None = None,
    norm: float | None = 1.0,
    decay: float = 2.0,
    mask: np.ndarray | None = None,
) -> SpectralVectorField:
    """Random divergence-free, mean-free field.

    Independent complex Gaussian coefficients with amplitude ``|k|^-decay``
    inside the square band ``max|k_j| <= band`` (default: the dealiased band),
    symmetrized, projected, and scaled to L2 norm ``norm`` (unscaled if None).
    """
    rng = np.random.default_rng(rng)
    if mask is None:
        mask = grid.band_mask(grid.n // 3 if band is None else band)
    shape = (2,) + grid.shape
    c = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    amp = np.zeros_like(grid.k2)
    kk = np.sqrt(grid.ix**2 + grid.iy**2)
    amp[mask] = kk[mask] ** (-decay)
    c = grid.symmetrize(c * amp)
    c = grid.project(c)
    field = SpectralVectorField(c, grid, True)
    if norm is not None:
        nrm = field.norm()
        if nrm == 0:
            raise ValueError("empty band: no admissible modes")
        field = field * (norm / nrm)
    return field


def resample(f: SpectralVectorField, grid: Grid) -> SpectralVectorField:
    """Copy coefficients onto a grid with different ``n`` (same index set, truncating).

    The box length of the target grid is kept, so this also serves for
    spatial rescaling of a field pattern.
    """
    src = f.grid
    out = np.zeros((2,) + grid.shape, dtype=np.complex128)
    lim = min(src.n, grid.n) // 2
    sel = (np.abs(src.ix) < lim) & (np.abs(src.iy) < lim)
    out[:, src.ix[sel] % grid.n, src.iy[sel] % grid.n] = f.coefficients[:, sel]
    return SpectralVectorField(out, grid, f.divergence_free)
