"""Classical Radon transform over hyperplanes, its inversion, and p-derivatives.

Every hyperplane integral in the package goes through :func:`moment_integrals`,
which samples the plane ``p ω + t_1 ω_1 + ... + t_{n-1} ω_{n-1}`` on a fixed
lattice of in-plane offsets.  Because tensor and scalar transforms share these
nodes, algebraic identities between them hold to rounding error.
"""
from __future__ import annotations

import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.fft
from scipy import ndimage

from . import symtensor as st
from .field import Grid, TensorField, fft_workers

SUPPORT_TOL = 1e-10
UNIT_TOL = 1e-10
DEFAULT_CUTOFF = 0.8


class SupportError(ValueError):
    """The offset range does not cover the support of the field."""


@dataclass(frozen=True)
class Frame:
    """Direction ``omega`` and an orthonormal basis of its orthogonal complement."""

    omega: np.ndarray
    basis: np.ndarray

    @property
    def vectors(self) -> np.ndarray:
        """Rows ``ω_1, ..., ω_{n-1}, ω``."""
        return np.vstack([self.basis, self.omega[None]])


def frame_of(omega: Sequence[float]) -> Frame:
    """Deterministic orthonormal frame for a unit vector in R^2 or R^3."""
    w = np.asarray(omega, dtype=float)
    if abs(np.linalg.norm(w) - 1.0) > UNIT_TOL:
        raise ValueError(f"direction must be a unit vector, |ω| = {np.linalg.norm(w)}")
    if w.size == 2:
        return Frame(w, np.array([[-w[1], w[0]]]))
    if w.size != 3:
        raise ValueError("frames are defined for n in {2, 3}")
    seed = np.array([0.0, 0.0, 1.0]) if abs(w[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    w1 = np.cross(seed, w)
    w1 /= np.linalg.norm(w1)
    w2 = np.cross(w, w1)
    return Frame(w, np.vstack([w1, w2]))


@dataclass(frozen=True)
class DirectionSet:
    """Unit directions, one per row; frames come from :func:`frame_of`."""

    directions: np.ndarray

    def __post_init__(self):
        d = np.array(self.directions, dtype=float)
        if d.ndim != 2 or d.shape[1] not in (2, 3):
            raise ValueError("directions must have shape (count, n) with n in {2, 3}")
        d.setflags(write=False)
        object.__setattr__(self, "directions", d)

    @classmethod
    def uniform(cls, n: int, count: int) -> DirectionSet:
        """Equispaced angles on [0, π) for n = 2; a Fibonacci upper hemisphere for n = 3."""
        k = np.arange(count)
        if n == 2:
            theta = np.pi * k / count
            return cls(np.stack([np.cos(theta), np.sin(theta)], axis=1))
        if n == 3:
            z = (k + 0.5) / count
            phi = k * np.pi * (3.0 - math.sqrt(5.0))
            r = np.sqrt(1 - z**2)
            return cls(np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1))
        raise ValueError("direction sets support n in {2, 3}")

    @property
    def dim(self) -> int:
        return self.directions.shape[1]

    def __len__(self) -> int:
        return self.directions.shape[0]

    @cached_property
    def frames(self) -> tuple[Frame, ...]:
        return tuple(frame_of(w) for w in self.directions)

    @cached_property
    def frame_vectors(self) -> np.ndarray:
        """Shape ``(n, n, count)``: ``[k, :, d]`` is frame vector k of direction d."""
        return np.stack([f.vectors for f in self.frames], axis=-1)

    @property
    def omega(self) -> np.ndarray:
        return self.frame_vectors[-1]

    def in_plane(self, i: int) -> np.ndarray:
        return self.frame_vectors[i]


@dataclass(frozen=True)
class PGrid:
    """Symmetric offsets ``p_k = (k - (count-1)/2) * spacing``."""

    count: int
    spacing: float

    def __post_init__(self):
        if self.count < 2 or self.spacing <= 0:
            raise ValueError("invalid p-grid")

    @classmethod
    def covering(cls, grid: Grid, spacing: float | None = None) -> PGrid:
        """Smallest odd-count grid whose range covers the box circumradius."""
        h = min(grid.spacing) if spacing is None else spacing
        half = int(math.ceil(grid.circumradius / h)) + 1
        return cls(2 * half + 1, h)

    @property
    def values(self) -> np.ndarray:
        return (np.arange(self.count) - (self.count - 1) / 2) * self.spacing

    @property
    def extent(self) -> float:
        return (self.count - 1) / 2 * self.spacing


@dataclass(frozen=True)
class Sinogram:
    """Scalar hyperplane data, ``data[d, k]`` at direction ``d`` and offset ``p_k``."""

    directions: DirectionSet
    pgrid: PGrid
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        d = np.array(self.data, dtype=float)
        if d.shape != (len(self.directions), self.pgrid.count):
            raise ValueError(f"sinogram data has shape {d.shape}")
        if not np.isfinite(d).all():
            raise ValueError("sinogram contains non-finite values")
        d.setflags(write=False)
        object.__setattr__(self, "data", d)

    def with_data(self, data: np.ndarray) -> Sinogram:
        return Sinogram(self.directions, self.pgrid, data)

    def __add__(self, other: Sinogram) -> Sinogram:
        return self.with_data(self.data + other.data)

    def __sub__(self, other: Sinogram) -> Sinogram:
        return self.with_data(self.data - other.data)

    def __mul__(self, c: float) -> Sinogram:
        return self.with_data(c * self.data)

    __rmul__ = __mul__


# --- quadrature core ----------------------------------------------------------


@dataclass(frozen=True)
class MomentTerm:
    """One summand ``coef * t^powers * sum_c weights[c, d] * field_c`` of an integrand.

    ``weights`` has shape ``(sym_dim, n_directions)``; ``powers`` are the
    exponents of the in-plane coordinates ``t_i = <x, ω_i>``.
    """

    field: TensorField
    weights: np.ndarray
    powers: tuple[int, ...]
    coef: float = 1.0


def contraction_weights(tensor_coeffs: np.ndarray, n: int, m: int) -> np.ndarray:
    """Weights turning a full contraction with ``tensor_coeffs`` into a plain sum."""
    mult = st.multiplicities(n, m)
    return mult.reshape((-1,) + (1,) * (np.ndim(tensor_coeffs) - 1)) * tensor_coeffs


def _prefilter(data: np.ndarray, order: int) -> np.ndarray:
    if order <= 1:
        return data
    axes = tuple(range(1, data.ndim))
    return np.stack([ndimage.spline_filter(c, order=order, mode="grid-constant") for c in data]) if axes else data


def _check_support(u: TensorField, pgrid: PGrid) -> None:
    peak = u.max_abs()
    if peak == 0.0:
        return
    r = np.sqrt((u.grid.coords**2).sum(axis=0))
    outside = r > pgrid.extent
    if outside.any() and np.abs(u.data[:, outside]).max() > SUPPORT_TOL * peak:
        raise SupportError(f"field is non-negligible beyond |p| = {pgrid.extent}")


def support_radius(u: TensorField, tol: float = SUPPORT_TOL) -> float:
    """Radius of the smallest origin-centred ball outside which ``|u| <= tol * max|u|``."""
    peak = u.max_abs()
    if peak == 0.0:
        return 0.0
    r = np.sqrt((u.grid.coords**2).sum(axis=0))
    big = (np.abs(u.data) > tol * peak).any(axis=0)
    return float(r[big].max())


def moment_integrals(
    terms: Iterable[MomentTerm],
    directions: DirectionSet,
    pgrid: PGrid,
    order: int = 3,
    check_support: bool = True,
    t_spacing: float | None = None,
) -> np.ndarray:
    """Hyperplane integrals of a sum of weighted, contracted fields.

    Returns an array of shape ``(n_directions, pgrid.count)``.  The in-plane
    lattice uses the p-grid spacing and range; values are interpolated with
    B-splines of the given order (1 = multilinear) and summed with trapezoidal
    weights.
    """
    terms = list(terms)
    if not terms:
        raise ValueError("no integrand terms")
    grid = terms[0].field.grid
    n = grid.dim
    if directions.dim != n:
        raise ValueError("direction and grid dimensions differ")
    ndir = len(directions)
    for term in terms:
        if term.field.grid != grid:
            raise ValueError("all terms must share one grid")
        if term.weights.shape != (term.field.data.shape[0], ndir):
            raise ValueError(f"weights of shape {term.weights.shape} do not match field/directions")
        if len(term.powers) != n - 1:
            raise ValueError("powers need one entry per in-plane direction")
        if check_support:
            _check_support(term.field, pgrid)

    prepared = {}
    for term in terms:
        key = id(term.field)
        if key not in prepared:
            prepared[key] = _prefilter(term.field.data, order)
    groups: dict[tuple[int, ...], list[MomentTerm]] = {}
    for term in terms:
        groups.setdefault(tuple(term.powers), []).append(term)

    p = pgrid.values
    step = 0.5 * min(grid.spacing) if t_spacing is None else t_spacing
    half = int(math.ceil(pgrid.extent / step))
    t = np.arange(-half, half + 1) * step
    tw = np.full(t.size, step)
    tw[[0, -1]] *= 0.5
    origin = np.array(grid.origin).reshape((n,) + (1,) * n)
    spacing = np.array(grid.spacing).reshape((n,) + (1,) * n)
    fv = directions.frame_vectors

    # beyond the support ball the integrand is below SUPPORT_TOL; 3 cells cover the spline stencil
    radius = max(support_radius(term.field) for term in terms) + 3 * max(grid.spacing)
    upper = (np.array(grid.shape) - 0.5).reshape((n,) + (1,) * n)
    full = (p.size,) + (t.size,) * (n - 1)
    prow = np.broadcast_to(np.arange(p.size).reshape((p.size,) + (1,) * (n - 1)), full)
    out = np.zeros((ndir, p.size))
    for d in range(ndir):
        omega = fv[-1, :, d]
        # sample points x = p ω + sum_i t_i ω_i, shape (n, np, nt, ...)
        pts = np.multiply.outer(omega, p).reshape((n, p.size) + (1,) * (n - 1))
        tcoords = []
        for i in range(n - 1):
            shape = [1] * (n - 1)
            shape[i] = t.size
            ti = t.reshape(shape)
            tcoords.append(ti)
            pts = pts + fv[i, :, d].reshape((n, 1) + (1,) * (n - 1)) * ti[None, None]
        idx = (pts - origin) / spacing
        # points outside the box only see the zero extension
        inside = ((idx >= -0.5) & (idx <= upper)).all(axis=0) & ((pts**2).sum(axis=0) <= radius**2)
        coords = idx[:, inside]
        rows = prow[inside]
        for powers, group in groups.items():
            scalar = np.zeros(grid.shape)
            for term in group:
                scalar += term.coef * np.tensordot(term.weights[:, d], prepared[id(term.field)], axes=(0, 0))
            vals = ndimage.map_coordinates(
                scalar, coords, order=order, prefilter=False, mode="grid-constant", cval=0.0
            )
            weight = np.ones((1,) * (n - 1))
            for i, power in enumerate(powers):
                w_i = tw.reshape(tcoords[i].shape) * (tcoords[i] ** power if power else 1.0)
                weight = weight * w_i
            weight = np.broadcast_to(weight[None], full)[inside]
            out[d] += np.bincount(rows, vals * weight, minlength=p.size)
    return out


# --- scalar transform ---------------------------------------------------------


def _as_scalar_field(u) -> TensorField:
    if isinstance(u, TensorField):
        if u.rank != 0:
            raise ValueError("expected a scalar field")
        return u
    raise TypeError("expected a TensorField of rank 0")


def radon_forward(u: TensorField, directions: DirectionSet, pgrid: PGrid, order: int = 3) -> Sinogram:
    """Classical Radon transform of a scalar field."""
    u = _as_scalar_field(u)
    term = MomentTerm(u, np.ones((1, len(directions))), (0,) * (u.dim - 1))
    return Sinogram(directions, pgrid, moment_integrals([term], directions, pgrid, order))


def spectral_window(sigma: np.ndarray, nyquist: float, cutoff: float = DEFAULT_CUTOFF) -> np.ndarray:
    """Flat below ``cutoff * nyquist``, Hann roll-off to zero at Nyquist."""
    r = np.abs(sigma) / nyquist
    if cutoff >= 1.0:
        return np.ones_like(r)
    taper = 0.5 * (1 + np.cos(np.pi * np.clip((r - cutoff) / (1 - cutoff), 0.0, 1.0)))
    return np.where(r <= cutoff, 1.0, taper)


def _padded_length(count: int) -> int:
    return int(2 ** math.ceil(math.log2(2 * count)))


def p_derivative(s: Sinogram, order: int, cutoff: float = DEFAULT_CUTOFF) -> Sinogram:
    """``order``-th derivative in p via the Fourier multiplier ``(iσ)^order``."""
    if order < 0:
        raise ValueError("derivative order must be non-negative")
    if order == 0:
        return s
    npad = _padded_length(s.pgrid.count)
    h = s.pgrid.spacing
    sigma = 2 * np.pi * np.fft.fftfreq(npad, h)
    mult = (1j * sigma) ** order * spectral_window(sigma, np.pi / h, cutoff)
    spec = scipy.fft.fft(s.data, n=npad, axis=1, workers=fft_workers())
    out = scipy.fft.ifft(spec * mult, axis=1, workers=fft_workers())[:, : s.pgrid.count].real
    return s.with_data(out)


def ramp_filter(s: Sinogram, cutoff: float = DEFAULT_CUTOFF, upsample: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Ramp-filtered projections ``F^-1 |σ| F`` along p.

    The ramp is the transform of the band-limited spatial kernel, so it is
    exact at DC.  With ``upsample > 1`` the filtered data are returned on a
    finer offset grid by zero-padding the (windowed) spectrum.  Returns
    ``(offsets, filtered)``.
    """
    npad = _padded_length(s.pgrid.count)
    h = s.pgrid.spacing
    offset = np.rint(np.fft.fftfreq(npad, 1.0 / npad)).astype(int)
    odd = offset % 2 == 1
    kernel = np.zeros(npad)
    kernel[0] = 0.25
    kernel[odd] = -1.0 / (np.pi * offset[odd]) ** 2
    ramp = np.real(scipy.fft.fft(kernel)) * (2 * np.pi / h)
    sigma = 2 * np.pi * np.fft.fftfreq(npad, h)
    ramp = ramp * spectral_window(sigma, np.pi / h, cutoff)
    spec = scipy.fft.fft(s.data, n=npad, axis=1, workers=fft_workers()) * ramp
    if upsample > 1:
        fine = np.zeros((spec.shape[0], npad * upsample), dtype=complex)
        half = npad // 2
        fine[:, :half] = spec[:, :half]
        fine[:, -half:] = spec[:, half:]
        spec = fine * upsample
    count = (s.pgrid.count - 1) * upsample + 1
    q = scipy.fft.ifft(spec, axis=1, workers=fft_workers())[:, :count].real
    offsets = s.pgrid.values[0] + np.arange(count) * (h / upsample)
    return offsets, q


def radon_invert(
    s: Sinogram, grid: Grid, cutoff: float = DEFAULT_CUTOFF, upsample: int = 64
) -> TensorField:
    """Filtered backprojection for n = 2; directions must be equispaced on [0, π).

    Filtered projections are refined ``upsample`` times spectrally before the
    linear interpolation of the backprojection step.
    """
    if s.directions.dim != 2 or grid.dim != 2:
        raise NotImplementedError("Radon inversion is implemented for n = 2 only")
    p, q = ramp_filter(s, cutoff, upsample)
    x = grid.coords
    out = np.zeros(grid.shape)
    for d, w in enumerate(s.directions.directions):
        out += np.interp(w[0] * x[0] + w[1] * x[1], p, q[d], left=0.0, right=0.0)
    return TensorField.scalar(grid, out / (2 * len(s.directions)))
