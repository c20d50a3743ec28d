"""Symmetric tensor fields sampled on a uniform box grid.

All differential operators are spectral on the periodic extension of the box,
so fields must decay to (numerically) zero at the box boundary.  Every
operator is a multiplication by a polynomial in one shared wavenumber symbol
``y`` (Nyquist modes zeroed), which keeps operator identities such as
``δd = Δ/(m+1) + m/(m+1) dδ`` exact up to rounding.
"""
from __future__ import annotations

import math
import os
from collections.abc import Sequence
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.fft

from . import symtensor as st

BOUNDARY_TOL = 1e-10


class DecayError(ValueError):
    """Field is not small enough at the box boundary for spectral calculus."""


def fft_workers() -> int:
    return int(os.environ.get("TOMO_THREADS", "1"))


@dataclass(frozen=True)
class Grid:
    """Uniform grid of ``shape`` nodes; node ``i`` sits at ``origin + i * spacing``."""

    shape: tuple[int, ...]
    spacing: tuple[float, ...]
    origin: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "shape", tuple(int(s) for s in self.shape))
        object.__setattr__(self, "spacing", tuple(float(h) for h in self.spacing))
        object.__setattr__(self, "origin", tuple(float(o) for o in self.origin))
        if not (len(self.shape) == len(self.spacing) == len(self.origin)):
            raise ValueError("shape, spacing and origin must have the same length")
        if self.dim not in (2, 3):
            raise ValueError(f"grids support n in {{2, 3}}, got n={self.dim}")
        if min(self.shape) < 8:
            raise ValueError("at least 8 nodes per axis are required")
        if min(self.spacing) <= 0:
            raise ValueError("spacing must be positive")

    @classmethod
    def centered(cls, n: int, size: int, half_width: float = 1.0) -> Grid:
        """``size^n`` nodes covering ``[-half_width, half_width)^n``."""
        h = 2.0 * half_width / size
        return cls((size,) * n, (h,) * n, (-half_width,) * n)

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def node_count(self) -> int:
        return math.prod(self.shape)

    @property
    def cell_volume(self) -> float:
        return math.prod(self.spacing)

    def axes(self) -> list[np.ndarray]:
        return [o + h * np.arange(s) for s, h, o in zip(self.shape, self.spacing, self.origin)]

    @cached_property
    def coords(self) -> np.ndarray:
        """Node coordinates, shape ``(n, *shape)``."""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"))

    @cached_property
    def circumradius(self) -> float:
        """Largest distance from the origin to a box corner."""
        lo = np.array(self.origin)
        hi = lo + np.array(self.spacing) * (np.array(self.shape) - 1)
        return float(np.sqrt((np.maximum(np.abs(lo), np.abs(hi)) ** 2).sum()))

    @cached_property
    def wavenumbers(self) -> list[np.ndarray]:
        """Angular wavenumbers per axis for ``rfftn`` layout; Nyquist set to 0."""
        out = []
        for ax, (s, h) in enumerate(zip(self.shape, self.spacing)):
            if ax == self.dim - 1:
                k = 2 * np.pi * np.fft.rfftfreq(s, h)
            else:
                k = 2 * np.pi * np.fft.fftfreq(s, h)
            if s % 2 == 0:
                k[s // 2] = 0.0
            out.append(k)
        return out

    @cached_property
    def symbol(self) -> np.ndarray:
        """Wavenumber vector ``y`` on the half-spectrum, shape ``(n, *fshape)``."""
        return np.stack(np.meshgrid(*self.wavenumbers, indexing="ij"))

    @property
    def fshape(self) -> tuple[int, ...]:
        return self.symbol.shape[1:]


def _fft(data: np.ndarray, n: int) -> np.ndarray:
    return scipy.fft.rfftn(data, axes=tuple(range(-n, 0)), workers=fft_workers())


def _ifft(data: np.ndarray, grid: Grid) -> np.ndarray:
    return scipy.fft.irfftn(data, s=grid.shape, axes=tuple(range(-grid.dim, 0)), workers=fft_workers())


@dataclass(frozen=True)
class TensorField:
    """A symmetric rank-``rank`` tensor field; ``data`` has shape ``(sym_dim, *grid.shape)``."""

    grid: Grid
    rank: int
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        d = np.array(self.data, dtype=float)
        expected = (st.sym_dim(self.grid.dim, self.rank),) + self.grid.shape
        if d.shape != expected:
            raise ValueError(f"expected data shape {expected}, got {d.shape}")
        if not np.isfinite(d).all():
            raise ValueError("field contains non-finite values")
        d.setflags(write=False)
        object.__setattr__(self, "data", d)

    @classmethod
    def zeros(cls, grid: Grid, rank: int) -> TensorField:
        return cls(grid, rank, np.zeros((st.sym_dim(grid.dim, rank),) + grid.shape))

    @classmethod
    def scalar(cls, grid: Grid, values: np.ndarray) -> TensorField:
        return cls(grid, 0, np.asarray(values)[None])

    @property
    def dim(self) -> int:
        return self.grid.dim

    def _same(self, other: TensorField):
        if self.grid != other.grid or self.rank != other.rank:
            raise ValueError("fields live on different grids or have different ranks")

    def __add__(self, other: TensorField) -> TensorField:
        self._same(other)
        return TensorField(self.grid, self.rank, self.data + other.data)

    def __sub__(self, other: TensorField) -> TensorField:
        self._same(other)
        return TensorField(self.grid, self.rank, self.data - other.data)

    def __mul__(self, c: float) -> TensorField:
        return TensorField(self.grid, self.rank, c * self.data)

    __rmul__ = __mul__

    def __neg__(self) -> TensorField:
        return TensorField(self.grid, self.rank, -self.data)

    def component(self, index: Sequence[int]) -> np.ndarray:
        """Values of the component with (unsorted) index tuple ``index``."""
        pos = st.index_tuples(self.dim, self.rank).index(tuple(sorted(index)))
        return self.data[pos]

    def at(self, node: Sequence[int]) -> st.SymTensor:
        return st.SymTensor(self.dim, self.rank, self.data[(slice(None),) + tuple(node)])

    def contract(self, tensor: np.ndarray) -> np.ndarray:
        """Full contraction with a constant tensor given by its coefficients."""
        return st.inner_coeffs(self.data, np.asarray(tensor), self.dim, self.rank)

    def norm(self) -> float:
        """Discrete L2 norm with multiplicity-weighted components."""
        mult = st.multiplicities(self.dim, self.rank).reshape((-1,) + (1,) * self.dim)
        return float(np.sqrt((mult * self.data**2).sum() * self.grid.cell_volume))

    def means(self) -> np.ndarray:
        return self.data.reshape(self.data.shape[0], -1).mean(axis=1)

    def max_abs(self) -> float:
        return float(np.abs(self.data).max()) if self.data.size else 0.0

    def boundary_ratio(self) -> float:
        """Max |value| on the outer node layer relative to the global max."""
        peak = self.max_abs()
        if peak == 0.0:
            return 0.0
        edge = 0.0
        for ax in range(1, self.dim + 1):
            for idx in (0, -1):
                edge = max(edge, float(np.abs(np.take(self.data, idx, axis=ax)).max()))
        return edge / peak


def check_decay(u: TensorField, tol: float = BOUNDARY_TOL) -> None:
    ratio = u.boundary_ratio()
    if ratio > tol:
        raise DecayError(f"boundary magnitude ratio {ratio:.3e} exceeds {tol:.1e}")


# --- spectral operators -------------------------------------------------------


def spectrum(u: TensorField) -> np.ndarray:
    return _fft(u.data, u.dim)


def from_spectrum(grid: Grid, rank: int, coeffs: np.ndarray) -> TensorField:
    return TensorField(grid, rank, _ifft(coeffs, grid))


def d_field(u: TensorField, check: bool = True) -> TensorField:
    """Symmetrized gradient ``du``, raising the rank by one."""
    if check:
        check_decay(u)
    g = u.grid
    coeffs = st.i_vec_coeffs(1j * g.symbol, spectrum(u), g.dim, u.rank)
    return from_spectrum(g, u.rank + 1, coeffs)


def div_field(u: TensorField, check: bool = True) -> TensorField:
    """Divergence ``δu`` on the last index."""
    if u.rank < 1:
        raise ValueError("divergence of a rank-0 field is undefined")
    if check:
        check_decay(u)
    g = u.grid
    coeffs = st.j_vec_coeffs(1j * g.symbol, spectrum(u), g.dim, u.rank)
    return from_spectrum(g, u.rank - 1, coeffs)


def laplacian_field(u: TensorField, check: bool = True) -> TensorField:
    """Componentwise Laplacian."""
    if check:
        check_decay(u)
    g = u.grid
    return from_spectrum(g, u.rank, -(g.symbol**2).sum(axis=0) * spectrum(u))


def gradient_components(u: TensorField, check: bool = True) -> list[TensorField]:
    """Partial derivatives ``∂u/∂x_a`` for each axis (not symmetrized)."""
    if check:
        check_decay(u)
    g = u.grid
    uh = spectrum(u)
    return [from_spectrum(g, u.rank, 1j * g.symbol[a] * uh) for a in range(g.dim)]


def delta_d_symbol(y: np.ndarray, rank: int, k: int, orthonormal: bool = False) -> np.ndarray:
    """Matrices of ``j_y^k i_y^k`` on S^rank, shape ``(*batch, s, s)``.

    With ``orthonormal=True`` the coefficient basis is rescaled by the square
    roots of the multiplicities, which makes each matrix symmetric.
    """
    y = np.asarray(y, dtype=float)
    n = y.shape[0]
    batch = y.shape[1:]
    s = st.sym_dim(n, rank)
    cols = np.eye(s).reshape((s, s) + (1,) * len(batch))
    yb = y[:, None]
    r = rank
    for _ in range(k):
        cols = st.i_vec_coeffs(yb, cols, n, r)
        r += 1
    for _ in range(k):
        cols = st.j_vec_coeffs(yb, cols, n, r)
        r -= 1
    cols = np.broadcast_to(cols, (s, s) + batch)
    mat = np.moveaxis(cols, (0, 1), (-2, -1))
    if orthonormal:
        sq = np.sqrt(st.multiplicities(n, rank))
        mat = sq[:, None] * mat / sq[None, :]
    return np.ascontiguousarray(mat)


def solve_symbol(grid: Grid, rhs: np.ndarray, rank: int, k: int) -> np.ndarray:
    """Solve ``(-1)^k j_y^k i_y^k v = rhs`` per frequency; zero where ``y = 0``."""
    y = grid.symbol
    nonzero = (y**2).sum(axis=0) > 0
    mat = delta_d_symbol(y[:, nonzero], rank, k) * (-1) ** k
    b = np.moveaxis(rhs[:, nonzero], 0, -1)[..., None]
    sol = np.linalg.solve(mat, b)[..., 0]
    out = np.zeros_like(rhs, dtype=complex)
    out[:, nonzero] = np.moveaxis(sol, -1, 0)
    return out


def solenoidal_project(u: TensorField) -> TensorField:
    """Remove the potential part ``dw`` frequency by frequency; the mean is kept."""
    if u.rank < 1:
        raise ValueError("solenoidal projection needs rank >= 1")
    g = u.grid
    uh = spectrum(u)
    # w solves δd w = δu, so u - dw is divergence free
    rhs = st.j_vec_coeffs(1j * g.symbol, uh, g.dim, u.rank)
    wh = solve_symbol(g, rhs, u.rank - 1, 1)
    dw = st.i_vec_coeffs(1j * g.symbol, wh, g.dim, u.rank - 1)
    return from_spectrum(g, u.rank, uh - dw)


def compose_potentials(vs: Sequence[TensorField], check: bool = True) -> TensorField:
    """``sum_i d^i v_i`` where ``vs[i]`` has rank ``m - i``."""
    if not vs:
        raise ValueError("need at least one component")
    m = vs[0].rank
    if len(vs) > m + 1:
        raise ValueError(f"at most {m + 1} components for rank {m}")
    total = TensorField.zeros(vs[0].grid, m).data.copy()
    for i, v in enumerate(vs):
        if v.rank != m - i:
            raise ValueError(f"component {i} has rank {v.rank}, expected {m - i}")
        w = v
        for _ in range(i):
            w = d_field(w, check=check)
        total += w.data
    return TensorField(vs[0].grid, m, total)


def l2_error(a: TensorField, b: TensorField) -> float:
    """``|a - b| / |b|``; the absolute norm when ``b`` vanishes."""
    a._same(b)
    diff = (a - b).norm()
    ref = b.norm()
    return diff / ref if ref > 0 else diff


# --- phantoms -----------------------------------------------------------------

PHANTOM_KINDS = ("gaussian_poly", "random_band")
PHANTOM_TARGETS = ("raw", "solenoidal", "potential")


@dataclass(frozen=True)
class PhantomSpec:
    """Parameters of a smooth, decaying, zero-mean random phantom.

    ``target='potential'`` returns ``d^order`` of a raw rank-(m - order) phantom.
    """

    kind: str = "gaussian_poly"
    bumps: int = 2
    width: float = 0.1
    radius: float = 0.15
    degree: int = 1
    amplitude: float = 1.0
    seed: int = 0
    target: str = "raw"
    order: int = 0

    def __post_init__(self):
        if self.kind not in PHANTOM_KINDS:
            raise ValueError(f"unknown phantom kind {self.kind!r}")
        if self.target not in PHANTOM_TARGETS:
            raise ValueError(f"unknown phantom target {self.target!r}")
        if self.width <= 0 or self.bumps < 1 or self.degree < 0 or self.order < 0:
            raise ValueError("invalid phantom parameters")


def _zero_mean(values: np.ndarray, grid: Grid, width: float) -> np.ndarray:
    r2 = (grid.coords**2).sum(axis=0)
    anchor = np.exp(-r2 / (2 * width**2))
    return values - values.mean() / anchor.mean() * anchor


def _random_scalar(spec: PhantomSpec, grid: Grid, rng: np.random.Generator) -> np.ndarray:
    x = grid.coords
    n = grid.dim
    if spec.kind == "gaussian_poly":
        out = np.zeros(grid.shape)
        exps = [e for e in np.ndindex(*(spec.degree + 1,) * n) if sum(e) <= spec.degree]
        for _ in range(spec.bumps):
            direction = rng.standard_normal(n)
            direction /= np.linalg.norm(direction)
            center = direction * spec.radius * rng.uniform() ** (1.0 / n)
            z = (x - center.reshape((n,) + (1,) * n)) / spec.width
            poly = sum(rng.standard_normal() * np.prod([z[a] ** e[a] for a in range(n)], axis=0) for e in exps)
            out += poly * np.exp(-0.5 * (z**2).sum(axis=0))
    else:
        noise = rng.standard_normal(grid.shape)
        y2 = (grid.symbol**2).sum(axis=0)
        corr = spec.width / 3.0
        smooth = _ifft(_fft(noise, n) * np.exp(-0.5 * y2 * corr**2), grid)
        out = smooth * np.exp(-0.5 * (x**2).sum(axis=0) / spec.width**2)
    return _zero_mean(out, grid, spec.width)


def _raw_field(spec: PhantomSpec, grid: Grid, rank: int, rng: np.random.Generator) -> np.ndarray:
    return np.stack([_random_scalar(spec, grid, rng) for _ in range(st.sym_dim(grid.dim, rank))])


def _solenoidal_field(spec: PhantomSpec, grid: Grid, rank: int, rng: np.random.Generator) -> np.ndarray:
    """Decaying divergence-free field built from a decaying potential.

    In 2D the rotated gradient ``∇⊥`` is applied ``rank`` times to a scalar; in
    3D a curl is applied on every index of a symmetric potential.
    """
    n = grid.dim
    y = grid.symbol
    if n == 2:
        psi = _fft(_random_scalar(spec, grid, rng), 2)
        rot = 1j * np.stack([-y[1], y[0]])
        return _ifft(st.vec_power_coeffs(rot, rank) * psi[None], grid)
    pot = _fft(_raw_field(spec, grid, rank, rng), 3)
    dense = st.to_dense_coeffs(pot, 3, rank)
    curl = np.zeros((3, 3) + grid.fshape, dtype=complex)
    for i, a, b, sign in ((0, 1, 2, 1), (0, 2, 1, -1), (1, 2, 0, 1), (1, 0, 2, -1), (2, 0, 1, 1), (2, 1, 0, -1)):
        curl[i, b] += sign * 1j * y[a]
    for ax in range(rank):
        dense = _apply_on_axis(curl, dense, ax)
    return _ifft(st.symmetrize_dense(dense, 3, rank), grid)


def _apply_on_axis(mat: np.ndarray, dense: np.ndarray, axis: int) -> np.ndarray:
    """Contract ``mat[i, b, ...]`` with index ``axis`` of ``dense`` (pointwise in frequency)."""
    moved = np.moveaxis(dense, axis, 0)
    out = np.einsum("ib...,b...->i...", mat, moved)
    return np.moveaxis(out, 0, axis)


def gaussian_phantom(spec: PhantomSpec, grid: Grid, m: int) -> TensorField:
    """Deterministic random rank-``m`` phantom, normalized to max |value| = amplitude."""
    rng = np.random.default_rng(spec.seed)
    if spec.target == "potential":
        if spec.order > m:
            raise ValueError(f"potential order {spec.order} exceeds rank {m}")
        base = gaussian_phantom(
            PhantomSpec(spec.kind, spec.bumps, spec.width, spec.radius, spec.degree, 1.0, spec.seed, "raw"),
            grid,
            m - spec.order,
        )
        for _ in range(spec.order):
            base = d_field(base)
        data = base.data
    elif spec.target == "solenoidal" and m >= 1:
        data = _solenoidal_field(spec, grid, m, rng)
    else:
        data = _raw_field(spec, grid, m, rng)
    peak = np.abs(data).max()
    data = data * (spec.amplitude / peak) if peak > 0 else data
    out = TensorField(grid, m, data)
    check_decay(out)
    return out


def stacked_phantom(
    grid: Grid, m: int, seed: int = 0, spec: PhantomSpec | None = None
) -> tuple[list[TensorField], TensorField]:
    """Components ``v_0 .. v_m`` (solenoidal except ``v_m``) and ``f = sum d^i v_i``.

    Each ``v_i`` is scaled so that ``d^i v_i`` has max |value| equal to the
    spec amplitude, so every term contributes comparably to ``f``.
    """
    spec = spec or PhantomSpec()
    comps = []
    for i in range(m + 1):
        target = "solenoidal" if i < m else "raw"
        sub = PhantomSpec(spec.kind, spec.bumps, spec.width, spec.radius, spec.degree, 1.0, seed * 101 + i, target)
        v = gaussian_phantom(sub, grid, m - i)
        w = v
        for _ in range(i):
            w = d_field(w)
        comps.append(v * (spec.amplitude / w.max_abs()) if w.max_abs() > 0 else v)
    return comps, compose_potentials(comps)
