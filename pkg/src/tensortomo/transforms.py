"""Transversal, longitudinal and weighted Radon transforms of tensor fields.

Each transform contracts the field with a per-direction tensor built from the
frame ``(ω_1, ..., ω_{n-1}, ω)`` and integrates over hyperplanes, optionally
against monomials in the in-plane coordinates ``t_i = <x, ω_i>``.
"""
from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from . import symtensor as st
from .field import BOUNDARY_TOL, DecayError, TensorField
from .scalar_radon import (
    DirectionSet,
    MomentTerm,
    PGrid,
    Sinogram,
    contraction_weights,
    moment_integrals,
)

FAMILIES = ("radon", "lrt", "trt", "wlrt", "wtrt")
FAMILY_TAGS = {name: tag for tag, name in enumerate(FAMILIES)}


class MissingDataError(LookupError):
    """A dataset required by a reconstruction stage is absent or incomplete."""


@dataclass(frozen=True)
class TensorSinogram:
    """Componentwise Radon data; ``data[c, d, k]`` for component ``c``."""

    directions: DirectionSet
    pgrid: PGrid
    rank: int
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        d = np.array(self.data, dtype=float)
        expected = (st.sym_dim(self.directions.dim, self.rank), len(self.directions), self.pgrid.count)
        if d.shape != expected:
            raise ValueError(f"expected data shape {expected}, got {d.shape}")
        d.setflags(write=False)
        object.__setattr__(self, "data", d)

    @property
    def dim(self) -> int:
        return self.directions.dim

    def component(self, c: int) -> Sinogram:
        return Sinogram(self.directions, self.pgrid, self.data[c])

    def contract(self, tensors: np.ndarray) -> Sinogram:
        """Full contraction with one tensor per direction, ``tensors`` of shape ``(sym_dim, ndir)``."""
        vals = st.inner_coeffs(self.data, np.asarray(tensors)[..., None], self.dim, self.rank)
        return Sinogram(self.directions, self.pgrid, vals)


@dataclass(frozen=True)
class WeightedDataset:
    """Sinograms of one transform family and order, keyed by multi-index."""

    family: str
    order: int
    rank: int
    entries: dict = field(repr=False)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")

    def __len__(self) -> int:
        return len(self.entries)

    def __getitem__(self, ell) -> Sinogram:
        return self.entries[tuple(ell)]

    def keys(self):
        return self.entries.keys()

    def require(self, ells) -> None:
        missing = [ell for ell in ells if tuple(ell) not in self.entries]
        if missing:
            raise MissingDataError(f"{self.family} order {self.order} dataset is missing multi-indices {missing}")


def _check_ell(ell: Sequence[int], n: int, total: int, what: str) -> tuple[int, ...]:
    ell = tuple(int(e) for e in ell)
    if len(ell) != n - 1 or min(ell, default=0) < 0 or sum(ell) != total:
        raise ValueError(f"{what} needs {n - 1} non-negative entries summing to {total}, got {ell}")
    return ell


def _check_dims(f: TensorField, dirs: DirectionSet):
    if f.dim != dirs.dim:
        raise ValueError(f"field dimension {f.dim} differs from direction dimension {dirs.dim}")


def _check_weighted_decay(f: TensorField, degree: int) -> None:
    """The integrand ``|x|^degree * f`` must still vanish at the box boundary."""
    if degree == 0:
        return
    r = np.sqrt((f.grid.coords**2).sum(axis=0))
    weighted = TensorField(f.grid, f.rank, f.data * r**degree)
    ratio = weighted.boundary_ratio()
    if ratio > BOUNDARY_TOL:
        raise DecayError(f"weighted integrand boundary ratio {ratio:.3e} exceeds {BOUNDARY_TOL:.1e}")


def in_plane_monomials(dirs: DirectionSet, ell: Sequence[int], extra_omega: int = 0) -> np.ndarray:
    """Coefficients of ``ω_1^{l_1} ⊙ ... ⊙ ω_{n-1}^{l_{n-1}} ⊙ ω^{extra}`` per direction."""
    return st.frame_monomial_coeffs(dirs.frame_vectors, tuple(ell) + (extra_omega,))


def _integrate(f, tensors, powers, dirs, pgrid, order) -> Sinogram:
    term = MomentTerm(f, contraction_weights(tensors, f.dim, f.rank), tuple(powers))
    return Sinogram(dirs, pgrid, moment_integrals([term], dirs, pgrid, order))


def trt(f: TensorField, dirs: DirectionSet, pgrid: PGrid, order: int = 3) -> Sinogram:
    """Hyperplane integrals of ``<f, ω^m>``."""
    _check_dims(f, dirs)
    tensors = st.vec_power_coeffs(dirs.omega, f.rank)
    return _integrate(f, tensors, (0,) * (f.dim - 1), dirs, pgrid, order)


def lrt(f: TensorField, ell: Sequence[int], dirs: DirectionSet, pgrid: PGrid, order: int = 3) -> Sinogram:
    """Hyperplane integrals of ``<f, ω_1^{l_1} ⊙ ... ⊙ ω_{n-1}^{l_{n-1}}>``."""
    _check_dims(f, dirs)
    ell = _check_ell(ell, f.dim, f.rank, "longitudinal multi-index")
    return _integrate(f, in_plane_monomials(dirs, ell), (0,) * (f.dim - 1), dirs, pgrid, order)


def weighted_trt(
    f: TensorField, k: int, ell: Sequence[int], dirs: DirectionSet, pgrid: PGrid, order: int = 3
) -> Sinogram:
    """Hyperplane integrals of ``t_1^{l_1} ... t_{n-1}^{l_{n-1}} <f, ω^m>`` with ``|l| = k``."""
    _check_dims(f, dirs)
    if not 1 <= k <= f.rank:
        raise ValueError(f"weighted order must satisfy 1 <= k <= {f.rank}, got {k}")
    ell = _check_ell(ell, f.dim, k, "weight multi-index")
    _check_weighted_decay(f, k)
    tensors = st.vec_power_coeffs(dirs.omega, f.rank)
    return _integrate(f, tensors, ell, dirs, pgrid, order)


def weighted_lrt(
    f: TensorField, k: int, ell: Sequence[int], dirs: DirectionSet, pgrid: PGrid, order: int = 3
) -> Sinogram:
    """Hyperplane integrals of ``t_1^k <f, ω_1^{l_1 + k} ⊙ ω_2^{l_2} ⊙ ...>`` with ``|l| = m - k``.

    Only the weights concentrated on the first in-plane direction are provided;
    they suffice for reconstruction.
    """
    _check_dims(f, dirs)
    if not 1 <= k <= f.rank:
        raise ValueError(f"weighted order must satisfy 1 <= k <= {f.rank}, got {k}")
    ell = _check_ell(ell, f.dim, f.rank - k, "longitudinal multi-index")
    _check_weighted_decay(f, k)
    shifted = (ell[0] + k,) + ell[1:]
    powers = (k,) + (0,) * (f.dim - 2)
    return _integrate(f, in_plane_monomials(dirs, shifted), powers, dirs, pgrid, order)


def componentwise_radon(f: TensorField, dirs: DirectionSet, pgrid: PGrid, order: int = 3) -> TensorSinogram:
    """Scalar Radon transform of every stored component."""
    _check_dims(f, dirs)
    s = st.sym_dim(f.dim, f.rank)
    ndir = len(dirs)
    rows = []
    for c in range(s):
        single = TensorField.scalar(f.grid, f.data[c])
        rows.append(moment_integrals([MomentTerm(single, np.ones((1, ndir)), (0,) * (f.dim - 1))], dirs, pgrid, order))
    return TensorSinogram(dirs, pgrid, f.rank, np.stack(rows))


def dataset_indices(family: str, n: int, m: int, k: int) -> tuple[tuple[int, ...], ...]:
    """Multi-indices over ``n - 1`` slots that a dataset of the family enumerates."""
    if family in ("radon", "trt"):
        return ((0,) * (n - 1),)
    if family == "lrt":
        return st.multi_indices(n - 1, m)
    if family == "wtrt":
        return st.multi_indices(n - 1, k)
    if family == "wlrt":
        return st.multi_indices(n - 1, m - k)
    raise ValueError(f"unknown family {family!r}")


def make_dataset(
    f: TensorField, family: str, k: int, dirs: DirectionSet, pgrid: PGrid, order: int = 3
) -> WeightedDataset:
    """All sinograms of one family and order, in lexicographic multi-index order."""
    family = family.lower()
    m, n = f.rank, f.dim
    if family in ("wlrt", "wtrt") and not 1 <= k <= m:
        raise ValueError(f"weighted order must satisfy 1 <= k <= {m}, got {k}")
    if family == "radon" and m != 0:
        raise ValueError("the classical Radon family needs a scalar field")
    entries = {}
    for ell in dataset_indices(family, n, m, k):
        if family == "radon" or family == "trt":
            entries[ell] = trt(f, dirs, pgrid, order)
        elif family == "lrt":
            entries[ell] = lrt(f, ell, dirs, pgrid, order)
        elif family == "wtrt":
            entries[ell] = weighted_trt(f, k, ell, dirs, pgrid, order)
        else:
            entries[ell] = weighted_lrt(f, k, ell, dirs, pgrid, order)
    return WeightedDataset(family, 0 if family in ("radon", "trt", "lrt") else k, m, entries)
