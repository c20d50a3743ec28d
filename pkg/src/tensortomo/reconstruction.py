"""Recovery of ``f = v_0 + d v_1 + ... + d^m v_m`` from hyperplane data (n = 2).

Two pipelines are provided.  The longitudinal one recovers ``v_0`` from the
longitudinal transform, then ``v_1, ..., v_m`` in turn from the weighted
longitudinal transforms.  The transversal one recovers ``v_m`` from the
transversal transform, then ``v_{m-1}, ..., v_0`` from the weighted
transversal transforms.  Every stage builds the componentwise Radon data of
a tensor field from its frame coefficients (only in-plane monomials survive),
inverts it by filtered backprojection and finishes with a spectral solve.
"""
from __future__ import annotations

import io
import math
import time
from collections.abc import Mapping, Sequence
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from . import symtensor as st
from .decomposition import poisson_invert, solve_delta_d_k
from .field import (
    Grid,
    TensorField,
    compose_potentials,
    d_field,
    div_field,
    gradient_components,
    l2_error,
    laplacian_field,
)
from .scalar_radon import (
    DEFAULT_CUTOFF,
    DirectionSet,
    MomentTerm,
    PGrid,
    Sinogram,
    contraction_weights,
    moment_integrals,
    p_derivative,
    radon_invert,
)
from .transforms import (
    MissingDataError,
    TensorSinogram,
    WeightedDataset,
    dataset_indices,
    in_plane_monomials,
    make_dataset,
)

_clock: dict | None = None


@contextmanager
def _timed(kind: str):
    """Add the elapsed time to ``kind`` of the stage clock set by a driver, if any."""
    t0 = time.perf_counter()
    try:
        yield
    finally:
        if _clock is not None:
            _clock[kind] = _clock.get(kind, 0.0) + time.perf_counter() - t0


@contextmanager
def _stage(stages: list, **info):
    global _clock
    outer, _clock = _clock, {"correction": 0.0, "invert": 0.0, "solve": 0.0}
    t0 = time.perf_counter()
    try:
        yield
    finally:
        info.update({f"{key}_seconds": val for key, val in _clock.items()})
        info["seconds"] = time.perf_counter() - t0
        stages.append(info)
        _clock = outer


def _factorial_ratio(m: int, ell: Sequence[int]) -> float:
    return math.factorial(m) / math.prod(math.factorial(e) for e in ell)


def assemble_in_plane(
    coefficients: Mapping[tuple[int, ...], np.ndarray], dirs: DirectionSet, pgrid: PGrid, rank: int
) -> TensorSinogram:
    """Componentwise data from in-plane frame coefficients ``<R̄u, B_l>``.

    Coefficients of monomials containing ``ω`` are taken to be zero; the
    remaining ones are combined with the dual weights ``rank! / l!``.
    """
    n = dirs.dim
    out = np.zeros((st.sym_dim(n, rank), len(dirs), pgrid.count))
    for ell in st.multi_indices(n - 1, rank):
        if tuple(ell) not in coefficients:
            raise MissingDataError(f"frame coefficient for multi-index {tuple(ell)} is missing")
        mono = in_plane_monomials(dirs, ell)
        out += _factorial_ratio(rank, ell) * mono[:, :, None] * np.asarray(coefficients[tuple(ell)])[None]
    return TensorSinogram(dirs, pgrid, rank, out)


def invert_componentwise(ts: TensorSinogram, grid: Grid, cutoff: float = DEFAULT_CUTOFF) -> TensorField:
    """Filtered backprojection of every component."""
    with _timed("invert"):
        comps = [radon_invert(ts.component(c), grid, cutoff).data[0] for c in range(ts.data.shape[0])]
    return support_taper(TensorField(grid, ts.rank, np.stack(comps)))


TAPER = (0.8, 0.95)


def support_taper(u: TensorField, inner: float = TAPER[0], outer: float = TAPER[1]) -> TensorField:
    """Radial cosine roll-off from ``inner`` to ``outer`` times the inscribed radius.

    Filtered backprojections of noisy data do not decay towards the box edge,
    and the periodic solvers would fold that edge content into the lowest
    frequencies.  Fields that satisfy the decay precondition are unchanged.
    """
    grid = u.grid
    lo = np.asarray(grid.origin)
    hi = lo + np.asarray(grid.spacing) * np.asarray(grid.shape)
    center = 0.5 * (lo + hi)
    radius = 0.5 * float((hi - lo).min())
    r = np.sqrt(((grid.coords - center.reshape((-1,) + (1,) * grid.dim)) ** 2).sum(axis=0)) / radius
    w = 0.5 * (1 + np.cos(np.pi * np.clip((r - inner) / (outer - inner), 0.0, 1.0)))
    return TensorField(grid, u.rank, u.data * w)


def _dataset_geometry(ds: WeightedDataset) -> tuple[DirectionSet, PGrid]:
    if not ds.entries:
        raise MissingDataError(f"{ds.family} order {ds.order} dataset is empty")
    first = next(iter(ds.entries.values()))
    return first.directions, first.pgrid


# --- longitudinal pipeline ----------------------------------------------------


def recover_v0_from_lrt(ds: WeightedDataset, grid: Grid, cutoff: float = DEFAULT_CUTOFF) -> TensorField:
    """Solenoidal part ``v_0`` from the longitudinal transform of every in-plane monomial."""
    if ds.family != "lrt":
        raise ValueError(f"expected a longitudinal dataset, got {ds.family!r}")
    dirs, pgrid = _dataset_geometry(ds)
    ells = dataset_indices("lrt", dirs.dim, ds.rank, 0)
    ds.require(ells)
    coeffs = {ell: ds[ell].data for ell in ells}
    return invert_componentwise(assemble_in_plane(coeffs, dirs, pgrid, ds.rank), grid, cutoff)


def _known_head(known: Sequence[TensorField], m: int) -> TensorField:
    """``v_0 + d v_1 + ... + d^{k-1} v_{k-1}`` from already recovered components."""
    for i, v in enumerate(known):
        if v.rank != m - i:
            raise ValueError(f"known component {i} has rank {v.rank}, expected {m - i}")
    return compose_potentials(list(known), check=False)


def wlrt_correction(
    head: TensorField, k: int, ell: Sequence[int], dirs: DirectionSet, pgrid: PGrid, order: int = 3
) -> Sinogram:
    """Radon data of ``Δ(t_1^k <F, ω_1^{l_1+k} ⊙ ...>)`` for a known field ``F``.

    The Laplacian is expanded by the product rule so that only ``F``, its
    first derivatives and its componentwise Laplacian are sampled.
    """
    n, m = head.dim, head.rank
    shifted = (ell[0] + k,) + tuple(ell[1:])
    weights = contraction_weights(in_plane_monomials(dirs, shifted), n, m)
    pad = (0,) * (n - 2)
    terms = []
    if k >= 2:
        terms.append(MomentTerm(head, weights, (k - 2,) + pad, k * (k - 1)))
    w1 = dirs.in_plane(0)
    for a, grad in enumerate(gradient_components(head, check=False)):
        terms.append(MomentTerm(grad, weights * w1[a][None], (k - 1,) + pad, 2.0 * k))
    terms.append(MomentTerm(laplacian_field(head, check=False), weights, (k,) + pad))
    return Sinogram(dirs, pgrid, moment_integrals(terms, dirs, pgrid, order, check_support=False))


def recover_vk_from_wlrt(
    k: int,
    ds: WeightedDataset,
    known: Sequence[TensorField],
    grid: Grid,
    cutoff: float = DEFAULT_CUTOFF,
    order: int = 3,
) -> TensorField:
    """Component ``v_k`` from the order-``k`` weighted longitudinal data and ``v_0 .. v_{k-1}``."""
    if ds.family != "wlrt" or ds.order != k:
        raise ValueError(f"expected a weighted longitudinal dataset of order {k}")
    m = ds.rank
    if not 1 <= k <= m:
        raise ValueError(f"order must satisfy 1 <= k <= {m}")
    if len(known) != k:
        raise MissingDataError(f"stage {k} needs the {k} previously recovered components, got {len(known)}")
    dirs, pgrid = _dataset_geometry(ds)
    ells = dataset_indices("wlrt", dirs.dim, m, k)
    ds.require(ells)
    head = _known_head(known, m)
    scale = 1.0 / ((-1) ** k * math.factorial(k))
    coeffs = {}
    for ell in ells:
        second = p_derivative(ds[ell], 2, cutoff)
        with _timed("correction"):
            corr = wlrt_correction(head, k, ell, dirs, pgrid, order)
        coeffs[ell] = scale * (second.data - corr.data)
    lap = invert_componentwise(assemble_in_plane(coeffs, dirs, pgrid, m - k), grid, cutoff)
    with _timed("solve"):
        return poisson_invert(support_taper(lap), check=False)


# --- transversal pipeline -----------------------------------------------------


def recover_vm_from_trt(
    s: Sinogram, grid: Grid, m: int, cutoff: float = DEFAULT_CUTOFF
) -> TensorField:
    """Scalar potential ``v_m`` from the transversal transform."""
    with _timed("invert"):
        h = radon_invert(p_derivative(s, m, cutoff), grid, cutoff)
    with _timed("solve"):
        return solve_delta_d_k(support_taper(h), m, check=False)


def _leibniz_terms(tail_divs: Sequence[TensorField], ell: Sequence[int], dirs: DirectionSet, m: int):
    """Integrand terms of ``δ^m(t^l F)`` given ``tail_divs[q] = δ^q F``."""
    n = dirs.dim
    terms = []
    for j in np.ndindex(*(e + 1 for e in ell)):
        q = sum(j)
        coef = math.factorial(m) / (math.factorial(m - q) * math.prod(math.factorial(a) for a in j))
        coef *= math.prod(math.factorial(e) // math.factorial(e - a) for e, a in zip(ell, j))
        g = tail_divs[m - q]
        weights = contraction_weights(in_plane_monomials(dirs, j), n, q)
        terms.append(MomentTerm(g, weights, tuple(e - a for e, a in zip(ell, j)), coef))
    return terms


def wtrt_correction(
    tail: TensorField, ell: Sequence[int], dirs: DirectionSet, pgrid: PGrid, order: int = 3
) -> Sinogram:
    """Radon data of ``δ^m(t_1^{l_1} ... t_{n-1}^{l_{n-1}} F)`` for a known rank-m field ``F``."""
    m = tail.rank
    divs = [tail]
    for _ in range(m):
        divs.append(div_field(divs[-1], check=False))
    terms = _leibniz_terms(divs, ell, dirs, m)
    return Sinogram(dirs, pgrid, moment_integrals(terms, dirs, pgrid, order, check_support=False))


def recover_vmk_from_wtrt(
    k: int,
    ds: WeightedDataset,
    known: Sequence[TensorField],
    grid: Grid,
    cutoff: float = DEFAULT_CUTOFF,
    order: int = 3,
) -> TensorField:
    """Component ``v_{m-k}`` from the order-``k`` weighted transversal data.

    ``known`` holds ``v_{m-k+1}, ..., v_m`` in increasing index order.
    """
    if ds.family != "wtrt" or ds.order != k:
        raise ValueError(f"expected a weighted transversal dataset of order {k}")
    m = ds.rank
    if not 1 <= k <= m:
        raise ValueError(f"order must satisfy 1 <= k <= {m}")
    if len(known) != k:
        raise MissingDataError(f"stage {k} needs the {k} previously recovered components, got {len(known)}")
    dirs, pgrid = _dataset_geometry(ds)
    ells = dataset_indices("wtrt", dirs.dim, m, k)
    ds.require(ells)
    total = np.zeros((st.sym_dim(grid.dim, m),) + grid.shape)
    for i, v in enumerate(known):
        j = m - k + 1 + i
        if v.rank != m - j:
            raise ValueError(f"known component v_{j} has rank {v.rank}, expected {m - j}")
        w = v
        for _ in range(j):
            w = d_field(w, check=False)
        total += w.data
    tail = TensorField(grid, m, total)
    scale = math.factorial(m - k) / math.factorial(m)
    coeffs = {}
    for ell in ells:
        dm = p_derivative(ds[ell], m, cutoff)
        with _timed("correction"):
            corr = wtrt_correction(tail, ell, dirs, pgrid, order)
        coeffs[ell] = scale * (dm.data - corr.data)
    s = invert_componentwise(assemble_in_plane(coeffs, dirs, pgrid, k), grid, cutoff)
    with _timed("solve"):
        return solve_delta_d_k(support_taper(s), m - k, check=False)


# --- drivers ------------------------------------------------------------------


@dataclass(frozen=True)
class ReconstructionReport:
    """Recovered components with optional error diagnostics."""

    pipeline: str
    components: tuple[TensorField, ...] = field(repr=False)
    component_errors: tuple[float, ...] | None
    composed_error: float | None
    stages: tuple[dict, ...]
    settings: dict

    def compose(self) -> TensorField:
        return compose_potentials(list(self.components), check=False)

    def to_text(self) -> str:
        """Key-value record, one ``key = value`` per line."""
        lines = [f"pipeline = {self.pipeline}"]
        lines += [f"{key} = {val}" for key, val in sorted(self.settings.items())]
        if self.composed_error is not None:
            lines.append(f"composed_error = {self.composed_error:.6e}")
        if self.component_errors is not None:
            lines += [f"error_v{i} = {e:.6e}" for i, e in enumerate(self.component_errors)]
        for st_ in self.stages:
            lines.append(
                f"stage_v{st_['component']} = order {st_['order']}, p_derivatives {st_['p_derivatives']}, "
                f"correction {st_['correction_seconds']:.3f} s, invert {st_['invert_seconds']:.3f} s, "
                f"solve {st_['solve_seconds']:.3f} s, total {st_['seconds']:.3f} s"
            )
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("component,rank,rel_error\n")
        m = len(self.components) - 1
        for i in range(len(self.components)):
            err = "" if self.component_errors is None else f"{self.component_errors[i]:.6e}"
            buf.write(f"v{i},{m - i},{err}\n")
        if self.composed_error is not None:
            buf.write(f"composed,{m},{self.composed_error:.6e}\n")
        return buf.getvalue()


def _errors(components, truth):
    if truth is None:
        return None, None
    truth = list(truth)
    comp_err = tuple(l2_error(c, t) for c, t in zip(components, truth))
    composed = l2_error(compose_potentials(list(components), check=False), compose_potentials(truth, check=False))
    return comp_err, composed


def reconstruct_from_lrt(
    lrt_data: WeightedDataset,
    wlrt_data: Mapping[int, WeightedDataset],
    grid: Grid,
    m: int,
    truth: Sequence[TensorField] | None = None,
    cutoff: float = DEFAULT_CUTOFF,
    order: int = 3,
) -> ReconstructionReport:
    """Recover ``v_0`` first, then ``v_1, ..., v_m``."""
    if lrt_data.rank != m:
        raise ValueError(f"longitudinal data is for rank {lrt_data.rank}, expected {m}")
    stages = []
    with _stage(stages, component=0, order=0, p_derivatives=0):
        comps = [recover_v0_from_lrt(lrt_data, grid, cutoff)]
    for k in range(1, m + 1):
        if k not in wlrt_data:
            raise MissingDataError(f"weighted longitudinal data of order {k} is missing")
        with _stage(stages, component=k, order=k, p_derivatives=2):
            comps.append(recover_vk_from_wlrt(k, wlrt_data[k], comps, grid, cutoff, order))
    comp_err, composed = _errors(comps, truth)
    settings = {"cutoff": cutoff, "interp_order": order, "rank": m, "grid": grid.shape[0]}
    return ReconstructionReport("lrt", tuple(comps), comp_err, composed, tuple(stages), settings)


def reconstruct_from_trt(
    trt_data: WeightedDataset | Sinogram,
    wtrt_data: Mapping[int, WeightedDataset],
    grid: Grid,
    m: int,
    truth: Sequence[TensorField] | None = None,
    cutoff: float = DEFAULT_CUTOFF,
    order: int = 3,
) -> ReconstructionReport:
    """Recover ``v_m`` first, then ``v_{m-1}, ..., v_0``."""
    if isinstance(trt_data, WeightedDataset):
        trt_data = next(iter(trt_data.entries.values()))
    stages = []
    with _stage(stages, component=m, order=0, p_derivatives=m):
        recovered = {m: recover_vm_from_trt(trt_data, grid, m, cutoff)}
    for k in range(1, m + 1):
        if k not in wtrt_data:
            raise MissingDataError(f"weighted transversal data of order {k} is missing")
        known = [recovered[j] for j in range(m - k + 1, m + 1)]
        with _stage(stages, component=m - k, order=k, p_derivatives=m):
            recovered[m - k] = recover_vmk_from_wtrt(k, wtrt_data[k], known, grid, cutoff, order)
    comps = [recovered[i] for i in range(m + 1)]
    comp_err, composed = _errors(comps, truth)
    settings = {"cutoff": cutoff, "interp_order": order, "rank": m, "grid": grid.shape[0]}
    return ReconstructionReport("trt", tuple(comps), comp_err, composed, tuple(stages), settings)


def pipeline_datasets(
    f: TensorField, pipeline: str, dirs: DirectionSet, pgrid: PGrid, order: int = 3
) -> tuple[WeightedDataset, dict[int, WeightedDataset]]:
    """Forward data consumed by one pipeline: the plain family plus weighted orders ``1..m``."""
    if pipeline not in ("lrt", "trt"):
        raise ValueError(f"unknown pipeline {pipeline!r}")
    base = make_dataset(f, pipeline, 0, dirs, pgrid, order)
    weighted = {k: make_dataset(f, "w" + pipeline, k, dirs, pgrid, order) for k in range(1, f.rank + 1)}
    return base, weighted


def add_noise(ds: WeightedDataset, level: float, rng: np.random.Generator) -> WeightedDataset:
    """White Gaussian noise whose norm is ``level`` times the norm of each sinogram."""
    entries = {}
    for ell, s in ds.entries.items():
        scale = level * float(np.sqrt(np.mean(s.data**2)))
        entries[ell] = s.with_data(s.data + scale * rng.standard_normal(s.data.shape))
    return WeightedDataset(ds.family, ds.order, ds.rank, entries)
