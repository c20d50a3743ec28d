"""Independent references and the operator-identity suite.

The dense references work on full ``n x ... x n`` arrays with literal index
loops and share no code with :mod:`tensortomo.symtensor`.  The identity suite
evaluates both sides of every statement through separate code paths and
reports one residual per identity.
"""
from __future__ import annotations

import csv
import io
import itertools
import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import symtensor as st
from .field import (
    Grid,
    PhantomSpec,
    TensorField,
    d_field,
    div_field,
    from_spectrum,
    gaussian_phantom,
    gradient_components,
    laplacian_field,
    spectrum,
)
from .scalar_radon import DirectionSet, PGrid, frame_of, p_derivative, radon_forward
from .transforms import in_plane_monomials, lrt, trt

DENSE_MAX_DIM = 4
DENSE_MAX_RANK = 4


# --- dense array references ---------------------------------------------------


def _check_dense(n: int, m: int) -> None:
    if n > DENSE_MAX_DIM or m > DENSE_MAX_RANK:
        raise ValueError(f"dense reference is capped at n <= {DENSE_MAX_DIM}, m <= {DENSE_MAX_RANK}")


def _dense_symmetrize(a: np.ndarray) -> np.ndarray:
    m = a.ndim
    if m == 0:
        return a.copy()
    n = a.shape[0]
    _check_dense(n, m)
    out = np.zeros_like(a, dtype=float)
    perms = list(itertools.permutations(range(m)))
    for idx in itertools.product(range(n), repeat=m):
        total = 0.0
        for perm in perms:
            total += a[tuple(idx[k] for k in perm)]
        out[idx] = total / len(perms)
    return out


def _dense_outer(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.ndim + b.ndim == 0:
        return np.asarray(a * b, dtype=float)
    n = (a.shape + b.shape)[0]
    out = np.zeros((n,) * (a.ndim + b.ndim))
    for ia in itertools.product(range(n), repeat=a.ndim):
        for ib in itertools.product(range(n), repeat=b.ndim):
            out[ia + ib] = a[ia] * b[ib]
    return out


def _dense_contract(x: np.ndarray, a: np.ndarray) -> np.ndarray:
    n = a.shape[0]
    out = np.zeros((n,) * (a.ndim - 1))
    for idx in itertools.product(range(n), repeat=a.ndim - 1):
        out[idx] = sum(a[idx + (k,)] * x[k] for k in range(n))
    return out


def _dense_inner(a: np.ndarray, b: np.ndarray) -> float:
    n = a.shape[0] if a.ndim else 1
    return float(sum(a[idx] * b[idx] for idx in itertools.product(range(n), repeat=a.ndim)))


def dense_reference(op_name: str, *inputs):
    """Literal index-summation reference for the pointwise tensor operations.

    Supported operations: ``symmetrize(a)``, ``sym_product(a, b)``,
    ``i_vec(x, a)``, ``j_vec(x, a)``, ``inner(a, b)`` and ``vec_power(w, m)``,
    all on full arrays (rank-0 tensors are 0-d arrays).
    """
    if op_name == "symmetrize":
        (a,) = inputs
        return _dense_symmetrize(np.asarray(a, dtype=float))
    if op_name == "sym_product":
        a, b = (np.asarray(v, dtype=float) for v in inputs)
        _check_dense((a.shape + b.shape + (1,))[0], a.ndim + b.ndim)
        return _dense_symmetrize(_dense_outer(a, b))
    if op_name == "i_vec":
        x, a = (np.asarray(v, dtype=float) for v in inputs)
        _check_dense(x.size, a.ndim + 1)
        return _dense_symmetrize(_dense_outer(a, x))
    if op_name == "j_vec":
        x, a = (np.asarray(v, dtype=float) for v in inputs)
        if a.ndim == 0:
            raise ValueError("cannot contract a rank-0 tensor")
        _check_dense(x.size, a.ndim)
        return _dense_contract(x, a)
    if op_name == "inner":
        a, b = (np.asarray(v, dtype=float) for v in inputs)
        return _dense_inner(a, b)
    if op_name == "vec_power":
        w, m = inputs
        w = np.asarray(w, dtype=float)
        _check_dense(w.size, m)
        out = np.array(1.0)
        for _ in range(m):
            out = _dense_outer(out, w)
        return out
    raise ValueError(f"unknown operation {op_name!r}")


# --- differential references --------------------------------------------------


def brute_delta_power(g: TensorField, p: int) -> TensorField:
    """``δ^p g`` by applying the divergence ``p`` times."""
    if p < 0 or p > g.rank:
        raise ValueError(f"cannot take {p} divergences of a rank-{g.rank} field")
    out = g
    for _ in range(p):
        out = div_field(out, check=False)
    return out


def delta_d_coefficients(ell: int, m: int) -> tuple[Fraction, ...]:
    """Exact ``c_0 .. c_ell`` with ``δ^ell d^ell = sum_i c_i Δ^{ell-i} (dδ)^i`` on rank ``m``.

    Built by writing ``δ^ell d^ell = δ (δ^{ell-1} d^{ell-1}) d`` and using the
    first-order splitting ``δd = Δ/(r+1) + r/(r+1) dδ`` on rank ``r``; all
    operators involved commute with the componentwise Laplacian.
    """
    if ell < 0:
        raise ValueError("order must be non-negative")

    def rec(p: int, r: int) -> list[Fraction]:
        if p == 0:
            return [Fraction(1)]
        prev = rec(p - 1, r + 1)
        a, b = Fraction(1, r + 1), Fraction(r, r + 1)
        out = [Fraction(0)] * (p + 1)
        for i, c in enumerate(prev):
            for j in range(i + 2):
                out[j] += c * math.comb(i + 1, j) * a ** (i + 1 - j) * b**j
        return out

    return tuple(rec(ell, m))


def apply_delta_d_expansion(v: TensorField, coeffs: Sequence[Fraction]) -> TensorField:
    """``sum_i c_i Δ^{ell-i} (dδ)^i v`` with ``ell = len(coeffs) - 1``."""
    ell = len(coeffs) - 1
    total = TensorField.zeros(v.grid, v.rank)
    for i, c in enumerate(coeffs):
        if c == 0:
            continue
        w = v
        for _ in range(i):
            w = d_field(div_field(w, check=False), check=False)
        for _ in range(ell - i):
            w = laplacian_field(w, check=False)
        total = total + float(c) * w
    return total


def _contract_vectors(u: TensorField, vectors: Sequence[np.ndarray]) -> TensorField:
    """Partial contraction of ``u`` with the given constant vectors, one index each."""
    data, rank = u.data, u.rank
    for x in vectors:
        data = st.j_vec_coeffs(np.asarray(x), data, u.dim, rank)
        rank -= 1
    return TensorField(u.grid, rank, data)


def weighted_divergence_expansion(
    f: TensorField, vectors: Sequence[np.ndarray], ell: Sequence[int], p: int
) -> TensorField:
    """Closed form of ``δ^p(t_1^{l_1} ... t_k^{l_k} f)`` with ``t_a = <x, vectors[a]>``.

    ``sum_j p!/((p-|j|)! j!) prod l_a!/(l_a-j_a)! t^{l-j} <δ^{p-|j|} f, v_1^{j_1}, ...>``
    where the last factor contracts ``|j|`` indices with the vectors.
    """
    x = f.grid.coords
    ts = [np.tensordot(np.asarray(vec), x, axes=(0, 0)) for vec in vectors]
    out = np.zeros((st.sym_dim(f.dim, f.rank - p),) + f.grid.shape)
    for j in itertools.product(*(range(e + 1) for e in ell)):
        q = sum(j)
        if q > p:
            continue
        coef = math.factorial(p) / (math.factorial(p - q) * math.prod(math.factorial(a) for a in j))
        coef *= math.prod(math.factorial(e) // math.factorial(e - a) for e, a in zip(ell, j))
        vecs = [np.asarray(vec) for vec, a in zip(vectors, j) for _ in range(a)]
        term = _contract_vectors(brute_delta_power(f, p - q), vecs)
        weight = np.ones(f.grid.shape)
        for t, e, a in zip(ts, ell, j):
            weight = weight * t ** (e - a)
        out += coef * weight * term.data
    return TensorField(f.grid, f.rank - p, out)


def single_weight_divergence(f: TensorField, w: np.ndarray, k: int) -> TensorField:
    """``k <w, δ^{k-1} f> + <x, w> δ^k f``, the k-fold divergence of ``<x, w> f``."""
    t = np.tensordot(np.asarray(w), f.grid.coords, axes=(0, 0))
    first = _contract_vectors(brute_delta_power(f, k - 1), [w])
    second = brute_delta_power(f, k)
    return TensorField(f.grid, f.rank - k, k * first.data + t * second.data)


def power_weight_divergence(f: TensorField, w: np.ndarray, k: int) -> TensorField:
    """``δ^m(<x, w>^k f)`` for rank-m ``f`` as the binomial sum
    ``sum_i C(k, i) m!/(m-k+i)! <x, w>^i <w^{k-i}, δ^{m-k+i} f>``."""
    m = f.rank
    t = np.tensordot(np.asarray(w), f.grid.coords, axes=(0, 0))
    out = np.zeros(f.grid.shape)
    for i in range(k + 1):
        coef = math.comb(k, i) * math.factorial(m) // math.factorial(m - k + i)
        term = _contract_vectors(brute_delta_power(f, m - k + i), [w] * (k - i))
        out += coef * t**i * term.data[0]
    return TensorField.scalar(f.grid, out)


def binomial_step_residual(kmax: int = 12) -> int:
    """Largest |(i+1)C(k,i+1) + iC(k,i) - kC(k,i)| over ``k <= kmax``."""
    worst = 0
    for k in range(kmax + 1):
        for i in range(k + 1):
            worst = max(worst, abs((i + 1) * math.comb(k, i + 1) + i * math.comb(k, i) - k * math.comb(k, i)))
    return worst


# --- scale measures -----------------------------------------------------------


def spectral_scale(u: TensorField, order: int) -> float:
    """Norm of ``|∇|^order u``; the natural size of an order-``order`` operator applied to ``u``."""
    y = np.sqrt((u.grid.symbol**2).sum(axis=0))
    return from_spectrum(u.grid, u.rank, spectrum(u) * y**order).norm()


def pointwise_norm(u: TensorField) -> TensorField:
    """Scalar field ``|u(x)|`` in the full-contraction norm."""
    return TensorField.scalar(u.grid, np.sqrt(np.maximum(st.inner_coeffs(u.data, u.data, u.dim, u.rank), 0.0)))


def transform_scale(u: TensorField, dirs: DirectionSet, pgrid: PGrid) -> float:
    """``max R|u|``: bounds every contraction of ``u`` with unit tensors after integration."""
    return float(np.abs(radon_forward(pointwise_norm(u), dirs, pgrid).data).max())


def _rel_max(a: np.ndarray, b: np.ndarray) -> float:
    ref = np.abs(b).max()
    return float(np.abs(a - b).max() / ref) if ref > 0 else float(np.abs(a).max())


def _rel_l2(a: TensorField, b: TensorField) -> float:
    ref = b.norm()
    return (a - b).norm() / ref if ref > 0 else (a - b).norm()


# --- identity suite -----------------------------------------------------------


@dataclass(frozen=True)
class SuiteConfig:
    grid: int = 128
    directions: int = 180
    ranks: tuple[int, ...] = (1, 2)
    seed: int = 0
    instances: int = 200
    tolerance_scale: float = 1.0


@dataclass(frozen=True)
class IdentityResult:
    name: str
    anchor: str
    residual: float
    tolerance: float
    configuration: str

    @property
    def passed(self) -> bool:
        return self.residual <= self.tolerance


@dataclass(frozen=True)
class IdentityReport:
    config: SuiteConfig
    results: tuple[IdentityResult, ...] = field(repr=False)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def failures(self) -> list[str]:
        return [r.name for r in self.results if not r.passed]

    def to_text(self) -> str:
        lines = [f"{key} = {val}" for key, val in vars(self.config).items()]
        for r in self.results:
            lines.append(
                f"{'PASS' if r.passed else 'FAIL'} {r.name}: residual {r.residual:.3e} "
                f"tolerance {r.tolerance:.1e} [{r.configuration}] ({r.anchor})"
            )
        lines.append(f"overall = {'pass' if self.passed else 'fail'}")
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["name", "anchor", "residual", "tolerance", "passed", "configuration"])
        for r in self.results:
            writer.writerow([r.name, r.anchor, f"{r.residual:.6e}", f"{r.tolerance:.1e}", int(r.passed), r.configuration])
        return buf.getvalue()


IDENTITIES = {
    # name: (anchor, tolerance)
    "dense-algebra": ("pointwise products and contractions match literal index sums", 1e-12),
    "frame-expansion": ("dual-weighted frame monomial expansion is exact", 1e-12),
    "delta-d-splitting": ("δd = Δ/(m+1) + m/(m+1) dδ", 1e-8),
    "delta-d-powers": ("δ^l d^l = sum c_i Δ^(l-i) (dδ)^i with recursive coefficients", 1e-6),
    "solenoidal-powers": ("δ^(l+1) d^l s = 0 for solenoidal s", 1e-6),
    "radon-derivative": ("R(<a, ∇u>) = <ω, a> ∂p Ru", 1e-3),
    "longitudinal-kernel": ("potential fields are annihilated by the longitudinal transform", 1e-3),
    "transversal-kernel": ("sums of d^i of solenoidal fields (i < m) are annihilated by the transversal transform", 1e-3),
    "solenoidal-omega-moments": ("solenoidal fields integrate to zero against monomials containing ω", 1e-3),
    "transversal-shift": ("T^m(dv) = ∂p T^(m-1) v", 1e-2),
    "divergence-moment": ("R(δ^m g) = ∂p^m T^m g", 2e-2),
    "single-weight-divergence": ("δ^k(<x,w> f) = k <w, δ^(k-1) f> + <x,w> δ^k f", 1e-6),
    "power-weight-divergence": ("δ^m(<x,w>^k f) binomial expansion", 1e-6),
    "binomial-step": ("(i+1) C(k,i+1) + i C(k,i) = k C(k,i)", 0.0),
}


def algebra_residual(rng: np.random.Generator, count: int) -> float:
    """Worst deviation of the sorted-storage algebra from the dense references."""
    worst = 0.0
    for _ in range(count):
        n = int(rng.integers(2, DENSE_MAX_DIM + 1))
        p = int(rng.integers(0, 3))
        q = int(rng.integers(0, DENSE_MAX_RANK - p + 1))
        u = st.SymTensor.random(n, p, rng)
        v = st.SymTensor.random(n, q, rng)
        x = rng.standard_normal(n)
        du, dv = u.to_dense(), v.to_dense()
        worst = max(worst, np.abs(st.sym_product(u, v).to_dense() - dense_reference("sym_product", du, dv)).max())
        if p + 1 <= DENSE_MAX_RANK:
            worst = max(worst, np.abs(st.i_vec(x, u).to_dense() - dense_reference("i_vec", x, du)).max())
        if q >= 1:
            worst = max(worst, np.abs(st.j_vec(x, v).to_dense() - dense_reference("j_vec", x, dv)).max())
        if q >= 1:
            raw = rng.standard_normal((n,) * q)
            worst = max(worst, np.abs(st.symmetrize(raw).to_dense() - dense_reference("symmetrize", raw)).max())
        w = st.SymTensor.random(n, q, rng)
        worst = max(worst, abs(st.inner(v, w) - dense_reference("inner", dv, w.to_dense())))
    return float(worst)


def frame_residual(rng: np.random.Generator, count: int) -> float:
    """Worst coefficient error of expanding in a random frame and reassembling."""
    worst = 0.0
    for _ in range(count):
        n = int(rng.integers(2, 4))
        m = int(rng.integers(0, 5))
        omega = rng.standard_normal(n)
        omega /= np.linalg.norm(omega)
        u = st.SymTensor.random(n, m, rng)
        basis = st.frame_monomials(frame_of(omega), m)
        back = basis.reconstruct(basis.expand(u))
        worst = max(worst, np.abs(back.coeffs - u.coeffs).max())
    return float(worst)


def run_identity_suite(config: SuiteConfig | None = None) -> IdentityReport:
    """Evaluate every identity on seeded phantoms; deterministic for a given config."""
    config = config or SuiteConfig()
    rng = np.random.default_rng(config.seed)
    grid = Grid.centered(2, config.grid)
    dirs = DirectionSet.uniform(2, config.directions)
    pgrid = PGrid.covering(grid)
    ranks = tuple(config.ranks)
    res: dict[str, tuple[float, str]] = {}

    def phantom(m, target="raw", salt=0, order=0):
        spec = PhantomSpec(seed=config.seed * 1000 + salt, target=target, order=order)
        return gaussian_phantom(spec, grid, m)

    res["dense-algebra"] = (algebra_residual(rng, config.instances), f"{config.instances} random tensors, n<=4, m<=4")
    res["frame-expansion"] = (frame_residual(rng, config.instances), f"{config.instances} random frames, n<=3, m<=4")

    worst = 0.0
    for m in (1, 2, 3):
        v = phantom(m, salt=10 + m)
        lhs = div_field(d_field(v))
        rhs = laplacian_field(v) * (1 / (m + 1)) + d_field(div_field(v), check=False) * (m / (m + 1))
        worst = max(worst, _rel_l2(rhs, lhs))
    res["delta-d-splitting"] = (worst, f"grid {config.grid}^2, m in (1, 2, 3)")

    worst = 0.0
    for ell, m in ((2, 1), (2, 2), (3, 1)):
        v = phantom(m, salt=20 + 3 * ell + m)
        lhs = v
        for _ in range(ell):
            lhs = d_field(lhs, check=False)
        lhs = brute_delta_power(lhs, ell)
        worst = max(worst, _rel_l2(apply_delta_d_expansion(v, delta_d_coefficients(ell, m)), lhs))
    res["delta-d-powers"] = (worst, f"grid {config.grid}^2, (l, m) in ((2, 1), (2, 2), (3, 1))")

    worst = 0.0
    for m in ranks:
        s = phantom(m, "solenoidal", salt=30 + m)
        for ell in (1, 2):
            w = s
            for _ in range(ell):
                w = d_field(w, check=False)
            worst = max(worst, brute_delta_power(w, ell + 1).norm() / spectral_scale(s, 2 * ell + 1))
    res["solenoidal-powers"] = (worst, f"grid {config.grid}^2, l in (1, 2), m in {ranks}")

    u = phantom(0, salt=40)
    a = rng.standard_normal(2)
    grads = gradient_components(u)
    directional = grads[0] * a[0] + grads[1] * a[1]
    lhs = radon_forward(directional, dirs, pgrid).data
    rhs = (dirs.omega.T @ a)[:, None] * p_derivative(radon_forward(u, dirs, pgrid), 1).data
    res["radon-derivative"] = (_rel_max(rhs, lhs), f"grid {config.grid}^2, {config.directions} directions")

    worst_l = worst_t = worst_a = worst_b = worst_lemma = 0.0
    for m in ranks:
        f = phantom(m, "potential", salt=50 + m, order=1)
        scale = transform_scale(f, dirs, pgrid)
        for ell in st.multi_indices(1, m):
            worst_l = max(worst_l, np.abs(lrt(f, ell, dirs, pgrid).data).max() / scale)
        stack = TensorField.zeros(grid, m)
        for i in range(m):
            v = phantom(m - i, "solenoidal", salt=60 + 10 * m + i)
            for _ in range(i):
                v = d_field(v)
            stack = stack + v
        worst_t = max(worst_t, np.abs(trt(stack, dirs, pgrid).data).max() / transform_scale(stack, dirs, pgrid))
        s = phantom(m, "solenoidal", salt=70 + m)
        scale = transform_scale(s, dirs, pgrid)
        for ell in st.multi_indices(2, m - 1):
            tensors = in_plane_monomials(dirs, ell[:1], ell[1] + 1)
            vals = s_contract_integral(s, tensors, dirs, pgrid)
            worst_a = max(worst_a, np.abs(vals).max() / scale)
        v = phantom(m - 1, salt=80 + m)
        lhs = trt(d_field(v), dirs, pgrid).data
        rhs = p_derivative(trt(v, dirs, pgrid), 1).data
        worst_b = max(worst_b, _rel_max(rhs, lhs))
        g = phantom(m, salt=90 + m)
        lhs = radon_forward(brute_delta_power(g, m), dirs, pgrid).data
        rhs = p_derivative(trt(g, dirs, pgrid), m).data
        worst_lemma = max(worst_lemma, _rel_max(rhs, lhs))
    cfg = f"grid {config.grid}^2, {config.directions} directions, m in {ranks}"
    res["longitudinal-kernel"] = (worst_l, cfg)
    res["transversal-kernel"] = (worst_t, cfg)
    res["solenoidal-omega-moments"] = (worst_a, cfg)
    res["transversal-shift"] = (worst_b, cfg)
    res["divergence-moment"] = (worst_lemma, cfg)

    worst16 = worst17 = 0.0
    for m in (1, 2, 3):
        f = phantom(m, salt=100 + m)
        w = rng.standard_normal(2)
        w /= np.linalg.norm(w)
        t = np.tensordot(w, grid.coords, axes=(0, 0))
        for k in range(1, m + 1):
            brute = brute_delta_power(TensorField(grid, m, t * f.data), k)
            worst16 = max(worst16, _rel_l2(single_weight_divergence(f, w, k), brute))
            brute = brute_delta_power(TensorField(grid, m, t**k * f.data), m)
            worst17 = max(worst17, _rel_l2(power_weight_divergence(f, w, k), brute))
    res["single-weight-divergence"] = (worst16, f"grid {config.grid}^2, k <= m <= 3")
    res["power-weight-divergence"] = (worst17, f"grid {config.grid}^2, k <= m <= 3")

    res["binomial-step"] = (float(binomial_step_residual(12)), "k <= 12, all i")

    results = tuple(
        IdentityResult(name, anchor, res[name][0], tol * config.tolerance_scale, res[name][1])
        for name, (anchor, tol) in IDENTITIES.items()
    )
    return IdentityReport(config, results)


def s_contract_integral(u: TensorField, tensors: np.ndarray, dirs: DirectionSet, pgrid: PGrid) -> np.ndarray:
    """Hyperplane integrals of ``<u, B(ω)>`` for per-direction tensors ``B``."""
    from .scalar_radon import MomentTerm, contraction_weights, moment_integrals

    term = MomentTerm(u, contraction_weights(tensors, u.dim, u.rank), (0,) * (u.dim - 1))
    return moment_integrals([term], dirs, pgrid)
