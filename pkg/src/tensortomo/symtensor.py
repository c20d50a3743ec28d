"""Pointwise symmetric tensor algebra in R^n.

A symmetric rank-m tensor is stored as one coefficient per sorted index tuple
``i_1 <= ... <= i_m`` (0-based), in lexicographic order. The array-level
functions (``sym_product_coeffs``, ``j_vec_coeffs``, ...) keep the component
axis first and accept arbitrary trailing batch axes, so the same code serves
single tensors, whole grids of tensors and per-frequency Fourier symbols.
"""
from __future__ import annotations

import itertools
import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from functools import cache

import numpy as np

__all__ = [
    "FrameMonomialBasis",
    "SymTensor",
    "expand_in_frame",
    "frame_monomial_coeffs",
    "frame_monomials",
    "i_vec",
    "index_tuples",
    "inner",
    "j_vec",
    "multi_indices",
    "multiplicities",
    "reconstruct_from_frame",
    "sym_dim",
    "sym_product",
    "symmetrize",
    "to_dense",
    "vec_power",
]

FRAME_TOL = 1e-10


def sym_dim(n: int, m: int) -> int:
    """Number of independent components of a symmetric rank-``m`` tensor in R^n."""
    if n < 1 or m < 0:
        raise ValueError(f"invalid (n, m) = ({n}, {m})")
    return math.comb(n + m - 1, m)


@cache
def index_tuples(n: int, m: int) -> tuple[tuple[int, ...], ...]:
    """Sorted index tuples of rank ``m`` in lexicographic order."""
    return tuple(itertools.combinations_with_replacement(range(n), m))


@cache
def _position(n: int, m: int) -> dict[tuple[int, ...], int]:
    return {t: k for k, t in enumerate(index_tuples(n, m))}


@cache
def multi_indices(n: int, m: int) -> tuple[tuple[int, ...], ...]:
    """Count vectors ``(l_1, ..., l_n)`` with ``|l| = m``.

    The order follows :func:`index_tuples`, so ``(m, 0, ..., 0)`` comes first
    and ``(0, ..., 0, m)`` last.
    """
    return tuple(tuple(t.count(i) for i in range(n)) for t in index_tuples(n, m))


def _counts_to_tuple(ell: Sequence[int]) -> tuple[int, ...]:
    return tuple(i for i, c in enumerate(ell) for _ in range(c))


@cache
def multiplicities(n: int, m: int) -> np.ndarray:
    """Number of full index tuples in each sorted tuple's permutation orbit."""
    out = np.array(
        [math.factorial(m) // math.prod(math.factorial(c) for c in ell) for ell in multi_indices(n, m)],
        dtype=float,
    )
    out.setflags(write=False)
    return out


@cache
def _full_to_sorted(n: int, m: int) -> np.ndarray:
    pos = _position(n, m)
    return np.array([pos[tuple(sorted(t))] for t in itertools.product(range(n), repeat=m)], dtype=np.intp)


@cache
def _product_table(n: int, p: int, q: int):
    """Entries (c, a, b, w) with (u ⊙ v)_c = sum w * u_a * v_b."""
    pos_a, pos_b = _position(n, p), _position(n, q)
    denom = math.comb(p + q, p)
    rows = []
    for c, ctup in enumerate(index_tuples(n, p + q)):
        ccount = [ctup.count(i) for i in range(n)]
        for a_ell in multi_indices(n, p):
            if any(a > c for a, c in zip(a_ell, ccount)):
                continue
            b_ell = [c - a for a, c in zip(a_ell, ccount)]
            w = math.prod(math.comb(c, a) for a, c in zip(a_ell, ccount)) / denom
            rows.append((c, pos_a[_counts_to_tuple(a_ell)], pos_b[_counts_to_tuple(b_ell)], w))
    c_idx, a_idx, b_idx, w = (np.array(col) for col in zip(*rows))
    return c_idx.astype(np.intp), a_idx.astype(np.intp), b_idx.astype(np.intp), w.astype(float)


@cache
def _contraction_table(n: int, m: int) -> np.ndarray:
    """``idx[b, k]`` = position of sorted(b + (k,)) among rank-m tuples, b of rank m-1."""
    pos = _position(n, m)
    return np.array(
        [[pos[tuple(sorted(t + (k,)))] for k in range(n)] for t in index_tuples(n, m - 1)],
        dtype=np.intp,
    )


def _align(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Pad trailing batch axes so that both arrays have the same ndim."""
    if a.ndim < b.ndim:
        a = a.reshape(a.shape + (1,) * (b.ndim - a.ndim))
    elif b.ndim < a.ndim:
        b = b.reshape(b.shape + (1,) * (a.ndim - b.ndim))
    return a, b


# --- array-level kernels (component axis first) ------------------------------


def sym_product_coeffs(u: np.ndarray, v: np.ndarray, n: int, p: int, q: int) -> np.ndarray:
    c_idx, a_idx, b_idx, w = _product_table(n, p, q)
    u, v = _align(np.asarray(u), np.asarray(v))
    batch = np.broadcast_shapes(u.shape[1:], v.shape[1:])
    out = np.zeros((sym_dim(n, p + q),) + batch, dtype=np.result_type(u, v, float))
    for c, a, b, wt in zip(c_idx, a_idx, b_idx, w):
        out[c] += wt * u[a] * v[b]
    return out


def j_vec_coeffs(x: np.ndarray, u: np.ndarray, n: int, m: int) -> np.ndarray:
    if m < 1:
        raise ValueError("contraction needs rank >= 1")
    idx = _contraction_table(n, m)
    x, u = _align(np.asarray(x), np.asarray(u))
    return (u[idx] * x[None]).sum(axis=1)


def i_vec_coeffs(x: np.ndarray, u: np.ndarray, n: int, m: int) -> np.ndarray:
    return sym_product_coeffs(u, x, n, m, 1)


def vec_power_coeffs(w: np.ndarray, m: int) -> np.ndarray:
    w = np.asarray(w)
    n = w.shape[0]
    if m == 0:
        return np.ones((1,) + w.shape[1:], dtype=w.dtype if w.dtype.kind == "c" else float)
    return np.stack([np.prod(w[list(t)], axis=0) for t in index_tuples(n, m)])


def inner_coeffs(u: np.ndarray, v: np.ndarray, n: int, m: int) -> np.ndarray:
    mult = multiplicities(n, m)
    u, v = _align(np.asarray(u), np.asarray(v))
    mult = mult.reshape(mult.shape + (1,) * (u.ndim - 1))
    return (mult * u * v).sum(axis=0)


def symmetrize_dense(dense: np.ndarray, n: int, m: int) -> np.ndarray:
    """Average over index permutations; leading ``m`` axes of length ``n``."""
    dense = np.asarray(dense)
    if dense.shape[:m] != (n,) * m:
        raise ValueError(f"expected leading shape {(n,) * m}, got {dense.shape[:m]}")
    batch = dense.shape[m:]
    flat = dense.reshape((n**m,) + batch)
    out = np.zeros((sym_dim(n, m),) + batch, dtype=np.result_type(dense, float))
    np.add.at(out, _full_to_sorted(n, m), flat)
    mult = multiplicities(n, m)
    return out / mult.reshape(mult.shape + (1,) * len(batch))


def to_dense_coeffs(coeffs: np.ndarray, n: int, m: int) -> np.ndarray:
    coeffs = np.asarray(coeffs)
    return coeffs[_full_to_sorted(n, m)].reshape((n,) * m + coeffs.shape[1:])


# --- value type ---------------------------------------------------------------


@dataclass(frozen=True)
class SymTensor:
    """A symmetric rank-``rank`` tensor in R^``dim``."""

    dim: int
    rank: int
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float)
        if c.shape != (sym_dim(self.dim, self.rank),):
            raise ValueError(
                f"expected {sym_dim(self.dim, self.rank)} coefficients for (n={self.dim}, m={self.rank}), got {c.shape}"
            )
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zeros(cls, dim: int, rank: int) -> SymTensor:
        return cls(dim, rank, np.zeros(sym_dim(dim, rank)))

    @classmethod
    def scalar(cls, value: float, dim: int) -> SymTensor:
        return cls(dim, 0, np.array([value]))

    @classmethod
    def vector(cls, x: Sequence[float]) -> SymTensor:
        x = np.asarray(x, dtype=float)
        return cls(x.size, 1, x)

    @classmethod
    def random(cls, dim: int, rank: int, rng: np.random.Generator) -> SymTensor:
        return cls(dim, rank, rng.standard_normal(sym_dim(dim, rank)))

    def __getitem__(self, index) -> float:
        if isinstance(index, int):
            index = (index,)
        return float(self.coeffs[_position(self.dim, self.rank)[tuple(sorted(index))]])

    def to_dense(self) -> np.ndarray:
        return to_dense_coeffs(self.coeffs, self.dim, self.rank)

    def _check(self, other: SymTensor):
        if (self.dim, self.rank) != (other.dim, other.rank):
            raise ValueError(f"shape mismatch: ({self.dim}, {self.rank}) vs ({other.dim}, {other.rank})")

    def __add__(self, other: SymTensor) -> SymTensor:
        self._check(other)
        return SymTensor(self.dim, self.rank, self.coeffs + other.coeffs)

    def __sub__(self, other: SymTensor) -> SymTensor:
        self._check(other)
        return SymTensor(self.dim, self.rank, self.coeffs - other.coeffs)

    def __mul__(self, c: float) -> SymTensor:
        return SymTensor(self.dim, self.rank, c * self.coeffs)

    __rmul__ = __mul__

    def __neg__(self) -> SymTensor:
        return SymTensor(self.dim, self.rank, -self.coeffs)

    def norm(self) -> float:
        return float(np.sqrt(inner(self, self)))


def _as_vector(x) -> np.ndarray:
    if isinstance(x, SymTensor):
        if x.rank != 1:
            raise ValueError("expected a rank-1 tensor")
        return x.coeffs
    return np.asarray(x, dtype=float)


def symmetrize(dense: np.ndarray) -> SymTensor:
    """Symmetrization of a full ``n x ... x n`` array."""
    dense = np.asarray(dense, dtype=float)
    m = dense.ndim
    if m == 0:
        raise ValueError("rank-0 input needs an explicit dimension; use SymTensor.scalar")
    n = dense.shape[0]
    if any(s != n for s in dense.shape):
        raise ValueError(f"all axes must have the same length, got {dense.shape}")
    return SymTensor(n, m, symmetrize_dense(dense, n, m))


def to_dense(u: SymTensor) -> np.ndarray:
    return u.to_dense()


def sym_product(u: SymTensor, v: SymTensor) -> SymTensor:
    """Symmetric product ``u ⊙ v = σ(u ⊗ v)``."""
    if u.dim != v.dim:
        raise ValueError(f"dimension mismatch: {u.dim} vs {v.dim}")
    return SymTensor(u.dim, u.rank + v.rank, sym_product_coeffs(u.coeffs, v.coeffs, u.dim, u.rank, v.rank))


def vec_power(w, m: int) -> SymTensor:
    """``w^{⊙m}``; coefficients are plain products of the vector entries."""
    w = _as_vector(w)
    return SymTensor(w.size, m, vec_power_coeffs(w, m))


def i_vec(x, u: SymTensor) -> SymTensor:
    """Symmetric multiplication by a vector, raising the rank by one."""
    x = _as_vector(x)
    if x.size != u.dim:
        raise ValueError(f"dimension mismatch: {x.size} vs {u.dim}")
    return SymTensor(u.dim, u.rank + 1, i_vec_coeffs(x, u.coeffs, u.dim, u.rank))


def j_vec(x, u: SymTensor) -> SymTensor:
    """Contraction with a vector on the last index."""
    x = _as_vector(x)
    if x.size != u.dim:
        raise ValueError(f"dimension mismatch: {x.size} vs {u.dim}")
    if u.rank == 0:
        raise ValueError("cannot contract a rank-0 tensor")
    return SymTensor(u.dim, u.rank - 1, j_vec_coeffs(x, u.coeffs, u.dim, u.rank))


def inner(u: SymTensor, v: SymTensor) -> float:
    """Full contraction over all ``n^m`` index tuples."""
    u._check(v)
    return float(inner_coeffs(u.coeffs, v.coeffs, u.dim, u.rank))


# --- frame monomials ----------------------------------------------------------


def _frame_matrix(frame) -> np.ndarray:
    vecs = np.asarray(frame.vectors, dtype=float)
    gram = vecs @ vecs.T
    if np.abs(gram - np.eye(vecs.shape[0])).max() > FRAME_TOL:
        raise ValueError("frame is not orthonormal")
    return vecs


def frame_monomial_coeffs(vectors: np.ndarray, ell: Sequence[int]) -> np.ndarray:
    """Coefficients of ``v_1^{⊙l_1} ⊙ ... ⊙ v_k^{⊙l_k}``.

    ``vectors`` has shape ``(k, n, *batch)``; the batch axes let one call cover
    every direction of a sinogram.
    """
    vectors = np.asarray(vectors)
    n = vectors.shape[1]
    out = vec_power_coeffs(vectors[0], ell[0])
    rank = ell[0]
    for vec, power in zip(vectors[1:], ell[1:]):
        if power:
            out = sym_product_coeffs(out, vec_power_coeffs(vec, power), n, rank, power)
            rank += power
    return out


@dataclass(frozen=True)
class FrameMonomialBasis:
    """Monomials ``ω_1^{⊙l_1} ⊙ ... ⊙ ω_{n-1}^{⊙l_{n-1}} ⊙ ω^{⊙l_n}`` of one frame.

    ``monomials[k]`` is the coefficient vector of the monomial for
    ``indices[k]``; ``dual_weights[k] = m! / l!`` inverts the diagonal Gram
    matrix.
    """

    frame: object
    rank: int
    indices: tuple[tuple[int, ...], ...]
    monomials: np.ndarray = field(repr=False)
    dual_weights: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return np.asarray(self.frame.vectors).shape[0]

    def tensor(self, k: int) -> SymTensor:
        return SymTensor(self.dim, self.rank, self.monomials[k])

    def expand(self, u: SymTensor) -> dict[tuple[int, ...], float]:
        vals = self.monomials @ (multiplicities(u.dim, u.rank) * u.coeffs)
        return dict(zip(self.indices, vals.tolist()))

    def reconstruct(self, coeffs: dict[tuple[int, ...], float]) -> SymTensor:
        c = np.array([coeffs.get(ell, 0.0) for ell in self.indices])
        return SymTensor(self.dim, self.rank, (self.dual_weights * c) @ self.monomials)


def frame_monomials(frame, m: int) -> FrameMonomialBasis:
    """Basis of S^m built from an orthonormal frame (in-plane vectors first, ω last)."""
    vecs = _frame_matrix(frame)
    n = vecs.shape[0]
    indices = multi_indices(n, m)
    monos = np.stack([frame_monomial_coeffs(vecs, ell) for ell in indices]) if m else np.ones((1, 1))
    weights = np.array(
        [math.factorial(m) / math.prod(math.factorial(c) for c in ell) for ell in indices], dtype=float
    )
    return FrameMonomialBasis(frame, m, indices, monos, weights)


def expand_in_frame(u: SymTensor, frame) -> dict[tuple[int, ...], float]:
    """Raw frame coefficients ``c_l = <u, B_l>``."""
    return frame_monomials(frame, u.rank).expand(u)


def reconstruct_from_frame(coeffs: dict[tuple[int, ...], float], frame, m: int) -> SymTensor:
    return frame_monomials(frame, m).reconstruct(coeffs)
