"""Fourier-domain solvers: powers of ``δd``, Poisson inversion and the
solenoidal/potential splitting ``f = v_0 + d v_1 + ... + d^m v_m``."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .field import (
    TensorField,
    check_decay,
    compose_potentials,
    div_field,
    from_spectrum,
    l2_error,
    solenoidal_project,
    solve_symbol,
    spectrum,
)

MEAN_TOL = 1e-8
DECOMPOSE_TOL = 1e-4
GAUGE = "zero-mean: the zero-frequency mode of every solved field is set to 0"


class GaugeWarning(UserWarning):
    """Input has a non-zero mean, which the zero-mean gauge discards."""


class ConvergenceError(RuntimeError):
    """The recomposed field does not match the input."""


def _warn_mean(h: TensorField, what: str) -> None:
    peak = h.max_abs()
    if peak > 0 and np.abs(h.means()).max() > MEAN_TOL * peak:
        warnings.warn(f"{what}: input has non-zero mean; it is dropped by the zero-mean gauge", GaugeWarning, 3)


def solve_delta_d_k(h: TensorField, k: int, check: bool = True) -> TensorField:
    """Solve ``δ^k d^k v = h`` for ``v`` of the same rank as ``h``.

    ``check=False`` skips the decay test and the non-zero-mean warning, for
    inputs that are themselves reconstructions.
    """
    if k < 0:
        raise ValueError("order must be non-negative")
    if k == 0:
        return h
    if check:
        check_decay(h)
        _warn_mean(h, "solve_delta_d_k")
    vh = solve_symbol(h.grid, spectrum(h), h.rank, k)
    return from_spectrum(h.grid, h.rank, vh)


def poisson_invert(h: TensorField, check: bool = True) -> TensorField:
    """Componentwise solution of ``Δu = h`` with zero mean."""
    if check:
        check_decay(h)
        _warn_mean(h, "poisson_invert")
    y2 = (h.grid.symbol**2).sum(axis=0)
    inv = np.zeros_like(y2)
    np.divide(-1.0, y2, out=inv, where=y2 > 0)
    return from_spectrum(h.grid, h.rank, spectrum(h) * inv)


@dataclass(frozen=True)
class DecompositionResult:
    """Components ``v_0 .. v_m`` with ``f = sum d^i v_i``."""

    components: tuple[TensorField, ...] = field(repr=False)
    residual: float
    divergence_residuals: tuple[float, ...]
    gauge: str = GAUGE

    def compose(self) -> TensorField:
        return compose_potentials(self.components, check=False)


def decompose(f: TensorField, tol: float = DECOMPOSE_TOL) -> DecompositionResult:
    """Split ``f`` into solenoidal parts ``v_0 .. v_{m-1}`` and a scalar ``v_m``."""
    check_decay(f)
    _warn_mean(f, "decompose")
    comps = []
    w = f
    for _ in range(f.rank):
        s = solenoidal_project(w)
        comps.append(s)
        rhs = spectrum(div_field(w, check=False))
        w = from_spectrum(f.grid, w.rank - 1, solve_symbol(f.grid, rhs, w.rank - 1, 1))
    comps.append(w)
    comps = tuple(comps)
    residual = l2_error(compose_potentials(comps, check=False), f)
    div_res = tuple(
        div_field(v, check=False).norm() / v.norm() if v.norm() > 0 else 0.0 for v in comps[:-1]
    )
    if residual > tol:
        raise ConvergenceError(
            f"composition residual {residual:.3e} exceeds {tol:.1e}; divergence residuals {div_res}"
        )
    return DecompositionResult(comps, residual, div_res)
