"""Acceptance criteria, one test each.

Every test prints a single ``PASS``/``FAIL`` line with the measured values
and wall time; the lines are repeated in the terminal summary.  Running this
file as a script evaluates all criteria and prints the same lines.
"""

import math
import time

import numpy as np
import pytest

from tensortomo import symtensor as st
from tensortomo.decomposition import decompose
from tensortomo.field import (
    Grid,
    PhantomSpec,
    TensorField,
    d_field,
    div_field,
    gaussian_phantom,
    l2_error,
    laplacian_field,
    stacked_phantom,
)
from tensortomo.oracle import (
    algebra_residual,
    brute_delta_power,
    frame_residual,
    power_weight_divergence,
    single_weight_divergence,
    spectral_scale,
    transform_scale,
)
from tensortomo.reconstruction import (
    pipeline_datasets,
    reconstruct_from_lrt,
    reconstruct_from_trt,
)
from tensortomo.scalar_radon import (
    DirectionSet,
    PGrid,
    p_derivative,
    radon_forward,
    radon_invert,
)
from tensortomo.transforms import lrt, trt

LINES: list[str] = []
SEED = 2024


def phantom(grid, m, salt, **kw):
    return gaussian_phantom(PhantomSpec(seed=SEED + salt, **kw), grid, m)


def rel_l2(a: TensorField, b: TensorField) -> float:
    return (a - b).norm() / b.norm()


def rel_max(a, b) -> float:
    return float(np.abs(a - b).max() / np.abs(b).max())


def report(number, title, passed, detail, seconds, budget):
    ok = passed and seconds < budget
    line = f"{'PASS' if ok else 'FAIL'} criterion {number:2d} {title}: {detail}; {seconds:.1f} s (budget {budget:.0f} s)"
    LINES.append(line)
    print(line)
    return ok


# --- criteria -------------------------------------------------------------------


def criterion_1():
    start = time.perf_counter()
    rng = np.random.default_rng(SEED)
    alg = algebra_residual(rng, 200)
    frame = frame_residual(rng, 200)
    elapsed = time.perf_counter() - start
    detail = f"dense algebra {alg:.2e}, frame roundtrip {frame:.2e} (limit 1e-12, 200 instances)"
    return report(1, "algebra oracle", alg < 1e-12 and frame < 1e-12, detail, elapsed, 10)


def criterion_2():
    start = time.perf_counter()
    grid = Grid.centered(2, 128)
    worst = 0.0
    for m in (1, 2, 3):
        v = phantom(grid, m, m)
        lhs = div_field(d_field(v))
        rhs = laplacian_field(v) * (1 / (m + 1)) + d_field(div_field(v), check=False) * (m / (m + 1))
        worst = max(worst, rel_l2(rhs, lhs))
    elapsed = time.perf_counter() - start
    return report(2, "first-order splitting", worst < 1e-8, f"max rel residual {worst:.2e} (limit 1e-8)", elapsed, 30)


def criterion_3():
    start = time.perf_counter()
    grid = Grid.centered(2, 128)
    worst = 0.0
    for m in (1, 2):
        s = phantom(grid, m, 10 + m, target="solenoidal")
        for ell in (1, 2):
            w = s
            for _ in range(ell):
                w = d_field(w, check=False)
            worst = max(worst, brute_delta_power(w, ell + 1).norm() / spectral_scale(s, 2 * ell + 1))
    elapsed = time.perf_counter() - start
    return report(3, "solenoidal powers", worst < 1e-6, f"max scaled residual {worst:.2e} (limit 1e-6)", elapsed, 60)


def criterion_4():
    start = time.perf_counter()
    grid = Grid.centered(2, 256)
    dirs, pg = DirectionSet.uniform(2, 360), PGrid.covering(grid)
    worst_l = worst_t = 0.0
    for m in (1, 2):
        f = phantom(grid, m, 20 + m, target="potential", order=1)
        scale = transform_scale(f, dirs, pg)
        for ell in st.multi_indices(1, m):
            worst_l = max(worst_l, np.abs(lrt(f, ell, dirs, pg).data).max() / scale)
        stack = TensorField.zeros(grid, m)
        for i in range(m):
            v = phantom(grid, m - i, 30 + 10 * m + i, target="solenoidal")
            for _ in range(i):
                v = d_field(v)
            stack = stack + v
        worst_t = max(worst_t, np.abs(trt(stack, dirs, pg).data).max() / transform_scale(stack, dirs, pg))
    elapsed = time.perf_counter() - start
    detail = f"longitudinal {worst_l:.2e}, transversal {worst_t:.2e} (limit 1e-3)"
    return report(4, "transform kernels", max(worst_l, worst_t) < 1e-3, detail, elapsed, 120)


def criterion_5():
    start = time.perf_counter()
    grid = Grid.centered(2, 256)
    dirs, pg = DirectionSet.uniform(2, 360), PGrid.covering(grid)
    worst = 0.0
    for m in (1, 2):
        g = phantom(grid, m, 40 + m)
        lhs = radon_forward(brute_delta_power(g, m), dirs, pg).data
        rhs = p_derivative(trt(g, dirs, pg), m).data
        worst = max(worst, rel_max(rhs, lhs))
    elapsed = time.perf_counter() - start
    return report(5, "divergence moment", worst < 2e-2, f"max rel residual {worst:.2e} (limit 2e-2)", elapsed, 120)


def criterion_6():
    start = time.perf_counter()
    grid = Grid.centered(2, 128)
    rng = np.random.default_rng(SEED)
    worst_s = worst_p = 0.0
    for m in (1, 2, 3):
        f = phantom(grid, m, 50 + m)
        w = rng.standard_normal(2)
        w /= np.linalg.norm(w)
        t = np.tensordot(w, grid.coords, axes=(0, 0))
        for k in range(1, m + 1):
            brute = brute_delta_power(TensorField(grid, m, t * f.data), k)
            worst_s = max(worst_s, rel_l2(single_weight_divergence(f, w, k), brute))
            brute = brute_delta_power(TensorField(grid, m, t**k * f.data), m)
            worst_p = max(worst_p, rel_l2(power_weight_divergence(f, w, k), brute))
    elapsed = time.perf_counter() - start
    detail = f"single weight {worst_s:.2e}, power weight {worst_p:.2e} (limit 1e-6)"
    return report(6, "weighted divergence closed forms", max(worst_s, worst_p) < 1e-6, detail, elapsed, 60)


def _pipeline(number, name, solver, limits, budget):
    start = time.perf_counter()
    grid = Grid.centered(2, 256)
    dirs, pg = DirectionSet.uniform(2, 360), PGrid.covering(grid)
    parts, ok = [], True
    for m, limit in limits.items():
        comps, f = stacked_phantom(grid, m, seed=SEED + m)
        base, weighted = pipeline_datasets(f, name, dirs, pg)
        rep = solver(base, weighted, grid, m, comps)
        per = ", ".join(f"v{i} {e:.2e}" for i, e in enumerate(rep.component_errors))
        parts.append(f"m={m} composed {rep.composed_error:.2e} (limit {limit:g}) [{per}]")
        ok = ok and rep.composed_error < limit
    elapsed = time.perf_counter() - start
    return report(number, f"{name} pipeline", ok, "; ".join(parts), elapsed, budget)


def criterion_7():
    return _pipeline(7, "lrt", reconstruct_from_lrt, {1: 0.05, 2: 0.08}, 300)


def criterion_8():
    return _pipeline(8, "trt", reconstruct_from_trt, {1: 0.06, 2: 0.12}, 300)


def criterion_9():
    start = time.perf_counter()
    grid = Grid.centered(2, 128)
    comps, f = stacked_phantom(grid, 2, seed=SEED)
    res = decompose(f)
    errs = [l2_error(got, want) for got, want in zip(res.components, comps)]
    elapsed = time.perf_counter() - start
    detail = ", ".join(f"v{i} {e:.2e}" for i, e in enumerate(errs)) + " (limit 1e-3)"
    return report(9, "decomposition roundtrip", max(errs) < 1e-3, detail, elapsed, 60)


def criterion_10():
    start = time.perf_counter()
    grid = Grid.centered(2, 256)
    dirs, pg = DirectionSet.uniform(2, 360), PGrid.covering(grid)
    worst = 0.0
    for salt in range(3):
        u = phantom(grid, 0, 60 + salt)
        worst = max(worst, l2_error(radon_invert(radon_forward(u, dirs, pg), grid), u))
    wide = Grid.centered(2, 256, half_width=6.0)
    wpg = PGrid.covering(wide)
    gauss = TensorField.scalar(wide, np.exp(-(wide.coords**2).sum(axis=0)))
    sino = radon_forward(gauss, DirectionSet.uniform(2, 36), wpg).data
    expected = math.sqrt(math.pi) * np.exp(-(wpg.values**2))
    analytic = rel_max(sino, np.broadcast_to(expected, sino.shape))
    elapsed = time.perf_counter() - start
    detail = f"phantom roundtrip {worst:.2e} (limit 1e-2), Gaussian marginal {analytic:.2e} (limit 1e-4)"
    return report(10, "scalar Radon roundtrip", worst < 1e-2 and analytic < 1e-4, detail, elapsed, 30)


def criterion_11():
    start = time.perf_counter()
    errors = []
    for size in (64, 128, 256):
        grid = Grid.centered(2, size)
        dirs, pg = DirectionSet.uniform(2, 2 * size), PGrid.covering(grid)
        comps, f = stacked_phantom(grid, 1, seed=SEED + 1)
        base, weighted = pipeline_datasets(f, "lrt", dirs, pg)
        errors.append(reconstruct_from_lrt(base, weighted, grid, 1, comps).composed_error)
    elapsed = time.perf_counter() - start
    decreasing = all(b < a for a, b in zip(errors, errors[1:]))
    detail = "composed errors " + " > ".join(f"{e:.2e}" for e in errors) + " on grids 64, 128, 256"
    return report(11, "grid convergence", decreasing, detail, elapsed, 600)


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6,
            criterion_7, criterion_8, criterion_9, criterion_10, criterion_11]


@pytest.mark.slow
@pytest.mark.parametrize("criterion", CRITERIA, ids=[f"criterion_{i}" for i in range(1, 12)])
def test_criterion(criterion):
    assert criterion(), LINES[-1]


if __name__ == "__main__":
    results = [c() for c in CRITERIA]
    print(f"{sum(results)}/{len(results)} criteria pass")
