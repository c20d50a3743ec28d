import math

import numpy as np
import pytest

from tensortomo import symtensor as st
from tensortomo.field import (
    DecayError,
    Grid,
    PhantomSpec,
    TensorField,
    d_field,
    gaussian_phantom,
)
from tensortomo.oracle import brute_delta_power, transform_scale
from tensortomo.scalar_radon import DirectionSet, PGrid, p_derivative, radon_forward
from tensortomo.transforms import (
    MissingDataError,
    WeightedDataset,
    componentwise_radon,
    dataset_indices,
    in_plane_monomials,
    lrt,
    make_dataset,
    trt,
    weighted_lrt,
    weighted_trt,
)

G = Grid.centered(2, 128)
DIRS = DirectionSet.uniform(2, 90)
PG = PGrid.covering(G)


def phantom(m, seed=0, grid=G, **kw):
    return gaussian_phantom(PhantomSpec(seed=seed, **kw), grid, m)


def rel(a, b):
    return np.abs(a - b).max() / np.abs(b).max()


# --- reductions and two-path identities ---------------------------------------


def test_rank0_reductions():
    u = phantom(0, 1)
    r = radon_forward(u, DIRS, PG).data
    np.testing.assert_array_equal(trt(u, DIRS, PG).data, r)
    np.testing.assert_array_equal(lrt(u, (0,), DIRS, PG).data, r)
    np.testing.assert_array_equal(componentwise_radon(u, DIRS, PG).data[0], r)


@pytest.mark.parametrize("m", [1, 2])
def test_componentwise_contractions(m):
    f = phantom(m, 2)
    ts = componentwise_radon(f, DIRS, PG)
    assert rel(ts.contract(st.vec_power_coeffs(DIRS.omega, m)).data, trt(f, DIRS, PG).data) < 1e-8
    for ell in st.multi_indices(1, m):
        via_components = ts.contract(in_plane_monomials(DIRS, ell)).data
        assert rel(via_components, lrt(f, ell, DIRS, PG).data) < 1e-8


def test_lrt_rank1_is_radon_of_in_plane_component():
    f = phantom(1, 3)
    ts = componentwise_radon(f, DIRS, PG)
    w1 = DIRS.in_plane(0)
    contracted = ts.data[0] * w1[0][:, None] + ts.data[1] * w1[1][:, None]
    assert rel(contracted, lrt(f, (1,), DIRS, PG).data) < 1e-8


def test_linearity():
    a, b = phantom(2, 4), phantom(2, 5)
    scale = 2.0 * transform_scale(a, DIRS, PG) + 0.5 * transform_scale(b, DIRS, PG)
    for fn in (
        lambda f: trt(f, DIRS, PG),
        lambda f: lrt(f, (2,), DIRS, PG),
        lambda f: weighted_trt(f, 1, (1,), DIRS, PG),
        lambda f: weighted_lrt(f, 2, (0,), DIRS, PG),
    ):
        lhs = fn(a * 2.0 + b * -0.5).data
        rhs = 2.0 * fn(a).data - 0.5 * fn(b).data
        assert np.abs(lhs - rhs).max() <= 1e-12 * scale


# --- kernels and derivative identities ----------------------------------------


@pytest.mark.parametrize("m", [1, 2])
def test_trt_of_potential_is_p_derivative(m):
    v = phantom(0, 6)
    f = v
    for _ in range(m):
        f = d_field(f)
    lhs = trt(f, DIRS, PG).data
    rhs = p_derivative(radon_forward(v, DIRS, PG), m).data
    assert rel(rhs, lhs) < 1e-2


def test_shift_identity():
    v = phantom(1, 7)
    lhs = trt(d_field(v), DIRS, PG).data
    rhs = p_derivative(trt(v, DIRS, PG), 1).data
    assert rel(rhs, lhs) < 1e-2


def test_trt_of_solenoidal_vanishes():
    s = phantom(1, 8, target="solenoidal")
    assert np.abs(trt(s, DIRS, PG).data).max() / transform_scale(s, DIRS, PG) < 1e-3


@pytest.mark.parametrize("m", [1, 2])
def test_lrt_of_potential_vanishes(m):
    f = phantom(m, 9, target="potential", order=1)
    scale = transform_scale(f, DIRS, PG)
    for ell in st.multi_indices(1, m):
        assert np.abs(lrt(f, ell, DIRS, PG).data).max() / scale < 1e-3


def test_lemma_chain_for_first_order_weight():
    """``∂p^m`` of the order-1 weighted data equals the Radon data of ``δ^m(t_1 f)``."""
    m = 2
    f = phantom(m, 10)
    dirs = DirectionSet.uniform(2, 8)
    lhs = p_derivative(weighted_trt(f, 1, (1,), dirs, PG), m).data
    rhs = np.zeros_like(lhs)
    for d in range(len(dirs)):
        t = np.tensordot(dirs.in_plane(0)[:, d], G.coords, axes=(0, 0))
        g = brute_delta_power(TensorField(G, m, t * f.data), m)
        one = DirectionSet(dirs.directions[d : d + 1])
        rhs[d] = radon_forward(g, one, PG).data[0]
    assert rel(lhs, rhs) < 2e-2


# --- weighted transforms ------------------------------------------------------


def test_weighted_of_zero_field():
    z = TensorField.zeros(G, 2)
    assert not weighted_trt(z, 1, (1,), DIRS, PG).data.any()
    assert not weighted_lrt(z, 1, (1,), DIRS, PG).data.any()


def test_weighted_trt_parity():
    x = G.coords
    env = np.exp(-(x**2).sum(axis=0) / (2 * 0.1**2))
    c = np.array([0.3, -1.2, 0.7])
    f = TensorField(G, 2, c[:, None, None] * env)
    assert np.abs(weighted_trt(f, 1, (1,), DIRS, PG).data).max() < 1e-6
    assert np.abs(weighted_trt(f, 2, (2,), DIRS, PG).data).max() > 1e-3


def test_weighted_lrt_is_line_moment():
    """Direct 1-D quadrature of ``t^k <f, ω_1^m>`` along lines of an analytic field."""
    grid = Grid.centered(2, 256)
    w, c0 = 0.12, np.array([0.05, -0.03])
    coef = np.array([1.0, -0.4, 0.6])

    def field_at(pts):
        return coef.reshape((3,) + (1,) * (pts.ndim - 1)) * np.exp(
            -((pts - c0.reshape((2,) + (1,) * (pts.ndim - 1))) ** 2).sum(axis=0) / (2 * w**2)
        )

    f = TensorField(grid, 2, field_at(grid.coords))
    dirs = DirectionSet.uniform(2, 6)
    pg = PGrid.covering(grid)
    t = np.linspace(-1.5, 1.5, 3001)
    for k in (1, 2):
        data = weighted_lrt(f, k, (2 - k,), dirs, pg).data
        ref = np.zeros_like(data)
        for d in range(len(dirs)):
            om, om1 = dirs.omega[:, d], dirs.in_plane(0)[:, d]
            pts = om[:, None, None] * pg.values[None, :, None] + om1[:, None, None] * t[None, None, :]
            vals = st.inner_coeffs(field_at(pts), st.vec_power_coeffs(om1, 2)[:, None, None], 2, 2)
            ref[d] = np.trapezoid(t**k * vals, t, axis=1)
        assert rel(data, ref) < 1e-6


def test_weighted_argument_checks():
    f = phantom(2, 11)
    with pytest.raises(ValueError):
        weighted_trt(f, 3, (3,), DIRS, PG)
    with pytest.raises(ValueError):
        weighted_trt(f, 1, (2,), DIRS, PG)
    with pytest.raises(ValueError):
        weighted_lrt(f, 1, (2,), DIRS, PG)
    with pytest.raises(ValueError):
        lrt(f, (1,), DIRS, PG)
    with pytest.raises(ValueError):
        trt(f, DirectionSet.uniform(3, 4), PG)


def test_weighted_decay_precondition():
    x = G.coords
    slow = TensorField(G, 1, np.stack([np.exp(-(x**2).sum(axis=0) / (2 * 0.2**2))] * 2))
    with pytest.raises(DecayError):
        weighted_trt(slow, 1, (1,), DIRS, PG)


# --- datasets -----------------------------------------------------------------


def test_dataset_counts():
    assert len(dataset_indices("wtrt", 3, 2, 2)) == 3
    assert len(dataset_indices("lrt", 2, 0, 0)) == 1
    assert dataset_indices("wlrt", 2, 2, 1) == ((1,),)
    for n, k in [(2, 1), (3, 1), (3, 2), (3, 3)]:
        assert len(dataset_indices("wtrt", n, 3, k)) == math.comb(k + n - 2, k)
    with pytest.raises(ValueError):
        dataset_indices("mixed", 2, 1, 1)


def test_make_dataset_3d():
    g = Grid.centered(3, 24)
    f = gaussian_phantom(PhantomSpec(seed=1), g, 2)
    dirs = DirectionSet.uniform(3, 4)
    ds = make_dataset(f, "wtrt", 2, dirs, PGrid.covering(g))
    assert list(ds.keys()) == list(st.multi_indices(2, 2)) and len(ds) == 3
    assert ds.family == "wtrt" and ds.order == 2


def test_make_dataset_validation():
    f = phantom(1, 12)
    with pytest.raises(ValueError):
        make_dataset(f, "wlrt", 2, DIRS, PG)
    with pytest.raises(ValueError):
        make_dataset(f, "radon", 0, DIRS, PG)
    with pytest.raises(ValueError):
        WeightedDataset("bogus", 0, 1, {})
    ds = make_dataset(f, "lrt", 0, DIRS, PG)
    with pytest.raises(MissingDataError):
        ds.require([(0,)])
