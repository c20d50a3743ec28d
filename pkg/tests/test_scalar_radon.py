import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as hs

from tensortomo.field import (
    Grid,
    PhantomSpec,
    TensorField,
    gaussian_phantom,
    gradient_components,
    l2_error,
)
from tensortomo.scalar_radon import (
    DirectionSet,
    PGrid,
    Sinogram,
    SupportError,
    frame_of,
    p_derivative,
    radon_forward,
    radon_invert,
    spectral_window,
)

WIDE = Grid.centered(2, 128, half_width=6.0)


def gaussian(grid, center=(0.0, 0.0)):
    x = grid.coords
    c = np.asarray(center).reshape(2, 1, 1)
    return TensorField.scalar(grid, np.exp(-((x - c) ** 2).sum(axis=0)))


def rel(a, b):
    return np.abs(a - b).max() / np.abs(b).max()


# --- frames and directions ----------------------------------------------------


def test_frame_2d():
    f = frame_of([1.0, 0.0])
    np.testing.assert_allclose(f.basis[0], [0.0, 1.0])
    np.testing.assert_allclose(f.vectors[-1], [1.0, 0.0])


@pytest.mark.parametrize("omega", [[1.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0, 0.6, 0.8]])
def test_frame_3d_orthonormal(omega):
    v = frame_of(omega).vectors
    np.testing.assert_allclose(v @ v.T, np.eye(3), atol=1e-12)
    np.testing.assert_allclose(v[-1], omega)


def test_frame_3d_equator_formula():
    v = frame_of([1.0, 0.0, 0.0]).vectors
    np.testing.assert_allclose(np.abs(v[0]), [0.0, 1.0, 0.0], atol=1e-12)


@given(hs.floats(0, 2 * np.pi), hs.floats(0.01, np.pi - 0.01))
def test_frame_property(phi, theta):
    om = np.array([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)])
    v = frame_of(om).vectors
    np.testing.assert_allclose(v @ v.T, np.eye(3), atol=1e-12)
    np.testing.assert_array_equal(frame_of(om).vectors, v)


def test_frame_rejects_non_unit():
    with pytest.raises(ValueError):
        frame_of([1.0, 1.0])


def test_direction_sets():
    d2 = DirectionSet.uniform(2, 8)
    angles = np.arctan2(d2.directions[:, 1], d2.directions[:, 0])
    np.testing.assert_allclose(np.diff(angles), np.pi / 8)
    d3 = DirectionSet.uniform(3, 50)
    assert (d3.directions[:, 2] > 0).all()
    np.testing.assert_allclose(np.linalg.norm(d3.directions, axis=1), 1.0)
    assert d3.frame_vectors.shape == (3, 3, 50)


def test_pgrid_covering():
    g = Grid.centered(2, 64)
    pg = PGrid.covering(g)
    assert pg.count % 2 == 1
    assert pg.extent >= g.circumradius
    np.testing.assert_allclose(pg.values, -pg.values[::-1])


def test_sinogram_validation():
    dirs, pg = DirectionSet.uniform(2, 4), PGrid(5, 0.1)
    with pytest.raises(ValueError):
        Sinogram(dirs, pg, np.zeros((4, 4)))
    with pytest.raises(ValueError):
        Sinogram(dirs, pg, np.full((4, 5), np.inf))


# --- forward transform --------------------------------------------------------


def test_gaussian_marginal():
    dirs = DirectionSet.uniform(2, 16)
    pg = PGrid.covering(WIDE)
    s = radon_forward(gaussian(WIDE), dirs, pg)
    expected = math.sqrt(math.pi) * np.exp(-pg.values**2)[None]
    assert rel(s.data, np.broadcast_to(expected, s.data.shape)) < 1e-4


def test_shifted_gaussian():
    c = np.array([0.7, -0.4])
    dirs = DirectionSet.uniform(2, 12)
    pg = PGrid.covering(WIDE)
    s = radon_forward(gaussian(WIDE, c), dirs, pg)
    expected = math.sqrt(math.pi) * np.exp(-(pg.values[None] - (dirs.directions @ c)[:, None]) ** 2)
    assert rel(s.data, expected) < 1e-4


def test_gaussian_marginal_3d():
    g = Grid.centered(3, 48, half_width=6.0)
    dirs = DirectionSet.uniform(3, 5)
    pg = PGrid.covering(g)
    s = radon_forward(gaussian3(g), dirs, pg)
    expected = math.pi * np.exp(-pg.values**2)[None]
    assert rel(s.data, np.broadcast_to(expected, s.data.shape)) < 1e-3


def gaussian3(grid):
    return TensorField.scalar(grid, np.exp(-(grid.coords**2).sum(axis=0)))


def test_zero_field():
    g = Grid.centered(2, 32)
    s = radon_forward(TensorField.zeros(g, 0), DirectionSet.uniform(2, 8), PGrid.covering(g))
    assert not s.data.any()


def test_rejects_tensor_field():
    g = Grid.centered(2, 32)
    with pytest.raises(ValueError):
        radon_forward(TensorField.zeros(g, 1), DirectionSet.uniform(2, 4), PGrid.covering(g))


def test_support_violation():
    g = Grid.centered(2, 64)
    u = gaussian_phantom(PhantomSpec(seed=1), g, 0)
    with pytest.raises(SupportError):
        radon_forward(u, DirectionSet.uniform(2, 4), PGrid(5, g.spacing[0]))


def test_evenness():
    g = Grid.centered(2, 64)
    u = gaussian_phantom(PhantomSpec(seed=2), g, 0)
    w = np.array([0.6, 0.8])
    dirs = DirectionSet(np.stack([w, -w]))
    s = radon_forward(u, dirs, PGrid.covering(g))
    assert rel(s.data[1][::-1], s.data[0]) < 1e-6


def test_mass_conservation():
    g = Grid.centered(2, 64)
    u = gaussian_phantom(PhantomSpec(seed=3), g, 0)
    pg = PGrid.covering(g)
    s = radon_forward(u, DirectionSet.uniform(2, 20), pg)
    mass = s.data.sum(axis=1) * pg.spacing
    total = u.data.sum() * g.cell_volume
    scale = np.abs(u.data).sum() * g.cell_volume
    assert np.abs(mass - total).max() / scale < 1e-6


def test_derivative_property(rng):
    g = Grid.centered(2, 128)
    u = gaussian_phantom(PhantomSpec(seed=4), g, 0)
    dirs, pg = DirectionSet.uniform(2, 60), PGrid.covering(g)
    grads = gradient_components(u)
    for _ in range(3):
        a = rng.standard_normal(2)
        lhs = radon_forward(grads[0] * a[0] + grads[1] * a[1], dirs, pg).data
        rhs = (dirs.directions @ a)[:, None] * p_derivative(radon_forward(u, dirs, pg), 1).data
        assert rel(rhs, lhs) < 1e-3


# --- p-derivatives ------------------------------------------------------------


def test_p_derivative_gaussian():
    pg = PGrid(301, 0.05)
    p = pg.values
    s = Sinogram(DirectionSet.uniform(2, 2), pg, np.tile(np.exp(-(p**2)), (2, 1)))
    d1 = p_derivative(s, 1).data
    assert rel(d1, np.tile(-2 * p * np.exp(-(p**2)), (2, 1))) < 1e-4
    twice = p_derivative(p_derivative(s, 1), 1).data
    assert rel(twice, p_derivative(s, 2).data) < 1e-8
    assert not p_derivative(s.with_data(np.zeros_like(s.data)), 2).data.any()
    assert p_derivative(s, 0) is s
    with pytest.raises(ValueError):
        p_derivative(s, -1)


def test_spectral_window_shape():
    sig = np.linspace(0, 1, 101)
    w = spectral_window(sig, 1.0, 0.8)
    assert (w[sig <= 0.8] == 1).all()
    assert w[-1] == pytest.approx(0.0, abs=1e-15)
    assert (np.diff(w) <= 1e-15).all()


# --- inversion ----------------------------------------------------------------


def test_inversion_gaussian_roundtrip():
    g = Grid.centered(2, 128)
    x = g.coords
    u = TensorField.scalar(g, np.exp(-(x**2).sum(axis=0) / (2 * 0.1**2)))
    dirs, pg = DirectionSet.uniform(2, 256), PGrid.covering(g)
    back = radon_invert(radon_forward(u, dirs, pg), g)
    assert l2_error(back, u) < 1e-2


def test_inversion_two_bump_roundtrip():
    g = Grid.centered(2, 128)
    u = gaussian_phantom(PhantomSpec(seed=7, bumps=2), g, 0)
    dirs, pg = DirectionSet.uniform(2, 256), PGrid.covering(g)
    assert l2_error(radon_invert(radon_forward(u, dirs, pg), g), u) < 2e-2


def test_inversion_zero_and_dimension():
    g = Grid.centered(2, 32)
    dirs, pg = DirectionSet.uniform(2, 16), PGrid.covering(g)
    assert not radon_invert(Sinogram(dirs, pg, np.zeros((16, pg.count))), g).data.any()
    g3 = Grid.centered(3, 16)
    s3 = Sinogram(DirectionSet.uniform(3, 4), PGrid.covering(g3), np.zeros((4, PGrid.covering(g3).count)))
    with pytest.raises(NotImplementedError):
        radon_invert(s3, g3)
