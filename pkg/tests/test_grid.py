import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from skdv import SpectralGrid
from skdv.grid import workspace_norm

from conftest import random_smooth

G = SpectralGrid(8 * math.pi, 64)
finite = st.floats(-10, 10, allow_nan=False)
real_fields = arrays(np.float64, 64, elements=finite)
complex_fields = st.builds(lambda a, b: a + 1j * b, real_fields, real_fields)


def test_grid_geometry():
    g = SpectralGrid()
    assert g.x[0] == -g.half_length
    assert g.dx == pytest.approx(32 * math.pi / 1024)
    assert g.nyquist == pytest.approx(32.0)
    assert g.xi[1] == pytest.approx(1 / 16)


@pytest.mark.parametrize("n", [0, 15, 100, 1000])
def test_rejects_bad_sizes(n):
    with pytest.raises(ValueError):
        SpectralGrid(1.0, n)


def test_rejects_bad_length():
    with pytest.raises(ValueError):
        SpectralGrid(0.0, 64)


def test_length_mismatch():
    with pytest.raises(ValueError, match="num_points"):
        G.forward_transform(np.zeros(63))


@given(complex_fields)
def test_round_trip(f):
    np.testing.assert_allclose(G.inverse_transform(G.forward_transform(f)), f, atol=1e-12 * (1 + np.abs(f).max()))


@given(complex_fields)
def test_parseval(f):
    lhs = np.sum(np.abs(G.forward_transform(f)) ** 2)
    rhs = np.sum(np.abs(f) ** 2) * G.dx
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)


def test_derivatives_of_lattice_mode():
    g = SpectralGrid(4 * math.pi, 128)
    k = 3 * g.dxi
    f = np.sin(k * g.x)
    np.testing.assert_allclose(g.derivative(f, 1), k * np.cos(k * g.x), atol=1e-12)
    np.testing.assert_allclose(g.derivative(f, 2), -k**2 * f, atol=1e-12)
    np.testing.assert_allclose(g.derivative(f, 3), -k**3 * np.cos(k * g.x), atol=1e-12)
    with pytest.raises(ValueError):
        g.derivative(f, 4)


def test_derivative_keeps_real_fields_real(rng):
    f = rng.normal(size=64)
    assert np.isrealobj(G.derivative(f, 3))


@given(real_fields, st.floats(0.1, 5), st.floats(0.1, 5))
def test_projection_idempotent_and_nested(f, a, b):
    lo, hi = sorted((a, b))
    p = G.sharp_project(f, lo)
    np.testing.assert_array_equal(G.sharp_mask(lo) * G.sharp_mask(lo), G.sharp_mask(lo))
    np.testing.assert_allclose(G.sharp_project(p, lo), p, atol=1e-12 * (1 + np.abs(f).max()))
    np.testing.assert_array_equal(G.sharp_mask(lo) * G.sharp_mask(hi), G.sharp_mask(lo))


@given(st.floats(0.1, 6))
def test_tail_annihilates_complement(n):
    high = 1.0 - G.sharp_mask(n)
    np.testing.assert_array_equal(G.tail_multiplier(n) * high, high)


def test_infinite_projection_copies(rng):
    f = rng.normal(size=64)
    p = G.sharp_project(f, math.inf)
    assert p is not f
    np.testing.assert_array_equal(p, f)


def test_sobolev_norm_oracle(rng):
    f = random_smooth(G, rng)
    spec = np.fft.fft(f) * math.sqrt(G.dx / G.num_points)
    expected = math.sqrt(np.sum((1 + G.xi**2) * np.abs(spec) ** 2))
    assert G.sobolev_norm(f, 1.0) == pytest.approx(expected, rel=1e-13)
    assert G.sobolev_norm(f, 0.0) == pytest.approx(G.l2_norm(f), rel=1e-13)
    with pytest.raises(ValueError):
        G.sobolev_norm(f, -1)


def test_workspace_norm_constant_in_time(rng):
    u = random_smooth(G, rng)
    v = random_smooth(G, rng, complex_=False)
    us = np.stack([u, u])
    vs = np.stack([v, v])
    expected = G.sobolev_norm(u) + G.sobolev_norm(v) + G.l2_norm(np.abs(u)) + G.l2_norm(np.abs(v))
    assert workspace_norm(G, us, vs) == pytest.approx(expected, rel=1e-13)
    assert workspace_norm(G, 0 * us, 0 * vs) == 0.0


def test_workspace_norm_errors():
    with pytest.raises(ValueError):
        workspace_norm(G, np.zeros((0, 64)), np.zeros((0, 64)))
    with pytest.raises(ValueError):
        workspace_norm(G, np.zeros((2, 64)), np.zeros((3, 64)))


def test_integrate_constant():
    assert G.integrate(np.ones(64)) == pytest.approx(2 * G.half_length)
