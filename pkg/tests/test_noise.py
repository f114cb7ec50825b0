import math

import numpy as np
import pytest

from skdv import NoiseOperator, NoisePath, SpectralGrid
from skdv.noise import mode_wavenumbers, sample_increment

G = SpectralGrid(8 * math.pi, 128)


def op(num_modes=21, channel=1, mode="real", lam=0.3):
    return NoiseOperator.from_decay(G.half_length, lam, 2.0, num_modes, channel, mode)


def test_mode_wavenumbers():
    assert mode_wavenumbers(6).tolist() == [0, 1, 1, 2, 2, 3]


def test_basis_is_orthonormal():
    for n in (1, 10, 21):
        B = op(n).basis(G)
        np.testing.assert_allclose(B @ B.T * G.dx, np.eye(n), atol=1e-13)


def test_basis_functions():
    B = op(5).basis(G)
    x = G.x
    xi1 = math.pi / G.half_length
    np.testing.assert_allclose(B[0], 1 / math.sqrt(2 * G.half_length))
    np.testing.assert_allclose(B[3], np.cos(2 * xi1 * x) / math.sqrt(G.half_length), atol=1e-14)
    np.testing.assert_allclose(B[4], np.sin(2 * xi1 * x) / math.sqrt(G.half_length), atol=1e-14)


def test_geometric_operator_norm():
    coeffs = 2.0 ** -np.arange(60)
    phi = NoiseOperator(G.half_length, coeffs)
    assert phi.hs_norm() ** 2 == pytest.approx(4 / 3, rel=1e-15)


def test_hs_norms():
    phi = op(9)
    xi = phi.frequencies
    c = phi.coefficients
    assert phi.hs_norm(1.0) ** 2 == pytest.approx(np.sum(c**2 * (1 + xi**2)))
    assert phi.hs_norm(1.0, homogeneous=True) ** 2 == pytest.approx(np.sum(c**2 * xi**2))
    # Hilbert-Schmidt norm equals the sum of grid H^s norms of the images
    imgs = phi.images(G)
    assert phi.hs_norm(1.0) ** 2 == pytest.approx(np.sum(G.sobolev_norm(imgs, 1.0) ** 2), rel=1e-12)


def test_mollify_masks_modes():
    phi = op(21)
    m = phi.mollify(3 * math.pi / G.half_length)
    assert np.count_nonzero(m.coefficients) == 7
    assert m.mollify(100.0).coefficients.tolist() == m.coefficients.tolist()


@pytest.mark.parametrize("mode", ["real", "complex"])
@pytest.mark.parametrize("num_modes", [1, 10, 21])
def test_increment_matches_basis_synthesis(mode, num_modes):
    phi = op(num_modes, mode=mode)
    path = NoisePath(11, 0.01, 5)
    normals = path.normals(2, 1, num_modes, [0, 4])
    w = phi.mode_weights(normals, 0.01)
    direct = w @ phi.basis(G)
    got = sample_increment(phi, path, 2, G, paths=[0, 4])
    np.testing.assert_allclose(got, direct, atol=1e-15)
    if mode == "real":
        assert np.isrealobj(got)


def test_single_path_shape_and_channels_independent():
    path = NoisePath(3, 0.01, 4)
    a = sample_increment(op(11, 1), path, 0, G)
    b = sample_increment(op(11, 2), path, 0, G)
    assert a.shape == (G.num_points,)
    assert not np.allclose(a, b)


def test_common_path_across_mollification():
    path = NoisePath(5, 0.02, 3)
    full = op(21)
    cut = full.mollify(2 * math.pi / G.half_length)
    w_full = full.mode_weights(path.normals(1, 1, 21), 0.02)
    w_cut = cut.mode_weights(path.normals(1, 1, 21), 0.02)
    np.testing.assert_array_equal(w_cut[..., :5], w_full[..., :5])
    assert not w_cut[..., 5:].any()


def test_increment_variance():
    phi = op(15)
    path = NoisePath(8, 0.25, 1)
    inc = sample_increment(phi, path, 0, G, paths=np.arange(4000))
    mean_sq = np.mean(G.l2_norm(inc) ** 2)
    expected = 0.25 * phi.hs_norm() ** 2
    assert abs(mean_sq - expected) < 5 * expected * math.sqrt(2 / 4000 / 2)


def test_complex_mode_circular():
    phi = op(3, mode="complex")
    path = NoisePath(8, 1.0, 1)
    w = phi.mode_weights(path.normals(0, 1, 3, np.arange(20000)), 1.0)
    assert np.mean(np.abs(w[:, 0]) ** 2) == pytest.approx(phi.coefficients[0] ** 2, rel=0.05)
    assert abs(np.mean(w[:, 0] ** 2)) < 0.05 * phi.coefficients[0] ** 2


def test_validation():
    with pytest.raises(ValueError):
        NoiseOperator(G.half_length, [-1.0])
    with pytest.raises(ValueError):
        NoiseOperator(G.half_length, [1.0], channel=3)
    with pytest.raises(ValueError):
        NoiseOperator(G.half_length, [1.0], channel=2, mode="complex")
    with pytest.raises(ValueError):
        op(200).basis(G)
    with pytest.raises(ValueError):
        NoiseOperator(1.0, [1.0]).basis(G)
    with pytest.raises(ValueError):
        NoisePath(0, 0.0, 1)
    with pytest.raises(IndexError):
        NoisePath(0, 0.1, 2).normals(2, 1, 3)


def test_coefficients_read_only():
    phi = op(3)
    with pytest.raises(ValueError):
        phi.coefficients[0] = 1.0


def test_seed_masks_to_64_bits():
    a = NoisePath(-1, 0.1, 1).normals(0, 1, 4)
    b = NoisePath(2**64 - 1, 0.1, 1).normals(0, 1, 4)
    np.testing.assert_array_equal(a, b)
