import numpy as np
import pytest

from waveepi import ComplexVolume, Grid, adjoint_dot_test, dft_array
from waveepi.grids import dft_axis


def test_grid_coords_centered():
    g = Grid(8, 5, 4, 2.0, 1.5, 3.0)
    x = g.coords("x")
    assert x[8 // 2] == 0.0
    assert np.allclose(np.diff(x), 2.0)
    y = g.coords("y")
    assert y[5 // 2] == 0.0


def test_grid_validation():
    with pytest.raises(ValueError):
        Grid(0, 4, 4)
    with pytest.raises(ValueError):
        Grid(4, 4, 4, dx=0.0)


@pytest.mark.parametrize("n", [4, 5, 16])
def test_dft_unitary(n):
    rng = np.random.default_rng(0)
    x = rng.standard_normal((n, 3)) + 1j * rng.standard_normal((n, 3))
    f = dft_array(x, 0, "forward")
    # norm preservation and exact inversion
    assert abs(np.linalg.norm(f) - np.linalg.norm(x)) < 1e-12
    back = dft_array(f, 0, "inverse")
    assert np.abs(back - x).max() < 1e-12


def test_dft_unitarity_matrix():
    n = 16
    f = np.stack([dft_array(np.eye(n)[i].astype(complex), 0, "forward") for i in range(n)]).T
    err = np.abs(f.conj().T @ f - np.eye(n)).max()
    assert err < 1e-12


def test_dft_dc_position():
    # constant image -> single peak at index n//2
    n = 8
    f = dft_array(np.ones(n, dtype=complex), 0, "forward")
    assert np.argmax(np.abs(f)) == n // 2
    assert abs(f[n // 2] - np.sqrt(n)) < 1e-12


def test_dft_shift_theorem():
    # impulse at coordinate u -> linear phase exp(-2pi i k u / n)
    n = 16
    i0 = 11
    x = np.zeros(n, dtype=complex)
    x[i0] = 1.0
    f = dft_array(x, 0, "forward")
    k = np.arange(n) - n // 2
    expected = np.exp(-2j * np.pi * k * (i0 - n // 2) / n) / np.sqrt(n)
    assert np.abs(f - expected).max() < 1e-12


def test_dft_axis_domain_guard():
    g = Grid(4, 4, 4)
    v = ComplexVolume(g, np.zeros(g.shape))
    v2 = dft_axis(v, "y", "forward")
    assert v2.domain == ("image", "freq", "image")
    with pytest.raises(ValueError):
        dft_axis(v2, "y", "forward")


def test_complex_volume_checks():
    g = Grid(4, 4, 4)
    with pytest.raises(ValueError):
        ComplexVolume(g, np.zeros((4, 4, 3)))
    bad = np.zeros(g.shape)
    bad[0, 0, 0] = np.nan
    with pytest.raises(ValueError):
        ComplexVolume(g, bad)


def test_adjoint_dot_test_detects_wrong_adjoint():
    rng = np.random.default_rng(3)
    a = rng.standard_normal((6, 6)) + 1j * rng.standard_normal((6, 6))
    good = adjoint_dot_test(lambda x: a @ x, lambda y: a.conj().T @ y, (6,), (6,), seed=0)
    assert good < 1e-14
    bad = adjoint_dot_test(lambda x: a @ x, lambda y: a.T @ y, (6,), (6,), seed=0)
    assert bad > 1e-3
