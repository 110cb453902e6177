import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from bilincontrol import spectral_core as sc


def test_eigenvalues_and_gaps():
    assert sc.eigenvalue(1) == pytest.approx(9.8696044, abs=1e-7)
    assert sc.eigenvalue(2) == pytest.approx(4 * np.pi ** 2)
    assert sc.omega(1) == 0.0
    assert sc.omega(2) == pytest.approx(3 * np.pi ** 2)
    assert sc.omega(3) == pytest.approx(8 * np.pi ** 2)
    with pytest.raises(ValueError):
        sc.eigenvalue(0)


def quad_coeff(f, j, k):
    g = lambda x: 2 * f(x) * np.sin(j * np.pi * x) * np.sin(k * np.pi * x)
    return integrate.quad(g, 0, 1, limit=200, epsabs=1e-14)[0]


def test_dipole_coefficients_against_quadrature(x_half, x_sq):
    assert sc.dipole_coefficient(x_half, 1, 1) == pytest.approx(0.0, abs=1e-14)
    assert sc.dipole_coefficient(x_half, 1, 2) == pytest.approx(-16 / (9 * np.pi ** 2), abs=1e-13)
    assert sc.dipole_coefficient(x_half, 1, 3) == pytest.approx(0.0, abs=1e-14)
    for j, k in ((1, 4), (3, 8), (5, 5)):
        assert sc.dipole_coefficient(x_sq, j, k) == pytest.approx(quad_coeff(lambda x: x * x, j, k), abs=1e-12)


def test_even_mode_closed_form(x_half):
    # <(x - 1/2) phi_1, phi_j> = -8 j / (pi^2 (j^2 - 1)^2) for even j
    for j in (2, 4, 10, 30):
        assert sc.dipole_coefficient(x_half, 1, j) == pytest.approx(
            -8 * j / (np.pi ** 2 * (j * j - 1) ** 2), rel=1e-10)


def test_matrix_symmetric(x_sq):
    M = x_sq.matrix(24)
    assert np.max(np.abs(M - M.T)) < 1e-10


def test_odd_modes_vanish_for_x_minus_half(x_half):
    r = x_half.row(1, 40)
    assert np.max(np.abs(r[2::2])) < 1e-13


def test_asymptotic_decay(x_half, x_sq):
    for mu in (x_half, x_sq):
        n = np.arange(16, 257, 16)
        r = np.array(mu.row(1, 256))[n - 1]
        err = np.abs(r - sc.asymptotic_dipole(mu, 1, n)) * n ** 3
        # o(n^-3): scaled error decreases along the sequence
        assert err[-1] < 0.2 * err[0] + 1e-12
        assert err[-1] < 1e-3


def test_second_moment_coefficients(x_half, x_sq):
    A, alpha, deg = sc.second_moment_coeff(x_half, 1)
    assert A == pytest.approx(1.0, abs=1e-12) and alpha == 1.0 and not deg
    A2 = sc.second_moment_coeff(x_sq, 2)[0]
    assert A2 == pytest.approx(quad_coeff(lambda x: 4 * x * x, 1, 2), abs=1e-12)


def test_derivatives_and_custom():
    mu = sc.custom([0.0, 1.0, -2.0], [(1, 0.5)])
    x = np.linspace(0, 1, 7)
    assert np.allclose(mu.mu(x), x - 2 * x ** 2 + 0.5 * np.cos(np.pi * x))
    assert np.allclose(mu.dmu(x), 1 - 4 * x - 0.5 * np.pi * np.sin(np.pi * x))
    assert np.allclose(mu.d2mu(x), -4 - 0.5 * np.pi ** 2 * np.cos(np.pi * x))


def test_sobolev_norm_examples():
    assert sc.sobolev_norm([1, 0], 3) == 1.0
    assert sc.sobolev_norm([0, 1], 3) == 8.0
    assert sc.sobolev_norm(np.array([1, 1]) / np.sqrt(2), 0) == pytest.approx(1.0)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.complex_numbers(max_magnitude=10, allow_nan=False), min_size=1, max_size=20))
def test_parseval(c):
    c = np.array(c)
    assert sc.sobolev_norm(c, 0) ** 2 == pytest.approx(np.sum(np.abs(c) ** 2), rel=1e-12, abs=1e-300)


def test_lost_direction_examples(x_half, x_sq):
    assert sc.lost_directions(x_half, 20).indices == tuple(range(1, 21, 2))
    assert sc.lost_directions(x_sq, 20).indices == ()
    assert sc.lost_directions(sc.preset("x_squared_corrected"), 20).indices == (2,)
    assert sc.lost_directions(sc.preset("two_direction"), 20).indices == (1, 2)
    assert sc.lost_directions(x_sq, 20).constant > 0


def test_unknown_preset():
    with pytest.raises(KeyError, match="unknown dipole"):
        sc.preset("nope")
