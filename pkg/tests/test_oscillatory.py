import numpy as np
from hypothesis import given, settings, strategies as st
from scipy import integrate

from bilincontrol import oscillatory as osc

SMALL = [1e-9, 1e-4, 0.3, 2.0, 40.0]


def pl(v, h):
    t = h * np.arange(len(v))
    return lambda x: np.interp(x, t, v)


def test_phi_against_quadrature():
    # phi_m(z) = int_0^1 x^m e^{z x} dx (m! scaling free definition checked via m = 0)
    for a in SMALL:
        z = 1j * a
        p = osc.phi(np.array([z]), 2)[0]
        for m in range(3):
            re = integrate.quad(lambda x: x ** m * np.cos(a * x), 0, 1, epsabs=1e-14)[0]
            im = integrate.quad(lambda x: x ** m * np.sin(a * x), 0, 1, epsabs=1e-14)[0]
            assert abs(p[m] - (re + 1j * im)) < 1e-12


def test_moments_match_quadrature(rng):
    n, h = 17, 0.05
    v = rng.normal(size=n + 1)
    f = pl(v, h)
    for w in (0.0, 3.0, 77.0):
        m = osc.moments(v, h, [w])[0]
        re = integrate.quad(lambda t: f(t) * np.cos(w * t), 0, n * h, limit=400, points=h * np.arange(n + 1))[0]
        im = integrate.quad(lambda t: f(t) * np.sin(w * t), 0, n * h, limit=400, points=h * np.arange(n + 1))[0]
        assert abs(m - (re + 1j * im)) < 1e-10


def test_cumulative_and_partial_consistent(rng):
    n, h = 20, 0.03
    v = rng.normal(size=n + 1)
    om = np.array([0.0, 5.0, 50.0])
    cum = osc.cumulative_moments(v, h, om)
    assert np.allclose(cum[:, -1], osc.moments(v, h, om), atol=1e-13)
    t = h * np.arange(n + 1)
    assert np.allclose(osc.partial_moments(v, h, om, t), cum, atol=1e-13)
    # a time inside an interval against quadrature
    f = pl(v, h)
    tt = 0.137
    knots = h * np.arange(1, int(tt / h) + 1)
    ref = integrate.quad(lambda s: f(s) * np.cos(50 * s), 0, tt, limit=200, points=knots,
                         epsabs=1e-14)[0]
    assert abs(osc.partial_moments(v, h, [50.0], [tt])[0, 0].real - ref) < 1e-12


def test_double_integral_against_nested_quadrature(rng):
    n, h = 6, 0.05
    f, g = rng.normal(size=n + 1), rng.normal(size=n + 1)
    c, a, w = np.array([0.7 - 0.2j]), np.array([-9.0]), np.array([14.0])
    val = osc.double_integral(f, g, h, c, a, w)
    F, G = pl(f, h), pl(g, h)
    T = n * h

    def inner(t):
        knots = [x for x in h * np.arange(1, n) if x < t]
        re = integrate.quad(lambda s: G(s) * np.cos(w[0] * s), 0, t, limit=100, points=knots or None)[0]
        im = integrate.quad(lambda s: G(s) * np.sin(w[0] * s), 0, t, limit=100, points=knots or None)[0]
        return re + 1j * im

    def outer(part):
        return integrate.quad(lambda t: part(F(t) * np.exp(1j * a[0] * t) * inner(t)), 0, T,
                              limit=100, points=h * np.arange(1, n))[0]
    ref = c[0] * (outer(np.real) + 1j * outer(np.imag))
    assert abs(val - ref) < 1e-8


def test_double_integral_matrix_matches(rng):
    n, h = 12, 0.02
    f, g = rng.normal(size=n + 1), rng.normal(size=n + 1)
    c, a, w = np.array([1.0, 0.5j]), np.array([3.0, -40.0]), np.array([0.0, 25.0])
    H = osc.double_integral_matrix(n, h, c, a, w)
    assert abs(f @ H @ g - osc.double_integral(f, g, h, c, a, w)) < 1e-12


def test_weighted_product_matches_dense(rng):
    n, h = 30, 0.01
    f, g = rng.normal(size=n + 1), rng.normal(size=n + 1)
    for gamma in (0.0, 7.0, 300.0):
        dense = f @ osc.weighted_mass(n, h, gamma) @ g
        assert abs(osc.weighted_product(f, g, h, gamma) - dense) < 1e-12


@settings(max_examples=30, deadline=None)
@given(st.floats(-50, 50), st.floats(-50, 50), st.integers(0, 2**31 - 1))
def test_moments_linear(a, b, seed):
    r = np.random.default_rng(seed)
    u, v = r.normal(size=9), r.normal(size=9)
    om = [0.0, 11.0]
    lhs = osc.moments(a * u + b * v, 0.1, om)
    rhs = a * osc.moments(u, 0.1, om) + b * osc.moments(v, 0.1, om)
    assert np.allclose(lhs, rhs, atol=1e-10 * (1 + abs(a) + abs(b)))


@settings(max_examples=30, deadline=None)
@given(st.floats(0.0, 1e3), st.floats(1e-4, 0.1))
def test_constant_moment_closed_form(w, h):
    n = 10
    m = osc.moments(np.ones(n + 1), h, [w])[0]
    T = n * h
    exact = T if w * T < 1e-12 else (np.exp(1j * w * T) - 1) / (1j * w)
    assert abs(m - exact) < 1e-10 * max(1.0, T)
