import json
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bilincontrol import expansion as ex
from bilincontrol import moment_solver as msol
from bilincontrol import quadratic_forms as qf
from bilincontrol import spectral_core as sc
from bilincontrol.simulator import Control


def vt_control(mu, T, n, seed, modes=24):
    rng = np.random.default_rng(seed)
    lost = sc.lost_directions(mu, modes)
    v = Control(rng.normal(size=n + 1), T)
    return msol.project_VT(v, lost.controlled)


def test_q2_matches_expansion(x_half):
    T, n, J = 0.3, 300, 24
    v = vt_control(x_half, T, n, 1, J)
    xi = ex.expand(v, None, None, x_half, J, third=False).xi_T
    assert abs(qf.q2(1, T, v, x_half, J) - ex.component(xi, 1)) < 1e-12
    assert abs(qf.q2_tilde(1, T, v, x_half, J) - ex.component(xi, 1).imag) < 1e-12


def test_q2_against_kernel_quadrature(x_sq):
    # brute-force trapezoid double sum with the kernel h2 on a fine grid
    mu = sc.preset("x_squared_corrected")
    T, n, J = 0.2, 40, 6
    v = Control.from_function(lambda t: np.sin(17 * t) + t, T, n)
    val = qf.q2(2, T, v, mu, J)
    m = 4000
    t = np.linspace(0, T, m + 1)
    vt = v(t)
    h = qf.h2_kernel(2, mu, J)
    dt = T / m
    total = 0j
    for i in range(1, m + 1):
        inner = np.trapezoid(vt[: i + 1] * h(t[i], t[: i + 1]), dx=dt) if i else 0
        total += (0.5 if i == m else 1.0) * vt[i] * inner * dt
    assert abs(val - total) < 1e-5 * max(1.0, abs(val))


def test_q2_tilde_is_rotated_imaginary_part():
    mu = sc.preset("x_squared_corrected")
    v = Control.from_function(lambda t: np.cos(40 * t), 0.25, 200)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        q = qf.q2(2, 0.25, v, mu, 64)
        qt = qf.q2_tilde(2, 0.25, v, mu, 64)
    assert abs(qt - (np.exp(-1j * sc.omega(2) * 0.25) * q).imag) < 1e-14


def test_form_identity_in_primitive(x_half):
    T, n = 0.3, 600
    for seed in range(3):
        v = vt_control(x_half, T, n, seed, 40)
        lhs = qf.q2_tilde(1, T, v, x_half, 256)
        rhs = qf.q_S(1, T, v.integral(), x_half, 256)
        assert abs(lhs - rhs) < 1e-6 * v.l2_norm() ** 2


def test_q3_matches_expansion_and_is_odd():
    mu = sc.preset("x_projection")
    J, T, n = 16, 0.3, 200
    v = Control.from_function(lambda t: np.sin(31 * t) - 0.4 * np.cos(7 * t), T, n)
    zeta = ex.expand(v, None, None, mu, J).zeta_T
    q = qf.q3(2, T, v, mu, J)
    assert abs(q - ex.component(zeta, 2)) < 1e-10 * max(1.0, abs(q))
    assert qf.q3(2, T, -v, mu, J) == -q


def test_classification(x_half):
    assert qf.classify_order(1, x_half) == "order2"
    assert qf.classify_order(2, sc.preset("x_projection")) == "order3"
    assert qf.classify_order(2, sc.preset("x_squared_corrected")) == "order2"
    with pytest.raises(ValueError):
        qf.classify_order(2, x_half)


def test_series_oracle(x_half):
    # independent closed form of <mu phi_1, phi_j> for even j
    j = np.arange(2, 501, 2, dtype=float)
    c = -8 * j / (np.pi ** 2 * (j ** 2 - 1) ** 2)
    ref = np.sum(c ** 2 * (j ** 2 - 1) / (np.pi ** 3 * j ** 2 * (j ** 2 - 2)))
    assert qf.series_q1_positive(x_half, 500) == pytest.approx(ref, rel=1e-12)


def test_ak_series_and_constants(x_half):
    assert qf.ak_series(x_half, 1, 256) == pytest.approx(1.0, abs=1e-6)
    C, tail = qf.coercivity_constant(x_half, 1, 500)
    assert C > 0 and tail > 0
    assert qf.t_star(1, x_half) == pytest.approx(1.0 / (2 * C))
    assert qf.tail_estimate(x_half, 1, 400) < qf.tail_estimate(x_half, 1, 100)


def test_kernels_and_report(x_half):
    spec = qf.KernelSpec(1, 0.5, 32, "h2")
    assert spec.evaluate(x_half, 0.2, 0.1) == qf.h2_kernel(1, x_half, 32)(0.2, 0.1)
    k = qf.KernelSpec(1, 0.5, 32, "k_kernel").evaluate(x_half, 0.3, 0.1)
    assert np.isfinite(k)
    with pytest.raises(ValueError):
        qf.KernelSpec(1, 0.5, 32, "bogus")
    v = Control.from_function(np.sin, 0.5, 50)
    rep = qf.form_report("q2_tilde", 1, 0.5, v, x_half, 32)
    back = json.loads(rep.to_json())
    assert back["value"] == pytest.approx(rep.value) and back["J"] == 32
    with pytest.raises(ValueError):
        qf.q2(1, 0.4, v, x_half)


def test_non_lost_direction_warns(x_sq):
    v = Control.from_function(np.sin, 0.5, 50)
    with pytest.warns(UserWarning):
        qf.q2(2, 0.5, v, x_sq, 16)


def test_degenerate_coefficient():
    mu = sc.custom([1.0])  # constant: mu' = 0, A_K = 0
    with pytest.raises(qf.DegenerateFormError):
        qf.t_star(1, mu)


@settings(max_examples=15, deadline=None)
@given(st.floats(-3, 3), st.integers(0, 1000))
def test_q2_homogeneous(a, seed):
    mu = sc.preset("x_minus_half")
    v = Control(np.random.default_rng(seed).normal(size=41), 0.2)
    assert qf.q2(1, 0.2, v.scaled(a), mu, 16) == pytest.approx(a * a * qf.q2(1, 0.2, v, mu, 16),
                                                              rel=1e-10, abs=1e-14)
