"""Second- and third-order forms along a lost direction psi_K.

With b_j = <mu phi_K, phi_j><mu phi_j, phi_1> the forms are

    q2(v)       = int_0^T v(t) int_0^t v(s) h2(t, s)
    h2(t, s)    = -sum_j b_j exp(i[(lambda_K - lambda_j) t + omega_j s])
    q2_tilde(v) = int int v v sum_j b_j sin[(lambda_j - lambda_K) t - omega_j s + omega_K T]
    q_S(S)      = -A_K int S^2 cos[omega_K (t - T)] + int_0^T S(t) int_0^t S(s) k(t, s)
    k(t, s)     = sum_j (lambda_j - lambda_K) omega_j b_j sin[(lambda_j - lambda_K) t - omega_j s + omega_K T]

and the cubic form integrates
h3 = -i sum B_{j1 j2} exp(i[(lambda_K - lambda_j1) t1 + (lambda_j1 - lambda_j2) t2 + omega_j2 t3])
over t1 > t2 > t3, with B_{j1 j2} = M_{K j1} M_{j1 j2} M_{j2 1}.

Controls are piecewise linear, so the double integrals are evaluated in
closed form (see `oscillatory`).  Kernels are truncated at J modes; the
1/j^3 decay of the dipole coefficients gives the recorded tail estimates.
"""

import json
import warnings
from dataclasses import asdict, dataclass

import numpy as np

from . import oscillatory as osc
from . import spectral_core as sc

DEFAULT_J = 256


class DegenerateFormError(ValueError):
    pass


@dataclass(frozen=True)
class KernelSpec:
    K: int
    T: float
    J: int
    kind: str  # h2, h2_tilde, k_kernel, h3

    def __post_init__(self):
        if self.kind not in ("h2", "h2_tilde", "k_kernel", "h3"):
            raise ValueError(f"unknown kernel kind: {self.kind}")
        if self.K < 1 or self.J < 1:
            raise ValueError("mode indices must be >= 1")

    def evaluate(self, mu, *times):
        if self.kind == "h2":
            return h2_kernel(self.K, mu, self.J)(*times)
        if self.kind == "h2_tilde":
            return h2_tilde_kernel(self.K, self.T, mu, self.J)(*times)
        if self.kind == "k_kernel":
            return k_kernel(self.K, self.T, mu, self.J)(*times)
        return h3_kernel(self.K, mu, self.J)(*times)


@dataclass
class FormReport:
    kind: str
    K: int
    T: float
    value: object
    J: int
    grid: dict
    tail: float

    def to_dict(self):
        d = asdict(self)
        v = self.value
        if isinstance(v, complex):
            d["value"] = {"re": v.real, "im": v.imag}
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


def _rows(mu, K, J):
    """(<mu phi_1, phi_j>, <mu phi_K, phi_j>) for j = 1..J."""
    return np.asarray(mu.row(1, J)), np.asarray(mu.row(K, J))


def products(mu, K, J=DEFAULT_J):
    """b_j = <mu phi_K, phi_j><mu phi_j, phi_1>, j = 1..J."""
    r1, rK = _rows(mu, K, J)
    return r1 * rK


def _envelope(row):
    k = np.arange(1, row.size + 1, dtype=float)
    return float(np.max(np.abs(row) * k ** 3))


def tail_estimate(mu, K, J, weight_power=0):
    """Estimate of sum_{j>J} j^p |b_j| from the 1/j^3 envelopes.

    weight_power = 0 bounds the h2 tails; 4 bounds the k-kernel tail, whose
    weights (lambda_j - lambda_K) omega_j grow like pi^4 j^4.
    """
    r1, rK = _rows(mu, K, J)
    c = _envelope(r1) * _envelope(rK)
    p = 6 - weight_power
    scale = np.pi ** 4 if weight_power == 4 else 1.0
    return float(scale * c * J ** (1.0 - p) / (p - 1.0))


def _check_lost(mu, K, tol=1e-9):
    r = sc.dipole_coefficient(mu, 1, K)
    if abs(r) * K ** 3 > tol:
        warnings.warn(f"<mu phi_1, phi_{K}> = {r:.3e} is not a lost direction", stacklevel=3)


def _check_horizon(ctrl, T):
    if abs(ctrl.T - T) > 1e-12 * max(1.0, T):
        raise ValueError(f"control horizon {ctrl.T} differs from T = {T}")


def _modes(K, J):
    lam = sc.eigenvalues(J)
    return lam, sc.omegas(J), sc.eigenvalue(K), sc.omega(K)


# --- kernels ---------------------------------------------------------------

def h2_from_coefficients(b, K):
    """h2(t, s) = -sum_j b_j exp(i[(lambda_K - lambda_j) t + omega_j s])."""
    b = np.asarray(b, dtype=complex)
    J = b.size
    lam, om, lK, _ = _modes(K, J)

    def h(t, s):
        t = np.asarray(t, dtype=float)[..., None]
        s = np.asarray(s, dtype=float)[..., None]
        return -np.sum(b * np.exp(1j * ((lK - lam) * t + om * s)), axis=-1)
    return h


def h2_kernel(K, mu, J=DEFAULT_J):
    return h2_from_coefficients(products(mu, K, J), K)


def h2_tilde_kernel(K, T, mu, J=DEFAULT_J):
    b = products(mu, K, J)
    lam, om, lK, oK = _modes(K, J)

    def h(t, s):
        t = np.asarray(t, dtype=float)[..., None]
        s = np.asarray(s, dtype=float)[..., None]
        return np.sum(b * np.sin((lam - lK) * t - om * s + oK * T), axis=-1)
    return h


def k_kernel(K, T, mu, J=DEFAULT_J):
    b = products(mu, K, J)
    lam, om, lK, oK = _modes(K, J)
    c = (lam - lK) * om * b

    def k(t, s):
        t = np.asarray(t, dtype=float)[..., None]
        s = np.asarray(s, dtype=float)[..., None]
        return np.sum(c * np.sin((lam - lK) * t - om * s + oK * T), axis=-1)
    return k


def h3_kernel(K, mu, J=32):
    M = mu.matrix(max(J, K))[:J, :J]
    rK = np.asarray(mu.row(K, J))
    B = rK[:, None] * M * M[:, 0][None, :]
    lam, om, lK, _ = _modes(K, J)

    def h(t1, t2, t3):
        t1, t2, t3 = (np.asarray(x, dtype=float)[..., None, None] for x in (t1, t2, t3))
        ph = ((lK - lam)[:, None] * t1 + (lam[:, None] - lam[None, :]) * t2
              + om[None, :] * t3)
        return -1j * np.sum(B * np.exp(1j * ph), axis=(-2, -1))
    return h


# --- forms -----------------------------------------------------------------

def q2(K, T, v, mu, J=DEFAULT_J):
    """Complex second-order component <xi(T), psi_K(T)> for v in V_T."""
    _check_horizon(v, T)
    _check_lost(mu, K)
    b = products(mu, K, J)
    lam, om, lK, _ = _modes(K, J)
    return complex(osc.double_integral(v.samples, v.samples, v.grid_step,
                                       -b, lK - lam, om))


def q2_tilde(K, T, v, mu, J=DEFAULT_J):
    """Im <xi(T), phi_K e^{-i lambda_1 T}> through the sine kernel."""
    _check_horizon(v, T)
    _check_lost(mu, K)
    b = products(mu, K, J)
    lam, om, lK, oK = _modes(K, J)
    val = osc.double_integral(v.samples, v.samples, v.grid_step,
                              b * np.exp(1j * oK * T), lam - lK, -om)
    return float(val.imag)


def q_S(K, T, S, mu, J=DEFAULT_J, A=None):
    """Form in the primitive S; A defaults to <(mu')^2 phi_1, phi_K>."""
    _check_horizon(S, T)
    if A is None:
        A = sc.second_moment_coeff(mu, K)[0]
    b = products(mu, K, J)
    lam, om, lK, oK = _modes(K, J)
    h = S.grid_step
    local = osc.weighted_product(S.samples, S.samples, h, oK)
    first = -A * float((np.exp(-1j * oK * T) * local).real)
    c = (lam - lK) * om * b * np.exp(1j * oK * T)
    second = osc.double_integral(S.samples, S.samples, h, c, lam - lK, -om).imag
    return float(first + second)


def ak_series(mu, K, J=DEFAULT_J):
    """sum_{j<=J} (lambda_j - (lambda_1 + lambda_K)/2) b_j, which tends to A_K."""
    b = products(mu, K, J)
    lam = sc.eigenvalues(J)
    return float(np.sum((lam - 0.5 * (sc.eigenvalue(1) + sc.eigenvalue(K))) * b))


def coercivity_constant(mu, K, J=500):
    """(C_K truncated at J, tail estimate) with
    C_K = sum_j |(lambda_j - lambda_K) omega_j b_j|."""
    b = products(mu, K, J)
    lam, om, lK, _ = _modes(K, J)
    C = float(np.sum(np.abs((lam - lK) * om * b)))
    return C, tail_estimate(mu, K, J, weight_power=4)


def t_star(K, mu, J=500):
    """Time below which q_S <= -A_K/4 ||S||^2 (sign of A_K), from C_K at J."""
    A, _, degenerate = sc.second_moment_coeff(mu, K)
    if degenerate:
        raise DegenerateFormError(f"A_{K} = 0: no coercivity threshold")
    C, _ = coercivity_constant(mu, K, J)
    first = abs(A) / (2.0 * C)
    if K == 1:
        return first
    return min(first, np.pi / (3.0 * (sc.eigenvalue(K) - sc.eigenvalue(1))))


def _gauss_order(freq, h, base=8, cap=96):
    return int(min(cap, base + np.ceil(0.6 * freq * h)))


def q3(K, T, v, mu, J=32, p=None):
    """Cubic form along psi_K.

    The innermost and outermost integrals are closed-form partial moments,
    g_j2(t) = int_0^t v e^{i omega_j2 s} and R_j1(t) = int_t^T v e^{i(lambda_K - lambda_j1) s},
    leaving a single Gauss-Legendre integral in the middle variable:
    q3 = -i sum B_{j1 j2} int v(t) e^{i(lambda_j1 - lambda_j2) t} R_j1(t) g_j2(t) dt.
    """
    _check_horizon(v, T)
    lam, om, lK, _ = _modes(K, J)
    M = mu.matrix(max(J, K))[:J, :J]
    rK = np.asarray(mu.row(K, J))
    h = v.grid_step
    n = v.n
    if p is None:
        p = _gauss_order(2.0 * lam[-1], h)
    x, w = np.polynomial.legendre.leggauss(p)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w * h
    alphas = lK - lam
    total_outer = osc.moments(v.samples, h, alphas)
    val = 0j
    step = max(1, int(2e6 // (J * p)))
    for start in range(0, n, step):
        idx = np.arange(start, min(n, start + step))
        t = ((idx[:, None] + x[None, :]) * h).ravel()
        wt = np.tile(w, idx.size)
        vt = np.interp(t, h * np.arange(n + 1), v.samples)
        g = osc.partial_moments(v.samples, h, om, t)               # (J, m)
        R = total_outer[:, None] - osc.partial_moments(v.samples, h, alphas, t)
        left = rK[:, None] * R * np.exp(1j * lam[:, None] * t[None, :])
        right = M[:, 0][:, None] * g * np.exp(-1j * lam[:, None] * t[None, :])
        val += np.sum(wt * vt * np.sum(left * (M @ right), axis=0))
    return complex(-1j * val)


def classify_order(K, mu, J=64, tol=1e-10):
    """'order2', 'order3' or 'undecided' for a lost direction K.

    order2 when some b_j lies outside the resonant set
    {j : exists k with lambda_j - lambda_1 = lambda_K - lambda_k, j, k controlled, <= K}
    or resonant partners carry unequal b; order3 when the quadratic form is
    degenerate but some B_{n1 n2} with n1, n2 > K is nonzero.
    """
    J = max(J, K + 2)
    r1, rK = _rows(mu, K, J)
    if abs(r1[K - 1]) > tol:
        raise ValueError(f"K = {K} is not a lost direction")
    b = r1 * rK
    controlled = [j for j in range(1, J + 1) if abs(r1[j - 1]) > tol]
    small = [j for j in controlled if j <= K]
    partner = {}
    for j in small:
        for k in small:
            if j * j + k * k == K * K + 1:
                partner[j] = k
    for j in range(1, J + 1):
        if abs(b[j - 1]) <= tol:
            continue
        if j not in partner:
            return "order2"
        if abs(b[j - 1] - b[partner[j] - 1]) > tol:
            return "order2"
    M = mu.matrix(J)
    triple = rK[K:, None] * M[K:, K:] * r1[None, K:]
    if np.any(np.abs(triple) > tol):
        return "order3"
    return "undecided"


def form_report(kind, K, T, ctrl, mu, J=DEFAULT_J):
    """Evaluate one form and attach its truncation metadata."""
    funcs = {"q2": q2, "q2_tilde": q2_tilde, "q_S": q_S}
    if kind == "q3":
        val = q3(K, T, ctrl, mu, J=J)
        tail = tail_estimate(mu, K, J)
    elif kind in funcs:
        val = funcs[kind](K, T, ctrl, mu, J=J)
        l1 = float(np.sum(np.abs(ctrl.samples)) * ctrl.grid_step)
        power = 4 if kind == "q_S" else 0
        tail = 0.5 * l1 ** 2 * tail_estimate(mu, K, J, weight_power=power)
    else:
        raise ValueError(f"unknown form: {kind}")
    return FormReport(kind, K, float(T), val, J,
                      {"n": ctrl.n, "h": ctrl.grid_step}, float(tail))


def series_q1_positive(mu, J=500):
    """sum_{j>=2} <mu phi_1, phi_j>^2 (j^2 - 1) / (pi^3 j^2 (j^2 - 2))."""
    r1 = np.asarray(mu.row(1, J))
    j = np.arange(2, J + 1, dtype=float)
    return float(np.sum(r1[1:] ** 2 * (j ** 2 - 1) / (np.pi ** 3 * j ** 2 * (j ** 2 - 2))))
