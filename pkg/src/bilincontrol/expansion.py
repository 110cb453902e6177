"""First-, second- and third-order terms of the expansion in the control.

With u = eps v + eps^2 w + eps^3 nu the solution from the ground state is
psi_1 + eps Psi + eps^2 xi + eps^3 zeta + o(eps^3), where

    i Psi'  = A Psi  - v mu psi_1
    i xi'   = A xi   - v mu Psi - w mu psi_1
    i zeta' = A zeta - v mu xi  - w mu Psi - nu mu psi_1.

Everything is integrated in the interaction picture X^(t) = e^{i Lambda t} X(t).
Terms driven by psi_1 are closed-form moments of the piecewise-linear
controls; the remaining sources are integrated with Gauss-Legendre rules on
every control interval (inner partial integrals use a nested rule), so the
fast phases e^{i lambda_k t} are evaluated exactly at the nodes.
"""

from dataclasses import dataclass

import numpy as np

from . import oscillatory as osc
from . import spectral_core as sc
from .simulator import Control, SpectralState, propagate_deviation


@dataclass
class ExpansionTerms:
    Psi_T: SpectralState
    xi_T: SpectralState
    zeta_T: SpectralState = None
    controls: tuple = ()

    def tangency(self):
        """(Re<Psi, psi_1(T)>, ||Psi||^2 + 2 Re<xi, psi_1(T)>)."""
        T = self.Psi_T.time_stamp
        g = np.exp(-1j * sc.eigenvalue(1) * T)
        first = (self.Psi_T.coeffs[0] * np.conj(g)).real
        second = (np.linalg.norm(self.Psi_T.coeffs) ** 2
                  + 2 * (self.xi_T.coeffs[0] * np.conj(g)).real)
        return float(first), float(second)


def component(state, k):
    """<X(T), psi_k(T)> for a state stamped at time T."""
    return complex(state.coeffs[k - 1] * np.exp(1j * sc.eigenvalue(k) * state.time_stamp))


def gauss_order(N, h, base=8, cap=64):
    kappa = (sc.eigenvalue(N) - sc.eigenvalue(1)) * h
    return int(min(cap, base + np.ceil(0.5 * kappa)))


class _PL:
    """Piecewise-linear signal with closed-form partial moments."""

    def __init__(self, ctrl, freqs):
        self.v = np.asarray(ctrl.samples)
        self.h = ctrl.grid_step
        self.n = ctrl.n
        self.freqs = np.asarray(freqs, dtype=float)
        self.cum = osc.cumulative_moments(self.v, self.h, self.freqs)

    def value(self, t):
        return np.interp(t, self.h * np.arange(self.n + 1), self.v)

    def partial(self, t, idx):
        """int_0^t v e^{i w s} ds for times t inside intervals idx."""
        s = t - idx * self.h
        slope = (self.v[idx + 1] - self.v[idx]) / self.h
        p = osc.phi(1j * self.freqs[:, None] * s[None, :], 1)
        local = np.exp(1j * self.freqs[:, None] * (idx * self.h)[None, :]) * (
            self.v[idx] * s * p[..., 0] + slope * s ** 2 * p[..., 1])
        return self.cum[:, idx] + local


def _check(*ctrls):
    base = ctrls[0]
    for c in ctrls[1:]:
        if c.n != base.n or abs(c.T - base.T) > 1e-12:
            raise ValueError("controls must share one grid")


class _Engine:
    def __init__(self, mu, N, T, n, p=None, chunk=None):
        self.N = N
        self.M = mu.matrix(N)
        self.lam = sc.eigenvalues(N)
        self.om = sc.omegas(N)
        self.T = T
        self.n = n
        self.h = T / n
        self.p = gauss_order(N, self.h) if p is None else p
        x, w = np.polynomial.legendre.leggauss(self.p)
        self.x = 0.5 * (x + 1.0)
        self.w = 0.5 * w
        self.chunk = chunk or max(1, int(4e6 // (N * self.p * self.p)))

    def coupled(self, t, X):
        """E(t) M E(t)^* X for interaction-picture columns X at times t."""
        ph = np.exp(1j * self.lam[:, None] * t[None, :])
        return ph * (self.M @ (np.conj(ph) * X))

    def outer_nodes(self, idx):
        t = ((idx[:, None] + self.x[None, :]) * self.h).ravel()
        iv = np.repeat(idx, self.p)
        wt = np.tile(self.w * self.h, idx.size)
        return t, iv, wt

    def sub_nodes(self, idx):
        """Nested nodes for [t_i, t_i + h x_q]: shape (|idx| p p)."""
        xs = self.x[:, None] * self.x[None, :]
        ws = self.x[:, None] * self.w[None, :] * self.h
        t = ((idx[:, None, None] + xs[None, :, :]) * self.h).ravel()
        iv = np.repeat(idx, self.p * self.p)
        wt = np.tile(ws.ravel(), idx.size)
        return t, iv, wt

    def chunks(self):
        for start in range(0, self.n, self.chunk):
            yield np.arange(start, min(self.n, start + self.chunk))


def _first_hat(eng, pl, t, iv):
    """Interaction-picture first-order state i M[:,0] int_0^t v e^{i w s}."""
    return 1j * eng.M[:, 0][:, None] * pl.partial(t, iv)


def _to_state(eng, hat):
    return SpectralState(np.exp(-1j * eng.lam * eng.T) * hat, eng.T)


def first_order(v, mu, N=64):
    """Psi(T) = i sum_j <mu phi_1, phi_j> (int v e^{i w_j t}) psi_j(T)."""
    lam = sc.eigenvalues(N)
    m = osc.moments(v.samples, v.grid_step, sc.omegas(N))
    c = 1j * mu.matrix(N)[:, 0] * m * np.exp(-1j * lam * v.T)
    return SpectralState(c, v.T)


def expand(v, w, nu, mu, N=64, p=None, third=True):
    """All requested expansion terms at the final time."""
    w = Control.zeros(v.T, v.n) if w is None else w
    nu = Control.zeros(v.T, v.n) if nu is None else nu
    _check(v, w, nu)
    eng = _Engine(mu, N, v.T, v.n, p)
    pv = _PL(v, eng.om)
    pw = _PL(w, eng.om)
    m0 = 1j * eng.M[:, 0]

    psi_hat_T = m0 * pv.cum[:, -1]
    xi_w_T = m0 * pw.cum[:, -1]
    xi_v_T = np.zeros(N, dtype=complex)
    zeta_T = m0 * osc.moments(nu.samples, nu.grid_step, eng.om) if third else None

    for idx in eng.chunks():
        t, iv, wt = eng.outer_nodes(idx)
        vt = pv.value(t)
        psi_hat = _first_hat(eng, pv, t, iv)
        src = 1j * vt * eng.coupled(t, psi_hat)
        # per-interval integrals of the xi source
        per = (src * wt).reshape(N, idx.size, eng.p).sum(axis=2)
        if third:
            # xi_v at outer nodes: cumulative start + nested partial integral
            start = xi_v_T[:, None] + np.concatenate(
                (np.zeros((N, 1)), np.cumsum(per, axis=1)[:, :-1]), axis=1)
            ts, ivs, ws = eng.sub_nodes(idx)
            sub = 1j * pv.value(ts) * eng.coupled(ts, _first_hat(eng, pv, ts, ivs))
            part = (sub * ws).reshape(N, idx.size * eng.p, eng.p).sum(axis=2)
            xi_v = np.repeat(start, eng.p, axis=1) + part
            xi_hat = xi_v + m0[:, None] * pw.partial(t, iv)
            wtv = pw.value(t)
            zsrc = 1j * vt * eng.coupled(t, xi_hat) + 1j * wtv * eng.coupled(t, psi_hat)
            zeta_T = zeta_T + (zsrc * wt).sum(axis=1)
        xi_v_T = xi_v_T + per.sum(axis=1)

    Psi = _to_state(eng, psi_hat_T)
    xi = _to_state(eng, xi_v_T + xi_w_T)
    zeta = _to_state(eng, zeta_T) if third else None
    return ExpansionTerms(Psi, xi, zeta, (v, w, nu))


def second_order(v, w, mu, N=64, p=None):
    return expand(v, w, None, mu, N, p, third=False).xi_T


def third_order(v, w, nu, mu, N=64, p=None):
    return expand(v, w, nu, mu, N, p, third=True).zeta_T


def gauge_expansion_terms(s, mu, N=64, p=None):
    """(Psi~(T), xi~(T)) for the auxiliary expansion driven by the primitive s.

    i Psi~' = A Psi~ - i s D psi_1,  i xi~' = A xi~ - i s D Psi~ + s^2 (mu')^2 psi_1
    with D = 2 mu' d/dx + mu''.
    """
    if abs(s.samples[0]) > 1e-14:
        raise ValueError("primitive must start at zero")
    eng = _Engine(mu, N, s.T, s.n, p)
    B = mu.derivative_coupling(N)
    P = mu.slope_square(N)
    ps = _PL(s, eng.om)
    b0 = -B[:, 0]
    psi_hat_T = b0 * ps.cum[:, -1]
    # -i P_k1 int s^2 e^{i w_k t}, exact for the piecewise-linear s
    sq = np.array([osc.weighted_product(s.samples, s.samples, s.grid_step, om)
                   for om in eng.om])
    xi_T = -1j * P[:, 0] * sq
    for idx in eng.chunks():
        t, iv, wt = eng.outer_nodes(idx)
        st = ps.value(t)
        psi_hat = b0[:, None] * ps.partial(t, iv)
        ph = np.exp(1j * eng.lam[:, None] * t[None, :])
        src = -st * ph * (B @ (np.conj(ph) * psi_hat))
        xi_T = xi_T + (src * wt).sum(axis=1)
    return _to_state(eng, psi_hat_T), _to_state(eng, xi_T)


def _fit(x, y):
    A = np.vstack([x, np.ones_like(x)]).T
    coef, res, *_ = np.linalg.lstsq(A, y, rcond=None)
    yhat = A @ coef
    ss = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum((y - yhat) ** 2) / ss if ss > 0 else 1.0
    return float(coef[0]), float(r2)


def order_slopes(mu, v, w, nu, eps_grid, N=16, dt=5e-5):
    """Log-log slopes of the remainders after orders 0..3.

    The reference solution is the Strang deviation at dt and dt/2 combined
    by Richardson extrapolation; otherwise the O(eps dt^2) splitting error
    floors the third-order remainder at small eps.
    Returns a dict with per-eps remainders and fitted (slope, R^2).
    """
    eps = np.asarray(sorted(eps_grid), dtype=float)
    if np.log10(eps.max() / eps.min()) < 1.5:
        raise ValueError("eps grid must span at least 1.5 decades")
    terms = expand(v, w, nu, mu, N)
    parts = [terms.Psi_T.coeffs, terms.xi_T.coeffs, terms.zeta_T.coeffs]
    rem = np.zeros((4, eps.size))
    for i, e in enumerate(eps):
        u = Control(e * v.samples + e ** 2 * w.samples + e ** 3 * nu.samples, v.T)
        psi0 = SpectralState.eigen(1, N)
        coarse = propagate_deviation(psi0, u, mu, dt=dt).coeffs
        fine = propagate_deviation(psi0, u, mu, dt=0.5 * dt).coeffs
        r = (4.0 * fine - coarse) / 3.0
        rem[0, i] = np.linalg.norm(r)
        for k in range(3):
            r = r - e ** (k + 1) * parts[k]
            rem[k + 1, i] = np.linalg.norm(r)
    fits = [_fit(np.log(eps), np.log(rem[k])) for k in range(4)]
    return {"eps": eps.tolist(), "remainders": rem.tolist(),
            "slopes": [f[0] for f in fits], "r2": [f[1] for f in fits]}
