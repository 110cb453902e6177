"""Constructive steering: linear moment steering, lost directions at second
and third order, and the nonlinear fixed-point loop.

All blocks live on one uniform grid whose step divides pi / (lambda_K - lambda_1),
so time shifts are exact sample shifts.  Block controls vanish at both ends of
their window (pinned moment problems), so zero padding leaves the piecewise
linear interpolant unchanged.  Every certificate is recomputed with the
expansion module on the assembled control.
"""

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from . import expansion as ex
from . import min_time as mt
from . import moment_solver as msol
from . import oscillatory as osc
from . import quadratic_forms as qf
from . import spectral_core as sc
from .simulator import Control, SpectralState, propagate


class SynthesisError(RuntimeError):
    pass


class TimingError(ValueError):
    pass


def half_period(K):
    """pi / (lambda_K - lambda_1): the shift that flips the psi_K component."""
    return np.pi / sc.omega(K)


def grid_step(K=2, m=200):
    return half_period(K) / m


def _steps(t, h, what="time"):
    k = t / h
    r = int(round(k))
    if abs(k - r) > 1e-7 * max(1.0, abs(k)):
        raise ValueError(f"{what} {t!r} is not a multiple of the grid step {h!r}")
    return r


def _floor_steps(t, h):
    return int(np.floor(t / h + 1e-9))


def _split(mu, N):
    lost = list(sc.lost_directions(mu, N).indices)
    return lost, [k for k in range(1, N + 1) if k not in lost]


def _pin(c):
    """Set the (round-off sized) end samples of a pinned control to exactly 0."""
    s = np.array(c.samples)
    s[0] = s[-1] = 0.0
    return Control(s, c.T)


# --- rotation -----------------------------------------------------------------

def time_shift(v, theta, T_new):
    """Zero-padded copy of v delayed by theta on a horizon T_new (same grid step)."""
    if theta < 0:
        raise ValueError("shift must be non-negative")
    h = v.grid_step
    k = _steps(theta, h, "shift")
    n_new = _steps(T_new, h, "horizon")
    if k + v.n > n_new:
        raise ValueError(f"support overflow: shifted block ends at {(k + v.n) * h:.6g} > {T_new:.6g}")
    s = v.samples
    if (k > 0 and s[0] != 0.0) or (k + v.n < n_new and s[-1] != 0.0):
        raise ValueError("padding would change the control: end samples must vanish")
    out = np.zeros(n_new + 1)
    out[k:k + v.n + 1] = s
    return Control(out, T_new, v.primitive)


def rotation_check(v, w, theta, T_new, mu, N=16, kmax=8):
    """Max deviation of shifted coefficients from e^{i omega_k theta} times the originals."""
    base = ex.expand(v, w, None, mu, N, third=False)
    sv, sw = time_shift(v, theta, T_new), time_shift(w, theta, T_new)
    moved = ex.expand(sv, sw, None, mu, N, third=False)
    err = 0.0
    for k in range(1, kmax + 1):
        ph = np.exp(1j * sc.omega(k) * theta)
        for a, b in ((base.Psi_T, moved.Psi_T), (base.xi_T, moved.xi_T)):
            err = max(err, abs(ex.component(b, k) - ph * ex.component(a, k)))
    return err


# --- moment corrections -------------------------------------------------------

def _correction(values, mu, N, controlled, T, n, pin_ends=True, phase_time=0.0):
    """Control c with i <mu phi_1, phi_k> e^{i omega_k phase_time} int c e^{i omega_k t} = values_k."""
    M1 = mu.matrix(N)[:, 0]
    idx = np.array(controlled, dtype=int)
    if idx.size == 0:
        return Control.zeros(T, n)
    d = values / (1j * M1[idx - 1]) * np.exp(-1j * sc.omega(idx) * phase_time)
    om = sc.omega(idx)
    d = np.where(om == 0.0, d.real, d)
    prob = msol.MomentProblem(tuple(om), tuple(d), T, n, pin_ends=pin_ends)
    out = msol.solve_moments(prob, tol=1e-7)
    return _pin(out) if pin_ends else out


def second_order_w(v, mu, N, controlled):
    """w cancelling the second-order components on the controlled modes."""
    xi = ex.expand(v, None, None, mu, N, third=False).xi_T
    vals = np.array([ex.component(xi, k) for k in controlled])
    return _correction(-vals, mu, N, controlled, v.T, v.n)


def certificate(v, w, nu, mu, N, lost, third=False):
    """Expansion-based certificate of a plan or block."""
    terms = ex.expand(v, w, nu, mu, N, third=third)
    lost_set = set(lost)
    ctrl = [k for k in range(1, N + 1) if k not in lost_set]
    out = {
        "Psi_norm": terms.Psi_T.norm(),
        "xi_lost": {k: ex.component(terms.xi_T, k) for k in lost},
        "xi_controlled": float(np.sqrt(sum(abs(ex.component(terms.xi_T, k)) ** 2 for k in ctrl))),
        "tangency": terms.tangency(),
    }
    if third:
        out["zeta_lost"] = {k: ex.component(terms.zeta_T, k) for k in lost}
        out["zeta_controlled"] = float(np.sqrt(sum(abs(ex.component(terms.zeta_T, k)) ** 2
                                                   for k in ctrl)))
    return out, terms


# --- second-order blocks ------------------------------------------------------

def band_limited(T, n, rng, modes=16):
    t = np.linspace(0.0, T, n + 1)
    a = rng.normal(size=modes)
    return Control(np.sin(np.pi * np.outer(t, np.arange(1, modes + 1)) / T) @ a, T)


def v_plus(T, n):
    """cos(pi^2 t) on [0, 2/pi], zero afterwards (needs T >= 2/pi)."""
    t = np.linspace(0.0, T, n + 1)
    return Control(np.where(t <= 2.0 / np.pi + 1e-12, np.cos(np.pi ** 2 * t), 0.0), T)


def _vt_basis(T, n, controlled):
    rows = msol._real_rows(sc.omega(np.array(controlled, dtype=int)), n, T / n, pin_ends=True)[0]
    return mt._null(rows)


def _extreme_q2_tilde(K, T, n, mu, N, controlled, sign):
    """Nodal v in pinned V_T maximizing sign * q2_tilde(K) / ||v||^2."""
    h = T / n
    b = qf.products(mu, K, N)
    lam, om, lK, oK = qf._modes(K, N)
    H = osc.double_integral_matrix(n, h, b * np.exp(1j * oK * T), lam - lK, -om).imag
    H = 0.5 * (H + H.T)
    mass = osc.weighted_mass(n, h, 0.0).real
    B = _vt_basis(T, n, controlled)
    G = B.T @ H @ B
    Mm = B.T @ mass @ B
    w, V = sla.eigh(0.5 * (G + G.T), 0.5 * (Mm + Mm.T))
    i = -1 if sign > 0 else 0
    return float(w[i]), Control(B @ V[:, i], T)


@dataclass
class Block:
    """Second- or third-order block on its own window [0, T]."""
    K: int
    v: Control
    w: Control
    nu: Control = None
    value: complex = 0j          # <xi(T), psi_K(T)> (or zeta for order 3)
    certificates: dict = field(default_factory=dict)

    @property
    def T(self):
        return self.v.T


def reach_second_order(K, T, mu, N=16, n=None, h=None, sign=None, seed=0, trials=32,
                       floor=1e-8, v_seed=None):
    """(v, w) with Psi(T) = 0, <xi(T), psi_K(T)> of unit size, other controlled xi = 0.

    sign=+1/-1 asks for a signed value of q2_tilde (used for K = 1); the
    extreme generalized eigenvector of the form on pinned V_T is taken then.
    Otherwise random band-limited seeds are projected onto V_T and the best
    |q2| / ||v||^2 of `trials` draws is kept.
    """
    if qf.classify_order(K, mu, J=max(N, 64)) != "order2":
        raise SynthesisError(f"direction {K} is not reached at second order")
    if n is None:
        n = _floor_steps(T, h) if h is not None else 400
        T = n * h if h is not None else T
    lost, controlled = _split(mu, N)
    if v_seed is not None:
        v = msol.project_VT(v_seed, controlled, pin_ends=True)
        val = qf.q2_tilde(K, T, v, mu, N) if sign is not None else abs(qf.q2(K, T, v, mu, N))
        score = val / v.l2_norm() ** 2
        if sign is not None and sign * score <= floor:
            raise SynthesisError(f"seed gives q2_tilde ratio {score:.3e} with the wrong sign")
    elif sign is not None:
        score, v = _extreme_q2_tilde(K, T, n, mu, N, controlled, sign)
        if sign * score <= floor:
            raise SynthesisError(
                f"sup of {'+' if sign > 0 else '-'}q2_tilde on V_T is {sign * score:.3e}: "
                "window too short for this sign")
    else:
        rng = np.random.default_rng(seed)
        best, v = -1.0, None
        for _ in range(trials):
            cand = msol.project_VT(band_limited(T, n, rng), controlled, pin_ends=True)
            r = abs(qf.q2(K, T, cand, mu, N)) / cand.l2_norm() ** 2
            if r > best:
                best, v = r, cand
        score = best
        if best <= floor:
            raise SynthesisError(f"best |q2| ratio {best:.3e} after {trials} trials: possible degeneracy")
    size = abs(qf.q2_tilde(K, T, v, mu, N)) if sign is not None else abs(qf.q2(K, T, v, mu, N))
    v = _pin(v.scaled(1.0 / np.sqrt(size)))
    w = second_order_w(v, mu, N, controlled)
    cert, terms = certificate(v, w, None, mu, N, lost)
    cert["ratio"] = float(score)
    if cert["Psi_norm"] > 1e-7 * max(1.0, v.l2_norm()):
        raise SynthesisError(f"Psi(T) certificate failed: {cert['Psi_norm']:.2e}")
    return Block(K, v, w, None, ex.component(terms.xi_T, K), cert)


# --- lost-direction synthesis -------------------------------------------------

@dataclass
class Placed:
    role: str
    start: float
    duration: float
    v: Control       # on the full horizon
    w: Control
    lost_vector: np.ndarray   # realized xi components on the lost modes


@dataclass
class SynthesisPlan:
    T: float
    lost: tuple
    target: np.ndarray
    blocks: list
    v: Control
    w: Control
    nu: Control = None
    certificates: dict = field(default_factory=dict)

    def control(self, eps=1.0):
        """eps v + eps^2 w (+ eps^3 nu) on the plan horizon."""
        u = self.v.scaled(eps) + self.w.scaled(eps ** 2)
        if self.nu is not None:
            u = u + self.nu.scaled(eps ** 3)
        return u

    def to_dict(self):
        def cplx(z):
            return [float(np.real(z)), float(np.imag(z))]
        cert = {}
        for k, val in self.certificates.items():
            if isinstance(val, dict):
                cert[k] = {str(a): cplx(b) for a, b in val.items()}
            elif isinstance(val, (tuple, list)):
                cert[k] = [float(x) for x in val]
            else:
                cert[k] = float(val)
        return {"T": self.T, "lost": list(self.lost),
                "target": [cplx(z) for z in self.target],
                "blocks": [{"role": b["role"], "start": b["start"], "duration": b["duration"],
                            "v_scale": b["v_scale"], "w_scale": b["w_scale"]}
                           for b in self.blocks],
                "certificates": cert}

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


@dataclass
class LostBasis:
    """Four shifted copies of one K-block and their realized vectors."""
    K: int
    blocks: list
    f: np.ndarray        # realized <xi, psi_K(T)> per copy
    f_tilde: np.ndarray  # realized Im <xi, psi_1(T)> per copy

    def decompose(self, y, tol=1e-12):
        """(j, d1, d2) with y = d1 f_j + d2 f_{j+1}, d1, d2 >= 0 (indices mod 4).

        On a cone edge the sector led by that edge is preferred (largest d1).
        """
        found = []
        for j in range(4):
            a, b = self.f[j], self.f[(j + 1) % 4]
            A = np.array([[a.real, b.real], [a.imag, b.imag]])
            d = np.linalg.solve(A, [y.real, y.imag])
            if np.all(d >= -tol * max(1.0, abs(y))):
                found.append((d[0], j, max(d[0], 0.0), max(d[1], 0.0)))
        if not found:
            raise SynthesisError("cone decomposition failed: f vectors do not span")
        return max(found)[1:]


def basis_lost_direction(K, T, T_c, T_theta, start, mu, N=16, h=None, seed=0, block=None):
    """Four copies of a K-block shifted by start + {0, T_theta, p, T_theta + p}."""
    p = half_period(K)
    h = grid_step(K) if h is None else h
    T_c, T_theta = _floor_steps(T_c, h) * h, _floor_steps(T_theta, h) * h
    start = int(np.ceil(start / h - 1e-9)) * h
    if not (0 < T_c < T_theta and T_c + T_theta < p):
        raise TimingError(f"need T_c < T_theta and T_c + T_theta < {p:.6g}")
    if start + T_theta + p + T_c > T + 1e-12:
        raise TimingError("the four copies do not fit in the horizon")
    if block is None:
        block = reach_second_order(K, T_c, mu, N, h=h, seed=seed)
    lost, _ = _split(mu, N)
    placed = []
    f, ft = [], []
    for i, th in enumerate((0.0, T_theta, p, T_theta + p)):
        t0 = _steps(start + th, h, "shift") * h
        v = time_shift(block.v, t0, T)
        w = time_shift(block.w, t0, T)
        xi = ex.expand(v, w, None, mu, N, third=False).xi_T
        vec = np.array([ex.component(xi, k) for k in lost])
        placed.append(Placed(f"K{K}_copy{i + 1}", t0, block.T, v, w, vec))
        f.append(ex.component(xi, K))
        ft.append(ex.component(xi, 1).imag)
    return LostBasis(K, placed, np.array(f), np.array(ft))


def reach_K1_pair(T, T_c1, mu, N=16, h=None, partner=None):
    """Signed K = 1 blocks; with a lost partner K the block is duplicated at an
    odd multiple of pi / (lambda_K - lambda_1) so its psi_K component cancels.

    Returns {+1: Placed, -1: Placed} on the horizon T.
    """
    h = grid_step(partner or 2) if h is None else h
    out = {}
    for sign in (1, -1):
        blk = reach_second_order(1, T_c1, mu, N, h=h, sign=sign)
        v = time_shift(blk.v, 0.0, T)
        w = time_shift(blk.w, 0.0, T)
        shift = None
        if partner is not None:
            p = half_period(partner)
            k = int(np.ceil(T_c1 / p - 1e-9))
            k += 1 - k % 2
            shift = k * p
            if shift + T_c1 > T + 1e-12:
                raise TimingError("no odd multiple of the half period fits the window")
            v = v + time_shift(blk.v, shift, T)
            w = w + time_shift(blk.w, shift, T)
        lost, _ = _split(mu, N)
        xi = ex.expand(v, w, None, mu, N, third=False).xi_T
        vec = np.array([ex.component(xi, k) for k in lost])
        dur = T_c1 if shift is None else shift + T_c1
        out[sign] = Placed(f"K1_{'plus' if sign > 0 else 'minus'}", 0.0, dur, v, w, vec)
    return out


_TMIN_CACHE = {}


def tmin2_estimate(mu, bracket=(0.02, 1.5), tol=1e-3, n=512):
    key = (mu, bracket, tol, n)
    if key not in _TMIN_CACHE:
        _TMIN_CACHE[key] = mt.estimate_Tmin2(mu, bracket, tol, n)[1]
    return _TMIN_CACHE[key]


def t_sharp(mu, N=16, Tmin2=None, margin=1.1):
    """Sufficient horizon for the lost set {1, K} (or {1}, or {K})."""
    lost, _ = _split(mu, N)
    others = [k for k in lost if k != 1]
    if len(others) > 1:
        raise NotImplementedError("more than one lost direction besides 1")
    extra = 3.0 * half_period(others[0]) if others else 0.0
    if 1 not in lost:
        return extra
    Tc1 = margin * (tmin2_estimate(mu) if Tmin2 is None else Tmin2)
    return (2.0 * Tc1 if others else Tc1) + extra


class LostDirectionSynthesizer:
    """Precomputed blocks for Lambda_T on a fixed horizon.

    Supported lost sets: {1}, {K} and {1, K} with K >= 2.
    """

    def __init__(self, T, mu, N=16, m=200, Tmin2=None, margin=1.1, seed=0):
        self.mu, self.N = mu, N
        self.lost, self.controlled = _split(mu, N)
        others = [k for k in self.lost if k != 1]
        if len(others) > 1:
            raise NotImplementedError("more than one lost direction besides 1")
        self.K = others[0] if others else None
        self.h = grid_step(self.K or 2, m)
        h = self.h
        self.T = _floor_steps(T, h) * h   # horizons are snapped down to the grid
        self.t_sharp = t_sharp(mu, N, Tmin2, margin)
        if self.T <= self.t_sharp:
            raise TimingError(f"T = {self.T:.6g} <= T_sharp = {self.t_sharp:.6g}")
        self.pair = None
        used = 0.0
        if 1 in self.lost:
            Tc1 = margin * (tmin2_estimate(mu) if Tmin2 is None else Tmin2)
            Tc1 = int(np.ceil(Tc1 / h)) * h
            self.pair = reach_K1_pair(self.T, Tc1, mu, N, h, self.K)
            used = self.pair[1].duration
            self.T_c1 = Tc1
        self.basis = None
        if self.K is not None:
            p = half_period(self.K)
            room = min(p, self.T - used - p)
            span = 0.9 * room
            T_theta = _floor_steps(0.55 * span, h) * h
            T_c = _floor_steps(0.45 * span, h) * h
            if _steps(T_c, h) < 16:
                raise TimingError("window for the K-blocks is too short on this grid")
            start = _steps(used, h) * h
            self.basis = basis_lost_direction(self.K, self.T, T_c, T_theta, start, mu, N, h,
                                              seed=seed)
            self.schedule = {"T_c": T_c, "T_theta": T_theta, "start": start}
        self.n = _steps(self.T, h)

    def _zero(self):
        return Control.zeros(self.T, self.n)

    def target_vector(self, z):
        z = np.asarray(z, dtype=complex)
        if z.shape != (len(self.lost),):
            raise ValueError(f"target must have {len(self.lost)} entries (lost modes {self.lost})")
        if 1 in self.lost and abs(z[self.lost.index(1)].real) > 1e-12 * max(1.0, np.abs(z).max()):
            raise ValueError("the psi_1 component of a reachable target is purely imaginary")
        return z

    def _pieces(self, z):
        """[(Placed, scale)] with xi = sum scale * lost_vector = z."""
        if 1 in self.lost and self.K is None:
            x = z[0].imag
            if x == 0.0:
                return []
            blk = self.pair[1 if x > 0 else -1]
            return [(blk, abs(x) / abs(blk.lost_vector[0].imag))]
        if self.K is not None and 1 not in self.lost:
            y = z[0]
            j, d1, d2 = self.basis.decompose(y)
            return [(self.basis.blocks[j], d1), (self.basis.blocks[(j + 1) % 4], d2)]
        iK = self.lost.index(self.K)
        rhs = np.array([z[0].imag, z[iK].real, z[iK].imag])
        for kappa in (1, -1):
            L = self.pair[kappa].lost_vector
            for j in range(4):
                b1, b2 = self.basis.blocks[j], self.basis.blocks[(j + 1) % 4]
                A = np.array([[L[0].imag, b1.lost_vector[0].imag, b2.lost_vector[0].imag],
                              [L[iK].real, b1.lost_vector[iK].real, b2.lost_vector[iK].real],
                              [L[iK].imag, b1.lost_vector[iK].imag, b2.lost_vector[iK].imag]])
                c = np.linalg.solve(A, rhs)
                if np.all(c >= -1e-12 * max(1.0, np.abs(rhs).max())):
                    c = np.maximum(c, 0.0)
                    return [(self.pair[kappa], c[0]), (b1, c[1]), (b2, c[2])]
        raise SynthesisError("no sector contains the target")

    def lambda_map(self, z):
        """(v, w) with Psi(T) = 0 and xi(T) = z on the lost modes."""
        z = self.target_vector(z)
        v, w = self._zero(), self._zero()
        for blk, s in self._pieces(z):
            v = v + blk.v.scaled(np.sqrt(s))
            w = w + blk.w.scaled(s)
        return v, w

    def plan(self, z):
        z = self.target_vector(z)
        pieces = self._pieces(z)
        v, w = self._zero(), self._zero()
        for blk, s in pieces:
            v = v + blk.v.scaled(np.sqrt(s))
            w = w + blk.w.scaled(s)
        cert, _ = certificate(v, w, None, self.mu, self.N, self.lost)
        achieved = np.array([cert["xi_lost"][k] for k in self.lost])
        cert["xi_error"] = float(np.linalg.norm(achieved - z))
        cert["xi_relative_error"] = cert["xi_error"] / max(float(np.linalg.norm(z)), 1e-300)
        blocks = [{"role": b.role, "start": b.start, "duration": b.duration,
                   "v_scale": float(np.sqrt(s)), "w_scale": float(s)} for b, s in pieces]
        return SynthesisPlan(self.T, tuple(self.lost), z, blocks, v, w, None, cert)

    def additivity_error(self, z):
        """|xi(sum of blocks) - sum of xi(blocks)| on all modes."""
        z = self.target_vector(z)
        total_v, total_w = self._zero(), self._zero()
        acc = np.zeros(self.N, dtype=complex)
        for blk, s in self._pieces(z):
            bv, bw = blk.v.scaled(np.sqrt(s)), blk.w.scaled(s)
            acc += ex.second_order(bv, bw, self.mu, self.N).coeffs
            total_v, total_w = total_v + bv, total_w + bw
        joint = ex.second_order(total_v, total_w, self.mu, self.N).coeffs
        return float(np.linalg.norm(joint - acc))


def lambda_map(z, T, mu, N=16, m=200, Tmin2=None):
    """Plan reaching xi(T) = z on the lost modes with Psi(T) = 0."""
    if np.allclose(np.asarray(z, dtype=complex), 0.0):
        lost, _ = _split(mu, N)
        h = grid_step(2, m)
        n = _floor_steps(T, h)
        zero = Control.zeros(n * h, n)
        return SynthesisPlan(n * h, tuple(lost), np.zeros(len(lost), dtype=complex), [],
                             zero, zero, None, {"Psi_norm": 0.0, "xi_error": 0.0})
    return LostDirectionSynthesizer(T, mu, N, m, Tmin2).plan(z)


# --- third order --------------------------------------------------------------

@dataclass
class ThirdOrderBlock:
    K: int
    v: Control
    w: Control
    nu: Control
    value: complex            # zeta_K(T) for the unit block
    certificates: dict

    def controls(self, s):
        """(v, w, nu) reaching zeta_K = s * value for real s (v -> -v flips the sign)."""
        s = float(s)
        if s == 0.0:
            z = Control.zeros(self.v.T, self.v.n)
            return z, z, z
        e = abs(s) ** (1.0 / 3.0)
        sg = np.sign(s)
        return self.v.scaled(sg * e), self.w.scaled(e * e), self.nu.scaled(sg * e ** 3)

    def controls_for(self, z):
        """Controls for a complex target on the reachable line through `value`."""
        z = complex(z)
        s = z / self.value
        if abs(s.imag) > 1e-9 * max(1.0, abs(s)):
            raise ValueError("target is not on the line reached by this block")
        return self.controls(s.real)


def reach_third_order(K, T, mu, N=16, n=400, seed=0, trials=32, floor=1e-10):
    """(v, w, nu) with Psi(T) = 0, xi(T) = 0 and zeta(T) = q3 on psi_K, zero on
    the other controlled modes.  Other lost modes are reported, not cancelled."""
    if qf.classify_order(K, mu, J=max(N, 64)) != "order3":
        raise SynthesisError(f"direction {K} is not a third-order direction")
    lost, controlled = _split(mu, N)
    rng = np.random.default_rng(seed)
    best, v = -1.0, None
    for _ in range(trials):
        cand = msol.project_VT(band_limited(T, n, rng), controlled, pin_ends=True)
        r = abs(qf.q3(K, T, cand, mu, N)) / cand.l2_norm() ** 3
        if r > best:
            best, v = r, cand
    if best <= floor:
        raise SynthesisError(f"best |q3| ratio {best:.3e} after {trials} trials")
    v = _pin(v.scaled(abs(qf.q3(K, T, v, mu, N)) ** (-1.0 / 3.0)))
    w = second_order_w(v, mu, N, controlled)
    zeta = ex.expand(v, w, None, mu, N, third=True).zeta_T
    vals = np.array([ex.component(zeta, k) for k in controlled])
    nu = _correction(-vals, mu, N, controlled, T, n)
    cert, terms = certificate(v, w, nu, mu, N, lost, third=True)
    cert["ratio"] = float(best)
    return ThirdOrderBlock(K, v, w, nu, ex.component(terms.zeta_T, K), cert)


# --- linear steering ----------------------------------------------------------

class LinearSteer:
    """Right inverse of the first-order map on a window, for repeated use."""

    def __init__(self, T, n, mu, N=16, pin_ends=True):
        self.T, self.n, self.mu, self.N = float(T), int(n), mu, N
        self.lost, self.controlled = _split(mu, N)
        self.M1 = mu.matrix(N)[:, 0]
        idx = np.array(self.controlled, dtype=int)
        self.freqs = sc.omega(idx)
        self.op = msol.MomentOperator(self.freqs, self.T, self.n, pin_ends=pin_ends)

    def moments_for(self, target, phase_time=0.0):
        """Moment targets d_k = target_k / (i <mu phi_1, phi_k>) on the controlled modes."""
        idx = np.array(self.controlled, dtype=int)
        t = np.asarray(target, dtype=complex)[idx - 1]
        d = t / (1j * self.M1[idx - 1]) * np.exp(-1j * self.freqs * phase_time)
        return np.where(self.freqs == 0.0, d.real, d)

    def __call__(self, target, phase_time=0.0):
        """target: components on psi_k(T), k = 1..N (lost entries must vanish)."""
        t = np.asarray(target, dtype=complex)
        for k in self.lost:
            if abs(t[k - 1]) > 1e-12 * max(1.0, np.abs(t).max()):
                raise ValueError(f"target has a component on lost direction {k}")
        d = self.moments_for(t, phase_time)
        return Control(self.op.minimal_norm(d), self.T)

    def gain(self):
        """Operator norm of target -> u in L2 (trapezoid), from the Gram inverse."""
        ev = np.linalg.eigvalsh(self.op.gram)
        scale = 1.0 / np.min(np.abs(self.M1[np.array(self.controlled) - 1]))
        return float(scale / np.sqrt(max(ev.min(), 1e-300)))


def linear_steer(target, T, mu, n=1000, N=None):
    """u with first_order(u) equal to the target on the controlled modes.

    target: SpectralState (components on psi_k(T) read from its coefficients)
    or a plain vector of components <target, psi_k(T)>.
    """
    if isinstance(target, SpectralState):
        N = target.N
        comps = np.array([ex.component(SpectralState(target.coeffs, T), k)
                          for k in range(1, N + 1)])
    else:
        comps = np.asarray(target, dtype=complex)
        N = comps.size if N is None else N
    if np.all(comps == 0):
        return Control.zeros(T, n)
    return LinearSteer(T, n, mu, N)(comps)


# --- fixed point --------------------------------------------------------------

def components(state, T):
    """<psi, psi_k(T)> for all k of a coefficient vector at time T."""
    c = np.asarray(state.coeffs if isinstance(state, SpectralState) else state)
    return c * np.exp(1j * sc.eigenvalues(c.size) * T)


def project_lost(comps, lost):
    """P_M: i Im on psi_1 (if lost), full component on the other lost modes."""
    return np.array([1j * comps[k - 1].imag if k == 1 else comps[k - 1] for k in lost])


@dataclass
class SteerReport:
    converged: bool
    iterations: int
    z: np.ndarray
    final_error: float
    history: list
    inner_iterations: list
    norm_drift: float

    def to_dict(self):
        return {"converged": self.converged, "iterations": self.iterations,
                "z": [[float(x.real), float(x.imag)] for x in self.z],
                "z_norm": float(np.linalg.norm(self.z)),
                "final_error": self.final_error, "history": self.history,
                "inner_iterations": self.inner_iterations, "norm_drift": self.norm_drift}


def target_near_ground(T, delta, N=16, seed=0, s=3.0):
    """Unit-norm psi_f with ||psi_f - psi_1(T)||_{H^s} close to delta."""
    rng = np.random.default_rng(seed)
    k = np.arange(1, N + 1)
    eta = (rng.normal(size=N) + 1j * rng.normal(size=N)) / k ** (s + 1)
    eta[0] = 1j * eta[0].imag
    eta /= sc.sobolev_norm(eta, s)
    comps = delta * eta
    comps[0] =np.sqrt(1.0 - np.sum(np.abs(comps[1:]) ** 2) - comps[0].imag ** 2) + 1j * comps[0].imag
    return SpectralState(comps * np.exp(-1j * sc.eigenvalues(N) * T), T)


class FixedPointSteer:
    """z -> P_M[psi_z(T)] with the lambda_map control on (0, T1) and a
    chord-Newton realization of the linear right inverse on (T1, T)."""

    def __init__(self, T, T1, mu, N=16, m=200, dt=1e-4, Tmin2=None, newton_iter=8,
                 newton_tol=1e-11):
        self.synth = LostDirectionSynthesizer(T1, mu, N, m, Tmin2)
        self.h = self.synth.h
        self.T1 = self.synth.T
        self.n1 = self.synth.n
        self.n2 = _floor_steps(T - self.T1, self.h)
        self.T = self.T1 + self.n2 * self.h
        self.mu, self.N, self.dt = mu, N, dt
        self.lost = self.synth.lost
        self.steer = LinearSteer(self.T - self.T1, self.n2, mu, N)
        self.newton_iter, self.newton_tol = newton_iter, newton_tol
        self.ground = SpectralState.eigen(1, N)

    def first_part(self, z):
        nz = float(np.linalg.norm(z))
        if nz == 0.0:
            return Control.zeros(self.T1, self.n1)
        v, w = self.synth.lambda_map(np.asarray(z) / nz)
        return v.scaled(np.sqrt(nz)) + w.scaled(nz)

    def gamma(self, psi_T1, target_comps, u2=None):
        """Chord iteration for the controlled components on (T1, T)."""
        L = self.T - self.T1
        u2 = Control.zeros(L, self.n2) if u2 is None else u2
        ctrl = np.array(self.steer.controlled) - 1
        for it in range(self.newton_iter + 1):
            traj = propagate(psi_T1, u2, self.mu, dt=self.dt)
            comps = components(traj.final.coeffs, self.T)
            r = np.zeros(self.N, dtype=complex)
            r[ctrl] = target_comps[ctrl] - comps[ctrl]
            if np.linalg.norm(r) <= self.newton_tol or it == self.newton_iter:
                return u2, traj.final.coeffs, it, traj.conserved_norm_drift
            u2 = u2 + self.steer(r, phase_time=self.T1)

    def F(self, z, target_comps, u2=None):
        u1 = self.first_part(z)
        traj = propagate(self.ground, u1, self.mu, dt=self.dt)
        psi_T1 = SpectralState(traj.final.coeffs, 0.0)
        u2, final, it, drift = self.gamma(psi_T1, target_comps, u2)
        comps = components(final, self.T)
        return project_lost(comps, self.lost), u1, u2, comps, it, max(drift, traj.conserved_norm_drift)

    def assemble(self, u1, u2):
        return Control(np.concatenate([u1.samples, u2.samples[1:]]), self.T)

    def run(self, psi_f, max_iter=10, tol=1e-5, delta_max=0.05):
        target = components(psi_f.coeffs, self.T)
        dist = float(np.linalg.norm(target - np.eye(self.N)[0]))
        if dist > delta_max:
            raise ValueError(f"target too far from the ground state ({dist:.3e} > {delta_max})")
        goal = project_lost(target, self.lost)
        z = np.zeros(len(self.lost), dtype=complex)
        history, inner = [], []
        u2 = None
        drift = 0.0
        for k in range(max_iter + 1):
            Fz, u1, u2, comps, it, dr = self.F(z, target, u2)
            drift = max(drift, dr)
            err = float(np.linalg.norm(comps - target))
            history.append(err)
            inner.append(it)
            if err <= tol:
                return self.assemble(u1, u2), SteerReport(True, k, z, err, history, inner, drift)
            if k == max_iter:
                break
            z = z + goal - Fz
        raise SynthesisError(f"fixed-point loop did not converge: errors {history}")


def fixed_point_steer(psi_f, T, T1, mu, max_iter=10, N=16, tol=1e-5, **kw):
    """Control u with psi_u(T) = psi_f (within tol) and the convergence report."""
    return FixedPointSteer(T, T1, mu, N, **kw).run(psi_f, max_iter, tol)
