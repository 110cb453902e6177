"""Discretized quadratic form in the primitive S and minimal-time bracketing.

For a dipole with <mu phi_1, phi_1> = 0 and K = 1 the form is

    Q_T(S) = -A_1 ||S||^2 + int_0^T S(t) int_0^t S(s) k(t, s) ds dt,
    k(t, s) = sum_j omega_j^2 <mu phi_1, phi_j>^2 sin(omega_j (t - s)).

S is piecewise linear on a uniform grid; the form matrix is exact for that
space (closed-form oscillatory integrals) and symmetrized.  Subspaces:

  full   all nodal vectors
  VT     moments int S e^{i omega_j t} = 0 for controlled j (truncated)
  H10    sin(m pi t / T), m = 1..M, projected (mass-orthogonally) onto the
         nodal vectors with the same moment constraints and zero end values

The top generalized eigenvalue of (form, mass) on a subspace is the sup of
Q_T(S)/||S||^2 there.
"""

import json
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from . import moment_solver as msol
from . import oscillatory as osc
from . import quadratic_forms as qf
from . import spectral_core as sc


class BracketError(RuntimeError):
    pass


class GridError(RuntimeError):
    pass


SUBSPACES = ("full", "VT", "H10")


@dataclass
class FormOperator:
    T: float
    n: int
    subspace: str
    matrix: np.ndarray      # form in the subspace coordinates, symmetric
    mass: np.ndarray        # L2 Gram matrix in the same coordinates
    basis: np.ndarray       # nodal values of the coordinate functions (n+1, r)
    full_matrix: np.ndarray
    full_mass: np.ndarray
    constraints: np.ndarray

    @property
    def times(self):
        return np.linspace(0.0, self.T, self.n + 1)

    def value(self, S):
        """Q_T of nodal values S (full grid)."""
        S = np.asarray(S, dtype=float)
        return float(S @ self.full_matrix @ S)

    def norm2(self, S):
        S = np.asarray(S, dtype=float)
        return float(S @ self.full_mass @ S)

    def projector(self):
        """Mass-orthogonal projector of nodal vectors onto the subspace."""
        B = self.basis
        return B @ np.linalg.solve(self.mass, B.T @ self.full_mass)

    def top(self):
        """(largest Rayleigh quotient, maximizing nodal vector with unit norm)."""
        w, V = sla.eigh(self.matrix, self.mass)
        S = self.basis @ V[:, -1]
        S = S / np.sqrt(self.norm2(S))
        return float(w[-1]), S


def form_matrix(T, mu, n, J=qf.DEFAULT_J):
    """(symmetric form matrix, consistent mass) for Q_T on n intervals."""
    h = T / n
    b = qf.products(mu, 1, J)
    om = sc.omegas(J)
    A = sc.second_moment_coeff(mu, 1)[0]
    H = osc.double_integral_matrix(n, h, om * om * b, om, -om).imag
    mass = osc.weighted_mass(n, h, 0.0).real
    G = 0.5 * (H + H.T) - A * mass
    return G, mass


def _constraint_rows(mu, T, n, modes):
    lost = set(sc.lost_directions(mu, modes).indices)
    freqs = sc.omega(np.array([j for j in range(1, modes + 1) if j not in lost]))
    return msol._real_rows(freqs, n, T / n)[0]


def _null(A):
    """Orthonormal basis of the vectors annihilated by all rows of A.

    The rank is fixed to the number of rows so that the dimension of the
    constrained space does not jump with T when rows become nearly dependent.
    """
    r = min(A.shape)
    _, _, Vt = np.linalg.svd(A, full_matrices=True)
    return Vt[r:].T


def _mass_project(mass, C, X):
    """Mass-orthogonal projection of the columns of X onto ker C."""
    MiCt = np.linalg.solve(mass, C.T)
    return X - MiCt @ np.linalg.solve(C @ MiCt, C @ X)


def _orthonormal(B, mass, rtol=1e-10):
    w, V = np.linalg.eigh(B.T @ mass @ B)
    keep = w > rtol * w.max()
    return B @ (V[:, keep] / np.sqrt(w[keep]))


def build_form_operator(T, mu, n=512, subspace="VT", J=qf.DEFAULT_J, modes=32,
                        sine_modes=64, cache=None):
    """Nystrom/Galerkin matrix of Q_T restricted to a subspace."""
    if subspace not in SUBSPACES:
        raise ValueError(f"unknown subspace: {subspace}")
    if abs(sc.dipole_coefficient(mu, 1, 1)) > 1e-10:
        raise ValueError("form operator needs <mu phi_1, phi_1> = 0")
    key = (round(T, 15), n, J)
    if cache is not None and key in cache:
        G, mass = cache[key]
    else:
        G, mass = form_matrix(T, mu, n, J)
        if cache is not None:
            cache[key] = (G, mass)
    C = _constraint_rows(mu, T, n, modes)
    if subspace == "full":
        B = np.eye(n + 1)
    elif subspace == "VT":
        B = _null(C)
    else:
        t = np.linspace(0.0, T, n + 1)
        m = np.arange(1, sine_modes + 1)
        W = np.sin(np.pi * np.outer(t, m) / T)
        ends = np.zeros((2, n + 1))
        ends[0, 0] = ends[1, -1] = 1.0
        B = _orthonormal(_mass_project(mass, np.vstack([C, ends]), W), mass)
    Gs = B.T @ G @ B
    Ms = B.T @ mass @ B
    return FormOperator(float(T), n, subspace, 0.5 * (Gs + Gs.T), 0.5 * (Ms + Ms.T),
                        B, G, mass, C)


def top_eigenvalue(T, mu, n=512, subspace="VT", **kw):
    return build_form_operator(T, mu, n, subspace, **kw).top()[0]


def lambda_T(T, mu, n=512, check_grid=False, tol=0.01, **kw):
    """lambda(T) = -sup{Q_T(S) : S in V_T, ||S|| = 1}."""
    lam = -top_eigenvalue(T, mu, n, "VT", **kw)
    if check_grid:
        fine = -top_eigenvalue(T, mu, 2 * n, "VT", **kw)
        if abs(fine - lam) > tol * max(abs(fine), 1e-12):
            raise GridError(f"lambda(T) changed from {lam:.6g} to {fine:.6g} under grid doubling")
        lam = fine
    return lam


def _bisect(f, lo, hi, tol):
    flo, fhi = f(lo), f(hi)
    if not (flo <= 0.0 < fhi):
        raise BracketError(f"no sign change on [{lo}, {hi}] (values {flo:.3e}, {fhi:.3e})")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if f(mid) > 0.0:
            hi = mid
        else:
            lo = mid
    return lo, hi


def estimate_Tmin1(mu, bracket=(0.05, 0.7), tol=1e-3, n=512, **kw):
    """Interval containing sup{T : Q_T <= 0 on V_T}."""
    return _bisect(lambda T: top_eigenvalue(T, mu, n, "VT", **kw), *bracket, tol)


def estimate_Tmin2(mu, bracket=(0.05, 0.7), tol=1e-3, n=512, **kw):
    """Interval containing the first T with a positive value on V_T and H^1_0."""
    return _bisect(lambda T: top_eigenvalue(T, mu, n, "H10", **kw), *bracket, tol)


def positive_witness(T, mu, n=512, subspace="H10", **kw):
    """S in the subspace with Q_T(S) = +1 exactly, or None if sup <= 0."""
    op = build_form_operator(T, mu, n, subspace, **kw)
    top, S = op.top()
    if top <= 0.0:
        return None
    S = S / np.sqrt(op.value(S))
    return S


def bracket_report(mu, bracket=(0.05, 0.7), tol=1e-3, n=512, J_star=500, **kw):
    """Both estimates at n and 2n plus the coercivity time T*_1."""
    out = {"t_star": qf.t_star(1, mu, J_star), "upper_bound": 2.0 / np.pi, "tol": tol}
    for m in (n, 2 * n):
        out[f"Tmin1_n{m}"] = list(estimate_Tmin1(mu, bracket, tol, m, **kw))
        out[f"Tmin2_n{m}"] = list(estimate_Tmin2(mu, bracket, tol, m, **kw))
    return out


def _moment_norm(C, S):
    return float(np.linalg.norm(C @ S))


def coercivity_eta_check(T, eta, n_samples, mu, n=256, seed=0, **kw):
    """Sample V_{T,eta} and test Q_T(S) <= -lambda(T)/2 ||S||^2.

    Samples are S0 + s r with S0 random in V_T and r mass-orthogonal to V_T,
    scaled so that the moment norm is at most eta ||S||.
    """
    rng = np.random.default_rng(seed)
    op = build_form_operator(T, mu, n, "VT", **kw)
    lam = -op.top()[0]
    if lam <= 0.0:
        raise ValueError(f"lambda(T) = {lam:.3e} <= 0: T is not below the first minimal time")
    B = op.basis
    mass = op.full_mass
    C = op.constraints
    # mass-orthogonal complement of V_T: range of mass^{-1} C^T
    R = np.linalg.solve(mass, C.T)
    worst = -np.inf
    violations = 0
    for _ in range(n_samples):
        S0 = B @ rng.normal(size=B.shape[1])
        S0 /= np.sqrt(op.norm2(S0))
        r = R @ rng.normal(size=R.shape[1])
        scale = eta * rng.uniform() / max(_moment_norm(C, r), 1e-300)
        S = S0 + scale * r
        ratio = op.value(S) / op.norm2(S)
        worst = max(worst, ratio)
        if ratio > -0.5 * lam:
            violations += 1
    Ginv = np.linalg.inv((C @ np.linalg.solve(mass, C.T)))
    CT = float(np.sqrt(np.linalg.eigvalsh(Ginv).max()))
    kinf = qf.coercivity_constant(mu, 1, qf.DEFAULT_J)[0]
    return {"T": T, "eta": eta, "lambda": lam, "samples": n_samples,
            "violations": violations, "worst_ratio": worst,
            "bound": -0.5 * lam, "L_T_norm": CT,
            "proof_eta": proof_eta(lam, T, kinf, CT)}


def proof_eta(lam, T, kinf, CT):
    """Largest eta for which the perturbation bound still gives -lambda/2."""
    def excess(eta):
        return (-lam * (1 - CT * eta) ** 2 + 0.5 * T * kinf * CT ** 2 * eta ** 2
                + 2 * T * kinf * (1 + CT * eta) * CT * eta + 0.5 * lam)
    lo, hi = 0.0, 1.0 / CT
    if excess(lo) > 0:
        return 0.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if excess(mid) <= 0:
            lo = mid
        else:
            hi = mid
    return lo


def sweep(mu, Ts, n=512, **kw):
    """Rows (T, lambda(T), top value on the H^1_0 subspace)."""
    rows = []
    cache = {}
    for T in Ts:
        lam = -top_eigenvalue(T, mu, n, "VT", cache=cache, **kw)
        h10 = top_eigenvalue(T, mu, n, "H10", cache=cache, **kw)
        rows.append((float(T), lam, h10))
    return rows


def endpoint_diagnostics(T, mu, n=512, **kw):
    """Endpoint values and H^1 seminorm of the V_T maximizer (grid n and 2n)."""
    out = {}
    for m in (n, 2 * n):
        _, S = build_form_operator(T, mu, m, "VT", **kw).top()
        S = S * np.sign(S[np.argmax(np.abs(S))])
        h = T / m
        out[m] = {"S0": float(S[0]), "ST": float(S[-1]),
                  "h1_seminorm": float(np.sqrt(np.sum(np.diff(S) ** 2) / h))}
    return json.loads(json.dumps(out))
