"""Trigonometric moment problems int_0^T v(t) e^{i w_j t} dt = d_j.

Controls are piecewise linear on a uniform grid, so the moment map is an
exact linear map of the nodal values.  The minimal-norm real solution is
computed for the trapezoid L2 inner product of those nodal values; its
normal-equation matrix is the discrete counterpart of the Gram matrix of
the exponentials {e^{+-i w_j t}}.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from . import oscillatory as osc
from . import spectral_core as sc
from .simulator import Control


class MomentError(RuntimeError):
    pass


@dataclass(frozen=True)
class MomentProblem:
    frequencies: tuple
    targets: tuple
    T: float
    n: int = 2000
    regularization: float = None
    pin_ends: bool = False

    def __post_init__(self):
        f = np.asarray(self.frequencies, dtype=float)
        if f.size != len(self.targets):
            raise ValueError("targets and frequencies differ in length")
        if f.size > 1 and np.any(np.diff(f) <= 0):
            raise ValueError("frequencies must be strictly increasing")
        for w, d in zip(f, self.targets):
            if w == 0.0 and abs(complex(d).imag) > 1e-12 * max(1.0, abs(d)):
                raise ValueError("target at frequency 0 must be real")


def gram_matrix(frequencies, T):
    """G_jk = int_0^T e^{i (w_j - w_k) t} dt in closed form."""
    w = np.asarray(frequencies, dtype=float)
    d = w[:, None] - w[None, :]
    G = np.full(d.shape, complex(T))
    off = d != 0
    G[off] = (np.exp(1j * d[off] * T) - 1.0) / (1j * d[off])
    return G


def _real_rows(frequencies, n, h, pin_ends=False):
    """Real constraint rows: Re/Im of each moment, Im dropped at w = 0.

    With pin_ends the first and last nodal values are also constrained to 0,
    so the control can be zero-padded without changing its interpolant.
    """
    W = osc.moment_matrix(frequencies, n, h) if len(frequencies) else np.zeros((0, n + 1))
    rows, kinds = [], []
    for j, w in enumerate(frequencies):
        rows.append(W[j].real)
        kinds.append((j, "re"))
        if w != 0.0:
            rows.append(W[j].imag)
            kinds.append((j, "im"))
    if pin_ends:
        for node in (0, n):
            e = np.zeros(n + 1)
            e[node] = 1.0
            rows.append(e)
            kinds.append((node, "end"))
    return np.array(rows).reshape(len(rows), n + 1), kinds


def _real_targets(targets, kinds):
    d = np.asarray(targets, dtype=complex)
    out = []
    for j, k in kinds:
        out.append(0.0 if k == "end" else (d[j].real if k == "re" else d[j].imag))
    return np.array(out)


def trapezoid_weights(n, h):
    w = np.full(n + 1, h)
    w[0] = w[-1] = 0.5 * h
    return w


class MomentOperator:
    """Reusable factorization of a moment map on a fixed grid."""

    def __init__(self, frequencies, T, n, regularization=None, pin_ends=False):
        self.frequencies = np.asarray(frequencies, dtype=float)
        self.T = float(T)
        self.n = int(n)
        self.h = self.T / self.n
        self.A, self.kinds = _real_rows(self.frequencies, self.n, self.h, pin_ends)
        self.dinv = 1.0 / trapezoid_weights(self.n, self.h)
        G = (self.A * self.dinv) @ self.A.T
        reg = 1e-12 * self.T if regularization is None else regularization
        self.gram = G
        self.regularization = reg
        Greg = G + reg * np.eye(G.shape[0])
        ev = np.linalg.eigvalsh(G) if G.size else np.array([1.0])
        self.condition = float(ev.max() / max(ev.min(), 1e-300))
        try:
            self._cho = sla.cho_factor(Greg)
            self._pinv = None
        except np.linalg.LinAlgError:
            w, V = np.linalg.eigh(Greg)
            keep = w > 1e-14 * w.max()
            self._cho = None
            self._pinv = (V[:, keep] / w[keep]) @ V[:, keep].T

    def _solve_reg(self, b):
        if self._cho is not None:
            return sla.cho_solve(self._cho, b)
        return self._pinv @ b

    def _solve(self, b, refine=3):
        # iterative refinement removes the Tikhonov bias when it is not needed
        y = self._solve_reg(b)
        for _ in range(refine):
            y = y + self._solve_reg(b - self.gram @ y)
        return y

    def apply(self, v):
        """Complex moments of nodal values v."""
        r = self.A @ v
        out = np.zeros(self.frequencies.size, dtype=complex)
        for val, (j, k) in zip(r, self.kinds):
            if k != "end":
                out[j] += val if k == "re" else 1j * val
        return out

    def minimal_norm(self, targets):
        b = _real_targets(targets, self.kinds)
        y = self._solve(b)
        return self.dinv * (self.A.T @ y)

    def project(self, v):
        """Remove from v its minimal-norm component carrying the moments."""
        y = self._solve(self.A @ v)
        return v - self.dinv * (self.A.T @ y)


def moment_residual(v, frequencies, targets):
    m = osc.moments(v.samples, v.grid_step, frequencies)
    return float(np.linalg.norm(m - np.asarray(targets, dtype=complex)))


def solve_moments(problem, tol=1e-8):
    """Minimal-norm real control with the prescribed moments."""
    op = MomentOperator(problem.frequencies, problem.T, problem.n,
                        problem.regularization, problem.pin_ends)
    v = Control(op.minimal_norm(problem.targets), problem.T)
    res = moment_residual(v, problem.frequencies, problem.targets)
    scale = max(1.0, float(np.linalg.norm(problem.targets)))
    if res > tol * scale:
        raise MomentError(f"moment residual {res:.2e} (Gram condition {op.condition:.2e})")
    return v


def vt_frequencies(indices, with_zero=False):
    """Frequencies w_j for the index set, plus 0 for the V_T^1 variant."""
    idx = sorted(set(int(j) for j in indices) | ({1} if with_zero else set()))
    return sc.omega(np.array(idx, dtype=int)) if idx else np.zeros(0)


def project_VT(v, indices, T=None, with_zero=False, tol=1e-9, pin_ends=False):
    """Project v onto controls whose moments vanish on the given modes."""
    if T is not None and abs(T - v.T) > 1e-12:
        raise ValueError("control horizon differs from T")
    freqs = vt_frequencies(indices, with_zero)
    if freqs.size == 0 and not pin_ends:
        return v
    op = MomentOperator(freqs, v.T, v.n, pin_ends=pin_ends)
    out = Control(op.project(np.asarray(v.samples)), v.T)
    res = float(np.linalg.norm(op.apply(out.samples))) if freqs.size else 0.0
    if res > tol * max(1.0, v.l2_norm()):
        raise MomentError(f"projection residual {res:.2e} (Gram condition {op.condition:.2e})")
    return out


def ingham_constant(frequencies, T, N=None):
    """1 / lambda_min of the Gram matrix over the first N frequencies."""
    w = np.asarray(frequencies, dtype=float)
    if N is not None:
        w = w[:N]
    lam = np.linalg.eigvalsh(gram_matrix(w, T))
    lmin = float(lam.min())
    if lmin <= 1e-14 * float(lam.max()):
        return float("inf")
    return 1.0 / lmin
