"""Dirichlet Laplacian eigenbasis on (0, 1) and dipole-moment models."""

from dataclasses import dataclass, field

import numpy as np

PI = np.pi
GL_NODES = 64
GL_PANELS = 8


class QuadratureError(RuntimeError):
    pass


def eigenvalue(k):
    """lambda_k = (k pi)^2."""
    k = np.asarray(k)
    if np.any(k < 1):
        raise ValueError("mode index must be >= 1")
    return (k * PI) ** 2


def omega(j):
    """Gap to the ground level, lambda_j - lambda_1."""
    j = np.asarray(j)
    if np.any(j < 1):
        raise ValueError("mode index must be >= 1")
    return (j * j - 1.0) * PI ** 2


def eigenvalues(N):
    return eigenvalue(np.arange(1, N + 1))


def omegas(N):
    return omega(np.arange(1, N + 1))


def basis(x, N):
    """phi_k(x) = sqrt(2) sin(k pi x) for k = 1..N; shape (len(x), N)."""
    k = np.arange(1, N + 1)
    return np.sqrt(2.0) * np.sin(PI * np.outer(x, k))


def basis_dx(x, N):
    k = np.arange(1, N + 1)
    return np.sqrt(2.0) * PI * k * np.cos(PI * np.outer(x, k))


def _gl_rule(panels, nodes=GL_NODES):
    xg, wg = np.polynomial.legendre.leggauss(nodes)
    edges = np.linspace(0.0, 1.0, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    x = (mid[:, None] + half[:, None] * xg[None, :]).ravel()
    w = (half[:, None] * wg[None, :]).ravel()
    return x, w


def _panels_for(N):
    # keep roughly <= 8 oscillation periods of phi_j phi_k per panel
    return max(GL_PANELS, int(np.ceil(N / 8.0)))


@dataclass(frozen=True)
class DipoleModel:
    """mu(x) = sum_p poly[p] x^p + sum_m cos_terms[m] cos(m pi x).

    Immutable; Galerkin matrices are cached per truncation.
    """

    poly: tuple = (0.0,)
    cos_terms: tuple = ()
    name: str = "custom"
    _cache: dict = field(default_factory=dict, repr=False, compare=False, hash=False)

    def mu(self, x):
        x = np.asarray(x, dtype=float)
        out = np.polynomial.polynomial.polyval(x, self.poly)
        for m, c in self.cos_terms:
            out = out + c * np.cos(m * PI * x)
        return out

    def dmu(self, x):
        x = np.asarray(x, dtype=float)
        d = np.polynomial.polynomial.polyder(self.poly) if len(self.poly) > 1 else [0.0]
        out = np.polynomial.polynomial.polyval(x, d)
        for m, c in self.cos_terms:
            out = out - c * m * PI * np.sin(m * PI * x)
        return out

    def d2mu(self, x):
        x = np.asarray(x, dtype=float)
        d = np.polynomial.polynomial.polyder(self.poly, 2) if len(self.poly) > 2 else [0.0]
        out = np.polynomial.polynomial.polyval(x, d)
        for m, c in self.cos_terms:
            out = out - c * (m * PI) ** 2 * np.cos(m * PI * x)
        return out

    def _galerkin(self, key, N, builder):
        ck = (key, N)
        if ck not in self._cache:
            coarse = builder(N, _panels_for(N))
            fine = builder(N, 2 * _panels_for(N))
            err = np.max(np.abs(coarse - fine))
            if err > 1e-11 * max(1.0, np.max(np.abs(fine))):
                raise QuadratureError(f"{key}: panel doubling changed entries by {err:.2e}")
            fine.setflags(write=False)
            self._cache[ck] = fine
        return self._cache[ck]

    def matrix(self, N):
        """Dipole matrix M[j-1, k-1] = <mu phi_j, phi_k>, symmetric."""
        def build(N, panels):
            x, w = _gl_rule(panels)
            B = basis(x, N)
            M = B.T @ ((w * self.mu(x))[:, None] * B)
            return 0.5 * (M + M.T)
        return self._galerkin("dipole", N, build)

    def derivative_coupling(self, N):
        """B[k-1, j-1] = <(2 mu' d/dx + mu'') phi_j, phi_k>; antisymmetric."""
        def build(N, panels):
            x, w = _gl_rule(panels)
            B = basis(x, N)
            D = basis_dx(x, N)
            G = B.T @ ((w * 2.0 * self.dmu(x))[:, None] * D)
            G += B.T @ ((w * self.d2mu(x))[:, None] * B)
            return 0.5 * (G - G.T)
        return self._galerkin("deriv", N, build)

    def slope_square(self, N):
        """P[k-1, j-1] = <(mu')^2 phi_j, phi_k>."""
        def build(N, panels):
            x, w = _gl_rule(panels)
            B = basis(x, N)
            P = B.T @ ((w * self.dmu(x) ** 2)[:, None] * B)
            return 0.5 * (P + P.T)
        return self._galerkin("slope2", N, build)

    def row(self, K, J):
        """<mu phi_K, phi_j> for j = 1..J without building the full matrix."""
        def build(J, panels):
            x, w = _gl_rule(max(panels, _panels_for(max(J, K))))
            B = basis(x, J)
            fK = np.sqrt(2.0) * np.sin(K * PI * x)
            return B.T @ (w * self.mu(x) * fK)
        return self._galerkin(("row", K), J, build)


def _poly_only(poly):
    return DipoleModel(poly=tuple(float(p) for p in poly))


def _projection_dipole(poly, K, name):
    """poly - <poly phi_1, phi_K> phi_K / phi_1, valid for even K.

    phi_K / phi_1 = sin(K pi x)/sin(pi x) = 2 sum_{m odd < K} cos(m pi x).
    """
    if K % 2:
        raise ValueError("projection dipole needs an even K")
    base = _poly_only(poly)
    c = float(base.row(1, K)[K - 1])
    cos_terms = tuple((m, -2.0 * c) for m in range(1, K, 2))
    return DipoleModel(poly=base.poly, cos_terms=cos_terms, name=name)


def preset(name):
    if name == "x_minus_half":
        return DipoleModel(poly=(-0.5, 1.0), name=name)
    if name == "x_squared":
        return DipoleModel(poly=(0.0, 0.0, 1.0), name=name)
    if name == "x_squared_corrected":
        return _projection_dipole((0.0, 0.0, 1.0), 2, name)
    if name == "x_projection":
        # order-three example: x - <x phi_1, phi_2> phi_2 / phi_1
        return _projection_dipole((0.0, 1.0), 2, name)
    if name == "two_direction":
        # x^2 with both <mu phi_1, phi_1> and <mu phi_1, phi_2> removed
        base = _poly_only((0.0, 0.0, 1.0))
        r = base.row(1, 2)
        return DipoleModel(poly=(-float(r[0]), 0.0, 1.0),
                           cos_terms=((1, -2.0 * float(r[1])),), name=name)
    raise KeyError(f"unknown dipole: {name}")


PRESETS = ("x_minus_half", "x_squared", "x_squared_corrected", "x_projection",
           "two_direction")


def custom(poly, cos_terms=()):
    return DipoleModel(poly=tuple(float(p) for p in poly),
                       cos_terms=tuple((int(m), float(c)) for m, c in cos_terms))


def dipole_coefficient(mu, j, k):
    """<mu phi_j, phi_k>."""
    if j < 1 or k < 1:
        raise ValueError("mode index must be >= 1")
    return float(mu.row(j, max(j, k))[k - 1])


def asymptotic_dipole(mu, K, n):
    """Leading-order prediction of <mu phi_K, phi_n> for large n."""
    d0 = float(mu.dmu(0.0))
    d1 = float(mu.dmu(1.0))
    n = np.asarray(n, dtype=float)
    sign = (-1.0) ** (K + n)
    return 4.0 * K * (sign * d1 - d0) / (n ** 3 * PI ** 2)


def second_moment_coeff(mu, K, tol=1e-12):
    """Return (A_K, alpha_K, degenerate) with A_K = <(mu')^2 phi_1, phi_K>."""
    A = float(mu.slope_square(max(K, 2))[K - 1, 0])
    degenerate = abs(A) < tol
    return A, (0.0 if degenerate else float(np.sign(A))), degenerate


def sobolev_norm(coeffs, s):
    """Truncated H^s_(0) norm (sum |k^s c_k|^2)^(1/2)."""
    c = np.asarray(coeffs)
    k = np.arange(1, c.size + 1, dtype=float)
    return float(np.sqrt(np.sum(np.abs(k ** s * c) ** 2)))


@dataclass(frozen=True)
class LostDirectionSet:
    indices: tuple
    tolerance: float
    constant: float
    N: int

    @property
    def controlled(self):
        return tuple(k for k in range(1, self.N + 1) if k not in self.indices)

    def tail_bound(self, power=6):
        """Bound on sum_{k>N} |<mu phi_1, phi_k>|^2 from the 1/k^3 envelope."""
        return _zeta_tail(power, self.N) * self.envelope ** 2

    envelope: float = 0.0


def _zeta_tail(p, N):
    # sum_{k>N} k^-p <= int_N^inf x^-p dx
    return N ** (1.0 - p) / (p - 1.0)


def lost_directions(mu, N, tol=1e-9):
    """Modes k <= N with |<mu phi_1, phi_k>| k^3 < tol."""
    if N < 2:
        raise ValueError("need N >= 2")
    r = mu.row(1, N)
    k = np.arange(1, N + 1)
    scaled = np.abs(r) * k ** 3.0
    lost = tuple(int(i) for i in k[scaled < tol])
    rest = scaled[scaled >= tol]
    c = float(rest.min()) if rest.size else 0.0
    env = float(scaled.max())
    return LostDirectionSet(indices=lost, tolerance=tol, constant=c, N=N, envelope=env)
