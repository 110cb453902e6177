"""Propagation of the Galerkin-truncated bilinear Schrodinger system.

Coefficients c_k = <psi, phi_k> obey

    i c' = Lambda c - u(t) M c - f(t),

with Lambda = diag(lambda_k) and M the dipole matrix.  The auxiliary
(gauge) system for psi~ = psi e^{-i s mu}, s' = u, reads

    i c~' = Lambda c~ - i s B c~ + s^2 P c~

with B, P the Galerkin matrices of 2 mu' d/dx + mu'' and (mu')^2.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from . import spectral_core as sc


class StepSizeError(RuntimeError):
    pass


@dataclass(frozen=True)
class Control:
    """Real signal, piecewise linear between samples on a uniform grid."""

    samples: np.ndarray
    T: float
    primitive: bool = False

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float).copy()
        if s.ndim != 1 or s.size < 2:
            raise ValueError("control needs at least two samples")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)
        object.__setattr__(self, "T", float(self.T))

    @property
    def n(self):
        return self.samples.size - 1

    @property
    def grid_step(self):
        return self.T / self.n

    @property
    def times(self):
        return np.linspace(0.0, self.T, self.n + 1)

    def __call__(self, t):
        return np.interp(t, self.times, self.samples, left=0.0, right=0.0)

    def l2_norm(self):
        s = self.samples
        h = self.grid_step
        return float(np.sqrt(h * (np.sum(s ** 2) - 0.5 * (s[0] ** 2 + s[-1] ** 2))))

    def integral(self):
        """Primitive S(t) = int_0^t u, exact at the nodes."""
        s = self.samples
        cum = np.concatenate(([0.0], np.cumsum(0.5 * self.grid_step * (s[1:] + s[:-1]))))
        return Control(cum, self.T, primitive=True)

    def derivative(self):
        """Nodal slopes (centred inside, one-sided at the ends)."""
        return Control(np.gradient(self.samples, self.grid_step), self.T)

    def scaled(self, c):
        return Control(c * self.samples, self.T, self.primitive)

    def __add__(self, other):
        _check_same_grid(self, other)
        return Control(self.samples + other.samples, self.T, self.primitive)

    def __sub__(self, other):
        _check_same_grid(self, other)
        return Control(self.samples - other.samples, self.T, self.primitive)

    def __neg__(self):
        return self.scaled(-1.0)

    @classmethod
    def zeros(cls, T, n):
        return cls(np.zeros(n + 1), T)

    @classmethod
    def from_function(cls, f, T, n):
        t = np.linspace(0.0, T, n + 1)
        return cls(np.asarray(f(t), dtype=float) * np.ones_like(t), T)

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "value"])
            for t, v in zip(self.times, self.samples):
                w.writerow([repr(float(t)), repr(float(v))])

    @classmethod
    def from_csv(cls, path):
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        t, v = data[:, 0], data[:, 1]
        h = np.diff(t)
        if not np.allclose(h, h[0], rtol=1e-9, atol=1e-12):
            raise ValueError("control CSV must be on a uniform grid")
        return cls(v, t[-1])


def _check_same_grid(a, b):
    if a.n != b.n or abs(a.T - b.T) > 1e-12:
        raise ValueError("controls live on different grids")


@dataclass(frozen=True)
class SpectralState:
    coeffs: np.ndarray
    time_stamp: float = 0.0

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex).copy()
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def N(self):
        return self.coeffs.size

    def norm(self):
        return float(np.linalg.norm(self.coeffs))

    @classmethod
    def eigen(cls, k, N, t=0.0):
        """psi_k(t) = phi_k e^{-i lambda_k t}."""
        c = np.zeros(N, dtype=complex)
        c[k - 1] = np.exp(-1j * sc.eigenvalue(k) * t)
        return cls(c, t)


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # (len(times), N)
    conserved_norm_drift: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def final(self):
        return SpectralState(self.states[-1], float(self.times[-1]))

    def to_csv(self, path):
        N = self.states.shape[1]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            head = ["t"]
            for k in range(1, N + 1):
                head += [f"re_c{k}", f"im_c{k}"]
            w.writerow(head)
            for t, c in zip(self.times, self.states):
                row = [repr(float(t))]
                for z in c:
                    row += [repr(float(z.real)), repr(float(z.imag))]
                w.writerow(row)


class _HermitianExp:
    """exp(i a H) for real scalar a, via one eigendecomposition of H."""

    def __init__(self, H):
        self.w, self.V = np.linalg.eigh(H)
        self.Vh = self.V.conj().T

    def apply(self, a, c):
        return self.V @ (np.exp(1j * a * self.w) * (self.Vh @ c))


def default_step(N):
    return 1e-4


def _substeps(u, dt):
    n_sub = max(1, int(np.ceil(u.grid_step / dt - 1e-9)))
    return n_sub, u.grid_step / n_sub


def propagate(psi0, u, mu, source=None, dt=None, record_every=None,
              drift_limit=1e-12):
    """Strang splitting: half free phase, coupling exponential, half phase.

    The coupling factor exp(i u(t_mid) M dt) is applied through the
    eigendecomposition of the real symmetric M, so each step is unitary.
    `source(t)` returns spectral coefficients of the forcing f.
    Returns a Trajectory sampled at control-grid nodes.
    """
    c = np.array(psi0.coeffs, dtype=complex)
    N = c.size
    M = mu.matrix(N)
    lam = sc.eigenvalues(N)
    dt = default_step(N) if dt is None else dt
    n_sub, h = _substeps(u, dt)
    half = np.exp(-0.5j * lam * h)
    coupling = _HermitianExp(M)
    record_every = record_every or 1
    times = [0.0]
    states = [c.copy()]
    n0 = np.linalg.norm(c)
    drift = 0.0
    nodes = u.samples
    for i in range(u.n):
        for m in range(n_sub):
            frac = (m + 0.5) / n_sub
            um = nodes[i] + frac * (nodes[i + 1] - nodes[i])
            tm = i * u.grid_step + (m + 0.5) * h
            before = np.linalg.norm(c) if source is None else 0.0
            c = half * c
            c = coupling.apply(um * h, c)
            if source is not None:
                c = c + 1j * h * np.asarray(source(tm), dtype=complex)
            c = half * c
            if source is None:
                step_drift = abs(np.linalg.norm(c) - before)
                if step_drift > drift_limit:
                    raise StepSizeError(f"per-step norm drift {step_drift:.2e}")
        if (i + 1) % record_every == 0 or i + 1 == u.n:
            times.append((i + 1) * u.grid_step)
            states.append(c.copy())
            if source is None:
                drift = max(drift, abs(np.linalg.norm(c) - n0))
    return Trajectory(np.array(times), np.array(states), drift,
                      {"substeps": n_sub, "dt": h, "N": N})


def propagate_gauge(s, mu, N, dt=None, psi0=None, record_every=None):
    """Propagate the auxiliary system driven by the primitive s (s(0)=0)."""
    if abs(s.samples[0]) > 1e-14:
        raise ValueError("primitive must start at zero")
    lam = sc.eigenvalues(N)
    B = mu.derivative_coupling(N)
    P = mu.slope_square(N)
    if psi0 is None:
        psi0 = SpectralState.eigen(1, N)
    c = np.array(psi0.coeffs, dtype=complex)
    dt = default_step(N) if dt is None else dt
    n_sub, h = _substeps(s, dt)
    half = np.exp(-0.5j * lam * h)
    # -i s B is Hermitian (B real antisymmetric): exp(-i h (-i s B)) = exp(i (h s) (iB))
    expB = _HermitianExp(1j * B)
    expP = _HermitianExp(P)
    record_every = record_every or 1
    times = [0.0]
    states = [c.copy()]
    n0 = np.linalg.norm(c)
    drift = 0.0
    nodes = s.samples
    for i in range(s.n):
        for m in range(n_sub):
            frac = (m + 0.5) / n_sub
            sm = nodes[i] + frac * (nodes[i + 1] - nodes[i])
            c = half * c
            c = expP.apply(-0.5 * h * sm * sm, c)
            c = expB.apply(h * sm, c)
            c = expP.apply(-0.5 * h * sm * sm, c)
            c = half * c
        if (i + 1) % record_every == 0 or i + 1 == s.n:
            times.append((i + 1) * s.grid_step)
            states.append(c.copy())
            drift = max(drift, abs(np.linalg.norm(c) - n0))
    return Trajectory(np.array(times), np.array(states), drift,
                      {"substeps": n_sub, "dt": h, "N": N})


def gauge_transform(psi_t, s_T, mu):
    """Coefficients of e^{i s_T mu} psi~ through exp(i s_T M)."""
    N = psi_t.N
    E = _HermitianExp(mu.matrix(N))
    return SpectralState(E.apply(s_T, np.asarray(psi_t.coeffs)), psi_t.time_stamp)


def propagate_deviation(psi0, u, mu, dt=None):
    """psi(T) - e^{-i Lambda T} psi0 under the same Strang scheme.

    In the interaction picture each Strang step is a <- D C D^* a with
    D = e^{i Lambda t_mid} and C the coupling exponential.  Writing
    a = psi0 + delta and using C - I = V (e^{i theta w} - 1) V^*, the
    deviation is carried with round-off relative to its own size.
    """
    base = np.array(psi0.coeffs, dtype=complex)
    N = base.size
    lam = sc.eigenvalues(N)
    w, V = np.linalg.eigh(mu.matrix(N))
    Vh = V.T
    dt = default_step(N) if dt is None else dt
    n_sub, h = _substeps(u, dt)
    delta = np.zeros(N, dtype=complex)
    nodes = u.samples
    for i in range(u.n):
        for m in range(n_sub):
            frac = (m + 0.5) / n_sub
            um = nodes[i] + frac * (nodes[i + 1] - nodes[i])
            tm = i * u.grid_step + (m + 0.5) * h
            D = np.exp(1j * lam * tm)
            x = np.conj(D) * (base + delta)
            delta = delta + D * (V @ (np.expm1(1j * um * h * w) * (Vh @ x)))
    return SpectralState(np.exp(-1j * lam * u.T) * delta, u.T)
