"""Exact oscillatory integrals of piecewise-linear signals on a uniform grid.

Every control in the package is a piecewise-linear interpolant of its grid
samples.  The helpers here integrate such signals against complex
exponentials e^{i w t} in closed form, so moments, double integrals and
weighted L2 products are exact for the interpolant (up to round-off) no
matter how large w h is.

The building block is phi_m(z) = int_0^1 s^m e^{z s} ds.
"""

import numpy as np

_SERIES_RADIUS = 1.0
_SERIES_TERMS = 32
_TAYLOR_B = 1.0
_TAYLOR_TERMS = 26


def phi(z, mmax):
    """Return phi_m(z) for m = 0..mmax, stacked on a trailing axis."""
    z = np.asarray(z, dtype=complex)
    shape = z.shape
    z = z.ravel()
    out = np.empty((z.size, mmax + 1), dtype=complex)
    az = np.abs(z)

    small = az <= _SERIES_RADIUS
    if np.any(small):
        zs = z[small]
        n = np.arange(_SERIES_TERMS)
        fact = np.cumprod(np.concatenate(([1.0], np.arange(1, _SERIES_TERMS))))
        powers = zs[:, None] ** n[None, :] / fact[None, :]
        m = np.arange(mmax + 1)
        denom = m[:, None] + n[None, :] + 1.0
        out[small] = powers @ (1.0 / denom).T

    rest = ~small
    if np.any(rest):
        # forward recurrence is stable for m <= |z|, downward for m > |z|
        zr = z[rest]
        ar = az[rest]
        ez = np.exp(zr)
        vals = np.empty((zr.size, mmax + 1), dtype=complex)
        cur = (ez - 1.0) / zr
        vals[:, 0] = cur
        for m in range(1, mmax + 1):
            cur = (ez - m * cur) / zr
            vals[:, m] = cur
        need = ar < mmax
        if np.any(need):
            zb = zr[need]
            eb = ez[need]
            top = mmax + 40 + int(2 * np.ceil(ar[need].max()))
            cur = eb / (top + 1.0)
            low = vals[need]
            for m in range(top, 0, -1):
                prev = (eb - zb * cur) / m
                if m - 1 <= mmax:
                    mask = (m - 1) > ar[need]
                    low[mask, m - 1] = prev[mask]
                cur = prev
            vals[need] = low
        out[rest] = vals
    return out.reshape(shape + (mmax + 1,))


def hat_weights(omega, h):
    """Left/right hat weights (w0, w1) of one interval at frequency omega.

    int_0^h (a (1 - s/h) + b s/h) e^{i omega s} ds = h (a w0 + b w1).
    """
    p = phi(1j * np.asarray(omega, dtype=float) * h, 1)
    return p[..., 0] - p[..., 1], p[..., 1]


def moment_matrix(omegas, n, h):
    """Matrix W with W @ v = int_0^T v(t) e^{i omega t} dt (rows: omegas)."""
    omegas = np.atleast_1d(np.asarray(omegas, dtype=float))
    w0, w1 = hat_weights(omegas, h)
    t = h * np.arange(n + 1)
    ph = np.exp(1j * omegas[:, None] * t[None, :])
    W = np.zeros((omegas.size, n + 1), dtype=complex)
    W[:, :-1] += h * w0[:, None] * ph[:, :-1]
    W[:, 1:] += h * w1[:, None] * ph[:, :-1]
    return W


def moments(v, h, omegas):
    """Exact moments int_0^T v e^{i omega t} dt of a piecewise-linear signal."""
    v = np.asarray(v, dtype=float)
    return moment_matrix(omegas, v.size - 1, h) @ v


def cumulative_moments(v, h, omegas):
    """Moments over [0, t_i] at every node; shape (len(omegas), n + 1)."""
    v = np.asarray(v, dtype=float)
    omegas = np.atleast_1d(np.asarray(omegas, dtype=float))
    n = v.size - 1
    w0, w1 = hat_weights(omegas, h)
    t = h * np.arange(n)
    ph = np.exp(1j * omegas[:, None] * t[None, :])
    per = h * ph * (w0[:, None] * v[None, :-1] + w1[:, None] * v[None, 1:])
    out = np.zeros((omegas.size, n + 1), dtype=complex)
    np.cumsum(per, axis=1, out=out[:, 1:])
    return out


def partial_moments(v, h, omegas, t):
    """Moments over [0, t] for arbitrary times t (1-D array)."""
    v = np.asarray(v, dtype=float)
    omegas = np.atleast_1d(np.asarray(omegas, dtype=float))
    t = np.atleast_1d(np.asarray(t, dtype=float))
    n = v.size - 1
    cum = cumulative_moments(v, h, omegas)
    idx = np.clip(np.floor(t / h).astype(int), 0, n - 1)
    s = t - idx * h
    slope = (v[idx + 1] - v[idx]) / h
    z = 1j * omegas[:, None] * s[None, :]
    p = phi(z, 1)
    local = np.exp(1j * omegas[:, None] * (idx * h)[None, :]) * (
        v[idx][None, :] * s[None, :] * p[..., 0]
        + slope[None, :] * s[None, :] ** 2 * p[..., 1])
    return cum[:, idx] + local


def local_double(A, B):
    """L_pq(A, B) = int_0^1 l_p(x) e^{iAx} int_0^x l_q(y) e^{iBy} dy dx.

    l_0 = 1 - x, l_1 = x.  Returns array (..., 2, 2) indexed [p, q].
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    A, B = np.broadcast_arrays(A, B)
    shape = A.shape
    A = A.ravel()
    B = B.ravel()
    out = np.empty((A.size, 2, 2), dtype=complex)

    big = np.abs(B) >= _TAYLOR_B
    if np.any(big):
        a = 1j * A[big]
        b = 1j * B[big]
        pa = phi(a, 2)
        pg = phi(a + b, 2)
        ib, ib2 = 1.0 / b, 1.0 / b ** 2
        # inner_q(x) = c0 + (c1 + c2 x) e^{bx}
        coef = {1: (ib2, -ib2, ib), 0: (-ib - ib2, ib + ib2, -ib)}
        outer_a = (pa[:, 0] - pa[:, 1], pa[:, 1])
        for q, (c0, c1, c2) in coef.items():
            out[big, 0, q] = (c0 * outer_a[0] + c1 * pg[:, 0]
                              + (c2 - c1) * pg[:, 1] - c2 * pg[:, 2])
            out[big, 1, q] = c0 * outer_a[1] + c1 * pg[:, 1] + c2 * pg[:, 2]

    small = ~big
    if np.any(small):
        a = 1j * A[small]
        b = 1j * B[small]
        nt = _TAYLOR_TERMS
        pa = phi(a, nt + 3)
        acc = np.zeros((a.size, 2, 2), dtype=complex)
        coeff = np.ones_like(b)
        for n in range(nt):
            # int l_0 x^k e^{ax} = phi_k - phi_{k+1};  int l_1 x^k = phi_{k+1}
            def o0(k):
                return pa[:, k] - pa[:, k + 1]

            def o1(k):
                return pa[:, k + 1]
            # inner_1 = x^{n+2}/(n+2); inner_0 = x^{n+1}/(n+1) - x^{n+2}/(n+2)
            acc[:, 0, 1] += coeff * o0(n + 2) / (n + 2)
            acc[:, 1, 1] += coeff * o1(n + 2) / (n + 2)
            acc[:, 0, 0] += coeff * (o0(n + 1) / (n + 1) - o0(n + 2) / (n + 2))
            acc[:, 1, 0] += coeff * (o1(n + 1) / (n + 1) - o1(n + 2) / (n + 2))
            coeff = coeff * b / (n + 1)
        out[small] = acc
    return out.reshape(shape + (2, 2))


def double_integral(f, g, h, coeffs, alphas, omegas):
    """sum_j c_j int_0^T f(t) e^{i a_j t} int_0^t g(s) e^{i w_j s} ds dt.

    f and g are nodal samples of piecewise-linear signals on the same grid.
    """
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    coeffs = np.atleast_1d(np.asarray(coeffs, dtype=complex))
    alphas = np.atleast_1d(np.asarray(alphas, dtype=float))
    omegas = np.atleast_1d(np.asarray(omegas, dtype=float))
    n = f.size - 1
    t = h * np.arange(n)
    total = 0j
    for sl in _chunks(coeffs.size, max(1, 4_000_000 // max(n, 1))):
        c, al, om = coeffs[sl], alphas[sl], omegas[sl]
        a0, a1 = hat_weights(al, h)
        pa = np.exp(1j * al[:, None] * t[None, :])
        outer = h * pa * (a0[:, None] * f[None, :-1] + a1[:, None] * f[None, 1:])
        inner_cum = cumulative_moments(g, h, om)[:, :-1]
        L = local_double(al * h, om * h)
        pg = np.exp(1j * (al + om)[:, None] * t[None, :])
        loc = (L[:, 0, 0, None] * f[None, :-1] * g[None, :-1]
               + L[:, 0, 1, None] * f[None, :-1] * g[None, 1:]
               + L[:, 1, 0, None] * f[None, 1:] * g[None, :-1]
               + L[:, 1, 1, None] * f[None, 1:] * g[None, 1:])
        per_mode = np.sum(outer * inner_cum + h * h * pg * loc, axis=1)
        total += np.dot(c, per_mode)
    return total


def double_integral_matrix(n, h, coeffs, alphas, omegas):
    """Matrix H with f @ H @ g equal to double_integral(f, g, ...)."""
    coeffs = np.atleast_1d(np.asarray(coeffs, dtype=complex))
    alphas = np.atleast_1d(np.asarray(alphas, dtype=float))
    omegas = np.atleast_1d(np.asarray(omegas, dtype=float))
    t = h * np.arange(n + 1)
    H = np.zeros((n + 1, n + 1), dtype=complex)
    idx = np.arange(n + 1)
    lower1 = idx[:, None] > idx[None, :]
    lower2 = idx[:, None] > idx[None, :] + 1
    for sl in _chunks(coeffs.size, 64):
        c, al, om = coeffs[sl], alphas[sl], omegas[sl]
        a0, a1 = hat_weights(al, h)
        b0, b1 = hat_weights(om, h)
        pa = np.exp(1j * al[:, None] * t[None, :])
        po = np.exp(1j * om[:, None] * t[None, :])
        # outer hat a: from interval a (left node) and interval a-1 (right node)
        o0 = h * a0[:, None] * pa
        o0[:, -1] = 0.0
        o1 = np.zeros_like(o0)
        o1[:, 1:] = h * a1[:, None] * pa[:, :-1]
        # full inner weight of hat b (both neighbouring intervals)
        r = h * b0[:, None] * po
        r[:, -1] = 0.0
        r[:, 1:] += h * b1[:, None] * po[:, :-1]
        # right-node-only weight of hat b from interval b-1
        rr = np.zeros_like(r)
        rr[:, 1:] = h * b1[:, None] * po[:, :-1]
        # outer interval i sees inner hats b <= i-1 fully and hat i partially
        # through interval i-1.
        H += np.where(lower1, (o0 * c[:, None]).T @ r, 0.0)
        H += np.where(lower2, (o1 * c[:, None]).T @ r, 0.0)
        # hat b = a (outer interval a), partial from interval a-1
        d0 = np.sum(c[:, None] * o0 * rr, axis=0)
        H[idx, idx] += d0
        # hat b = a-1 for outer interval a-1, partial from interval a-2
        d1 = np.sum(c[:, None] * o1[:, 1:] * rr[:, :-1], axis=0)
        H[idx[1:], idx[:-1]] += d1
        # local triangle on each interval
        L = local_double(al * h, om * h)
        pg = np.exp(1j * (al + om)[:, None] * t[None, :-1]) * c[:, None] * h * h
        for p in (0, 1):
            for q in (0, 1):
                vals = np.sum(pg * L[:, p, q, None], axis=0)
                H[idx[:-1] + p, idx[:-1] + q] += vals
    return H


def weighted_product(f, g, h, gamma):
    """int_0^T f(t) g(t) e^{i gamma t} dt for piecewise-linear f, g."""
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    n = f.size - 1
    p = phi(1j * float(gamma) * h, 2)
    m00 = p[0] - 2 * p[1] + p[2]
    m01 = p[1] - p[2]
    m11 = p[2]
    ph = h * np.exp(1j * gamma * h * np.arange(n))
    a0, a1, b0, b1 = f[:-1], f[1:], g[:-1], g[1:]
    return complex(np.sum(ph * (m00 * a0 * b0 + m01 * (a0 * b1 + a1 * b0) + m11 * a1 * b1)))


def weighted_mass(n, h, gamma):
    """Tridiagonal matrix of int hat_a hat_b e^{i gamma t} dt."""
    p = phi(1j * float(gamma) * h, 2)
    m00 = p[0] - 2 * p[1] + p[2]
    m01 = p[1] - p[2]
    m11 = p[2]
    ph = h * np.exp(1j * gamma * h * np.arange(n))
    M = np.zeros((n + 1, n + 1), dtype=complex)
    i = np.arange(n)
    M[i, i] += ph * m00
    M[i + 1, i + 1] += ph * m11
    M[i, i + 1] += ph * m01
    M[i + 1, i] += ph * m01
    return M


def _chunks(size, step):
    for start in range(0, size, step):
        yield slice(start, min(size, start + step))
