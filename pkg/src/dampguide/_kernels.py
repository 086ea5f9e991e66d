"""Compiled inner loops for complex tridiagonal systems.

The LU factorisation with partial pivoting follows LAPACK's ``?gttrf`` layout
(multipliers in ``dl``, second superdiagonal in ``du2``).
"""

import numpy as np
from numba import config, njit, prange

# skip probing for an incompatible TBB; the work queue layer is always present
config.THREADING_LAYER = "workqueue"


@njit(cache=True)
def gttrf(dl, d, du):
    """In-place pivoted LU of a tridiagonal matrix.  Returns ``(du2, ipiv, ok)``.

    On exit ``d`` holds the reciprocals of the pivots of ``U``.
    """
    n = d.size
    du2 = np.zeros(max(n - 2, 0), dtype=d.dtype)
    ipiv = np.arange(n)
    for i in range(n - 1):
        if abs(d[i]) >= abs(dl[i]):
            if d[i] != 0:
                fact = dl[i] / d[i]
                dl[i] = fact
                d[i + 1] -= fact * du[i]
        else:
            fact = d[i] / dl[i]
            d[i] = dl[i]
            dl[i] = fact
            temp = du[i]
            du[i] = d[i + 1]
            d[i + 1] = temp - fact * d[i + 1]
            if i < n - 2:
                du2[i] = du[i + 1]
                du[i + 1] = -fact * du[i + 1]
            ipiv[i] = i + 1
    ok = True
    for i in range(n):
        if d[i] == 0:
            ok = False
        else:
            # store reciprocals: the solves then only multiply
            d[i] = 1.0 / d[i]
    return du2, ipiv, ok


@njit(cache=True)
def gttrs(dl, d, du, du2, ipiv, b):
    """Solve ``A x = b`` in place for a block of right-hand sides (columns)."""
    n = d.size
    m = b.shape[1]
    for c in range(m):
        for i in range(n - 1):
            if ipiv[i] == i:
                b[i + 1, c] -= dl[i] * b[i, c]
            else:
                temp = b[i, c]
                b[i, c] = b[i + 1, c]
                b[i + 1, c] = temp - dl[i] * b[i, c]
        b[n - 1, c] *= d[n - 1]
        if n > 1:
            b[n - 2, c] = (b[n - 2, c] - du[n - 2] * b[n - 1, c]) * d[n - 2]
        for i in range(n - 3, -1, -1):
            b[i, c] = (b[i, c] - du[i] * b[i + 1, c] - du2[i] * b[i + 2, c]) * d[i]


@njit(cache=True)
def gttrs_h(dl, d, du, du2, ipiv, b):
    """Solve ``A^H x = b`` in place for a block of right-hand sides."""
    n = d.size
    m = b.shape[1]
    for c in range(m):
        b[0, c] *= np.conj(d[0])
        if n > 1:
            b[1, c] = (b[1, c] - np.conj(du[0]) * b[0, c]) * np.conj(d[1])
        for i in range(2, n):
            b[i, c] = (b[i, c] - np.conj(du[i - 1]) * b[i - 1, c]
                       - np.conj(du2[i - 2]) * b[i - 2, c]) * np.conj(d[i])
        for i in range(n - 2, -1, -1):
            if ipiv[i] == i:
                b[i, c] -= np.conj(dl[i]) * b[i + 1, c]
            else:
                temp = b[i + 1, c]
                b[i + 1, c] = b[i, c] - np.conj(dl[i]) * temp
                b[i, c] = temp


@njit(cache=True)
def _orthonormalize(w):
    n, p = w.shape
    for sweep in range(2):
        for j in range(p):
            for k in range(j):
                s = 0j
                for i in range(n):
                    s += np.conj(w[i, k]) * w[i, j]
                for i in range(n):
                    w[i, j] -= s * w[i, k]
            nrm = 0.0
            for i in range(n):
                nrm += w[i, j].real ** 2 + w[i, j].imag ** 2
            nrm = np.sqrt(nrm)
            for i in range(n):
                w[i, j] /= nrm


@njit(cache=True)
def sigma_min_sweep(diag, off, shifts, v0, rtol, maxiter):
    """Smallest singular value of ``tridiag(off, diag - s, off)`` for each shift.

    Block inverse iteration on ``B^H B`` with Rayleigh-Ritz; the block is
    carried from one shift to the next.  Returns ``(sigma, iterations, block)``;
    ``sigma = 0`` flags a numerically singular shift.
    """
    n = diag.size
    p = v0.shape[1]
    v = v0.copy()
    out = np.empty(shifts.size)
    iters = np.zeros(shifts.size, dtype=np.int64)
    for k in range(shifts.size):
        dl = off.copy()
        du = off.copy()
        d = diag - shifts[k]
        du2, ipiv, ok = gttrf(dl, d, du)
        if not ok:
            out[k] = 0.0
            continue
        est = 0.0
        new = 0.0
        bad = False
        for it in range(maxiter):
            z = v.copy()
            gttrs_h(dl, d, du, du2, ipiv, z)
            g = np.empty((p, p), dtype=np.complex128)
            for a in range(p):
                for b in range(a, p):
                    acc = 0j
                    for i in range(n):
                        acc += np.conj(z[i, a]) * z[i, b]
                    g[a, b] = acc
                    g[b, a] = np.conj(acc)
            w, u = np.linalg.eigh(g)
            new = w[p - 1]
            if not np.isfinite(new):
                bad = True
                break
            v = np.zeros((n, p), dtype=np.complex128)
            for a in range(p):
                for b in range(p):
                    c = u[b, a]
                    for i in range(n):
                        v[i, a] += z[i, b] * c
            gttrs(dl, d, du, du2, ipiv, v)
            _orthonormalize(v)
            iters[k] = it + 1
            if abs(new - est) <= rtol * new:
                break
            est = new
        if bad or new <= 0:
            out[k] = 0.0
        else:
            out[k] = 1.0 / np.sqrt(new)
    return out, iters, v


@njit(cache=True)
def leapfrog_step(u, v, dt, dx, dy, a, wx):
    """Advance ``(u^n, v^{n-1/2})`` to ``(u^{n+1}, v^{n+1/2})`` in place.

    Rows ``j = 0`` and ``j = ny-1`` carry the damped ghost-point condition with
    the time-centred velocity.  Returns ``sum_i wx_i (|vbar_i0|^2 + |vbar_iN|^2)``
    for the dissipation bookkeeping.
    """
    nx, ny = u.shape
    idx2 = 1.0 / (dx * dx)
    idy2 = 1.0 / (dy * dy)
    r = a * dt / dy
    bsum = 0.0
    for i in range(nx):
        im = i - 1 if i > 0 else 1
        ip = i + 1 if i < nx - 1 else nx - 2
        for j in range(ny):
            jm = j - 1 if j > 0 else 1
            jp = j + 1 if j < ny - 1 else ny - 2
            lap = (u[im, j] + u[ip, j] - 2.0 * u[i, j]) * idx2 \
                + (u[i, jm] + u[i, jp] - 2.0 * u[i, j]) * idy2
            vm = v[i, j]
            if j == 0 or j == ny - 1:
                vp = ((1.0 - r) * vm + dt * lap) / (1.0 + r)
                vb = 0.5 * (vm + vp)
                bsum += wx[i] * (vb.real * vb.real + vb.imag * vb.imag)
            else:
                vp = vm + dt * lap
            v[i, j] = vp
    for i in range(nx):
        for j in range(ny):
            u[i, j] += dt * v[i, j]
    return bsum


@njit(cache=True, parallel=True)
def batched_tridiag_solve(diag, off, shifts, rhs, adjoint):
    """Solve ``(tridiag(off, diag + shifts[k], off)) x = rhs[k]`` for every ``k``.

    ``rhs`` has shape ``(K, n, m)`` and is overwritten.  With ``adjoint`` the
    conjugate-transposed systems are solved instead.  Returns a flag per ``k``
    that is ``False`` when the factorisation hit an exact zero pivot.
    """
    nk = shifts.size
    ok = np.ones(nk, dtype=np.bool_)
    for k in prange(nk):
        dl = off.copy()
        du = off.copy()
        d = diag + shifts[k]
        du2, ipiv, good = gttrf(dl, d, du)
        if not good:
            ok[k] = False
            continue
        if adjoint:
            gttrs_h(dl, d, du, du2, ipiv, rhs[k])
        else:
            gttrs(dl, d, du, du2, ipiv, rhs[k])
    return ok
