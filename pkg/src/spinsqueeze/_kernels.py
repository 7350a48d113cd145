"""Compiled inner loops for state and density-matrix time stepping.

All kernels work on one parity block (pure states) or the full Dicke space
(density matrices) and take per-step coefficient arrays, so the Python side
decides the time grid and the control/noise values.
"""

import numpy as np
from numba import njit


@njit(cache=True, fastmath=True)
def split_steps(psi, z, w, mu, cz, cx, h):
    """Strang steps ``e^{-i cz Z h/2} W e^{-i cx mu h} W^T e^{-i cz Z h/2}``.

    ``w`` holds the eigenvectors of the block's ``Jx^2`` in its columns and
    ``mu`` the eigenvalues. Evolves ``psi`` in place.
    """
    n = psi.shape[0]
    re = np.empty(n)
    im = np.empty(n)
    tr = np.empty(n)
    ti = np.empty(n)
    for i in range(n):
        re[i] = psi[i].real
        im[i] = psi[i].imag
    for k in range(cz.shape[0]):
        hk = h[k]
        half = 0.5 * hk * cz[k]
        for i in range(n):
            a = -half * z[i]
            c = np.cos(a)
            s = np.sin(a)
            r = re[i] * c - im[i] * s
            im[i] = re[i] * s + im[i] * c
            re[i] = r
        phase = hk * cx[k]
        for i in range(n):
            sr = 0.0
            si = 0.0
            for j in range(n):
                sr += w[j, i] * re[j]
                si += w[j, i] * im[j]
            a = -phase * mu[i]
            c = np.cos(a)
            s = np.sin(a)
            tr[i] = sr * c - si * s
            ti[i] = sr * s + si * c
        for i in range(n):
            sr = 0.0
            si = 0.0
            for j in range(n):
                sr += w[i, j] * tr[j]
                si += w[i, j] * ti[j]
            a = -half * z[i]
            c = np.cos(a)
            s = np.sin(a)
            re[i] = sr * c - si * s
            im[i] = sr * s + si * c
    for i in range(n):
        psi[i] = re[i] + 1j * im[i]


@njit(cache=True)
def _tri_apply(out, v, cz, cx, z, xd, xo):
    # out = -i (cz Z + cx X2) v, X2 tridiagonal in the block
    n = v.shape[0]
    for i in range(n):
        acc = (cz * z[i] + cx * xd[i]) * v[i]
        if i > 0:
            acc += cx * xo[i - 1] * v[i - 1]
        if i < n - 1:
            acc += cx * xo[i] * v[i + 1]
        out[i] = -1j * acc


@njit(cache=True)
def rk4_steps(psi, z, xd, xo, cz, cx, h):
    """Classical RK4 for ``i d psi/dt = (cz(t) Z + cx(t) X2) psi`` in one block.

    ``cz`` and ``cx`` have shape ``(nsteps, 3)``: values at the start, middle
    and end of each step.
    """
    n = psi.shape[0]
    k1 = np.empty(n, np.complex128)
    k2 = np.empty(n, np.complex128)
    k3 = np.empty(n, np.complex128)
    k4 = np.empty(n, np.complex128)
    tmp = np.empty(n, np.complex128)
    for k in range(cz.shape[0]):
        hk = h[k]
        _tri_apply(k1, psi, cz[k, 0], cx[k, 0], z, xd, xo)
        for i in range(n):
            tmp[i] = psi[i] + 0.5 * hk * k1[i]
        _tri_apply(k2, tmp, cz[k, 1], cx[k, 1], z, xd, xo)
        for i in range(n):
            tmp[i] = psi[i] + 0.5 * hk * k2[i]
        _tri_apply(k3, tmp, cz[k, 1], cx[k, 1], z, xd, xo)
        for i in range(n):
            tmp[i] = psi[i] + hk * k3[i]
        _tri_apply(k4, tmp, cz[k, 2], cx[k, 2], z, xd, xo)
        for i in range(n):
            psi[i] += hk / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])


@njit(cache=True)
def lindblad_rhs(out, rho, cz, cx, gamma, m, xd, xo2, jp):
    """``-i[cz Jz + cx Jx^2, rho] + gamma (2 J+ rho J- - J-J+ rho - rho J-J+)``.

    Banded evaluation, O(dim^2). ``jp[k] = <m_k|J+|m_{k+1}>``; ``J-J+`` is
    diagonal with entries ``jp[k-1]^2``.
    """
    n = rho.shape[0]
    for i in range(n):
        hi = cz * m[i] + cx * xd[i]
        di = jp[i - 1] ** 2 if i > 0 else 0.0
        for j in range(n):
            hj = cz * m[j] + cx * xd[j]
            r = rho[i, j]
            # H rho
            hr = hi * r
            if i + 2 < n:
                hr += cx * xo2[i] * rho[i + 2, j]
            if i >= 2:
                hr += cx * xo2[i - 2] * rho[i - 2, j]
            # rho H
            rh = r * hj
            if j + 2 < n:
                rh += cx * xo2[j] * rho[i, j + 2]
            if j >= 2:
                rh += cx * xo2[j - 2] * rho[i, j - 2]
            acc = -1j * (hr - rh)
            if gamma != 0.0:
                dj = jp[j - 1] ** 2 if j > 0 else 0.0
                jump = 0.0j
                if i + 1 < n and j + 1 < n:
                    jump = 2.0 * jp[i] * jp[j] * rho[i + 1, j + 1]
                acc += gamma * (jump - (di + dj) * r)
            out[i, j] = acc


@njit(cache=True)
def lindblad_rk4_steps(rho, cz, cx, gamma, h, m, xd, xo2, jp):
    """RK4 on the master equation with Hermitian symmetrisation after every step.

    ``cz``, ``cx``, ``gamma`` have shape ``(nsteps, 3)`` (start, middle, end).
    Returns the anti-Hermitian residue removed by symmetrisation, summed over
    steps (largest element per step).
    """
    n = rho.shape[0]
    k1 = np.empty((n, n), np.complex128)
    k2 = np.empty((n, n), np.complex128)
    k3 = np.empty((n, n), np.complex128)
    k4 = np.empty((n, n), np.complex128)
    tmp = np.empty((n, n), np.complex128)
    total = 0.0
    for k in range(cz.shape[0]):
        hk = h[k]
        worst = 0.0
        lindblad_rhs(k1, rho, cz[k, 0], cx[k, 0], gamma[k, 0], m, xd, xo2, jp)
        for i in range(n):
            for j in range(n):
                tmp[i, j] = rho[i, j] + 0.5 * hk * k1[i, j]
        lindblad_rhs(k2, tmp, cz[k, 1], cx[k, 1], gamma[k, 1], m, xd, xo2, jp)
        for i in range(n):
            for j in range(n):
                tmp[i, j] = rho[i, j] + 0.5 * hk * k2[i, j]
        lindblad_rhs(k3, tmp, cz[k, 1], cx[k, 1], gamma[k, 1], m, xd, xo2, jp)
        for i in range(n):
            for j in range(n):
                tmp[i, j] = rho[i, j] + hk * k3[i, j]
        lindblad_rhs(k4, tmp, cz[k, 2], cx[k, 2], gamma[k, 2], m, xd, xo2, jp)
        for i in range(n):
            for j in range(n):
                rho[i, j] += hk / 6.0 * (k1[i, j] + 2.0 * k2[i, j] + 2.0 * k3[i, j] + k4[i, j])
        for i in range(n):
            for j in range(i, n):
                a = rho[i, j]
                b = rho[j, i].conjugate()
                d = abs(a - b)
                if d > worst:
                    worst = d
                s = 0.5 * (a + b)
                rho[i, j] = s
                rho[j, i] = s.conjugate()
        total += worst
    return total
