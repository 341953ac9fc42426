# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled numeric hot kernels: dense eigenvalues and switched RK4.

Mirror of `pure.py`; algorithms and tolerances are kept identical so both
backends agree to rounding.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs, sqrt, copysign

from ..errors import DivergenceError, SolverError

cnp.import_array()

BACKEND = "compiled"


cdef void _balance(double[:, ::1] a, Py_ssize_t n) noexcept nogil:
    cdef double radix = 2.0
    cdef bint done = False
    cdef Py_ssize_t i, j
    cdef double r, c, f, s
    while not done:
        done = True
        for i in range(n):
            r = 0.0
            c = 0.0
            for j in range(n):
                if j != i:
                    r += fabs(a[i, j])
                    c += fabs(a[j, i])
            if r == 0.0 or c == 0.0:
                continue
            f = 1.0
            s = c + r
            while c < r / radix:
                c *= radix
                r /= radix
                f *= radix
            while c >= r * radix:
                c /= radix
                r *= radix
                f /= radix
            if (c + r) < 0.95 * s:
                done = False
                for j in range(n):
                    a[i, j] /= f
                    a[j, i] *= f


cdef void _hessenberg(double[:, ::1] h, double* v, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t k, i, j
    cdef double nx, nv, dot
    for k in range(n - 2):
        nx = 0.0
        for i in range(k + 1, n):
            nx += h[i, k] * h[i, k]
        nx = sqrt(nx)
        if nx == 0.0:
            continue
        for i in range(k + 1, n):
            v[i] = h[i, k]
        v[k + 1] += copysign(nx, h[k + 1, k])
        nv = 0.0
        for i in range(k + 1, n):
            nv += v[i] * v[i]
        nv = sqrt(nv)
        if nv == 0.0:
            continue
        for i in range(k + 1, n):
            v[i] /= nv
        # H[k+1:, k:] -= 2 v (v.T H[k+1:, k:])
        for j in range(k, n):
            dot = 0.0
            for i in range(k + 1, n):
                dot += v[i] * h[i, j]
            dot *= 2.0
            for i in range(k + 1, n):
                h[i, j] -= v[i] * dot
        # H[:, k+1:] -= 2 (H[:, k+1:] v) v.T
        for i in range(n):
            dot = 0.0
            for j in range(k + 1, n):
                dot += h[i, j] * v[j]
            dot *= 2.0
            for j in range(k + 1, n):
                h[i, j] -= dot * v[j]
        for i in range(k + 2, n):
            h[i, k] = 0.0


def eigvals(a, max_sweeps=None):
    """Eigenvalues of a real square matrix (balance + Hessenberg + Francis QR)."""
    cdef cnp.ndarray[double, ndim=2] a_arr = np.array(a, dtype=np.float64, order="C")
    cdef Py_ssize_t n = a_arr.shape[0]
    if a_arr.shape[1] != n:
        raise ValueError("matrix must be square")
    if n == 0:
        return np.empty(0, dtype=complex)
    if n == 1:
        return a_arr.astype(complex).ravel()
    cdef double[:, ::1] h = a_arr
    cdef cnp.ndarray[double, ndim=1] work = np.zeros(n, dtype=np.float64)
    cdef double* v = <double*> cnp.PyArray_DATA(work)
    _balance(h, n)
    _hessenberg(h, v, n)

    cdef cnp.ndarray[complex, ndim=1] eigs = np.empty(n, dtype=complex)
    cdef Py_ssize_t n_found = 0
    cdef double eps = np.finfo(float).eps
    cdef long budget = 30 * n if max_sweeps is None else <long> max_sweeps
    cdef Py_ssize_t hi = n - 1, lo, k, i, j, r0, r1
    cdef long iters = 0
    cdef double s, tr, det, disc, x, y, z, nv, nw, dot
    cdef double w0, w1, w2
    while hi >= 0:
        lo = hi
        while lo > 0:
            s = fabs(h[lo - 1, lo - 1]) + fabs(h[lo, lo])
            if s == 0.0:
                s = 1.0
            if fabs(h[lo, lo - 1]) < eps * s:
                h[lo, lo - 1] = 0.0
                break
            lo -= 1
        if lo == hi:
            eigs[n_found] = h[hi, hi]
            n_found += 1
            hi -= 1
            iters = 0
            continue
        if lo == hi - 1:
            tr = h[lo, lo] + h[hi, hi]
            det = h[lo, lo] * h[hi, hi] - h[lo, hi] * h[hi, lo]
            disc = 0.25 * tr * tr - det
            if disc >= 0.0:
                s = sqrt(disc)
                eigs[n_found] = 0.5 * tr + s
                eigs[n_found + 1] = 0.5 * tr - s
            else:
                s = sqrt(-disc)
                eigs[n_found] = 0.5 * tr + 1j * s
                eigs[n_found + 1] = 0.5 * tr - 1j * s
            n_found += 2
            hi -= 2
            iters = 0
            continue
        iters += 1
        if iters > budget:
            raise SolverError(
                f"QR iteration exceeded {budget} sweeps for one eigenvalue",
                residual=fabs(h[hi, hi - 1]),
            )
        if iters % 11 == 0:
            s = fabs(h[hi, hi - 1]) + fabs(h[hi - 1, hi - 2])
            tr = 1.5 * s
            det = s * s
        else:
            tr = h[hi - 1, hi - 1] + h[hi, hi]
            det = h[hi - 1, hi - 1] * h[hi, hi] - h[hi - 1, hi] * h[hi, hi - 1]
        x = h[lo, lo] * h[lo, lo] + h[lo, lo + 1] * h[lo + 1, lo] - tr * h[lo, lo] + det
        y = h[lo + 1, lo] * (h[lo, lo] + h[lo + 1, lo + 1] - tr)
        z = h[lo + 2, lo + 1] * h[lo + 1, lo]
        for k in range(lo, hi - 1):
            nv = sqrt(x * x + y * y + z * z)
            if nv != 0.0:
                w0 = x + copysign(nv, x)
                w1 = y
                w2 = z
                nw = sqrt(w0 * w0 + w1 * w1 + w2 * w2)
                if nw != 0.0:
                    w0 /= nw
                    w1 /= nw
                    w2 /= nw
                    r0 = lo if k - 1 < lo else k - 1
                    for j in range(r0, n):
                        dot = 2.0 * (w0 * h[k, j] + w1 * h[k + 1, j] + w2 * h[k + 2, j])
                        h[k, j] -= w0 * dot
                        h[k + 1, j] -= w1 * dot
                        h[k + 2, j] -= w2 * dot
                    r1 = (hi if hi < k + 3 else k + 3) + 1
                    for i in range(r1):
                        dot = 2.0 * (h[i, k] * w0 + h[i, k + 1] * w1 + h[i, k + 2] * w2)
                        h[i, k] -= dot * w0
                        h[i, k + 1] -= dot * w1
                        h[i, k + 2] -= dot * w2
            x = h[k + 1, k]
            y = h[k + 2, k]
            z = h[k + 3, k] if k + 3 <= hi else 0.0
        nv = sqrt(x * x + y * y)
        if nv != 0.0:
            w0 = x + copysign(nv, x)
            w1 = y
            nw = sqrt(w0 * w0 + w1 * w1)
            if nw != 0.0:
                w0 /= nw
                w1 /= nw
                k = hi - 1
                for j in range(k - 1, n):
                    dot = 2.0 * (w0 * h[k, j] + w1 * h[k + 1, j])
                    h[k, j] -= w0 * dot
                    h[k + 1, j] -= w1 * dot
                for i in range(hi + 1):
                    dot = 2.0 * (h[i, k] * w0 + h[i, k + 1] * w1)
                    h[i, k] -= dot * w0
                    h[i, k + 1] -= dot * w1
    return eigs


cdef void _step(double[:, ::1] a, double[::1] bu, double[::1] x,
                double h, double[::1] xout, double[:, ::1] ks,
                Py_ssize_t n) noexcept nogil:
    # classic RK4, ks is 5xn scratch (k1..k4 + stage state)
    cdef Py_ssize_t i, j
    cdef double acc
    for i in range(n):
        acc = bu[i]
        for j in range(n):
            acc += a[i, j] * x[j]
        ks[0, i] = acc
    for i in range(n):
        ks[4, i] = x[i] + 0.5 * h * ks[0, i]
    for i in range(n):
        acc = bu[i]
        for j in range(n):
            acc += a[i, j] * ks[4, j]
        ks[1, i] = acc
    for i in range(n):
        ks[4, i] = x[i] + 0.5 * h * ks[1, i]
    for i in range(n):
        acc = bu[i]
        for j in range(n):
            acc += a[i, j] * ks[4, j]
        ks[2, i] = acc
    for i in range(n):
        ks[4, i] = x[i] + h * ks[2, i]
    for i in range(n):
        acc = bu[i]
        for j in range(n):
            acc += a[i, j] * ks[4, j]
        ks[3, i] = acc
    for i in range(n):
        xout[i] = x[i] + (h / 6.0) * (ks[0, i] + 2.0 * ks[1, i] + 2.0 * ks[2, i] + ks[3, i])


def rk4_switched(a_phases, bu_phases, x0, double dt, long n_steps,
                 watch_idx, thresholds, refs, double diverge_limit):
    """Fixed-step RK4 with sequential phase switching (see pure twin)."""
    cdef cnp.ndarray[double, ndim=3] a_arr = np.ascontiguousarray(
        np.stack([np.asarray(a, dtype=np.float64) for a in a_phases]))
    cdef cnp.ndarray[double, ndim=2] bu_arr = np.ascontiguousarray(
        np.stack([np.asarray(b, dtype=np.float64) for b in bu_phases]))
    cdef cnp.ndarray[double, ndim=1] x = np.array(x0, dtype=np.float64)
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t n_phases = a_arr.shape[0]
    cdef cnp.ndarray[long, ndim=1] widx = np.asarray(watch_idx, dtype=np.int64)
    cdef cnp.ndarray[double, ndim=1] thr = np.asarray(thresholds, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] ref = np.asarray(refs, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2] out = np.empty((n_steps + 1, n))
    cdef cnp.ndarray[double, ndim=1] switch_times = np.full(n_phases - 1, np.nan)
    cdef cnp.ndarray[double, ndim=1] guard = diverge_limit * np.maximum(1.0, np.abs(x))
    cdef cnp.ndarray[double, ndim=2] ks = np.zeros((5, n))
    cdef cnp.ndarray[double, ndim=1] xn = np.zeros(n)
    cdef cnp.ndarray[double, ndim=1] xc = np.zeros(n)

    cdef double[:, :, ::1] av = a_arr
    cdef double[:, ::1] buv = bu_arr
    cdef double[::1] xv = x
    cdef double[::1] xnv = xn
    cdef double[::1] xcv = xc
    cdef double[:, ::1] outv = out
    cdef double[:, ::1] ksv = ks
    cdef double[::1] guardv = guard

    cdef Py_ssize_t phase = 0, step, i, w
    cdef double t = 0.0, lo_h, hi_h, mid, rem, th, rf
    cdef bint crossed, diverged

    for i in range(n):
        outv[0, i] = xv[i]
    for step in range(n_steps):
        _step(av[phase], buv[phase], xv, dt, xnv, ksv, n)
        if phase < n_phases - 1:
            w = widx[phase]
            th = thr[phase]
            rf = ref[phase]
            if fabs(xnv[w] - rf) >= th and fabs(xv[w] - rf) < th:
                lo_h = 0.0
                hi_h = dt
                for i in range(60):
                    mid = 0.5 * (lo_h + hi_h)
                    _step(av[phase], buv[phase], xv, mid, xcv, ksv, n)
                    if fabs(xcv[w] - rf) >= th:
                        hi_h = mid
                    else:
                        lo_h = mid
                _step(av[phase], buv[phase], xv, hi_h, xcv, ksv, n)
                switch_times[phase] = t + hi_h
                phase += 1
                rem = dt - hi_h
                if rem > 0.0:
                    _step(av[phase], buv[phase], xcv, rem, xnv, ksv, n)
                else:
                    for i in range(n):
                        xnv[i] = xcv[i]
                while (phase < n_phases - 1
                       and fabs(xnv[widx[phase]] - ref[phase]) >= thr[phase]):
                    switch_times[phase] = t + dt
                    phase += 1
        diverged = False
        for i in range(n):
            if fabs(xnv[i]) > guardv[i]:
                diverged = True
        if diverged:
            raise DivergenceError(
                f"state magnitude exceeded divergence guard at t = {t + dt:.6g} s",
                residual=float(np.max(np.abs(xn))),
            )
        for i in range(n):
            xv[i] = xnv[i]
        t += dt
        for i in range(n):
            outv[step + 1, i] = xv[i]
    return out, switch_times
