"""Pure-Python (numpy) implementations of the numeric hot kernels.

Twin of the compiled `_core` extension: same algorithms, same results to
rounding.  Selected automatically when the extension is unavailable or when
``VPPRES_PURE=1``.
"""

import numpy as np

from ..errors import DivergenceError, SolverError

BACKEND = "pure"


def _balance(a):
    """Parlett-Reinsch balancing with radix-2 scaling (diagonal similarity)."""
    a = a.copy()
    n = a.shape[0]
    radix = 2.0
    done = False
    while not done:
        done = True
        for i in range(n):
            r = np.sum(np.abs(a[i, :])) - abs(a[i, i])
            c = np.sum(np.abs(a[:, i])) - abs(a[i, i])
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
                a[i, :] /= f
                a[:, i] *= f
    return a


def _hessenberg(a):
    """Householder reduction to upper Hessenberg form."""
    h = a.copy()
    n = h.shape[0]
    for k in range(n - 2):
        x = h[k + 1:, k]
        nx = np.linalg.norm(x)
        if nx == 0.0:
            continue
        v = x.copy()
        v[0] += np.copysign(nx, x[0])
        nv = np.linalg.norm(v)
        if nv == 0.0:
            continue
        v /= nv
        h[k + 1:, k:] -= 2.0 * np.outer(v, v @ h[k + 1:, k:])
        h[:, k + 1:] -= 2.0 * np.outer(h[:, k + 1:] @ v, v)
        h[k + 2:, k] = 0.0
    return h


def _eig2x2(a, b, c, d):
    tr = a + d
    det = a * d - b * c
    disc = 0.25 * tr * tr - det
    if disc >= 0.0:
        s = np.sqrt(disc)
        return complex(0.5 * tr + s), complex(0.5 * tr - s)
    s = np.sqrt(-disc)
    return complex(0.5 * tr, s), complex(0.5 * tr, -s)


def eigvals(a, max_sweeps=None):
    """Eigenvalues of a real square matrix.

    Balancing, Householder Hessenberg reduction, then Francis double-shift QR
    with deflation; converged 1x1/2x2 trailing blocks yield the eigenvalues.

    Raises SolverError (with the live subdiagonal residual) if an eigenvalue
    fails to deflate within the iteration budget.
    """
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError("matrix must be square")
    if n == 0:
        return np.empty(0, dtype=complex)
    if n == 1:
        return a.astype(complex).ravel()
    h = _hessenberg(_balance(a))
    eps = np.finfo(float).eps
    budget = 30 * n if max_sweeps is None else max_sweeps
    eigs = []
    hi = n - 1
    iters = 0
    while hi >= 0:
        lo = hi
        while lo > 0:
            s = abs(h[lo - 1, lo - 1]) + abs(h[lo, lo])
            if s == 0.0:
                s = 1.0
            if abs(h[lo, lo - 1]) < eps * s:
                h[lo, lo - 1] = 0.0
                break
            lo -= 1
        if lo == hi:
            eigs.append(complex(h[hi, hi]))
            hi -= 1
            iters = 0
            continue
        if lo == hi - 1:
            e1, e2 = _eig2x2(h[lo, lo], h[lo, hi], h[hi, lo], h[hi, hi])
            eigs.extend((e1, e2))
            hi -= 2
            iters = 0
            continue
        iters += 1
        if iters > budget:
            raise SolverError(
                f"QR iteration exceeded {budget} sweeps for one eigenvalue",
                residual=abs(h[hi, hi - 1]),
            )
        if iters % 11 == 0:
            # exceptional shift to break symmetry-induced stalls
            s1 = abs(h[hi, hi - 1]) + abs(h[hi - 1, hi - 2])
            tr, det = 1.5 * s1, s1 * s1
        else:
            tr = h[hi - 1, hi - 1] + h[hi, hi]
            det = h[hi - 1, hi - 1] * h[hi, hi] - h[hi - 1, hi] * h[hi, hi - 1]
        # first column of (H - a I)(H - b I), a+b = tr, ab = det
        x = h[lo, lo] * h[lo, lo] + h[lo, lo + 1] * h[lo + 1, lo] - tr * h[lo, lo] + det
        y = h[lo + 1, lo] * (h[lo, lo] + h[lo + 1, lo + 1] - tr)
        z = h[lo + 2, lo + 1] * h[lo + 1, lo]
        for k in range(lo, hi - 1):
            v = np.array([x, y, z])
            nv = np.linalg.norm(v)
            if nv != 0.0:
                w = v.copy()
                w[0] += np.copysign(nv, x)
                nw = np.linalg.norm(w)
                if nw != 0.0:
                    w /= nw
                    r0 = max(lo, k - 1)
                    h[k:k + 3, r0:] -= 2.0 * np.outer(w, w @ h[k:k + 3, r0:])
                    r1 = min(hi, k + 3) + 1
                    h[:r1, k:k + 3] -= 2.0 * np.outer(h[:r1, k:k + 3] @ w, w)
            x = h[k + 1, k]
            y = h[k + 2, k]
            z = h[k + 3, k] if k + 3 <= hi else 0.0
        v = np.array([x, y])
        nv = np.linalg.norm(v)
        if nv != 0.0:
            w = v.copy()
            w[0] += np.copysign(nv, x)
            nw = np.linalg.norm(w)
            if nw != 0.0:
                w /= nw
                k = hi - 1
                h[k:k + 2, k - 1:] -= 2.0 * np.outer(w, w @ h[k:k + 2, k - 1:])
                h[:hi + 1, k:k + 2] -= 2.0 * np.outer(h[:hi + 1, k:k + 2] @ w, w)
    return np.array(eigs)


def _rk4_step(a, bu, x, h):
    k1 = a @ x + bu
    k2 = a @ (x + 0.5 * h * k1) + bu
    k3 = a @ (x + 0.5 * h * k2) + bu
    k4 = a @ (x + h * k3) + bu
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def rk4_switched(a_phases, bu_phases, x0, dt, n_steps,
                 watch_idx, thresholds, refs, diverge_limit):
    """Fixed-step RK4 of x' = A x + Bu with sequential phase switching.

    ``a_phases``/``bu_phases`` hold one (A, Bu) pair per phase. Phase p
    advances to p+1 when |x[watch_idx[p]] - refs[p]| crosses thresholds[p];
    the crossing instant is located by bisection inside the step, the step is
    split there, and the remainder is integrated with the new matrices.

    Returns (states, switch_times) where states has shape (n_steps+1, n) and
    switch_times[p] is the activation instant of phase p+1 (nan if never).
    """
    a_phases = [np.asarray(a, dtype=float) for a in a_phases]
    bu_phases = [np.asarray(b, dtype=float) for b in bu_phases]
    x = np.asarray(x0, dtype=float).copy()
    n = x.size
    n_phases = len(a_phases)
    out = np.empty((n_steps + 1, n))
    out[0] = x
    switch_times = np.full(n_phases - 1, np.nan)
    guard = diverge_limit * np.maximum(1.0, np.abs(x))
    phase = 0
    t = 0.0
    for step in range(n_steps):
        a, bu = a_phases[phase], bu_phases[phase]
        x_new = _rk4_step(a, bu, x, dt)
        if phase < n_phases - 1:
            w = watch_idx[phase]
            th = thresholds[phase]
            ref = refs[phase]
            if abs(x_new[w] - ref) >= th and abs(x[w] - ref) < th:
                # bisect the crossing time within (0, dt]
                lo_h, hi_h = 0.0, dt
                for _ in range(60):
                    mid = 0.5 * (lo_h + hi_h)
                    xm = _rk4_step(a, bu, x, mid)
                    if abs(xm[w] - ref) >= th:
                        hi_h = mid
                    else:
                        lo_h = mid
                x_cross = _rk4_step(a, bu, x, hi_h)
                switch_times[phase] = t + hi_h
                phase += 1
                rem = dt - hi_h
                if rem > 0.0:
                    x_new = _rk4_step(a_phases[phase], bu_phases[phase], x_cross, rem)
                else:
                    x_new = x_cross
                # a fast follow-up crossing (e.g. both dead bands in one step)
                while (phase < n_phases - 1
                       and abs(x_new[watch_idx[phase]] - refs[phase]) >= thresholds[phase]):
                    switch_times[phase] = t + dt
                    phase += 1
        if np.any(np.abs(x_new) > guard):
            raise DivergenceError(
                f"state magnitude exceeded divergence guard at t = {t + dt:.6g} s",
                residual=float(np.max(np.abs(x_new))),
            )
        x = x_new
        t += dt
        out[step + 1] = x
    return out, switch_times
