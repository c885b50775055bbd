# Compiled rigid-body kernels for revolute serial chains.
#
# Conventions: link i's frame is its parent's frame moved by the fixed
# origin (rotation R0[i], translation p[i]) and then rotated by q[i] about
# axis[i]. Quantities are expressed in the frame of the link they belong to.
# Spatial vectors are ordered (angular, linear).

import numpy as np

from ._accel import njit


@njit(inline="always")
def _cr(a0, a1, a2, b0, b1, b2):
    return a1 * b2 - a2 * b1, a2 * b0 - a0 * b2, a0 * b1 - a1 * b0


@njit(inline="always")
def _mv(A, x0, x1, x2):
    return (
        A[0, 0] * x0 + A[0, 1] * x1 + A[0, 2] * x2,
        A[1, 0] * x0 + A[1, 1] * x1 + A[1, 2] * x2,
        A[2, 0] * x0 + A[2, 1] * x1 + A[2, 2] * x2,
    )


@njit(inline="always")
def _mtv(A, x0, x1, x2):
    return (
        A[0, 0] * x0 + A[1, 0] * x1 + A[2, 0] * x2,
        A[0, 1] * x0 + A[1, 1] * x1 + A[2, 1] * x2,
        A[0, 2] * x0 + A[1, 2] * x1 + A[2, 2] * x2,
    )


@njit
def link_rotations(R0, axis, q):
    n = q.shape[0]
    R = np.empty((n, 3, 3))
    A = np.empty((3, 3))
    for i in range(n):
        c = np.cos(q[i])
        s = np.sin(q[i])
        v = 1.0 - c
        x, y, z = axis[i, 0], axis[i, 1], axis[i, 2]
        A[0, 0] = c + x * x * v
        A[0, 1] = x * y * v - z * s
        A[0, 2] = x * z * v + y * s
        A[1, 0] = y * x * v + z * s
        A[1, 1] = c + y * y * v
        A[1, 2] = y * z * v - x * s
        A[2, 0] = z * x * v - y * s
        A[2, 1] = z * y * v + x * s
        A[2, 2] = c + z * z * v
        for r in range(3):
            for k in range(3):
                R[i, r, k] = R0[i, r, 0] * A[0, k] + R0[i, r, 1] * A[1, k] + R0[i, r, 2] * A[2, k]
    return R


@njit
def rnea(R0, p, axis, mass, com, inertia, gravity, q, qd, qdd):
    """Recursive Newton-Euler inverse dynamics for one state."""
    n = q.shape[0]
    R = link_rotations(R0, axis, q)
    F = np.empty((n, 3))
    N = np.empty((n, 3))
    w0, w1, w2 = 0.0, 0.0, 0.0
    e0, e1, e2 = 0.0, 0.0, 0.0  # angular acceleration
    v0, v1, v2 = -gravity[0], -gravity[1], -gravity[2]  # linear acceleration of the origin
    for i in range(n):
        Ri = R[i]
        p0, p1, p2 = p[i, 0], p[i, 1], p[i, 2]
        a0, a1, a2 = axis[i, 0], axis[i, 1], axis[i, 2]
        t0, t1, t2 = _cr(e0, e1, e2, p0, p1, p2)
        u0, u1, u2 = _cr(w0, w1, w2, p0, p1, p2)
        u0, u1, u2 = _cr(w0, w1, w2, u0, u1, u2)
        v0, v1, v2 = _mtv(Ri, v0 + t0 + u0, v1 + t1 + u1, v2 + t2 + u2)
        i0, i1, i2 = _mtv(Ri, w0, w1, w2)
        s = qd[i]
        w0, w1, w2 = i0 + a0 * s, i1 + a1 * s, i2 + a2 * s
        x0, x1, x2 = _cr(i0, i1, i2, a0 * s, a1 * s, a2 * s)
        e0, e1, e2 = _mtv(Ri, e0, e1, e2)
        e0, e1, e2 = e0 + a0 * qdd[i] + x0, e1 + a1 * qdd[i] + x1, e2 + a2 * qdd[i] + x2
        c0, c1, c2 = com[i, 0], com[i, 1], com[i, 2]
        t0, t1, t2 = _cr(e0, e1, e2, c0, c1, c2)
        u0, u1, u2 = _cr(w0, w1, w2, c0, c1, c2)
        u0, u1, u2 = _cr(w0, w1, w2, u0, u1, u2)
        m = mass[i]
        F[i, 0] = m * (v0 + t0 + u0)
        F[i, 1] = m * (v1 + t1 + u1)
        F[i, 2] = m * (v2 + t2 + u2)
        I = inertia[i]
        h0, h1, h2 = _mv(I, w0, w1, w2)
        g0, g1, g2 = _mv(I, e0, e1, e2)
        x0, x1, x2 = _cr(w0, w1, w2, h0, h1, h2)
        N[i, 0] = g0 + x0
        N[i, 1] = g1 + x1
        N[i, 2] = g2 + x2
    tau = np.empty(n)
    f0, f1, f2 = 0.0, 0.0, 0.0
    m0, m1, m2 = 0.0, 0.0, 0.0
    for i in range(n - 1, -1, -1):
        # f, m: force and moment the child exerts, expressed in the child frame
        if i < n - 1:
            Rc = R[i + 1]
            f0, f1, f2 = _mv(Rc, f0, f1, f2)
            m0, m1, m2 = _mv(Rc, m0, m1, m2)
            x0, x1, x2 = _cr(p[i + 1, 0], p[i + 1, 1], p[i + 1, 2], f0, f1, f2)
            m0, m1, m2 = m0 + x0, m1 + x1, m2 + x2
        x0, x1, x2 = _cr(com[i, 0], com[i, 1], com[i, 2], F[i, 0], F[i, 1], F[i, 2])
        m0, m1, m2 = N[i, 0] + m0 + x0, N[i, 1] + m1 + x1, N[i, 2] + m2 + x2
        f0, f1, f2 = F[i, 0] + f0, F[i, 1] + f1, F[i, 2] + f2
        tau[i] = axis[i, 0] * m0 + axis[i, 1] * m1 + axis[i, 2] * m2
    return tau


@njit
def crba(R0, p, axis, mass, com, inertia, q):
    """Composite-rigid-body joint-space inertia matrix for one configuration.

    Each composite body is held as mass, first moment and rotational
    inertia about its frame origin; children are folded into parents tip first.
    """
    n = q.shape[0]
    R = link_rotations(R0, axis, q)
    cm = mass.copy()
    ch = np.empty((n, 3))
    cJ = np.empty((n, 3, 3))
    for i in range(n):
        c = com[i]
        cc = c[0] * c[0] + c[1] * c[1] + c[2] * c[2]
        for r in range(3):
            ch[i, r] = mass[i] * c[r]
            for k in range(3):
                cJ[i, r, k] = inertia[i, r, k] - mass[i] * c[r] * c[k]
            cJ[i, r, r] += mass[i] * cc
    RJ = np.empty((3, 3))
    for i in range(n - 1, 0, -1):
        Ri = R[i]
        pr = p[i]
        g0, g1, g2 = _mv(Ri, ch[i, 0], ch[i, 1], ch[i, 2])
        g = (g0, g1, g2)
        m = cm[i]
        pp = pr[0] * pr[0] + pr[1] * pr[1] + pr[2] * pr[2]
        pg = pr[0] * g0 + pr[1] * g1 + pr[2] * g2
        for r in range(3):
            for k in range(3):
                RJ[r, k] = Ri[r, 0] * cJ[i, 0, k] + Ri[r, 1] * cJ[i, 1, k] + Ri[r, 2] * cJ[i, 2, k]
        for r in range(3):
            for k in range(3):
                val = RJ[r, 0] * Ri[k, 0] + RJ[r, 1] * Ri[k, 1] + RJ[r, 2] * Ri[k, 2]
                val -= m * pr[r] * pr[k] + pr[r] * g[k] + g[r] * pr[k]
                cJ[i - 1, r, k] += val
            cJ[i - 1, r, r] += m * pp + 2.0 * pg
            ch[i - 1, r] += g[r] + m * pr[r]
        cm[i - 1] += m
    M = np.empty((n, n))
    for i in range(n):
        a0, a1, a2 = axis[i, 0], axis[i, 1], axis[i, 2]
        # spatial force of composite i under unit rate of joint i
        n0, n1, n2 = _mv(cJ[i], a0, a1, a2)
        f0, f1, f2 = _cr(a0, a1, a2, ch[i, 0], ch[i, 1], ch[i, 2])
        M[i, i] = a0 * n0 + a1 * n1 + a2 * n2
        j = i
        while j > 0:
            Rj = R[j]
            f0, f1, f2 = _mv(Rj, f0, f1, f2)
            n0, n1, n2 = _mv(Rj, n0, n1, n2)
            x0, x1, x2 = _cr(p[j, 0], p[j, 1], p[j, 2], f0, f1, f2)
            n0, n1, n2 = n0 + x0, n1 + x1, n2 + x2
            j -= 1
            Mij = axis[j, 0] * n0 + axis[j, 1] * n1 + axis[j, 2] * n2
            M[i, j] = Mij
            M[j, i] = Mij
    return M


@njit
def cholesky_solve(M, b):
    """Solve M x = b for SPD M. Returns (x, ok); ok is False if a pivot is not positive."""
    n = M.shape[0]
    L = np.zeros((n, n))
    scale = 0.0
    for i in range(n):
        scale = max(scale, abs(M[i, i]))
    tiny = 1e-12 * max(scale, 1e-300)
    for j in range(n):
        s = M[j, j]
        for k in range(j):
            s -= L[j, k] * L[j, k]
        if not s > tiny:
            return np.zeros(n), False
        L[j, j] = np.sqrt(s)
        for i in range(j + 1, n):
            s = M[i, j]
            for k in range(j):
                s -= L[i, k] * L[j, k]
            L[i, j] = s / L[j, j]
    y = np.empty(n)
    for i in range(n):
        s = b[i]
        for k in range(i):
            s -= L[i, k] * y[k]
        y[i] = s / L[i, i]
    x = np.empty(n)
    for i in range(n - 1, -1, -1):
        s = y[i]
        for k in range(i + 1, n):
            s -= L[k, i] * x[k]
        x[i] = s / L[i, i]
    return x, True


@njit
def forward(R0, p, axis, mass, com, inertia, gravity, q, qd, tau):
    n = q.shape[0]
    bias = rnea(R0, p, axis, mass, com, inertia, gravity, q, qd, np.zeros(n))
    M = crba(R0, p, axis, mass, com, inertia, q)
    return cholesky_solve(M, tau - bias)


@njit
def rnea_batch(R0, p, axis, mass, com, inertia, gravity, Q, QD, QDD):
    out = np.empty(Q.shape)
    for k in range(Q.shape[0]):
        out[k] = rnea(R0, p, axis, mass, com, inertia, gravity, Q[k], QD[k], QDD[k])
    return out


@njit
def crba_batch(R0, p, axis, mass, com, inertia, Q):
    B, n = Q.shape
    out = np.empty((B, n, n))
    for k in range(B):
        out[k] = crba(R0, p, axis, mass, com, inertia, Q[k])
    return out


@njit
def forward_batch(R0, p, axis, mass, com, inertia, gravity, Q, QD, TAU):
    out = np.empty(Q.shape)
    ok = True
    for k in range(Q.shape[0]):
        x, good = forward(R0, p, axis, mass, com, inertia, gravity, Q[k], QD[k], TAU[k])
        out[k] = x
        ok = ok and good
    return out, ok


@njit
def integrate_held_torque(R0, p, axis, mass, com, inertia, gravity, damping, q, qd, tau_m, dt, substeps):
    """Semi-implicit Euler sub-steps under a zero-order-held motor torque.

    Returns (q, qd, ok); ok turns False on a failed factorisation.
    """
    q = q.copy()
    qd = qd.copy()
    for _ in range(substeps):
        qdd, good = forward(R0, p, axis, mass, com, inertia, gravity, q, qd, tau_m - damping * qd)
        if not good:
            return q, qd, False
        qd = qd + dt * qdd
        q = q + dt * qd
    return q, qd, True
