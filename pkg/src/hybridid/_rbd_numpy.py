"""Pure-numpy rigid-body routines, vectorised over a batch of states.

Same conventions as the compiled kernels. The inertia matrix here is built
by probing inverse dynamics with unit accelerations, which keeps this path
independent of the composite-rigid-body recursion used by the kernels.
"""

import numpy as np


def link_rotations(R0, axis, Q):
    """Rotation of every link frame into its parent frame, shape (B, n, 3, 3)."""
    B, n = Q.shape
    c = np.cos(Q)[..., None, None]
    s = np.sin(Q)[..., None, None]
    a = axis[None]  # (1, n, 3)
    K = np.zeros((1, n, 3, 3))
    K[..., 0, 1] = -a[..., 2]
    K[..., 0, 2] = a[..., 1]
    K[..., 1, 0] = a[..., 2]
    K[..., 1, 2] = -a[..., 0]
    K[..., 2, 0] = -a[..., 1]
    K[..., 2, 1] = a[..., 0]
    aa = a[..., :, None] * a[..., None, :]
    Rq = c * np.eye(3) + s * K + (1.0 - c) * aa
    return np.einsum("nij,bnjk->bnik", R0, Rq)


def rnea(R0, p, axis, mass, com, inertia, gravity, Q, QD, QDD):
    B, n = Q.shape
    R = link_rotations(R0, axis, Q)
    w = np.zeros((B, 3))
    wd = np.zeros((B, 3))
    vd = np.broadcast_to(-np.asarray(gravity, dtype=float), (B, 3)).copy()
    F = np.empty((B, n, 3))
    N = np.empty((B, n, 3))
    for i in range(n):
        Rt = R[:, i]
        pi = p[i]
        a = axis[i]
        lin = vd + np.cross(wd, pi) + np.cross(w, np.cross(w, pi))
        vd = np.einsum("bji,bj->bi", Rt, lin)
        w_in = np.einsum("bji,bj->bi", Rt, w)
        w = w_in + QD[:, i, None] * a
        wd = np.einsum("bji,bj->bi", Rt, wd) + QDD[:, i, None] * a + np.cross(w_in, QD[:, i, None] * a)
        c = com[i]
        vc = vd + np.cross(wd, c) + np.cross(w, np.cross(w, c))
        F[:, i] = mass[i] * vc
        N[:, i] = wd @ inertia[i].T + np.cross(w, w @ inertia[i].T)
    tau = np.empty((B, n))
    f = np.zeros((B, 3))
    m = np.zeros((B, 3))
    for i in range(n - 1, -1, -1):
        if i < n - 1:
            f_child = np.einsum("bij,bj->bi", R[:, i + 1], f)
            m_child = np.einsum("bij,bj->bi", R[:, i + 1], m)
            m = N[:, i] + m_child + np.cross(com[i], F[:, i]) + np.cross(p[i + 1], f_child)
            f = F[:, i] + f_child
        else:
            m = N[:, i] + np.cross(com[i], F[:, i])
            f = F[:, i].copy()
        tau[:, i] = m @ axis[i]
    return tau


def inertia_matrix(R0, p, axis, mass, com, inertia, Q):
    """M(q) by column probing: column j is the torque for unit acceleration j, no gravity or velocity."""
    B, n = Q.shape
    Qr = np.repeat(Q, n, axis=0)
    QDD = np.tile(np.eye(n), (B, 1))
    cols = rnea(R0, p, axis, mass, com, inertia, np.zeros(3), Qr, np.zeros_like(Qr), QDD)
    M = cols.reshape(B, n, n).transpose(0, 2, 1)
    return 0.5 * (M + M.transpose(0, 2, 1))


def forward(R0, p, axis, mass, com, inertia, gravity, Q, QD, TAU):
    bias = rnea(R0, p, axis, mass, com, inertia, gravity, Q, QD, np.zeros_like(Q))
    M = inertia_matrix(R0, p, axis, mass, com, inertia, Q)
    try:
        L = np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        return np.zeros_like(Q), False
    rhs = (TAU - bias)[..., None]
    y = np.linalg.solve(L, rhs)
    x = np.linalg.solve(np.swapaxes(L, -1, -2), y)
    return x[..., 0], True
