"""Brute-force reference implementations used only by the tests.

Everything here works on interior arrays with explicit index arithmetic
(periodic wrap, wall reflection) and dense linear algebra, so it shares no
code path with the vectorised package operators.
"""
import math

import numpy as np


def div_oracle(U, V, dx, dy):
    ny, nx = U.shape
    out = np.zeros((ny, nx))
    for j in range(ny):
        for i in range(nx):
            out[j, i] = (U[j, (i + 1) % nx] - U[j, i]) / dx + (V[j + 1, i] - V[j, i]) / dy
    return out


def grad_oracle(P, dx, dy):
    ny, nx = P.shape
    gx = np.zeros((ny, nx))
    gy = np.zeros((ny + 1, nx))
    for j in range(ny):
        for i in range(nx):
            gx[j, i] = (P[j, i] - P[j, (i - 1) % nx]) / dx
    for j in range(1, ny):
        for i in range(nx):
            gy[j, i] = (P[j, i] - P[j - 1, i]) / dy
    return gx, gy


def dense_laplacian(nx, ny, dx, dy, kind):
    """Matrix of the 5-point Laplacian on the unknowns of ``kind``.

    Unknown ordering is row-major over (j, i). For ``v`` the unknowns are
    the interior faces j = 1..ny-1 only.
    """
    rows = ny - 1 if kind == "v" else ny
    n = rows * nx
    A = np.zeros((n, n))

    def idx(j, i):
        return j * nx + (i % nx)

    for j in range(rows):
        for i in range(nx):
            r = idx(j, i)
            A[r, idx(j, i - 1)] += 1 / dx**2
            A[r, idx(j, i + 1)] += 1 / dx**2
            A[r, r] -= 2 / dx**2
            for nb in (j - 1, j + 1):
                if 0 <= nb < rows:
                    A[r, idx(nb, i)] += 1 / dy**2
                    A[r, r] -= 1 / dy**2
                elif kind == "p":
                    pass  # zero-flux wall: no contribution
                elif kind in ("theta", "u"):
                    A[r, r] -= 2 / dy**2  # ghost = -interior, so -1 - 1
                elif kind == "v":
                    A[r, r] -= 1 / dy**2  # wall value is zero
    return A


def dense_poisson(rhs, dx, dy):
    """Zero-mean solution of the Neumann Poisson problem via a bordered system."""
    ny, nx = rhs.shape
    L = dense_laplacian(nx, ny, dx, dy, "p")
    n = L.shape[0]
    M = np.zeros((n + 1, n + 1))
    M[:n, :n] = L
    M[:n, n] = 1.0
    M[n, :n] = 1.0
    b = np.concatenate([rhs.ravel() - rhs.mean(), [0.0]])
    return np.linalg.solve(M, b)[:n].reshape(ny, nx)


def dense_helmholtz(rhs, gamma, kind, dx, dy):
    ny_rows, nx = rhs.shape
    if kind == "v":
        ny = ny_rows - 1
        L = dense_laplacian(nx, ny, dx, dy, "v")
        out = np.zeros_like(rhs)
        out[1:-1] = np.linalg.solve(np.eye(L.shape[0]) - gamma * L, rhs[1:-1].ravel()).reshape(ny - 1, nx)
        return out
    L = dense_laplacian(nx, ny_rows, dx, dy, kind)
    return np.linalg.solve(np.eye(L.shape[0]) - gamma * L, rhs.ravel()).reshape(rhs.shape)


def tendency_oracle(U, V, T, Pr, dx, dy):
    """Convective and linear tendencies by explicit per-point stencils."""
    ny, nx = U.shape

    def Uf(j, i):
        if j < 0:
            return -U[0, i % nx]
        if j >= ny:
            return -U[ny - 1, i % nx]
        return U[j, i % nx]

    def Tf(j, i):
        if j < 0:
            return -T[0, i % nx]
        if j >= ny:
            return -T[ny - 1, i % nx]
        return T[j, i % nx]

    def Vf(j, i):
        return V[j, i % nx]

    cu = np.zeros((ny, nx))
    cv = np.zeros((ny + 1, nx))
    ct = np.zeros((ny, nx))
    lv = np.zeros((ny + 1, nx))
    lt = np.zeros((ny, nx))
    for j in range(ny):
        for i in range(nx):
            ucr = 0.5 * (Uf(j, i) + Uf(j, i + 1))
            ucl = 0.5 * (Uf(j, i - 1) + Uf(j, i))
            top = 0.5 * (Uf(j, i) + Uf(j + 1, i)) * 0.5 * (Vf(j + 1, i - 1) + Vf(j + 1, i))
            bot = 0.5 * (Uf(j - 1, i) + Uf(j, i)) * 0.5 * (Vf(j, i - 1) + Vf(j, i))
            cu[j, i] = -((ucr**2 - ucl**2) / dx + (top - bot) / dy)

            fxr = Uf(j, i + 1) * 0.5 * (Tf(j, i) + Tf(j, i + 1))
            fxl = Uf(j, i) * 0.5 * (Tf(j, i - 1) + Tf(j, i))
            fyt = Vf(j + 1, i) * 0.5 * (Tf(j, i) + Tf(j + 1, i))
            fyb = Vf(j, i) * 0.5 * (Tf(j - 1, i) + Tf(j, i))
            ct[j, i] = -((fxr - fxl) / dx + (fyt - fyb) / dy)
            lt[j, i] = 0.5 * (Vf(j, i) + Vf(j + 1, i))
    for j in range(1, ny):
        for i in range(nx):
            right = 0.5 * (Uf(j - 1, i + 1) + Uf(j, i + 1)) * 0.5 * (Vf(j, i) + Vf(j, i + 1))
            left = 0.5 * (Uf(j - 1, i) + Uf(j, i)) * 0.5 * (Vf(j, i - 1) + Vf(j, i))
            vct = 0.5 * (Vf(j, i) + Vf(j + 1, i))
            vcb = 0.5 * (Vf(j - 1, i) + Vf(j, i))
            cv[j, i] = -((right - left) / dx + (vct**2 - vcb**2) / dy)
            lv[j, i] = Pr * 0.5 * (Tf(j - 1, i) + Tf(j, i))
    return (cu, cv, ct), (np.zeros((ny, nx)), lv, lt)


def dense_step(U, V, T, Ra, Pr, dt, dx, dy, previous=None, nudge=None):
    """Straight-line version of one solver step. Returns (U, V, T, P, conv)."""
    conv, lin = tendency_oracle(U, V, T, Pr, dx, dy)
    if previous is None:
        adv = conv
    else:
        adv = tuple(1.5 * c - 0.5 * p for c, p in zip(conv, previous))
    if nudge is None:
        nudge = tuple(np.zeros_like(a) for a in (U, V, T))
    Us = U + dt * (adv[0] + lin[0] + nudge[0])
    Vs = V + dt * (adv[1] + lin[1] + nudge[1])
    Ts = T + dt * (adv[2] + lin[2] + nudge[2])
    gv = Pr * dt / math.sqrt(Ra)
    gt = dt / math.sqrt(Ra)
    Uss = dense_helmholtz(Us, gv, "u", dx, dy)
    Vss = dense_helmholtz(Vs, gv, "v", dx, dy)
    Tn = dense_helmholtz(Ts, gt, "theta", dx, dy)
    P = dense_poisson(div_oracle(Uss, Vss, dx, dy) / dt, dx, dy)
    gx, gy = grad_oracle(P, dx, dy)
    return Uss - dt * gx, Vss - dt * gy, Tn, P, conv
