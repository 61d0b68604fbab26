"""Compiled inner loops for the planar rigid-body model.

State layout (8,): x, y, psi, u, v, r, m, izz.
Force layout (3,): fx, fy, mz in the body frame.
Friction layout (3,): c_translation, c_rotation, bias_cross.

Everything here works on plain float64 arrays so numba can compile it; the
public, typed surface lives in :mod:`inertial_id.dynamics`.
"""

import numpy as np
from numba import njit

IX, IY, IPSI, IU, IV, IR, IM, IIZZ = range(8)
N_STATE = 8


@njit(cache=True)
def deriv(x, f, fr, rotated):
    u = x[IU]
    v = x[IV]
    r = x[IR]
    m = x[IM]
    izz = x[IIZZ]
    out = np.zeros(N_STATE)
    if rotated:
        c = np.cos(x[IPSI])
        s = np.sin(x[IPSI])
        out[IX] = u * c - v * s
        out[IY] = u * s + v * c
    else:
        out[IX] = u
        out[IY] = v
    out[IPSI] = r
    out[IU] = f[0] / m + r * v - fr[0] * u / m
    out[IV] = f[1] / m - r * u - fr[0] * v / m
    speed = np.sqrt(u * u + v * v)
    out[IR] = (f[2] - fr[1] * r + fr[2] * speed) / izz
    return out


@njit(cache=True)
def jac(x, f, fr, rotated):
    u = x[IU]
    v = x[IV]
    r = x[IR]
    m = x[IM]
    izz = x[IIZZ]
    a = np.zeros((N_STATE, N_STATE))
    if rotated:
        c = np.cos(x[IPSI])
        s = np.sin(x[IPSI])
        a[IX, IPSI] = -u * s - v * c
        a[IX, IU] = c
        a[IX, IV] = -s
        a[IY, IPSI] = u * c - v * s
        a[IY, IU] = s
        a[IY, IV] = c
    else:
        a[IX, IU] = 1.0
        a[IY, IV] = 1.0
    a[IPSI, IR] = 1.0

    a[IU, IU] = -fr[0] / m
    a[IU, IV] = r
    a[IU, IR] = v
    a[IU, IM] = -(f[0] - fr[0] * u) / (m * m)

    a[IV, IU] = -r
    a[IV, IV] = -fr[0] / m
    a[IV, IR] = -u
    a[IV, IM] = -(f[1] - fr[0] * v) / (m * m)

    speed = np.sqrt(u * u + v * v)
    if speed > 0.0:
        a[IR, IU] = fr[2] * u / (speed * izz)
        a[IR, IV] = fr[2] * v / (speed * izz)
    a[IR, IR] = -fr[1] / izz
    a[IR, IIZZ] = -(f[2] - fr[1] * r + fr[2] * speed) / (izz * izz)
    return a


@njit(cache=True)
def rk4_step(x, f, fr, rotated, h):
    k1 = deriv(x, f, fr, rotated)
    k2 = deriv(x + 0.5 * h * k1, f, fr, rotated)
    k3 = deriv(x + 0.5 * h * k2, f, fr, rotated)
    k4 = deriv(x + h * k3, f, fr, rotated)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


@njit(cache=True)
def rk4_step_stm(x, phi, f, fr, rotated, h):
    k1 = deriv(x, f, fr, rotated)
    p1 = jac(x, f, fr, rotated) @ phi
    x2 = x + 0.5 * h * k1
    k2 = deriv(x2, f, fr, rotated)
    p2 = jac(x2, f, fr, rotated) @ (phi + 0.5 * h * p1)
    x3 = x + 0.5 * h * k2
    k3 = deriv(x3, f, fr, rotated)
    p3 = jac(x3, f, fr, rotated) @ (phi + 0.5 * h * p2)
    x4 = x + h * k3
    k4 = deriv(x4, f, fr, rotated)
    p4 = jac(x4, f, fr, rotated) @ (phi + h * p3)
    xn = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    pn = phi + (h / 6.0) * (p1 + 2.0 * p2 + 2.0 * p3 + p4)
    return xn, pn


@njit(cache=True)
def propagate_grid(x0, hs, forces, fr, rotated, kicks):
    """RK4 over steps ``hs``; ``kicks`` (K, 3) are added to (u, v, r) after each step."""
    k = hs.shape[0]
    out = np.empty((k + 1, N_STATE))
    out[0] = x0
    x = x0.copy()
    add_kicks = kicks.shape[0] == k
    for i in range(k):
        x = rk4_step(x, forces[i], fr, rotated, hs[i])
        if add_kicks:
            x[IU] += kicks[i, 0]
            x[IV] += kicks[i, 1]
            x[IR] += kicks[i, 2]
        out[i + 1] = x
    return out


@njit(cache=True)
def propagate_grid_stm(x0, hs, forces, fr, rotated):
    k = hs.shape[0]
    xs = np.empty((k + 1, N_STATE))
    phis = np.empty((k + 1, N_STATE, N_STATE))
    x = x0.copy()
    phi = np.eye(N_STATE)
    xs[0] = x
    phis[0] = phi
    for i in range(k):
        x, phi = rk4_step_stm(x, phi, forces[i], fr, rotated, hs[i])
        xs[i + 1] = x
        phis[i + 1] = phi
    return xs, phis


@njit(cache=True)
def _sens_rate(x, s, f, fr, rotated):
    a = jac(x, f, fr, rotated)
    return np.ascontiguousarray(a[:6, :6]) @ s + a[:6, 6:]


@njit(cache=True)
def propagate_grid_sens(x0, hs, forces, fr, rotated):
    """Co-integrate the state and the 6x2 parameter sensitivity S = d(state)/d(m, izz)."""
    k = hs.shape[0]
    xs = np.empty((k + 1, N_STATE))
    ss = np.zeros((k + 1, 6, 2))
    x = x0.copy()
    s = np.zeros((6, 2))
    xs[0] = x
    for i in range(k):
        h = hs[i]
        f = forces[i]
        k1 = deriv(x, f, fr, rotated)
        q1 = _sens_rate(x, s, f, fr, rotated)
        x2 = x + 0.5 * h * k1
        k2 = deriv(x2, f, fr, rotated)
        q2 = _sens_rate(x2, s + 0.5 * h * q1, f, fr, rotated)
        x3 = x + 0.5 * h * k2
        k3 = deriv(x3, f, fr, rotated)
        q3 = _sens_rate(x3, s + 0.5 * h * q2, f, fr, rotated)
        x4 = x + h * k3
        k4 = deriv(x4, f, fr, rotated)
        q4 = _sens_rate(x4, s + h * q3, f, fr, rotated)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        s = s + (h / 6.0) * (q1 + 2.0 * q2 + 2.0 * q3 + q4)
        xs[i + 1] = x
        ss[i + 1] = s
    return xs, ss
