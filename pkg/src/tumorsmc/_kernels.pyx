# cython: language_level=3
"""Cython implementations of the hot nodewise and assembly kernels.

Mirrors `tumorsmc._kernels_py` exactly; see that module for the contract.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport cos, exp, sin

cnp.import_array()

BACKEND_NAME = "cython"

DEF PI = 3.141592653589793


cdef inline double _clamp1(double x) nogil:
    if x < -1.0:
        return -1.0
    if x > 1.0:
        return 1.0
    return x


def clamp_arr(double[::1] x, double[::1] out):
    cdef Py_ssize_t i, n = x.shape[0]
    for i in range(n):
        out[i] = _clamp1(x[i])
    return np.asarray(out)


def f_prolif_arr(double[::1] x, double[::1] out):
    cdef Py_ssize_t i, n = x.shape[0]
    for i in range(n):
        out[i] = 0.5 * (cos(PI * _clamp1(x[i])) + 1.0)
    return np.asarray(out)


def h_consume_arr(double[::1] x, double[::1] out):
    cdef Py_ssize_t i, n = x.shape[0]
    for i in range(n):
        out[i] = 0.5 * (sin(0.5 * PI * _clamp1(x[i])) + 1.0)
    return np.asarray(out)


def mobility_arr(double[::1] x, double m0, double m1, double[::1] out):
    cdef Py_ssize_t i, n = x.shape[0]
    cdef double dm = m1 - m0
    for i in range(n):
        out[i] = dm * 0.5 * (cos(PI * _clamp1(x[i])) + 1.0) + m0
    return np.asarray(out)


def g_nutrient_arr(double[::1] x, double m_cap, double theta, double[::1] out):
    cdef Py_ssize_t i, n = x.shape[0]
    cdef double v, z
    for i in range(n):
        v = x[i]
        if v <= 0.0:
            out[i] = 0.0
        elif v < theta:
            out[i] = v * v * (-v / (theta * theta) + 2.0 / theta)
        elif v <= m_cap - theta:
            out[i] = v
        elif v < m_cap:
            z = v - m_cap
            out[i] = -(z * z * z) / (theta * theta) - 2.0 * z * z / theta + m_cap
        else:
            out[i] = m_cap
    return np.asarray(out)


cdef inline double _smax(double x, double rho) nogil:
    cdef double xi
    if x <= -rho:
        return 0.0
    if x >= rho:
        return x
    xi = x / rho
    return 0.5 * (x + rho * (0.375 + 0.75 * xi * xi - 0.125 * xi * xi * xi * xi))


cdef inline double _smax_d(double x, double rho) nogil:
    cdef double xi
    if x <= -rho:
        return 0.0
    if x >= rho:
        return 1.0
    xi = x / rho
    return 0.5 * (1.0 + 1.5 * xi - 0.5 * xi * xi * xi)


cdef inline double _smax_anti(double x, double rho) nogil:
    cdef double xi
    if x <= -rho:
        return 0.0
    if x >= rho:
        return 0.5 * x * x + rho * rho / 10.0
    xi = x / rho
    return 0.25 * (x * x - rho * rho) + 0.5 * rho * rho * (
        0.375 * xi + 0.25 * xi * xi * xi - 0.025 * xi ** 5 + 0.6
    )


def lambda_arr(double[::1] phi, double rho, double[::1] out):
    cdef Py_ssize_t i, n = phi.shape[0]
    for i in range(n):
        out[i] = _smax(phi[i] - 1.0, rho) - _smax(-phi[i] - 1.0, rho)
    return np.asarray(out)


def dlambda_arr(double[::1] phi, double rho, double[::1] out):
    cdef Py_ssize_t i, n = phi.shape[0]
    for i in range(n):
        out[i] = _smax_d(phi[i] - 1.0, rho) + _smax_d(-phi[i] - 1.0, rho)
    return np.asarray(out)


def big_lambda_arr(double[::1] phi, double rho, double[::1] out):
    cdef Py_ssize_t i, n = phi.shape[0]
    for i in range(n):
        out[i] = _smax_anti(phi[i] - 1.0, rho) + _smax_anti(-phi[i] - 1.0, rho)
    return np.asarray(out)


def psi_arr(double[::1] phi, double s, double rho, double[::1] out):
    cdef Py_ssize_t i, n = phi.shape[0]
    cdef double lam
    for i in range(n):
        lam = _smax_anti(phi[i] - 1.0, rho) + _smax_anti(-phi[i] - 1.0, rho)
        out[i] = 0.5 * (1.0 - phi[i] * phi[i]) + 0.5 * s * lam
    return np.asarray(out)


def psi_prime_arr(double[::1] phi, double s, double rho, double[::1] out):
    cdef Py_ssize_t i, n = phi.shape[0]
    for i in range(n):
        out[i] = -phi[i] + 0.5 * s * (_smax(phi[i] - 1.0, rho) - _smax(-phi[i] - 1.0, rho))
    return np.asarray(out)


def psi_second_arr(double[::1] phi, double s, double rho, double[::1] out):
    cdef Py_ssize_t i, n = phi.shape[0]
    for i in range(n):
        out[i] = -1.0 + 0.5 * s * (_smax_d(phi[i] - 1.0, rho) + _smax_d(-phi[i] - 1.0, rho))
    return np.asarray(out)


def scatter_stiffness(double[::1] wbar, double[:, :, ::1] gk,
                      long[:, ::1] slots, double[::1] data):
    cdef Py_ssize_t t, a, nt = wbar.shape[0], m = data.shape[0]
    cdef double w
    for t in range(m):
        data[t] = 0.0
    for t in range(nt):
        w = wbar[t]
        for a in range(9):
            data[slots[t, a]] += w * gk[t, a // 3, a % 3]
    return np.asarray(data)


def scatter_weighted_mass(double[:, ::1] wtri, double[::1] area,
                          long[:, ::1] slots, double[::1] data):
    cdef Py_ssize_t t, nt = area.shape[0], m = data.shape[0]
    cdef double w0, w1, w2, ar
    cdef double v00, v11, v22, v01, v02, v12
    cdef double tenth = 0.1, th = 1.0 / 30.0, sx = 1.0 / 60.0
    for t in range(m):
        data[t] = 0.0
    for t in range(nt):
        w0 = wtri[t, 0]; w1 = wtri[t, 1]; w2 = wtri[t, 2]
        ar = area[t]
        v00 = ar * (tenth * w0 + th * (w1 + w2))
        v11 = ar * (tenth * w1 + th * (w0 + w2))
        v22 = ar * (tenth * w2 + th * (w0 + w1))
        v01 = ar * (th * (w0 + w1) + sx * w2)
        v02 = ar * (th * (w0 + w2) + sx * w1)
        v12 = ar * (th * (w1 + w2) + sx * w0)
        data[slots[t, 0]] += v00
        data[slots[t, 1]] += v01
        data[slots[t, 2]] += v02
        data[slots[t, 3]] += v01
        data[slots[t, 4]] += v11
        data[slots[t, 5]] += v12
        data[slots[t, 6]] += v02
        data[slots[t, 7]] += v12
        data[slots[t, 8]] += v22
    return np.asarray(data)


def tri_mean(double[::1] w, long[:, ::1] tris, double[::1] out):
    cdef Py_ssize_t t, nt = tris.shape[0]
    cdef double third = 1.0 / 3.0
    for t in range(nt):
        out[t] = (w[tris[t, 0]] + w[tris[t, 1]] + w[tris[t, 2]]) * third
    return np.asarray(out)
