"""Pure NumPy implementations of the hot nodewise and assembly kernels.

This is the fallback backend; `tumorsmc._kernels` (Cython) implements the
same functions with identical semantics.  Selection happens in
`tumorsmc._backend` at import time.

All array functions take float64 1-D arrays and write into a preallocated
``out`` array of the same length, returning it.  Scalar coefficient
parameters come last so call sites read like the formulas.
"""

import numpy as np

BACKEND_NAME = "python"


def clamp_arr(x, out):
    """q(s) = min(1, max(s, -1))."""
    np.clip(x, -1.0, 1.0, out=out)
    return out


def f_prolif_arr(x, out):
    """f(s) = (cos(pi q(s)) + 1) / 2."""
    np.clip(x, -1.0, 1.0, out=out)
    np.multiply(out, np.pi, out=out)
    np.cos(out, out=out)
    out += 1.0
    out *= 0.5
    return out


def h_consume_arr(x, out):
    """h(s) = (sin(pi q(s) / 2) + 1) / 2."""
    np.clip(x, -1.0, 1.0, out=out)
    out *= 0.5 * np.pi
    np.sin(out, out=out)
    out += 1.0
    out *= 0.5
    return out


def mobility_arr(x, m0, m1, out):
    """m(s) = (m1 - m0) f(s) + m0."""
    f_prolif_arr(x, out)
    out *= m1 - m0
    out += m0
    return out


def g_nutrient_arr(x, m_cap, theta, out):
    """Piecewise C^1 saturation of the nutrient available for proliferation."""
    x = np.asarray(x)
    lo = x * x * (-x / theta**2 + 2.0 / theta)
    z = x - m_cap
    hi = -(z**3) / theta**2 - 2.0 * z**2 / theta + m_cap
    out[:] = np.where(
        x <= 0.0,
        0.0,
        np.where(
            x < theta,
            lo,
            np.where(x <= m_cap - theta, x, np.where(x < m_cap, hi, m_cap)),
        ),
    )
    return out


def _smooth_max_arr(x, rho):
    """max_rho(0, x): exact max outside |x| < rho, quartic Hermite blend inside."""
    xi = x / rho
    blend = 0.5 * (x + rho * (0.375 + 0.75 * xi**2 - 0.125 * xi**4))
    return np.where(x <= -rho, 0.0, np.where(x >= rho, x, blend))


def _smooth_max_deriv_arr(x, rho):
    xi = x / rho
    dblend = 0.5 * (1.0 + 1.5 * xi - 0.5 * xi**3)
    return np.where(x <= -rho, 0.0, np.where(x >= rho, 1.0, dblend))


def _smooth_max_anti_arr(x, rho):
    """Antiderivative of max_rho(0, .), normalized to 0 for x <= -rho."""
    xi = x / rho
    mid = 0.25 * (x * x - rho * rho) + 0.5 * rho * rho * (
        0.375 * xi + 0.25 * xi**3 - 0.025 * xi**5 + 0.6
    )
    hi = 0.5 * x * x + rho * rho / 10.0
    return np.where(x <= -rho, 0.0, np.where(x >= rho, hi, mid))


def lambda_arr(phi, rho, out):
    """lambda_rho(phi) = max_rho(0, phi-1) + min_rho(0, phi+1)."""
    out[:] = _smooth_max_arr(phi - 1.0, rho) - _smooth_max_arr(-phi - 1.0, rho)
    return out


def dlambda_arr(phi, rho, out):
    out[:] = _smooth_max_deriv_arr(phi - 1.0, rho) + _smooth_max_deriv_arr(-phi - 1.0, rho)
    return out


def big_lambda_arr(phi, rho, out):
    """Lambda_rho(phi) = integral of lambda_rho from 0, evaluated exactly."""
    out[:] = _smooth_max_anti_arr(phi - 1.0, rho) + _smooth_max_anti_arr(-phi - 1.0, rho)
    return out


def psi_arr(phi, s, rho, out):
    big_lambda_arr(phi, rho, out)
    out *= 0.5 * s
    out += 0.5 * (1.0 - phi * phi)
    return out


def psi_prime_arr(phi, s, rho, out):
    lambda_arr(phi, rho, out)
    out *= 0.5 * s
    out -= phi
    return out


def psi_second_arr(phi, s, rho, out):
    dlambda_arr(phi, rho, out)
    out *= 0.5 * s
    out -= 1.0
    return out


def scatter_stiffness(wbar, gk, slots, data):
    """data[slots[t, a]] += wbar[t] * gk[t, a] for the 9 local entries a."""
    data[:] = 0.0
    np.add.at(data, slots.ravel(), (wbar[:, None] * gk.reshape(len(wbar), 9)).ravel())
    return data


def scatter_weighted_mass(wtri, area, slots, data):
    """Weighted P1 mass entries, quadrature exact for cubics.

    Entry (i, j) on a triangle is area * sum_k w_k C[i,j,k] with
    C[i,i,i] = 1/10, C with two equal indices = 1/30, all distinct = 1/60.
    """
    nt = len(area)
    vals = np.empty((nt, 3, 3))
    w0, w1, w2 = wtri[:, 0], wtri[:, 1], wtri[:, 2]
    tenth, thirtieth, sixtieth = 0.1, 1.0 / 30.0, 1.0 / 60.0
    vals[:, 0, 0] = tenth * w0 + thirtieth * (w1 + w2)
    vals[:, 1, 1] = tenth * w1 + thirtieth * (w0 + w2)
    vals[:, 2, 2] = tenth * w2 + thirtieth * (w0 + w1)
    vals[:, 0, 1] = thirtieth * (w0 + w1) + sixtieth * w2
    vals[:, 0, 2] = thirtieth * (w0 + w2) + sixtieth * w1
    vals[:, 1, 2] = thirtieth * (w1 + w2) + sixtieth * w0
    vals[:, 1, 0] = vals[:, 0, 1]
    vals[:, 2, 0] = vals[:, 0, 2]
    vals[:, 2, 1] = vals[:, 1, 2]
    vals *= area[:, None, None]
    data[:] = 0.0
    np.add.at(data, slots.ravel(), vals.ravel())
    return data


def tri_mean(w, tris, out):
    """Per-triangle vertex mean of a nodal field."""
    out[:] = w[tris].mean(axis=1)
    return out
