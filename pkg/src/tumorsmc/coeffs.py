"""Scalar nonlinearities of the tumour-growth model.

Proliferation interpolant f, nutrient saturation g, consumption interpolant
h, degenerate-in-the-bulk mobility m, the relaxed double-obstacle potential
Psi with its first two derivatives, and the radially symmetric initial
profile for the order parameter.

All functions accept floats or float64 arrays and are pure.  Array inputs
are evaluated by the selected kernel backend; scalars go through the same
code path and come back as floats.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._backend import kernels


@dataclass(frozen=True)
class CoeffConfig:
    """Coefficient constants.

    s: obstacle stiffness of the relaxed double-obstacle potential.
    rho: smoothing width of the max/min regularization.
    m_cap: nutrient saturation ceiling of g.
    theta: width of the C^1 blending zones of g.
    m0: bulk mobility floor.
    m1: interface mobility.
    eps: interface thickness.
    """

    s: float = 1.0e4
    rho: float = 1.0e-3
    m_cap: float = 10.0
    theta: float = 0.01
    m0: float = 5.0e-6
    m1: float = 0.05
    eps: float = 0.05

    def validate(self) -> None:
        if not self.s > 1.0:
            raise ValueError(f"obstacle stiffness s must exceed 1, got {self.s}")
        if not 0.0 < self.rho < 1.0:
            raise ValueError(f"smoothing width rho must lie in (0, 1), got {self.rho}")
        if not 0.0 < self.theta < self.m_cap / 2.0:
            raise ValueError(
                f"g smoothing width theta must lie in (0, m_cap/2), got {self.theta}"
            )
        if not 0.0 < self.m0 <= self.m1:
            raise ValueError(f"mobilities must satisfy 0 < m0 <= m1, got ({self.m0}, {self.m1})")
        if not self.eps > 0.0:
            raise ValueError(f"interface thickness eps must be positive, got {self.eps}")


def _dispatch(fn, x, *params):
    """Run a kernel on an array, or on a scalar via a length-1 array."""
    if np.ndim(x) == 0:
        buf = np.array([float(x)])
        return float(fn(buf, *params, np.empty(1))[0])
    x = np.ascontiguousarray(x, dtype=np.float64)
    return fn(x, *params, np.empty_like(x))


def clamp(x):
    """q(s) = min(1, max(s, -1))."""
    return _dispatch(kernels.clamp_arr, x)


def f_prolif(x):
    """f(s) = (cos(pi q(s)) + 1) / 2, the proliferation interpolant in [0, 1]."""
    return _dispatch(kernels.f_prolif_arr, x)


def h_consume(x):
    """h(s) = (sin(pi q(s) / 2) + 1) / 2, the consumption interpolant in [0, 1]."""
    return _dispatch(kernels.h_consume_arr, x)


def mobility(x, cfg: CoeffConfig = CoeffConfig()):
    """m(s) = (m1 - m0) f(s) + m0: large on the interface, nearly zero in bulk."""
    return _dispatch(kernels.mobility_arr, x, cfg.m0, cfg.m1)


def g_nutrient(x, cfg: CoeffConfig = CoeffConfig()):
    """Nutrient available for proliferation, saturating at m_cap.

    Zero for s <= 0, the identity on [theta, m_cap - theta], constant m_cap
    for s >= m_cap, with C^1 cubic blends on the two transition zones.
    """
    return _dispatch(kernels.g_nutrient_arr, x, cfg.m_cap, cfg.theta)


def smooth_maxmin(x, rho: float):
    """Regularized (max_rho(0, x), min_rho(0, x)).

    Outside |x| < rho these equal max(0, x) and min(0, x) exactly.  Inside,
    max_rho blends 0 and x with the quartic (x + rho A(x/rho)) / 2,
    A(t) = 3/8 + 3 t^2 / 4 - t^4 / 8, which matches value, slope, and
    curvature of both outer branches at +-rho.  min_rho(0, x) is defined by
    the reflection -max_rho(0, -x).
    """
    if np.ndim(x) == 0:
        xa = np.array([float(x)])
        return float(_smooth_max(xa, rho)[0]), float(-_smooth_max(-xa, rho)[0])
    x = np.ascontiguousarray(x, dtype=np.float64)
    return _smooth_max(x, rho), -_smooth_max(-x, rho)


def _smooth_max(x, rho):
    xi = x / rho
    blend = 0.5 * (x + rho * (0.375 + 0.75 * xi**2 - 0.125 * xi**4))
    return np.where(x <= -rho, 0.0, np.where(x >= rho, x, blend))


def psi(phi, cfg: CoeffConfig = CoeffConfig()):
    """Relaxed double-obstacle potential (1 - phi^2) / 2 + s Lambda_rho(phi) / 2.

    Lambda_rho is the exact antiderivative, normalized to Lambda_rho(0) = 0,
    of lambda_rho(phi) = max_rho(0, phi - 1) + min_rho(0, phi + 1).
    """
    return _dispatch(kernels.psi_arr, phi, cfg.s, cfg.rho)


def psi_prime(phi, cfg: CoeffConfig = CoeffConfig()):
    """Psi'(phi) = -phi + s lambda_rho(phi) / 2."""
    return _dispatch(kernels.psi_prime_arr, phi, cfg.s, cfg.rho)


def psi_second(phi, cfg: CoeffConfig = CoeffConfig()):
    """Psi''(phi) = -1 + s lambda_rho'(phi) / 2."""
    return _dispatch(kernels.psi_second_arr, phi, cfg.s, cfg.rho)


def phi0_profile(z, cfg: CoeffConfig = CoeffConfig()):
    """One-dimensional interface profile used for the initial order parameter.

    For z >= 0, a sine arc up to z0 = arctan(sqrt(s - 1)) followed by an
    exponential approach to the bulk value s / (s - 1); odd in z.  The two
    branches join with value 1 and matching slope at z0.
    """
    s = cfg.s
    z = np.asarray(z, dtype=np.float64)
    z0 = np.arctan(np.sqrt(s - 1.0))
    az = np.abs(z)
    inner = np.sqrt(s / (s - 1.0)) * np.sin(az)
    # exp argument is nonpositive where the branch is selected; clip the
    # unselected side to avoid overflow inside np.where
    outer = (s - np.exp(np.clip(np.sqrt(s - 1.0) * (z0 - az), None, 0.0))) / (s - 1.0)
    v = np.sign(z) * np.where(az <= z0, inner, outer)
    return float(v) if v.ndim == 0 else v


def initial_phi(x, cfg: CoeffConfig = CoeffConfig()):
    """phi_0(x) = Phi0((1 - |x|_l8) / eps): +1 inside the l8 unit ball, -1 outside.

    x is one point (length-2) or an (n, 2) array of points.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    pts = x[None, :] if single else x
    l8 = (pts[:, 0] ** 8 + pts[:, 1] ** 8) ** 0.125
    v = phi0_profile((1.0 - l8) / cfg.eps, cfg)
    return float(v[0]) if single else v


def initial_sigma(x, cfg: CoeffConfig = CoeffConfig()):
    """sigma_0 is identically 1."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        return 1.0
    return np.ones(len(x))
