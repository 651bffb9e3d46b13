"""Priors, noise models, synthetic data, and misfit potentials.

The prior is a componentwise truncated Gaussian on the parameter box
[0, a_1] x [0, a_2] x [0, a_3].  Two observation settings are supported:

  a: the full phase field at final time, unit covariance scaled by
     sigma_a^2 in the mesh-weighted L2 inner product;
  b: tumour volumes at a list of observation times, independent Gaussian
     noise with per-time variances.

Potentials drop the data-only quadratic term, so they can be negative;
only potential differences enter the inversion, and those match the full
least-squares misfit exactly.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import ndtr, ndtri

from .fem import Mesh, l2_inner, get_assembler
from .forward import ForwardOperator, ModelParams

_SQRT2PI = math.sqrt(2.0 * math.pi)


def _npdf(z):
    return np.exp(-0.5 * z * z) / _SQRT2PI


@dataclass(frozen=True)
class TruncGaussPrior:
    """Product of Gaussians N(loc_i, scale_i^2) truncated to [0, upper_i]."""

    upper: tuple[float, float, float]
    loc: tuple[float, float, float]
    scale: tuple[float, float, float]

    def validate(self) -> "TruncGaussPrior":
        for a, b, c in zip(self.upper, self.loc, self.scale):
            if not (a > 0 and math.isfinite(a)):
                raise ValueError(f"upper bound must be positive and finite, got {a}")
            if not (c > 0 and math.isfinite(c)):
                raise ValueError(f"scale must be positive and finite, got {c}")
            if not math.isfinite(b):
                raise ValueError(f"location must be finite, got {b}")
        return self

    def _setup(self):
        a = np.asarray(self.upper, dtype=np.float64)
        b = np.asarray(self.loc, dtype=np.float64)
        c = np.asarray(self.scale, dtype=np.float64)
        alpha = (0.0 - b) / c
        beta = (a - b) / c
        z = ndtr(beta) - ndtr(alpha)
        return a, b, c, alpha, beta, z

    def logdensity(self, u) -> float:
        """Log of the normalized prior density; -inf outside the box."""
        u = np.asarray(u, dtype=np.float64)
        a, b, c, alpha, beta, z = self._setup()
        if np.any(u < 0.0) or np.any(u > a):
            return -math.inf
        t = (u - b) / c
        return float(np.sum(-0.5 * t * t - np.log(c) - np.log(_SQRT2PI) - np.log(z)))

    def log_unnormalized_ratio(self, u_new, u_old) -> float:
        """log density(u_new) - log density(u_old); -inf if u_new leaves the box.

        Both points inside the box reduce to the untruncated Gaussian ratio.
        """
        u_new = np.asarray(u_new, dtype=np.float64)
        a = np.asarray(self.upper, dtype=np.float64)
        if np.any(u_new < 0.0) or np.any(u_new > a):
            return -math.inf
        b = np.asarray(self.loc, dtype=np.float64)
        c = np.asarray(self.scale, dtype=np.float64)
        tn = (u_new - b) / c
        to = (np.asarray(u_old, dtype=np.float64) - b) / c
        return float(0.5 * np.sum(to * to - tn * tn))

    def sample(self, rng: np.random.Generator, n: int | None = None) -> np.ndarray:
        """Inverse-CDF sampling; returns shape (3,) or (n, 3)."""
        a, b, c, alpha, beta, z = self._setup()
        shape = (3,) if n is None else (n, 3)
        u = rng.random(shape)
        return b + c * ndtri(ndtr(alpha) + u * z)

    def moments(self) -> tuple[np.ndarray, np.ndarray]:
        """Exact mean and variance per coordinate of the truncated Gaussian."""
        a, b, c, alpha, beta, z = self._setup()
        pa, pb = _npdf(alpha), _npdf(beta)
        mean = b + c * (pa - pb) / z
        var = c * c * (1.0 + (alpha * pa - beta * pb) / z - ((pa - pb) / z) ** 2)
        return mean, var

    def in_box(self, u) -> bool:
        u = np.asarray(u, dtype=np.float64)
        a = np.asarray(self.upper, dtype=np.float64)
        return bool(np.all(u >= 0.0) and np.all(u <= a))

    def mode(self) -> np.ndarray:
        """Argmax of the density: locations clipped to the box."""
        a = np.asarray(self.upper, dtype=np.float64)
        return np.clip(np.asarray(self.loc, dtype=np.float64), 0.0, a)


@dataclass(frozen=True)
class NoiseModel:
    """Observation noise covariance for one of the two settings."""

    setting: str
    sigma_a2: float = 0.1
    sigma_b2: tuple[float, ...] = ()

    def validate(self) -> "NoiseModel":
        if self.setting not in ("a", "b"):
            raise ValueError(f"setting must be 'a' or 'b', got {self.setting!r}")
        if self.setting == "a" and not self.sigma_a2 > 0:
            raise ValueError(f"sigma_a2 must be positive, got {self.sigma_a2}")
        if self.setting == "b":
            if len(self.sigma_b2) == 0 or any(v <= 0 for v in self.sigma_b2):
                raise ValueError("sigma_b2 must be a nonempty tuple of positive variances")
        return self


@dataclass
class DataA:
    """Final-time field observation with generation metadata."""

    y: np.ndarray
    mesh_descriptor: dict
    seed: int | None = None
    truth: tuple[float, float, float] | None = None
    noise_std: float | None = None

    def save(self, path) -> None:
        path = Path(path)
        np.savetxt(path, self.y, fmt="%.17g")
        meta = {
            "kind": "field_observation",
            "mesh": self.mesh_descriptor,
            "seed": self.seed,
            "truth": list(self.truth) if self.truth is not None else None,
            "noise_std": self.noise_std,
        }
        path.with_suffix(path.suffix + ".json").write_text(json.dumps(meta, indent=2))

    @staticmethod
    def load(path) -> "DataA":
        path = Path(path)
        y = np.loadtxt(path)
        meta = json.loads(path.with_suffix(path.suffix + ".json").read_text())
        truth = tuple(meta["truth"]) if meta.get("truth") else None
        return DataA(y, meta["mesh"], meta.get("seed"), truth, meta.get("noise_std"))


@dataclass
class DataB:
    """Volume observations: times, values, and per-time noise variances."""

    times: np.ndarray
    y: np.ndarray
    sigma_b2: np.ndarray

    def save(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "y", "sigma_b2"])
            for t, y, v in zip(self.times, self.y, self.sigma_b2):
                w.writerow([f"{t:.17g}", f"{y:.17g}", f"{v:.17g}"])

    @staticmethod
    def load(path) -> "DataB":
        times, ys, vs = [], [], []
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                times.append(float(row["t"]))
                ys.append(float(row["y"]))
                vs.append(float(row["sigma_b2"]))
        return DataB(np.array(times), np.array(ys), np.array(vs))


def potential_a(u, data: DataA, noise: NoiseModel, phi_final: np.ndarray, mesh: Mesh) -> float:
    """Field misfit (||G||^2 - 2<G, y>) / (2 sigma_a^2) in the L2 inner product."""
    M = get_assembler(mesh).mass
    g = np.asarray(phi_final, dtype=np.float64)
    return (l2_inner(M, g, g) - 2.0 * l2_inner(M, g, data.y)) / (2.0 * noise.sigma_a2)


def potential_b(u, data: DataB, noise: NoiseModel, volumes: np.ndarray) -> float:
    """Volume misfit sum_j (l_j^2 - 2 y_j l_j) / (2 sigma_b2_j)."""
    l = np.asarray(volumes, dtype=np.float64)
    v = np.asarray(noise.sigma_b2, dtype=np.float64)
    if l.shape != data.y.shape or l.shape != v.shape:
        raise ValueError(
            f"observation length mismatch: model {l.shape}, data {data.y.shape}, noise {v.shape}"
        )
    return float(np.sum((l * l - 2.0 * data.y * l) / (2.0 * v)))


def tempered_potential(beta: float, potential_value: float) -> float:
    """Scale a misfit by inverse temperature beta in [0, 1]."""
    if not 0.0 <= beta <= 1.0:
        raise ValueError(f"beta must lie in [0, 1], got {beta}")
    return beta * potential_value


def gen_synthetic_a(
    op: ForwardOperator,
    truth: ModelParams,
    noise_std: float,
    rng: np.random.Generator,
) -> DataA:
    """Simulate at the true parameters and corrupt the final field nodewise."""
    result = op.simulate(truth)
    y = result.state.phi.values + noise_std * rng.standard_normal(op.mesh.n_nodes)
    return DataA(
        y,
        op.mesh.descriptor(),
        seed=None,
        truth=(truth.P, truth.chi, truth.C),
        noise_std=noise_std,
    )


def gen_synthetic_b(
    op: ForwardOperator,
    truth: ModelParams,
    sigma_b2,
    rng: np.random.Generator,
) -> DataB:
    """Simulate at the true parameters and corrupt the observed volumes."""
    result = op.simulate(truth)
    v = np.asarray(sigma_b2, dtype=np.float64)
    times = np.asarray(op.grid.obs_times, dtype=np.float64)
    if v.shape != times.shape:
        raise ValueError(f"need one variance per observation time, got {v.shape} for {times.shape}")
    y = result.volumes + np.sqrt(v) * rng.standard_normal(len(times))
    return DataB(times, y, v)
