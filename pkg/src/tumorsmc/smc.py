"""Adaptive-tempering sequential Monte Carlo over the parameter box.

The sampler moves a particle ensemble from the prior to the posterior
through tempered targets pi_beta ~ prior * exp(-beta * Phi), choosing each
inverse-temperature increment so the incremental weights hit a target
coefficient of variation, resampling systematically every stage, and
rejuvenating particles with a few random-walk Metropolis steps.

Every random draw comes from a counter-keyed Philox stream addressed by
(master seed, stage, particle, purpose), so results are bit-identical
regardless of worker count and runs can resume from checkpoints.
"""

from __future__ import annotations

import json
import logging
import math
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import minimize

from . import bayes
from .bayes import NoiseModel, TruncGaussPrior
from .fem import LinearSolveError, build_mesh
from .forward import (
    ForwardOperator,
    ModelParams,
    NewtonConfig,
    NonConvergence,
    TimeGrid,
)

logger = logging.getLogger("tumorsmc.smc")

_PURPOSE_INIT = 0
_PURPOSE_MUTATE = 1
_PURPOSE_RESAMPLE = 2
_PURPOSE_DATA = 3


def rng_stream(master_seed: int, stage: int, particle: int, purpose: int) -> np.random.Generator:
    """Independent deterministic stream for one (stage, particle, purpose)."""
    ss = np.random.SeedSequence((int(master_seed), int(stage), int(particle), int(purpose)))
    return np.random.Generator(np.random.Philox(ss))


def data_rng(master_seed: int) -> np.random.Generator:
    """Stream reserved for synthetic data generation under this seed."""
    return rng_stream(master_seed, 0, 0, _PURPOSE_DATA)


class SmcError(RuntimeError):
    pass


@dataclass(frozen=True)
class SmcConfig:
    """Sampler controls; defaults follow the full-scale study setup."""

    n_particles: int = 400
    cv_target: float = 0.25
    n_mut: int = 5
    proposal_scale: float = 0.5
    bisection_tol: float = 1e-3
    max_stages: int = 100
    workers: int = 1

    def validate(self) -> "SmcConfig":
        if self.n_particles < 2:
            raise ValueError(f"need at least 2 particles, got {self.n_particles}")
        if not self.cv_target > 0:
            raise ValueError(f"cv target must be positive, got {self.cv_target}")
        if self.n_mut < 0:
            raise ValueError(f"mutation step count must be nonnegative, got {self.n_mut}")
        if not self.proposal_scale > 0:
            raise ValueError(f"proposal scale must be positive, got {self.proposal_scale}")
        if not 0 < self.bisection_tol < 1:
            raise ValueError(f"bisection tolerance must lie in (0,1), got {self.bisection_tol}")
        if self.max_stages < 1:
            raise ValueError(f"stage budget must be at least 1, got {self.max_stages}")
        if self.workers < 1:
            raise ValueError(f"worker count must be at least 1, got {self.workers}")
        return self


@dataclass
class SmcDiagnostics:
    beta_schedule: list = field(default_factory=lambda: [0.0])
    cv_history: list = field(default_factory=list)
    ess_history: list = field(default_factory=list)
    error_bounds: list = field(default_factory=list)
    acceptance_rates: list = field(default_factory=list)
    stage_seconds: list = field(default_factory=list)
    log_evidence: float = 0.0

    def to_dict(self) -> dict:
        # Wall time stays out: serialized outputs must be a function of
        # (config, seed) alone, and timing is not.
        return {
            "beta_schedule": self.beta_schedule,
            "cv_history": self.cv_history,
            "ess_history": self.ess_history,
            "error_bounds": self.error_bounds,
            "acceptance_rates": self.acceptance_rates,
            "log_evidence": self.log_evidence,
        }

    @staticmethod
    def from_dict(d: dict) -> "SmcDiagnostics":
        out = SmcDiagnostics()
        out.beta_schedule = list(d["beta_schedule"])
        out.cv_history = list(d["cv_history"])
        out.ess_history = list(d["ess_history"])
        out.error_bounds = list(d["error_bounds"])
        out.acceptance_rates = list(d["acceptance_rates"])
        out.stage_seconds = [float("nan")] * len(out.cv_history)
        out.log_evidence = float(d["log_evidence"])
        return out


@dataclass
class Ensemble:
    """Particle system state after a completed stage."""

    u: np.ndarray
    potentials: np.ndarray
    weights: np.ndarray
    beta: float
    stage: int
    obs: list
    traj: list

    def validate(self) -> "Ensemble":
        n = len(self.u)
        if self.potentials.shape != (n,) or self.weights.shape != (n,):
            raise ValueError("ensemble arrays have inconsistent lengths")
        if np.any(self.weights < 0) or abs(self.weights.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be a simplex vector")
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"beta must lie in [0,1], got {self.beta}")
        return self


def normalize_weights_log(logw: np.ndarray) -> np.ndarray:
    """Normalize weights given in log space; invariant to constant shifts."""
    logw = np.asarray(logw, dtype=np.float64)
    w = np.exp(logw - logw.max())
    return w / w.sum()


def coeff_of_variation(weights: np.ndarray) -> float:
    """Ratio of standard deviation to mean; scale invariant."""
    w = np.asarray(weights, dtype=np.float64)
    m = w.mean()
    if m <= 0:
        raise ValueError("weights must have positive mean")
    return float(np.sqrt(np.mean((w / m - 1.0) ** 2)))


def ess(cv: float, n: int) -> float:
    """Effective sample size n / (1 + cv^2)."""
    return n / (1.0 + cv * cv)


def error_bound(cv: float, n: int) -> float:
    """Monte Carlo error bound 2 sqrt((1 + cv^2) / n)."""
    return 2.0 * math.sqrt((1.0 + cv * cv) / n)


def next_beta(potentials: np.ndarray, beta: float, cv_target: float, bisection_tol: float) -> float:
    """Smallest inverse temperature in (beta, 1] whose incremental weights
    hit the target coefficient of variation, found by bisection; returns 1
    when even the full remaining step stays below target."""
    phi = np.asarray(potentials, dtype=np.float64)
    shifted = phi - phi.min()

    def cv_at(b: float) -> float:
        return coeff_of_variation(np.exp(-(b - beta) * shifted))

    if cv_at(1.0) <= cv_target:
        return 1.0
    lo, hi = beta, 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        c = cv_at(mid)
        if abs(c - cv_target) <= bisection_tol:
            return mid
        if c > cv_target:
            hi = mid
        else:
            lo = mid
        if hi - lo < 1e-15:
            break
    return hi


def resample_systematic(weights: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Systematic resampling; offspring counts are floor(nW) or ceil(nW)."""
    w = np.asarray(weights, dtype=np.float64)
    n = len(w)
    cum = np.cumsum(w)
    cum /= cum[-1]
    cum[-1] = 1.0
    positions = (rng.random() + np.arange(n)) / n
    return np.searchsorted(cum, positions, side="right").astype(np.int64)


def posterior_param_stats(u: np.ndarray, weights: np.ndarray):
    """Weighted ensemble mean and covariance of the parameters."""
    w = np.asarray(weights, dtype=np.float64)
    w = w / w.sum()
    u = np.asarray(u, dtype=np.float64)
    mean = w @ u
    d = u - mean
    cov = (d * w[:, None]).T @ d
    return mean, cov


def posterior_field_stats(fields, weights):
    """Nodewise weighted mean and variance over cached model outputs."""
    a = np.asarray(fields, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    w = w / w.sum()
    mean = w @ a
    var = w @ (a - mean) ** 2
    return mean, var


class PdeModel:
    """Forward map plus misfit for the tumour-growth inversion.

    Picklable: the assembled operator is rebuilt lazily per process.
    """

    def __init__(self, domain, nx, ny, coeff_cfg, grid: TimeGrid, newton: NewtonConfig,
                 setting: str, data, noise: NoiseModel, warm_start: bool = True):
        self.domain = tuple(domain)
        self.nx, self.ny = nx, ny
        self.coeff_cfg = coeff_cfg
        self.grid = grid
        self.newton = newton
        self.setting = setting
        self.data = data
        self.noise = noise
        self.warm_start = warm_start
        self._op = None

    def __getstate__(self):
        d = self.__dict__.copy()
        d["_op"] = None
        return d

    @property
    def op(self) -> ForwardOperator:
        if self._op is None:
            mesh = build_mesh(self.domain, self.nx, self.ny)
            self._op = ForwardOperator(mesh, self.coeff_cfg, self.grid, newton=self.newton)
        return self._op

    def evaluate(self, u, warm=None):
        """Potential, observation cache, and warm-start trajectory at u."""
        params = ModelParams.from_array(u)
        result = self.op.simulate(
            params,
            warm_trajectory=warm if self.warm_start else None,
            record_trajectory=self.warm_start,
        )
        if self.setting == "a":
            g = result.state.phi.values
            pot = bayes.potential_a(u, self.data, self.noise, g, self.op.mesh)
            obs = g.copy()
        else:
            pot = bayes.potential_b(u, self.data, self.noise, result.volumes)
            obs = result.volumes.copy()
        return pot, obs, result.trajectory


class LinearGaussModel:
    """Synthetic linear forward map G(u) = A u with iid Gaussian noise.

    Used to validate the sampler against the conjugate closed form.
    """

    def __init__(self, a_matrix, y, gamma2: float):
        self.a_matrix = np.asarray(a_matrix, dtype=np.float64)
        self.y = np.asarray(y, dtype=np.float64)
        self.gamma2 = float(gamma2)

    def evaluate(self, u, warm=None):
        g = self.a_matrix @ np.asarray(u, dtype=np.float64)
        pot = float(g @ g - 2.0 * self.y @ g) / (2.0 * self.gamma2)
        return pot, g, None


_WORKER_MODEL = None


def _worker_init(model):
    global _WORKER_MODEL
    _WORKER_MODEL = model


def _eval_init_task(args):
    i, u = args
    pot, obs, traj = _WORKER_MODEL.evaluate(u, None)
    return i, pot, obs, traj


def _mutate_task(args):
    (i, u, pot, obs, traj, beta, scale, n_mut, master_seed, stage, prior) = args
    rng = rng_stream(master_seed, stage, i, _PURPOSE_MUTATE)
    accepts = 0
    for _ in range(n_mut):
        z = rng.standard_normal(3)
        u_prop = u + scale * z
        log_prior_ratio = prior.log_unnormalized_ratio(u_prop, u)
        if log_prior_ratio == -math.inf:
            continue
        try:
            pot_prop, obs_prop, traj_prop = _WORKER_MODEL.evaluate(u_prop, warm=traj)
        except (NonConvergence, LinearSolveError) as exc:
            warnings.warn(
                f"forward solve failed during mutation at {u_prop}: {exc}; proposal rejected"
            )
            continue
        log_alpha = beta * (pot - pot_prop) + log_prior_ratio
        if log_alpha >= 0.0 or math.log(rng.random()) < log_alpha:
            u, pot, obs, traj = u_prop, pot_prop, obs_prop, traj_prop
            accepts += 1
    return i, u, pot, obs, traj, accepts


class _InlinePool:
    def map(self, fn, it, chunksize=1):
        return [fn(x) for x in it]

    def close(self):
        pass

    def join(self):
        pass


def _make_pool(model, workers: int):
    if workers <= 1:
        _worker_init(model)
        return _InlinePool()
    import multiprocessing as mp

    ctx = mp.get_context("fork")
    return ctx.Pool(workers, initializer=_worker_init, initargs=(model,))


def _checkpoint_path(directory: Path, stage: int) -> Path:
    return directory / f"ensemble_stage_{stage}.json"


def save_checkpoint(directory, ens: Ensemble, master_seed: int, diag: SmcDiagnostics) -> Path:
    """Write one stage's ensemble; trajectories are rebuilt on resume."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    payload = {
        "schema": "smc-checkpoint-1",
        "stage": ens.stage,
        "beta": ens.beta,
        "n": len(ens.u),
        "rng": {"scheme": "keyed-philox", "master_seed": int(master_seed)},
        "u": ens.u.tolist(),
        "potentials": ens.potentials.tolist(),
        "weights": ens.weights.tolist(),
        "diagnostics": diag.to_dict(),
    }
    path = _checkpoint_path(directory, ens.stage)
    tmp = path.with_suffix(".tmp")
    tmp.write_text(json.dumps(payload))
    tmp.replace(path)
    return path


def load_latest_checkpoint(directory):
    """Restore the highest-stage valid checkpoint, or None if none exist."""
    directory = Path(directory)
    best = None
    for p in directory.glob("ensemble_stage_*.json"):
        try:
            payload = json.loads(p.read_text())
            if payload.get("schema") != "smc-checkpoint-1":
                continue
        except (json.JSONDecodeError, OSError):
            continue
        if best is None or payload["stage"] > best["stage"]:
            best = payload
    if best is None:
        return None
    n = best["n"]
    ens = Ensemble(
        u=np.array(best["u"], dtype=np.float64),
        potentials=np.array(best["potentials"], dtype=np.float64),
        weights=np.array(best["weights"], dtype=np.float64),
        beta=float(best["beta"]),
        stage=int(best["stage"]),
        obs=[None] * n,
        traj=[None] * n,
    ).validate()
    diag = SmcDiagnostics.from_dict(best["diagnostics"])
    seed = int(best["rng"]["master_seed"])
    return ens, diag, seed


@dataclass
class SmcResult:
    ensemble: Ensemble
    diagnostics: SmcDiagnostics

    @property
    def mean(self):
        return posterior_param_stats(self.ensemble.u, self.ensemble.weights)[0]

    @property
    def cov(self):
        return posterior_param_stats(self.ensemble.u, self.ensemble.weights)[1]


def run_smc(
    model,
    prior: TruncGaussPrior,
    config: SmcConfig,
    master_seed: int,
    checkpoint_dir=None,
    resume: bool = False,
) -> SmcResult:
    """Run the tempering loop from the prior (or a checkpoint) to beta = 1.

    Resampling and mutation happen every stage, the final beta = 1 stage
    included.  Raises SmcError if the stage budget is exhausted first.
    """
    config.validate()
    prior.validate()
    n = config.n_particles
    ens = None
    diag = SmcDiagnostics()
    if resume:
        if checkpoint_dir is None:
            raise SmcError("resume requested without a checkpoint directory")
        found = load_latest_checkpoint(checkpoint_dir)
        if found is not None:
            ens, diag, seed_found = found
            if seed_found != master_seed:
                raise SmcError(
                    f"checkpoint was written under seed {seed_found}, not {master_seed}"
                )
            if len(ens.u) != n:
                raise SmcError(
                    f"checkpoint has {len(ens.u)} particles, configured {n}"
                )
            logger.info("resumed from stage %d at beta %.6f", ens.stage, ens.beta)
    pool = _make_pool(model, config.workers)
    try:
        if ens is None:
            t0 = time.perf_counter()
            u0 = np.empty((n, 3))
            for i in range(n):
                u0[i] = prior.sample(rng_stream(master_seed, 0, i, _PURPOSE_INIT))
            results = pool.map(_eval_init_task, [(i, u0[i]) for i in range(n)], chunksize=1)
            pots = np.empty(n)
            obs: list = [None] * n
            traj: list = [None] * n
            for i, pot, ob, tr in results:
                pots[i] = pot
                obs[i] = ob
                traj[i] = tr
            ens = Ensemble(u0, pots, np.full(n, 1.0 / n), 0.0, 0, obs, traj).validate()
            diag.stage_seconds.append(time.perf_counter() - t0)
            if checkpoint_dir is not None:
                save_checkpoint(checkpoint_dir, ens, master_seed, diag)
            logger.info(
                "stage 0: beta 0.000000, %d prior particles evaluated in %.1fs",
                n,
                diag.stage_seconds[-1],
            )
        while ens.beta < 1.0:
            t0 = time.perf_counter()
            stage = ens.stage + 1
            if stage > config.max_stages:
                raise SmcError(
                    f"tempering did not reach beta=1 within {config.max_stages} stages "
                    f"(beta={ens.beta:.6f})"
                )
            beta_new = next_beta(ens.potentials, ens.beta, config.cv_target, config.bisection_tol)
            dbeta = beta_new - ens.beta
            logw = -dbeta * ens.potentials
            shift = logw.max()
            diag.log_evidence += shift + math.log(np.mean(np.exp(logw - shift)))
            weights = normalize_weights_log(logw)
            cv = coeff_of_variation(weights)
            scale = config.proposal_scale * _weighted_std(ens.u, weights)
            anc = resample_systematic(weights, rng_stream(master_seed, stage, 0, _PURPOSE_RESAMPLE))
            u = ens.u[anc].copy()
            pots = ens.potentials[anc].copy()
            obs = [ens.obs[a] for a in anc]
            traj = [ens.traj[a] for a in anc]
            tasks = [
                (i, u[i], pots[i], obs[i], traj[i], beta_new, scale, config.n_mut,
                 master_seed, stage, prior)
                for i in range(n)
            ]
            accepted = 0
            for i, ui, poti, obi, tri, acc in pool.map(_mutate_task, tasks, chunksize=1):
                u[i] = ui
                pots[i] = poti
                obs[i] = obi
                traj[i] = tri
                accepted += acc
            rate = accepted / max(1, n * config.n_mut)
            ens = Ensemble(u, pots, np.full(n, 1.0 / n), beta_new, stage, obs, traj).validate()
            diag.beta_schedule.append(beta_new)
            diag.cv_history.append(cv)
            diag.ess_history.append(ess(cv, n))
            diag.error_bounds.append(error_bound(cv, n))
            diag.acceptance_rates.append(rate)
            diag.stage_seconds.append(time.perf_counter() - t0)
            if checkpoint_dir is not None:
                save_checkpoint(checkpoint_dir, ens, master_seed, diag)
            logger.info(
                "stage %d: beta %.6f, cv %.4f, ess %.1f, acceptance %.3f, %.1fs",
                stage,
                beta_new,
                cv,
                ess(cv, n),
                rate,
                diag.stage_seconds[-1],
            )
        return SmcResult(ens, diag)
    finally:
        pool.close()
        pool.join()


def _weighted_std(u: np.ndarray, weights: np.ndarray) -> np.ndarray:
    mean, cov = posterior_param_stats(u, weights)
    return np.maximum(np.sqrt(np.diag(cov)), 1e-12)


def map_estimate(model, prior: TruncGaussPrior, start=None, xatol: float = 1e-7, fatol: float = 1e-11):
    """Posterior mode via derivative-free simplex search inside the box.

    With a flat potential this reduces to the prior mode (locations clipped
    to the box).  Returns the optimizer result's parameter vector.
    """
    upper = np.asarray(prior.upper, dtype=np.float64)
    x0 = np.asarray(start, dtype=np.float64) if start is not None else prior.mode()

    def objective(u):
        if not prior.in_box(u):
            return math.inf
        try:
            pot, _, _ = model.evaluate(u, None)
        except (NonConvergence, LinearSolveError):
            return math.inf
        return pot - prior.logdensity(u)

    res = minimize(
        objective,
        x0,
        method="Nelder-Mead",
        options={"xatol": xatol, "fatol": fatol, "maxiter": 2000, "maxfev": 4000},
    )
    return np.clip(res.x, 0.0, upper)
