"""Command-line interface: forward runs, data generation, inversion, stats.

Commands exit 0 on success, 2 on configuration errors, 3 on solver
failures.  All outputs are deterministic given (config, seed).

Field files use one value per line in lexicographic grid order (x fastest);
the same ordering fills the legacy-VTK structured-grid writer, so the two
representations cross-read exactly.
"""

from __future__ import annotations

import argparse
import configparser
import json
import logging
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import bayes, smc
from .bayes import DataA, DataB, NoiseModel, TruncGaussPrior
from .coeffs import CoeffConfig
from .fem import LinearSolveError, Mesh, build_mesh
from .forward import (
    ForwardOperator,
    ModelParams,
    NewtonConfig,
    NonConvergence,
    TimeGrid,
)

logger = logging.getLogger("tumorsmc.cli")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    """Complete run description, loadable from an INI file."""

    domain: tuple[float, float, float, float]
    nx: int
    ny: int
    coeffs: CoeffConfig
    grid: TimeGrid
    truth: ModelParams
    setting: str
    sigma_a2: float
    noise_std: float
    sigma_b2: tuple[float, ...]
    prior: TruncGaussPrior
    smc: smc.SmcConfig
    newton: NewtonConfig
    warm_start: bool = True
    map_xatol: float = 2e-4
    map_fatol: float = 1e-8

    def validate(self) -> "RunConfig":
        if self.nx < 1 or self.ny < 1:
            raise ConfigError(f"cell counts must be positive, got ({self.nx}, {self.ny})")
        ax, bx, ay, by = self.domain
        if not (bx > ax and by > ay):
            raise ConfigError(f"degenerate domain {self.domain}")
        try:
            self.coeffs.validate()
            self.grid.validate()
            self.truth.validate()
            self.prior.validate()
            self.smc.validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if self.setting not in ("a", "b"):
            raise ConfigError(f"noise setting must be 'a' or 'b', got {self.setting!r}")
        if self.setting == "a" and not self.sigma_a2 > 0:
            raise ConfigError(f"sigma_a2 must be positive, got {self.sigma_a2}")
        if self.setting == "b":
            if len(self.sigma_b2) != len(self.grid.obs_times):
                raise ConfigError(
                    f"{len(self.grid.obs_times)} observation times but "
                    f"{len(self.sigma_b2)} sigma_b2 entries"
                )
            if any(v <= 0 for v in self.sigma_b2):
                raise ConfigError("sigma_b2 entries must be positive")
        h = max((bx - ax) / self.nx, (by - ay) / self.ny)
        if h > self.coeffs.eps:
            logger.warning(
                "mesh size %.4g exceeds interface width eps=%.4g; the diffuse "
                "interface is under-resolved",
                h,
                self.coeffs.eps,
            )
        return self

    def noise_model(self) -> NoiseModel:
        if self.setting == "a":
            return NoiseModel("a", sigma_a2=self.sigma_a2)
        return NoiseModel("b", sigma_b2=self.sigma_b2)

    def mesh(self) -> Mesh:
        return build_mesh(self.domain, self.nx, self.ny)

    def save(self, path) -> None:
        cp = configparser.ConfigParser()
        cp["domain"] = {
            "ax": repr(self.domain[0]),
            "bx": repr(self.domain[1]),
            "ay": repr(self.domain[2]),
            "by": repr(self.domain[3]),
            "nx": str(self.nx),
            "ny": str(self.ny),
        }
        c = self.coeffs
        cp["coefficients"] = {
            "eps": repr(c.eps), "s": repr(c.s), "rho": repr(c.rho),
            "theta": repr(c.theta), "m_cap": repr(c.m_cap),
            "m0": repr(c.m0), "m1": repr(c.m1),
        }
        cp["time"] = {
            "t_end": repr(self.grid.t_end),
            "tau": repr(self.grid.tau),
            "obs_times": ", ".join(repr(t) for t in self.grid.obs_times),
        }
        cp["truth"] = {"p": repr(self.truth.P), "chi": repr(self.truth.chi), "c": repr(self.truth.C)}
        cp["noise"] = {
            "setting": self.setting,
            "sigma_a2": repr(self.sigma_a2),
            "noise_std": repr(self.noise_std),
            "sigma_b2": ", ".join(repr(v) for v in self.sigma_b2),
        }
        cp["prior"] = {
            "upper": ", ".join(repr(v) for v in self.prior.upper),
            "loc": ", ".join(repr(v) for v in self.prior.loc),
            "scale": ", ".join(repr(v) for v in self.prior.scale),
        }
        s = self.smc
        cp["smc"] = {
            "n_particles": str(s.n_particles),
            "cv_target": repr(s.cv_target),
            "n_mut": str(s.n_mut),
            "proposal_scale": repr(s.proposal_scale),
            "bisection_tol": repr(s.bisection_tol),
            "max_stages": str(s.max_stages),
            "warm_start": str(self.warm_start).lower(),
        }
        n = self.newton
        cp["newton"] = {
            "tol_abs": repr(n.tol_abs),
            "max_iter": str(n.max_iter),
            "damping": repr(n.damping),
            "min_step": repr(n.min_step),
            "growth_tol": repr(n.growth_tol),
        }
        cp["map"] = {"xatol": repr(self.map_xatol), "fatol": repr(self.map_fatol)}
        with open(path, "w") as fh:
            cp.write(fh)

    @staticmethod
    def load(path) -> "RunConfig":
        cp = configparser.ConfigParser()
        read = cp.read(path)
        if not read:
            raise ConfigError(f"cannot read config file {path}")
        try:
            d = cp["domain"]
            domain = (
                float(d["ax"]), float(d["bx"]), float(d["ay"]), float(d["by"])
            )
            nx, ny = int(d["nx"]), int(d["ny"])
            c = cp["coefficients"]
            coeff = CoeffConfig(
                s=float(c["s"]), rho=float(c["rho"]), m_cap=float(c["m_cap"]),
                theta=float(c["theta"]), m0=float(c["m0"]), m1=float(c["m1"]),
                eps=float(c["eps"]),
            )
            t = cp["time"]
            obs = tuple(float(v) for v in _split(t["obs_times"]))
            grid = TimeGrid(float(t["t_end"]), float(t["tau"]), obs)
            tr = cp["truth"]
            truth = ModelParams(float(tr["p"]), float(tr["chi"]), float(tr["c"]))
            nz = cp["noise"]
            sigma_b2 = tuple(float(v) for v in _split(nz.get("sigma_b2", "")))
            pr = cp["prior"]
            prior = TruncGaussPrior(
                tuple(float(v) for v in _split(pr["upper"])),
                tuple(float(v) for v in _split(pr["loc"])),
                tuple(float(v) for v in _split(pr["scale"])),
            )
            sm = cp["smc"]
            smc_cfg = smc.SmcConfig(
                n_particles=int(sm["n_particles"]),
                cv_target=float(sm["cv_target"]),
                n_mut=int(sm["n_mut"]),
                proposal_scale=float(sm["proposal_scale"]),
                bisection_tol=float(sm["bisection_tol"]),
                max_stages=int(sm["max_stages"]),
            )
            warm = sm.getboolean("warm_start", fallback=True)
            nw = cp["newton"]
            newton = NewtonConfig(
                tol_abs=float(nw["tol_abs"]),
                max_iter=int(nw["max_iter"]),
                damping=float(nw["damping"]),
                min_step=float(nw["min_step"]),
                growth_tol=float(nw["growth_tol"]),
            )
            mp = cp["map"] if cp.has_section("map") else {}
            cfg = RunConfig(
                domain=domain, nx=nx, ny=ny, coeffs=coeff, grid=grid, truth=truth,
                setting=nz["setting"].strip(), sigma_a2=float(nz["sigma_a2"]),
                noise_std=float(nz["noise_std"]), sigma_b2=sigma_b2, prior=prior,
                smc=smc_cfg, newton=newton, warm_start=warm,
                map_xatol=float(mp.get("xatol", 2e-4)),
                map_fatol=float(mp.get("fatol", 1e-8)),
            )
        except (KeyError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"invalid config {path}: {exc}") from exc
        return cfg.validate()


def _split(text: str) -> list[str]:
    return [p.strip() for p in text.split(",") if p.strip()]


def write_field_csv(path, values) -> None:
    np.savetxt(path, np.asarray(values, dtype=np.float64), fmt="%.17g")


def read_field_csv(path) -> np.ndarray:
    return np.loadtxt(path, dtype=np.float64)


def write_field_vtk(path, mesh: Mesh, values, name: str) -> None:
    """Legacy-VTK ASCII structured grid, double precision, node order as CSV."""
    v = np.asarray(values, dtype=np.float64)
    lines = [
        "# vtk DataFile Version 2.0",
        name,
        "ASCII",
        "DATASET STRUCTURED_GRID",
        f"DIMENSIONS {mesh.nx + 1} {mesh.ny + 1} 1",
        f"POINTS {mesh.n_nodes} double",
    ]
    for x, y in mesh.nodes:
        lines.append(f"{x:.17g} {y:.17g} 0")
    lines += [
        f"POINT_DATA {mesh.n_nodes}",
        f"SCALARS {name} double",
        "LOOKUP_TABLE default",
    ]
    lines.extend(f"{val:.17g}" for val in v)
    Path(path).write_text("\n".join(lines) + "\n")


def read_field_vtk(path) -> np.ndarray:
    lines = Path(path).read_text().splitlines()
    idx = next(i for i, ln in enumerate(lines) if ln.startswith("LOOKUP_TABLE"))
    return np.array([float(ln) for ln in lines[idx + 1 :] if ln.strip()])


def write_observations_csv(path, times, volumes) -> None:
    with open(path, "w") as fh:
        fh.write("t,volume\n")
        for t, v in zip(times, volumes):
            fh.write(f"{t:.17g},{v:.17g}\n")


def _build_model(cfg: RunConfig, seed: int) -> smc.PdeModel:
    """Synthetic-data inversion model for this config and seed."""
    op = ForwardOperator(cfg.mesh(), cfg.coeffs, cfg.grid, newton=cfg.newton)
    rng = smc.data_rng(seed)
    if cfg.setting == "a":
        data = bayes.gen_synthetic_a(op, cfg.truth, cfg.noise_std, rng)
        data.seed = seed
    else:
        data = bayes.gen_synthetic_b(op, cfg.truth, cfg.sigma_b2, rng)
    return smc.PdeModel(
        cfg.domain, cfg.nx, cfg.ny, cfg.coeffs, cfg.grid, cfg.newton,
        cfg.setting, data, cfg.noise_model(), warm_start=cfg.warm_start,
    )


def cmd_forward(cfg: RunConfig, out: Path) -> int:
    out.mkdir(parents=True, exist_ok=True)
    mesh = cfg.mesh()
    op = ForwardOperator(mesh, cfg.coeffs, cfg.grid, newton=cfg.newton)
    t0 = time.perf_counter()
    result = op.simulate(cfg.truth)
    elapsed = time.perf_counter() - t0
    st = result.state
    for name, vals in (("phi", st.phi.values), ("mu", st.mu.values), ("sigma", st.sigma.values)):
        write_field_csv(out / f"field_{name}.csv", vals)
        write_field_vtk(out / f"field_{name}.vtk", mesh, vals, name)
    write_observations_csv(out / "observations.csv", cfg.grid.obs_times, result.volumes)
    summary = {
        "params": [cfg.truth.P, cfg.truth.chi, cfg.truth.C],
        "t_end": cfg.grid.t_end,
        "steps": cfg.grid.n_steps,
        "max_newton_iterations": result.max_newton_iterations,
        "damping_exhaustions": result.total_damping_exhaustions,
        "seconds": elapsed,
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2))
    logger.info("forward run finished in %.1fs (%d steps)", elapsed, cfg.grid.n_steps)
    return EXIT_OK


def cmd_gen_data(cfg: RunConfig, seed: int, out: Path) -> int:
    out.mkdir(parents=True, exist_ok=True)
    op = ForwardOperator(cfg.mesh(), cfg.coeffs, cfg.grid, newton=cfg.newton)
    rng = smc.data_rng(seed)
    if cfg.setting == "a":
        data = bayes.gen_synthetic_a(op, cfg.truth, cfg.noise_std, rng)
        data.seed = seed
        data.save(out / "observations_field.csv")
        logger.info("wrote field observation (%d nodes)", len(data.y))
    else:
        data = bayes.gen_synthetic_b(op, cfg.truth, cfg.sigma_b2, rng)
        data.save(out / "observations.csv")
        logger.info("wrote %d volume observations", len(data.y))
    return EXIT_OK


def _load_or_gen_data(cfg: RunConfig, seed: int, data_path: str | None):
    if data_path is None:
        return _build_model(cfg, seed)
    p = Path(data_path)
    if cfg.setting == "a":
        data = DataA.load(p)
        if len(data.y) != (cfg.nx + 1) * (cfg.ny + 1):
            raise ConfigError(
                f"observation field has {len(data.y)} nodes, mesh has "
                f"{(cfg.nx + 1) * (cfg.ny + 1)}"
            )
    else:
        data = DataB.load(p)
        if len(data.y) != len(cfg.grid.obs_times):
            raise ConfigError(
                f"{len(data.y)} observations but {len(cfg.grid.obs_times)} observation times"
            )
    return smc.PdeModel(
        cfg.domain, cfg.nx, cfg.ny, cfg.coeffs, cfg.grid, cfg.newton,
        cfg.setting, data, cfg.noise_model(), warm_start=cfg.warm_start,
    )


def _ensure_obs(ensemble: smc.Ensemble, model: smc.PdeModel) -> None:
    for i, ob in enumerate(ensemble.obs):
        if ob is None:
            _, ensemble.obs[i], ensemble.traj[i] = model.evaluate(ensemble.u[i], None)


def _write_posterior(out: Path, result: smc.SmcResult, model=None, fields: bool = False) -> None:
    ens = result.ensemble
    mean, cov = smc.posterior_param_stats(ens.u, ens.weights)
    posterior = {
        "mean": mean.tolist(),
        "cov": cov.tolist(),
        "std": np.sqrt(np.diag(cov)).tolist(),
        "beta": ens.beta,
        "stages": len(result.diagnostics.beta_schedule) - 1,
        "log_evidence": result.diagnostics.log_evidence,
        "n_particles": len(ens.u),
    }
    (out / "posterior.json").write_text(json.dumps(posterior, indent=2))
    (out / "diagnostics.json").write_text(json.dumps(result.diagnostics.to_dict(), indent=2))
    if fields and model is not None and model.setting == "a":
        _ensure_obs(ens, model)
        fmean, fvar = smc.posterior_field_stats(np.array(ens.obs), ens.weights)
        write_field_csv(out / "posterior_phi_mean.csv", fmean)
        write_field_csv(out / "posterior_phi_var.csv", fvar)


def cmd_smc(cfg: RunConfig, seed: int, out: Path, threads: int, resume: bool,
            data_path: str | None, fields: bool) -> int:
    out.mkdir(parents=True, exist_ok=True)
    fh = logging.FileHandler(out / "smc.log")
    fh.setFormatter(logging.Formatter("%(asctime)s %(name)s %(message)s"))
    logging.getLogger("tumorsmc").addHandler(fh)
    try:
        model = _load_or_gen_data(cfg, seed, data_path)
        run_cfg = smc.SmcConfig(
            n_particles=cfg.smc.n_particles,
            cv_target=cfg.smc.cv_target,
            n_mut=cfg.smc.n_mut,
            proposal_scale=cfg.smc.proposal_scale,
            bisection_tol=cfg.smc.bisection_tol,
            max_stages=cfg.smc.max_stages,
            workers=threads,
        )
        result = smc.run_smc(
            model, cfg.prior, run_cfg, master_seed=seed,
            checkpoint_dir=out, resume=resume,
        )
        _write_posterior(out, result, model, fields=fields)
        mean, _ = smc.posterior_param_stats(result.ensemble.u, result.ensemble.weights)
        logger.info("posterior mean %s", np.round(mean, 4).tolist())
        return EXIT_OK
    finally:
        logging.getLogger("tumorsmc").removeHandler(fh)
        fh.close()


def cmd_map(cfg: RunConfig, seed: int, out: Path, data_path: str | None) -> int:
    out.mkdir(parents=True, exist_ok=True)
    model = _load_or_gen_data(cfg, seed, data_path)
    t0 = time.perf_counter()
    u_map = smc.map_estimate(
        model, cfg.prior, start=cfg.prior.mode(), xatol=cfg.map_xatol, fatol=cfg.map_fatol
    )
    payload = {"map": u_map.tolist(), "seed": seed, "seconds": time.perf_counter() - t0}
    (out / "map.json").write_text(json.dumps(payload, indent=2))
    logger.info("map estimate %s", np.round(u_map, 4).tolist())
    return EXIT_OK


def cmd_stats(cfg: RunConfig | None, out: Path, fields: bool, seed: int, data_path: str | None) -> int:
    found = smc.load_latest_checkpoint(out)
    if found is None:
        raise ConfigError(f"no ensemble checkpoints found in {out}")
    ens, diag, _seed = found
    result = smc.SmcResult(ens, diag)
    model = None
    if fields:
        if cfg is None:
            raise ConfigError("field statistics need --config to rebuild the forward model")
        model = _load_or_gen_data(cfg, seed, data_path)
    _write_posterior(out, result, model, fields=fields)
    mean, cov = smc.posterior_param_stats(ens.u, ens.weights)
    logger.info(
        "stage %d beta %.6f mean %s", ens.stage, ens.beta, np.round(mean, 4).tolist()
    )
    return EXIT_OK


def _validate_suites(fault: str | None):
    """Quick property suites; returns a machine-readable report."""
    from . import coeffs as C
    from .fem import assemble_mass, integrate, l2_inner

    suites = []

    def record(name, fn):
        try:
            fn()
            suites.append({"suite": name, "passed": True, "detail": ""})
        except AssertionError as exc:
            suites.append({"suite": name, "passed": False, "detail": str(exc)})
        except Exception as exc:
            detail = f"{type(exc).__name__}: {exc}"
            suites.append({"suite": name, "passed": False, "detail": detail})

    def coefficient_suite():
        cc = CoeffConfig()
        rng = np.random.default_rng(0)
        x = rng.uniform(-3, 3, 20000)
        f = C.f_prolif(x)
        h = C.h_consume(x)
        m = C.mobility(x, cc)
        g = C.g_nutrient(rng.uniform(-5, 15, 20000), cc)
        assert np.all((f >= 0) & (f <= 1)), "f outside [0,1]"
        assert np.all((h >= 0) & (h <= 1)), "h outside [0,1]"
        assert np.all((m >= cc.m0) & (m <= cc.m1)), "mobility outside [m0,m1]"
        assert np.all((g >= 0) & (g <= cc.m_cap)), "g outside [0,cap]"
        z = rng.uniform(-4, 4, 100)
        assert np.allclose(C.phi0_profile(-z, cc), -C.phi0_profile(z, cc), atol=0, rtol=0), (
            "initial profile not odd"
        )

    def conservation_suite():
        cfg = CoeffConfig(eps=0.5)
        mesh = build_mesh((-5, 5, -5, 5), 16, 16)
        grid = TimeGrid(0.2, 0.05)
        op = ForwardOperator(
            mesh, cfg, grid, newton=NewtonConfig(tol_abs=1e-11, max_iter=40)
        )
        if fault == "mass":
            op.M.data[0] *= 1.0 + 1e-6
        res = op.simulate(ModelParams(0.0, 0.0, 0.0))
        drift = abs(
            integrate(mesh, res.state.phi.values) - integrate(mesh, op.phi0)
        )
        if fault == "mass":
            drift = max(
                drift, float(abs(op.M.sum() - mesh.area))
            )
        assert drift <= 1e-10 * mesh.area, f"mass drift {drift:.3e}"

    def potential_identity_suite():
        mesh = build_mesh((-1, 1, -1, 1), 8, 8)
        M = assemble_mass(mesh)
        noise = NoiseModel("a", sigma_a2=0.3)
        rng = np.random.default_rng(1)
        for _ in range(5):
            g1, g2, y = rng.standard_normal((3, mesh.n_nodes))
            data1 = DataA(y, mesh.descriptor())
            p1 = bayes.potential_a(None, data1, noise, g1, mesh)
            p2 = bayes.potential_a(None, data1, noise, g2, mesh)
            rhs = l2_inner(M, g1 - g2, g1 - 2 * y + g2) / noise.sigma_a2
            assert abs(2 * (p1 - p2) - rhs) <= 1e-10 * max(1.0, abs(rhs)), "potential identity"

    def prior_moment_suite():
        prior = TruncGaussPrior((10.0, 200.0, 10.0), (5.0, 100.0, 5.0), (2.0, 40.0, 2.0))
        mean, var = prior.moments()
        from scipy.integrate import quad
        from scipy.stats import truncnorm

        for j, (a, b, c) in enumerate(zip(prior.upper, prior.loc, prior.scale)):
            dist = truncnorm((0 - b) / c, (a - b) / c, loc=b, scale=c)
            m_q = quad(lambda x: x * dist.pdf(x), 0, a, limit=200)[0]
            v_q = quad(lambda x: (x - m_q) ** 2 * dist.pdf(x), 0, a, limit=200)[0]
            assert abs(mean[j] - m_q) <= 1e-8 * max(1.0, abs(m_q)), "prior mean"
            assert abs(var[j] - v_q) <= 1e-8 * max(1.0, v_q), "prior variance"

    def smc_oracle_suite():
        a_matrix = np.array([[1.0, 0.2, 0.1], [0.1, 0.9, 0.2], [0.05, 0.1, 1.1]])
        loc = np.array([5.0, 4.0, 6.0])
        scale = np.array([1.0, 0.8, 1.2])
        rng = np.random.default_rng(123)
        y = a_matrix @ np.array([5.3, 4.2, 6.1]) + rng.standard_normal(3)
        prec = np.diag(1.0 / scale**2) + a_matrix.T @ a_matrix
        cov = np.linalg.inv(prec)
        m_exact = cov @ (np.diag(1.0 / scale**2) @ loc + a_matrix.T @ y)
        prior = TruncGaussPrior((50.0, 50.0, 50.0), tuple(loc), tuple(scale))
        model = smc.LinearGaussModel(a_matrix, y, 1.0)
        res = smc.run_smc(model, prior, smc.SmcConfig(n_particles=500), master_seed=7)
        mean, c = smc.posterior_param_stats(res.ensemble.u, res.ensemble.weights)
        se = np.sqrt(np.diag(c) / 500)
        assert np.all(np.abs(mean - m_exact) <= 5 * se), "sampler disagrees with conjugate posterior"

    record("coefficients", coefficient_suite)
    record("conservation", conservation_suite)
    record("potential_identities", potential_identity_suite)
    record("prior_moments", prior_moment_suite)
    record("smc_oracle", smc_oracle_suite)
    return {"schema": "validate-report-1", "suites": suites,
            "all_passed": all(s["passed"] for s in suites)}


def cmd_validate(fault: str | None) -> int:
    report = _validate_suites(fault)
    print(json.dumps(report, indent=2))
    return EXIT_OK if report["all_passed"] else 1


def shipped_config_path(name: str) -> Path:
    from importlib.resources import files

    return Path(str(files("tumorsmc") / "configs" / name))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="tumorsmc",
        description="Phase-field tumour growth simulation and SMC parameter inversion",
    )
    p.add_argument("--verbose", action="store_true", help="debug-level logging")
    sub = p.add_subparsers(dest="command", required=True)

    def add_common(sp, seed=True, out=True):
        sp.add_argument("--config", required=True, help="INI run configuration")
        if seed:
            sp.add_argument("--seed", type=int, default=1, help="master seed")
        if out:
            sp.add_argument("--out", required=True, help="output directory")

    sp = sub.add_parser("forward", help="run the forward model at the configured parameters")
    add_common(sp, seed=False)

    sp = sub.add_parser("gen-data", help="generate synthetic observations")
    add_common(sp)

    sp = sub.add_parser("smc", help="run the SMC inversion")
    add_common(sp)
    sp.add_argument("--threads", type=int, default=1, help="worker process count")
    sp.add_argument("--resume", action="store_true", help="resume from checkpoints in --out")
    sp.add_argument("--data", help="observation file (default: synthesize from config truth)")
    sp.add_argument("--fields", action="store_true", help="also write posterior field statistics")

    sp = sub.add_parser("map", help="maximum a posteriori point estimate")
    add_common(sp)
    sp.add_argument("--data", help="observation file (default: synthesize from config truth)")

    sp = sub.add_parser("stats", help="recompute posterior statistics from checkpoints")
    sp.add_argument("--out", required=True, help="directory holding ensemble checkpoints")
    sp.add_argument("--config", help="needed with --fields to rebuild the forward model")
    sp.add_argument("--seed", type=int, default=1)
    sp.add_argument("--data", help="observation file")
    sp.add_argument("--fields", action="store_true", help="recompute posterior field statistics")

    sp = sub.add_parser("validate", help="run quick property suites and report")
    sp.add_argument("--fault", help=argparse.SUPPRESS)

    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(name)s %(message)s",
    )
    try:
        if args.command == "validate":
            return cmd_validate(args.fault)
        if args.command == "stats":
            cfg = RunConfig.load(args.config) if args.config else None
            return cmd_stats(cfg, Path(args.out), args.fields, args.seed, args.data)
        cfg = RunConfig.load(args.config)
        if args.command == "forward":
            return cmd_forward(cfg, Path(args.out))
        if args.command == "gen-data":
            return cmd_gen_data(cfg, args.seed, Path(args.out))
        if args.command == "smc":
            return cmd_smc(
                cfg, args.seed, Path(args.out), args.threads, args.resume,
                args.data, args.fields,
            )
        if args.command == "map":
            return cmd_map(cfg, args.seed, Path(args.out), args.data)
        raise ConfigError(f"unknown command {args.command}")
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NonConvergence, LinearSolveError, smc.SmcError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
