"""Time stepping for the coupled phase-field / nutrient system.

One step advances (phi, mu, sigma) by first solving the linear nutrient
equation implicitly, then the nonlinear phase-field pair with Newton's
method on the coupled block system

    M phi + tau K_m mu            = M phi_old + tau P M (f g) + tau chi K_m sigma
    eps K phi + (1/eps) M_L psi'(phi) - M mu = 0
    (M + tau K + tau C M_h) sigma = M sigma_old

where K_m is the mobility-weighted stiffness and M_h the consumption-weighted
mass, both frozen at phi_old, and M_L is the lumped mass applied to the
potential derivative only.

The Newton linearization is factorized sparsely once and reused across
iterations and steps through residual-correction refinement; a fresh
factorization happens only when refinement stalls.  Newton takes full steps
by default and backtracks only on strong residual growth: the potential
derivative is piecewise smooth and its active set moves between iterates, so
transient residual increases are normal and monotone line search stalls the
active-set resolution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import coeffs as _coeffs
from ._backend import kernels
from .coeffs import CoeffConfig
from .fem import LinearSolveError, Mesh, NodalField, get_assembler, integrate


@dataclass(frozen=True)
class ModelParams:
    """Inversion parameters: proliferation P, chemotaxis chi, consumption C."""

    P: float
    chi: float
    C: float

    def validate(self) -> "ModelParams":
        for name, v in (("P", self.P), ("chi", self.chi), ("C", self.C)):
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be finite and nonnegative, got {v}")
        return self

    def as_array(self) -> np.ndarray:
        return np.array([self.P, self.chi, self.C], dtype=np.float64)

    @staticmethod
    def from_array(u) -> "ModelParams":
        u = np.asarray(u, dtype=np.float64)
        if u.shape != (3,):
            raise ValueError(f"expected 3 parameters, got shape {u.shape}")
        return ModelParams(float(u[0]), float(u[1]), float(u[2]))


@dataclass(frozen=True)
class TimeGrid:
    """Uniform time grid on [0, t_end] with observation times on grid points."""

    t_end: float
    tau: float
    obs_times: tuple[float, ...] = ()

    def validate(self) -> "TimeGrid":
        if not (self.tau > 0 and math.isfinite(self.tau)):
            raise ValueError(f"time step must be positive, got {self.tau}")
        if not (self.t_end >= 0 and math.isfinite(self.t_end)):
            raise ValueError(f"final time must be nonnegative, got {self.t_end}")
        ratio = self.t_end / self.tau
        if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio):
            raise ValueError(
                f"final time {self.t_end} is not an integer multiple of step {self.tau}"
            )
        prev = -math.inf
        for t in self.obs_times:
            if not (0.0 <= t <= self.t_end + 1e-12):
                raise ValueError(f"observation time {t} outside [0, {self.t_end}]")
            if t <= prev:
                raise ValueError("observation times must be strictly increasing")
            k = t / self.tau
            if abs(k - round(k)) > 1e-12 * max(1.0, k):
                raise ValueError(f"observation time {t} is not on the time grid")
            prev = t
        return self

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.tau))

    def obs_steps(self) -> list[int]:
        return [int(round(t / self.tau)) for t in self.obs_times]


@dataclass
class State:
    """Solution snapshot at time t."""

    phi: NodalField
    mu: NodalField
    sigma: NodalField
    t: float


@dataclass(frozen=True)
class NewtonConfig:
    """Newton controls for the phase-field block.

    The residual is the Euclidean norm of the stacked (r_phi, r_mu) vector.
    Backtracking engages only when a full step grows the residual by more
    than growth_tol; each backtrack halves the step down to min_step, and
    running out of halvings is counted as a damping exhaustion.
    """

    tol_abs: float = 1e-9
    max_iter: int = 25
    damping: float = 0.5
    min_step: float = 1.0 / 16.0
    growth_tol: float = 10.0


class NonConvergence(RuntimeError):
    """Newton failed to reach tolerance within the iteration budget."""

    def __init__(self, iterations: int, residual: float):
        super().__init__(
            f"Newton did not converge: residual {residual:.3e} after {iterations} iterations"
        )
        self.iterations = iterations
        self.residual = residual


@dataclass
class StepStats:
    newton_iterations: int
    newton_residual: float
    damping_exhaustions: int


@dataclass
class SimulationResult:
    """Final state, observed tumour volumes, and per-step solver statistics."""

    state: State
    volumes: np.ndarray
    stats: list[StepStats]
    trajectory: list | None = None
    fields: list | None = None

    @property
    def max_newton_iterations(self) -> int:
        return max((s.newton_iterations for s in self.stats), default=0)

    @property
    def total_damping_exhaustions(self) -> int:
        return sum(s.damping_exhaustions for s in self.stats)


def obs_volume(mesh: Mesh, phi) -> float:
    """Tumour volume observable: integral of (phi + 1) / 2."""
    return 0.5 * (integrate(mesh, phi) + mesh.area)


class ForwardOperator:
    """Reusable solver for one (mesh, coefficient set, time grid) triple.

    Holds the assembled matrices, the block-Jacobian sparsity with in-place
    value update maps, and the last LU factorization.  Not safe for
    concurrent use from threads; SMC workers each own one instance.
    """

    def __init__(
        self,
        mesh: Mesh,
        cfg: CoeffConfig,
        grid: TimeGrid,
        newton: NewtonConfig = NewtonConfig(),
        lin_tol: float = 1e-10,
    ):
        cfg.validate()
        grid.validate()
        self.mesh = mesh
        self.cfg = cfg
        self.grid = grid
        self.newton = newton
        self.lin_tol = lin_tol
        asm = get_assembler(mesh)
        self.asm = asm
        self.M = asm.mass
        self.K = asm.stiffness
        self.ML = asm.lumped
        n = mesh.n_nodes
        self.n = n
        # sigma system shares the mass/stiffness pattern; data is fused per step
        self._S = sp.csr_matrix(
            (np.empty(asm.nnz), asm.indices, asm.indptr), shape=(n, n)
        )
        self._Km = sp.csr_matrix(
            (np.empty(asm.nnz), asm.indices, asm.indptr), shape=(n, n)
        )
        self._build_jacobian_pattern()
        self._lu = None
        self._buf = {name: np.empty(n) for name in ("h", "f", "g", "fg", "m", "psi1", "psi2")}
        self._wtri = np.empty(len(mesh.triangles))
        self.phi0 = _coeffs.initial_phi(mesh.nodes, cfg)
        self.sigma0 = _coeffs.initial_sigma(mesh.nodes)
        self.mu0 = self._consistent_mu(self.phi0)
        self.n_factorizations = 0

    def _build_jacobian_pattern(self):
        asm = self.asm
        n = self.n
        m = asm.nnz
        P = asm.indptr.astype(np.int64)
        I = asm.indices.astype(np.int64)
        cj = np.diff(P)
        col_nnz = np.concatenate([2 * cj, 2 * cj])
        Jptr = np.concatenate([[0], np.cumsum(col_nnz)]).astype(np.int32)
        base = np.arange(m, dtype=np.int64)
        within = base - np.repeat(P[:-1], cj)
        rep = np.repeat(cj, cj)
        pos_t1 = np.repeat(Jptr[:n].astype(np.int64), cj) + within
        pos_b1 = pos_t1 + rep
        pos_t2 = np.repeat(Jptr[n : 2 * n].astype(np.int64), cj) + within
        pos_b2 = pos_t2 + rep
        Jind = np.empty(4 * m, dtype=np.int32)
        Jind[pos_t1] = I
        Jind[pos_b1] = I + n
        Jind[pos_t2] = I
        Jind[pos_b2] = I + n
        Jdata = np.zeros(4 * m)
        self._J = sp.csc_matrix((Jdata, Jind, Jptr), shape=(2 * n, 2 * n))
        self._pos11, self._pos21 = pos_t1, pos_b1
        self._pos12, self._pos22 = pos_t2, pos_b2
        diag_slots = np.flatnonzero(I == np.repeat(np.arange(n, dtype=np.int64), cj))
        self._pos21_diag = pos_b1[diag_slots]
        # all blocks carry symmetric values on a symmetric pattern, so CSR
        # data maps to CSC data entrywise
        Jdata[self._pos11] = self.M.data
        Jdata[self._pos22] = -self.M.data
        Jdata[self._pos21] = self.cfg.eps * self.K.data
        self._eK_diag = self.cfg.eps * self.K.diagonal()

    def _consistent_mu(self, phi: np.ndarray) -> np.ndarray:
        cfg = self.cfg
        psi1 = kernels.psi_prime_arr(phi, cfg.s, cfg.rho, np.empty(self.n))
        rhs = self.cfg.eps * (self.K @ phi) + (self.ML * psi1) / cfg.eps
        x, ok = self._cg(self.M, rhs, np.zeros(self.n))
        if not ok:
            x = spla.splu(sp.csc_matrix(self.M)).solve(rhs)
        return x

    @staticmethod
    def _cg(A: sp.csr_matrix, b: np.ndarray, x0: np.ndarray):
        d = A.diagonal()
        precond = spla.LinearOperator(A.shape, matvec=lambda v: v / d)
        x, info = spla.cg(A, b, x0=x0, rtol=1e-13, atol=0.0, maxiter=400, M=precond)
        return x, info == 0

    def step_sigma(self, phi_old: np.ndarray, sigma_old: np.ndarray, C: float, tau: float) -> np.ndarray:
        """Implicit nutrient step with consumption frozen at phi_old."""
        h = kernels.h_consume_arr(phi_old, self._buf["h"])
        wtri = np.ascontiguousarray(h[self.mesh.triangles])
        kernels.scatter_weighted_mass(wtri, self.asm.area, self.asm.slots, self._S.data)
        self._S.data *= tau * C
        self._S.data += self.M.data
        self._S.data += tau * self.K.data
        rhs = self.M @ sigma_old
        x, ok = self._cg(self._S, rhs, sigma_old)
        if not ok:
            x = spla.splu(sp.csc_matrix(self._S)).solve(rhs)
        scale = np.linalg.norm(rhs)
        residual = np.linalg.norm(self._S @ x - rhs) / (scale if scale > 0 else 1.0)
        if not residual <= self.lin_tol:
            raise LinearSolveError("nutrient solve missed tolerance", residual)
        return x

    def _freeze_step_operators(self, phi_old: np.ndarray, sigma_new: np.ndarray, params: ModelParams, tau: float):
        cfg = self.cfg
        kernels.mobility_arr(phi_old, cfg.m0, cfg.m1, self._buf["m"])
        kernels.tri_mean(self._buf["m"], self.mesh.triangles, self._wtri)
        kernels.scatter_stiffness(self._wtri, self.asm.grad_block, self.asm.slots, self._Km.data)
        kernels.f_prolif_arr(phi_old, self._buf["f"])
        kernels.g_nutrient_arr(sigma_new, cfg.m_cap, cfg.theta, self._buf["g"])
        np.multiply(self._buf["f"], self._buf["g"], out=self._buf["fg"])
        rhs_const = self.M @ phi_old
        rhs_const += (tau * params.P) * (self.M @ self._buf["fg"])
        rhs_const += (tau * params.chi) * (self._Km @ sigma_new)
        self._J.data[self._pos12] = tau * self._Km.data
        return rhs_const

    def _residual(self, phi, mu, rhs_const, tau):
        cfg = self.cfg
        psi1 = kernels.psi_prime_arr(phi, cfg.s, cfg.rho, self._buf["psi1"])
        r1 = self.M @ phi + tau * (self._Km @ mu) - rhs_const
        r2 = cfg.eps * (self.K @ phi) + (self.ML * psi1) / cfg.eps - self.M @ mu
        res = math.sqrt(float(r1 @ r1) + float(r2 @ r2))
        return r1, r2, res

    def _jac_matvec(self, a, b, diag2, tau):
        top = self.M @ a + tau * (self._Km @ b)
        bot = self.cfg.eps * (self.K @ a) + diag2 * a - self.M @ b
        return top, bot

    def _refactor(self):
        try:
            self._lu = spla.splu(
                self._J, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0
            )
        except RuntimeError:
            self._lu = spla.splu(self._J)
        self.n_factorizations += 1

    def _solve_newton_system(self, r1, r2, diag2, tau):
        """Solve J dx = (r1, r2) reusing the last factorization when possible.

        The kept LU acts as a preconditioner for residual-correction
        iteration against the current Jacobian; stalling triggers one fresh
        factorization, so accuracy never depends on reuse.
        """
        n = self.n
        rhs = np.concatenate([r1, r2])
        rhs_norm = np.linalg.norm(rhs)
        target = max(1e-11 * rhs_norm, 1e-300)
        if self._lu is not None:
            dx = self._lu.solve(rhs)
            prev = math.inf
            for _ in range(12):
                ta, tb = self._jac_matvec(dx[:n], dx[n:], diag2, tau)
                ra = r1 - ta
                rb = r2 - tb
                nr = math.sqrt(float(ra @ ra) + float(rb @ rb))
                if nr <= target:
                    return dx
                if nr > 0.8 * prev:
                    break
                prev = nr
                dx += self._lu.solve(np.concatenate([ra, rb]))
        self._refactor()
        dx = self._lu.solve(rhs)
        ta, tb = self._jac_matvec(dx[:n], dx[n:], diag2, tau)
        ra = r1 - ta
        rb = r2 - tb
        nr = math.sqrt(float(ra @ ra) + float(rb @ rb))
        if nr > target:
            dx += self._lu.solve(np.concatenate([ra, rb]))
            ta, tb = self._jac_matvec(dx[:n], dx[n:], diag2, tau)
            ra = r1 - ta
            rb = r2 - tb
            nr = math.sqrt(float(ra @ ra) + float(rb @ rb))
            if nr > max(1e-9 * rhs_norm, 1e-300):
                raise LinearSolveError(
                    "Newton linear system solve missed tolerance", nr / max(rhs_norm, 1e-300)
                )
        return dx

    def newton_solve_phi_mu(
        self,
        phi_old: np.ndarray,
        mu_old: np.ndarray,
        sigma_new: np.ndarray,
        params: ModelParams,
        tau: float,
        newton: NewtonConfig | None = None,
        warm: tuple[np.ndarray, np.ndarray] | None = None,
    ):
        """Solve the coupled phase-field block; returns (phi, mu, stats)."""
        nc = newton or self.newton
        cfg = self.cfg
        rhs_const = self._freeze_step_operators(phi_old, sigma_new, params, tau)
        if warm is not None:
            phi = np.asarray(warm[0], dtype=np.float64).copy()
            mu = np.asarray(warm[1], dtype=np.float64).copy()
        else:
            phi = phi_old.copy()
            mu = mu_old.copy()
        r1, r2, res = self._residual(phi, mu, rhs_const, tau)
        exhaustions = 0
        for it in range(1, nc.max_iter + 1):
            if res <= nc.tol_abs:
                return phi, mu, StepStats(it - 1, res, exhaustions)
            psi2 = kernels.psi_second_arr(phi, cfg.s, cfg.rho, self._buf["psi2"])
            diag2 = (self.ML * psi2) / cfg.eps
            self._J.data[self._pos21_diag] = self._eK_diag + diag2
            dx = self._solve_newton_system(-r1, -r2, diag2, tau)
            alpha = 1.0
            while True:
                phi_t = phi + alpha * dx[: self.n]
                mu_t = mu + alpha * dx[self.n :]
                r1_t, r2_t, res_t = self._residual(phi_t, mu_t, rhs_const, tau)
                if res_t <= nc.growth_tol * res or res_t <= nc.tol_abs:
                    break
                if alpha * nc.damping < nc.min_step - 1e-15:
                    exhaustions += 1
                    break
                alpha *= nc.damping
            phi, mu, r1, r2, res = phi_t, mu_t, r1_t, r2_t, res_t
        if res <= nc.tol_abs:
            return phi, mu, StepStats(nc.max_iter, res, exhaustions)
        raise NonConvergence(nc.max_iter, res)

    def advance(
        self,
        phi: np.ndarray,
        mu: np.ndarray,
        sigma: np.ndarray,
        params: ModelParams,
        newton: NewtonConfig | None = None,
        warm=None,
    ):
        """One full time step; returns (phi, mu, sigma, stats)."""
        tau = self.grid.tau
        sigma_new = self.step_sigma(phi, sigma, params.C, tau)
        phi_new, mu_new, stats = self.newton_solve_phi_mu(
            phi, mu, sigma_new, params, tau, newton=newton, warm=warm
        )
        return phi_new, mu_new, sigma_new, stats

    def simulate(
        self,
        params: ModelParams,
        newton: NewtonConfig | None = None,
        warm_trajectory: list | None = None,
        record_trajectory: bool = False,
        record_fields: bool = False,
    ) -> SimulationResult:
        """Run the full time grid from the built-in initial state.

        warm_trajectory supplies per-step Newton initial guesses (as produced
        by record_trajectory=True); it only changes iteration counts, the
        converged states are tolerance-identical.
        """
        params.validate()
        phi = self.phi0.copy()
        mu = self.mu0.copy()
        sigma = self.sigma0.copy()
        obs_steps = self.grid.obs_steps()
        volumes = np.full(len(obs_steps), np.nan)
        for j, ks in enumerate(obs_steps):
            if ks == 0:
                volumes[j] = obs_volume(self.mesh, phi)
        stats: list[StepStats] = []
        traj = [] if record_trajectory else None
        fields = [] if record_fields else None
        for k in range(1, self.grid.n_steps + 1):
            warm = None
            if warm_trajectory is not None and k - 1 < len(warm_trajectory):
                warm = warm_trajectory[k - 1]
            phi, mu, sigma, st = self.advance(phi, mu, sigma, params, newton=newton, warm=warm)
            stats.append(st)
            if traj is not None:
                traj.append((phi.astype(np.float32), mu.astype(np.float32)))
            if fields is not None:
                fields.append((phi.copy(), mu.copy(), sigma.copy()))
            for j, ks in enumerate(obs_steps):
                if ks == k:
                    volumes[j] = obs_volume(self.mesh, phi)
        state = State(
            NodalField(phi, self.mesh),
            NodalField(mu, self.mesh),
            NodalField(sigma, self.mesh),
            self.grid.n_steps * self.grid.tau,
        )
        return SimulationResult(state, volumes, stats, traj, fields)


def make_operator(mesh: Mesh, cfg: CoeffConfig, grid: TimeGrid, **kw) -> ForwardOperator:
    return ForwardOperator(mesh, cfg, grid, **kw)


def step_sigma(mesh: Mesh, cfg: CoeffConfig, phi_old, sigma_old, C: float, tau: float) -> np.ndarray:
    """Standalone nutrient step (see ForwardOperator.step_sigma)."""
    op = ForwardOperator(mesh, cfg, TimeGrid(tau, tau))
    return op.step_sigma(np.asarray(phi_old, float), np.asarray(sigma_old, float), C, tau)


def ch_residual(
    mesh: Mesh,
    cfg: CoeffConfig,
    phi,
    mu,
    phi_old,
    sigma_new,
    params: ModelParams,
    tau: float,
):
    """Residual of the discrete phase-field pair at a candidate (phi, mu).

    Returns (r_phi, r_mu) with the mobility stiffness and proliferation
    source frozen at phi_old and the nutrient at its already-updated value.
    """
    op = ForwardOperator(mesh, cfg, TimeGrid(tau, tau))
    rhs_const = op._freeze_step_operators(
        np.asarray(phi_old, float), np.asarray(sigma_new, float), params, tau
    )
    r1, r2, _ = op._residual(np.asarray(phi, float), np.asarray(mu, float), rhs_const, tau)
    return r1, r2


def simulate(
    mesh: Mesh,
    cfg: CoeffConfig,
    grid: TimeGrid,
    params: ModelParams,
    newton: NewtonConfig | None = None,
    **kw,
) -> SimulationResult:
    """Convenience one-shot wrapper around ForwardOperator.simulate."""
    return ForwardOperator(mesh, cfg, grid, newton=newton or NewtonConfig()).simulate(params, **kw)
