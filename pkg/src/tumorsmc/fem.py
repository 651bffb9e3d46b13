"""P1 finite elements on a fixed structured triangulation of a rectangle.

Provides the mesh, consistent/lumped mass and stiffness assembly, the
coefficient-weighted variants appearing in the discrete scheme, sparse
direct solves with a residual contract, and L2 inner products/integrals.

Matrices are scipy.sparse CSR.  All weighted assemblies on one mesh share
a single sparsity pattern, built once and reused through precomputed
scatter slots; this is what makes repeated assembly inside Newton loops
cheap.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ._backend import kernels


class LinearSolveError(RuntimeError):
    """Raised when a linear solve cannot meet the residual contract."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (achieved relative residual {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True)
class Mesh:
    """Uniform triangulation of [ax, bx] x [ay, by].

    Nodes are ordered lexicographically (x fastest), each grid cell is split
    into two triangles along the same diagonal.
    """

    domain: tuple[float, float, float, float]
    nx: int
    ny: int
    nodes: np.ndarray = field(repr=False)
    triangles: np.ndarray = field(repr=False)

    @property
    def n_nodes(self) -> int:
        return (self.nx + 1) * (self.ny + 1)

    @property
    def area(self) -> float:
        ax, bx, ay, by = self.domain
        return (bx - ax) * (by - ay)

    def descriptor(self) -> dict:
        """JSON-friendly summary used in data sidecars and output metadata."""
        return {"domain": list(self.domain), "nx": self.nx, "ny": self.ny}


def build_mesh(domain, nx: int, ny: int) -> Mesh:
    """Triangulate the rectangle domain=(ax, bx, ay, by) with nx*ny cells."""
    if nx < 1 or ny < 1:
        raise ValueError(f"cell counts must be at least 1, got ({nx}, {ny})")
    ax, bx, ay, by = (float(v) for v in domain)
    if not (bx > ax and by > ay):
        raise ValueError(f"degenerate domain {domain}")
    xs = np.linspace(ax, bx, nx + 1)
    ys = np.linspace(ay, by, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    nodes = np.column_stack([X.ravel(), Y.ravel()])
    jj, ii = np.meshgrid(np.arange(ny), np.arange(nx), indexing="ij")
    n0 = (jj * (nx + 1) + ii).ravel()
    n1 = n0 + 1
    n2 = n0 + (nx + 1)
    n3 = n2 + 1
    tris = np.vstack([np.column_stack([n0, n1, n3]), np.column_stack([n0, n3, n2])])
    return Mesh((ax, bx, ay, by), nx, ny, nodes, np.ascontiguousarray(tris, dtype=np.int64))


@dataclass
class NodalField:
    """Piecewise-linear FE function given by its nodal values."""

    values: np.ndarray
    mesh: Mesh

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (self.mesh.n_nodes,):
            raise ValueError(
                f"field length {self.values.shape} does not match mesh with "
                f"{self.mesh.n_nodes} nodes"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field contains non-finite values")


class P1Assembler:
    """Shared-pattern assembly workspace for one mesh.

    Precomputes per-triangle geometry (areas, gradient products) and the
    scatter map from local 3x3 blocks into the common CSR data array.
    """

    def __init__(self, mesh: Mesh):
        self.mesh = mesh
        tris = mesh.triangles
        p = mesh.nodes[tris]
        x, y = p[:, :, 0], p[:, :, 1]
        b = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1)
        c = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1)
        twice_area = x[:, 0] * b[:, 0] + x[:, 1] * b[:, 1] + x[:, 2] * b[:, 2]
        if np.any(twice_area <= 0):
            raise ValueError("mesh contains non-positively oriented triangles")
        self.area = np.ascontiguousarray(twice_area / 2.0)
        # grad(lambda_i) . grad(lambda_j) * area, the exact P1 stiffness block
        self.grad_block = np.ascontiguousarray(
            (b[:, :, None] * b[:, None, :] + c[:, :, None] * c[:, None, :])
            / (2.0 * twice_area)[:, None, None]
        )
        rows = np.repeat(tris, 3, axis=1).ravel()
        cols = np.tile(tris, (1, 3)).ravel()
        order = np.lexsort((cols, rows))
        sr, sc = rows[order], cols[order]
        new_entry = np.empty(len(sr), dtype=bool)
        new_entry[0] = True
        new_entry[1:] = (sr[1:] != sr[:-1]) | (sc[1:] != sc[:-1])
        group = np.cumsum(new_entry) - 1
        slots = np.empty(len(rows), dtype=np.int64)
        slots[order] = group
        self.slots = np.ascontiguousarray(slots.reshape(-1, 9))
        self.nnz = int(group[-1]) + 1
        self.indices = np.ascontiguousarray(sc[new_entry], dtype=np.int32)
        counts = np.bincount(sr[new_entry], minlength=mesh.n_nodes)
        self.indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int32)
        self._wbar = np.empty(len(tris))
        self._ones = np.ones(mesh.n_nodes)
        self.mass = self.weighted_mass(self._ones)
        self.stiffness = self.weighted_stiffness(self._ones)
        self.lumped = np.asarray(self.mass.sum(axis=1)).ravel()
        # permutation taking CSR data of a symmetric-valued matrix on this
        # pattern to its CSC data (needed for sharing values with CSC solvers)
        probe = sp.csr_matrix(
            (np.arange(self.nnz, dtype=np.float64), self.indices, self.indptr),
            shape=(mesh.n_nodes, mesh.n_nodes),
        )
        self.csr_to_csc = probe.tocsc().data.astype(np.int64)

    def _matrix(self, data: np.ndarray) -> sp.csr_matrix:
        n = self.mesh.n_nodes
        return sp.csr_matrix((data, self.indices, self.indptr), shape=(n, n))

    def weighted_stiffness(self, w: np.ndarray) -> sp.csr_matrix:
        """Assemble (w_h grad phi_j, grad phi_i), exact for P1 interpolated w."""
        kernels.tri_mean(np.ascontiguousarray(w, dtype=np.float64), self.mesh.triangles, self._wbar)
        data = kernels.scatter_stiffness(self._wbar, self.grad_block, self.slots, np.empty(self.nnz))
        return self._matrix(data)

    def weighted_mass(self, w: np.ndarray) -> sp.csr_matrix:
        """Assemble (w_h phi_j, phi_i) with quadrature exact for cubics."""
        wtri = np.ascontiguousarray(w[self.mesh.triangles], dtype=np.float64)
        data = kernels.scatter_weighted_mass(wtri, self.area, self.slots, np.empty(self.nnz))
        return self._matrix(data)


_ASSEMBLERS: dict[int, P1Assembler] = {}


def get_assembler(mesh: Mesh) -> P1Assembler:
    """Assembler for this mesh, cached per mesh object."""
    key = id(mesh)
    asm = _ASSEMBLERS.get(key)
    if asm is None or asm.mesh is not mesh:
        asm = P1Assembler(mesh)
        _ASSEMBLERS[key] = asm
    return asm


def assemble_mass(mesh: Mesh) -> sp.csr_matrix:
    """Consistent P1 mass matrix (area/6 diagonal, area/12 off-diagonal per element)."""
    return get_assembler(mesh).mass.copy()


def assemble_lumped_mass(mesh: Mesh) -> sp.csr_matrix:
    """Row-sum lumped mass matrix, diagonal."""
    return sp.diags(get_assembler(mesh).lumped).tocsr()


def assemble_stiffness(mesh: Mesh) -> sp.csr_matrix:
    """P1 stiffness matrix; K @ const = 0 and K is symmetric PSD."""
    return get_assembler(mesh).stiffness.copy()


def assemble_weighted_stiffness(mesh: Mesh, w) -> sp.csr_matrix:
    """Stiffness weighted by the P1 interpolant of nodal values w."""
    return get_assembler(mesh).weighted_stiffness(_values(w, mesh))


def assemble_weighted_mass(mesh: Mesh, w) -> sp.csr_matrix:
    """Mass weighted by the P1 interpolant of nodal values w."""
    return get_assembler(mesh).weighted_mass(_values(w, mesh))


def _values(w, mesh: Mesh) -> np.ndarray:
    if isinstance(w, NodalField):
        if w.mesh is not mesh:
            raise ValueError("field belongs to a different mesh")
        return w.values
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (mesh.n_nodes,):
        raise ValueError(f"expected {mesh.n_nodes} nodal values, got shape {w.shape}")
    return w


def solve_linear(A, b, tol: float = 1e-10) -> np.ndarray:
    """Sparse direct solve with a verified relative-residual contract.

    Raises LinearSolveError if ||Ax - b|| / ||b|| exceeds tol (for b = 0 the
    absolute residual is used).
    """
    A = sp.csc_matrix(A)
    b = np.asarray(b, dtype=np.float64)
    if A.shape[0] != A.shape[1] or A.shape[0] != b.shape[0]:
        raise ValueError(f"shape mismatch: A {A.shape}, b {b.shape}")
    try:
        x = spla.splu(A).solve(b)
    except RuntimeError as exc:
        raise LinearSolveError(f"sparse factorization failed: {exc}", np.inf) from exc
    scale = np.linalg.norm(b)
    residual = np.linalg.norm(A @ x - b) / (scale if scale > 0 else 1.0)
    if not residual <= tol:
        raise LinearSolveError("linear solve missed tolerance", residual)
    return x


def l2_inner(M: sp.csr_matrix, u, v) -> float:
    """L2 inner product (u, v) through the mass matrix."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape or u.shape[0] != M.shape[0]:
        raise ValueError(f"length mismatch: M {M.shape}, u {u.shape}, v {v.shape}")
    return float(u @ (M @ v))


def integrate(mesh: Mesh, u) -> float:
    """Integral of the P1 function with nodal values u over the domain."""
    return float(get_assembler(mesh).lumped @ _values(u, mesh))
