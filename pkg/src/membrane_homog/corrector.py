"""Truncated and periodic corrector solves.

The corrector w_p answers: given a mean gradient p, what microscale
perturbation makes p + grad(w) a valid flux field across the membranes?  On
the truncated deformed cube it is computed with a small zero-order
regularization delta and zero Dirichlet data; the periodic single-cell solve
(identity map only) serves as the exact-geometry oracle.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError
from .fem import (
    BilinearFormSpec,
    FemSolution,
    assemble,
    assemble_jump,
    assemble_mass,
    assemble_stiffness,
    p1_gradient,
    solve,
    triangle_geometry,
)
from .geometry import DeformationMap, IdentityMap, InterfaceSpec
from .meshing import (
    MINUS,
    PLUS,
    MembraneMesh,
    build_cell_mesh,
    build_truncated_mesh,
)


@dataclass
class CorrectorConfig:
    p: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0]))
    delta: float = 1e-3
    n: int = 8
    m: int = 4
    h: float = 0.05
    seed: int = 0
    interface: InterfaceSpec = field(default_factory=InterfaceSpec)
    membranes: bool = True

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=float)
        if not 0.0 < self.delta <= 1.0:
            raise ConfigError(f"delta must be in (0, 1], got {self.delta}")
        if not 1 <= self.m <= self.n - 1:
            raise ConfigError(f"m must satisfy 1 <= m <= n-1, got m={self.m} n={self.n}")


@dataclass
class CorrectorSolution:
    sol: FemSolution
    config: CorrectorConfig
    cells: np.ndarray  # (nc, 2) lattice cells
    flux_plus: np.ndarray  # (nc, 2) int over Phi(Y_k^+) of A (p + grad w)
    flux_minus: np.ndarray  # (nc, 2)
    cell_energy: np.ndarray  # (nc,) reference-configuration energy per cell
    cell_jump_l2sq: np.ndarray  # (nc,) reference jump L2 squared per cell

    @property
    def mesh(self) -> MembraneMesh:
        return self.sol.mesh

    def window_flux(self, m: int = None) -> np.ndarray:
        """Average of F_k^+ + F_k^- over the cells of Q_m + center, per unit
        reference cell."""
        if m is None:
            m = self.config.m
        c = self.cells.mean(axis=0) + 0.5  # lattice center of the solve
        inside = np.all(np.abs(self.cells + 0.5 - c) <= m - 0.5 + 1e-9, axis=1)
        if not inside.any():
            raise ValueError(f"empty window m={m}")
        return (self.flux_plus[inside] + self.flux_minus[inside]).sum(axis=0) / inside.sum()


def _per_cell_quantities(
    mesh: MembraneMesh, form: BilinearFormSpec, values: np.ndarray, p: np.ndarray
):
    """Per-cell physical fluxes and reference-configuration energies."""
    cells = np.unique(mesh.tri_cell, axis=0)
    index = {tuple(k): i for i, k in enumerate(cells)}
    tri_idx = np.array([index[tuple(k)] for k in mesh.tri_cell])

    tensor = form.tensor(mesh)
    areas, _ = triangle_geometry(mesh)
    g = p1_gradient(mesh, values)
    flux = np.einsum("tij,tj->ti", tensor, g + p)
    fp = np.zeros((len(cells), 2))
    fm = np.zeros((len(cells), 2))
    for d in range(2):
        wf = areas * flux[:, d]
        plus = mesh.tri_region == PLUS
        np.add.at(fp[:, d], tri_idx[plus], wf[plus])
        np.add.at(fm[:, d], tri_idx[~plus], wf[~plus])

    # reference-configuration energy: same nodal values, lattice coordinates
    ref = MembraneMesh(
        vertices=mesh.ref_vertices,
        triangles=mesh.triangles,
        tri_region=mesh.tri_region,
        tri_cell=mesh.tri_cell,
        interface_pairs=mesh.interface_pairs,
        boundary_nodes=mesh.boundary_nodes,
        h=mesh.h,
    )
    ref_areas, ref_grads = triangle_geometry(ref)
    gref = np.einsum("tid,ti->td", ref_grads, values[mesh.triangles])
    e_grad = ref_areas * np.einsum("td,td->t", gref, gref)
    uc2 = (values[mesh.triangles] ** 2).sum(axis=1) + (
        values[mesh.triangles].sum(axis=1) ** 2
    )
    e_mass = form.mass_weight * ref_areas * uc2 / 12.0  # exact P1 mass per triangle
    energy = np.zeros(len(cells))
    np.add.at(energy, tri_idx, e_grad + e_mass)

    jump2 = np.zeros(len(cells))
    edges, edge_cells = mesh.interface_edges_with_cells()
    if len(edges):
        L = np.linalg.norm(
            mesh.ref_vertices[edges[:, 1]] - mesh.ref_vertices[edges[:, 0]], axis=1
        )
        ja = values[edges[:, 0]] - values[edges[:, 2]]
        jb = values[edges[:, 1]] - values[edges[:, 3]]
        e_j = L / 6.0 * (2.0 * ja**2 + 2.0 * ja * jb + 2.0 * jb**2)
        eidx = np.array([index[tuple(k)] for k in edge_cells])
        np.add.at(jump2, eidx, e_j)
    energy += jump2
    return cells, fp, fm, energy, jump2


def solve_truncated(
    cfg: CorrectorConfig,
    dmap: DeformationMap,
    conductivity=None,
    center: tuple[int, int] = (0, 0),
    x0: np.ndarray = None,
) -> CorrectorSolution:
    """Regularized corrector on the deformed truncated cube: jump weight 1,
    mass weight delta, load -int A p . grad(phi), zero Dirichlet data."""
    cell = build_cell_mesh(cfg.interface, cfg.h)
    mesh = build_truncated_mesh(cell, dmap, cfg.n, center=center, membranes=cfg.membranes)
    form = BilinearFormSpec(jump_weight=1.0, mass_weight=cfg.delta)
    if conductivity is not None:
        form = replace(form, conductivity=conductivity)
    system = assemble(mesh, form, p=cfg.p)
    sol = solve(system, x0=x0)
    cells, fp, fm, energy, jump2 = _per_cell_quantities(mesh, form, sol.values, cfg.p)
    return CorrectorSolution(
        sol=sol, config=cfg, cells=cells, flux_plus=fp, flux_minus=fm,
        cell_energy=energy, cell_jump_l2sq=jump2,
    )


def periodic_cell_solve(
    p, spec: InterfaceSpec, conductivity=None, h: float = 0.05
) -> CorrectorSolution:
    """Single-cell corrector with periodic identification of opposite
    boundary nodes, jump weight 1, no regularization, PLUS-mean-zero gauge.
    Identity deformation only."""
    p = np.asarray(p, dtype=float)
    mesh = build_cell_mesh(spec, h)
    form = BilinearFormSpec(jump_weight=1.0, mass_weight=0.0)
    if conductivity is not None:
        form = replace(form, conductivity=conductivity)
    system = assemble(mesh, form, p=p, dirichlet=np.zeros(0, dtype=np.int64))

    # fold periodic partners onto canonical representatives
    nv = mesh.num_vertices
    canon = np.arange(nv)
    v = mesh.vertices
    for b in mesh.boundary_nodes:
        x, y = v[b]
        cx = 0.0 if x == 1.0 else x
        cy = 0.0 if y == 1.0 else y
        if cx != x or cy != y:
            match = np.flatnonzero(
                (np.abs(v[mesh.boundary_nodes, 0] - cx) < 1e-12)
                & (np.abs(v[mesh.boundary_nodes, 1] - cy) < 1e-12)
            )
            canon[b] = mesh.boundary_nodes[match[0]]
    reps, inv = np.unique(canon, return_inverse=True)
    P = sp.coo_matrix((np.ones(nv), (np.arange(nv), inv)), shape=(nv, len(reps))).tocsr()
    K = (P.T @ system.matrix @ P).tocsr()
    b = P.T @ system.load

    # nullspace = global constants: pin one DOF, restore gauge afterwards
    pin = 0
    keep = np.arange(1, len(reps))
    from .fem import _cg

    x = np.zeros(len(reps))
    Kff = K[keep][:, keep]
    maxiter = int(50 * np.sqrt(len(keep))) + 10
    x[keep] = _cg(Kff, b[keep], maxiter=maxiter)
    values = P @ x

    # subtract the PLUS-region mean (area-weighted)
    areas, _ = triangle_geometry(mesh)
    plus = mesh.tri_region == PLUS
    uc = values[mesh.triangles].mean(axis=1)
    mean = np.sum(areas[plus] * uc[plus]) / np.sum(areas[plus])
    values = values - mean

    sol = FemSolution(values=values, mesh=mesh)
    cfg = CorrectorConfig(p=p, delta=1.0, n=2, m=1, h=h, interface=spec)
    cells, fp, fm, energy, jump2 = _per_cell_quantities(mesh, form, values, p)
    return CorrectorSolution(
        sol=sol, config=cfg, cells=cells, flux_plus=fp, flux_minus=fm,
        cell_energy=energy, cell_jump_l2sq=jump2,
    )


def energy_profile(corr: CorrectorSolution) -> np.ndarray:
    """E_k for k = 1..n: cumulative reference-configuration energy (gradient,
    delta-mass, interface jump) over the cells of Q_k + center."""
    n = corr.config.n
    c = corr.cells.mean(axis=0) + 0.5
    dist = np.abs(corr.cells + 0.5 - c).max(axis=1)  # cell center Chebyshev dist
    out = np.zeros(n)
    for k in range(1, n + 1):
        out[k - 1] = corr.cell_energy[dist <= k - 0.5 + 1e-9].sum()
    return out


def sublinearity_diagnostic(sols: list[CorrectorSolution]) -> np.ndarray:
    """s_n = max_{Q_n} |w| / n for each solution."""
    return np.array([np.abs(c.sol.values).max() / c.config.n for c in sols])


def write_flux_csv(path, rows) -> None:
    """rows: (seed, p_label, delta, n, m, F) with F the 2x2 window flux whose
    rows are the solve directions."""
    lines = ["seed,p,delta,n,m,F11,F12,F21,F22"]
    for seed, plabel, delta, n, m, F in rows:
        vals = ",".join(f"{x:.17g}" for x in np.asarray(F).ravel())
        lines.append(f"{seed},{plabel},{delta:.17g},{n},{m},{vals}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def write_energy_csv(path, rows) -> None:
    """rows: (seed, E) with E the energy profile array."""
    lines = ["seed,k,E_k"]
    for seed, E in rows:
        for k, e in enumerate(E, start=1):
            lines.append(f"{seed},{k},{e:.17g}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
