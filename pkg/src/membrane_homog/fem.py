"""P1 finite elements for the membrane transmission form.

One bilinear form covers every solve in the workbench:

    a(u, v) = sum_T int_T grad(v) . A grad(u)
            + delta * int u v
            + gamma * sum_{e in interface} int_e (u+ - u-)(v+ - v-) ds

with A constant per triangle (evaluated at the reference centroid), the jump
term assembled on the duplicated interface node pairs, and Dirichlet
constraints eliminated symmetrically.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import NonEllipticField, SolverDivergence
from .meshing import MINUS, PLUS, MembraneMesh

CG_RTOL = 1e-10


def identity_field(points: np.ndarray) -> np.ndarray:
    out = np.zeros((len(points), 2, 2))
    out[:, 0, 0] = 1.0
    out[:, 1, 1] = 1.0
    return out


def aniso_field(points: np.ndarray) -> np.ndarray:
    """diag(1 + 0.5 sin^2(2 pi y1), 1), periodic in the reference coordinate."""
    out = np.zeros((len(points), 2, 2))
    out[:, 0, 0] = 1.0 + 0.5 * np.sin(2.0 * np.pi * points[:, 0]) ** 2
    out[:, 1, 1] = 1.0
    return out


CONDUCTIVITY_PRESETS = {"identity": identity_field, "aniso": aniso_field}


@dataclass
class BilinearFormSpec:
    """Coefficients of the transmission form.

    ``conductivity`` maps reference-coordinate points (n, 2) to (n, 2, 2)
    symmetric matrices with eigenvalues in [lam, Lam].
    """

    conductivity: Callable[[np.ndarray], np.ndarray] = identity_field
    jump_weight: float = 0.0
    mass_weight: float = 0.0
    lam: float = 1.0
    Lam: float = 1.5

    def tensor(self, mesh: MembraneMesh) -> np.ndarray:
        """Per-triangle conductivity at reference centroids, ellipticity
        checked by sampled eigenvalues."""
        cent = mesh.ref_vertices[mesh.triangles].mean(axis=1)
        A = self.conductivity(cent)
        if np.abs(A - np.transpose(A, (0, 2, 1))).max() > 1e-12:
            raise NonEllipticField("conductivity not symmetric")
        eig = np.linalg.eigvalsh(A)
        if eig.min() < self.lam - 1e-9 or eig.max() > self.Lam + 1e-9:
            raise NonEllipticField(
                f"sampled eigenvalues in [{eig.min():.3g}, {eig.max():.3g}] "
                f"outside [{self.lam}, {self.Lam}]"
            )
        return A


@dataclass
class DiscreteSystem:
    matrix: sp.csr_matrix
    load: np.ndarray
    fixed: np.ndarray
    fixed_values: np.ndarray
    mesh: MembraneMesh
    spec: BilinearFormSpec

    @property
    def free(self) -> np.ndarray:
        mask = np.ones(len(self.load), dtype=bool)
        mask[self.fixed] = False
        return np.flatnonzero(mask)


@dataclass
class FemSolution:
    values: np.ndarray
    mesh: MembraneMesh
    iterations: int = 0


def triangle_geometry(mesh: MembraneMesh):
    """Areas (nt,) and P1 basis gradients (nt, 3, 2), physical coordinates."""
    v = mesh.vertices
    t = mesh.triangles
    d1 = v[t[:, 1]] - v[t[:, 0]]
    d2 = v[t[:, 2]] - v[t[:, 0]]
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    areas = 0.5 * det
    grads = np.zeros((len(t), 3, 2))
    grads[:, 1, 0] = d2[:, 1] / det
    grads[:, 1, 1] = -d2[:, 0] / det
    grads[:, 2, 0] = -d1[:, 1] / det
    grads[:, 2, 1] = d1[:, 0] / det
    grads[:, 0] = -grads[:, 1] - grads[:, 2]
    return areas, grads


def assemble_stiffness(mesh: MembraneMesh, tensor: np.ndarray) -> sp.csr_matrix:
    areas, grads = triangle_geometry(mesh)
    Ag = np.einsum("tij,tkj->tki", tensor, grads)
    Ke = np.einsum("t,tid,tjd->tij", areas, grads, Ag)
    t = mesh.triangles
    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    nv = mesh.num_vertices
    return sp.coo_matrix((Ke.ravel(), (rows, cols)), shape=(nv, nv)).tocsr()


def assemble_mass(mesh: MembraneMesh) -> sp.csr_matrix:
    areas, _ = triangle_geometry(mesh)
    Me = np.tile((np.ones((3, 3)) + np.eye(3)) / 12.0, (len(areas), 1, 1))
    Me *= areas[:, None, None]
    t = mesh.triangles
    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    nv = mesh.num_vertices
    return sp.coo_matrix((Me.ravel(), (rows, cols)), shape=(nv, nv)).tocsr()


def assemble_jump(mesh: MembraneMesh) -> sp.csr_matrix:
    """Unweighted jump form sum_e int_e (u+ - u-)(v+ - v-) ds on the
    deformed interface polyline (edge mass matrices, exact for P1)."""
    nv = mesh.num_vertices
    edges = mesh.interface_edges()
    if len(edges) == 0:
        return sp.csr_matrix((nv, nv))
    v = mesh.vertices
    L = np.linalg.norm(v[edges[:, 1]] - v[edges[:, 0]], axis=1)
    base = np.array(
        [
            [2.0, 1.0, -2.0, -1.0],
            [1.0, 2.0, -1.0, -2.0],
            [-2.0, -1.0, 2.0, 1.0],
            [-1.0, -2.0, 1.0, 2.0],
        ]
    )
    Ke = (L / 6.0)[:, None, None] * base
    dofs = edges[:, [0, 1, 2, 3]]
    rows = np.repeat(dofs, 4, axis=1).ravel()
    cols = np.tile(dofs, (1, 4)).ravel()
    return sp.coo_matrix((Ke.ravel(), (rows, cols)), shape=(nv, nv)).tocsr()


def volume_load(mesh: MembraneMesh, f) -> np.ndarray:
    """int f phi_i with f constant per triangle (centroid value)."""
    areas, _ = triangle_geometry(mesh)
    if callable(f):
        fc = f(mesh.vertices[mesh.triangles].mean(axis=1))
    else:
        fc = np.full(len(areas), float(f))
    b = np.zeros(mesh.num_vertices)
    contrib = areas * fc / 3.0
    for i in range(3):
        np.add.at(b, mesh.triangles[:, i], contrib)
    return b


def gradient_load(mesh: MembraneMesh, tensor: np.ndarray, p: np.ndarray) -> np.ndarray:
    """-int A p . grad(phi_i), the corrector load for mean gradient p."""
    areas, grads = triangle_geometry(mesh)
    Ap = np.einsum("tij,j->ti", tensor, np.asarray(p, dtype=float))
    contrib = -np.einsum("t,ti,tji->tj", areas, Ap, grads)
    b = np.zeros(mesh.num_vertices)
    for i in range(3):
        np.add.at(b, mesh.triangles[:, i], contrib[:, i])
    return b


def assemble(
    mesh: MembraneMesh,
    spec: BilinearFormSpec,
    f=None,
    p=None,
    dirichlet: np.ndarray = None,
    dirichlet_values: np.ndarray = None,
) -> DiscreteSystem:
    """Full transmission form with volume source f and/or corrector load p.

    ``dirichlet`` defaults to the mesh boundary nodes; pass an empty array
    for unconstrained (e.g. periodic) systems.
    """
    tensor = spec.tensor(mesh)
    K = assemble_stiffness(mesh, tensor)
    if spec.mass_weight != 0.0:
        K = K + spec.mass_weight * assemble_mass(mesh)
    if spec.jump_weight != 0.0:
        K = K + spec.jump_weight * assemble_jump(mesh)
    b = np.zeros(mesh.num_vertices)
    if f is not None:
        b += volume_load(mesh, f)
    if p is not None:
        b += gradient_load(mesh, tensor, p)
    if dirichlet is None:
        dirichlet = mesh.boundary_nodes
    dirichlet = np.asarray(dirichlet, dtype=np.int64)
    if dirichlet_values is None:
        dirichlet_values = np.zeros(len(dirichlet))
    return DiscreteSystem(
        matrix=K, load=b, fixed=dirichlet, fixed_values=dirichlet_values,
        mesh=mesh, spec=spec,
    )


def _cg(K, b, x0=None, rtol=CG_RTOL, maxiter=None):
    diag = K.diagonal()
    diag = np.where(diag > 0, diag, 1.0)
    M = sp.diags(1.0 / diag)
    try:
        x, info = spla.cg(K, b, x0=x0, rtol=rtol, maxiter=maxiter, M=M)
    except TypeError:  # scipy < 1.12 spells the tolerance differently
        x, info = spla.cg(K, b, x0=x0, tol=rtol, atol=0.0, maxiter=maxiter, M=M)
    if info > 0:
        raise SolverDivergence(f"CG did not converge in {info} iterations")
    return x


def solve(system: DiscreteSystem, x0: np.ndarray = None) -> FemSolution:
    """Jacobi-preconditioned CG on the free degrees of freedom."""
    nv = len(system.load)
    u = np.zeros(nv)
    u[system.fixed] = system.fixed_values
    free = system.free
    K = system.matrix
    b = system.load[free] - K[free][:, system.fixed] @ system.fixed_values
    Kff = K[free][:, free]
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return FemSolution(values=u, mesh=system.mesh)
    maxiter = int(50 * np.sqrt(len(free))) + 10
    x0f = x0[free] if x0 is not None else None
    u[free] = _cg(Kff, b, x0=x0f, maxiter=maxiter)
    return FemSolution(values=u, mesh=system.mesh)


def p1_gradient(mesh: MembraneMesh, values: np.ndarray) -> np.ndarray:
    """Piecewise-constant gradient (nt, 2)."""
    _, grads = triangle_geometry(mesh)
    return np.einsum("tid,ti->td", grads, values[mesh.triangles])


def norms(sol: FemSolution) -> dict:
    """W-norm components: gradient L2 per region, interface jump L2, u L2."""
    mesh = sol.mesh
    areas, _ = triangle_geometry(mesh)
    g = p1_gradient(mesh, sol.values)
    g2 = np.einsum("td,td->t", g, g)
    plus = mesh.tri_region == PLUS
    minus = mesh.tri_region == MINUS
    out = {
        "grad_plus_L2": float(np.sqrt(np.sum(areas[plus] * g2[plus]))),
        "grad_minus_L2": float(np.sqrt(np.sum(areas[minus] * g2[minus]))),
    }
    M = assemble_mass(mesh)
    out["u_L2"] = float(np.sqrt(sol.values @ (M @ sol.values)))
    J = assemble_jump(mesh)
    out["jump_L2_on_interface"] = float(np.sqrt(max(sol.values @ (J @ sol.values), 0.0)))
    return out


def flux_pairing(sol: FemSolution, spec: BilinearFormSpec, psi) -> float:
    """int_D (chi+ A grad(u+) + chi- A grad(u-)) . psi by centroid quadrature;
    psi maps physical points (n, 2) to vectors (n, 2)."""
    mesh = sol.mesh
    areas, _ = triangle_geometry(mesh)
    tensor = spec.tensor(mesh)
    g = p1_gradient(mesh, sol.values)
    flux = np.einsum("tij,tj->ti", tensor, g)
    cent = mesh.vertices[mesh.triangles].mean(axis=1)
    return float(np.einsum("t,ti,ti->", areas, flux, np.asarray(psi(cent))))


def mass_pairing(sol: FemSolution, phi, region: int = None) -> float:
    """int u phi by centroid quadrature, optionally restricted to a region."""
    mesh = sol.mesh
    areas, _ = triangle_geometry(mesh)
    uc = sol.values[mesh.triangles].mean(axis=1)
    pc = np.asarray(phi(mesh.vertices[mesh.triangles].mean(axis=1)))
    if region is not None:
        mask = mesh.tri_region == region
        return float(np.sum(areas[mask] * uc[mask] * pc[mask]))
    return float(np.sum(areas * uc * pc))


def export_solution(sol: FemSolution, path) -> None:
    """CSV `node_id,x,y,region,value`; region is +1/-1 by incident triangles
    (interface nodes carry their own side, 0 for nodes touching both)."""
    mesh = sol.mesh
    reg = np.zeros(mesh.num_vertices, dtype=np.int64)
    for side in (PLUS, MINUS):
        nodes = np.unique(mesh.triangles[mesh.tri_region == side])
        reg[nodes] += side
    lines = ["node_id,x,y,region,value"]
    for i, ((x, y), r, u) in enumerate(zip(mesh.vertices, reg, sol.values)):
        lines.append(f"{i},{x:.17g},{y:.17g},{r},{u:.17g}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
