"""The convergence harness: heterogeneous membrane solves across an epsilon
sweep against the homogenized constant-coefficient solve, with every limit
statement turned into a measurable residual."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateFit, MeshMismatch
from .fem import (
    BilinearFormSpec,
    FemSolution,
    assemble,
    flux_pairing,
    norms,
    solve,
    triangle_geometry,
)
from .geometry import DeformationMap, InterfaceSpec
from .meshing import MINUS, build_cell_mesh, build_square_mesh, tile_domain_mesh


def bump_profile(pts: np.ndarray) -> np.ndarray:
    """b = (x1 (1-x1) x2 (1-x2))^2, the compactly supported test envelope."""
    x, y = pts[:, 0], pts[:, 1]
    return (x * (1.0 - x) * y * (1.0 - y)) ** 2


SCALAR_TEST_FIELDS = (
    lambda p: bump_profile(p),
    lambda p: bump_profile(p) * p[:, 0],
    lambda p: bump_profile(p) * p[:, 1],
    lambda p: bump_profile(p) * p[:, 0] * p[:, 1],
)

VECTOR_TEST_FIELDS = (
    lambda p: np.column_stack([bump_profile(p), np.zeros(len(p))]),
    lambda p: np.column_stack([np.zeros(len(p)), bump_profile(p)]),
    lambda p: np.column_stack([bump_profile(p) * p[:, 1], bump_profile(p) * p[:, 0]]),
)


def solve_hetero(
    eps: float,
    dmap: DeformationMap,
    f,
    conductivity=None,
    spec: InterfaceSpec = None,
    h_cell: float = 0.05,
    membranes_rule: str = "on",
) -> FemSolution:
    """Transmission problem with jump weight 1/eps and zero Dirichlet data."""
    if spec is None:
        spec = InterfaceSpec()
    cell = build_cell_mesh(spec, h_cell)
    mesh = tile_domain_mesh(cell, dmap, eps, spec, membranes_rule=membranes_rule)
    form = BilinearFormSpec(jump_weight=1.0 / eps)
    if conductivity is not None:
        form = BilinearFormSpec(conductivity=conductivity, jump_weight=1.0 / eps)
    return solve(assemble(mesh, form, f=f))


def constant_field(A0: np.ndarray):
    A0 = np.asarray(A0, dtype=float)

    def field(points):
        return np.broadcast_to(A0, (len(points), 2, 2)).copy()

    return field


def solve_homog(A0: np.ndarray, f, m: int = 128) -> FemSolution:
    """Constant-coefficient Dirichlet solve on the uniform fine grid."""
    A0 = np.asarray(A0, dtype=float)
    eig = np.linalg.eigvalsh(0.5 * (A0 + A0.T))
    mesh = build_square_mesh(m)
    form = BilinearFormSpec(
        conductivity=constant_field(A0), lam=float(eig.min()) - 1e-12,
        Lam=float(eig.max()) + 1e-12,
    )
    return solve(assemble(mesh, form, f=f))


def grid_interpolate(sol: FemSolution, pts: np.ndarray) -> np.ndarray:
    """P1 evaluation of a uniform-square-mesh solution at arbitrary points."""
    mesh = sol.mesh
    m = round(1.0 / mesh.h)
    if abs(m * mesh.h - 1.0) > 1e-12:
        raise MeshMismatch("interpolation target is not a uniform square mesh")
    if pts.min() < -1e-12 or pts.max() > 1.0 + 1e-12:
        raise MeshMismatch("points outside the unit square")
    u = sol.values.reshape(m + 1, m + 1)  # index [i, j] at (i/m, j/m)
    s = np.clip(pts * m, 0.0, m * (1.0 - 1e-15))
    i = np.minimum(s[:, 0].astype(int), m - 1)
    j = np.minimum(s[:, 1].astype(int), m - 1)
    x = s[:, 0] - i
    y = s[:, 1] - j
    fa = u[i, j]
    fb = u[i + 1, j]
    fc = u[i + 1, j + 1]
    fd = u[i, j + 1]
    lower = x >= y  # triangle (a, b, c) below the cell diagonal
    out = np.where(
        lower,
        fa + (fb - fa) * x + (fc - fb) * y,
        fa + (fc - fd) * x + (fd - fa) * y,
    )
    return out


@dataclass
class ErrorRow:
    eps: float
    seed: int
    l2_error: float
    jump_l2: float
    jump_over_sqrt_eps: float
    flux_residuals: np.ndarray
    mass_residuals: np.ndarray
    grad_plus: float
    grad_minus: float


def error_suite(
    u_eps: FemSolution,
    u0: FemSolution,
    theta: float,
    eps: float,
    A0: np.ndarray,
    seed: int = 0,
    conductivity=None,
) -> ErrorRow:
    mesh = u_eps.mesh
    areas, _ = triangle_geometry(mesh)
    cent = mesh.vertices[mesh.triangles].mean(axis=1)
    ue_c = u_eps.values[mesh.triangles].mean(axis=1)
    u0_c = grid_interpolate(u0, cent)
    l2 = float(np.sqrt(np.sum(areas * (ue_c - u0_c) ** 2)))

    rec = norms(u_eps)
    jump = rec["jump_L2_on_interface"]

    form = BilinearFormSpec(jump_weight=1.0 / eps)
    if conductivity is not None:
        form = BilinearFormSpec(conductivity=conductivity, jump_weight=1.0 / eps)
    A0 = np.asarray(A0, dtype=float)
    eig = np.linalg.eigvalsh(0.5 * (A0 + A0.T))
    form0 = BilinearFormSpec(
        conductivity=constant_field(A0), lam=float(eig.min()) - 1e-12,
        Lam=float(eig.max()) + 1e-12,
    )
    flux_res = np.array(
        [
            abs(flux_pairing(u_eps, form, psi) - flux_pairing(u0, form0, psi))
            for psi in VECTOR_TEST_FIELDS
        ]
    )

    minus = mesh.tri_region == MINUS
    u0_pair = []
    ue_pair = []
    for phi in SCALAR_TEST_FIELDS:
        pc = phi(cent)
        ue_pair.append(float(np.sum(areas[minus] * ue_c[minus] * pc[minus])))
        c0 = u0.mesh.vertices[u0.mesh.triangles].mean(axis=1)
        a0, _ = triangle_geometry(u0.mesh)
        u0c = u0.values[u0.mesh.triangles].mean(axis=1)
        u0_pair.append(float(np.sum(a0 * u0c * phi(c0))))
    mass_res = np.abs(np.array(ue_pair) - theta * np.array(u0_pair))

    return ErrorRow(
        eps=eps,
        seed=seed,
        l2_error=l2,
        jump_l2=jump,
        jump_over_sqrt_eps=jump / np.sqrt(eps),
        flux_residuals=flux_res,
        mass_residuals=mass_res,
        grad_plus=rec["grad_plus_L2"],
        grad_minus=rec["grad_minus_L2"],
    )


def rate_fit(eps_values, errors) -> tuple[float, float]:
    """Least-squares slope of log error against log eps, with R^2."""
    eps_values = np.asarray(eps_values, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if len(eps_values) < 3:
        raise ValueError("rate fit needs at least 3 points")
    if np.any(errors <= 1e-14):
        raise DegenerateFit("error at round-off level, rate fit meaningless")
    x = np.log(eps_values)
    y = np.log(errors)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum(resid**2) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(r2)


CSV_HEADER = (
    "seed,eps,l2_error,jump_l2,jump_over_sqrt_eps,"
    "flux_res_1,flux_res_2,flux_res_3,"
    "mass_res_1,mass_res_2,mass_res_3,mass_res_4,grad_plus,grad_minus"
)


def write_convergence_csv(path, rows: list[ErrorRow]) -> None:
    lines = [CSV_HEADER]
    for r in rows:
        vals = [
            f"{r.eps:.17g}",
            f"{r.l2_error:.17g}",
            f"{r.jump_l2:.17g}",
            f"{r.jump_over_sqrt_eps:.17g}",
            *[f"{v:.17g}" for v in r.flux_residuals],
            *[f"{v:.17g}" for v in r.mass_residuals],
            f"{r.grad_plus:.17g}",
            f"{r.grad_minus:.17g}",
        ]
        lines.append(f"{r.seed}," + ",".join(vals))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def write_report_json(path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
