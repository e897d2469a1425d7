"""Effective tensor A0, volume statistics rho and theta, and the ellipticity
checks that certify the homogenized coefficients.

A0 is assembled from Monte-Carlo averages of corrector window fluxes per unit
reference cell, divided by the mean deformed cell volume rho.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .corrector import CorrectorConfig, CorrectorSolution, solve_truncated
from .errors import EllipticityViolation, InsufficientSamples
from .fem import BilinearFormSpec, p1_gradient, triangle_geometry
from .geometry import DeformationMap, InterfaceSpec, jacobian_phi
from .meshing import PLUS


@dataclass
class EffectiveTensor:
    A0: np.ndarray
    stderr: np.ndarray
    N: int
    rho: float
    theta: float
    config_hash: str = ""


def _disk_quadrature(center, radius, n_rad=32, n_ang=256):
    """Tensor quadrature on a disk: Gauss-Legendre radially, trapezoid (exact
    for periodic smooth integrands) angularly.  Returns points, weights."""
    x, w = np.polynomial.legendre.leggauss(n_rad)
    rho = 0.5 * radius * (x + 1.0)
    wr = 0.5 * radius * w * rho  # includes the polar Jacobian
    theta = 2.0 * np.pi * np.arange(n_ang) / n_ang
    wt = np.full(n_ang, 2.0 * np.pi / n_ang)
    pts = center + np.stack(
        [
            np.outer(rho, np.cos(theta)),
            np.outer(rho, np.sin(theta)),
        ],
        axis=-1,
    ).reshape(-1, 2)
    return pts, np.outer(wr, wt).ravel()


def _square_quadrature(n=64):
    x, w = np.polynomial.legendre.leggauss(n)
    t = 0.5 * (x + 1.0)
    wt = 0.5 * w
    gx, gy = np.meshgrid(t, t, indexing="ij")
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    return pts, np.outer(wt, wt).ravel()


def _det_jacobian(dmap: DeformationMap, pts: np.ndarray) -> np.ndarray:
    J = jacobian_phi(dmap, pts)
    return J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]


def volume_stats(
    map_factory: Callable[[int], DeformationMap],
    seeds,
    spec: InterfaceSpec = None,
) -> dict:
    """rho = mean of int_Y det(grad Phi) and theta = mean of
    int_{Y-} det(grad Phi) / rho over the central cell, with standard errors."""
    if spec is None:
        spec = InterfaceSpec()
    seeds = list(seeds)
    if not seeds:
        raise ValueError("need at least one seed")
    sq_pts, sq_w = _square_quadrature()
    dk_pts, dk_w = _disk_quadrature(np.asarray(spec.center), spec.radius)
    cell_vols = []
    minus_vols = []
    for s in seeds:
        dmap = map_factory(s)
        cell_vols.append(float(_det_jacobian(dmap, sq_pts) @ sq_w))
        minus_vols.append(float(_det_jacobian(dmap, dk_pts) @ dk_w))
    cell_vols = np.array(cell_vols)
    minus_vols = np.array(minus_vols)
    rho = cell_vols.mean()
    theta = minus_vols.mean() / rho
    n = len(seeds)
    rho_se = cell_vols.std(ddof=1) / np.sqrt(n) if n > 1 else 0.0
    theta_se = (minus_vols / rho).std(ddof=1) / np.sqrt(n) if n > 1 else 0.0
    return {"rho": rho, "theta": theta, "rho_stderr": float(rho_se), "theta_stderr": float(theta_se)}


@dataclass
class EffectiveRun:
    """The two directional corrector solves for one realization."""

    seed: int
    corr: dict  # direction label -> CorrectorSolution


def corrector_runs(
    map_factory: Callable[[int], DeformationMap],
    seeds,
    cfg: CorrectorConfig = None,
    conductivity=None,
) -> list[EffectiveRun]:
    if cfg is None:
        cfg = CorrectorConfig()
    runs = []
    for s in seeds:
        dmap = map_factory(s)
        corr = {}
        for label, p in (("e1", [1.0, 0.0]), ("e2", [0.0, 1.0])):
            c = CorrectorConfig(
                p=p, delta=cfg.delta, n=cfg.n, m=cfg.m, h=cfg.h, seed=s,
                interface=cfg.interface, membranes=cfg.membranes,
            )
            corr[label] = solve_truncated(c, dmap, conductivity=conductivity)
        runs.append(EffectiveRun(seed=s, corr=corr))
    return runs


def effective_tensor(
    runs: list[EffectiveRun], rho: float, config_hash: str = "", theta: float = float("nan")
) -> EffectiveTensor:
    """a0_ij = (1/rho) * mean over seeds of e_j . window flux for p = e_i."""
    if len(runs) < 2:
        raise InsufficientSamples(f"need >= 2 seeds for a standard error, got {len(runs)}")
    samples = np.array(
        [[run.corr["e1"].window_flux(), run.corr["e2"].window_flux()] for run in runs]
    )  # (N, 2, 2), rows = directions
    A0 = samples.mean(axis=0) / rho
    stderr = samples.std(axis=0, ddof=1) / (rho * np.sqrt(len(runs)))
    return EffectiveTensor(
        A0=A0, stderr=stderr, N=len(runs), rho=rho, theta=theta, config_hash=config_hash
    )


def _window_energy(corr: CorrectorSolution, partner: CorrectorSolution, xi) -> float:
    """Window average per cell of int (xi + grad w_xi) . A (xi + grad w_xi)
    plus the interface jump energy, physical configuration, where w_xi is the
    linear combination xi_1 w_e1 + xi_2 w_e2."""
    xi = np.asarray(xi, dtype=float)
    mesh = corr.mesh
    values = xi[0] * corr.sol.values + xi[1] * partner.sol.values
    form = BilinearFormSpec(jump_weight=1.0, mass_weight=0.0)
    tensor = form.tensor(mesh)
    areas, _ = triangle_geometry(mesh)
    g = p1_gradient(mesh, values) + xi
    e_tri = areas * np.einsum("ti,tij,tj->t", g, tensor, g)

    cells = corr.cells
    index = {tuple(k): i for i, k in enumerate(cells)}
    tri_idx = np.array([index[tuple(k)] for k in mesh.tri_cell])
    per_cell = np.zeros(len(cells))
    np.add.at(per_cell, tri_idx, e_tri)

    edges, edge_cells = mesh.interface_edges_with_cells()
    if len(edges):
        L = np.linalg.norm(mesh.vertices[edges[:, 1]] - mesh.vertices[edges[:, 0]], axis=1)
        ja = values[edges[:, 0]] - values[edges[:, 2]]
        jb = values[edges[:, 1]] - values[edges[:, 3]]
        e_j = L / 6.0 * (2.0 * ja**2 + 2.0 * ja * jb + 2.0 * jb**2)
        eidx = np.array([index[tuple(k)] for k in edge_cells])
        np.add.at(per_cell, eidx, e_j)

    m = corr.config.m
    c = cells.mean(axis=0) + 0.5
    inside = np.all(np.abs(cells + 0.5 - c) <= m - 0.5 + 1e-9, axis=1)
    return float(per_cell[inside].sum() / inside.sum())


def energy_identity_residual(runs: list[EffectiveRun], t: EffectiveTensor, xi) -> float:
    """|xi . A0 xi - (1/rho) E[window energy of w_xi]|, the quadratic-form
    consistency between the flux average and the energy average."""
    xi = np.asarray(xi, dtype=float)
    lhs = float(xi @ t.A0 @ xi)
    energies = [
        _window_energy(run.corr["e1"], run.corr["e2"], xi) for run in runs
    ]
    rhs = float(np.mean(energies)) / t.rho
    return abs(lhs - rhs)


def ellipticity_check(
    t: EffectiveTensor, lam: float, Lam: float, runs: list[EffectiveRun] = None
) -> dict:
    """Eigenvalue bounds and the energy-identity residuals for the canonical
    test directions; raises EllipticityViolation on failure."""
    sym_gap = float(np.abs(t.A0 - t.A0.T).max())
    eig = np.linalg.eigvalsh(0.5 * (t.A0 + t.A0.T))
    se = float(t.stderr.max())
    verdict = {
        "eigenvalues": eig.tolist(),
        "symmetry_gap": sym_gap,
        "stderr_max": se,
    }
    if eig.min() <= 0.0:
        raise EllipticityViolation(f"nonpositive eigenvalue {eig.min():.6g}")
    if eig.max() > Lam + 3.0 * se:
        raise EllipticityViolation(
            f"max eigenvalue {eig.max():.6g} exceeds {Lam} + 3*stderr"
        )
    if runs is not None:
        s = 1.0 / np.sqrt(2.0)
        residuals = {
            "e1": energy_identity_residual(runs, t, [1.0, 0.0]),
            "e2": energy_identity_residual(runs, t, [0.0, 1.0]),
            "diag": energy_identity_residual(runs, t, [s, s]),
        }
        verdict["energy_identity_residuals"] = residuals
    return verdict


def write_effective_json(path, t: EffectiveTensor) -> None:
    payload = {
        "A0": t.A0.tolist(),
        "stderr": t.stderr.tolist(),
        "rho": t.rho,
        "theta": t.theta,
        "N": t.N,
        "config_hash": t.config_hash,
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_effective_json(path) -> EffectiveTensor:
    with open(path) as fh:
        d = json.load(fh)
    return EffectiveTensor(
        A0=np.array(d["A0"]),
        stderr=np.array(d["stderr"]),
        N=d["N"],
        rho=d["rho"],
        theta=d["theta"],
        config_hash=d.get("config_hash", ""),
    )
