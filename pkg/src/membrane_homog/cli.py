"""Command-line experiment orchestration.

Subcommands build meshes, run corrector sweeps, assemble the effective
tensor, run the epsilon convergence study, and execute the property suite.
Configs are flat key-value text (or JSON); outputs are CSV and JSON written
deterministically so identical configs give byte-identical artifacts.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import hashlib
import json
import os
import sys
from dataclasses import asdict, dataclass, field

import numpy as np

from .corrector import (
    CorrectorConfig,
    energy_profile,
    solve_truncated,
    write_energy_csv,
    write_flux_csv,
)
from .effective import (
    corrector_runs,
    effective_tensor,
    ellipticity_check,
    read_effective_json,
    volume_stats,
    write_effective_json,
)
from .errors import ConfigError, MembraneHomogError
from .fem import CONDUCTIVITY_PRESETS
from .geometry import (
    BernoulliCellwiseMap,
    BumpMap,
    IdentityMap,
    InterfaceSpec,
    ScalingMap,
)
from .homogenize import (
    error_suite,
    rate_fit,
    solve_hetero,
    solve_homog,
    write_convergence_csv,
    write_report_json,
)
from .meshing import build_cell_mesh, export_mesh, mesh_report
from .verify import (
    backward_induction_bound,
    random_induction_instance,
    surface_integral_crosscheck,
)

SOURCE_PRESETS = {
    "constant": lambda pts: np.ones(len(pts)),
    "tilted": lambda pts: 1.0 + pts[:, 0] + 2.0 * pts[:, 1],
}


@dataclass
class ExperimentConfig:
    map: str = "identity"
    radius: float = 0.25
    amplitude: float = 0.1
    conductivity: str = "identity"
    h: float = 0.05
    delta: float = 1e-3
    n: int = 8
    m: int = 4
    seed: int = 0
    num_seeds: int = 1
    eps: list = field(default_factory=lambda: [0.25])
    source: str = "constant"
    homog_grid: int = 128
    instances: int = 1000

    def __post_init__(self):
        if self.map not in ("identity", "bump", "bernoulli"):
            raise ConfigError(f"map: unknown kind {self.map!r}")
        if not 0.0 < self.radius < 0.5:
            raise ConfigError(f"radius: must be in (0, 0.5), got {self.radius}")
        if self.conductivity not in CONDUCTIVITY_PRESETS:
            raise ConfigError(f"conductivity: unknown preset {self.conductivity!r}")
        if not 0.0 < self.h <= 0.25:
            raise ConfigError(f"h: must be in (0, 0.25], got {self.h}")
        if not 0.0 < self.delta <= 1.0:
            raise ConfigError(f"delta: must be in (0, 1], got {self.delta}")
        if not 1 <= self.m <= self.n - 1:
            raise ConfigError(f"m: must satisfy 1 <= m <= n-1, got m={self.m} n={self.n}")
        if self.num_seeds < 1:
            raise ConfigError(f"num_seeds: must be >= 1, got {self.num_seeds}")
        for e in self.eps:
            if not 0.0 < e <= 0.5:
                raise ConfigError(f"eps: each value must be in (0, 0.5], got {e}")
        if self.source not in SOURCE_PRESETS:
            raise ConfigError(f"source: unknown preset {self.source!r}")
        if self.instances < 1:
            raise ConfigError(f"instances: must be >= 1, got {self.instances}")

    @property
    def seeds(self) -> list:
        return list(range(self.seed, self.seed + self.num_seeds))

    @property
    def interface(self) -> InterfaceSpec:
        return InterfaceSpec(radius=self.radius)

    def map_factory(self):
        if self.map == "identity":
            return lambda s: IdentityMap()
        if self.map == "bump":
            return lambda s: BumpMap(amplitude=self.amplitude)
        return lambda s: BernoulliCellwiseMap(seed=s, amplitude=self.amplitude)

    def corrector_config(self) -> CorrectorConfig:
        return CorrectorConfig(
            delta=self.delta, n=self.n, m=self.m, h=self.h,
            interface=self.interface,
        )

    def hash(self) -> str:
        payload = json.dumps(asdict(self), sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


def _coerce(key: str, raw: str, default):
    try:
        if isinstance(default, bool):
            return raw.strip().lower() in ("1", "true", "yes", "on")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return _parse_number(raw)
        if isinstance(default, list):
            return [_parse_number(tok) for tok in raw.split(",") if tok.strip()]
        return raw.strip()
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse {raw.strip()!r}") from exc


def _parse_number(tok: str) -> float:
    tok = tok.strip()
    if "/" in tok:
        num, den = tok.split("/", 1)
        return float(num) / float(den)
    return float(tok)


def parse_config(path) -> ExperimentConfig:
    """Flat `key = value` lines with # comments; JSON accepted as well."""
    with open(path) as fh:
        text = fh.read()
    defaults = ExperimentConfig()
    if text.lstrip().startswith("{"):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON config: {exc}") from exc
    else:
        data = {}
        for lineno, line in enumerate(text.splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line or line.startswith("["):
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected key = value, got {line!r}")
            key, raw = line.split("=", 1)
            key = key.strip()
            if not hasattr(defaults, key):
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
            data[key] = _coerce(key, raw, getattr(defaults, key))
    unknown = set(data) - set(asdict(defaults))
    if unknown:
        raise ConfigError(f"unknown keys: {sorted(unknown)}")
    return ExperimentConfig(**data)


def resolve_jobs(args) -> int:
    if args.jobs is not None:
        return max(1, args.jobs)
    env = os.environ.get("MEMBRANE_HOMOG_JOBS")
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise ConfigError(f"MEMBRANE_HOMOG_JOBS: cannot parse {env!r}") from exc
    return 1


def _run_tasks(worker, tasks, jobs):
    """Map worker over keyed tasks; results returned in task order regardless
    of worker count or completion order."""
    if jobs <= 1 or len(tasks) <= 1:
        return [worker(t) for t in tasks]
    with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(worker, tasks))


def _corrector_task(task):
    cfg_dict, seed, label, p, map_kind, amplitude = task
    cfg = CorrectorConfig(
        p=p, delta=cfg_dict["delta"], n=cfg_dict["n"], m=cfg_dict["m"],
        h=cfg_dict["h"], seed=seed,
        interface=InterfaceSpec(radius=cfg_dict["radius"]),
    )
    dmap = _make_map(map_kind, amplitude, seed)
    conductivity = CONDUCTIVITY_PRESETS[cfg_dict["conductivity"]]
    corr = solve_truncated(cfg, dmap, conductivity=conductivity)
    return seed, label, corr.window_flux(), energy_profile(corr)


def _make_map(kind, amplitude, seed):
    if kind == "identity":
        return IdentityMap()
    if kind == "bump":
        return BumpMap(amplitude=amplitude)
    return BernoulliCellwiseMap(seed=seed, amplitude=amplitude)


def _hetero_task(task):
    cfg_dict, seed, eps = task
    dmap = _make_map(cfg_dict["map"], cfg_dict["amplitude"], seed)
    f = SOURCE_PRESETS[cfg_dict["source"]]
    conductivity = CONDUCTIVITY_PRESETS[cfg_dict["conductivity"]]
    spec = InterfaceSpec(radius=cfg_dict["radius"])
    sol = solve_hetero(
        eps, dmap, f, conductivity=conductivity, spec=spec, h_cell=cfg_dict["h"]
    )
    return seed, eps, sol


class OutputTracker:
    """Records files written by a command so a failure can clean them up."""

    def __init__(self, out_dir):
        self.out_dir = out_dir
        self.paths = []
        os.makedirs(out_dir, exist_ok=True)

    def path(self, name):
        p = os.path.join(self.out_dir, name)
        self.paths.append(p)
        return p

    def cleanup(self):
        for p in self.paths:
            if os.path.exists(p):
                os.remove(p)


def cmd_mesh(cfg: ExperimentConfig, out: OutputTracker, jobs: int) -> None:
    mesh = build_cell_mesh(cfg.interface, cfg.h)
    export_mesh(mesh, out.path("mesh.txt"))
    rep = mesh_report(mesh)
    print(
        f"mesh: {mesh.num_vertices} vertices, {len(mesh.triangles)} triangles, "
        f"min angle {rep.min_angle_deg:.2f} deg"
    )


def cmd_corrector(cfg: ExperimentConfig, out: OutputTracker, jobs: int) -> None:
    cd = asdict(cfg)
    tasks = [
        (cd, s, label, p, cfg.map, cfg.amplitude)
        for s in cfg.seeds
        for label, p in (("e1", [1.0, 0.0]), ("e2", [0.0, 1.0]))
    ]
    results = _run_tasks(_corrector_task, tasks, jobs)
    by_seed = {}
    for seed, label, flux, profile in results:
        by_seed.setdefault(seed, {})[label] = (flux, profile)
    flux_rows = []
    energy_rows = []
    for seed in cfg.seeds:
        F = np.array([by_seed[seed]["e1"][0], by_seed[seed]["e2"][0]])
        flux_rows.append((seed, "e1;e2", cfg.delta, cfg.n, cfg.m, F))
        energy_rows.append((seed, by_seed[seed]["e1"][1]))
    write_flux_csv(out.path("flux.csv"), flux_rows)
    write_energy_csv(out.path("energy.csv"), energy_rows)
    print(f"corrector: {len(cfg.seeds)} seeds -> flux.csv, energy.csv")


def cmd_effective(cfg: ExperimentConfig, out: OutputTracker, jobs: int) -> None:
    factory = cfg.map_factory()
    conductivity = CONDUCTIVITY_PRESETS[cfg.conductivity]
    runs = corrector_runs(factory, cfg.seeds, cfg.corrector_config(), conductivity)
    vs = volume_stats(factory, cfg.seeds, cfg.interface)
    t = effective_tensor(runs, rho=vs["rho"], config_hash=cfg.hash(), theta=vs["theta"])
    verdict = ellipticity_check(t, 1.0, 1.5, runs=runs)
    write_effective_json(out.path("effective.json"), t)
    eig = verdict["eigenvalues"]
    print(f"effective: A0 eigenvalues [{eig[0]:.6g}, {eig[1]:.6g}] -> effective.json")


def cmd_homogenize(cfg: ExperimentConfig, out: OutputTracker, jobs: int) -> None:
    eff_path = os.path.join(out.out_dir, "effective.json")
    if os.path.exists(eff_path):
        t = read_effective_json(eff_path)
    else:
        cmd_effective(cfg, out, jobs)
        t = read_effective_json(eff_path)
    f = SOURCE_PRESETS[cfg.source]
    u0 = solve_homog(t.A0, f, m=cfg.homog_grid)
    conductivity = CONDUCTIVITY_PRESETS[cfg.conductivity]

    cd = asdict(cfg)
    tasks = [(cd, s, e) for s in cfg.seeds for e in sorted(cfg.eps, reverse=True)]
    results = _run_tasks(_hetero_task, tasks, jobs)
    rows = [
        error_suite(sol, u0, t.theta, eps, t.A0, seed=seed, conductivity=conductivity)
        for seed, eps, sol in results
    ]
    write_convergence_csv(out.path("convergence.csv"), rows)

    report = {"config_hash": cfg.hash(), "A0": t.A0.tolist(), "theta": t.theta}
    eps_sorted = sorted(cfg.eps, reverse=True)
    if len(eps_sorted) >= 3:
        per_seed = {}
        for r in rows:
            per_seed.setdefault(r.seed, []).append((r.eps, r.l2_error))
        rates = {}
        for seed, pairs in per_seed.items():
            pairs.sort(reverse=True)
            slope, r2 = rate_fit([p[0] for p in pairs], [p[1] for p in pairs])
            rates[str(seed)] = {"rate": slope, "r_squared": r2}
        report["l2_rates"] = rates
    write_report_json(out.path("report.json"), report)
    print(f"homogenize: {len(rows)} solves -> convergence.csv, report.json")


def cmd_verify(cfg: ExperimentConfig, out: OutputTracker, jobs: int) -> None:
    rng = np.random.default_rng(cfg.seed)
    checked = 0
    for _ in range(cfg.instances):
        inst = random_induction_instance(rng)
        backward_induction_bound(inst)
        checked += 1
    cases = {}
    for name, dmap in (
        ("identity", IdentityMap()),
        ("scaling", ScalingMap(2.0)),
        ("bump", BumpMap(amplitude=cfg.amplitude)),
    ):
        r = surface_integral_crosscheck(dmap, lambda p: np.ones(len(p)), cfg.interface)
        cases[name] = r
    report = {
        "config_hash": cfg.hash(),
        "induction_instances_checked": checked,
        "surface_crosscheck": cases,
        "max_crosscheck_diff": max(c["diff"] for c in cases.values()),
    }
    write_report_json(out.path("verify_report.json"), report)
    print(
        f"verify: {checked} induction instances, "
        f"max surface diff {report['max_crosscheck_diff']:.3g} -> verify_report.json"
    )


COMMANDS = {
    "mesh": cmd_mesh,
    "corrector": cmd_corrector,
    "effective": cmd_effective,
    "homogenize": cmd_homogenize,
    "verify": cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="membrane-homog",
        description="stochastic homogenization workbench for membrane media",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="config file (key = value lines or JSON)")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--seed", type=int, help="override the master seed")
        p.add_argument("--jobs", type=int, help="worker count (default 1)")
        p.add_argument("--dry-run", action="store_true", help="print the plan and exit")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = parse_config(args.config) if args.config else ExperimentConfig()
        if args.seed is not None:
            cfg = ExperimentConfig(**{**asdict(cfg), "seed": args.seed})
        jobs = resolve_jobs(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if args.dry_run:
        plan = {"command": args.command, "out": args.out, "jobs": jobs,
                "config": asdict(cfg), "config_hash": cfg.hash()}
        print(json.dumps(plan, indent=2, sort_keys=True))
        return 0
    out = OutputTracker(args.out)
    try:
        COMMANDS[args.command](cfg, out, jobs)
    except MembraneHomogError as exc:
        out.cleanup()
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except Exception:
        out.cleanup()
        raise
    return 0


if __name__ == "__main__":
    sys.exit(main())
