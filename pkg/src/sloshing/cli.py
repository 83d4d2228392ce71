"""Command-line front end.

Exit codes: 0 ok, 1 verification failure, 2 usage or configuration error,
3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import export
from .analytic import box_fundamental, cylinder_dispersion, cylinder_spectrum
from .assembly import assemble, parse_bond
from .eigensolve import solve
from .errors import IdentityViolation, InvalidSpec, ModeTrackingFailure, SloshError
from .geometry import ContainerSpec, build_mesh, refine
from .perturbation import DEFAULT_EPS, bond_sweep, perturbation_report
from .verify import check_energy, check_monotonicity, format_report, report_json, run_checks

log = logging.getLogger("sloshing")

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3
MAX_REFINEMENTS = 5
FORMULATIONS = ("coupled", "reduced", "both")
FD_TOL = 1e-3
EQUIVALENCE_TOL = 1e-8
MIN_ORDER = 1.0


class ConfigError(Exception):
    pass


@dataclass
class RunConfig:
    container: ContainerSpec = field(default_factory=lambda: ContainerSpec.disk(1.0, 1.0, 2))
    Bo: float = math.inf
    modes: int = 5
    layers: int | None = None
    refinements: int = 1
    formulation: str = "reduced"
    output_dir: str = "slosh_out"
    seed: int = 0
    bonds: list = field(default_factory=lambda: [1.0, 10.0, 100.0, math.inf])
    epsilons: list = field(default_factory=lambda: list(DEFAULT_EPS))
    shallow_depth: float | None = None

    def validate(self):
        if not isinstance(self.modes, int) or self.modes < 1:
            raise ConfigError(f"modes must be an integer >= 1, got {self.modes!r}")
        if not isinstance(self.refinements, int) or not 0 <= self.refinements <= MAX_REFINEMENTS:
            raise ConfigError(f"refinements must be an integer in [0, {MAX_REFINEMENTS}]")
        if self.layers is not None and (not isinstance(self.layers, int) or self.layers < 1):
            raise ConfigError("layers must be a positive integer")
        if self.formulation not in FORMULATIONS:
            raise ConfigError(f"formulation must be one of {FORMULATIONS}")
        if not isinstance(self.seed, int):
            raise ConfigError("seed must be an integer")
        try:
            self.container.validate()
            self.Bo = parse_bond(self.Bo)
            self.bonds = [parse_bond(b) for b in self.bonds]
        except (InvalidSpec, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        return self

    def to_json(self):
        d = asdict(self)
        d["Bo"] = _bond_str(self.Bo)
        d["bonds"] = [_bond_str(b) for b in self.bonds]
        return d


def _bond_str(Bo):
    return "inf" if math.isinf(Bo) else Bo


_CONTAINER_KEYS = {"shape", "depth", "resolution", "radius", "Lx", "Ly"}


def load_config(path=None) -> RunConfig:
    raw = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
    cfg = RunConfig()
    unknown = set(raw) - set(RunConfig.__dataclass_fields__)
    if unknown:
        raise ConfigError(f"unknown config fields: {sorted(unknown)}")
    for key, value in raw.items():
        if key == "container":
            if not isinstance(value, dict) or not set(value) <= _CONTAINER_KEYS:
                raise ConfigError(f"container must be an object with keys from {sorted(_CONTAINER_KEYS)}")
            try:
                value = ContainerSpec(**{"shape": "disk", "depth": 1.0, "resolution": 2, **value})
            except TypeError as exc:
                raise ConfigError(str(exc)) from exc
        setattr(cfg, key, value)
    return cfg


# ---------------------------------------------------------------- helpers
def mesh_for(cfg: RunConfig, refinements=None):
    pair = build_mesh(cfg.container, cfg.layers)
    for _ in range(cfg.refinements if refinements is None else refinements):
        pair = refine(pair)
    return pair


def _out(cfg):
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path, obj):
    export.atomic_write(path, json.dumps(obj, indent=2, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(type(o).__name__)


def _oracle_omega(spec: ContainerSpec, Bo):
    if spec.shape == "disk":
        return cylinder_dispersion(1, 1, spec.depth / spec.radius, Bo).omega
    return box_fundamental(spec.Lx, spec.Ly, spec.depth, Bo).omega


# ---------------------------------------------------------------- commands
def cmd_solve(cfg: RunConfig, dump_matrices=False) -> int:
    out = _out(cfg)
    pair = mesh_for(cfg)
    ops = assemble(pair, cfg.Bo)
    names = ["coupled", "reduced"] if cfg.formulation == "both" else [cfg.formulation]
    spectra = {f: solve(ops, cfg.modes, f) for f in names}
    spectrum = spectra[names[-1]]
    export.write_spectrum_csv(out / "spectrum.csv", spectrum, ops)
    for j, mode in enumerate(spectrum):
        export.write_vtk_volume(out / f"mode_{j:02d}_volume.vtk", pair.volume, mode.phi)
        export.write_vtk_surface(out / f"mode_{j:02d}_surface.vtk", pair.surface, mode.xi)
    energies = []
    for j, mode in enumerate(spectrum):
        r = check_energy(mode, ops)
        energies.append({"mode_index": j, "D_energy": r.D_energy, "S_energy": r.S_energy,
                         "coupling": r.coupling, "omega_check": r.omega_check, "omega": mode.omega})
    summary = {"config": cfg.to_json(), "mesh": pair.fingerprint(),
               "n_surface": ops.n_surface, "n_volume": ops.n_volume, "energies": energies}
    status = EXIT_OK
    if cfg.formulation == "both":
        a, b = spectra["coupled"].omegas, spectra["reduced"].omegas
        diff = float(np.max(np.abs(a - b) / b))
        summary["max_relative_formulation_difference"] = diff
        print(f"formulation difference (max relative): {diff:.3e}")
        if not diff <= EQUIVALENCE_TOL:
            status = EXIT_VERIFY
    if dump_matrices:
        for name in ("K_D", "M_F", "K_F"):
            export.write_matrix_market(out / f"{name}.mtx", getattr(ops, name))
    _write_json(out / "solve.json", summary)
    for j, mode in enumerate(spectrum):
        print(f"mode {j}: omega={export.fmt(mode.omega)}")
    return status


def cmd_verify(cfg: RunConfig, fault=None) -> int:
    out = _out(cfg)
    pair = mesh_for(cfg)
    ops = assemble(pair, cfg.Bo)
    form = "reduced" if cfg.formulation == "both" else cfg.formulation
    spectrum = solve(ops, cfg.modes, form)
    results = run_checks(ops, spectrum, cfg.container, cfg.layers, cfg.seed, cfg.epsilons, fault)
    text = format_report(results)
    export.atomic_write(out / "verify.txt", text)
    export.atomic_write(out / "verify.json", report_json(results) + "\n")
    sys.stdout.write(text)
    for r in results:
        if not r.passed and r.detail:
            print(f"{r.name}: {r.detail}", file=sys.stderr)
    return EXIT_OK if all(r.passed for r in results) else EXIT_VERIFY


def cmd_sweep(cfg: RunConfig) -> int:
    out = _out(cfg)
    ops = assemble(mesh_for(cfg), math.inf)
    table = bond_sweep(ops, cfg.bonds, cfg.modes)
    export.write_sweep_csv(out / "sweep.csv", table)
    for i, Bo in enumerate(table.bonds):
        print(f"Bo={_bond_str(Bo)}: omega_1={export.fmt(table.omega[i, 0])}")
    print(f"monotone approach to Bo=inf: {'yes' if table.monotone else 'no'}")
    return EXIT_OK if table.monotone else EXIT_VERIFY


def cmd_perturb(cfg: RunConfig) -> int:
    out = _out(cfg)
    ops = assemble(mesh_for(cfg), math.inf)
    reports = perturbation_report(ops, cfg.modes, cfg.epsilons)
    export.write_perturbation_csv(out / "perturbation.csv", reports)
    worst = 0.0
    for r in reports:
        worst = max(worst, r.rel_error)
        print(f"mode {r.mode_index}: formula={export.fmt(r.slope_formula)} fd={export.fmt(r.slope_fd)} "
              f"rel_error={r.rel_error:.3e}")
    if not reports:
        print("no simple modes among the requested ones", file=sys.stderr)
    return EXIT_OK if worst <= FD_TOL else EXIT_VERIFY


def cmd_convergence(cfg: RunConfig) -> int:
    if cfg.refinements < 1:
        raise ConfigError("convergence needs refinements >= 1")
    out = _out(cfg)
    exact = _oracle_omega(cfg.container, cfg.Bo)
    pair = mesh_for(cfg, 0)
    rows, errors = [], []
    for level in range(cfg.refinements + 1):
        if level:
            pair = refine(pair)
        ops = assemble(pair, cfg.Bo)
        w = solve(ops, 1, "reduced" if cfg.formulation == "both" else cfg.formulation)[0].omega
        err = abs(w - exact) / exact
        order = math.log2(errors[-1] / err) if errors else float("nan")
        errors.append(err)
        rows.append([level, ops.n_surface, ops.n_volume, w, exact, err, order])
        print(f"level {level}: omega_1={export.fmt(w)} rel_error={err:.4e} order={order:.3f}")
    export.write_csv(out / "convergence.csv",
                     ["level", "n_surface", "n_volume", "omega", "omega_exact", "rel_error", "order"], rows)
    if cfg.container.shape == "disk":
        pts = cylinder_spectrum(cfg.modes, cfg.container.depth / cfg.container.radius, cfg.Bo)
        export.write_dispersion_csv(out / "dispersion.csv", pts)
    final = rows[-1][-1]
    if not final >= MIN_ORDER:
        print(f"convergence order {final:.3f} below {MIN_ORDER}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_monotonicity(cfg: RunConfig) -> int:
    out = _out(cfg)
    deep = cfg.container
    h_s = cfg.shallow_depth if cfg.shallow_depth is not None else 0.5 * deep.depth
    shallow = deep.with_depth(h_s)
    try:
        v = check_monotonicity(shallow, deep, cfg.Bo, cfg.layers)
        ok = v.agrees_with_analytic
    except IdentityViolation as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_VERIFY
    export.write_csv(out / "monotonicity.csv",
                     ["depth", "Bo", "omega_1", "omega_1_analytic", "layers"],
                     [[v.depth_shallow, v.Bo, v.omega_shallow, v.analytic_shallow, v.layers[0]],
                      [v.depth_deep, v.Bo, v.omega_deep, v.analytic_deep, v.layers[1]]])
    print(f"omega_1(h={h_s:g})={export.fmt(v.omega_shallow)} <= omega_1(h={deep.depth:g})="
          f"{export.fmt(v.omega_deep)}; closed form agrees: {'yes' if ok else 'no'}")
    return EXIT_OK if ok else EXIT_VERIFY


COMMANDS = {
    "solve": cmd_solve,
    "verify": cmd_verify,
    "sweep": cmd_sweep,
    "perturb": cmd_perturb,
    "convergence": cmd_convergence,
    "monotonicity": cmd_monotonicity,
}


def build_parser():
    p = argparse.ArgumentParser(prog="slosh", description="Sloshing eigenvalues with surface tension.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--out", help="output directory (overrides output_dir)")
    p.add_argument("--modes", type=int, help="number of modes")
    p.add_argument("--bo", help="Bond number or 'inf'")
    p.add_argument("--formulation", choices=FORMULATIONS)
    p.add_argument("--dump-matrices", action="store_true", help="solve: also write MatrixMarket files")
    p.add_argument("-v", "--verbose", action="store_true")
    p.add_argument("--inject-fault", help=argparse.SUPPRESS)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.out is not None:
            cfg.output_dir = args.out
        if args.modes is not None:
            cfg.modes = args.modes
        if args.bo is not None:
            cfg.Bo = args.bo
        if args.formulation is not None:
            cfg.formulation = args.formulation
        cfg.validate()
        if args.command == "verify":
            return cmd_verify(cfg, args.inject_fault)
        if args.command == "solve":
            return cmd_solve(cfg, args.dump_matrices)
        return COMMANDS[args.command](cfg)
    except (ConfigError, InvalidSpec, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ModeTrackingFailure as exc:
        print(f"mode tracking failed: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except IdentityViolation as exc:
        print(f"verification failed: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    except (SloshError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
