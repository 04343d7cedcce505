"""Command-line entry point ``swarm-hierarchy``."""

from __future__ import annotations

import argparse
import csv
import logging
import math
import os
import sys
from typing import Optional, Sequence

import numpy as np

from . import __version__
from . import closure, config as cfgmod, harness, hydro, kinetic, particles, soh
from .coeffs import ModelParams, coefficient_table, derive
from .errors import RegimeError, SwarmError

log = logging.getLogger("swarm_hierarchy")


# ---------------------------------------------------------------------------
# helpers


def _write_rows(path: str, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])


def _field_dump(path: str, grid: hydro.Grid, rho: np.ndarray, vec: np.ndarray, names: Sequence[str]) -> None:
    xs = grid.centers()
    cols = ["x", "y"][: grid.ndim] + ["rho"] + list(names)
    data = [x.ravel() for x in xs] + [rho.ravel()] + [v.ravel() for v in vec]
    _write_rows(path, cols, zip(*data))


def _out(args, cfg) -> str:
    out = cfgmod.default_out_dir(args.out or cfg.get("out"))
    os.makedirs(out, exist_ok=True)
    return out


def _pick(args, cfg, name: str, default):
    v = getattr(args, name, None)
    if v is not None:
        return v
    return cfg.get(name, default)


# ---------------------------------------------------------------------------
# subcommands


def cmd_coeffs(args, cfg) -> int:
    p = cfg.model_params()
    c = derive(p, alpha=args.alpha)
    rows = coefficient_table(c)
    out = _out(args, cfg)
    path = os.path.join(out, "coefficients.csv")
    _write_rows(path, ["name", "value", "valid"], [(n, "" if v is None else v, ok) for n, v, ok in rows])
    for n, v, ok in rows:
        print(f"{n:20s} {'undefined' if v is None else f'{v:.10g}'}")
    return 0


def cmd_particles(args, cfg) -> int:
    p = cfg.model_params()
    n = int(_pick(args, cfg, "n", 1024))
    dx = int(_pick(args, cfg, "dx", 1))
    dt = float(_pick(args, cfg, "dt", 0.1 * min(p.sigma, p.tau)))
    t_end = float(_pick(args, cfg, "t_end", 1.0))
    every = int(cfg.get("record_every", 10))
    box = float(cfg.get("box", max(1.0, 4 * particles.interaction_radius(p))))
    speed0 = float(cfg.get("speed0", p.a))
    s = particles.random_state(n, box, dx=dx, d=p.dim, speed=speed0, temp=p.temp, seed=args.seed)
    steps = int(round(t_end / dt))
    s, recs = particles.run(s, p, dt, steps, every=every, cells=int(cfg.get("cells", 32)))
    out = _out(args, cfg)
    _write_rows(os.path.join(out, "particles_observables.csv"), ["time", "phi", "mean_speed", "fluid_speed"],
                [(r.time, r.order_parameter, r.mean_speed, r.fluid_speed) for r in recs])
    _write_rows(os.path.join(out, "particles_final.csv"),
                [f"x{k}" for k in range(dx)] + [f"v{k}" for k in range(p.dim)],
                np.hstack([s.positions, s.velocities]))
    print(f"phi = {recs[-1].order_parameter:.6f}, fluid speed = {recs[-1].fluid_speed:.6f}")
    return 0


def cmd_kinetic(args, cfg) -> int:
    p = cfg.model_params()
    grid = kinetic.VelocityGrid(float(cfg.get("v_max", 4.0)), int(cfg.get("n_v", 64)), p.dim)
    f0 = kinetic.initial_condition(str(cfg.get("ic", "bimaxwellian")), grid, p.temp)
    eps = cfg.get("kinetic_eps")
    mode = str(cfg.get("mode", "explicit" if eps is None else "implicit"))
    if mode == "implicit":
        dt_default = 0.01
    else:
        dt_default = 0.9 * kinetic.max_explicit_dt(grid, p, eps or 1.0, mode, eps is not None)
    dt = float(_pick(args, cfg, "dt", dt_default))
    t_end = float(_pick(args, cfg, "t_end", 1.0))
    f, rec = kinetic.record_relaxation(f0, p, t_end, dt, eps=eps, mode=mode)
    out = _out(args, cfg)
    _write_rows(os.path.join(out, "kinetic_record.csv"),
                ["time", "mass", "speed", "free_energy", "free_energy_continuous"],
                zip(rec.times, rec.mass, rec.speed, rec.free_energy, rec.free_energy_continuous))
    print(f"final |u_f| = {rec.speed[-1]:.6g}, mass drift = {abs(rec.mass[-1] / rec.mass[0] - 1):.3g}")
    return 0


def cmd_verify_closure(args, cfg) -> int:
    p = cfg.model_params()
    rep = closure.verify_all(p, n_q=int(cfg.get("n_q", 12)), seed=args.seed)
    out = _out(args, cfg)
    with open(os.path.join(out, "closure_checks.csv"), "w") as fh:
        fh.write(rep.to_csv())
    for r in rep.rows:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.identity:40s} {r.residual:.3e} (tol {r.tolerance:.1e})")
    return 0 if rep.passed else 1


def _grid(cfg) -> hydro.Grid:
    cells = cfg.get("cells", 256)
    cells = tuple(cells) if isinstance(cells, tuple) else (int(cells),)
    return hydro.Grid(cells, float(cfg.get("length", 1.0)))


def _snapshot_dumps(out: str, prefix: str, grid, snaps, vec_of, names) -> None:
    for i, s in enumerate(snaps):
        _field_dump(os.path.join(out, f"{prefix}_{i:04d}.csv"), grid, s.rho, vec_of(s), names)


def cmd_fluid(args, cfg, model: str) -> int:
    p = cfg.model_params()
    c = derive(p)
    grid = _grid(cfg)
    speed = float(cfg.get("speed", c.comfort_speed or 0.0))
    state = hydro.initial_condition(str(cfg.get("ic", "density-pulse")), grid, dim=p.dim, temp=p.temp,
                                    speed=speed, amplitude=float(cfg.get("amplitude", 0.2)))
    dt = _pick(args, cfg, "dt", None)
    t_end = float(_pick(args, cfg, "t_end", 1.0))
    snap = cfg.get("snapshot_every", t_end / 10)
    final, snaps = hydro.run(state, c, t_end, model=model, dt=dt, dt_max=cfg.get("dt_max"),
                             order=int(cfg.get("order", 2)), snapshot_every=snap)
    out = _out(args, cfg)
    _snapshot_dumps(out, model, grid, snaps, lambda s: s.velocity, [f"u{k}" for k in range(p.dim)])
    _write_rows(os.path.join(out, f"{model}_history.csv"), ["time", "mass", "max_speed"],
                [(s.time, float(s.rho.sum() * grid.cell_volume),
                  float(np.max(np.sqrt(np.sum(s.velocity ** 2, axis=0))))) for s in snaps])
    print(f"{model}: t = {final.time:.4g}, mass = {final.total_mass:.15g}, snapshots = {len(snaps)}")
    return 0


def cmd_soh(args, cfg) -> int:
    grid = _grid(cfg)
    if "c1" in cfg.run:
        sp = soh.SOHSpeeds(float(cfg.get("c1")), float(cfg.get("c2")), float(cfg.get("delta")))
    else:
        c = derive(cfg.model_params())
        sp = soh.speeds_from_coeffs(c, alpha=cfg.get("alpha"), printed=bool(cfg.get("printed_delta", False)))
    state = soh.initial_condition(str(cfg.get("ic", "split")), grid, sp)
    t_end = float(_pick(args, cfg, "t_end", 1.0))
    final, snaps = soh.soh_run(state, t_end, dt=_pick(args, cfg, "dt", None), order=int(cfg.get("order", 2)),
                               snapshot_every=cfg.get("snapshot_every", t_end / 10))
    out = _out(args, cfg)
    _snapshot_dumps(out, "soh", grid, snaps, lambda s: s.omega, ["omega0", "omega1"])
    print(f"soh: c1 = {sp.c1:.6g}, c2 = {sp.c2:.6g}, delta = {sp.delta:.6g}, "
          f"norm defect = {final.norm_defect:.2e}")
    return 0


def cmd_diffusion(args, cfg) -> int:
    grid = _grid(cfg)
    if "d_diff" in cfg.run:
        D = float(cfg.get("d_diff"))
    else:
        c = derive(cfg.model_params())
        if c.d_diff is None:
            raise RegimeError(f"diffusion needs T > T_c = {c.temp_crit:.4g}")
        D = c.d_diff
    x = grid.centers()[0]
    var0 = float(cfg.get("var0", 0.01))
    rho = soh.heat_kernel_periodic(x, 0.5 * grid.length, var0, D, 0.0, grid.length)
    if grid.ndim == 2:
        y = grid.centers()[1]
        rho = rho * soh.heat_kernel_periodic(y, 0.5 * grid.length, var0, D, 0.0, grid.length)
    state = soh.DiffusionState(rho, D, grid)
    t_end = float(_pick(args, cfg, "t_end", 0.01))
    final, snaps = soh.diffusion_run(state, t_end, dt=_pick(args, cfg, "dt", None),
                                     mode=str(cfg.get("mode", "explicit")),
                                     snapshot_every=cfg.get("snapshot_every", t_end / 10))
    out = _out(args, cfg)
    _snapshot_dumps(out, "diffusion", grid, snaps,
                    lambda s: soh.diffusion_velocity(s.rho, D, grid.h).filled(np.nan), ["u0", "u1"])
    print(f"diffusion: D = {D:.6g}, t = {final.time:.4g}, mass = {final.total_mass:.15g}")
    return 0


def _scenario_config(cfg, name: str, args) -> harness.ScenarioConfig:
    seeds = cfg.get("seeds", (args.seed,))
    seeds = tuple(seeds) if isinstance(seeds, tuple) else (int(seeds),)
    values = cfg.sweep.get("values", ())
    values = tuple(values) if isinstance(values, tuple) else (values,)
    kw = {}
    for key in ("cells", "n_particles", "dt", "t_end"):
        if key in cfg.run:
            kw[key] = cfg.run[key]
    return harness.ScenarioConfig(
        name, cfg.model_params() if cfg.params else ModelParams(),
        sweep_name=str(cfg.sweep.get("name", "")), sweep_values=values, seeds=seeds,
        options=dict(cfg.options), **kw)


def _report_and_emit(rep: harness.RunReport, out: str) -> int:
    harness.emit_outputs(rep, out)
    for c in rep.criteria:
        print(f"{'PASS' if c.passed else 'FAIL'} {rep.scenario}:{c.name} value={c.value:.4g} tol={c.tolerance:.4g}")
    return rep.exit_code


def cmd_sweep(args, cfg) -> int:
    name = args.scenario or str(cfg.get("scenario", "phase-sweep"))
    rep = harness.run_scenario(_scenario_config(cfg, name, args))
    return _report_and_emit(rep, _out(args, cfg))


def cmd_validate(args, cfg) -> int:
    wanted = args.criteria or [str(i) for i in range(1, 10)]
    out = _out(args, cfg)
    code = 0
    for w in wanted:
        name = w if w.startswith("criterion-") else f"criterion-{w}"
        conf = harness.ScenarioConfig(name, cfg.model_params() if cfg.params else ModelParams(),
                                      seeds=(args.seed,), options=dict(cfg.options))
        code = max(code, _report_and_emit(harness.run_scenario(conf), out))
    return code


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="swarm-hierarchy",
                                 description="Particle, kinetic and fluid models of self-propelled swarms.")
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("--config", help="key=value config file with [params]/[run]/[sweep]/[options] sections")
    ap.add_argument("--out", help=f"output directory (default ${cfgmod.OUT_ENV} or ./swarm_out)")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--threads", type=int, default=None, help="numba worker threads")
    ap.add_argument("--deterministic", action="store_true", help="single-threaded reference mode")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    sub.add_parser("coeffs", help="derived coefficient table").add_argument("--alpha", type=float)
    sp = sub.add_parser("particles", help="run the particle system")
    sp.add_argument("--n", type=int)
    sp.add_argument("--dx", type=int)
    for name in ("kinetic-hom", "euler", "ns", "soh", "diffusion"):
        p = sub.add_parser(name)
        p.add_argument("--t-end", dest="t_end", type=float)
        p.add_argument("--dt", type=float)
    sp.add_argument("--t-end", dest="t_end", type=float)
    sp.add_argument("--dt", type=float)
    sub.add_parser("verify-closure", help="closure identities by quadrature")
    sw = sub.add_parser("sweep", help="run a harness scenario (default: phase sweep)")
    sw.add_argument("--scenario", choices=sorted(harness.SCENARIOS))
    va = sub.add_parser("validate", help="run acceptance criteria")
    va.add_argument("criteria", nargs="*", help="criterion numbers (default: all)")
    return ap


COMMANDS = {
    "coeffs": cmd_coeffs,
    "particles": cmd_particles,
    "kinetic-hom": cmd_kinetic,
    "verify-closure": cmd_verify_closure,
    "euler": lambda a, c: cmd_fluid(a, c, "euler"),
    "ns": lambda a, c: cmd_fluid(a, c, "ns"),
    "soh": cmd_soh,
    "diffusion": cmd_diffusion,
    "sweep": cmd_sweep,
    "validate": cmd_validate,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    if args.deterministic:
        particles.set_threads(1)
    elif args.threads:
        particles.set_threads(args.threads)
    try:
        cfg = cfgmod.load(args.config)
        return COMMANDS[args.command](args, cfg)
    except SwarmError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
