"""Command-line front end for the pipeline stages.

Each subcommand maps to one pipeline stage on the artifact layout that
run_experiment produces: per-eps subdirectories eps_<value>/ under the
configured output root holding ground.field/.ini, frames/, and the CSV
files. Stage failures exit 1 with a ``[stage] message`` line on stderr;
argparse usage errors exit 2.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from gpvortex import dynamics, fields, groundstate, harness, limit_ode, vortex
from gpvortex.fields import ComplexField2D
from gpvortex.harness import (DIAG_COLUMNS, FRAME_COLUMNS, ODE_COLUMNS,
                              VORTEX_COLUMNS, ExperimentConfig, StageError,
                              _stage)


def _load_config(path):
    with _stage("config"):
        return ExperimentConfig.from_file(path)


def _eps_values(config, args):
    if getattr(args, "eps", None) is None:
        return list(config.eps_values)
    return [args.eps]


def _eps_dir(config, eps):
    return harness.resolve_output_dir(config) / f"eps_{eps:g}"


def _ground_for(config, trap, eps, outdir, solve=True):
    """Load the stored ground state for this eps, else solve and store."""
    prefix = outdir / "ground"
    if Path(str(prefix) + ".field").exists():
        gs = groundstate.load_ground_state(prefix)
        if gs.grid.same_geometry(trap.grid) and gs.eps == eps:
            return gs
    if not solve:
        raise StageError("groundstate",
                         f"no stored ground state under {outdir}")
    with _stage("groundstate"):
        gs = groundstate.solve_ground_state(trap, eps)
        outdir.mkdir(parents=True, exist_ok=True)
        groundstate.save_ground_state(prefix, gs)
    return gs


def _load_frames(outdir, evo):
    frame_dir = outdir / "frames"
    index = frame_dir / "index.csv"
    if not index.exists():
        raise StageError("analyze", f"no trajectory index at {index}")
    _, _, _, rows = harness.read_csv(index)
    taus = [float(r[0]) for r in rows]
    frames = [fields.load_field(frame_dir / r[1]) for r in rows]
    return dynamics.TrajectoryRecord(evo, taus, frames, [])


def cmd_groundstate(args):
    config = _load_config(args.config)
    harness.validate_config(config)
    for eps in _eps_values(config, args):
        outdir = _eps_dir(config, eps)
        outdir.mkdir(parents=True, exist_ok=True)
        with _stage("groundstate"):
            trap = harness.build_trap(config)
            gs = groundstate.solve_ground_state(trap, eps)
            groundstate.save_ground_state(outdir / "ground", gs)
        print(f"eps = {eps:g}: lambda_eps = {gs.lambda_eps:.8f}, "
              f"residual = {gs.residual:.3e}, "
              f"iterations = {gs.iterations} -> {outdir / 'ground'}.field")
    return 0


def cmd_evolve(args):
    config = _load_config(args.config)
    guards = harness.validate_config(config)
    if args.dry_run:
        print(f"grid: dx = {guards['dx']:.6g}, dy = {guards['dy']:.6g}, "
              f"lambda0 = {guards['lambda0']:.8f}")
        for eps, g in guards["per_eps"].items():
            print(f"eps = {eps:g}: dx <= eps/2 ok, dt = {config.dt:g} <= "
                  f"{g['dt_limit']:g}, steps = {g['n_steps']}, "
                  f"|log eps| = {g['log_eps']:.6f}")
        return 0
    for eps in _eps_values(config, args):
        outdir = _eps_dir(config, eps)
        outdir.mkdir(parents=True, exist_ok=True)
        trap = harness.build_trap(config)
        gs = _ground_for(config, trap, eps, outdir)
        with _stage("seed"):
            u0 = harness._seed_initial(config, trap, gs, eps)
            u0 = ComplexField2D(u0.grid.with_boundary("periodic"), u0.values)
        with _stage("evolve"):
            evo = dynamics.EvolutionConfig(
                eps=eps, dt=config.dt, t_end_rescaled=config.t_end_rescaled,
                scheme=config.scheme, record_every=config.record_every)
            evo.check_guard()
            traj = dynamics.evolve(u0, trap.V, evo)
            frame_dir = outdir / "frames"
            frame_dir.mkdir(exist_ok=True)
            rows = []
            for k, (tau, f) in enumerate(zip(traj.taus, traj.frames)):
                name = f"frame_{k:04d}.field"
                fields.save_field(frame_dir / name, f)
                rows.append((tau, name))
            harness.write_csv(frame_dir / "index.csv", "frames",
                              FRAME_COLUMNS, rows)
        print(f"eps = {eps:g}: {len(traj.taus)} frames over "
              f"tau in [0, {traj.taus[-1]:.6g}] -> {frame_dir}")
    return 0


def cmd_analyze(args):
    config = _load_config(args.config)
    harness.validate_config(config)
    for eps in _eps_values(config, args):
        outdir = _eps_dir(config, eps)
        trap = harness.build_trap(config)
        gs = _ground_for(config, trap, eps, outdir, solve=False)
        evo = dynamics.EvolutionConfig(
            eps=eps, dt=config.dt, t_end_rescaled=config.t_end_rescaled,
            scheme=config.scheme, record_every=config.record_every)
        traj = _load_frames(outdir, evo)
        with _stage("analyze"):
            ode_traj = harness._integrate_ode(config, trap, eps,
                                              tau_target=traj.taus[-1])
            diag_rows, vortex_rows, _, _ = harness.analyze_trajectory(
                gs, trap, traj, eps, ode_traj)
            harness.write_csv(outdir / "diagnostics.csv", "diagnostics",
                              DIAG_COLUMNS, diag_rows)
            harness.write_csv(outdir / "vortices.csv", "vortices",
                              VORTEX_COLUMNS, vortex_rows)
        print(f"eps = {eps:g}: {len(diag_rows)} frames analyzed -> "
              f"{outdir / 'diagnostics.csv'}")
    return 0


def cmd_ode(args):
    config = _load_config(args.config)
    harness.validate_config(config)
    for eps in _eps_values(config, args):
        outdir = _eps_dir(config, eps)
        outdir.mkdir(parents=True, exist_ok=True)
        with _stage("ode"):
            trap = harness.build_trap(config)
            index = outdir / "frames" / "index.csv"
            target = None
            if index.exists():
                _, _, _, rows = harness.read_csv(index)
                if rows:
                    target = float(rows[-1][0])
            ode_traj = harness._integrate_ode(config, trap, eps,
                                              tau_target=target)
            rows = ode_traj.rows() if ode_traj is not None else ()
            harness.write_csv(outdir / "ode.csv", "ode", ODE_COLUMNS, rows)
        n = 0 if ode_traj is None else len(ode_traj.taus)
        halt = ""
        if ode_traj is not None and ode_traj.halt_reason:
            halt = (f" (halted: {ode_traj.halt_reason} at "
                    f"tau = {ode_traj.halt_tau:.6g})")
        print(f"eps = {eps:g}: {n} steps -> {outdir / 'ode.csv'}{halt}")
    return 0


def _detections_from_csv(path):
    name, _, _, rows = harness.read_csv(path)
    if name != "vortices":
        raise StageError("compare", f"{path} holds schema {name!r}, "
                         "expected 'vortices'")
    by_tau = {}
    for r in rows:
        tau = float(r[0])
        by_tau.setdefault(tau, []).append((float(r[2]), float(r[3]),
                                           int(r[4]), float(r[5])))
    detections = []
    for tau in sorted(by_tau):
        entries = by_tau[tau]
        pts = np.array([[x, y] for x, y, _, _ in entries])
        deg = np.array([d for _, _, d, _ in entries])
        conf = np.array([c for _, _, _, c in entries])
        detections.append((tau, vortex.VortexSet(pts, deg,
                                                 confidences=conf)))
    return detections


def _ode_from_csv(path, degrees):
    name, _, _, rows = harness.read_csv(path)
    if name != "ode":
        raise StageError("compare", f"{path} holds schema {name!r}, "
                         "expected 'ode'")
    taus = sorted({float(r[0]) for r in rows})
    order = {t: k for k, t in enumerate(taus)}
    l = 1 + max(int(r[1]) for r in rows)
    pos = np.full((len(taus), l, 2), np.nan)
    den = np.full((len(taus), l), np.nan)
    for r in rows:
        k, i = order[float(r[0])], int(r[1])
        pos[k, i] = (float(r[2]), float(r[3]))
        den[k, i] = float(r[4])
    return limit_ode.OdeTrajectory(np.array(taus), pos, den, degrees)


def cmd_compare(args):
    with _stage("compare"):
        detections = _detections_from_csv(Path(args.pde))
        if not detections:
            raise StageError("compare", f"{args.pde} holds no detections")
        first = detections[0][1]
        degrees = first.degrees.copy()
        ode_traj = _ode_from_csv(Path(args.ode), degrees)
        comparison = harness.compare_trajectories(detections, ode_traj,
                                                  strict=True, eps=args.eps)
    per_vortex = np.nanmax(comparison.errors, axis=0)
    for i, e in enumerate(per_vortex):
        print(f"vortex {i}: max position error {e:.6g}")
    print(f"overall max position error {comparison.max_error:.6g} over "
          f"{len(comparison.taus)} frames")
    if args.out:
        report = harness.ComparisonReport({args.eps: comparison}, float("nan"),
                                          {})
        report.write(Path(args.out))
        print(f"report -> {args.out}")
    return 0


def cmd_suite(args):
    result = harness.acceptance_battery(
        args.workdir, log=(lambda m: print(m, flush=True)) if args.verbose
        else None)
    for o in result.outcomes:
        print(o.line())
    return 0 if result.passed else 1


def build_parser():
    p = argparse.ArgumentParser(
        prog="gpvortex",
        description="Vortex-dynamics pipeline: ground states, splitting "
        "evolution, detection, and comparison against the limiting "
        "motion law.")
    sub = p.add_subparsers(dest="command", required=True)

    def with_config(sp):
        sp.add_argument("--config", required=True, help="experiment file")
        sp.add_argument("--eps", type=float, default=None,
                        help="restrict to a single eps value")

    sp = sub.add_parser("groundstate",
                        help="solve and store the trap ground state")
    with_config(sp)
    sp.set_defaults(func=cmd_groundstate)

    sp = sub.add_parser("evolve", help="run the splitting evolution and "
                        "store trajectory frames")
    with_config(sp)
    sp.add_argument("--dry-run", action="store_true",
                    help="validate the config and print resolved "
                    "resolution guards without computing")
    sp.set_defaults(func=cmd_evolve)

    sp = sub.add_parser("analyze", help="detect vortices and write "
                        "diagnostics/vortex CSVs for stored frames")
    with_config(sp)
    sp.set_defaults(func=cmd_analyze)

    sp = sub.add_parser("ode", help="integrate the limiting motion law "
                        "and write its CSV")
    with_config(sp)
    sp.set_defaults(func=cmd_ode)

    sp = sub.add_parser("compare", help="compare detection and "
                        "limiting-law CSVs frame by frame")
    sp.add_argument("--pde", required=True, help="vortices.csv path")
    sp.add_argument("--ode", required=True, help="ode.csv path")
    sp.add_argument("--eps", type=float, default=float("nan"),
                    help="eps label recorded in the report")
    sp.add_argument("--out", default=None, help="optional report path")
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("suite", help="run the acceptance battery")
    sp.add_argument("--quick", action="store_true",
                    help="standard two-eps battery (the default battery "
                    "already is the quick profile)")
    sp.add_argument("--workdir", default="suite_run",
                    help="artifact directory (resolved like output dirs)")
    sp.add_argument("--verbose", action="store_true",
                    help="progress lines while the battery runs")
    sp.set_defaults(func=cmd_suite)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except StageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"[{args.command}] {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
