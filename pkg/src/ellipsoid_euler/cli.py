"""Command-line interface.

Exit codes: 0 success, 1 numerical failure (or a verification that did not
hold), 2 invalid arguments or configuration.
"""

from __future__ import annotations

import argparse
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .basis import BasisError, build_basis
from .dynamics import RunConfig, SimulationError, run
from .experiments import (
    CONTINUATION_COLUMNS,
    SWEEP_COLUMNS,
    TOY_COLUMNS,
    SweepError,
    b_continuation,
    omega_sweep,
    toy_averaging_verify,
)
from .geometry import build_geometry
from .storage import (
    ConfigError,
    FormatError,
    load_checkpoint,
    load_config,
    save_basis,
    save_checkpoint,
    write_csv,
    write_manifest,
)

log = logging.getLogger("ellipsoid_euler")

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2


class UsageError(ValueError):
    pass


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of numbers, got {text!r}") from None


def _progress(args, msg: str) -> None:
    if not args.quiet:
        print(msg, flush=True)


def _out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _config_from_args(args) -> RunConfig:
    if not args.config:
        raise UsageError("--config is required")
    path = Path(args.config)
    if not path.is_file():
        raise UsageError(f"config file not found: {path}")
    cfg = load_config(path)
    if args.seed is not None:
        cfg = cfg.with_(seed=args.seed)
    return cfg


# -- subcommands --


def cmd_basis(args) -> int:
    L = args.lmax
    n_theta = args.ntheta or max(16, 2 * L + 2)
    n_phi = args.nphi or max(16, 2 * n_theta)
    try:
        geo = build_geometry(args.b, n_theta, n_phi)
        if L < 2:
            raise ValueError(f"l_max must be >= 2, got {L}")
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    basis = build_basis(geo, L)
    _progress(args, f"# b={geo.b:g} l_max={L} n_theta={n_theta} n_phi={n_phi}")
    _progress(args, f"{'m':>3} {'l':>3} {'Lambda':>24}")
    for l, m in sorted(basis.labels(), key=lambda lm: (lm[1], lm[0])):
        _progress(args, f"{m:>3d} {l:>3d} {basis.eigenvalue(l, m):>24.15g}")
    if args.out:
        save_basis(basis, args.out)
        _progress(args, f"wrote {args.out}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    started = _now()
    state = None
    if args.resume:
        if not Path(args.resume).is_file():
            raise UsageError(f"checkpoint not found: {args.resume}")
        state = load_checkpoint(args.resume)
        if args.config:
            state.config = _config_from_args(args)
        _progress(args, f"resuming from step {state.step_count} (t={state.t:.6g})")
        cfg = state.config
    else:
        cfg = _config_from_args(args)
    out = _out_dir(args.out_dir)
    ckpt_path = out / "checkpoint.bin"

    def on_checkpoint(st):
        save_checkpoint(st, ckpt_path)

    final, diags = run(
        cfg,
        state=state,
        callback=on_checkpoint,
        callback_every=args.checkpoint_every,
    )
    csv = write_csv(out / "diagnostics.csv", diags.columns(), diags.rows())
    save_checkpoint(final, ckpt_path)
    _progress(
        args,
        f"t={final.t:.6g} steps={final.step_count} energy drift={diags.relative_drift('energy'):.3e} "
        f"zonal fraction={diags.zonal_fraction[-1]:.6f}",
    )
    write_manifest(
        out / "manifest.json",
        cfg.as_dict(),
        cfg.seed,
        started,
        _now(),
        [csv, ckpt_path],
        extra={"command": "simulate", "dt": final.dt, "steps": final.step_count},
    )
    return EXIT_OK


def _write_sweep(out: Path, result, cfg: RunConfig, started: str) -> list[Path]:
    files = [write_csv(out / "sweep.csv", SWEEP_COLUMNS, result.table())]
    fit_rows = [(result.slope, result.slope_halfwidth, result.intercept, result.slope_without_smallest(), int(result.complete))]
    files.append(
        write_csv(out / "sweep_fit.csv", ("slope", "slope_halfwidth", "intercept", "slope_without_smallest", "complete"), fit_rows)
    )
    loglog = out / "sweep_loglog.dat"
    lines = ["# log10(omega) log10(error)"] + [
        "%.17g %.17g" % (np.log10(r.omega), np.log10(r.error)) for r in result.rows if r.error > 0
    ]
    loglog.write_text("\n".join(lines) + "\n", encoding="utf-8")
    files.append(loglog)
    script = out / "plot_sweep.py"
    script.write_text(_PLOT_SCRIPT, encoding="utf-8")
    files.append(script)
    write_manifest(
        out / "manifest.json",
        cfg.as_dict(),
        cfg.seed,
        started,
        _now(),
        files,
        extra={"command": "sweep", "omegas": [r.omega for r in result.rows], "runtimes": [r.runtime for r in result.rows]},
    )
    return files


_PLOT_SCRIPT = """\
# Plot the zonalization error against the rotation rate (requires matplotlib).
import numpy as np
import matplotlib.pyplot as plt

x, y = np.loadtxt("sweep_loglog.dat", unpack=True)
plt.plot(10**x, 10**y, "o-", label="measured")
plt.plot(10**x, 10 ** (y[0] - (x - x[0])), "k--", label="slope -1")
plt.xscale("log")
plt.yscale("log")
plt.xlabel("omega")
plt.ylabel("non-zonal part of the mean flow")
plt.legend()
plt.savefig("sweep.png", dpi=150)
"""


def cmd_sweep(args) -> int:
    started = _now()
    cfg = _config_from_args(args)
    omegas = args.omegas or [50.0, 100.0, 200.0, 400.0, 800.0]
    out = _out_dir(args.out_dir)

    def progress(row):
        _progress(args, f"omega={row.omega:g} error={row.error:.6e} steps={row.steps}")

    try:
        result = omega_sweep(cfg, omegas, workers=args.workers, progress=progress)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    except SweepError as exc:
        _write_sweep(out, exc.partial, cfg, started)
        log.error("%s (partial results written to %s)", exc, out)
        return EXIT_FAILURE
    _write_sweep(out, result, cfg, started)
    _progress(args, f"slope={result.slope:.4f} +- {result.slope_halfwidth:.4f}")
    return EXIT_OK


def cmd_toy_average(args) -> int:
    started = _now()
    omegas = args.omegas or [1e2, 1e3, 1e4]
    if args.dim < 4 or args.dim > 64:
        raise UsageError("--dim must lie in [4, 64]")
    if args.T <= 0:
        raise UsageError("--T must be positive")
    base = args.seed or 0
    rows, ok = [], True
    for s in range(base, base + args.seeds):
        rep = toy_averaging_verify(args.dim, s, omegas, args.T)
        rows.extend(rep.table())
        ok &= rep.passed
        _progress(args, f"seed={s} C={rep.C:.4g} slope={rep.slope:.4f} bound holds={rep.passed}")
    if args.out_dir:
        out = _out_dir(args.out_dir)
        csv = write_csv(out / "toy.csv", TOY_COLUMNS, rows)
        write_manifest(
            out / "manifest.json",
            {"dim": args.dim, "seeds": args.seeds, "omegas": omegas, "T": args.T},
            base,
            started,
            _now(),
            [csv],
            extra={"command": "toy-average"},
        )
    return EXIT_OK if ok else EXIT_FAILURE


DIAG_COLUMNS = ("sample", "gap_lhs", "gap_rhs", "gap_ratio", "commres", "adv_num", "adv_den")


def cmd_diagnose(args) -> int:
    from .dynamics import initial_stream, make_basis
    from .rotation import build_rotation

    started = _now()
    try:
        cfg = RunConfig(
            b=args.b,
            l_max=args.lmax,
            n_theta=args.ntheta or max(64, 2 * args.lmax + 2),
            n_phi=args.nphi or max(128, 4 * args.lmax),
            k=3,
            initial_condition="zonal" if args.zonal else "random",
            seed=args.seed or 0,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    if args.k < 0 or args.j < 1 or args.samples < 1:
        raise UsageError("need --k >= 0, --j >= 1 and --samples >= 1")
    basis = make_basis(cfg)
    rot = build_rotation(basis)
    rows = []
    for i in range(args.samples):
        psi = initial_stream(cfg.with_(seed=cfg.seed + i), basis)
        lhs, rhs = rot.key_estimate_gap(psi, args.k)
        ratio = lhs / rhs if rhs > 0 else 0.0
        comm = rot.commutation_residual(psi, args.j)
        num, den = rot.advection_commutator_residual(psi, args.j)
        rows.append((i, lhs, rhs, ratio, comm, num, den))
        _progress(args, f"sample={i} gap={ratio:.6g} commres={comm:.3e} adv={num / den if den else 0.0:.3e}")
    if args.out_dir:
        out = _out_dir(args.out_dir)
        csv = write_csv(out / "diagnose.csv", DIAG_COLUMNS, rows)
        write_manifest(
            out / "manifest.json", cfg.as_dict(), cfg.seed, started, _now(), [csv], extra={"command": "diagnose", "k": args.k, "j": args.j}
        )
    return EXIT_OK


def cmd_continuation(args) -> int:
    started = _now()
    bs = args.bs or [1.0, 0.99, 0.95, 0.9]
    try:
        probe = RunConfig(l_max=args.lmax, n_theta=max(64, 2 * args.lmax + 2), n_phi=max(128, 4 * args.lmax), seed=args.seed or 0)
        rows = b_continuation(bs, probe, samples=args.samples)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    table = [(r.b, r.eigdev, r.gapratio, r.commres) for r in rows]
    for r in rows:
        _progress(args, f"b={r.b:g} eigdev={r.eigdev:.3e} gapratio={r.gapratio:.6g} commres={r.commres:.3e}")
    if args.out_dir:
        out = _out_dir(args.out_dir)
        csv = write_csv(out / "continuation.csv", CONTINUATION_COLUMNS, table)
        write_manifest(out / "manifest.json", probe.as_dict(), probe.seed, started, _now(), [csv], extra={"command": "continuation"})
    return EXIT_OK


# -- parser --


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ellipsoid-euler",
        description="Rotating incompressible Euler flow on a biaxial ellipsoid.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--quiet", action="store_true", help="suppress progress output on stdout")
    common.add_argument("--seed", type=int, default=None, help="random seed (overrides the config)")
    common.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("basis", parents=[common], help="build and save the eigenbasis")
    p.add_argument("--b", type=float, required=True)
    p.add_argument("--lmax", type=int, default=21)
    p.add_argument("--ntheta", type=int, default=None)
    p.add_argument("--nphi", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_basis)

    p = sub.add_parser("simulate", parents=[common], help="run one simulation from a config file")
    p.add_argument("--config", default=None)
    p.add_argument("--out-dir", default=".")
    p.add_argument("--checkpoint-every", type=int, default=0, help="steps between checkpoints (0: end only)")
    p.add_argument("--resume", default=None, help="checkpoint file to continue from")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", parents=[common], help="rotation-rate sweep of the zonalization error")
    p.add_argument("--config", default=None)
    p.add_argument("--omegas", type=_floats, default=None)
    p.add_argument("--out-dir", default=".")
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("toy-average", parents=[common], help="finite-dimensional averaging bound")
    p.add_argument("--dim", type=int, default=32)
    p.add_argument("--seeds", type=int, default=10, help="number of seeds, starting at --seed")
    p.add_argument("--omegas", type=_floats, default=None)
    p.add_argument("--T", type=float, default=1.0)
    p.add_argument("--out-dir", default=None)
    p.set_defaults(func=cmd_toy_average)

    p = sub.add_parser("diagnose", parents=[common], help="operator diagnostics over random fields")
    p.add_argument("--b", type=float, default=0.9)
    p.add_argument("--k", type=int, default=0)
    p.add_argument("--j", type=int, default=1)
    p.add_argument("--samples", type=int, default=10)
    p.add_argument("--lmax", type=int, default=21)
    p.add_argument("--ntheta", type=int, default=None)
    p.add_argument("--nphi", type=int, default=None)
    p.add_argument("--zonal", action="store_true", help="draw zonal samples")
    p.add_argument("--out-dir", default=None)
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("continuation", parents=[common], help="spectrum and operator checks as b varies")
    p.add_argument("--bs", type=_floats, default=None)
    p.add_argument("--lmax", type=int, default=21)
    p.add_argument("--samples", type=int, default=10)
    p.add_argument("--out-dir", default=None)
    p.set_defaults(func=cmd_continuation)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (BasisError, SimulationError, FormatError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
