"""Command line front end: ``stochch <subcommand> [options]``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

from . import plots
from .config import MODES, ConfigError, RunConfig, load_config
from .runner import EXIT_CODES, EXIT_CONFIG_ERROR, EXIT_VALIDATION_FAILURE, converge, ensemble_run, run, transform
from .stochastic import SCHEMES
from .validate import SUITES, validate

EPILOG = """exit codes:
  0  run reached the horizon T_max (or validation passed)
  1  validation failure
  2  configuration error
  {h2}  stopped: |z|_H2 exceeded the radius R
  {path}  stopped: |w(t)| reached the path bound T_w
  {nonfinite}  stopped: non-finite state (last valid state is kept)

environment:
  STOCH_CH_THREADS  cap on ensemble worker threads (default: CPU count)
""".format(
    h2=EXIT_CODES["h2_radius"], path=EXIT_CODES["path_excursion"], nonfinite=EXIT_CODES["nonfinite"]
)


def _common() -> argparse.ArgumentParser:
    # Global flags are accepted before or after the subcommand.
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", metavar="FILE", default=argparse.SUPPRESS,
                   help="JSON config or a run manifest to reproduce")
    p.add_argument("--out", metavar="DIR", default=argparse.SUPPRESS, help="output directory")
    p.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS, help="no progress output")
    return p


def _problem_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("problem overrides (take precedence over --config)")
    g.add_argument("--xi", help="noise vector field preset, e.g. 'sin:1:0.1'")
    g.add_argument("--eta", help="zeroth-order noise coefficient preset, or 'holm' for 2 xi'")
    g.add_argument("--initial", help="initial momentum preset or field file")
    g.add_argument("--L", type=float, help="period length")
    g.add_argument("--n", type=int, help="grid points (power of two)")
    g.add_argument("--dt", type=float, help="time step")
    g.add_argument("--T", type=float, help="horizon T_max")
    g.add_argument("--R", type=float, help="H2 stopping radius (default 10 |y0|_H2)")
    g.add_argument("--Tw", type=float, help="path excursion bound")
    g.add_argument("--seed", type=int, help="Brownian path seed")
    g.add_argument("--scheme", choices=SCHEMES, help="direct-mode scheme")
    g.add_argument("--pure-noise", action="store_true", default=None,
                   help="switch the Camassa-Holm nonlinearity off (test hook)")


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(
        prog="stochch",
        description="Stochastic Camassa-Holm solver with transport noise.",
        epilog=EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
        parents=[common],
    )
    sub = parser.add_subparsers(dest="command", required=True)
    kw = dict(parents=[common], epilog=EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)

    sim = sub.add_parser("simulate", help="run one trajectory and write its artifacts", **kw)
    sim.add_argument("--mode", choices=MODES, help="deterministic, ds (Doss-Sussman) or direct")
    sim.add_argument("--snapshots", type=int, help="number of stored field snapshots")
    sim.add_argument("--no-figures", action="store_true", help="skip the PNG figures")
    _problem_args(sim)

    tr = sub.add_parser("transform", help="apply the noise group U_t to a field", **kw)
    tr.add_argument("--t", type=float, required=True, help="group parameter")
    tr.add_argument("--field", help="field preset or file (default: the initial datum)")
    _problem_args(tr)

    cv = sub.add_parser("converge", help="strong-order study of the direct scheme", **kw)
    cv.add_argument("--levels", type=int, default=4, help="dyadic levels below --dt (default 4)")
    cv.add_argument("--seeds", type=int, default=8, help="number of seeds, 0..N-1 (default 8)")
    _problem_args(cv)

    en = sub.add_parser("ensemble", help="one trajectory per seed, theta statistics", **kw)
    en.add_argument("--mode", choices=MODES)
    en.add_argument("--seeds-file", help="file of integer seeds (whitespace, comma or JSON list)")
    en.add_argument("--seeds", type=int, help="use seeds 0..N-1")
    _problem_args(en)

    va = sub.add_parser("validate", help="run invariant suites", **kw)
    va.add_argument("suite", nargs="?", default="all", choices=SUITES)
    return parser


def _config_from_args(args) -> RunConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    changes = {
        "mode": getattr(args, "mode", None),
        "snapshots": getattr(args, "snapshots", None),
        "noise.xi": getattr(args, "xi", None),
        "noise.eta": getattr(args, "eta", None),
        "initial": getattr(args, "initial", None),
        "grid.L": getattr(args, "L", None),
        "grid.n": getattr(args, "n", None),
        "time.dt": getattr(args, "dt", None),
        "time.T_max": getattr(args, "T", None),
        "stop.R": getattr(args, "R", None),
        "stop.T_w": getattr(args, "Tw", None),
        "seed": getattr(args, "seed", None),
        "scheme": getattr(args, "scheme", None),
        "output": getattr(args, "out", None),
    }
    if getattr(args, "pure_noise", None):
        changes["nonlinear"] = False
    return cfg.replace(**changes)


def read_seeds(path) -> list[int]:
    text = Path(path).read_text().strip()
    if text.startswith("["):
        seeds = json.loads(text)
    else:
        seeds = [int(tok) for tok in text.replace(",", " ").split()]
    if not seeds or not all(isinstance(s, int) and s >= 0 for s in seeds):
        raise ConfigError("seeds file must list non-negative integers", field="seeds")
    if len(set(seeds)) != len(seeds):
        raise ConfigError("seeds must be distinct", field="seeds")
    return seeds


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    quiet = getattr(args, "quiet", False)
    say = (lambda *a: None) if quiet else print

    if args.command == "validate":
        out = getattr(args, "out", None)
        rep = validate(args.suite, out_dir=out, echo=None if quiet else print)
        return 0 if rep.passed else EXIT_VALIDATION_FAILURE

    try:
        cfg = _config_from_args(args)
        out = Path(cfg.output)
        if args.command == "simulate":
            outcome = run(cfg, out, figures=not args.no_figures)
            res = outcome.result
            say(f"{cfg.mode}: stop={res.stop_reason.value} theta={res.theta:.6g} -> {out}")
            return outcome.exit_code
        if args.command == "transform":
            f, g = transform(cfg, args.t, args.field)
            out.mkdir(parents=True, exist_ok=True)
            buf = io.StringIO()
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(["x", "f", "U_t_f"])
            for row in zip(f.grid.x, f.values, g.values):
                w.writerow([repr(float(v)) for v in row])
            (out / "transform.csv").write_text(buf.getvalue())
            plots.plot_transform(f, g, args.t, out / "transform.png")
            say(f"U_t f at t={args.t:g} -> {out / 'transform.csv'}")
            return 0
        if args.command == "converge":
            study = converge(cfg, args.levels, range(args.seeds))
            out.mkdir(parents=True, exist_ok=True)
            (out / "convergence.csv").write_text(study.to_csv())
            plots.plot_convergence(study.dts, study.rms, study.order, out / "convergence.png")
            say(f"{cfg.scheme} strong order {study.order:.3f} over {args.seeds} seeds x {args.levels} levels -> {out}")
            return 0
        if args.command == "ensemble":
            if args.seeds_file:
                seeds = read_seeds(args.seeds_file)
            elif args.seeds:
                seeds = list(range(args.seeds))
            elif cfg.seeds:
                seeds = list(cfg.seeds)
            else:
                raise ConfigError("no seeds: pass --seeds-file, --seeds or set 'seeds' in the config", field="seeds")
            ens = ensemble_run(cfg, seeds)
            out.mkdir(parents=True, exist_ok=True)
            (out / "ensemble.csv").write_text(ens.to_csv())
            (out / "ensemble_summary.csv").write_text(ens.summary_csv())
            if ens.thetas.size:
                plots.plot_theta_histogram(ens.thetas, out / "theta_hist.png")
            summary = ens.summary()
            say(f"{summary['runs']} runs, {summary['failed']} failed, mean theta {summary.get('mean', float('nan')):.4g} -> {out}")
            return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    raise AssertionError(f"unhandled command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
