"""Command-line entry point: ``spinsim {run,figure,fixedpoint,selftest}``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import selftest
from .channel import VanishingProbability
from .experiments import FIGURES, ConfigError, ScenarioConfig, bundled_config, load_config, run_scenario
from .scattering import Model, SingularSystem

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="spinsim", description="Remote-spin singlet distillation by mediator scattering.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="run a scenario from a JSON config")
    run.add_argument("--config", required=True, type=Path)
    run.add_argument("--out", type=Path, help="CSV path (overrides output_path)")
    _add_overrides(run)

    fig = sub.add_parser("figure", help="run a bundled figure scenario")
    fig.add_argument("--id", required=True, choices=sorted(FIGURES), dest="figure_id")
    fig.add_argument("--out", type=Path, default=Path("."), help="output directory")
    _add_overrides(fig)

    fp = sub.add_parser("fixedpoint", help="report fixed points of the conditioned map")
    fp.add_argument("--model", required=True, choices=[m.value for m in Model])
    fp.add_argument("--g", required=True, type=float)
    fp.add_argument("--rpol", required=True, type=float)
    fp.add_argument("--q", type=int, default=1)
    fp.add_argument("--s", default="1/2")
    fp.add_argument("--out", type=Path)

    sub.add_parser("selftest", help="run the invariant checks")
    return parser


def _add_overrides(p):
    p.add_argument("--seed", type=int)
    p.add_argument("--n-max", type=int)
    p.add_argument("--q", type=int)
    p.add_argument("--model", choices=[m.value for m in Model])
    p.add_argument("--trajectories", type=int)
    p.add_argument("--plot-script", action="store_true", help="also write a matplotlib script")


def _apply_overrides(cfg: ScenarioConfig, args) -> ScenarioConfig:
    changes = {}
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        changes["seed"] = args.seed
    if args.n_max is not None:
        if args.n_max < 1:
            raise ConfigError("n_max must be >= 1")
        changes["n_max"] = args.n_max
        changes["n_values"] = None
    if args.q is not None:
        if args.q < 1:
            raise ConfigError("q must be a positive integer")
        changes["q"] = args.q
    if args.model is not None:
        changes["model"] = Model.parse(args.model)
    if args.trajectories is not None:
        if cfg.noise is None or args.trajectories < 1:
            raise ConfigError("--trajectories needs a positive count and a config with a noise section")
        changes["noise"] = replace(cfg.noise, trajectories=args.trajectories)
    return replace(cfg, **changes)


def _dispatch(args) -> int:
    if args.command == "selftest":
        return EXIT_OK if selftest.run() else EXIT_RUNTIME
    if args.command == "run":
        cfg = _apply_overrides(load_config(args.config), args)
        result = run_scenario(cfg, args.out, plot_script=args.plot_script)
    elif args.command == "figure":
        cfg = _apply_overrides(bundled_config(args.figure_id), args)
        out = args.out / Path(cfg.output_path).name
        result = run_scenario(cfg, out, plot_script=args.plot_script)
    else:
        from .experiments import parse_config

        cfg = parse_config({"scenario": "fixedpoint", "model": args.model, "g_grid": [args.g],
                            "r_pol_grid": [args.rpol], "q": args.q, "s": args.s})
        result = run_scenario(cfg, args.out)
    for line in result.report:
        print(line)
    for path in result.paths:
        print(f"wrote {path}")
    if not result.paths and not result.report:
        print(f"{len(result.records)} records (no output path set)")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return _dispatch(args)
    except (ConfigError, ValueError) as exc:
        print(f"spinsim: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (SingularSystem, VanishingProbability, ArithmeticError, OSError) as exc:
        print(f"spinsim: runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
