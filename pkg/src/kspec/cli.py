"""Command line entry point: ``kspec fig1|fig2|fig3|fig4|fig5|lsd|verify``.

Settings come from an optional JSON config file; flags given on the
command line override the file. Figure commands refuse to run without a
seed.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

from .experiments import EXPERIMENTS, ExperimentConfig, run

log = logging.getLogger("kspec")

FIGURES = ("fig1", "fig2", "fig3", "fig4", "fig5")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kspec", description="Kendall correlation spectra: figure data and verification."
    )
    parser.add_argument("command", choices=EXPERIMENTS)
    parser.add_argument("--config", help="JSON config file; flags override its keys")
    parser.add_argument("--seed", type=int, help="RNG seed (required for figure commands)")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--replications", type=int)
    parser.add_argument("--eta", type=float, help="imaginary offset for Stieltjes inversion")
    parser.add_argument("--grid-points", type=int, dest="grid_points")
    parser.add_argument("--threads", type=int)
    parser.add_argument("--quick", action="store_true", default=None,
                        help="smaller Monte Carlo budgets (verify only)")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    data: dict = {}
    if args.config:
        with open(args.config) as fh:
            data = json.load(fh)
        if not isinstance(data, dict):
            raise ValueError("config file must hold a JSON object")
        file_cmd = data.pop("experiment", args.command)
        if file_cmd != args.command:
            raise ValueError(f"config is for {file_cmd!r}, command is {args.command!r}")
    for key in ("seed", "out", "replications", "eta", "grid_points", "threads", "quick"):
        val = getattr(args, key)
        if val is not None:
            data[key] = val
    data["experiment"] = args.command
    if args.command in FIGURES and data.get("seed") is None:
        raise ValueError(f"{args.command} needs --seed (or a 'seed' key in the config)")
    if args.command == "lsd":
        if not data.get("model"):
            raise ValueError("lsd needs a 'model' object in the config, e.g. {\"kind\": \"ma1\", \"p\": 1, \"rho\": 0.5}")
        if data.get("c") is None and not data.get("shapes"):
            raise ValueError("lsd needs 'c' or 'shapes' in the config")
    return ExperimentConfig.from_dict(data)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
    except (ValueError, OSError, TypeError) as exc:
        parser.error(str(exc))
    log.info("running %s into %s", cfg.experiment, cfg.out)
    manifest = run(cfg)
    results = manifest["results"]
    if cfg.experiment == "verify":
        print(f"{results['n_checks']} checks, {results['n_failed']} failed")
        for name in results["failed"]:
            print(f"FAILED {name}")
        return 0 if results["all_pass"] else 1
    print(f"wrote {len(manifest['files']) + 1} files to {cfg.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
