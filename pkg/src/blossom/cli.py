"""Command-line entry point: ``run`` experiments and ``summarize`` results."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .controller import StopReason
from .harness import BLOSSOM_FIELDS, ConfigError, ExperimentConfig, run_experiment, summarize, write_summary

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2

# CLI flag -> ExperimentConfig field
_FLAG_FIELDS = {
    "objective": "objective",
    "algorithm": "algorithm",
    "stop": "stop_param",
    "seeds": "seeds",
    "max_iter": "max_iterations",
    "out": "output_dir",
    "dim": "dim",
    "workers": "workers",
}
_EXPERIMENT_KEYS = {
    "log_transform",
    "lower",
    "upper",
    "known_minimum",
    "gp_lengthscale",
    "gp_output_scale",
}


def _seeds(text):
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"seeds must be comma-separated integers: {text!r}") from exc


def build_parser():
    parser = argparse.ArgumentParser(prog="blossom", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one objective/algorithm over several seeds")
    r.add_argument("--objective", help="benchmark name, 'gpdraw', or module:attr")
    r.add_argument("--algorithm", choices=["blossom", "ei-pi", "bayes-aqstop"])
    r.add_argument("--stop", type=float, help="regret target, PI threshold, or acquisition-value threshold")
    r.add_argument("--seeds", type=_seeds)
    r.add_argument("--max-iter", dest="max_iter", type=int)
    r.add_argument("--out", type=Path)
    r.add_argument("--dim", type=int)
    r.add_argument("--workers", type=int)
    r.add_argument("--config", type=Path, help="JSON file with any of the flags and BlossomConfig fields")

    s = sub.add_parser("summarize", help="tabulate a results directory")
    s.add_argument("--in", dest="inp", type=Path, required=True)
    s.add_argument("--out", type=Path, required=True)
    return parser


def config_from_args(args) -> ExperimentConfig:
    """Merge the JSON config file (if any) with command-line flags; flags win."""
    values, blossom = {}, {}
    if args.config is not None:
        try:
            raw = json.loads(args.config.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config file must hold a JSON object")
        for key, val in raw.items():
            key = key.replace("-", "_")
            if key in _FLAG_FIELDS:
                values[_FLAG_FIELDS[key]] = _seeds(val) if key == "seeds" and isinstance(val, str) else val
            elif key in _EXPERIMENT_KEYS or key in _FLAG_FIELDS.values():
                values[key] = val
            elif key in BLOSSOM_FIELDS:
                blossom[key] = val
            else:
                raise ConfigError(f"unknown config key {key!r}")
    for flag, name in _FLAG_FIELDS.items():
        val = getattr(args, flag, None)
        if val is not None:
            values[name] = val
    if "objective" not in values:
        raise ConfigError("--objective is required (flag or config file)")
    try:
        return ExperimentConfig(**values, blossom=blossom)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")

    if args.command == "summarize":
        try:
            rows = summarize(args.inp)
        except FileNotFoundError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        write_summary(rows, args.out, args.inp)
        print(args.out.with_suffix(".txt").read_text())
        return EXIT_OK

    try:
        cfg = config_from_args(args)
        for seed in cfg.seeds:
            cfg.blossom_config(seed).validate(cfg.dimension)
    except (ConfigError, ValueError, TypeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    results = run_experiment(cfg)
    for seed, res in zip(cfg.seeds, results):
        print(
            f"seed {seed}: {res.terminated_reason.value} y={res.recommended_y:.6g} "
            f"evals={res.total_evals} {res.message}".rstrip()
        )
    if all(r.terminated_reason == StopReason.ERROR for r in results):
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
