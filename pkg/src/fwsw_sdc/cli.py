"""Command line front end: ``fwsw-sdc <experiment> [options]``.

Parameters come from the experiment defaults, then an optional JSON config
file, then the command line. Tables go to ``--out`` (or stdout) as CSV,
summary metrics to ``--metrics`` (default: next to ``--out`` with a
``.json`` suffix, otherwise stderr).

Exit codes: 0 success, 1 invalid input, 2 instability detected,
3 solver failure.
"""
import argparse
import csv
import json
import logging
import math
import pathlib
import sys

import numpy as np

from .experiments import DEFAULTS, ExperimentConfig, run
from .linalg_core import GmresBreakdown
from .sdc_engine import ImplicitSolveError

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_UNSTABLE = 2
EXIT_SOLVER = 3

# named flags -> parameter keys; anything else goes through --param KEY=VALUE
FLAGS = {
    "--M": "M",
    "--K": "K",
    "--family": "family",
    "--scheme": "scheme",
    "--dt": "dt",
    "--update-mode": "update_mode",
    "--gmres-tol": "gmres_tol",
    "--gmres-restart": "gmres_restart",
    "--tol-factor": "tol_factor",
    "--U": "U",
    "--cs": "cs",
    "--M-max": "M_max",
}


def format_value(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return f"{v:.15g}"
    return str(v)


def write_csv(result, stream):
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(result.columns)
    for row in result.rows:
        writer.writerow([format_value(v) for v in row])


def _json_default(v):
    if isinstance(v, np.generic):
        return v.item()
    raise TypeError(f"cannot serialise {type(v).__name__}")


def metrics_json(result):
    payload = {"experiment": result.name, "unstable": result.unstable, "metrics": result.metrics}
    return json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n"


class _Parser(argparse.ArgumentParser):
    """argparse exits with status 2 on bad usage, which is reserved for instability here."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def build_parser():
    parser = _Parser(prog="fwsw-sdc", description="Run fwsw-SDC experiments.")
    parser.add_argument("experiment", choices=sorted(DEFAULTS))
    parser.add_argument("--config", help="JSON file with parameters (flat object or under 'params')")
    parser.add_argument("--out", help="CSV output path (default: stdout)")
    parser.add_argument("--metrics", help="JSON metrics path")
    parser.add_argument("--param", action="append", default=[], metavar="KEY=VALUE",
                        help="set any experiment parameter; lists are comma separated")
    parser.add_argument("--family", choices=["radau", "lobatto", "legendre"])
    parser.add_argument("--update-mode", choices=["quadrature", "last-node"])
    for flag in FLAGS:
        if flag not in ("--family", "--update-mode"):
            parser.add_argument(flag)
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def load_config(path):
    data = json.loads(pathlib.Path(path).read_text())
    if not isinstance(data, dict):
        raise ValueError("config file must hold a JSON object")
    params = dict(data.get("params", {}))
    for key, value in data.items():
        if key not in ("params", "experiment", "out"):
            params[key] = value
    return data.get("experiment"), data.get("out"), params


def config_from_args(args):
    params, out = {}, None
    if args.config:
        experiment, out, params = load_config(args.config)
        if experiment is not None and experiment != args.experiment:
            raise ValueError(f"config is for {experiment!r}, not {args.experiment!r}")
    for flag, key in FLAGS.items():
        value = getattr(args, flag.lstrip("-").replace("-", "_"))
        if value is not None:
            params[key] = value
    for item in args.param:
        key, sep, value = item.partition("=")
        if not sep:
            raise ValueError(f"--param expects KEY=VALUE, got {item!r}")
        params[key.strip().replace("-", "_")] = value
    return ExperimentConfig(args.experiment, params, args.out or out)


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return exc.code
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(args)
        cfg.resolved()
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID

    try:
        result = run(cfg)
    except (ImplicitSolveError, GmresBreakdown, np.linalg.LinAlgError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER

    if cfg.out:
        with open(cfg.out, "w", newline="") as fh:
            write_csv(result, fh)
    else:
        write_csv(result, sys.stdout)
    metrics_path = args.metrics or (str(pathlib.Path(cfg.out).with_suffix(".json")) if cfg.out else None)
    if metrics_path:
        pathlib.Path(metrics_path).write_text(metrics_json(result))
    else:
        sys.stderr.write(metrics_json(result))

    if result.unstable:
        print("instability detected", file=sys.stderr)
        return EXIT_UNSTABLE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
