"""Command-line entry point for running sweeps and recomputing diagnostics."""

import argparse
import sys

from .errors import ConfigError
from .harness import ExperimentPlan, diagnose, emit_plot_data, run_plan

_LIST_KEYS = {"samplers", "widths", "betas", "seeds"}
_INT_KEYS = {
    "steps",
    "burn_in",
    "thin",
    "n",
    "synthetic_m",
    "synthetic_k",
    "data_seed",
    "n_chains_per_cell",
    "n_components",
    "checkpoint_every",
    "workers",
}
_FLOAT_KEYS = {"noise_sigma", "sigma_w2", "sigma_b2", "readout_sigma_w2"}
_BOOL_KEYS = {"strict"}


def parse_config_file(path):
    """Flat key=value plan file; '#' starts a comment."""
    values = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value")
            key, _, raw = line.partition("=")
            key, raw = key.strip(), raw.strip()
            if key in _LIST_KEYS:
                parts = [p.strip() for p in raw.split(",") if p.strip()]
                values[key] = tuple(
                    p if key == "samplers" else float(p) if key == "betas" else int(p)
                    for p in parts
                )
            elif key in _INT_KEYS:
                values[key] = int(raw)
            elif key in _FLOAT_KEYS:
                values[key] = float(raw)
            elif key in _BOOL_KEYS:
                values[key] = raw.lower() in ("1", "true", "yes")
            elif key in ("data_path", "out_dir", "mode", "activation"):
                values[key] = raw
            else:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
    return values


def build_parser():
    parser = argparse.ArgumentParser(
        prog="widebnn",
        description="Posterior sampling sweeps for wide Bayesian neural networks",
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    def add_common(p):
        p.add_argument("--config", help="key=value plan file")
        p.add_argument("--out", help="output directory")
        p.add_argument("--workers", type=int)
        p.add_argument("--strict", action="store_true", help="sequential bit-reproducible mode")
        p.add_argument("--data", help="CIFAR-10 binary batch file")
        p.add_argument("--synthetic", metavar="N,M,K", help="synthetic dataset dims")
        p.add_argument("--seed", help="comma-separated seed list")

    for verb in ("run", "resume"):
        add_common(sub.add_parser(verb))
    d = sub.add_parser("diagnose")
    d.add_argument("--out", required=True)
    d.add_argument("--components", type=int, default=2)
    p = sub.add_parser("plot-data")
    p.add_argument("--out", required=True)
    return parser


def plan_from_args(args):
    values = parse_config_file(args.config) if args.config else {}
    if args.out:
        values["out_dir"] = args.out
    if args.workers is not None:
        values["workers"] = args.workers
    if args.strict:
        values["strict"] = True
    if args.data:
        values["data_path"] = args.data
    if args.synthetic:
        parts = args.synthetic.split(",")
        if len(parts) != 3:
            raise ConfigError("--synthetic expects n,m,k")
        values["n"], values["synthetic_m"], values["synthetic_k"] = map(int, parts)
        values["data_path"] = ""
    if args.seed:
        values["seeds"] = tuple(int(s) for s in args.seed.split(","))
    try:
        return ExperimentPlan(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.verb in ("run", "resume"):
            plan = plan_from_args(args)
            return run_plan(plan, resume=args.verb == "resume")
        if args.verb == "diagnose":
            return diagnose(args.out, n_components=args.components)
        return emit_plot_data(args.out)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
