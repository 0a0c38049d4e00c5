"""runs a configured TAMD experiment and writes its CSV artifacts"""

import argparse
import importlib
import os
import sys

from helpers import task
from helpers.config import SEED_ENV, ExperimentConfig, load_config
from tamdlab import fpgrid
from tamdlab.errors import ConfigError, LabError

INTERRUPTED = 130

# kinds that read delta_list; fe reads neither delta nor delta_list
DELTA_LIST_KINDS = ("sweep",)


def load_config_decorator(func):
    """Decorator to resolve a config path into an ExperimentConfig."""

    def wrapper(self, config, *args, **kwargs):
        if not isinstance(config, ExperimentConfig):
            config = load_config(config)
        return func(self, config, *args, **kwargs)

    return wrapper


class ExperimentRunner:
    """Class to describe and run an experiment."""

    def __init__(self, output_dir=".", threads=1, include_q=False, quiet=False):
        self.output_dir = output_dir
        self.threads = threads
        self.include_q = include_q
        self.quiet = quiet

    @staticmethod
    def get_kinds():
        return task.get_experiments()

    @staticmethod
    def warnings(config):
        out = []
        if config.kind == "fe" and config.delta_list:
            out.append("warning: kind=fe ignores delta and delta_list")
        elif config.delta_list and config.kind not in DELTA_LIST_KINDS:
            out.append(
                f"warning: delta_list is unused by kind={config.kind}; "
                f"delta = {config.params.delta} applies"
            )
        return out

    @load_config_decorator
    def describe(self, config):
        """Resolved plan of a configuration; performs no computation."""
        grid = config.grid
        lines = [f"config: {config.path}", f"kind: {config.kind}"]
        for section, values in config.values.items():
            lines.append(f"[{section}]")
            for key, value in values.items():
                note = f"  (from {SEED_ENV})" if key == "seed" and \
                    config.seed_source == SEED_ENV else ""
                lines.append(f"  {key} = {value}{note}")
        lines.append(f"potential: {config.potential.describe()}")
        lines.append(f"grid: {grid.n_q} x {grid.n_z} = {grid.size} nodes ({grid.scheme})")
        lines.append(
            "tolerances: "
            f"leak = {grid.leak_tol:g}; residual = {fpgrid.RESIDUAL_TOL:g} "
            f"(at least {fpgrid.ROUNDOFF_FACTOR} eps |L|_inf); "
            f"cross-check = {fpgrid.CROSS_CHECK_TOL:g}; zero = {fpgrid.ZERO_TOL:g}"
        )
        lines.append(f"replicas: {config.replicas}; threads: {self.threads}")
        mod = importlib.import_module(f"{task.EXPERIMENT_PACKAGE}.{config.kind}")
        for suffix, header in mod.Task.outputs.items():
            path = os.path.join(self.output_dir, f"{config.output}{suffix}.csv")
            lines.append(f"output: {path}: {', '.join(header)}")
        lines.extend(self.warnings(config))
        plan = "\n".join(lines)
        print(plan)
        return plan

    @load_config_decorator
    def run(self, config):
        """Run the experiment task of the configured kind."""
        try:
            os.makedirs(self.output_dir, exist_ok=True)
        except OSError as err:
            raise ConfigError(f"output dir {self.output_dir}: {err}") from err
        if not os.access(self.output_dir, os.W_OK):
            raise ConfigError(f"output dir {self.output_dir} is not writable")
        if not self.quiet:
            for line in self.warnings(config):
                print(line)
        return task.run_experiment(
            config,
            output_dir=self.output_dir,
            include_q=self.include_q,
            threads=self.threads,
            output=not self.quiet,
        )


def build_parser():
    parser = argparse.ArgumentParser(description="run a TAMD lab experiment")
    parser.add_argument("config", help="experiment configuration file")
    parser.add_argument(
        "-o",
        "--output-dir",
        default=".",
        help="directory for the CSV artifacts",
    )
    parser.add_argument(
        "-n",
        "--dry-run",
        action="store_true",
        help="print the resolved plan without computing",
    )
    parser.add_argument(
        "-t",
        "--threads",
        type=int,
        default=1,
        help="worker threads for replicas and delta jobs",
    )
    parser.add_argument(
        "--include-q",
        action="store_true",
        help="include q columns in trajectory CSVs",
    )
    parser.add_argument(
        "-q",
        "--quiet",
        action="store_true",
        help="silence progress logging",
    )
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    runner = ExperimentRunner(args.output_dir, args.threads, args.include_q, args.quiet)
    try:
        if args.threads < 1:
            raise ConfigError(f"--threads must be at least 1, got {args.threads}")
        if args.dry_run:
            runner.describe(args.config)
        else:
            runner.run(args.config)
    except LabError as err:
        print(f"{type(err).__name__}: {err}", file=sys.stderr)
        return err.exit_code
    except KeyboardInterrupt:
        print("Exiting...", file=sys.stderr)
        return INTERRUPTED
    return 0


if __name__ == "__main__":
    sys.exit(main())
