import argparse
import logging
import os
import sys
from typing import List, Optional

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))
from cli import __version__
from csi_id.bench import BenchConfig, plot_report, run_benchmark
from csi_id.config import get_threads
from csi_id.csi import identify_csi, learn_labels
from csi_id.distributions import evaluate, read_distribution_file
from csi_id.errors import CsiIdError, InputError
from csi_id.estimand import is_identified, read_estimand_file, render
from csi_id.export import export_to_csv, print_csv
from csi_id.graph import Context, read_graph_file
from csi_id.labels import ControlSpec, LabelSet, format_labels, read_label_file, write_label_file

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_NON_IDENTIFIABLE = 2
EXIT_INTERRUPTED = 130


class _Parser(argparse.ArgumentParser):
    """Usage errors are input errors (exit 1); exit 2 is reserved."""

    def error(self, message: str):
        raise InputError(f"{self.prog}: {message}")


def _name_list(text: str) -> List[str]:
    names = [name.strip() for name in text.split(',') if name.strip()]
    if not names:
        raise argparse.ArgumentTypeError("expected a comma-separated list of variable names")
    return names


def _int_list(text: str) -> List[int]:
    try:
        return [int(v) for v in text.split(',') if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got '{text}'")


def parse_args(args: Optional[List[str]] = None) -> argparse.Namespace:
    """
    Parse command-line arguments.

    Args:
        args: Command-line arguments (defaults to sys.argv[1:])

    Returns:
        Parsed arguments
    """
    parser = _Parser(
        prog="csi-id",
        description="Identify causal effects from a DAG with context-specific independence labels."
    )

    parser.add_argument(
        "-d", "--debug",
        action="store_true",
        help="Print debug information"
    )

    parser.add_argument(
        "-v", "--version",
        action="version",
        version=f"%(prog)s {__version__}"
    )

    parser.add_argument(
        "--threads",
        type=int,
        help="Worker pool size (can also be set with CSIID_THREADS)"
    )

    commands = parser.add_subparsers(dest="command", required=True)

    identify_cmd = commands.add_parser("identify", help="Identify P_t(s) from a graph and optional label file")
    identify_cmd.add_argument("graph_file", help="Graph file")
    identify_cmd.add_argument("label_file", nargs="?", help="Label file (no controls when omitted)")
    identify_cmd.add_argument("-t", "--treatment", type=_name_list, required=True, help="Treatment variables, comma-separated")
    identify_cmd.add_argument("-o", "--outcome", type=_name_list, required=True, help="Outcome variables, comma-separated")
    identify_cmd.add_argument("--format", choices=["text", "sexpr"], default="text", help="Estimand rendering (default: text)")
    identify_cmd.set_defaults(handler=cmd_identify)

    learn_cmd = commands.add_parser("learn", help="Learn a label set from an observational distribution")
    learn_cmd.add_argument("graph_file", help="Graph file")
    learn_cmd.add_argument("dist_file", help="Model file or joint-table file over the observed variables")
    learn_cmd.add_argument("-c", "--control", type=_name_list, help="Control variables (default: every observed root)")
    learn_cmd.add_argument("--out", help="Output label file (printed when omitted)")
    learn_cmd.add_argument("--allow-degenerate", action="store_true", help="Accept distributions with zero cells")
    learn_cmd.add_argument("--tolerance", type=float, help="Tolerance for float distributions (can also be set with CSIID_TOLERANCE)")
    learn_cmd.set_defaults(handler=cmd_learn)

    eval_cmd = commands.add_parser("eval", help="Evaluate an estimand on a distribution")
    eval_cmd.add_argument("estimand_file", help="Estimand in s-expression form")
    eval_cmd.add_argument("dist_file", help="Model file or joint-table file")
    eval_cmd.add_argument("--graph", help="Graph file for model files with latent variables")
    eval_cmd.add_argument("--treatment-values", default="", help="Treatment assignment, e.g. X=1")
    eval_cmd.add_argument("--outcome-values", default="", help="Outcome assignment, e.g. Y=0")
    eval_cmd.set_defaults(handler=cmd_eval)

    bench_cmd = commands.add_parser("bench", help="Run the random-graph benchmark")
    bench_cmd.add_argument("--n-min", type=int, default=30, help="Smallest graph size (default: 30)")
    bench_cmd.add_argument("--n-max", type=int, default=100, help="Largest graph size (default: 100)")
    bench_cmd.add_argument("--n-step", type=int, default=10, help="Step between graph sizes (default: 10)")
    bench_cmd.add_argument("--ns", type=_int_list, help="Explicit graph sizes, overrides --n-min/--n-max/--n-step")
    bench_cmd.add_argument("--reps", type=int, default=200, help="Instances per graph size (default: 200)")
    bench_cmd.add_argument("--seed", type=int, default=0, help="Base seed (default: 0)")
    bench_cmd.add_argument("--out-csv", help="Output CSV file (printed when omitted)")
    bench_cmd.add_argument("--plot-dir", help="Directory for the runtime and identifiability plots")
    bench_cmd.add_argument("--no-timing", action="store_true", help="Report zero runtimes so output is byte-identical")
    bench_cmd.set_defaults(handler=cmd_bench)

    return parser.parse_args(args)


def cmd_identify(parsed_args: argparse.Namespace) -> int:
    g = read_graph_file(parsed_args.graph_file)
    if parsed_args.label_file:
        labels, c_spec = read_label_file(parsed_args.label_file, g)
    else:
        c_spec = ControlSpec()
        labels = LabelSet.empty(g, c_spec)
    logger.info(f"Loaded graph with {len(g)} vertices and {len(c_spec)} control(s)")

    result = identify_csi(g, labels, c_spec, parsed_args.treatment, parsed_args.outcome, threads=parsed_args.threads)
    print(render(result, parsed_args.format))
    if not is_identified(result):
        return EXIT_NON_IDENTIFIABLE
    return EXIT_OK


def cmd_learn(parsed_args: argparse.Namespace) -> int:
    g = read_graph_file(parsed_args.graph_file)
    c_spec = ControlSpec(parsed_args.control if parsed_args.control else g.observed_roots())
    joint = read_distribution_file(parsed_args.dist_file, g)
    logger.info(f"Loaded distribution over {len(joint.variables)} variable(s)")

    labels = learn_labels(g, joint, c_spec, allow_degenerate=parsed_args.allow_degenerate, tolerance=parsed_args.tolerance)
    if labels.is_empty():
        logger.warning("No labels learned")
    if parsed_args.out:
        write_label_file(labels, c_spec, g, parsed_args.out)
    else:
        print(format_labels(labels, c_spec, g), end='')
    return EXIT_OK


def cmd_eval(parsed_args: argparse.Namespace) -> int:
    estimand = read_estimand_file(parsed_args.estimand_file)
    g = read_graph_file(parsed_args.graph) if parsed_args.graph else None
    joint = read_distribution_file(parsed_args.dist_file, g)
    value = evaluate(
        estimand,
        joint,
        Context.parse(parsed_args.treatment_values),
        Context.parse(parsed_args.outcome_values),
    )
    print(f"{value} = {float(value):.12g}")
    return EXIT_OK


def cmd_bench(parsed_args: argparse.Namespace) -> int:
    if parsed_args.ns:
        ns = tuple(parsed_args.ns)
    else:
        if parsed_args.n_step < 1:
            raise InputError(f"--n-step must be at least 1, got {parsed_args.n_step}")
        ns = tuple(range(parsed_args.n_min, parsed_args.n_max + 1, parsed_args.n_step))
    cfg = BenchConfig(
        ns=ns,
        repetitions=parsed_args.reps,
        seed=parsed_args.seed,
        timing=not parsed_args.no_timing,
        threads=parsed_args.threads,
    )
    report = run_benchmark(cfg)
    if parsed_args.out_csv:
        export_to_csv(report.rows, parsed_args.out_csv)
    else:
        print_csv(report.rows)
    if parsed_args.plot_dir:
        plot_report(report, parsed_args.plot_dir)
    return EXIT_OK


def main(args: Optional[List[str]] = None) -> int:
    """
    Main entry point for the command-line interface.

    Args:
        args: Command-line arguments (defaults to sys.argv[1:])

    Returns:
        Exit code: 0 success, 1 input error, 2 non-identifiable,
        3 evaluation error, 130 when interrupted
    """
    parsed_args = None
    try:
        # Parse arguments
        parsed_args = parse_args(args)

        if parsed_args.debug:
            logging.getLogger().setLevel(logging.DEBUG)
            logger.debug("Debug mode enabled")
            logger.debug(f"Arguments: {parsed_args}")

        get_threads(parsed_args.threads)
        return parsed_args.handler(parsed_args)

    except KeyboardInterrupt:
        logger.info("Operation cancelled by user")
        return EXIT_INTERRUPTED

    except CsiIdError as e:
        logger.error(f"Error: {str(e)}")
        if parsed_args and parsed_args.debug:
            logger.exception("Detailed error information:")
        return e.exit_code

    except Exception as e:
        logger.error(f"Error: {str(e)}")
        if parsed_args and parsed_args.debug:
            logger.exception("Detailed error information:")
        return 1


if __name__ == "__main__":
    sys.exit(main())
