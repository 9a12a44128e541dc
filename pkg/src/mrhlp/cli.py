"""Command-line interface: ``mrhlp {fit,segment,simulate,select,eval,plot}``.

Exit status: 0 success, 1 usage error, 2 data error, 3 numerical failure.
The ``MRHLP_SEED`` environment variable overrides ``--seed``.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from . import io
from .core import Hyperparams, bic as bic_score
from .em import INIT_STRATEGIES, EmOptions, fit
from .exceptions import DataError, LengthMismatch, NumericalError
from .plot import render_svg
from .segmentation import map_segment, match_labels
from .selection import SelectionGrid, select
from .synthetic import simulate

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("mrhlp")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _int_range(text):
    try:
        if ":" in text:
            lo, hi = text.split(":", 1)
            return int(lo), int(hi)
        return int(text), int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected N or LO:HI, got {text!r}") from None


def _degrees(text):
    try:
        parts = [int(p) for p in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an int or comma list, got {text!r}") from None
    return parts[0] if len(parts) == 1 else tuple(parts)


def _seed(args):
    env = os.environ.get("MRHLP_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"MRHLP_SEED must be an integer, got {env!r}") from None
    return args.seed


def _em_options(args):
    return EmOptions(
        max_iter=args.max_iter,
        tol=args.tol,
        restarts=args.restarts,
        seed=_seed(args),
        cov_floor=args.cov_floor,
        init=args.init,
    )


def _add_em_flags(p):
    p.add_argument("--restarts", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-iter", type=int, default=300)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--cov-floor", type=float, default=1e-6)
    p.add_argument("--init", choices=INIT_STRATEGIES, default="contiguous-random")
    p.add_argument("--threads", type=int, default=1, help="parallel restarts / grid cells")
    p.add_argument("--univariate-bic", action="store_true",
                   help="use the univariate parameter count K(p+4)-2 in BIC (d=1 only)")


def _report_path(model_path):
    if model_path == "-":
        return None
    p = Path(model_path)
    return str(p.with_name(p.stem + ".report.json"))


def cmd_fit(args):
    series, _ = io.read_csv(args.input)
    hyper = Hyperparams(args.k, args.p, args.u)
    opts = _em_options(args)
    model, _, report = fit(series, hyper, opts, threads=args.threads)
    bic = report.bic
    if args.univariate_bic:
        bic = bic_score(report.loglik, hyper, series.d, series.n, univariate_count=True)
    meta = {"seed": opts.seed, "loglik": report.loglik, "bic": bic}
    io.write_model(args.output, model, meta)
    report_path = args.report or _report_path(args.output)
    if report_path:
        doc = report.to_dict()
        doc["bic"] = bic
        io.write_json(report_path, doc)
    log.info("fit: loglik=%.6f bic=%.6f iterations=%d converged=%s",
             report.loglik, bic, report.iterations, report.converged)


def cmd_segment(args):
    model = io.read_model(args.model)
    series, _ = io.read_csv(args.input)
    seg = map_segment(series, model)
    io.write_labels(args.labels, series.t, seg.labels)
    if args.pi_trace:
        io.write_pi_trace(args.pi_trace, series.t, seg.pi_trace)


def cmd_simulate(args):
    spec = io.read_simulation_spec(args.spec)
    series, labels = simulate(spec)
    io.write_series(args.output, series, labels)


def cmd_select(args):
    series, _ = io.read_csv(args.input)
    grid = SelectionGrid(args.k_range, args.p_range, args.u_range)
    result = select(series, grid, _em_options(args), threads=args.threads, univariate_count=args.univariate_bic)
    for hyper, msg in result.failed:
        print(f"warning: K={hyper.K} p={hyper.degrees[0]} u={hyper.u} failed: {msg}", file=sys.stderr)
    if not result.ranked:
        raise NumericalError("every grid cell failed")
    io.ranking_csv(args.output, result.ranked)
    if args.best_model:
        best = result.best
        io.write_model(args.best_model, best.model,
                       {"seed": best.report.seed, "loglik": best.report.loglik, "bic": best.bic})


def cmd_eval(args):
    pred = io.read_labels(args.pred)
    truth = io.read_labels(args.truth)
    if pred.size != truth.size:
        raise LengthMismatch(f"{args.pred} has {pred.size} labels but {args.truth} has {truth.size}")
    report = match_labels(pred, truth)
    io.write_json(args.output, report.to_dict())
    if args.confusion:
        io.confusion_csv(args.confusion, report.classes, report.confusion)
    log.info("eval: accuracy=%.6f", report.accuracy)


def cmd_plot(args):
    t_pi, pi = io.read_pi_trace(args.pi_trace)
    series, _ = io.read_csv(args.input)
    if t_pi.size != series.n:
        raise LengthMismatch(f"pi trace has {t_pi.size} rows but the series has {series.n}")
    svg = render_svg(series.t, series.Y, pi, list(series.channels))
    if args.output == "-":
        sys.stdout.write(svg)
    else:
        Path(args.output).write_text(svg, encoding="utf-8")


def build_parser():
    parser = _Parser(prog="mrhlp", description="Joint segmentation of multivariate time series.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("fit", help="fit a model to a CSV series")
    p.add_argument("input", help="CSV file with a t column ('-' for stdin)")
    p.add_argument("-o", "--output", default="model.json")
    p.add_argument("--report", help="report path (default: <model>.report.json)")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--p", type=_degrees, default=0, help="shared degree or comma list per regime")
    p.add_argument("--u", type=int, default=1)
    _add_em_flags(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("segment", help="MAP segmentation with a fitted model")
    p.add_argument("model")
    p.add_argument("input")
    p.add_argument("-o", "--labels", default="labels.csv")
    p.add_argument("--pi-trace", default="pi_trace.csv")
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("simulate", help="sample a labelled series from a simulation spec")
    p.add_argument("spec")
    p.add_argument("-o", "--output", default="-")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("select", help="rank (K, p, u) grid cells by BIC")
    p.add_argument("input")
    p.add_argument("-o", "--output", default="-")
    p.add_argument("--k-range", type=_int_range, default=(1, 5))
    p.add_argument("--p-range", type=_int_range, default=(0, 0))
    p.add_argument("--u-range", type=_int_range, default=(1, 1))
    p.add_argument("--best-model", help="also write the top-ranked model here")
    _add_em_flags(p)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("eval", help="score predicted labels against ground truth")
    p.add_argument("pred")
    p.add_argument("truth")
    p.add_argument("-o", "--output", default="-")
    p.add_argument("--confusion", help="also write the confusion matrix as CSV")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("plot", help="render channels, segments and probabilities as SVG")
    p.add_argument("pi_trace")
    p.add_argument("input")
    p.add_argument("-o", "--output", default="segmentation.svg")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("mrhlp: a subcommand is required")
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(message)s", stream=sys.stderr)
        args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError, UnicodeDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, ArithmeticError) as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        # option validation in EmOptions / IrlsOptions
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
