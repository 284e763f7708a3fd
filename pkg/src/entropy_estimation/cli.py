"""Command-line interface.

Subcommands ``estimate``, ``simulate``, ``mi`` and ``cluster``.  Exit codes:
0 ok, 2 usage or input error, 3 estimator precondition failure, 4 partial
failure (some estimator failed during ``simulate``).

Numbers are printed with 12 significant digits.  Entropies are in nats
unless ``--bits`` is given, which only changes presentation.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
import warnings
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .distributions import Histogram
from .estimators import NSB_MODES, EstimatorId, EstimatorPreconditionError, all_estimators, estimate
from .evaluation import (
    FAMILIES,
    SUPPORT_POLICIES,
    ExperimentConfig,
    TruthSpec,
    compare_all,
    run_experiment,
)
from .information import (
    NORMALIZERS,
    JointCountTable,
    estimate_mi,
    hierarchical_cluster,
    mi_permutation_significance,
    normalized_mi,
    variation_of_information,
)
from .mathfns import DomainError, QuadratureError

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_PRECONDITION = 3
EXIT_PARTIAL = 4

LN2 = math.log(2.0)
FIG1_GRID = (10, 20, 50, 100, 200, 500, 1000, 2000, 5000, 10000, 20000, 50000, 100000)


class InputError(Exception):
    """Malformed input file or inconsistent flags (exit code 2)."""


# ---------------------------------------------------------------- formatting

def fmt(x) -> str:
    """Decimal text with 12 significant digits; locale independent."""
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    out = format(x, ".12g")
    return "0" if out == "-0" else out


def jnum(x):
    """The JSON counterpart of :func:`fmt`: same digits, NaN becomes null."""
    if x is None or isinstance(x, (bool, str)):
        return x
    if isinstance(x, (int, np.integer)):
        return int(x)
    x = float(x)
    if not math.isfinite(x):
        return None
    return float(fmt(x))


def to_csv(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([v if isinstance(v, str) else fmt(v) for v in row])
    return buf.getvalue()


def to_json(obj) -> str:
    return json.dumps(obj, indent=2, ensure_ascii=False, allow_nan=False) + "\n"


def table_json(header, rows) -> list:
    return [{h: jnum(v) for h, v in zip(header, row)} for row in rows]


def emit(text: str, path: Optional[str]) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def emit_table(header, rows, args, default="csv") -> None:
    kind = args.format or default
    if kind == "json":
        emit(to_json(table_json(header, rows)), args.output)
    else:
        emit(to_csv(header, rows), args.output)


# ------------------------------------------------------------------- parsing

def _records(path: str, fields: int):
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except (OSError, UnicodeDecodeError) as exc:
        raise InputError(f"{path}: {exc}") from exc
    for lineno, line in enumerate(lines, 1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != fields:
            raise InputError(f"{path}:{lineno}: expected {fields} tab-separated fields")
        *labels, raw = parts
        try:
            count = int(raw)
        except ValueError:
            raise InputError(f"{path}:{lineno}: count {raw!r} is not an integer") from None
        if count < 0:
            raise InputError(f"{path}:{lineno}: negative count")
        yield lineno, labels, count


def read_count_file(path: str) -> dict:
    """``label<TAB>count`` lines; ``#`` comments and blank lines skipped."""
    out: dict = {}
    for lineno, (label,), count in _records(path, 2):
        if label in out:
            raise InputError(f"{path}:{lineno}: duplicate label {label!r}")
        out[label] = count
    if not any(c > 0 for c in out.values()):
        raise InputError(f"{path}: no positive counts")
    return out


def read_joint_file(path: str) -> JointCountTable:
    """``x<TAB>y<TAB>count`` lines; labels ordered by first appearance."""
    cells: dict = {}
    rows: dict = {}
    cols: dict = {}
    for lineno, (x, y), count in _records(path, 3):
        if (x, y) in cells:
            raise InputError(f"{path}:{lineno}: duplicate pair ({x!r}, {y!r})")
        cells[(x, y)] = count
        rows.setdefault(x, len(rows))
        cols.setdefault(y, len(cols))
    if not cells:
        raise InputError(f"{path}: empty joint file")
    counts = np.zeros((len(rows), len(cols)), dtype=np.int64)
    for (x, y), c in cells.items():
        counts[rows[x], cols[y]] = c
    if counts.sum() < 1:
        raise InputError(f"{path}: no positive counts")
    return JointCountTable(counts, tuple(rows), tuple(cols))


def read_matrix_file(path: str):
    """Header ``<TAB>l1<TAB>l2...`` then one ``label<TAB>values`` row per item."""
    try:
        with open(path, encoding="utf-8") as fh:
            lines = [l for l in fh.read().splitlines() if l.strip() and not l.startswith("#")]
    except (OSError, UnicodeDecodeError) as exc:
        raise InputError(f"{path}: {exc}") from exc
    if not lines:
        raise InputError(f"{path}: empty matrix file")
    labels = lines[0].split("\t")[1:]
    if len(lines) - 1 != len(labels):
        raise InputError(f"{path}: matrix is not square")
    values = []
    for i, line in enumerate(lines[1:]):
        parts = line.split("\t")
        if len(parts) != len(labels) + 1 or parts[0] != labels[i]:
            raise InputError(f"{path}: row {i + 1} does not match the header")
        try:
            values.append([float(v) for v in parts[1:]])
        except ValueError:
            raise InputError(f"{path}: row {i + 1} has a non-numeric entry") from None
    return labels, np.array(values)


def parse_estimators(text: Optional[str], ww_alpha: float) -> list:
    if text is None or text.strip().lower() == "all":
        return all_estimators(ww_alpha)
    out = []
    for token in text.split(","):
        if not token.strip():
            continue
        try:
            e = EstimatorId.parse(token)
        except ValueError as exc:
            raise InputError(str(exc)) from None
        if e.name == "WW" and not any(s in token for s in ":=("):
            e = EstimatorId("WW", ww_alpha)
        if e not in out:
            out.append(e)
    if not out:
        raise InputError("no estimators selected")
    return out


def parse_sizes(text: str) -> list:
    try:
        sizes = [int(float(s)) for s in text.split(",") if s.strip()]
    except ValueError:
        raise InputError(f"bad --sizes value {text!r}") from None
    if not sizes or any(n < 1 for n in sizes):
        raise InputError("--sizes needs positive integers")
    return sizes


# ------------------------------------------------------------------ commands

def cmd_estimate(args) -> int:
    counts = read_count_file(args.counts)
    values = np.array(list(counts.values()), dtype=np.int64)
    k = len(values) if args.support is None else args.support
    try:
        hist = Histogram(values, k)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    unit = "bits" if args.bits else "nats"
    rows = []
    for e in parse_estimators(args.estimator, args.alpha):
        value = estimate(hist, e, nsb_mode=args.nsb_mode).value
        rows.append([str(e), hist.sample_size, hist.support_size,
                     value / LN2 if args.bits else value, unit])
    emit_table(["estimator", "N", "K", "entropy", "unit"], rows, args)
    return EXIT_OK


METRIC_HEADER = ["estimator", "N", "trials", "mean_estimate", "mean_truth", "bias",
                 "variance", "mse", "mab", "failure"]
COMPARISON_HEADER = ["N", "metric", "test", "estimator_a", "estimator_b", "difference",
                     "p_value", "significant", "winner"]
WINNER_HEADER = ["N", "metric", "winner", "value", "tie", "beat_count"]
FIG1_HEADER = ["N", "estimator", "mean_estimate", "true_entropy"]


def _truth_from_args(args):
    if args.family == "empirical" or args.fig1:
        if not args.counts:
            raise InputError("empirical truth needs --counts FILE")
        counts = read_count_file(args.counts)
        with open(args.counts, "rb") as fh:
            digest = hashlib.sha256(fh.read()).hexdigest()
        truth = TruthSpec("empirical", counts=counts, top=args.top)
        echo = {"family": "empirical", "counts_sha256": digest, "classes": len(counts),
                "top": args.top}
        return truth, echo
    if args.K is None:
        raise InputError(f"--family {args.family} needs --K")
    truth = TruthSpec(args.family, K=args.K, alpha=args.alpha, exponent=args.exponent)
    echo = truth.describe()
    return truth, echo


def cmd_simulate(args) -> int:
    truth, truth_echo = _truth_from_args(args)
    if args.sizes is not None:
        sizes = parse_sizes(args.sizes)
    elif args.fig1:
        sizes = list(FIG1_GRID)
    else:
        raise InputError("--sizes is required")
    estimators = parse_estimators(args.estimators, args.ww_alpha)
    try:
        config = ExperimentConfig(
            truth=truth, sample_sizes=sizes, trials=args.trials, estimators=estimators,
            base_seed=args.seed, permutations=args.permutations, nsb_mode=args.nsb_mode,
            support_policy=args.support,
        )
    except ValueError as exc:
        raise InputError(str(exc)) from None

    reports = run_experiment(config, on_error="record")
    metric_rows = [
        [str(r.estimator), r.N, config.trials, r.mean_estimate, r.mean_truth, r.bias,
         r.variance, r.mse, r.mab, r.failure or ""]
        for r in reports
    ]
    comparison_rows, winner_rows = [], []
    if not args.fig1:
        comp = compare_all(reports, config.base_seed, config.permutations, config.alpha_level)
        for key in sorted(comp.permutation):
            tukey = comp.tukey[key].comparisons if key in comp.tukey else []
            for c in comp.permutation[key] + tukey:
                comparison_rows.append(
                    [key[0], key[1], c.test, str(c.estimator_a), str(c.estimator_b),
                     c.difference, c.p_value, c.significant,
                     "" if c.winner is None else str(c.winner)]
                )
        for w in comp.winners:
            winner_rows.append([w.N, w.metric, str(w.winner), w.value, w.tie, w.beat_count])

    document = {
        "artifact": {"name": "entropy_estimation", "version": __version__},
        "command": "simulate",
        "mode": "fig1" if args.fig1 else "standard",
        "seed": config.base_seed,
        "config": {
            "truth": truth_echo,
            "sample_sizes": list(config.sample_sizes),
            "trials": config.trials,
            "estimators": [str(e) for e in config.estimators],
            "nsb_mode": config.nsb_mode,
            "support_policy": config.support_policy,
            "permutations": config.permutations,
            "alpha_level": config.alpha_level,
        },
        "metrics": table_json(METRIC_HEADER, metric_rows),
        "comparisons": table_json(COMPARISON_HEADER, comparison_rows),
        "winners": table_json(WINNER_HEADER, winner_rows),
    }
    for row in document["metrics"]:
        row["failure"] = row["failure"] or None

    fig1_rows = [[r.N, str(r.estimator), r.mean_estimate, r.mean_truth] for r in reports]

    if args.output is not None:
        prefix = args.output
        emit(to_json(document), prefix + ".json")
        emit(to_csv(METRIC_HEADER, metric_rows), prefix + ".metrics.csv")
        if args.fig1:
            emit(to_csv(FIG1_HEADER, fig1_rows), prefix + ".fig1.csv")
        else:
            emit(to_csv(COMPARISON_HEADER, comparison_rows), prefix + ".comparisons.csv")
            emit(to_csv(WINNER_HEADER, winner_rows), prefix + ".winners.csv")
    elif args.format == "json":
        emit(to_json(document), None)
    elif args.fig1:
        emit(to_csv(FIG1_HEADER, fig1_rows), None)
    else:
        emit(to_csv(METRIC_HEADER, metric_rows), None)

    failed = [r for r in reports if r.failure]
    for r in failed:
        print(f"warning: {r.failure}", file=sys.stderr)
    return EXIT_PARTIAL if failed else EXIT_OK


def cmd_mi(args) -> int:
    table = read_joint_file(args.joint)
    rows = []
    for i, e in enumerate(parse_estimators(args.estimators, args.ww_alpha)):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            res = estimate_mi(table, e, nsb_mode=args.nsb_mode)
            try:
                res = normalized_mi(res, table, args.nmi_normalizer, nsb_mode=args.nsb_mode)
            except ValueError:
                pass  # both marginals have zero entropy; NMI left empty
            vi = variation_of_information(table, e, nsb_mode=args.nsb_mode)
            p = None
            if args.permutations > 0 and table.total >= 2:
                p = mi_permutation_significance(
                    table, e, args.permutations, seed=args.seed + i, nsb_mode=args.nsb_mode
                )
        rows.append([str(e), table.total, table.shape[0], table.shape[1], res.mi, res.nmi,
                     res.nmi_clamped, vi, p, res.negative])
    header = ["estimator", "N", "R", "C", "mi", "nmi", "nmi_clamped", "vi", "p_value",
              "mi_negative"]
    emit_table(header, rows, args)
    return EXIT_OK


def _pair_name(path: str):
    stem = os.path.basename(path)
    stem = stem.split(".", 1)[0] if "." in stem else stem
    parts = stem.split("--")
    if len(parts) != 2 or not all(parts):
        raise InputError(f"{path}: joint files must be named A--B[.ext]")
    return parts[0], parts[1]


def _distance_from_tables(paths, estimator, kind, normalizer, nsb_mode):
    items: dict = {}
    pairs = {}
    for path in paths:
        a, b = _pair_name(path)
        if a == b:
            raise InputError(f"{path}: an item cannot be paired with itself")
        items.setdefault(a, len(items))
        items.setdefault(b, len(items))
        key = frozenset((a, b))
        if key in pairs:
            raise InputError(f"{path}: pair {a}--{b} given twice")
        table = read_joint_file(path)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            if kind == "vi":
                d = variation_of_information(table, estimator, nsb_mode=nsb_mode)
            else:
                res = estimate_mi(table, estimator, nsb_mode=nsb_mode)
                try:
                    d = 1.0 - normalized_mi(res, table, normalizer, nsb_mode=nsb_mode).nmi
                except ValueError:
                    d = 0.0
        pairs[key] = max(d, 0.0)
    labels = list(items)
    n = len(labels)
    dist = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            key = frozenset((labels[i], labels[j]))
            if key not in pairs:
                raise InputError(f"missing joint file for {labels[i]}--{labels[j]}")
            dist[i, j] = dist[j, i] = pairs[key]
    return labels, dist


def cmd_cluster(args) -> int:
    if bool(args.joint) == bool(args.matrix):
        raise InputError("give either joint files or --matrix, not both")
    if args.matrix:
        labels, values = read_matrix_file(args.matrix)
        dist = 1.0 - values if args.matrix_kind == "nmi" else values
    else:
        estimator = parse_estimators(args.estimator, 1.0)[0]
        labels, dist = _distance_from_tables(args.joint, estimator, args.distance,
                                             args.nmi_normalizer, args.nsb_mode)
    try:
        tree = hierarchical_cluster(dist, labels)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    if args.format == "json":
        doc = {
            "labels": list(tree.labels),
            "merges": [{"left": m.left, "right": m.right, "height": jnum(m.height),
                        "size": m.size} for m in tree.merges],
            "newick": tree.newick(),
        }
        emit(to_json(doc), args.output)
    elif args.format == "csv":
        rows = [[len(labels) + i, m.left, m.right, m.height, m.size]
                for i, m in enumerate(tree.merges)]
        emit(to_csv(["node", "left", "right", "height", "size"], rows), args.output)
    else:
        emit(tree.newick() + "\n", args.output)
    return EXIT_OK


# -------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="base random seed")
    common.add_argument("--output", default=argparse.SUPPRESS,
                        help="output path (simulate: file prefix)")
    common.add_argument("--format", choices=("csv", "json"), default=argparse.SUPPRESS)

    parser = argparse.ArgumentParser(
        prog="entropy-estimation", parents=[common],
        description="Estimate discrete entropy and compare estimators.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.set_defaults(seed=0, output=None, format=None)
    sub = parser.add_subparsers(dest="command", required=True)

    def nsb_flag(p, default):
        p.add_argument("--nsb-mode", choices=NSB_MODES, default=default,
                       help="NSB alpha weight: evidence-weighted or hyperprior only")

    p = sub.add_parser("estimate", parents=[common], help="entropy of a count file")
    p.add_argument("counts", help="UTF-8 file of label<TAB>count lines")
    p.add_argument("--estimator", default="all",
                   help="comma-separated list, e.g. mle,mm,ww:0.5 (default all)")
    p.add_argument("--support", "-K", type=int, default=None,
                   help="support size K (default: number of listed classes)")
    p.add_argument("--alpha", type=float, default=1.0, help="WW concentration")
    p.add_argument("--bits", action="store_true", help="report bits instead of nats")
    nsb_flag(p, "evidence")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("simulate", parents=[common], help="simulation study")
    p.add_argument("--family", choices=FAMILIES, default="zipf")
    p.add_argument("--K", type=int, default=None)
    p.add_argument("--exponent", type=float, default=1.0, help="Zipf exponent")
    p.add_argument("--alpha", type=float, default=1.0, help="Dirichlet concentration")
    p.add_argument("--counts", default=None, help="count file for the empirical family")
    p.add_argument("--top", type=int, default=None, help="keep the TOP most frequent classes")
    p.add_argument("--sizes", default=None, help="comma-separated sample sizes")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--estimators", default="all")
    p.add_argument("--ww-alpha", type=float, default=1.0)
    p.add_argument("--support", choices=SUPPORT_POLICIES, default="auto",
                   help="which K the K-dependent estimators see")
    p.add_argument("--permutations", type=int, default=1000)
    p.add_argument("--fig1", action="store_true",
                   help="dense N sweep on --counts; emits mean estimate vs truth rows")
    nsb_flag(p, "evidence")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("mi", parents=[common], help="mutual information of a joint file")
    p.add_argument("joint", help="UTF-8 file of x<TAB>y<TAB>count lines")
    p.add_argument("--estimators", default="MLE")
    p.add_argument("--ww-alpha", type=float, default=1.0)
    p.add_argument("--permutations", type=int, default=1000)
    p.add_argument("--nmi-normalizer", choices=NORMALIZERS, default="min")
    nsb_flag(p, "evidence")
    p.set_defaults(func=cmd_mi)

    p = sub.add_parser("cluster", parents=[common], help="average-linkage tree")
    p.add_argument("joint", nargs="*", help="joint files named A--B.tsv, one per item pair")
    p.add_argument("--matrix", default=None, help="square TSV matrix with a header row")
    p.add_argument("--matrix-kind", choices=("nmi", "distance"), default="nmi",
                   help="nmi entries are turned into 1 - nmi")
    p.add_argument("--distance", choices=("vi", "nmi"), default="vi")
    p.add_argument("--estimator", default="MLE")
    p.add_argument("--nmi-normalizer", choices=NORMALIZERS, default="min")
    nsb_flag(p, "evidence")
    p.set_defaults(func=cmd_cluster)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (EstimatorPreconditionError, DomainError, QuadratureError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except (InputError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
