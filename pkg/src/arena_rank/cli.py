"""Command-line interface: ``arena-rank <command> ...``.

Human-readable tables go to stdout, machine-readable output to ``--out``.
Failures print a single ``error: ...`` line to stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import analysis, evaluation
from .data import ComparisonDataset, DataError, DisconnectedError, from_arrays, read_dataset, split, validate
from .estimation import FitError, FitOptions, FitReport, fit, load_model, param_count, report_to_dict
from .models import Family, ModelConfig

log = logging.getLogger("arena_rank")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def worker_count(jobs: int) -> int:
    raw = os.environ.get("ARENA_RANK_THREADS")
    cap = os.cpu_count() or 1
    if raw:
        try:
            cap = int(raw)
        except ValueError:
            raise UsageError(f"ARENA_RANK_THREADS must be an integer, got {raw!r}") from None
        if cap < 1:
            raise UsageError("ARENA_RANK_THREADS must be at least 1")
    return max(1, min(cap, jobs))


def parse_config(label: str) -> ModelConfig:
    """``family[:k_cov[:k_tie]]`` with ``-`` for an absent component."""
    parts = label.split(":")
    if not 1 <= len(parts) <= 3:
        raise UsageError(f"bad model label {label!r}; expected family:k_cov:k_tie")
    parts += ["-"] * (3 - len(parts))

    def rank(text):
        return None if text in ("-", "") else int(text)

    try:
        return ModelConfig(Family.parse(parts[0]), rank(parts[1]), rank(parts[2]))
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _config_from_args(args) -> list[ModelConfig]:
    configs = [parse_config(c) for c in (args.config or [])]
    if args.family is not None:
        try:
            configs.insert(0, ModelConfig(Family.parse(args.family), args.k_cov, args.k_tie))
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    elif args.k_cov is not None or args.k_tie is not None:
        raise UsageError("--k-cov/--k-tie need --family")
    if not configs:
        raise UsageError("no model given; use --family or --config")
    return configs


def _load_data(path) -> ComparisonDataset:
    data = read_dataset(path)
    validate(data).raise_for_errors()
    return data


def _options(args) -> FitOptions:
    try:
        return FitOptions(tol=args.tol, max_iter=args.max_iter, seed=args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def dumps(obj) -> str:
    """Deterministic JSON text; non-finite floats become strings."""

    def clean(v):
        if isinstance(v, float) and not math.isfinite(v):
            return "nan" if math.isnan(v) else ("inf" if v > 0 else "-inf")
        if isinstance(v, dict):
            return {k: clean(x) for k, x in v.items()}
        if isinstance(v, (list, tuple)):
            return [clean(x) for x in v]
        if isinstance(v, np.ndarray):
            return clean(v.tolist())
        if isinstance(v, np.generic):
            return clean(v.item())
        return v

    return json.dumps(clean(obj), indent=1, allow_nan=False) + "\n"


def _write(path, text: str) -> None:
    Path(path).write_text(text, encoding="utf-8")


def _align(model: FitReport, data: ComparisonDataset) -> ComparisonDataset:
    """Reindex ``data`` onto the model's roster."""
    if set(model.competitors) != set(data.competitors):
        missing = sorted(set(data.competitors) - set(model.competitors))
        extra = sorted(set(model.competitors) - set(data.competitors))
        raise DataError(f"roster mismatch between model and data (only in data: {missing}; only in model: {extra})")
    pos = {name: k for k, name in enumerate(model.competitors)}
    remap = np.array([pos[name] for name in data.competitors])
    a, b = remap[data.i], remap[data.j]
    swap = a > b
    return from_arrays(
        model.competitors,
        np.where(swap, b, a),
        np.where(swap, a, b),
        np.where(swap, data.wins_j, data.wins_i),
        np.where(swap, data.wins_i, data.wins_j),
        data.ties,
    )


def _summary(report: FitReport) -> str:
    m = len(report.competitors)
    return (
        f"{report.config.label()} params={param_count(report.config, m)} nll={report.nll:.6f} "
        f"iterations={report.iterations} converged={str(report.converged).lower()}"
    )


def _top(model: FitReport, top: int | None) -> list[int]:
    board = analysis.leaderboard(model.params.mu, model.competitors)
    if top is not None:
        if top < 1:
            raise UsageError("--top must be positive")
        board = board[:top]
    return [e.index for e in board]


def cmd_train(args) -> int:
    configs = _config_from_args(args)
    if len(configs) != 1:
        raise UsageError("train fits exactly one model")
    config = configs[0]
    data = _load_data(args.data)
    report = fit(data, config, _options(args))
    _write(args.out, dumps(report_to_dict(report)))
    print(_summary(report))
    for note in report.diagnostics:
        print(f"warning: {note}", file=sys.stderr)
    return 0


def cmd_rank(args) -> int:
    model = load_model(args.model)
    rows = analysis.leaderboard(model.params.mu, model.competitors)
    if args.top is not None:
        rows = rows[: args.top]
    records = [{"rank": e.rank, "name": e.name, "score": e.score} for e in rows]
    width = max([4, *(len(e.name) for e in rows)])
    lines = [f"{'rank':>4}  {'name':<{width}}  {'score':>10}"]
    lines += [f"{e.rank:>4}  {e.name:<{width}}  {e.score:>10.6f}" for e in rows]
    print("\n".join(lines))
    if args.out:
        if str(args.out).lower().endswith(".csv"):
            buf = io.StringIO()
            writer = csv.writer(buf, lineterminator="\n")
            writer.writerow(["rank", "name", "score"])
            writer.writerows([r["rank"], r["name"], repr(r["score"])] for r in records)
            _write(args.out, buf.getvalue())
        else:
            _write(args.out, dumps(records))
    return 0


def cmd_evaluate(args) -> int:
    model = load_model(args.model)
    data = _align(model, read_dataset(args.data))
    rep = evaluation.evaluate(data, model.config, model.params)
    print(evaluation.format_table([(model.config.label(), rep)]))
    if args.out:
        _write(args.out, dumps({"model": model.config.label(), **rep.to_dict()}))
    return 0


def _fit_and_test(train, test, config, options):
    report = fit(train, config, options)
    return report, evaluation.evaluate(test, config, report.params)


def cmd_split_eval(args) -> int:
    configs = _config_from_args(args)
    options = _options(args)
    data = _load_data(args.data)
    try:
        train, test = split(data, args.test_fraction, args.seed)
    except DisconnectedError as exc:
        raise DataError(f"{exc}; retry with a different --seed") from None
    with ThreadPoolExecutor(max_workers=worker_count(len(configs))) as pool:
        results = list(pool.map(lambda c: _fit_and_test(train, test, c, options), configs))
    rows = [(c.label(), rep) for c, (_, rep) in zip(configs, results)]
    print(evaluation.format_table(rows))
    if args.out:
        out = {
            "test_fraction": args.test_fraction,
            "seed": args.seed,
            "train_total": train.total,
            "test_total": test.total,
            "models": [
                {"model": c.label(), "train_nll": fr.nll, "converged": fr.converged, **rep.to_dict()}
                for c, (fr, rep) in zip(configs, results)
            ],
        }
        _write(args.out, dumps(out))
    return 0


def cmd_compare(args) -> int:
    if len(args.models) < 2:
        raise UsageError("compare needs at least two model files")
    models = [load_model(p) for p in args.models]
    roster = models[0].competitors
    scores = []
    for path, model in zip(args.models, models):
        if set(model.competitors) != set(roster):
            raise DataError(f"roster mismatch: {path} does not share the roster of {args.models[0]}")
        pos = {name: k for k, name in enumerate(model.competitors)}
        scores.append(model.params.mu[[pos[name] for name in roster]])
    tau = analysis.tau_matrix(scores)
    dendro = analysis.agglomerate(1.0 - tau, args.linkage)
    labels = [m.config.label() for m in models]
    width = max(len(s) for s in labels)
    lines = [" " * width + "  " + "  ".join(f"{k:>7d}" for k in range(len(labels)))]
    for k, label in enumerate(labels):
        lines.append(f"{label:<{width}}  " + "  ".join(f"{v:7.4f}" for v in tau[k]))
    print("\n".join(lines))
    print("leaf order: " + " ".join(labels[k] for k in dendro.leaf_order))
    if args.out:
        _write(args.out, dumps({"models": labels, "files": list(args.models), "tau": tau, **dendro.to_dict()}))
    return 0


def _dissimilarity_source(model: FitReport) -> np.ndarray:
    if model.params.delta is None:
        print("warning: model has no covariance; using plain score differences", file=sys.stderr)
    return analysis.z_matrix(model.params)


def cmd_map(args) -> int:
    model = load_model(args.model)
    idx = _top(model, args.top)
    Z = _dissimilarity_source(model)[np.ix_(idx, idx)]
    if args.method == "mds":
        emb = analysis.classical_mds(analysis.dissimilarity_from_z(Z, args.squared), args.dims)
    else:
        emb = analysis.kernel_pca(Z, args.gamma, args.dims)
    if emb.padded:
        print(f"warning: spectrum supports fewer than {args.dims} dimensions; padded with zeros", file=sys.stderr)
    names = [model.competitors[k] for k in idx]
    width = max(len(n) for n in names)
    for name, row in zip(names, emb.coordinates):
        print(f"{name:<{width}}  " + "  ".join(f"{v:10.6f}" for v in row))
    if args.out:
        if str(args.out).lower().endswith(".csv"):
            buf = io.StringIO()
            writer = csv.writer(buf, lineterminator="\n")
            writer.writerow(["name", *(f"dim{k + 1}" for k in range(args.dims))])
            writer.writerows([name, *(repr(float(v)) for v in row)] for name, row in zip(names, emb.coordinates))
            _write(args.out, buf.getvalue())
        else:
            payload = {"names": names, "coordinates": emb.coordinates, "eigenvalues": emb.eigenvalues, "padded": emb.padded}
            _write(args.out, dumps(payload))
    return 0


def cmd_cluster(args) -> int:
    model = load_model(args.model)
    idx = _top(model, args.top)
    D = analysis.dissimilarity_from_z(_dissimilarity_source(model)[np.ix_(idx, idx)], args.squared)
    dendro = analysis.agglomerate(D, args.linkage)
    labels = analysis.cut(dendro, args.k)
    names = [model.competitors[k] for k in idx]
    width = max(len(n) for n in names)
    for leaf in dendro.leaf_order:
        print(f"{labels[leaf]:>3}  {names[leaf]}")
    if args.out:
        payload = {"names": names, **dendro.to_dict(), "labels_at_k": {str(args.k): labels}}
        _write(args.out, dumps(payload))
    return 0


def _fit_flags(p, multi: bool) -> None:
    p.add_argument("--family", help="bt-collapsed, bt, rao-kupper or davidson")
    p.add_argument("--k-cov", type=int, help="covariance factor rank (omit for no covariance)")
    p.add_argument("--k-tie", type=int, help="tie factor rank, 0 for a scalar threshold")
    if multi:
        p.add_argument("--config", action="append", metavar="FAMILY:KCOV:KTIE", help="extra model, '-' for absent ranks")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--max-iter", type=int, default=5000)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="arena-rank", description="Paired-comparison ranking with ties and covariance.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="fit one model")
    p.add_argument("--data", required=True)
    _fit_flags(p, multi=False)
    p.add_argument("--out", required=True, help="fitted-model JSON path")
    p.set_defaults(func=cmd_train, config=None)

    p = sub.add_parser("rank", help="leaderboard of a fitted model")
    p.add_argument("--model", required=True)
    p.add_argument("--top", type=int)
    p.add_argument("--out", help=".json or .csv")
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("evaluate", help="goodness-of-fit metrics")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("split-eval", help="fit on a random train split and score the held-out votes")
    p.add_argument("--data", required=True)
    _fit_flags(p, multi=True)
    p.add_argument("--test-fraction", type=float, default=0.1)
    p.add_argument("--out")
    p.set_defaults(func=cmd_split_eval)

    p = sub.add_parser("compare", help="rank correlation and clustering across models")
    p.add_argument("--models", nargs="+", required=True)
    p.add_argument("--linkage", choices=analysis.LINKAGES, default="average")
    p.add_argument("--out")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("map", help="low-dimensional embedding of competitors")
    p.add_argument("--model", required=True)
    p.add_argument("--method", choices=("mds", "kpca"), default="kpca")
    p.add_argument("--dims", type=int, default=2)
    p.add_argument("--gamma", type=float, default=1e-4)
    p.add_argument("--top", type=int)
    p.add_argument("--squared", action="store_true", help="use z^2 instead of |z| as MDS input")
    p.add_argument("--out", help=".json or .csv")
    p.set_defaults(func=cmd_map)

    p = sub.add_parser("cluster", help="hierarchical tiers of competitors")
    p.add_argument("--model", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--linkage", choices=analysis.LINKAGES, default="average")
    p.add_argument("--top", type=int)
    p.add_argument("--squared", action="store_true", help="use z^2 instead of |z| as dissimilarity")
    p.add_argument("--out")
    p.set_defaults(func=cmd_cluster)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DataError, FitError, ValueError, OSError) as exc:
        message = " ".join(str(exc).split())
        print(f"error: {message}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
