"""Command-line entry point: ``scforest <subcommand> ...``.

Exit codes: 0 on success, 2 for usage or validation problems (including
missing or empty input files), 3 for data and model errors.
"""

from __future__ import annotations

import argparse
import csv
import math
import os
import sys
import tempfile

import numpy as np

from .classify import (
    VARIANTS,
    crossval_accuracy,
    learn_classifier,
    penalty_sweep,
)
from .data import (
    CategoricalDataset,
    DataError,
    Table,
    add_noise_features,
    drop_missing,
    load_csv,
    load_sequences_csv,
    random_scf_generator,
    synth_dbn_sequences,
    synth_weak_features,
    write_csv,
    write_sequences_csv,
)
from .dbn import MODEL_CLASSES, DbnModel, compare_model_classes, eval_log_predictive, learn_dbn
from .discretize import mdlp_cut_points
from .scoring import CLASSIFIER_ESS, DBN_ESS, ScoreConfig
from .serialize import ModelFormatError, atomic_write_text, dumps, load_model, save_model

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 2, 3


class UsageError(Exception):
    """Bad flag values or unusable input paths."""


# --- argument types ---------------------------------------------------------


def _alpha(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid penalty {text!r}") from None
    if math.isnan(value):
        raise argparse.ArgumentTypeError("penalty must not be NaN")
    return value


def parse_grid(text: str) -> list:
    """``start:stop:step`` with an inclusive stop, e.g. ``0:6:0.5``."""
    parts = text.split(":")
    if len(parts) != 3:
        raise UsageError(f"alpha grid {text!r} must look like start:stop:step")
    try:
        start, stop, step = (float(p) for p in parts)
    except ValueError:
        raise UsageError(f"alpha grid {text!r} has a non-numeric part") from None
    if not all(map(math.isfinite, (start, stop, step))) or step <= 0 or stop < start:
        raise UsageError(f"alpha grid {text!r} needs finite start <= stop and step > 0")
    n = round((stop - start) / step)
    if abs(start + n * step - stop) > 1e-9 * max(1.0, abs(stop)):
        raise UsageError(f"alpha grid {text!r}: step does not divide the range")
    return [round(start + i * step, 10) for i in range(n + 1)]


def _check(cond: bool, message: str):
    if not cond:
        raise UsageError(message)


def _require_file(path: str):
    if not os.path.isfile(path):
        raise UsageError(f"input file not found: {path}")
    if os.path.getsize(path) == 0:
        raise UsageError(f"input file is empty: {path}")


def _seed(args) -> int:
    env = os.environ.get("SCF_SEED")
    if env is None or env == "":
        return args.seed
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"SCF_SEED must be an integer, got {env!r}") from None


def _threads(args) -> int:
    if args.threads is None:
        return os.cpu_count() or 1
    return args.threads


def _emit(text: str, out: str | None):
    if out is None:
        sys.stdout.write(text)
    else:
        atomic_write_text(out, text)


def _atomic_csv(path: str, writer, *payload):
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", suffix=".csv", dir=directory)
    os.close(fd)
    try:
        writer(tmp, *payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# --- subcommands ------------------------------------------------------------


def _parent_names(model: DbnModel, cols) -> list:
    m = model.n_vars
    return [f"{model.names[c]}@t-1" if c < m else model.names[c - m] for c in cols]


def cmd_learn_dbn(args) -> int:
    _check(args.k >= 0, "--k must be >= 0")
    _check(args.ess > 0, "--ess must be > 0")
    _require_file(args.input)
    seqs = load_sequences_csv(args.input, seq_column=args.seq_column)
    model = learn_dbn(seqs, args.model_class, args.k, ScoreConfig(ess=args.ess))
    save_model(model, args.out)
    print(f"model {model.label}: {seqs.n_transitions} transitions, "
          f"training score {model.train_score!r}")
    for name, pa in zip(model.names, model.trans_parents):
        parents = ", ".join(_parent_names(model, pa)) or "-"
        print(f"  {name} <- {parents}")
    return EXIT_OK


def _eval_row(label, train_score, report) -> dict:
    row = {
        "model": label,
        "avg_logprob": report.average,
        "count": report.count,
        "total_logprob": report.total,
        "train_score": train_score,
    }
    if report.per_variable is not None:
        row["per_variable"] = dict(report.per_variable)
    return row


def cmd_eval_dbn(args) -> int:
    try:
        ks = [int(k) for k in args.ks.split(",")] if args.ks else [args.k]
    except ValueError:
        raise UsageError(f"--ks must be comma-separated integers, got {args.ks!r}") from None
    _check(all(k >= 0 for k in ks), "--k values must be >= 0")
    _check(args.ess > 0, "--ess must be > 0")
    if args.compare:
        _check(args.train is not None, "--compare needs --train")
        _require_file(args.train)
        _require_file(args.test)
        train = load_sequences_csv(args.train, seq_column=args.seq_column)
        test = load_sequences_csv(args.test, seq_column=args.seq_column)
        rows = compare_model_classes(train, test, ks, ScoreConfig(ess=args.ess),
                                     bma=not args.no_bma)
        doc = {"mode": "compare", "ks": ks, "ess": args.ess,
               "rows": [_eval_row(r.label, r.train_score, r.report) for r in rows]}
        for r in rows:
            print(f"{r.label:<14} avg {r.report.average:.6f} over {r.report.count}",
                  file=sys.stderr)
    else:
        _check(args.model is not None, "--model is required unless --compare is given")
        _require_file(args.model)
        _require_file(args.test)
        model = load_model(args.model)
        if not isinstance(model, DbnModel):
            raise ModelFormatError(f"{args.model} is not a DBN model")
        test = load_sequences_csv(args.test, seq_column=args.seq_column)
        report = eval_log_predictive(model, test, mode=args.mode)
        doc = {"mode": args.mode, **_eval_row(model.label, model.train_score, report)}
    _emit(dumps(doc), args.out)
    return EXIT_OK


def _read_header(path: str) -> list:
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.reader(fh):
            if row:
                return [h.strip() for h in row]
    raise UsageError(f"input file has no header: {path}")


def _load_table(args) -> tuple:
    _require_file(args.input)
    header = _read_header(args.input)
    if args.class_col not in header:
        raise UsageError(f"class column {args.class_col!r} not in {args.input}")
    if args.categorical == "all":
        forced = header
    else:
        forced = [c for c in (args.categorical or "").split(",") if c]
        unknown = [c for c in forced if c not in header]
        if unknown:
            raise UsageError(f"--categorical names unknown columns {unknown}")
    schema = {c: "categorical" for c in [args.class_col, *forced]}
    return drop_missing(load_csv(args.input, schema=schema, missing=args.missing))


def _full_fit_dataset(table: Table, class_col: str) -> CategoricalDataset:
    labels = table.column(class_col).values
    cuts = {c.name: mdlp_cut_points(c.values, labels) for c in table.columns if c.continuous}
    return table.to_dataset(cuts)


def cmd_classify(args) -> int:
    _check(args.folds >= 2, "--folds must be >= 2")
    _check(args.ess > 0, "--ess must be > 0")
    _check(args.alpha >= 0, "--alpha must be >= 0")
    _check(args.noise >= 0, "--noise must be >= 0")
    _check(args.repeats >= 1, "--repeats must be >= 1")
    _check(0.0 <= args.p <= 1.0, "--p must lie in [0, 1]")
    _check(args.n_train >= 2 and args.n_test >= 1, "--n-train must be >= 2, --n-test >= 1")
    _check(args.n_relevant >= 0 and args.n_noise >= 0, "feature counts must be >= 0")
    grid = parse_grid(args.sweep_alpha) if args.sweep_alpha else None
    _check(args.synth_weak or args.input is not None, "give --in or --synth-weak")
    _check(not (args.synth_weak and args.input), "--in and --synth-weak are exclusive")
    _check(not (args.synth_weak and grid is None and args.model_out),
           "--model-out needs --in")
    seed, n_jobs = _seed(args), _threads(args)
    config = ScoreConfig(ess=args.ess)
    averaging = "bma" if args.bma else "map"
    variant = "sfan" if args.bma else args.variant

    if args.synth_weak and grid is not None:
        curve = penalty_sweep(grid, args.repeats, args.n_train, args.n_test, args.n_relevant,
                              args.n_noise, args.p, seed, config, variant, n_jobs=n_jobs)
        doc = {
            "protocol": "synthetic-weak-features", "variant": variant, "ess": args.ess,
            "seed": seed, "repeats": args.repeats, "n_train": args.n_train,
            "n_test": args.n_test, "n_relevant": args.n_relevant, "n_noise": args.n_noise,
            "p": args.p,
            "curve": [{"alpha": pt.alpha, "mean": pt.mean, "std": pt.std, "sem": pt.sem,
                       "n": pt.n} for pt in curve],
        }
        _emit(dumps(doc), args.out)
        return EXIT_OK

    if args.synth_weak:
        data = synth_weak_features(args.n_relevant, args.n_noise, args.p, args.n_train,
                                   seed=seed)
        class_col, removed = "class", 0
    else:
        data, removed = _load_table(args)
        class_col = args.class_col
    data = add_noise_features(data, args.noise, seed=seed)
    alphas = grid if grid is not None else [args.alpha]
    reports = [crossval_accuracy(data, class_col, variant, a, args.folds, seed, config,
                                 averaging, n_jobs=n_jobs) for a in alphas]
    base = {"class_column": class_col, "rows": data.n_rows, "removed_missing": removed,
            "noise_features": args.noise, "folds": args.folds, "seed": seed,
            "ess": args.ess, "averaging": averaging}
    if grid is None:
        doc = {**base, **reports[0].to_dict()}
    else:
        doc = {**base, "variant": variant, "curve": [r.to_dict() for r in reports]}
    for r in reports:
        print(f"{variant} alpha={r.alpha:g}: mean {r.mean:.4f} sd {r.std:.4f}",
              file=sys.stderr)
    if args.model_out:
        ds = data if isinstance(data, CategoricalDataset) else _full_fit_dataset(data, class_col)
        model = learn_classifier(ds, ds.names.index(class_col), variant, args.alpha, config)
        save_model(model, args.model_out)
    _emit(dumps(doc), args.out)
    return EXIT_OK


def _q(name: str) -> str:
    return '"' + name.replace("\\", "\\\\").replace('"', '\\"') + '"'


def to_dot(model) -> str:
    """Graph description text; nodes in column order, edges sorted."""
    lines = ["digraph scforest {", "  rankdir=LR;"]
    if isinstance(model, DbnModel):
        m = model.n_vars
        prev = [f"{n}@t-1" for n in model.names]
        lines.append("  subgraph slice_prev {")
        lines.append("    rank=same;")
        lines += [f"    {_q(n)};" for n in prev]
        lines.append("  }")
        lines.append("  subgraph slice_next {")
        lines.append("    rank=same;")
        lines += [f"    {_q(n)};" for n in model.names]
        lines.append("  }")
        all_names = prev + list(model.names)
        edges = sorted((p, m + i) for i, pa in enumerate(model.trans_parents) for p in pa)
    else:
        lines += [f"  {_q(n)};" for n in model.names]
        all_names = list(model.names)
        edges = sorted((p, f) for f, pa in zip(model.features, model.parents) for p in pa)
    lines += [f"  {_q(all_names[a])} -> {_q(all_names[b])};" for a, b in edges]
    lines.append("}")
    return "\n".join(lines) + "\n"


def cmd_export_dot(args) -> int:
    _require_file(args.model)
    _emit(to_dot(load_model(args.model)), args.out)
    return EXIT_OK


def cmd_synth(args) -> int:
    seed = _seed(args)
    if args.kind == "sequences":
        _check(args.vars >= 1, "--vars must be >= 1")
        _check(args.k >= 0, "--k must be >= 0")
        _check(args.card >= 2, "--card must be >= 2")
        _check(args.steps >= 2, "--steps must be >= 2")
        _check(args.sequences >= 1, "--sequences must be >= 1")
        _check(args.concentration > 0, "--concentration must be > 0")
        gen = random_scf_generator(args.vars, args.k, args.card, seed=seed,
                                   concentration=args.concentration)
        seqs = synth_dbn_sequences(gen, args.steps, seed=seed + 1,
                                   n_sequences=args.sequences)
        _atomic_csv(args.out, write_sequences_csv, seqs)
    else:
        _check(0.0 <= args.p <= 1.0, "--p must lie in [0, 1]")
        _check(args.rows >= 1, "--rows must be >= 1")
        _check(args.n_relevant >= 0 and args.n_noise >= 0, "feature counts must be >= 0")
        ds = synth_weak_features(args.n_relevant, args.n_noise, args.p, args.rows, seed=seed)
        _atomic_csv(args.out, write_csv, ds)
    return EXIT_OK


# --- parser -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scforest",
        description="Selectively conditioned forests: DBN learning and selective classifiers.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0,
                        help="random seed (overridden by the SCF_SEED environment variable)")
    common.add_argument("--threads", type=int, default=None,
                        help="maximum worker count (default: available cores)")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("learn-dbn", parents=[common], help="learn a two-slice DBN")
    p.add_argument("--in", dest="input", required=True, help="sequence CSV")
    p.add_argument("--class", dest="model_class", choices=MODEL_CLASSES, default="scf",
                   help="model class")
    p.add_argument("--k", type=int, default=1, help="max previous-slice parents per variable")
    p.add_argument("--ess", type=float, default=DBN_ESS, help="BDeu equivalent sample size")
    p.add_argument("--seq-column", default="seq_id", help="sequence id column name")
    p.add_argument("--out", required=True, help="model file to write")
    p.set_defaults(func=cmd_learn_dbn)

    p = sub.add_parser("eval-dbn", parents=[common],
                       help="held-out log probability of next-slice data")
    p.add_argument("--model", help="model file (single-model mode)")
    p.add_argument("--test", required=True, help="test sequence CSV")
    p.add_argument("--compare", action="store_true",
                   help="learn and evaluate every model class from --train")
    p.add_argument("--train", help="training sequence CSV for --compare")
    p.add_argument("--k", type=int, default=1, help="k for --compare")
    p.add_argument("--ks", help="comma-separated k list for --compare (overrides --k)")
    p.add_argument("--ess", type=float, default=DBN_ESS, help="BDeu equivalent sample size")
    p.add_argument("--no-bma", action="store_true", help="skip bma-scf rows in --compare")
    p.add_argument("--mode", choices=("posterior-mean", "sequential"),
                   default="posterior-mean", help="CPT mode for single-model evaluation")
    p.add_argument("--seq-column", default="seq_id", help="sequence id column name")
    p.add_argument("--out", help="report file (default: stdout)")
    p.set_defaults(func=cmd_eval_dbn)

    p = sub.add_parser("classify", parents=[common],
                       help="cross-validated accuracy or an exclusion-penalty sweep")
    p.add_argument("--in", dest="input", help="CSV with a class column")
    p.add_argument("--class-col", default="class", help="class column name")
    p.add_argument("--variant", choices=VARIANTS, default="sfan", help="classifier variant")
    p.add_argument("--alpha", type=_alpha, default=0.0,
                   help="exclusion penalty for stan/sfan ('inf' allowed)")
    p.add_argument("--folds", type=int, default=10, help="cross-validation folds")
    p.add_argument("--ess", type=float, default=CLASSIFIER_ESS,
                   help="BDeu equivalent sample size")
    p.add_argument("--noise", type=int, default=0, help="uniform binary noise features to add")
    p.add_argument("--missing", default="?", help="missing-value marker")
    p.add_argument("--categorical", metavar="COLS",
                   help="comma-separated columns to read as categorical, or 'all' "
                        "(the class column always is)")
    p.add_argument("--bma", action="store_true", help="average over SFAN structures")
    p.add_argument("--sweep-alpha", metavar="START:STOP:STEP",
                   help="evaluate a grid of penalties (inclusive stop)")
    p.add_argument("--synth-weak", action="store_true",
                   help="use the weak-feature generator instead of --in")
    p.add_argument("--repeats", type=int, default=100, help="sweep repeats (--synth-weak)")
    p.add_argument("--n-train", type=int, default=100, help="training rows (--synth-weak)")
    p.add_argument("--n-test", type=int, default=100, help="test rows (--synth-weak sweep)")
    p.add_argument("--n-relevant", type=int, default=10, help="weak features (--synth-weak)")
    p.add_argument("--n-noise", type=int, default=20,
                   help="generator noise features (--synth-weak)")
    p.add_argument("--p", type=float, default=0.6,
                   help="probability a weak feature copies the class")
    p.add_argument("--model-out", help="also fit on all rows and save the model here")
    p.add_argument("--out", help="report file (default: stdout)")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("export-dot", parents=[common], help="render a model as DOT text")
    p.add_argument("--model", required=True, help="model file")
    p.add_argument("--out", help="DOT file (default: stdout)")
    p.set_defaults(func=cmd_export_dot)

    p = sub.add_parser("synth", parents=[common], help="write synthetic data")
    p.add_argument("kind", choices=("sequences", "weak"), help="what to generate")
    p.add_argument("--out", required=True, help="CSV file to write")
    p.add_argument("--vars", type=int, default=5, help="variables per slice (sequences)")
    p.add_argument("--k", type=int, default=1, help="previous-slice parents (sequences)")
    p.add_argument("--card", type=int, default=2, help="categories per variable (sequences)")
    p.add_argument("--steps", type=int, default=500, help="timesteps per sequence")
    p.add_argument("--sequences", type=int, default=1, help="number of sequences")
    p.add_argument("--concentration", type=float, default=1.0,
                   help="Dirichlet concentration of generator CPT rows")
    p.add_argument("--rows", type=int, default=100, help="rows (weak)")
    p.add_argument("--n-relevant", type=int, default=10, help="weak features (weak)")
    p.add_argument("--n-noise", type=int, default=20, help="noise features (weak)")
    p.add_argument("--p", type=float, default=0.6, help="copy probability (weak)")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.threads is not None and args.threads < 1:
            raise UsageError("--threads must be >= 1")
        _seed(args)
        return args.func(args)
    except UsageError as exc:
        print(f"scforest {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"scforest {args.command}: error: file not found: {exc.filename}",
              file=sys.stderr)
        return EXIT_USAGE
    except (DataError, ValueError, np.linalg.LinAlgError, OSError) as exc:
        print(f"scforest {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
