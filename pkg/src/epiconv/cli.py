"""Command-line interface.

Subcommands: ``gen-data``, ``train``, ``eval``, ``visualize``,
``bin-influence``.  Exit codes: 0 success, 2 usage errors, 3 missing input
or empty dataset, 4 schema/shape mismatches (including unreadable model
files), 5 degenerate data, 6 diverging optimization.

Every CSV the CLI writes starts with a ``# config:`` comment echoing the
settings that produced it; the dataset parser skips ``#`` lines, so these
files feed straight back into other commands.  All outputs are written
atomically and contain nothing nondeterministic, so a rerun with the same
seeds reproduces them byte for byte.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Sequence

from .data import (
    Dataset,
    SplitSpec,
    SyntheticSpec,
    discretize_expression,
    generate_synthetic,
    parse_dataset,
    split_dataset,
    write_dataset,
)
from .errors import (
    DataFormatError,
    DegenerateDataError,
    DimensionError,
    DivergenceError,
    ModelFormatError,
    ModelIntegrityError,
)
from .fileio import atomic_write_text
from .metrics import (
    auc,
    bin_influence,
    predict_scores,
    write_profile_csv,
    write_scores_csv,
)
from .nn import Hyperparams
from .patterns import (
    VisConfig,
    export_heatmap,
    optimize_class_pattern,
    summarize_frequencies,
    write_frequency_csv,
)
from .svgplot import polyline_svg
from .training import TrainConfig, load_model, save_model, train


class _CliExit(Exception):
    """Internal: abort the current command with a specific exit code."""

    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _say(args, message: str) -> None:
    if not args.quiet:
        print(message)


def _config_comment(payload: dict) -> str:
    return "config: " + json.dumps(payload, sort_keys=True)


def _read_dataset(path, expected_marks: int | None = None) -> Dataset:
    path = Path(path)
    if not path.exists():
        raise _CliExit(3, f"input file not found: {path}")
    dataset = parse_dataset(path, expected_marks=expected_marks)
    if len(dataset) == 0:
        raise _CliExit(3, f"dataset {path} contains no samples")
    return dataset


def _read_model(path):
    path = Path(path)
    if not path.exists():
        raise _CliExit(3, f"model file not found: {path}")
    return load_model(path)


# ---------------------------------------------------------------------------
# Flag value parsers (argparse types -> usage errors, exit code 2)


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {text}")
    return value


def _positive_float(text: str) -> float:
    value = float(text)
    if value <= 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return value


def _nonneg_float(text: str) -> float:
    value = float(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be non-negative, got {text}")
    return value


def _dropout_float(text: str) -> float:
    value = float(text)
    if not 0.0 <= value < 1.0:
        raise argparse.ArgumentTypeError(f"must lie in [0, 1), got {text}")
    return value


def _open_unit_float(text: str) -> float:
    value = float(text)
    if not 0.0 < value < 1.0:
        raise argparse.ArgumentTypeError(
            f"must lie strictly between 0 and 1, got {text}"
        )
    return value


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(part) for part in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"expected comma-separated integers, got {text!r}"
        ) from None


def _hidden_sizes(text: str) -> tuple[int, ...]:
    sizes = _int_list(text)
    if not sizes or any(s < 1 for s in sizes):
        raise argparse.ArgumentTypeError(
            f"hidden sizes must be positive integers, got {text!r}"
        )
    return sizes


def _fractions(text: str) -> tuple[float, float, float]:
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(
            f"expected three comma-separated fractions, got {text!r}"
        )
    try:
        f = tuple(float(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"fractions must be numbers: {text!r}") from None
    if any(v < 0 for v in f) or abs(sum(f) - 1.0) > 1e-9:
        raise argparse.ArgumentTypeError(
            f"fractions must be non-negative and sum to 1, got {text!r}"
        )
    return f


def _target_class(text: str) -> int:
    mapping = {"1": 1, "+1": 1, "-1": -1}
    if text not in mapping:
        raise argparse.ArgumentTypeError(
            f"target class must be +1 or -1, got {text!r}"
        )
    return mapping[text]


# ---------------------------------------------------------------------------
# Command handlers


def _cmd_gen_data(args, parser) -> int:
    try:
        spec = SyntheticSpec(
            n_genes=args.genes,
            n_f=args.marks,
            bins=args.bins,
            high_marks=frozenset(args.high_marks),
            low_marks=frozenset(args.low_marks),
            signal_amplitude=args.amplitude,
            noise_sigma=args.noise,
            center_width=args.center_width,
            seed=args.seed,
        )
    except ValueError as exc:
        parser.error(str(exc))
    dataset = generate_synthetic(spec)
    comment = _config_comment(
        {
            "command": "gen-data",
            "genes": spec.n_genes,
            "marks": spec.n_f,
            "bins": spec.bins,
            "high_marks": sorted(spec.high_marks),
            "low_marks": sorted(spec.low_marks),
            "amplitude": spec.signal_amplitude,
            "noise": spec.noise_sigma,
            "center_width": spec.center_width,
            "seed": spec.seed,
        }
    )
    write_dataset(dataset, args.out, comment=comment)
    _say(
        args,
        f"wrote {args.out}: {len(dataset)} genes x {dataset.n_marks} marks "
        f"x {dataset.bin_count} bins",
    )
    return 0


def _cmd_train(args, parser) -> int:
    data = _read_dataset(args.data)
    labeled = discretize_expression(data)

    if args.valid is not None:
        valid = discretize_expression(
            _read_dataset(args.valid, expected_marks=data.n_marks)
        )
        train_set, valid_set = labeled, valid
        folds = None
    else:
        spec = SplitSpec(fractions=args.split, seed=args.split_seed)
        train_set, valid_set, test_set = split_dataset(labeled, spec)
        folds = (train_set, valid_set, test_set)
        if len(train_set) == 0 or len(valid_set) == 0:
            raise _CliExit(
                3, "split produced an empty train or validation fold"
            )

    try:
        hyper = Hyperparams(
            n_marks=data.n_marks,
            bins=data.bin_count,
            kernel=args.kernel,
            filters=args.filters,
            pool=args.pool,
            hidden=args.hidden,
            dropout=args.dropout,
            lr=args.lr,
            epochs=args.epochs,
            batch=args.batch,
            seed=args.seed,
        )
    except ValueError as exc:
        raise DimensionError(f"hyperparameters do not fit this dataset: {exc}")

    config = TrainConfig(hyper=hyper, log1p=args.log1p, standardize=args.standardize)
    model, history = train(train_set, valid_set, config)
    save_model(model, args.out)

    echo = {
        "command": "train",
        "data": str(args.data),
        "valid": str(args.valid) if args.valid else None,
        "split": list(args.split),
        "split_seed": args.split_seed,
        "kernel": hyper.kernel,
        "filters": hyper.filters,
        "pool": hyper.pool,
        "hidden": list(hyper.hidden),
        "dropout": hyper.dropout,
        "lr": hyper.lr,
        "epochs": hyper.epochs,
        "batch": hyper.batch,
        "seed": hyper.seed,
        "log1p": args.log1p,
        "standardize": args.standardize,
    }
    history_path = args.history or f"{args.out}.history.csv"
    lines = [f"# {_config_comment(echo)}", "epoch,train_loss,val_auc"]
    for rec in history:
        val = "" if rec.val_auc is None else f"{rec.val_auc:.6f}"
        lines.append(f"{rec.epoch},{rec.train_loss:.6f},{val}")
    atomic_write_text(history_path, "\n".join(lines) + "\n")

    if folds is not None and args.save_folds:
        for name, fold in zip(("train", "valid", "test"), folds):
            fold_comment = _config_comment(
                {**echo, "command": "train/save-folds", "fold": name}
            )
            write_dataset(fold, f"{args.save_folds}.{name}.csv", comment=fold_comment)

    best = "" if model.best_val_auc is None else f" (validation AUC {model.best_val_auc:.4f})"
    _say(args, f"selected epoch {model.selected_epoch}{best}")
    _say(args, f"wrote {args.out}")
    _say(args, f"wrote {history_path}")
    return 0


def _cmd_eval(args, parser) -> int:
    model = _read_model(args.model)
    data = _read_dataset(args.data)
    labeled = discretize_expression(data)
    records = predict_scores(model, labeled)
    value = auc(records)
    comment = _config_comment(
        {"command": "eval", "model": str(args.model), "data": str(args.data)}
    )
    write_scores_csv(records, args.out, comment=comment)
    _say(args, f"AUC: {value:.4f}")
    _say(args, f"wrote {args.out}")
    return 0


def _cmd_visualize(args, parser) -> int:
    model = _read_model(args.model)
    try:
        config = VisConfig(
            target_class=args.target_class,
            l2_penalty=args.l2,
            step=args.step,
            iters=args.iters,
            threshold=args.threshold,
            seed=args.seed,
        )
    except ValueError as exc:
        parser.error(str(exc))
    pattern = optimize_class_pattern(model, config)
    summary = summarize_frequencies(pattern, config.threshold)

    echo = {
        "command": "visualize",
        "model": str(args.model),
        "target_class": config.target_class,
        "l2": config.l2_penalty,
        "step": config.step,
        "iters": config.iters,
        "threshold": config.threshold,
        "seed": config.seed,
    }
    comment = _config_comment(echo)
    stem = args.out
    export_heatmap(
        pattern, model.mark_names, f"{stem}.pattern.csv", fmt="csv", comment=comment
    )
    export_heatmap(
        pattern,
        model.mark_names,
        f"{stem}.pattern.svg",
        fmt="svg",
        threshold=config.threshold,
    )
    write_frequency_csv(
        summary, model.mark_names, f"{stem}.counts.csv", comment=comment
    )

    names = [model.mark_names[i] for i in summary.influential_marks]
    _say(
        args,
        f"final loss {pattern.final_loss:.6f} after {pattern.iterations_run} "
        f"iterations",
    )
    _say(args, f"influential marks: {', '.join(names) if names else '(none)'}")
    for suffix in (".pattern.csv", ".pattern.svg", ".counts.csv"):
        _say(args, f"wrote {stem}{suffix}")
    return 0


def _cmd_bin_influence(args, parser) -> int:
    model = _read_model(args.model)
    data = _read_dataset(args.data)
    profile = bin_influence(model, data)
    comment = _config_comment(
        {
            "command": "bin-influence",
            "model": str(args.model),
            "data": str(args.data),
        }
    )
    stem = args.out
    write_profile_csv(profile, f"{stem}.csv", comment=comment)
    atomic_write_text(
        f"{stem}.svg",
        polyline_svg(
            profile.values,
            x_label="window position",
            y_label="mean activation",
            title="bin influence",
        ),
    )
    _say(
        args,
        f"peak mean activation at position {profile.argmax} of "
        f"{profile.width}",
    )
    for suffix in (".csv", ".svg"):
        _say(args, f"wrote {stem}{suffix}")
    return 0


# ---------------------------------------------------------------------------
# Parser assembly


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="epiconv",
        description=(
            "Train, evaluate and interrogate a small convolutional classifier "
            "over binned per-gene signal matrices."
        ),
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "-o", "--out", required=True, help="output path (or stem for multi-file commands)"
    )
    common.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    common.add_argument(
        "--quiet", action="store_true", help="suppress summary lines on stdout"
    )

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser(
        "gen-data", parents=[common], help="write a synthetic labeled dataset CSV"
    )
    p.add_argument("--genes", type=_positive_int, default=1000)
    p.add_argument("--marks", type=_positive_int, default=5)
    p.add_argument("--bins", type=_positive_int, default=100)
    p.add_argument("--high-marks", type=_int_list, default=(0, 1),
                   help="comma-separated marks boosted for +1 genes")
    p.add_argument("--low-marks", type=_int_list, default=(3, 4),
                   help="comma-separated marks boosted for -1 genes")
    p.add_argument("--amplitude", type=_positive_float, default=1.0)
    p.add_argument("--noise", type=_nonneg_float, default=0.0,
                   help="sigma of the half-normal noise added to every entry")
    p.add_argument("--center-width", type=_positive_int, default=10)
    p.set_defaults(handler=_cmd_gen_data)

    p = sub.add_parser(
        "train", parents=[common], help="train a model and write it plus a history CSV"
    )
    p.add_argument("--data", required=True, help="dataset CSV")
    p.add_argument("--valid", default=None,
                   help="optional separate validation CSV; otherwise --data is split")
    p.add_argument("--split", type=_fractions, default=(1 / 3, 1 / 3, 1 / 3),
                   help="train,valid,test fractions for single-file mode")
    p.add_argument("--split-seed", type=int, default=0)
    p.add_argument("--save-folds", default=None, metavar="STEM",
                   help="also write STEM.{train,valid,test}.csv in single-file mode")
    p.add_argument("--kernel", type=_positive_int, default=10)
    p.add_argument("--filters", type=_positive_int, default=50)
    p.add_argument("--pool", type=_positive_int, default=5)
    p.add_argument("--hidden", type=_hidden_sizes, default=(625, 125),
                   help="comma-separated hidden layer sizes")
    p.add_argument("--dropout", type=_dropout_float, default=0.5)
    p.add_argument("--lr", type=_positive_float, default=0.001)
    p.add_argument("--epochs", type=_positive_int, default=100)
    p.add_argument("--batch", type=_positive_int, default=1)
    p.add_argument("--log1p", action="store_true",
                   help="apply log(1+x) to signals before training")
    p.add_argument("--standardize", action="store_true",
                   help="standardize each mark using training-fold statistics")
    p.add_argument("--history", default=None,
                   help="history CSV path (default: <out>.history.csv)")
    p.set_defaults(handler=_cmd_train)

    p = sub.add_parser(
        "eval", parents=[common], help="score a dataset with a model and print the AUC"
    )
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.set_defaults(handler=_cmd_eval)

    p = sub.add_parser(
        "visualize", parents=[common],
        help="optimize and export the input pattern for a target class",
    )
    p.add_argument("--model", required=True)
    p.add_argument("--target-class", type=_target_class, required=True,
                   help="+1 or -1")
    p.add_argument("--l2", type=_nonneg_float, default=0.01,
                   help="penalty weight on the squared pattern norm")
    p.add_argument("--step", type=_positive_float, default=0.1)
    p.add_argument("--iters", type=_positive_int, default=3000)
    p.add_argument("--threshold", type=_open_unit_float, default=0.25,
                   help="normalized value above which a bin counts as active")
    p.set_defaults(handler=_cmd_visualize)

    p = sub.add_parser(
        "bin-influence", parents=[common],
        help="average rectified conv responses per window position",
    )
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.set_defaults(handler=_cmd_bin_influence)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args, parser)
    except _CliExit as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc}", file=sys.stderr)
        return 3
    except (DataFormatError, DimensionError, ModelFormatError, ModelIntegrityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except DegenerateDataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 5
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 6


if __name__ == "__main__":
    sys.exit(main())
