"""Command line entry points.

Exit codes: 0 success, 1 configuration or data problem, 2 solver failure.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from .attack import AttackConfig, perturb, select_margin_targets, \
    train_reference_svm
from .bilevel import SolverOptions, solve_optimistic, solve_pessimistic
from .data import standardize, write_csv
from .errors import (
    BigMValidationError,
    EmptyFlipSet,
    InfeasibleModel,
    MalformedProblem,
    NodeLimitExceeded,
    NumericalFailure,
    PbtuneError,
)
from .harness import (
    ExperimentConfig,
    GridPoint,
    _run_cell,
    _slice_parts,
    format_value,
    load_dataset,
    model_json,
    run_experiment,
    write_rows_csv,
)
from .selftest import run_selftest
from .svm import FLIP_MODES, compute_flip_sets

SOLVER_ERRORS = (NumericalFailure, InfeasibleModel, NodeLimitExceeded,
                 BigMValidationError)


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse variant whose usage errors surface as exit code 1."""

    def error(self, message):
        raise _UsageError(message)


def _add_dataset_args(sub):
    sub.add_argument("--data", default="cancer",
                     help="CSV path, or 'cancer' for the bundled dataset")
    sub.add_argument("--label-column", default="diagnosis")
    sub.add_argument("--positive-label", default="malignant")
    sub.add_argument("--standardize", default="full",
                     choices=("full", "train", "none"))
    sub.add_argument("--test-fraction", type=float, default=0.5)
    sub.add_argument("--lower", type=float, default=0.0,
                     help="box lower bound for every feature")
    sub.add_argument("--upper", type=float, default=1.0,
                     help="box upper bound for every feature")
    sub.add_argument("--train-size", type=int, required=True)
    sub.add_argument("--val-size", type=int, required=True)
    sub.add_argument("--seed", type=int, default=0)


def _config_from_args(args, **extra):
    return ExperimentConfig(
        dataset=args.data, label_column=args.label_column,
        positive_label=args.positive_label,
        size_pairs=((args.train_size, args.val_size),),
        bounds_lower=args.lower, bounds_upper=args.upper,
        test_fraction=args.test_fraction, standardize_on=args.standardize,
        base_seed=args.seed, runs=1, **extra)


def _prepared_parts(config, point, seed):
    data = load_dataset(config)
    if config.standardize_on == "full":
        data = standardize(data)
    return _slice_parts(data, point, seed, config)


def build_parser():
    parser = _Parser(prog="pbtune",
                     description="Tune box bounds of a linear classifier "
                                 "by best-case or hedged bilevel search.")
    subs = parser.add_subparsers(dest="command", required=True)

    tune_p = subs.add_parser("tune", parents=[], help="one solve, JSON out")
    _add_dataset_args(tune_p)
    tune_p.add_argument("--mode", choices=("optimistic", "pessimistic"),
                        default="pessimistic")
    tune_p.add_argument("--epsilon", type=float, default=0.0)
    tune_p.add_argument("--flip-mode", choices=FLIP_MODES,
                        default="threshold")
    tune_p.add_argument("--output", help="write JSON here instead of stdout")

    exp = subs.add_parser("experiment", help="run a config-file grid")
    exp.add_argument("--config", required=True, help="TOML config file")
    exp.add_argument("--output-dir", help="override the config's output_dir")
    exp.add_argument("--quiet", action="store_true",
                     help="suppress per-run progress lines")

    ev = subs.add_parser("evaluate",
                         help="epsilon sweep of hedged and worst-case values")
    _add_dataset_args(ev)
    ev.add_argument("--epsilons", type=float, nargs="+",
                    default=[0.0, 0.2, 0.4, 0.6])
    ev.add_argument("--flip-mode", choices=FLIP_MODES, default="threshold")
    ev.add_argument("--output", help="write CSV here instead of stdout")

    att = subs.add_parser("attack", help="emit a perturbed dataset slice")
    _add_dataset_args(att)
    att.add_argument("--rho", type=float, required=True)
    att.add_argument("--c", type=float, default=1.0,
                     help="box level of the reference classifier")
    att.add_argument("--part", choices=("val", "test"), default="val")
    att.add_argument("--output-dir", default="attacked")

    st = subs.add_parser("selftest", help="run the built-in invariant suite")
    st.add_argument("--seed", type=int, default=0)
    return parser


def cmd_tune(args):
    config = _config_from_args(args, epsilon_list=(args.epsilon,),
                               flip_mode=args.flip_mode)
    point = GridPoint(args.train_size, args.val_size, args.epsilon,
                      0.0, 0.0, args.flip_mode)
    _, train, val, _ = _prepared_parts(config, point, args.seed)
    bounds = config.bounds(train.num_features)
    optimistic = solve_optimistic(train.features, train.labels,
                                  val.features, val.labels, bounds)
    if args.mode == "optimistic":
        model, w_bar = optimistic.model, optimistic.w_bar_star
        objective = optimistic.outer_objective
    else:
        flip = compute_flip_sets(optimistic.model, val.features, val.labels,
                                 mode=args.flip_mode,
                                 train_size=args.train_size)
        try:
            pess = solve_pessimistic(train.features, train.labels,
                                     val.features, val.labels, bounds,
                                     args.epsilon, flip)
            model, w_bar = pess.adversarial, pess.w_bar_star
            objective = pess.outer_objective
        except EmptyFlipSet:
            print("note: nothing to flip; optimistic answer stands in",
                  file=sys.stderr)
            model, w_bar = optimistic.model, optimistic.w_bar_star
            objective = optimistic.outer_objective
    blob = model_json(model.w, model.b, w_bar, objective, args.epsilon,
                      args.flip_mode, args.seed)
    if args.output:
        Path(args.output).write_text(blob + "\n", encoding="utf-8")
    else:
        print(blob)
    return 0


def cmd_experiment(args):
    config = ExperimentConfig.from_toml(args.config)
    if args.output_dir:
        config = replace(config, output_dir=args.output_dir)
    progress = None if args.quiet else \
        (lambda line: print(line, file=sys.stderr))
    results, summary = run_experiment(config, progress=progress)
    out = Path(config.output_dir)
    print(f"{len(results)} runs over {len(summary)} cells; "
          f"wrote {out / 'results.csv'} and {out / 'summary.csv'}")
    return 0


def cmd_evaluate(args):
    config = _config_from_args(args, epsilon_list=tuple(args.epsilons),
                               flip_mode=args.flip_mode)
    data = load_dataset(config)
    if config.standardize_on == "full":
        data = standardize(data)
    cache = {}
    rows = []
    for eps in args.epsilons:
        point = GridPoint(args.train_size, args.val_size, float(eps),
                          0.0, 0.0, args.flip_mode)
        result, _ = _run_cell(data, point, args.seed, config, cache,
                              SolverOptions())
        rows.append({"epsilon": float(eps),
                     "optimistic_objective": result.optimistic_objective,
                     "pessimistic_objective": result.pessimistic_objective,
                     "worst_case_objective": result.worst_case_objective,
                     "fallback": result.fallback})
    columns = ("epsilon", "optimistic_objective", "pessimistic_objective",
               "worst_case_objective", "fallback")
    if args.output:
        write_rows_csv(args.output, columns, rows)
    else:
        print(",".join(columns))
        for row in rows:
            print(",".join(format_value(row[c]) for c in columns))
    return 0


def cmd_attack(args):
    if args.rho < 0:
        raise MalformedProblem("rho must be nonnegative")
    config = _config_from_args(args, attack_c=args.c)
    point = GridPoint(args.train_size, args.val_size, 0.0, 0.0, 0.0,
                      config.flip_mode)
    _, train, val, test = _prepared_parts(config, point, args.seed)
    bounds = config.bounds(train.num_features)
    optimistic = solve_optimistic(train.features, train.labels,
                                  val.features, val.labels, bounds)
    reference = train_reference_svm(train, args.c)
    part = val if args.part == "val" else test
    attack = AttackConfig(
        rho=args.rho,
        target_indices=select_margin_targets(optimistic.model, part))
    perturbed = perturb(part, reference, attack)
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = f"{args.part}_rho{args.rho:g}_s{args.seed}"
    csv_path = out / f"{stem}.csv"
    write_csv(csv_path, perturbed)
    (out / f"{stem}.json").write_text(attack.sidecar_json(args.seed) + "\n",
                                      encoding="utf-8")
    print(f"wrote {csv_path} ({attack.target_indices.size} of "
          f"{part.num_points} rows perturbed)")
    return 0


def cmd_selftest(args):
    return 0 if run_selftest(report=print, seed=args.seed) else 2


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    handler = {"tune": cmd_tune, "experiment": cmd_experiment,
               "evaluate": cmd_evaluate, "attack": cmd_attack,
               "selftest": cmd_selftest}[args.command]
    try:
        return handler(args)
    except SOLVER_ERRORS as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 2
    except (PbtuneError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
