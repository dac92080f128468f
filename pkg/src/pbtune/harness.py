"""Config-driven experiment runner over seeded splits.

A grid cell is one (train size, validation size, epsilon, rho_val,
rho_test, flip mode) tuple; each cell runs `runs` times with seeds
base_seed, base_seed+1, ... and every run executes the full pipeline:
split, optional evasion attack, best-case solve, hedged solve, worst-case
score, test accuracies. Outputs are deterministic given the config and
base seed, timings aside.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, fields
from itertools import product
from pathlib import Path
from typing import NamedTuple

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

from .attack import AttackConfig, perturb, select_margin_targets, \
    train_reference_svm
from .bilevel import SolverOptions, evaluate_worst_case, solve_optimistic, \
    solve_pessimistic
from .data import load_bundled, load_csv, standardize, stratified_split, \
    write_csv
from .errors import EmptyFlipSet, MalformedProblem, NumericalFailure, \
    PbtuneError
from .svm import FLIP_MODES, HyperBounds, accuracy, compute_flip_sets

DEFAULT_EPSILONS = (0.0, 0.2, 0.4, 0.6)
DEFAULT_RHO_GRID = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6)
CHAIN_TOL = 1e-6
STANDARDIZE_MODES = ("full", "train", "none")


class GridPoint(NamedTuple):
    train_size: int
    val_size: int
    epsilon: float
    rho_val: float
    rho_test: float
    flip_mode: str


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment: a dataset, a cell grid, and run bookkeeping."""

    dataset: str = "cancer"
    label_column: str = "diagnosis"
    positive_label: str = "malignant"
    size_pairs: tuple = ((5, 10),)
    epsilon_list: tuple = (0.0,)
    rho_val_list: tuple = (0.0,)
    rho_test_list: tuple = (0.0,)
    flip_mode: str = "threshold"
    runs: int = 10
    base_seed: int = 0
    bounds_lower: float = 0.0
    bounds_upper: float = 1.0
    test_fraction: float = 0.5
    standardize_on: str = "full"
    attack_c: float = 1.0
    output_dir: str = "out"

    def __post_init__(self):
        pairs = tuple((int(t), int(v)) for t, v in self.size_pairs)
        if not pairs or any(t < 1 or v < 1 for t, v in pairs):
            raise MalformedProblem("size pairs must be positive")
        object.__setattr__(self, "size_pairs", pairs)
        for name in ("epsilon_list", "rho_val_list", "rho_test_list"):
            vals = tuple(float(v) for v in getattr(self, name))
            if not vals or any(v < 0 or not np.isfinite(v) for v in vals):
                raise MalformedProblem(f"{name} must be nonnegative")
            object.__setattr__(self, name, vals)
        if self.flip_mode not in FLIP_MODES:
            raise MalformedProblem(f"unknown flip mode {self.flip_mode!r}")
        if self.runs < 1:
            raise MalformedProblem("runs must be at least 1")
        if not 0.0 < self.test_fraction < 1.0:
            raise MalformedProblem("test_fraction must be in (0, 1)")
        if self.standardize_on not in STANDARDIZE_MODES:
            raise MalformedProblem(
                f"standardize_on must be one of {STANDARDIZE_MODES}")
        if not 0.0 <= self.bounds_lower <= self.bounds_upper:
            raise MalformedProblem("need 0 <= bounds_lower <= bounds_upper")
        if not self.attack_c > 0:
            raise MalformedProblem("attack_c must be positive")

    @classmethod
    def from_mapping(cls, raw):
        """Build from a flat key/value mapping (the config-file schema).

        Sizes come either from `train_sizes` x `val_sizes` or from
        `totals` x `ratios` with ratio = train share of each total.
        """
        raw = dict(raw)
        if "totals" in raw or "ratios" in raw:
            if "train_sizes" in raw or "val_sizes" in raw:
                raise MalformedProblem(
                    "give train_sizes/val_sizes or totals/ratios, not both")
            totals = raw.pop("totals")
            ratios = raw.pop("ratios")
            pairs = []
            for total, ratio in product(totals, ratios):
                train = int(round(total * ratio))
                if train < 1 or total - train < 1:
                    raise MalformedProblem(
                        f"total {total} with ratio {ratio} leaves an "
                        "empty part")
                pairs.append((train, int(total) - train))
        else:
            trains = raw.pop("train_sizes", [5])
            vals = raw.pop("val_sizes", [10])
            pairs = list(product([int(t) for t in trains],
                                 [int(v) for v in vals]))
        kwargs = {"size_pairs": tuple(pairs)}
        renames = {"epsilons": "epsilon_list", "rho_val": "rho_val_list",
                   "rho_test": "rho_test_list",
                   "standardize": "standardize_on"}
        known = {f.name for f in fields(cls)}
        for key, value in raw.items():
            key = renames.get(key, key)
            if key == "size_pairs":
                kwargs["size_pairs"] = tuple(tuple(p) for p in value)
                continue
            if key not in known:
                raise MalformedProblem(f"unknown config key {key!r}")
            kwargs[key] = value
        return cls(**kwargs)

    @classmethod
    def from_toml(cls, path):
        with open(path, "rb") as fh:
            return cls.from_mapping(tomllib.load(fh))

    def grid_points(self):
        """All cells in deterministic sorted order."""
        points = [GridPoint(t, v, e, rv, rt, self.flip_mode)
                  for (t, v), e, rv, rt in product(
                      self.size_pairs, self.epsilon_list,
                      self.rho_val_list, self.rho_test_list)]
        return sorted(points)

    def bounds(self, num_features):
        return HyperBounds.box(num_features, upper=self.bounds_upper,
                               lower=self.bounds_lower)


@dataclass(frozen=True)
class RunResult:
    """One pipeline pass: the cell, the scores, and solver effort.

    chain_ok certifies best-case <= hedged <= worst-case on this run;
    construction refuses a violating record outright, so every emitted
    row already passed the check.
    """

    train_size: int
    val_size: int
    epsilon: float
    rho_val: float
    rho_test: float
    flip_mode: str
    seed: int
    optimistic_objective: float
    pessimistic_objective: float
    worst_case_objective: float
    optimistic_test_accuracy: float
    pessimistic_test_accuracy: float
    chain_ok: bool
    fallback: bool
    pessimistic_nodes: int
    pessimistic_lp_iterations: int
    optimistic_seconds: float
    pessimistic_seconds: float
    evaluate_seconds: float

    def __post_init__(self):
        for name in ("optimistic_test_accuracy", "pessimistic_test_accuracy"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise NumericalFailure(f"{name} = {value} outside [0, 1]")
        if not self.chain_ok:
            raise NumericalFailure(
                "run refused: objective chain check failed "
                f"(optimistic {self.optimistic_objective}, hedged "
                f"{self.pessimistic_objective}, worst case "
                f"{self.worst_case_objective})")

    @property
    def point(self):
        return GridPoint(self.train_size, self.val_size, self.epsilon,
                         self.rho_val, self.rho_test, self.flip_mode)


RESULT_COLUMNS = tuple(f.name for f in fields(RunResult))
AGGREGATE_METRICS = ("optimistic_objective", "pessimistic_objective",
                     "worst_case_objective", "optimistic_test_accuracy",
                     "pessimistic_test_accuracy")


def _slice_parts(data, point, seed, config):
    split = stratified_split(data, (point.train_size, point.val_size),
                             test_fraction=config.test_fraction, seed=seed)
    train = data.subset(split.train_idx)
    val = data.subset(split.val_idx)
    test = data.subset(split.test_idx)
    if config.standardize_on == "train":
        strain = standardize(train)
        train = strain
        val = standardize(val, stats=strain.standardization)
        test = standardize(test, stats=strain.standardization)
    return split, train, val, test


def _annotated(exc, point, seed):
    note = f"{exc} [cell {tuple(point)}, seed {seed}]"
    try:
        return type(exc)(note)
    except TypeError:
        return PbtuneError(note)


def _run_cell(data, point, seed, config, cache, options):
    key = (point.train_size, point.val_size, seed)
    entry = cache.get(key)
    if entry is None:
        split, train, val, test = _slice_parts(data, point, seed, config)
        entry = {"split": split, "train": train, "val": val, "test": test}
        cache[key] = entry
    train, val, test = entry["train"], entry["val"], entry["test"]
    bounds = config.bounds(train.num_features)

    if "clean_optimistic" not in entry:
        started = time.perf_counter()
        entry["clean_optimistic"] = solve_optimistic(
            train.features, train.labels, val.features, val.labels,
            bounds, options)
        entry["clean_optimistic_seconds"] = time.perf_counter() - started
    clean_opt = entry["clean_optimistic"]
    opt_seconds = entry["clean_optimistic_seconds"]

    artifacts = {"split": entry["split"]}
    val_used, test_used = val, test
    if point.rho_val > 0.0 or point.rho_test > 0.0:
        # Targets come from the run's own best-case model on clean data;
        # the push itself is against a plain soft-margin reference.
        reference = train_reference_svm(train, config.attack_c,
                                        intercept_cap=options.intercept_cap)
        if point.rho_val > 0.0:
            attack = AttackConfig(
                rho=point.rho_val,
                target_indices=select_margin_targets(clean_opt.model, val))
            val_used = perturb(val, reference, attack)
            artifacts["perturbed_val"] = (val_used, attack)
        if point.rho_test > 0.0:
            attack = AttackConfig(
                rho=point.rho_test,
                target_indices=select_margin_targets(clean_opt.model, test))
            test_used = perturb(test, reference, attack)
            artifacts["perturbed_test"] = (test_used, attack)

    if val_used is val:
        optimistic = clean_opt
    else:
        started = time.perf_counter()
        optimistic = solve_optimistic(train.features, train.labels,
                                      val_used.features, val_used.labels,
                                      bounds, options)
        opt_seconds = time.perf_counter() - started

    flip = compute_flip_sets(optimistic.model, val_used.features,
                             val_used.labels, mode=point.flip_mode,
                             train_size=point.train_size)
    started = time.perf_counter()
    fallback = False
    try:
        pessimistic = solve_pessimistic(
            train.features, train.labels, val_used.features,
            val_used.labels, bounds, point.epsilon, flip, options)
    except EmptyFlipSet:
        pessimistic, fallback = None, True
    pess_seconds = time.perf_counter() - started

    started = time.perf_counter()
    worst = evaluate_worst_case(optimistic.w_bar_star, train.features,
                                train.labels, val_used.features,
                                val_used.labels, point.epsilon, flip,
                                intercept_cap=options.intercept_cap)
    eval_seconds = time.perf_counter() - started

    opt_obj = optimistic.outer_objective
    pess_obj = opt_obj if fallback else pessimistic.outer_objective
    if opt_obj > pess_obj + CHAIN_TOL:
        raise NumericalFailure(
            f"best-case value {opt_obj} exceeds hedged value {pess_obj}")
    if pess_obj > worst + CHAIN_TOL:
        raise NumericalFailure(
            f"hedged value {pess_obj} exceeds worst-case value {worst}")

    deployed = optimistic.model if fallback else pessimistic.adversarial
    result = RunResult(
        train_size=point.train_size, val_size=point.val_size,
        epsilon=point.epsilon, rho_val=point.rho_val,
        rho_test=point.rho_test, flip_mode=point.flip_mode, seed=seed,
        optimistic_objective=float(opt_obj),
        pessimistic_objective=float(pess_obj),
        worst_case_objective=float(worst),
        optimistic_test_accuracy=accuracy(optimistic.model, test_used.features,
                                          test_used.labels),
        pessimistic_test_accuracy=accuracy(deployed, test_used.features,
                                           test_used.labels),
        chain_ok=True, fallback=fallback,
        pessimistic_nodes=0 if fallback else pessimistic.mip_stats.node_count,
        pessimistic_lp_iterations=(
            0 if fallback else pessimistic.mip_stats.lp_iterations),
        optimistic_seconds=float(opt_seconds),
        pessimistic_seconds=float(pess_seconds),
        evaluate_seconds=float(eval_seconds))
    artifacts["optimistic"] = optimistic
    artifacts["pessimistic"] = pessimistic
    return result, artifacts


def run_cell(data, point, seed, config, cache=None, options=None):
    """Execute the pipeline for one cell and seed.

    Errors from any stage propagate annotated with the cell and seed. A
    shared `cache` dict reuses the split and the clean best-case solve
    across cells that share (sizes, seed).
    """
    cache = {} if cache is None else cache
    options = options or SolverOptions()
    try:
        result, _ = _run_cell(data, point, seed, config, cache, options)
    except PbtuneError as exc:
        raise _annotated(exc, point, seed) from exc
    return result


def aggregate(results):
    """Per-cell mean and sample standard deviation of each metric.

    Rows are sorted by cell; within a cell runs are reduced in seed
    order, so any permutation of the input produces identical output.
    A single-run cell reports standard deviation 0 by convention.
    """
    if not results:
        raise MalformedProblem("nothing to aggregate")
    groups = {}
    for r in results:
        groups.setdefault(r.point, []).append(r)
    rows = []
    for point in sorted(groups):
        runs = sorted(groups[point], key=lambda r: r.seed)
        row = dict(point._asdict())
        row["runs"] = len(runs)
        for metric in AGGREGATE_METRICS:
            values = np.array([getattr(r, metric) for r in runs])
            row[f"mean_{metric}"] = float(values.mean())
            row[f"std_{metric}"] = (
                float(values.std(ddof=1)) if len(runs) > 1 else 0.0)
        rows.append(row)
    return rows


def format_value(value):
    """CSV cell rendering; floats carry 17 significant digits."""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def write_rows_csv(path, columns, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([format_value(row[c]) for c in columns])


def results_to_csv(path, results):
    rows = [{c: getattr(r, c) for c in RESULT_COLUMNS} for r in results]
    write_rows_csv(path, RESULT_COLUMNS, rows)


def summary_to_csv(path, summary_rows):
    columns = list(GridPoint._fields) + ["runs"]
    for metric in AGGREGATE_METRICS:
        columns += [f"mean_{metric}", f"std_{metric}"]
    write_rows_csv(path, columns, summary_rows)


def model_json(w, b, w_bar, objective, epsilon, flip_mode, seed):
    return json.dumps({
        "w": [float(v) for v in np.atleast_1d(w)],
        "b": float(b),
        "w_bar": [float(v) for v in np.atleast_1d(w_bar)],
        "objective": float(objective),
        "epsilon": float(epsilon),
        "flip_mode": str(flip_mode),
        "seed": int(seed)}, indent=2)


def _cell_tag(point, seed):
    return (f"t{point.train_size}_v{point.val_size}_e{point.epsilon:g}"
            f"_rv{point.rho_val:g}_rt{point.rho_test:g}"
            f"_{point.flip_mode}_s{seed}")


def load_dataset(config):
    if config.dataset == "cancer":
        return load_bundled("cancer")
    return load_csv(config.dataset, label_column=config.label_column,
                    positive_label=config.positive_label)


def run_experiment(config, options=None, progress=None):
    """Run the whole grid and write every artifact under output_dir.

    Returns (results, summary_rows). `progress`, when given, is called
    with a one-line status string after each run.
    """
    options = options or SolverOptions()
    data = load_dataset(config)
    if config.standardize_on == "full":
        data = standardize(data)
    out = Path(config.output_dir)
    models_dir = out / "models"
    perturbed_dir = out / "perturbed"
    out.mkdir(parents=True, exist_ok=True)
    models_dir.mkdir(exist_ok=True)
    anything_perturbed = any(r > 0 for r in config.rho_val_list) or \
        any(r > 0 for r in config.rho_test_list)
    if anything_perturbed:
        perturbed_dir.mkdir(exist_ok=True)

    cache = {}
    results = []
    for point in config.grid_points():
        for run_index in range(config.runs):
            seed = config.base_seed + run_index
            try:
                result, artifacts = _run_cell(data, point, seed, config,
                                              cache, options)
            except PbtuneError as exc:
                raise _annotated(exc, point, seed) from exc
            results.append(result)
            tag = _cell_tag(point, seed)
            opt = artifacts["optimistic"]
            (models_dir / f"{tag}_optimistic.json").write_text(
                model_json(opt.model.w, opt.model.b, opt.w_bar_star,
                           opt.outer_objective, point.epsilon,
                           point.flip_mode, seed) + "\n", encoding="utf-8")
            pess = artifacts["pessimistic"]
            if pess is not None:
                (models_dir / f"{tag}_pessimistic.json").write_text(
                    model_json(pess.adversarial.w, pess.adversarial.b,
                               pess.w_bar_star, pess.outer_objective,
                               point.epsilon, point.flip_mode, seed) + "\n",
                    encoding="utf-8")
            for part in ("val", "test"):
                if f"perturbed_{part}" not in artifacts:
                    continue
                slice_, attack = artifacts[f"perturbed_{part}"]
                write_csv(perturbed_dir / f"{tag}_{part}.csv", slice_)
                (perturbed_dir / f"{tag}_{part}.json").write_text(
                    attack.sidecar_json(seed) + "\n", encoding="utf-8")
            if progress is not None:
                progress(f"cell {tuple(point)} seed {seed}: "
                         f"opt {result.optimistic_objective:.6g} "
                         f"pess {result.pessimistic_objective:.6g}")
    summary = aggregate(results)
    results_to_csv(out / "results.csv", results)
    summary_to_csv(out / "summary.csv", summary)
    return results, summary
