"""Single-level reductions of the bilevel hyperparameter tuning problems.

The tuner picks per-feature box radii w_bar for the training program of
`pbtune.svm` so that the trained classifier scores well on a validation
set. Two readings of "scores well" are implemented:

* optimistic: among the inner training optima, the most favorable model
  is the one evaluated;
* pessimistic: the inner training loss may be suboptimal by a factor
  (1 + epsilon), and within that slack the labels of the marginal and
  misclassified validation points are flipped, so the search hedges
  against the least favorable near-optimal model.

Both are reduced to mixed-integer programs by replacing the inner
minimization with its KKT system and linearizing the complementary
slackness products (`pbtune.mip`). Every solve is audited afterwards:
binding heuristic caps, broken complementarity, or a failed re-derivation
of the inner optimum by plain simplex trigger a rebuild with doubled caps
instead of a silently wrong answer.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import (BigMValidationError, DimensionMismatch, EmptyFlipSet,
                     InfeasibleModel, MalformedProblem, NumericalFailure)
from .lp import LinearProgram, solve_lp
from .mip import MipBuilder, _point_feasible, solve_mip, validate_big_m
from .svm import (INTERCEPT_CAP, FlipSets, HyperBounds, SvmModel,
                  build_training_lp, compute_flip_sets, train_inner_svm)

FEAS_TOL = 1e-6

# Caps that are heuristic rather than derived from variable bounds. The
# budget row's dual has no a-priori bound, and the box multipliers inherit
# that problem through the stationarity rows, so both start at a large
# default, are marked for the binding-cap audit, and double on retries.
DEFAULT_DUAL_CAP = 1e4
DEFAULT_FALLBACK_CAP = 1e4


@dataclass(frozen=True)
class SolverOptions:
    """Knobs shared by the single-level solves.

    `dual_cap` bounds the budget row's multiplier (and through it the
    training-row multipliers of the pessimistic reduction); `fallback_cap`
    bounds the box multipliers. Both are audited and doubled on retry, at
    most `max_retries` times, before giving up. `certificate_tol` is the
    agreement required between the embedded inner solution and an
    independent simplex re-solve.
    """

    intercept_cap: float = INTERCEPT_CAP
    dual_cap: float = DEFAULT_DUAL_CAP
    fallback_cap: float = DEFAULT_FALLBACK_CAP
    guard: float = 0.95
    max_retries: int = 3
    node_limit: int = 10 ** 6
    certificate_tol: float = 1e-6


@dataclass
class MipStats:
    """Diagnostics from one audited branch-and-bound run.

    `raw_solution` is the full primal vector of the final accepted MIP and
    `index` maps block names to positions in it, so the multiplier blocks
    remain inspectable without widening the solution types.
    """

    node_count: int
    lp_iterations: int
    solve_seconds: float
    best_bound: float
    retries: int = 0
    raw_solution: np.ndarray | None = None
    index: dict = field(default_factory=dict)
    caps: dict = field(default_factory=dict)


class OptimisticSolution(NamedTuple):
    """Unpacks as (w_bar_star, model, outer_objective)."""

    w_bar_star: np.ndarray
    model: SvmModel
    outer_objective: float


@dataclass(frozen=True)
class PessimisticSolution:
    """Outcome of the hedged solve.

    `replica` is the feasible training-block copy whose mean slack sets the
    suboptimality budget; `adversarial` is the model that attains the
    hedged validation score. The flip slacks and all multipliers live in
    `mip_stats.raw_solution` under `mip_stats.index`.
    """

    w_bar_star: np.ndarray
    replica: SvmModel
    adversarial: SvmModel
    outer_objective: float
    epsilon: float
    mip_stats: MipStats

    def __post_init__(self):
        rep_xi = self.replica.xi
        adv_xi = self.adversarial.xi
        if rep_xi is None or adv_xi is None:
            raise NumericalFailure("pessimistic solution lost its slacks")
        flips = self.mip_stats.raw_solution[self.mip_stats.index["v"]]
        if (min(rep_xi.min(), adv_xi.min(), flips.min(initial=0.0))
                < -FEAS_TOL):
            raise NumericalFailure("negative slack in pessimistic solution")
        budget = (1.0 + self.epsilon) * rep_xi.mean()
        if adv_xi.mean() > budget + FEAS_TOL:
            raise NumericalFailure(
                f"suboptimality budget violated: mean slack "
                f"{adv_xi.mean():.9g} exceeds {budget:.9g}")


@dataclass(frozen=True)
class TuningRun:
    """One full pipeline pass: optimistic solve, flip sets, hedged solve.

    When the flip set is empty the hedged solve cannot be posed;
    `pessimistic` is then None and `fallback` records that the optimistic
    answer stands in for it.
    """

    optimistic: OptimisticSolution
    flip: FlipSets
    pessimistic: PessimisticSolution | None
    fallback: bool

    @property
    def pessimistic_objective(self):
        if self.pessimistic is None:
            return self.optimistic.outer_objective
        return self.pessimistic.outer_objective


def _check_features(x, y, what):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if x.shape[0] != y.shape[0]:
        raise DimensionMismatch(f"{what}: feature rows and labels differ")
    if x.shape[0] == 0:
        raise MalformedProblem(f"{what} slice is empty")
    return x, y


def _reach(features, upper, intercept_cap):
    """Per-point bound on |x_i . w - b| over the widest box."""
    return np.abs(features) @ upper + intercept_cap


def _hinges(w, b, x, y):
    return np.maximum(0.0, 1.0 - y * (x @ w - b))


def _mean_hinge(w, b, x, y):
    return float(_hinges(w, b, x, y).mean())


def _add_block(builder, prefix, count, lo, hi, cost=0.0):
    lo = np.broadcast_to(np.asarray(lo, dtype=float), (count,))
    hi = np.broadcast_to(np.asarray(hi, dtype=float), (count,))
    start = builder.num_vars
    for i in range(count):
        builder.add_var(f"{prefix}[{i}]", lo[i], hi[i], cost)
    return slice(start, builder.num_vars)


def _hinge_rows(builder, x, y, w, b, extra):
    """Rows  extra_i + y_i (x_i . w - b) >= 1  for each point."""
    p = x.shape[1]
    for i in range(x.shape[0]):
        terms = [(extra.start + i, 1.0)]
        terms += [(w.start + j, y[i] * x[i, j]) for j in range(p)]
        terms.append((b, -y[i]))
        builder.add_row(terms, ">=", 1.0)


def _box_rows(builder, w_bar, w, p):
    for j in range(p):
        builder.add_row([(w_bar.start + j, 1.0), (w.start + j, -1.0)],
                        ">=", 0.0)
        builder.add_row([(w_bar.start + j, 1.0), (w.start + j, 1.0)],
                        ">=", 0.0)


def _box_multiplier_pairs(builder, tag, w_bar, w, mu_plus, mu_minus,
                          upper, fallback_cap):
    """Complementarity between the box multipliers and the box slacks.

    The multiplier side has no derivable cap, hence the guard flag. A
    feature whose radius is fixed at zero makes the box an equality; its
    multiplier difference is then a free dual and the pairs are dropped.
    """
    for j in range(len(upper)):
        if upper[j] <= 0.0:
            continue
        builder.add_complementarity(
            f"{tag}_hi[{j}]",
            [(mu_plus.start + j, 1.0)], 0.0,
            [(w_bar.start + j, 1.0), (w.start + j, -1.0)], 0.0,
            fallback_cap, 2.0 * upper[j], guard_left=True)
        builder.add_complementarity(
            f"{tag}_lo[{j}]",
            [(mu_minus.start + j, 1.0)], 0.0,
            [(w_bar.start + j, 1.0), (w.start + j, 1.0)], 0.0,
            fallback_cap, 2.0 * upper[j], guard_left=True)


def build_optimistic_mip(train_x, train_y, val_x, val_y, bounds,
                         intercept_cap=INTERCEPT_CAP,
                         fallback_cap=DEFAULT_FALLBACK_CAP):
    """Single-level form of the optimistic tuning problem.

    Inner training optimality is enforced through stationarity, dual
    feasibility and complementarity of the training LP, so any feasible
    point pairs a box radius with a model that is exactly train-optimal
    for it. Returns the problem and a name -> block index map.
    """
    train_x, train_y = _check_features(train_x, train_y, "train")
    val_x, val_y = _check_features(val_x, val_y, "validation")
    n, p = train_x.shape
    m = val_x.shape[0]
    if val_x.shape[1] != p:
        raise DimensionMismatch("train and validation feature counts differ")
    if bounds.num_features != p:
        raise DimensionMismatch("bounds do not match the feature count")

    reach_t = _reach(train_x, bounds.upper, intercept_cap)
    xi_cap = 1.0 + reach_t

    b = MipBuilder()
    w_bar = _add_block(b, "w_bar", p, bounds.lower, bounds.upper)
    w = _add_block(b, "w", p, -bounds.upper, bounds.upper)
    icpt = b.add_var("b", -intercept_cap, intercept_cap)
    xi = _add_block(b, "xi", n, 0.0, xi_cap)
    g = _add_block(b, "g", m, 0.0, np.inf, cost=1.0 / m)
    beta = _add_block(b, "beta", n, 0.0, 1.0 / n)
    mu_plus = _add_block(b, "mu_plus", p, 0.0, fallback_cap)
    mu_minus = _add_block(b, "mu_minus", p, 0.0, fallback_cap)

    _hinge_rows(b, val_x, val_y, w, icpt, g)
    _box_rows(b, w_bar, w, p)
    _hinge_rows(b, train_x, train_y, w, icpt, xi)

    # Stationarity of the training LP in w and in the intercept.
    for j in range(p):
        terms = [(beta.start + i, -train_y[i] * train_x[i, j])
                 for i in range(n)]
        terms += [(mu_plus.start + j, 1.0), (mu_minus.start + j, -1.0)]
        b.add_row(terms, "=", 0.0)
    b.add_row([(beta.start + i, train_y[i]) for i in range(n)], "=", 0.0)

    for i in range(n):
        slack = ([(xi.start + i, 1.0), (icpt, -train_y[i])]
                 + [(w.start + j, train_y[i] * train_x[i, j])
                    for j in range(p)])
        z_row = b.add_complementarity(
            f"train_row[{i}]", [(beta.start + i, 1.0)], 0.0,
            slack, -1.0, 1.0 / n, 2.0 * reach_t[i])
        z_xi = b.add_complementarity(
            f"train_xi[{i}]", [(beta.start + i, -1.0)], 1.0 / n,
            [(xi.start + i, 1.0)], 0.0, 1.0 / n, xi_cap[i])
        # beta_i = 0 and beta_i = 1/n cannot hold at once.
        b.add_row([(z_row, 1.0), (z_xi, 1.0)], ">=", 1.0)

    _box_multiplier_pairs(b, "box", w_bar, w, mu_plus, mu_minus,
                          bounds.upper, fallback_cap)

    index = {"w_bar": w_bar, "w": w, "b": icpt, "xi": xi, "g": g,
             "beta": beta, "mu_plus": mu_plus, "mu_minus": mu_minus}
    return b.build(), index


def build_pessimistic_mip(train_x, train_y, val_x, val_y, flip, epsilon,
                          bounds, intercept_cap=INTERCEPT_CAP,
                          dual_cap=DEFAULT_DUAL_CAP,
                          fallback_cap=DEFAULT_FALLBACK_CAP):
    """Single-level form of the hedged tuning problem.

    The replica block (rep_w, rep_b, rep_xi) only has to be feasible for
    the training program; its mean slack, inflated by (1 + epsilon), caps
    the mean slack of the adversarial block. The adversarial model is made
    exactly optimal for the flipped-label problem under that budget via
    the KKT system, and the outer objective scores it on the whole
    validation set with the original labels.
    """
    train_x, train_y = _check_features(train_x, train_y, "train")
    val_x, val_y = _check_features(val_x, val_y, "validation")
    n, p = train_x.shape
    m = val_x.shape[0]
    if val_x.shape[1] != p:
        raise DimensionMismatch("train and validation feature counts differ")
    if bounds.num_features != p:
        raise DimensionMismatch("bounds do not match the feature count")
    if flip.num_points != m:
        raise DimensionMismatch("flip sets were built for a different "
                                "validation set")
    if epsilon < 0:
        raise MalformedProblem("epsilon must be nonnegative")
    flip_idx = np.asarray(flip.v_f, dtype=int)
    f = flip_idx.size
    if f == 0:
        raise EmptyFlipSet("no validation point is marginal or misclassified")

    flip_x = val_x[flip_idx]
    flip_y = -val_y[flip_idx]
    reach_t = _reach(train_x, bounds.upper, intercept_cap)
    reach_f = _reach(flip_x, bounds.upper, intercept_cap)
    xi_cap = 1.0 + reach_t
    v_cap = 1.0 + reach_f

    b = MipBuilder()
    w_bar = _add_block(b, "w_bar", p, bounds.lower, bounds.upper)
    rep_w = _add_block(b, "rep_w", p, -bounds.upper, bounds.upper)
    rep_b = b.add_var("rep_b", -intercept_cap, intercept_cap)
    rep_xi = _add_block(b, "rep_xi", n, 0.0, xi_cap)
    w = _add_block(b, "w", p, -bounds.upper, bounds.upper)
    icpt = b.add_var("b", -intercept_cap, intercept_cap)
    xi = _add_block(b, "xi", n, 0.0, xi_cap)
    v = _add_block(b, "v", f, 0.0, v_cap)
    g = _add_block(b, "g", m, 0.0, np.inf, cost=1.0 / m)
    alpha = _add_block(b, "alpha", f, 0.0, 1.0 / f)
    beta = _add_block(b, "beta", n, 0.0, dual_cap / n)
    lam = b.add_var("budget_dual", 0.0, dual_cap)
    mu_plus = _add_block(b, "mu_plus", p, 0.0, fallback_cap)
    mu_minus = _add_block(b, "mu_minus", p, 0.0, fallback_cap)

    _hinge_rows(b, val_x, val_y, w, icpt, g)
    _box_rows(b, w_bar, rep_w, p)
    _hinge_rows(b, train_x, train_y, rep_w, rep_b, rep_xi)
    _box_rows(b, w_bar, w, p)
    _hinge_rows(b, flip_x, flip_y, w, icpt, v)
    _hinge_rows(b, train_x, train_y, w, icpt, xi)

    # Mean adversarial slack within (1 + epsilon) of the replica's.
    scale = (1.0 + epsilon) / n
    budget_terms = ([(xi.start + i, 1.0 / n) for i in range(n)]
                    + [(rep_xi.start + i, -scale) for i in range(n)])
    b.add_row(budget_terms, "<=", 0.0)

    # Dual feasibility for the adversarial slacks: beta_i <= lam / n.
    for i in range(n):
        b.add_row([(beta.start + i, 1.0), (lam, -1.0 / n)], "<=", 0.0)

    # Stationarity of the flipped-label LP in w and in the intercept.
    for j in range(p):
        terms = [(alpha.start + k, -flip_y[k] * flip_x[k, j])
                 for k in range(f)]
        terms += [(beta.start + i, -train_y[i] * train_x[i, j])
                  for i in range(n)]
        terms += [(mu_plus.start + j, 1.0), (mu_minus.start + j, -1.0)]
        b.add_row(terms, "=", 0.0)
    b.add_row([(alpha.start + k, flip_y[k]) for k in range(f)]
              + [(beta.start + i, train_y[i]) for i in range(n)], "=", 0.0)

    for k in range(f):
        slack = ([(v.start + k, 1.0), (icpt, -flip_y[k])]
                 + [(w.start + j, flip_y[k] * flip_x[k, j])
                    for j in range(p)])
        z_row = b.add_complementarity(
            f"flip_row[{k}]", [(alpha.start + k, 1.0)], 0.0,
            slack, -1.0, 1.0 / f, 2.0 * reach_f[k])
        z_v = b.add_complementarity(
            f"flip_v[{k}]", [(alpha.start + k, -1.0)], 1.0 / f,
            [(v.start + k, 1.0)], 0.0, 1.0 / f, v_cap[k])
        # alpha_k = 0 and alpha_k = 1/f cannot hold at once.
        b.add_row([(z_row, 1.0), (z_v, 1.0)], ">=", 1.0)

    for i in range(n):
        slack = ([(xi.start + i, 1.0), (icpt, -train_y[i])]
                 + [(w.start + j, train_y[i] * train_x[i, j])
                    for j in range(p)])
        b.add_complementarity(
            f"train_row[{i}]", [(beta.start + i, 1.0)], 0.0,
            slack, -1.0, dual_cap / n, 2.0 * reach_t[i], guard_left=True)
        b.add_complementarity(
            f"train_xi[{i}]", [(lam, 1.0 / n), (beta.start + i, -1.0)], 0.0,
            [(xi.start + i, 1.0)], 0.0, dual_cap / n, xi_cap[i],
            guard_left=True)

    _box_multiplier_pairs(b, "box", w_bar, w, mu_plus, mu_minus,
                          bounds.upper, fallback_cap)

    budget_slack = ([(rep_xi.start + i, scale) for i in range(n)]
                    + [(xi.start + i, -1.0 / n) for i in range(n)])
    b.add_complementarity(
        "budget", [(lam, 1.0)], 0.0, budget_slack, 0.0,
        dual_cap, scale * float(xi_cap.sum()), guard_left=True)

    index = {"w_bar": w_bar, "rep_w": rep_w, "rep_b": rep_b,
             "rep_xi": rep_xi, "w": w, "b": icpt, "xi": xi, "v": v, "g": g,
             "alpha": alpha, "beta": beta, "budget_dual": lam,
             "mu_plus": mu_plus, "mu_minus": mu_minus}
    return b.build(), index


class FlipLayout(NamedTuple):
    """The flipped-label LP at a fixed box, plus its variable layout."""

    lp: LinearProgram
    w: slice
    b: int
    xi: slice
    v: slice
    train_rows: slice
    flip_rows: slice
    budget_row: int


def build_flip_lp(train_x, train_y, flip_x, flip_y, w_box, mean_budget,
                  intercept_cap=INTERCEPT_CAP):
    """LP minimizing the mean flipped-label hinge under a slack budget.

    `flip_y` must already carry the flipped signs. The box is applied as
    variable bounds on w so the multipliers land in the reduced costs;
    the budget row caps the mean training slack at `mean_budget`.
    """
    n, p = train_x.shape
    f = flip_x.shape[0]
    total = p + 1 + n + f
    objective = np.zeros(total)
    objective[p + 1 + n:] = 1.0 / f
    w_box = np.asarray(w_box, dtype=float)
    lower = np.concatenate([-w_box, [-intercept_cap], np.zeros(n + f)])
    upper = np.concatenate([w_box, [intercept_cap],
                            np.full(n + f, np.inf)])
    rows = np.zeros((n + f + 1, total))
    rows[:n, :p] = train_y[:, None] * train_x
    rows[:n, p] = -train_y
    rows[np.arange(n), p + 1 + np.arange(n)] = 1.0
    rows[n:n + f, :p] = flip_y[:, None] * flip_x
    rows[n:n + f, p] = -flip_y
    rows[n + np.arange(f), p + 1 + n + np.arange(f)] = 1.0
    rows[n + f, p + 1:p + 1 + n] = 1.0 / n
    relations = [">="] * (n + f) + ["<="]
    rhs = np.concatenate([np.ones(n + f), [mean_budget]])
    names = ([f"w{j}" for j in range(p)] + ["b"]
             + [f"xi{i}" for i in range(n)] + [f"v{k}" for k in range(f)])
    lp = LinearProgram(objective, rows, relations, rhs, lower, upper,
                       names=names)
    return FlipLayout(lp, slice(0, p), p, slice(p + 1, p + 1 + n),
                      slice(p + 1 + n, total), slice(0, n),
                      slice(n, n + f), n + f)


def _seed_pair_binaries(problem, x, tol=1e-9):
    """Choose each linearization binary to match the given point."""
    for pair in problem.pairs:
        left = pair.left_value(x)
        right = pair.right_value(x)
        if left > tol:
            x[pair.z_index] = 1.0
        elif right > tol:
            x[pair.z_index] = 0.0
        else:
            x[pair.z_index] = 1.0 if left >= right else 0.0


def _optimistic_warm_start(problem, index, train_x, train_y, val_x, val_y,
                           bounds, intercept_cap):
    """Feasible point built from the training LP at a corner of the bounds.

    Tries the widest and the narrowest box, keeps the one with the better
    validation score, and completes it with the LP's own multipliers. A
    point that misses any row (for instance because the intercept landed
    on its cap, where the stationarity rows do not apply) is discarded.
    """
    n, p = train_x.shape
    best = None
    for w_bar in (bounds.upper, bounds.lower):
        layout = build_training_lp(train_x, train_y, w_bar, intercept_cap)
        sol = solve_lp(layout.lp)
        if sol.status != "optimal":
            continue
        score = _mean_hinge(sol.primal[layout.w], sol.primal[layout.b],
                            val_x, val_y)
        if best is None or score < best[0]:
            best = (score, w_bar, sol, layout)
    if best is None:
        return None
    _, w_bar, sol, layout = best
    w = sol.primal[layout.w]
    b_val = sol.primal[layout.b]
    x = np.zeros(problem.lp.num_vars)
    x[index["w_bar"]] = w_bar
    x[index["w"]] = w
    x[index["b"]] = b_val
    x[index["xi"]] = _hinges(w, b_val, train_x, train_y)
    x[index["g"]] = _hinges(w, b_val, val_x, val_y)
    x[index["beta"]] = np.clip(sol.duals[:n], 0.0, 1.0 / n)
    reduced = sol.reduced_costs[layout.w]
    x[index["mu_plus"]] = np.maximum(0.0, -reduced)
    x[index["mu_minus"]] = np.maximum(0.0, reduced)
    _seed_pair_binaries(problem, x)
    return x if _point_feasible(problem.lp, x) else None


def _pessimistic_warm_start(problem, index, train_x, train_y, val_x, val_y,
                            flip_x, flip_y, epsilon, bounds, intercept_cap,
                            dual_cap):
    """Feasible point from the widest box: train there, then flip there."""
    n = train_x.shape[0]
    f = flip_x.shape[0]
    layout = build_training_lp(train_x, train_y, bounds.upper, intercept_cap)
    trained = solve_lp(layout.lp)
    if trained.status != "optimal":
        return None
    rep_w = trained.primal[layout.w]
    rep_b = trained.primal[layout.b]
    rep_xi = _hinges(rep_w, rep_b, train_x, train_y)
    budget = (1.0 + epsilon) * float(rep_xi.mean())
    flip_layout = build_flip_lp(train_x, train_y, flip_x, flip_y,
                                bounds.upper, budget, intercept_cap)
    flipped = solve_lp(flip_layout.lp)
    if flipped.status != "optimal":
        return None
    w = flipped.primal[flip_layout.w]
    b_val = flipped.primal[flip_layout.b]
    x = np.zeros(problem.lp.num_vars)
    x[index["w_bar"]] = bounds.upper
    x[index["rep_w"]] = rep_w
    x[index["rep_b"]] = rep_b
    x[index["rep_xi"]] = rep_xi
    x[index["w"]] = w
    x[index["b"]] = b_val
    x[index["xi"]] = flipped.primal[flip_layout.xi]
    x[index["v"]] = _hinges(w, b_val, flip_x, flip_y)
    x[index["g"]] = _hinges(w, b_val, val_x, val_y)
    x[index["alpha"]] = np.clip(flipped.duals[flip_layout.flip_rows],
                                0.0, 1.0 / f)
    lam = min(dual_cap, max(0.0, -flipped.duals[flip_layout.budget_row]))
    x[index["budget_dual"]] = lam
    x[index["beta"]] = np.clip(flipped.duals[flip_layout.train_rows],
                               0.0, lam / n)
    reduced = flipped.reduced_costs[flip_layout.w]
    x[index["mu_plus"]] = np.maximum(0.0, -reduced)
    x[index["mu_minus"]] = np.maximum(0.0, reduced)
    _seed_pair_binaries(problem, x)
    return x if _point_feasible(problem.lp, x) else None


def solve_optimistic(train_x, train_y, val_x, val_y, bounds, options=None):
    """Globally best box radius under the favorable tie-breaking rule.

    Returns (w_bar_star, model, outer_objective) where the model is
    train-optimal at w_bar_star and outer_objective is its mean validation
    hinge loss. The reduction is feasible by construction, so an
    infeasible status signals a bug rather than bad data.
    """
    options = options or SolverOptions()
    train_x, train_y = _check_features(train_x, train_y, "train")
    val_x, val_y = _check_features(val_x, val_y, "validation")
    fallback_cap = options.fallback_cap
    findings = []
    for attempt in range(options.max_retries + 1):
        problem, index = build_optimistic_mip(
            train_x, train_y, val_x, val_y, bounds,
            intercept_cap=options.intercept_cap, fallback_cap=fallback_cap)
        warm = _optimistic_warm_start(problem, index, train_x, train_y,
                                      val_x, val_y, bounds,
                                      options.intercept_cap)
        sol = solve_mip(problem, node_limit=options.node_limit, initial=warm)
        if sol.status != "optimal":
            raise InfeasibleModel(
                f"optimistic reduction came back {sol.status}; the "
                "formulation is feasible for any bounds, so this is a bug")
        x = sol.primal
        # Simplex noise can leave a radius a hair outside its bounds.
        w_bar_star = np.clip(x[index["w_bar"]], bounds.lower, bounds.upper)
        w = x[index["w"]]
        b_val = x[index["b"]]
        findings = validate_big_m(problem, x, guard=options.guard)
        reference = train_inner_svm(train_x, train_y, w_bar_star,
                                    options.intercept_cap)
        inner_gap = abs(float(x[index["xi"]].mean())
                        - float(reference.xi.mean()))
        outer = _mean_hinge(w, b_val, val_x, val_y)
        if inner_gap > options.certificate_tol:
            findings.append(f"inner re-solve disagrees by {inner_gap:.3e}")
        if abs(outer - sol.objective_value) > options.certificate_tol:
            findings.append("outer objective drifted from the hinge losses")
        if not findings:
            model = SvmModel(w=w.copy(), b=float(b_val),
                             xi=x[index["xi"]].copy(), w_bar=w_bar_star)
            return OptimisticSolution(w_bar_star, model,
                                      float(sol.objective_value))
        fallback_cap *= 2.0
    raise BigMValidationError(
        "optimistic solve kept failing its audit: " + "; ".join(findings))


def solve_pessimistic(train_x, train_y, val_x, val_y, bounds, epsilon,
                      flip, options=None):
    """Globally best box radius under the hedged tie-breaking rule.

    The returned solution carries the budget-setting replica, the
    adversarial model scored by the outer objective, and the audited MIP
    diagnostics. Raises EmptyFlipSet when nothing can be flipped; `tune`
    turns that into an optimistic fallback.
    """
    options = options or SolverOptions()
    train_x, train_y = _check_features(train_x, train_y, "train")
    val_x, val_y = _check_features(val_x, val_y, "validation")
    flip_idx = np.asarray(flip.v_f, dtype=int)
    if flip_idx.size == 0:
        raise EmptyFlipSet("no validation point is marginal or misclassified")
    flip_x = val_x[flip_idx]
    flip_y = -val_y[flip_idx]
    dual_cap = options.dual_cap
    fallback_cap = options.fallback_cap
    findings = []
    started = time.perf_counter()
    nodes = iterations = 0
    for attempt in range(options.max_retries + 1):
        problem, index = build_pessimistic_mip(
            train_x, train_y, val_x, val_y, flip, epsilon, bounds,
            intercept_cap=options.intercept_cap, dual_cap=dual_cap,
            fallback_cap=fallback_cap)
        warm = _pessimistic_warm_start(
            problem, index, train_x, train_y, val_x, val_y, flip_x, flip_y,
            epsilon, bounds, options.intercept_cap, dual_cap)
        sol = solve_mip(problem, node_limit=options.node_limit, initial=warm)
        nodes += sol.node_count
        iterations += sol.lp_iterations
        if sol.status != "optimal":
            raise InfeasibleModel(
                f"pessimistic reduction came back {sol.status}; the "
                "formulation is feasible for any bounds, so this is a bug")
        x = sol.primal
        # Simplex noise can leave a radius a hair outside its bounds.
        w_bar_star = np.clip(x[index["w_bar"]], bounds.lower, bounds.upper)
        findings = validate_big_m(problem, x, guard=options.guard)
        findings += _pessimistic_certificate(
            index, x, w_bar_star, sol.objective_value, train_x, train_y,
            val_x, val_y, flip_x, flip_y, epsilon, options)
        if not findings:
            stats = MipStats(
                node_count=nodes, lp_iterations=iterations,
                solve_seconds=time.perf_counter() - started,
                best_bound=float(sol.best_bound), retries=attempt,
                raw_solution=x, index=index,
                caps={"dual_cap": dual_cap, "fallback_cap": fallback_cap})
            replica = SvmModel(w=x[index["rep_w"]].copy(),
                               b=float(x[index["rep_b"]]),
                               xi=x[index["rep_xi"]].copy(),
                               w_bar=w_bar_star)
            adversarial = SvmModel(w=x[index["w"]].copy(),
                                   b=float(x[index["b"]]),
                                   xi=x[index["xi"]].copy(),
                                   w_bar=w_bar_star)
            return PessimisticSolution(
                w_bar_star=w_bar_star, replica=replica,
                adversarial=adversarial,
                outer_objective=float(sol.objective_value),
                epsilon=float(epsilon), mip_stats=stats)
        dual_cap *= 2.0
        fallback_cap *= 2.0
    raise BigMValidationError(
        "pessimistic solve kept failing its audit: " + "; ".join(findings))


def _pessimistic_certificate(index, x, w_bar_star, objective, train_x,
                             train_y, val_x, val_y, flip_x, flip_y, epsilon,
                             options):
    """Re-derive the embedded inner optimum by simplex and compare."""
    findings = []
    budget = (1.0 + epsilon) * float(x[index["rep_xi"]].mean())
    layout = build_flip_lp(train_x, train_y, flip_x, flip_y, w_bar_star,
                           budget, options.intercept_cap)
    check = solve_lp(layout.lp)
    if check.status != "optimal":
        findings.append(f"certificate re-solve ended {check.status}")
        return findings
    embedded = float(x[index["v"]].mean())
    if abs(embedded - check.objective_value) > options.certificate_tol:
        findings.append(
            f"embedded flip objective {embedded:.9g} disagrees with the "
            f"simplex re-solve {check.objective_value:.9g}")
    outer = _mean_hinge(x[index["w"]], float(x[index["b"]]), val_x, val_y)
    if abs(outer - objective) > options.certificate_tol:
        findings.append("outer objective drifted from the hinge losses")
    return findings


def evaluate_worst_case(w_bar_star, train_x, train_y, val_x, val_y, epsilon,
                        flip, intercept_cap=INTERCEPT_CAP):
    """Validation hinge loss of the least favorable near-optimal model.

    Trains at the given radius to fix the slack budget, then searches the
    budgeted models for the one the flipped-label surrogate dislikes
    least, which is the one the original labels dislike most, and reports
    the original-label mean validation hinge there. With nothing to flip
    the trained model itself is scored.
    """
    train_x, train_y = _check_features(train_x, train_y, "train")
    val_x, val_y = _check_features(val_x, val_y, "validation")
    w_bar_star = np.atleast_1d(np.asarray(w_bar_star, dtype=float))
    model = train_inner_svm(train_x, train_y, w_bar_star, intercept_cap)
    flip_idx = np.asarray(flip.v_f, dtype=int)
    if flip_idx.size == 0:
        return _mean_hinge(model.w, model.b, val_x, val_y)
    budget = (1.0 + epsilon) * float(model.xi.mean())
    layout = build_flip_lp(train_x, train_y, val_x[flip_idx],
                           -val_y[flip_idx], w_bar_star, budget,
                           intercept_cap)
    sol = solve_lp(layout.lp)
    if sol.status != "optimal":
        raise NumericalFailure(
            f"worst-case evaluation LP ended {sol.status}")
    return _mean_hinge(sol.primal[layout.w], sol.primal[layout.b],
                       val_x, val_y)


def tune(train_x, train_y, val_x, val_y, bounds, epsilon=0.0,
         flip_mode="margin_plus_misclassified", options=None):
    """Full pipeline: optimistic solve, flip sets from its model, hedged solve.

    When the optimistic model leaves nothing to flip, the hedged solve is
    skipped and the run records the fallback instead of failing.
    """
    options = options or SolverOptions()
    optimistic = solve_optimistic(train_x, train_y, val_x, val_y, bounds,
                                  options)
    train_y_arr = np.asarray(train_y, dtype=float).ravel()
    flip = compute_flip_sets(optimistic.model, val_x, val_y, mode=flip_mode,
                             train_size=train_y_arr.shape[0])
    try:
        pessimistic = solve_pessimistic(train_x, train_y, val_x, val_y,
                                        bounds, epsilon, flip, options)
    except EmptyFlipSet:
        return TuningRun(optimistic=optimistic, flip=flip,
                         pessimistic=None, fallback=True)
    return TuningRun(optimistic=optimistic, flip=flip,
                     pessimistic=pessimistic, fallback=False)
