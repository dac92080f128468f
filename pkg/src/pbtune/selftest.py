"""Built-in invariant suite behind the `selftest` CLI command.

Each check re-derives an identity or certificate from scratch rather than
trusting the code paths it exercises: LP answers are audited through their
duals, branch-and-bound against exhaustive enumeration, and the tuning
chain against its defining inequalities.
"""

from __future__ import annotations

import numpy as np

from .attack import AttackConfig, perturb, select_margin_targets
from .bilevel import evaluate_worst_case, solve_optimistic, solve_pessimistic, \
    tune
from .data import LabeledDataset
from .errors import PbtuneError
from .lp import LinearProgram, check_solution, solve_lp
from .mip import MipProblem, solve_mip
from .svm import FlipSets, HyperBounds, SvmModel, compute_flip_sets, \
    hinge_loss, zero_one_margin_loss

CHAIN_TOL = 1e-6


def _random_box_lp(rng, max_vars=5, max_rows=6):
    n = int(rng.integers(2, max_vars + 1))
    m = int(rng.integers(1, max_rows + 1))
    coeffs = rng.integers(-3, 4, size=(m, n)).astype(float)
    for i in range(m):
        if not coeffs[i].any():
            coeffs[i, rng.integers(0, n)] = 1.0
    lower = rng.integers(-3, 1, size=n).astype(float)
    upper = lower + rng.integers(1, 7, size=n).astype(float)
    anchor = lower + (upper - lower) * rng.random(n)
    rhs = coeffs @ anchor
    rels = []
    for i in range(m):
        u = rng.random()
        if u < 0.15:
            rels.append("=")
        elif u < 0.60:
            rels.append("<=")
            rhs[i] += rng.random() * 2.0
        else:
            rels.append(">=")
            rhs[i] -= rng.random() * 2.0
    objective = rng.integers(-4, 5, size=n).astype(float)
    return LinearProgram(objective, coeffs, rels, rhs, lower, upper)


def _random_mip(rng, max_vars=5, max_binaries=4):
    lp = _random_box_lp(rng, max_vars=max_vars)
    n = lp.num_vars
    k = int(rng.integers(1, min(max_binaries, n) + 1))
    binaries = tuple(sorted(rng.choice(n, size=k, replace=False).tolist()))
    lower = lp.lower.copy()
    upper = lp.upper.copy()
    for j in binaries:
        lower[j], upper[j] = 0.0, 1.0
    return MipProblem(lp=lp.with_bounds(lower, upper), binaries=binaries)


def _tiny_instance(rng):
    tx = rng.normal(size=(4, 1)) * rng.uniform(0.5, 2.0)
    ty = np.where(rng.random(4) < 0.5, 1.0, -1.0)
    ty[0], ty[1] = 1.0, -1.0
    vx = rng.normal(size=(3, 1)) * rng.uniform(0.5, 2.0)
    vy = np.where(rng.random(3) < 0.5, 1.0, -1.0)
    return tx, ty, vx, vy


def check_lp_duality(rng):
    """50 random LPs: every optimal answer passes its own KKT audit."""
    optimal = 0
    for _ in range(50):
        lp = _random_box_lp(rng)
        sol = solve_lp(lp)
        if sol.status != "optimal":
            continue
        optimal += 1
        problems = check_solution(lp, sol)
        if problems:
            return f"LP certificate failed: {problems[0]}"
    if optimal < 20:
        return f"only {optimal}/50 instances were optimal; generator broken"
    return None


def check_mip_enumeration(rng):
    """20 random small MIPs agree with exhaustive binary enumeration."""
    for _ in range(20):
        problem = _random_mip(rng)
        sol = solve_mip(problem)
        best = np.inf
        k = len(problem.binaries)
        for mask in range(2 ** k):
            lower = problem.lp.lower.copy()
            upper = problem.lp.upper.copy()
            for pos, j in enumerate(problem.binaries):
                bit = float((mask >> pos) & 1)
                lower[j] = upper[j] = bit
            fixed = solve_lp(problem.lp.with_bounds(lower, upper))
            if fixed.status == "optimal":
                best = min(best, fixed.objective_value)
        if sol.status == "optimal":
            if abs(sol.objective_value - best) > 1e-9:
                return (f"branch and bound got {sol.objective_value}, "
                        f"enumeration got {best}")
        elif np.isfinite(best):
            return f"solver said {sol.status} but enumeration found {best}"
    return None


def check_flip_identity(rng):
    """200 pairs: worst original 0-1 loss mirrors best flipped loss."""
    for _ in range(200):
        n = int(rng.integers(2, 9))
        p = int(rng.integers(1, 4))
        x = rng.normal(size=(n, p))
        y = np.where(rng.random(n) < 0.5, 1.0, -1.0)
        models = [SvmModel(w=rng.normal(size=p), b=float(rng.normal()))
                  for _ in range(int(rng.integers(2, 13)))]
        worst = max(int(((m.decision_values(x) * y) < 0).sum())
                    for m in models)
        flipped = min(int(((m.decision_values(x) * -y) < 0).sum())
                      for m in models)
        if worst != n - flipped:
            return f"identity broke: {worst} vs {n} - {flipped}"
    return None


def check_partition(rng):
    """1000 pairs: margin partition is a disjoint cover with exact counts."""
    for _ in range(1000):
        n = int(rng.integers(1, 12))
        p = int(rng.integers(1, 4))
        x = rng.normal(size=(n, p))
        y = np.where(rng.random(n) < 0.5, 1.0, -1.0)
        model = SvmModel(w=rng.normal(size=p), b=float(rng.normal()))
        flip = compute_flip_sets(model, x, y, mode="margin_plus_misclassified")
        joined = np.concatenate([flip.v1, flip.v2, flip.v3])
        if sorted(joined.tolist()) != list(range(n)):
            return "partition does not cover the index range"
        margin_count = sum(zero_one_margin_loss(model, x[i], y[i])
                           for i in range(n))
        if margin_count != flip.v1.size + flip.v3.size:
            return (f"count mismatch: {margin_count} vs "
                    f"{flip.v1.size} + {flip.v3.size}")
    return None


def check_value_chain(rng):
    """10 instances: best-case <= hedged(0) <= worst-case within 1e-6."""
    bounds = HyperBounds.box(1)
    for _ in range(10):
        tx, ty, vx, vy = _tiny_instance(rng)
        run = tune(tx, ty, vx, vy, bounds, epsilon=0.0, flip_mode="all")
        worst = evaluate_worst_case(run.optimistic.w_bar_star, tx, ty, vx, vy,
                                    0.0, run.flip)
        opt = run.optimistic.outer_objective
        pess = run.pessimistic_objective
        if opt > pess + CHAIN_TOL or pess > worst + CHAIN_TOL:
            return f"chain broke: {opt} <= {pess} <= {worst}"
    return None


def check_budget_monotonicity(rng):
    """3 instances: hedged and worst-case values nondecreasing in epsilon."""
    bounds = HyperBounds.box(1)
    grid = (0.0, 0.2, 0.4, 0.6)
    for _ in range(3):
        tx, ty, vx, vy = _tiny_instance(rng)
        opt = solve_optimistic(tx, ty, vx, vy, bounds)
        flip = compute_flip_sets(opt.model, vx, vy, mode="all")
        if flip.v_f.size == 0:
            continue
        last_pess, last_worst = -np.inf, -np.inf
        for eps in grid:
            pess = solve_pessimistic(tx, ty, vx, vy, bounds, eps, flip)
            worst = evaluate_worst_case(opt.w_bar_star, tx, ty, vx, vy,
                                        eps, flip)
            if pess.outer_objective < last_pess - CHAIN_TOL:
                return f"hedged value dropped at epsilon {eps}"
            if worst < last_worst - CHAIN_TOL:
                return f"worst-case value dropped at epsilon {eps}"
            if pess.outer_objective > worst + CHAIN_TOL:
                return f"hedged value exceeds worst case at epsilon {eps}"
            last_pess, last_worst = pess.outer_objective, worst
    return None


def check_attack_invariants(rng):
    """100 runs: budget respected, labels fixed, zero budget is identity."""
    for _ in range(100):
        n = int(rng.integers(2, 9))
        p = int(rng.integers(1, 4))
        x = rng.normal(size=(n, p))
        y = np.where(rng.random(n) < 0.5, 1.0, -1.0)
        data = LabeledDataset(x, y)
        w = rng.normal(size=p)
        while np.linalg.norm(w) == 0.0:
            w = rng.normal(size=p)
        model = SvmModel(w=w, b=float(rng.normal()))
        rho = float(rng.uniform(0.0, 1.0))
        targets = select_margin_targets(model, data)
        out = perturb(data, model, AttackConfig(rho=rho,
                                                target_indices=targets))
        shift = np.linalg.norm(out.features - data.features, axis=1)
        if (shift > rho + 1e-12).any():
            return f"budget violated by {float(shift.max() - rho)}"
        if not np.array_equal(out.labels, data.labels):
            return "labels changed"
        for i in targets:
            before = hinge_loss(model, data.features[i], data.labels[i])
            after = hinge_loss(model, out.features[i], out.labels[i])
            if after < before - 1e-12:
                return "hinge loss decreased on a target"
        untouched = perturb(data, model,
                            AttackConfig(rho=0.0, target_indices=targets))
        if untouched is not data:
            return "zero budget did not return the input unchanged"
    return None


CHECKS = (
    ("lp-duality", check_lp_duality),
    ("mip-enumeration", check_mip_enumeration),
    ("flip-identity", check_flip_identity),
    ("margin-partition", check_partition),
    ("value-chain", check_value_chain),
    ("budget-monotonicity", check_budget_monotonicity),
    ("attack-invariants", check_attack_invariants),
)


def run_selftest(report=print, seed=0):
    """Run every check; report one line each; True when all pass."""
    rng = np.random.default_rng(seed)
    all_ok = True
    for name, check in CHECKS:
        try:
            failure = check(rng)
        except PbtuneError as exc:
            failure = f"raised {type(exc).__name__}: {exc}"
        if failure is None:
            report(f"ok - {name}")
        else:
            report(f"FAIL - {name}: {failure}")
            all_ok = False
    return all_ok
