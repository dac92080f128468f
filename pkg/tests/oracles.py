"""Independent brute-force oracles used to validate the solvers.

Everything in this module is deliberately naive: LP vertices come from
enumerating square subsystems, mixed-integer optima from enumerating every
binary assignment, and the tiny one-feature bilevel problems from a carrier-
line arrangement in the 2-D (weight, intercept) plane plus a scan over cap
values. None of it shares code with the simplex or branch-and-bound
implementations it checks.
"""

from __future__ import annotations

import itertools

import numpy as np

FEAS_TOL = 1e-7


# ---------------------------------------------------------------------------
# LP oracle: vertex enumeration
# ---------------------------------------------------------------------------

def _constraint_system(lp):
    """All constraints of an LP as (matrix, rhs, relations).

    Finite variable bounds become explicit rows so a vertex is any feasible
    point where n linearly independent constraints are tight.
    """
    rows_a = [np.asarray(a, dtype=float) for a in lp.row_coeffs]
    rows_b = [float(b) for b in lp.row_rhs]
    rows_rel = list(lp.row_relations)
    n = lp.num_vars
    for j in range(n):
        lo, hi = lp.lower[j], lp.upper[j]
        if np.isfinite(lo):
            e = np.zeros(n)
            e[j] = 1.0
            rows_a.append(e)
            rows_b.append(float(lo))
            rows_rel.append(">=")
        if np.isfinite(hi):
            e = np.zeros(n)
            e[j] = 1.0
            rows_a.append(e)
            rows_b.append(float(hi))
            rows_rel.append("<=")
    return np.array(rows_a), np.array(rows_b), rows_rel


def _feasible(point, mat, rhs, rels, tol):
    vals = mat @ point
    for v, b, rel in zip(vals, rhs, rels):
        scale = max(1.0, abs(b))
        if rel == "<=" and v - b > tol * scale:
            return False
        if rel == ">=" and b - v > tol * scale:
            return False
        if rel == "=" and abs(v - b) > tol * scale:
            return False
    return True


def enumerate_vertices(lp, tol=FEAS_TOL):
    """All vertices of the LP's feasible region, by square-subsystem search.

    Equality rows are forced into every candidate subset. Only usable for
    small programs; cost grows as C(rows, vars).
    """
    mat, rhs, rels = _constraint_system(lp)
    n = lp.num_vars
    eq_idx = [i for i, r in enumerate(rels) if r == "="]
    ineq_idx = [i for i, r in enumerate(rels) if r != "="]
    if len(eq_idx) >= n:
        base_choices = [tuple(eq_idx)]
    else:
        need = n - len(eq_idx)
        base_choices = [
            tuple(eq_idx) + combo for combo in itertools.combinations(ineq_idx, need)
        ]
    vertices = []
    for subset in base_choices:
        sub_a = mat[list(subset)]
        sub_b = rhs[list(subset)]
        if np.linalg.matrix_rank(sub_a, tol=1e-9) < n:
            continue
        point, *_ = np.linalg.lstsq(sub_a, sub_b, rcond=None)
        if np.max(np.abs(sub_a @ point - sub_b)) > 1e-6:
            continue
        if _feasible(point, mat, rhs, rels, tol):
            vertices.append(point)
    return vertices


def lp_minimum_by_vertex_enumeration(lp, tol=FEAS_TOL):
    """(objective, vertex) of the best vertex, or (None, None) if none found.

    Correct for feasible LPs whose feasible region is a bounded polytope.
    """
    vertices = enumerate_vertices(lp, tol=tol)
    if not vertices:
        return None, None
    objs = [float(np.dot(lp.objective, v)) for v in vertices]
    best = int(np.argmin(objs))
    return objs[best], vertices[best]


# ---------------------------------------------------------------------------
# MIP oracle: exhaustive binary enumeration
# ---------------------------------------------------------------------------

def mip_minimum_by_enumeration(problem, solve_lp):
    """Best objective over all binary assignments, one LP solve each.

    `solve_lp` is injected so this oracle exercises only the fixed-assignment
    LP path, never the branch-and-bound search it is meant to check.
    Returns (objective, assignment, primal); objective is None if every
    assignment is infeasible.
    """
    best_obj = None
    best_assign = None
    best_x = None
    binaries = list(problem.binaries)
    for bits in itertools.product((0.0, 1.0), repeat=len(binaries)):
        lower = problem.lp.lower.copy()
        upper = problem.lp.upper.copy()
        skip = False
        for j, v in zip(binaries, bits):
            if v < lower[j] - 1e-12 or v > upper[j] + 1e-12:
                skip = True
                break
            lower[j] = v
            upper[j] = v
        if skip:
            continue
        fixed = problem.lp.with_bounds(lower, upper)
        sol = solve_lp(fixed)
        if sol.status != "optimal":
            continue
        if best_obj is None or sol.objective_value < best_obj - 1e-12:
            best_obj = sol.objective_value
            best_assign = bits
            best_x = sol.primal
    return best_obj, best_assign, best_x


# ---------------------------------------------------------------------------
# One-feature bilevel oracle: carrier-line arrangement in the (w, b) plane
# ---------------------------------------------------------------------------
#
# For one feature the inner training problem and its label-flipped variant
# live in a 2-D (weight, intercept) plane. Every function involved (training
# hinge sum, flipped hinge sum, validation hinge mean) is piecewise linear, so
# the extremes over any polygon cut out by the box, a hinge-budget constraint
# and an optimality face are attained at intersections of two "carrier" lines:
# hinge kink lines, box edges, or budget level lines of a subset of active
# terms. Enumerating all pairwise intersections and filtering is therefore
# exact up to tolerance.

def _hinge_sums(x, y, ws, bs):
    """Hinge-loss sums of one dataset at many (w, b) points at once."""
    margins = y[None, :] * (x[None, :] * ws[:, None] - bs[:, None])
    return np.maximum(0.0, 1.0 - margins).sum(axis=1)


def _carrier_lines(cap, icap, term_groups):
    """Candidate lines as (alpha, beta, gamma) triples: alpha*w + beta*b = gamma."""
    lines = [
        (1.0, 0.0, cap), (1.0, 0.0, -cap),
        (0.0, 1.0, icap), (0.0, 1.0, -icap),
    ]
    for x, y in term_groups:
        for xi, yi in zip(x, y):
            # kink of max(0, 1 - yi*(xi*w - b)) is yi*xi*w - yi*b = 1
            lines.append((float(yi * xi), float(-yi), 1.0))
    return lines


def _budget_subset_lines(x, y, rhs):
    """Level lines of sum_S (1 - y_i (x_i w - b)) = rhs over all subsets S."""
    lines = []
    n = len(x)
    for mask in range(1, 2 ** n):
        idx = [i for i in range(n) if mask >> i & 1]
        a = float(sum(y[i] * x[i] for i in idx))
        bcoef = float(-sum(y[i] for i in idx))
        # sum_S 1 - (a*w + bcoef*b) = rhs  ->  a*w + bcoef*b = |S| - rhs
        lines.append((a, bcoef, float(len(idx)) - rhs))
    return lines


def _intersections(lines):
    """All pairwise line intersections as coordinate arrays (ws, bs)."""
    arr = np.asarray(lines, dtype=float)
    i, j = np.triu_indices(len(arr), k=1)
    a1, b1, c1 = arr[i, 0], arr[i, 1], arr[i, 2]
    a2, b2, c2 = arr[j, 0], arr[j, 1], arr[j, 2]
    det = a1 * b2 - a2 * b1
    ok = np.abs(det) > 1e-12
    ws = (c1[ok] * b2[ok] - c2[ok] * b1[ok]) / det[ok]
    bs = (a1[ok] * c2[ok] - a2[ok] * c1[ok]) / det[ok]
    return ws, bs


def inner_face_extremes_1d(inner_x, inner_y, cap, icap, eval_x, eval_y,
                           budget_x=None, budget_y=None, budget_rhs=None):
    """Extremes of an evaluation hinge over the inner problem's optimal face.

    Inner problem: minimize sum_i max(0, 1 - inner_y_i (inner_x_i w - b)) over
    |w| <= cap, |b| <= icap, optionally subject to
    sum_j max(0, 1 - budget_y_j (budget_x_j w - b)) <= budget_rhs.

    Returns (inner_min_sum, eval_min, eval_max, argmin_points) where eval_*
    are extremes of mean_k max(0, 1 - eval_y_k (eval_x_k w - b)) over the
    inner argmin, and argmin_points are the candidate points attaining them.
    Returns (None, None, None, []) when the constraints are infeasible.
    """
    inner_x = np.asarray(inner_x, float).ravel()
    inner_y = np.asarray(inner_y, float).ravel()
    eval_x = np.asarray(eval_x, float).ravel()
    eval_y = np.asarray(eval_y, float).ravel()
    groups = [(inner_x, inner_y), (eval_x, eval_y)]
    lines = _carrier_lines(cap, icap, groups)
    has_budget = budget_x is not None and len(budget_x) > 0
    if has_budget:
        budget_x = np.asarray(budget_x, float).ravel()
        budget_y = np.asarray(budget_y, float).ravel()
        lines += _carrier_lines(0.0, 0.0, [(budget_x, budget_y)])[4:]
        lines += _budget_subset_lines(budget_x, budget_y, budget_rhs)

    ws, bs = _intersections(lines)
    if ws.size == 0:
        return None, None, None, []
    keep = (np.abs(ws) <= cap + 1e-9) & (np.abs(bs) <= icap + 1e-9)
    if has_budget:
        keep &= _hinge_sums(budget_x, budget_y, ws, bs) <= (
            budget_rhs + 1e-7 * (1.0 + abs(budget_rhs)))
    ws, bs = ws[keep], bs[keep]
    if ws.size == 0:
        return None, None, None, []
    inner_vals = _hinge_sums(inner_x, inner_y, ws, bs)
    fmin = float(inner_vals.min())
    face = inner_vals <= fmin + 1e-7 * (1.0 + abs(fmin))
    evals = _hinge_sums(eval_x, eval_y, ws[face], bs[face])
    evals /= max(1, len(eval_x))
    pts = list(zip(ws[face].tolist(), bs[face].tolist()))
    return fmin, float(evals.min()), float(evals.max()), pts


def _pareto_envelope(t, phi):
    """Lower convex envelope of a point cloud, as vertex arrays.

    Returns (vt, vphi) describing the convex nonincreasing function
    E(q) = min { phi attainable with t <= q }; every cloud point lies on or
    above E, and E is exact wherever the cloud contains the true frontier
    vertices.
    """
    order = np.lexsort((phi, t))
    ts, ps = t[order], phi[order]
    # Collapse near-equal t to their best phi first. Intersection noise of
    # order 1e-12 otherwise splits an exact tie, and the leftmost vertex,
    # which anchors the hull and is exactly where budget queries land, can
    # end up carrying an arbitrarily bad phi.
    grouped = []
    for tk, pk in zip(ts, ps):
        if grouped and tk - grouped[-1][0] <= 1e-9 * (1.0 + abs(tk)):
            if pk < grouped[-1][1]:
                grouped[-1] = (grouped[-1][0], pk)
            continue
        grouped.append((tk, pk))
    hull = []
    for tk, pk in grouped:
        while len(hull) >= 2:
            (t1, p1), (t2, p2) = hull[-2], hull[-1]
            if (t2 - t1) * (pk - p1) - (p2 - p1) * (tk - t1) <= 0.0:
                hull.pop()
            else:
                break
        hull.append((tk, pk))
    # Keep only the decreasing part; beyond the minimum the envelope is flat.
    best = min(range(len(hull)), key=lambda k: hull[k][1])
    hull = hull[:best + 1]
    vt = np.array([h[0] for h in hull])
    vphi = np.array([h[1] for h in hull])
    return vt, vphi


def pessimistic_cell_1d(train_x, train_y, flip_x, flip_y, val_x, val_y,
                        epsilon, cap, icap):
    """Pessimistic outer values at one cap value, by candidate enumeration.

    The inner problem minimizes the flipped hinge sum subject to the box and
    a training-hinge budget. The budget's right-hand side is (1 + epsilon)
    times the replica's mean training slack, and the replica is only required
    to be feasible, so any budget at or above (1 + epsilon) * theta can be
    selected by the outer minimization. A candidate point is admissible when
    it minimizes the flipped hinge among all box points whose training hinge
    does not exceed the candidate's own (or the base budget, if larger); that
    test uses the Pareto envelope of (training hinge, flipped hinge).

    Returns a dict with:
      joint_best: min mean validation hinge over every admissible point
                  (matches a joint minimization over budget and inner ties)
      face_best / face_worst: extremes over the base-budget optimal face only
      theta: optimal training hinge sum at this cap
    Values are None when the box is empty.
    """
    train_x = np.asarray(train_x, float).ravel()
    train_y = np.asarray(train_y, float).ravel()
    flip_x = np.asarray(flip_x, float).ravel()
    flip_y = np.asarray(flip_y, float).ravel()
    val_x = np.asarray(val_x, float).ravel()
    val_y = np.asarray(val_y, float).ravel()

    base = _carrier_lines(cap, icap, [(train_x, train_y)])
    ws, bs = _intersections(base)
    keep = (np.abs(ws) <= cap + 1e-9) & (np.abs(bs) <= icap + 1e-9)
    if not keep.any():
        return {"joint_best": None, "face_best": None, "face_worst": None,
                "theta": None}
    theta = float(_hinge_sums(train_x, train_y, ws[keep], bs[keep]).min())
    budget = (1.0 + epsilon) * theta

    groups = [(train_x, train_y), (flip_x, flip_y), (val_x, val_y)]
    lines = _carrier_lines(cap, icap, groups)
    lines += _budget_subset_lines(train_x, train_y, budget)
    ws, bs = _intersections(lines)
    keep = (np.abs(ws) <= cap + 1e-9) & (np.abs(bs) <= icap + 1e-9)
    ws, bs = ws[keep], bs[keep]
    t = _hinge_sums(train_x, train_y, ws, bs)
    phi = _hinge_sums(flip_x, flip_y, ws, bs)
    evals = _hinge_sums(val_x, val_y, ws, bs) / max(1, len(val_x))

    vt, vphi = _pareto_envelope(t, phi)
    bound = np.interp(np.maximum(t, budget), vt, vphi)
    admissible = phi <= bound + 1e-7 * (1.0 + np.abs(bound))

    base_bound = float(np.interp(budget, vt, vphi))
    face = (t <= budget + 1e-7 * (1.0 + abs(budget))) & (
        phi <= base_bound + 1e-7 * (1.0 + abs(base_bound)))
    return {
        "joint_best": float(evals[admissible].min()),
        "face_best": float(evals[face].min()),
        "face_worst": float(evals[face].max()),
        "theta": theta,
    }


def optimistic_value_1d(train_x, train_y, val_x, val_y, cap_lo, cap_hi, icap,
                        coarse=2001):
    """Best-case tuned validation hinge for a one-feature problem.

    For each candidate cap value the inner training hinge is minimized and the
    validation hinge evaluated at its most favorable inner optimum; the cap
    grid is then refined around the best coarse candidates.
    """
    def value_at(cap):
        _, lo, _, _ = inner_face_extremes_1d(
            train_x, train_y, cap, icap, val_x, val_y)
        return lo

    return _grid_refine(value_at, cap_lo, cap_hi, coarse)


def pessimistic_value_1d(train_x, train_y, flip_x, flip_y, val_x, val_y,
                         epsilon, cap_lo, cap_hi, icap, coarse=2001,
                         semantics="joint"):
    """Worst-case tuned validation hinge for a one-feature problem.

    semantics="joint" minimizes, over cap values, the best admissible point
    under the budget-selection freedom described in pessimistic_cell_1d; this
    is the value a joint single-level minimization attains. "face_worst"
    instead takes the least favorable point of the base-budget optimal face
    per cap. The two agree whenever that face is a single point and budget
    inflation never pays off.
    """
    key = {"joint": "joint_best", "face_worst": "face_worst"}[semantics]

    def value_at(cap):
        cell = pessimistic_cell_1d(train_x, train_y, flip_x, flip_y,
                                   val_x, val_y, epsilon, cap, icap)
        return cell[key]

    return _grid_refine(value_at, cap_lo, cap_hi, coarse)


def _grid_refine(value_at, lo, hi, coarse, top=10, refine=81, levels=2):
    """Minimize a scalar function on [lo, hi] by a coarse grid plus local
    refinement around each of the `top` best coarse candidates."""
    grid = np.linspace(lo, hi, coarse)
    vals = np.array([np.inf if (v := value_at(c)) is None else v
                     for c in grid])
    order = np.argsort(vals, kind="stable")[:top]
    span = (hi - lo) / max(1, coarse - 1)
    best_val, best_cap = float(vals[order[0]]), float(grid[order[0]])
    for k in order:
        if not np.isfinite(vals[k]):
            continue
        val, cap, step = float(vals[k]), float(grid[k]), span
        for _ in range(levels):
            g2 = np.linspace(max(lo, cap - step), min(hi, cap + step), refine)
            v2 = np.array([np.inf if (v := value_at(c)) is None else v
                           for c in g2])
            k2 = int(np.argmin(v2))
            if v2[k2] < val:
                val, cap = float(v2[k2]), float(g2[k2])
            step /= 40.0
        if val < best_val:
            best_val, best_cap = val, cap
    return best_val, best_cap
