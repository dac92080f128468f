"""Dense linear programming core.

Implements a two-phase primal simplex method on the bounded-variable form

    minimize    c.x
    subject to  row_coeffs x  (<=, >=, =)  row_rhs
                lower <= x <= upper

Variables may have infinite bounds on either side; fully free variables are
split internally into a difference of nonnegative parts. Equality rows are
expanded into a <= / >= pair before solving. Rows are rescaled by their
largest coefficient magnitude, and artificial variables are introduced only
for rows violated at the initial point.

`BranchLpSolver` re-solves one program under a stream of variable-bound
changes, as branch and bound produces: instead of repeating phase 1 it
restores the parent basis, repairs primal feasibility with dual simplex
pivots, and certifies the result with the ordinary primal pass.

Duals follow the shadow price convention y = d(objective)/d(rhs): <= rows
get nonpositive duals, >= rows nonnegative, equalities unrestricted. Reduced
costs are c - A^T y; at an optimum they are nonnegative for variables at
their lower bound and nonpositive at their upper bound.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import MalformedProblem, NumericalFailure

RELATIONS = ("<=", ">=", "=")

FEAS_TOL = 1e-8
PIVOT_TOL = 1e-10
STABLE_PIVOT = 1e-7
PRICE_TOL = 1e-9
RATIO_TOL = 1e-9
DEGENERATE_STEP = 1e-10
BLAND_TRIGGER = 50
REFACTOR_EVERY = 64
DUAL_RATIO_TOL = 1e-9
INFEAS_DECISIVE = 1e-6


class _BasisBreakdown(NumericalFailure):
    """The maintained basis inverse drifted far enough to admit a dependent
    column; the solve can be redone with exact refactorization."""


class LinearProgram:
    """Immutable problem container.

    `row_coeffs` is a dense (rows, vars) array. `names` is optional and only
    used for diagnostics.
    """

    __slots__ = ("objective", "row_coeffs", "row_relations", "row_rhs",
                 "lower", "upper", "names")

    def __init__(self, objective, row_coeffs, row_relations, row_rhs,
                 lower=None, upper=None, names=None, validate=True):
        self.objective = np.asarray(objective, dtype=float)
        n = self.objective.shape[0]
        coeffs = np.asarray(row_coeffs, dtype=float)
        if coeffs.size == 0:
            coeffs = coeffs.reshape(0, n)
        self.row_coeffs = coeffs
        self.row_relations = tuple(row_relations)
        self.row_rhs = np.asarray(row_rhs, dtype=float)
        self.lower = (np.full(n, -np.inf) if lower is None
                      else np.asarray(lower, dtype=float))
        self.upper = (np.full(n, np.inf) if upper is None
                      else np.asarray(upper, dtype=float))
        self.names = tuple(names) if names is not None else None
        if validate:
            self._validate()

    def _validate(self):
        n = self.num_vars
        m = self.num_rows
        if self.objective.ndim != 1 or n == 0:
            raise MalformedProblem("objective must be a nonempty vector")
        if self.row_coeffs.shape != (m, n):
            raise MalformedProblem(
                f"row_coeffs shape {self.row_coeffs.shape} does not match "
                f"{m} rows over {n} variables")
        if self.row_rhs.shape != (m,):
            raise MalformedProblem("row_rhs length does not match rows")
        if len(self.row_relations) != m:
            raise MalformedProblem("row_relations length does not match rows")
        for rel in self.row_relations:
            if rel not in RELATIONS:
                raise MalformedProblem(f"unknown relation {rel!r}")
        if self.lower.shape != (n,) or self.upper.shape != (n,):
            raise MalformedProblem("bound vectors must have one entry per variable")
        if self.names is not None and len(self.names) != n:
            raise MalformedProblem("names length does not match variables")
        for arr in (self.objective, self.row_coeffs, self.row_rhs,
                    self.lower, self.upper):
            if np.isnan(arr).any():
                raise MalformedProblem("NaN in problem data")
        if np.isinf(self.objective).any() or np.isinf(self.row_coeffs).any() \
                or np.isinf(self.row_rhs).any():
            raise MalformedProblem("infinite coefficient in problem data")
        if (self.lower > self.upper).any():
            bad = int(np.argmax(self.lower > self.upper))
            raise MalformedProblem(f"lower bound exceeds upper for variable {bad}")

    @property
    def num_vars(self):
        return self.objective.shape[0]

    @property
    def num_rows(self):
        return self.row_coeffs.shape[0]

    def with_bounds(self, lower, upper):
        """Copy of this program with replaced variable bounds."""
        lp = LinearProgram(self.objective, self.row_coeffs, self.row_relations,
                           self.row_rhs, lower, upper, self.names,
                           validate=False)
        if (lp.lower > lp.upper).any():
            raise MalformedProblem("lower bound exceeds upper in with_bounds")
        return lp


@dataclass
class LpSolution:
    """Outcome of a simplex solve.

    `status` is one of "optimal", "infeasible", "unbounded". Primal, dual and
    reduced cost vectors are populated only for "optimal". `ray` is an
    improving feasible direction in the original variables when unbounded;
    `farkas` holds phase-1 duals witnessing infeasibility, in the shadow
    price convention.
    """

    status: str
    objective_value: float = np.nan
    primal: np.ndarray | None = None
    duals: np.ndarray | None = None
    reduced_costs: np.ndarray | None = None
    iterations: int = 0
    ray: np.ndarray | None = None
    farkas: np.ndarray | None = None


@dataclass
class _Canonical:
    """Equality-form data produced by `_canonicalize`."""

    T: np.ndarray
    rhs: np.ndarray
    cost1: np.ndarray
    cost2: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    var_map: list          # original var -> [(column, sign), ...]
    row_map: list          # original row -> [(canonical row, nu / scale), ...]
    artificial_cols: np.ndarray
    basis: np.ndarray
    x: np.ndarray
    at_upper: np.ndarray
    n_struct: int


def _canonicalize(lp: LinearProgram) -> _Canonical:
    n = lp.num_vars
    var_map = []
    cols_lo, cols_hi, cols_c2 = [], [], []
    for j in range(n):
        lo, hi = lp.lower[j], lp.upper[j]
        base = len(cols_lo)
        if np.isinf(lo) and np.isinf(hi):
            var_map.append([(base, 1.0), (base + 1, -1.0)])
            cols_lo += [0.0, 0.0]
            cols_hi += [np.inf, np.inf]
            cols_c2 += [lp.objective[j], -lp.objective[j]]
        else:
            var_map.append([(base, 1.0)])
            cols_lo.append(lo)
            cols_hi.append(hi)
            cols_c2.append(lp.objective[j])
    n_struct = len(cols_lo)

    # Scatter matrix taking original variables to canonical columns.
    expand = np.zeros((n, n_struct))
    for j, parts in enumerate(var_map):
        for col, sign in parts:
            expand[j, col] = sign

    # Equality rows become a <=/>= pair sharing the original row index.
    orig_row, rels = [], []
    for k in range(lp.num_rows):
        rel = lp.row_relations[k]
        if rel == "=":
            orig_row += [k, k]
            rels += ["<=", ">="]
        else:
            orig_row.append(k)
            rels.append(rel)
    m = len(orig_row)
    orig_row = np.array(orig_row, dtype=int)

    raw = lp.row_coeffs[orig_row]
    rhs_vec = lp.row_rhs[orig_row].astype(float)
    scales = np.abs(raw).max(axis=1) if m else np.zeros(0)
    scales[scales <= 0.0] = 1.0
    struct_rows = (raw / scales[:, None]) @ expand
    rhs_vec = rhs_vec / scales
    slack_sign = np.array([1.0 if r == "<=" else -1.0 for r in rels])

    cols_lo = np.array(cols_lo)
    cols_hi = np.array(cols_hi)
    # Nonbasic start: finite lower bound preferred, else the upper bound.
    x0 = np.where(np.isfinite(cols_lo), cols_lo, cols_hi)
    at_upper0 = ~np.isfinite(cols_lo) & np.isfinite(cols_hi)

    resid = rhs_vec - struct_rows @ x0
    slack_basic = slack_sign * resid >= 0.0
    nu = np.ones(m)
    nu[~slack_basic & (resid < 0.0)] = -1.0
    struct_rows *= nu[:, None]
    rhs_vec = rhs_vec * nu
    slack_sign = slack_sign * nu
    resid = resid * nu

    n_art = int((~slack_basic).sum())
    total = n_struct + m + n_art
    T = np.zeros((m, total))
    T[:, :n_struct] = struct_rows
    slack_cols = n_struct + np.arange(m)
    if m:
        T[np.arange(m), slack_cols] = slack_sign

    lo = np.concatenate([cols_lo, np.zeros(m + n_art)])
    hi = np.concatenate([cols_hi, np.full(m + n_art, np.inf)])
    cost2 = np.concatenate([cols_c2, np.zeros(m + n_art)])
    cost1 = np.zeros(total)

    basis = np.empty(m, dtype=int)
    x = np.concatenate([x0, np.zeros(m + n_art)])
    at_upper = np.concatenate([at_upper0, np.zeros(m + n_art, dtype=bool)])
    artificial_cols = np.full(m, -1, dtype=int)
    next_art = n_struct + m
    for r in range(m):
        if slack_basic[r]:
            basis[r] = slack_cols[r]
            x[slack_cols[r]] = slack_sign[r] * resid[r]
        else:
            T[r, next_art] = 1.0
            cost1[next_art] = 1.0
            artificial_cols[r] = next_art
            basis[r] = next_art
            x[next_art] = resid[r]
            next_art += 1

    # Per-row factor used when mapping equality-system duals back: the dual
    # of original row k is the sum of nu/scale weighted canonical duals.
    row_map = [[] for _ in range(lp.num_rows)]
    for r in range(m):
        k = orig_row[r]
        row_map[k].append((r, nu[r] / scales[r]))

    return _Canonical(T=T, rhs=rhs_vec, cost1=cost1, cost2=cost2, lo=lo, hi=hi,
                      var_map=var_map, row_map=row_map,
                      artificial_cols=artificial_cols, basis=basis, x=x,
                      at_upper=at_upper, n_struct=n_struct)


class _Simplex:
    """Bounded-variable primal simplex over a canonical equality system.

    Nonbasic variables sit exactly on one of their bounds; `at_upper` records
    which. The basis inverse is kept explicitly and rebuilt periodically.
    """

    def __init__(self, canon: _Canonical, max_iterations: int,
                 refactor_every: int = REFACTOR_EVERY, start_bland=False):
        self.c = canon
        self.m, self.total = canon.T.shape
        self.basis = canon.basis
        self.x = canon.x
        self.at_upper = canon.at_upper
        self.in_basis = np.zeros(self.total, dtype=bool)
        self.in_basis[self.basis] = True
        self.binv = np.eye(self.m)
        self.max_iterations = max_iterations
        self.refactor_every = refactor_every
        self.iterations = 0
        self.pivots_since_refactor = 0
        self.degenerate_streak = 0
        self.start_bland = bool(start_bland)
        self.bland = self.start_bland
        self.ray = None
        self._refactor()

    def _refactor(self):
        if self.m == 0:
            return
        B = self.c.T[:, self.basis]
        try:
            self.binv = np.linalg.inv(B)
        except np.linalg.LinAlgError as exc:
            raise _BasisBreakdown("singular basis during refactorization") from exc
        mask = ~self.in_basis
        partial = self.c.rhs - self.c.T[:, mask] @ self.x[mask]
        self.x[self.basis] = self.binv @ partial
        self.pivots_since_refactor = 0

    def run_phase(self, cost, *, allow_unbounded):
        """Iterate to optimality for the given cost vector.

        Returns "optimal" or "unbounded". Pricing is Dantzig's rule, with a
        switch to Bland's rule after a run of degenerate steps so cycling
        cannot occur; Dantzig resumes once a real step is taken. A column
        whose best available pivot is below STABLE_PIVOT is passed over
        while a stabler profitable column exists: such a pivot sits under
        the noise floor of the maintained inverse and can be an exact zero
        in disguise, turning the basis singular.
        """
        while True:
            if self.iterations >= self.max_iterations:
                raise NumericalFailure(
                    f"simplex iteration cap {self.max_iterations} reached")
            if self.m:
                y = cost[self.basis] @ self.binv
                d = cost - y @ self.c.T
            else:
                d = cost.copy()
            movable = ~self.in_basis & (self.c.hi > self.c.lo)
            score = np.where(self.at_upper, d, -d)
            score = np.where(movable, score, -np.inf)
            banned = None
            fallback = None
            while True:
                eff = score if banned is None else \
                    np.where(banned, -np.inf, score)
                if not (eff > PRICE_TOL).any():
                    if fallback is None:
                        return "optimal"
                    # Every profitable column is unstable; take the least
                    # bad pivot rather than stalling.
                    _, enter, direction, col, step, leave_pos, \
                        leave_to_upper = fallback
                    break
                if self.bland:
                    enter = int(np.flatnonzero(eff > PRICE_TOL)[0])
                else:
                    enter = int(np.argmax(eff))
                direction = -1.0 if self.at_upper[enter] else 1.0
                col = self.binv @ self.c.T[:, enter] if self.m \
                    else np.zeros(0)
                step, leave_pos, leave_to_upper = \
                    self._ratio_test(enter, direction, col)
                if step is None:
                    if not allow_unbounded:
                        raise NumericalFailure("unbounded phase-1 subproblem")
                    self.ray = (enter, direction, col.copy())
                    return "unbounded"
                if leave_pos is None or abs(col[leave_pos]) >= STABLE_PIVOT:
                    break
                if banned is None:
                    banned = np.zeros(self.total, dtype=bool)
                banned[enter] = True
                mag = abs(col[leave_pos])
                if fallback is None or mag > fallback[0]:
                    fallback = (mag, enter, direction, col, step,
                                leave_pos, leave_to_upper)
            self.iterations += 1
            if step <= DEGENERATE_STEP:
                self.degenerate_streak += 1
                if self.degenerate_streak >= BLAND_TRIGGER:
                    self.bland = True
            else:
                self.degenerate_streak = 0
                self.bland = self.start_bland

            if leave_pos is None:
                # Bound flip: the entering variable crosses its whole range
                # and lands exactly on the opposite bound.
                if self.m:
                    self.x[self.basis] -= direction * step * col
                self.x[enter] = (self.c.hi[enter] if direction > 0
                                 else self.c.lo[enter])
                self.at_upper[enter] = direction > 0
            else:
                self._pivot(enter, direction, step, col, leave_pos,
                            leave_to_upper)

    def _ratio_test(self, enter, direction, col):
        """Largest step before a bound blocks; None, None, None if unbounded.

        Two-pass (Harris) test: each blocking bound is first relaxed by
        RATIO_TOL to find the largest step no row overshoots by more than
        that, then the numerically best pivot among rows whose exact limit
        fits under it is chosen. Tiny pivots on degenerate steps otherwise
        wreck the basis conditioning while achieving nothing.
        """
        span = self.c.hi[enter] - self.c.lo[enter]
        if self.m:
            delta = -direction * col
            xb = self.x[self.basis]
            lob = self.c.lo[self.basis]
            hib = self.c.hi[self.basis]
            slack = np.full(self.m, np.inf)
            dec = (delta < -PIVOT_TOL) & np.isfinite(lob)
            slack[dec] = xb[dec] - lob[dec]
            inc = (delta > PIVOT_TOL) & np.isfinite(hib)
            slack[inc] = hib[inc] - xb[inc]
            np.maximum(slack, 0.0, out=slack)
            blocking = np.isfinite(slack)
            limits = np.full(self.m, np.inf)
            absd = np.abs(delta[blocking])
            limits[blocking] = slack[blocking] / absd
            row_best = float(limits.min()) if limits.size else np.inf
        else:
            delta = col
            blocking = np.zeros(0, dtype=bool)
            row_best = np.inf

        if span <= row_best:
            if np.isinf(span):
                return None, None, None
            return span, None, None

        theta = float(((slack[blocking] + RATIO_TOL) / absd).min())
        theta = min(theta, float(span))
        cand = np.flatnonzero(blocking & (limits <= theta))
        if self.bland:
            pos = int(cand[np.argmin(self.basis[cand])])
        else:
            mags = np.abs(col[cand])
            best_mag = mags.max()
            close = cand[mags >= best_mag - 1e-12]
            pos = int(close[np.argmin(self.basis[close])])
        return float(limits[pos]), pos, bool(delta[pos] > 0)

    def _pivot(self, enter, direction, step, col, leave_pos, leave_to_upper):
        leave = self.basis[leave_pos]
        self.x[self.basis] -= direction * step * col
        self.x[enter] += direction * step
        self.x[leave] = self.c.hi[leave] if leave_to_upper else self.c.lo[leave]
        self.at_upper[leave] = leave_to_upper
        self.basis[leave_pos] = enter
        self.in_basis[leave] = False
        self.in_basis[enter] = True
        piv = col[leave_pos]
        if abs(piv) < PIVOT_TOL:
            raise _BasisBreakdown("vanishing pivot element")
        row = self.binv[leave_pos] / piv
        self.binv -= np.outer(col, row)
        self.binv[leave_pos] = row
        self.pivots_since_refactor += 1
        if self.pivots_since_refactor >= self.refactor_every:
            self._refactor()

    def duals(self, cost):
        if self.m == 0:
            return np.zeros(0)
        return cost[self.basis] @ self.binv

    def dual_phase(self, cost, max_pivots):
        """Pivot basic variables that violate their bounds out of the basis.

        Assumes the basis already prices out for `cost` (as a basis optimal
        for the same objective under different bounds does) and works like
        the dual simplex method: the most violated basic variable leaves at
        the bound it overshot, and the entering column is chosen by a
        two-pass ratio test over the reduced costs so their signs are
        preserved. Returns "feasible" once every basic variable is within
        its bounds, "infeasible" when some violated row admits no entering
        column (the row then certifies that no point within the current
        bounds exists), or "stalled" at the pivot budget.
        """
        for _ in range(max_pivots + 1):
            xb = self.x[self.basis]
            lob = self.c.lo[self.basis]
            hib = self.c.hi[self.basis]
            viol = np.maximum(lob - xb - FEAS_TOL * (1.0 + np.abs(lob)),
                              xb - hib - FEAS_TOL * (1.0 + np.abs(hib)))
            r = int(np.argmax(viol)) if self.m else 0
            if self.m == 0 or viol[r] <= 0.0:
                return "feasible"
            below = xb[r] < lob[r]
            target = lob[r] if below else hib[r]
            alpha = self.binv[r] @ self.c.T
            movable = ~self.in_basis & (self.c.hi > self.c.lo)
            sigma = -1.0 if below else 1.0
            # Moving an eligible nonbasic into its box shifts the violated
            # variable toward the bound it overshot.
            elig = movable & (np.abs(alpha) > PIVOT_TOL) \
                & ((alpha * sigma > 0) != self.at_upper)
            if not elig.any():
                if viol[r] > INFEAS_DECISIVE * (1.0 + abs(target)):
                    return "infeasible"
                return "stalled"
            stable = elig & (np.abs(alpha) >= STABLE_PIVOT)
            if not stable.any():
                # Only noise-floor pivots remain; a fresh solve is safer
                # than conditioning the basis on one.
                return "stalled"
            d = cost - (cost[self.basis] @ self.binv) @ self.c.T
            idx = np.flatnonzero(stable)
            # Clip tiny wrong-signed reduced costs so drift cannot produce
            # negative ratios.
            rc = np.where(self.at_upper[idx], np.minimum(d[idx], 0.0),
                          np.maximum(d[idx], 0.0))
            rc = np.abs(rc)
            aj = np.abs(alpha[idx])
            theta = float(((rc + DUAL_RATIO_TOL) / aj).min())
            cand = idx[rc / aj <= theta]
            mags = np.abs(alpha[cand])
            close = cand[mags >= mags.max() - 1e-12]
            enter = int(close[0])
            col = self.binv @ self.c.T[:, enter]
            t = (xb[r] - target) / alpha[enter]
            self.iterations += 1
            self._pivot(enter, 1.0 if t >= 0 else -1.0, abs(t), col, r,
                        not below)
        return "stalled"


def solve_lp(lp: LinearProgram, max_iterations: int | None = None) -> LpSolution:
    """Solve an LP, returning primal and dual information.

    Raises NumericalFailure on iteration cap or an unrecoverable basis;
    infeasible and unbounded outcomes are reported through the status
    field. A basis breakdown (error accumulated in the maintained inverse)
    is retried with exact refactorization after every pivot, then once
    more under Bland's rule, whose different pivot path avoids the spot
    where the first two attempts went singular.
    """
    return _solve_with_retries(lp, max_iterations)[0]


def _solve_with_retries(lp, max_iterations):
    try:
        return _run_two_phase(lp, max_iterations, REFACTOR_EVERY)
    except _BasisBreakdown:
        pass
    try:
        return _run_two_phase(lp, max_iterations, 1)
    except _BasisBreakdown:
        return _run_two_phase(lp, max_iterations, 1, start_bland=True)


def _run_two_phase(lp, max_iterations, refactor_every, start_bland=False):
    """Canonicalize and solve from scratch; returns (solution, simplex, canon).

    The simplex object is handed back so callers re-solving the same program
    under different variable bounds can warm start from its final basis.
    """
    canon = _canonicalize(lp)
    m, total = canon.T.shape
    if max_iterations is None:
        max_iterations = 2000 + 80 * (m + total)
    sx = _Simplex(canon, max_iterations, refactor_every, start_bland)

    if (canon.artificial_cols >= 0).any():
        sx.run_phase(canon.cost1, allow_unbounded=False)
        phase1 = float(canon.cost1[sx.basis] @ sx.x[sx.basis])
        if phase1 > 1e-7 * (1.0 + float(np.abs(canon.rhs).sum())):
            farkas = _map_duals(lp, canon, sx.duals(canon.cost1))
            sol = LpSolution(status="infeasible", iterations=sx.iterations,
                             farkas=farkas)
            return sol, sx, canon
        _expel_artificials(sx, canon)
        # Freeze every artificial at zero for phase 2.
        for a in canon.artificial_cols:
            if a >= 0:
                canon.hi[a] = 0.0
                if not sx.in_basis[a]:
                    sx.x[a] = 0.0
                    sx.at_upper[a] = False

    status = sx.run_phase(canon.cost2, allow_unbounded=True)
    if status == "unbounded":
        ray = _build_ray(lp, canon, sx)
        sol = LpSolution(status="unbounded", objective_value=-np.inf,
                         iterations=sx.iterations, ray=ray)
        return sol, sx, canon

    sx._refactor()
    sol = _extract_optimal(lp, canon, sx)
    return sol, sx, canon


def _extract_optimal(lp, canon, sx):
    primal = _map_primal(lp, canon, sx.x)
    duals = _map_duals(lp, canon, sx.duals(canon.cost2))
    reduced = lp.objective - lp.row_coeffs.T @ duals
    obj = float(lp.objective @ primal)
    return LpSolution(status="optimal", objective_value=obj, primal=primal,
                      duals=duals, reduced_costs=reduced,
                      iterations=sx.iterations)


class BranchLpSolver:
    """Re-solves one program under changing variable bounds.

    Branch and bound solves thousands of copies of the same LP differing
    only in a few variable bounds. The root is solved once from scratch;
    every later solve restores a caller-supplied basis snapshot (normally
    the parent node's), applies the node's bounds, lets `dual_phase` repair
    primal feasibility, and certifies the result with an ordinary primal
    pass, which typically prices out immediately. A basis that is optimal
    for the parent stays dual feasible for the child because bounds appear
    in neither the objective nor the rows, so the repair usually takes a
    handful of pivots where a cold solve would redo phase 1 in full. Any
    numerical trouble falls back to a cold `solve_lp`, making every
    solution exactly as trustworthy as the cold path's.
    """

    def __init__(self, lp: LinearProgram, max_iterations: int | None = None):
        self.lp = lp
        sol, sx, canon = _solve_with_retries(lp, max_iterations)
        self.root = sol
        self._sx = sx
        self._canon = canon
        self._ready = sol.status == "optimal"
        self.root_state = None
        if self._ready:
            self._cap = (2000 + 80 * (sx.m + sx.total)
                         if max_iterations is None else max_iterations)
            # Structural column of each original variable; bounds of split
            # (free) variables cannot be rebound in place.
            self._col_of = np.array(
                [parts[0][0] if len(parts) == 1 else -1
                 for parts in canon.var_map], dtype=int)
            self._cur_lo = lp.lower.copy()
            self._cur_hi = lp.upper.copy()
            self.root_state = self.snapshot()

    def snapshot(self):
        """Basis snapshot usable to warm start a later solve."""
        return self._sx.basis.copy(), self._sx.at_upper.copy()

    def solve(self, lower, upper, state):
        """Solve under the given bounds, warm starting from `state`.

        Returns (solution, descendant_state). The state echoes the input
        whenever the warm path could not be used, so descendants warm
        start from the nearest successfully solved ancestor instead.
        """
        if state is None or not self._ready:
            return solve_lp(self.lp.with_bounds(lower, upper)), state
        try:
            sol = self._resolve(lower, upper, state)
        except NumericalFailure:
            sol = None
        if sol is None:
            return solve_lp(self.lp.with_bounds(lower, upper)), state
        if sol.status != "optimal":
            return sol, state
        return sol, self.snapshot()

    def _resolve(self, lower, upper, state):
        sx, canon = self._sx, self._canon
        changed = np.flatnonzero((lower != self._cur_lo)
                                 | (upper != self._cur_hi))
        cols = self._col_of[changed]
        if (cols < 0).any():
            return None
        canon.lo[cols] = lower[changed]
        canon.hi[cols] = upper[changed]
        self._cur_lo[changed] = lower[changed]
        self._cur_hi[changed] = upper[changed]

        basis, at_upper = state
        sx.basis[:] = basis
        sx.at_upper[:] = at_upper
        sx.in_basis[:] = False
        sx.in_basis[sx.basis] = True
        nb = ~sx.in_basis
        sx.x[nb] = np.where(sx.at_upper[nb], canon.hi[nb], canon.lo[nb])
        if not np.isfinite(sx.x[nb]).all():
            return None
        sx.iterations = 0
        sx.max_iterations = self._cap
        sx.degenerate_streak = 0
        sx.start_bland = False
        sx.bland = False
        sx.ray = None
        sx.refactor_every = REFACTOR_EVERY
        sx._refactor()

        status = sx.dual_phase(canon.cost2, max_pivots=300 + sx.m)
        if status == "stalled":
            return None
        if status == "infeasible":
            return LpSolution(status="infeasible", iterations=sx.iterations)
        if sx.run_phase(canon.cost2, allow_unbounded=True) == "unbounded":
            # Tightening bounds cannot unbound the program; treat as noise.
            return None
        sx._refactor()
        return _extract_optimal(self.lp, canon, sx)


def _expel_artificials(sx: _Simplex, canon: _Canonical):
    """Pivot basic artificials out where possible.

    An artificial that cannot be pivoted out sits on a redundant row; it
    stays basic at zero and is frozen there by its bounds.
    """
    first_art = canon.n_struct + sx.m
    for pos in range(sx.m):
        if sx.basis[pos] < first_art:
            continue
        if abs(sx.x[sx.basis[pos]]) > FEAS_TOL:
            continue
        row = sx.binv[pos] @ sx.c.T[:, :first_art]
        for j in np.argsort(-np.abs(row)):
            if abs(row[j]) <= 1e-7:
                break
            if sx.in_basis[j] or canon.hi[j] <= canon.lo[j]:
                continue
            col = sx.binv @ sx.c.T[:, j]
            sx._pivot(int(j), 1.0, 0.0, col, pos, False)
            break


def _map_primal(lp, canon, x):
    primal = np.zeros(lp.num_vars)
    for j, parts in enumerate(canon.var_map):
        primal[j] = sum(sign * x[col] for col, sign in parts)
    return primal


def _map_duals(lp, canon, y):
    duals = np.zeros(lp.num_rows)
    for k, parts in enumerate(canon.row_map):
        duals[k] = sum(y[r] * factor for r, factor in parts)
    return duals


def _build_ray(lp, canon, sx):
    enter, direction, col = sx.ray
    d = np.zeros(sx.total)
    d[enter] = direction
    if sx.m:
        d[sx.basis] = -direction * col
    ray = np.zeros(lp.num_vars)
    for j, parts in enumerate(canon.var_map):
        ray[j] = sum(sign * d[c] for c, sign in parts)
    norm = np.max(np.abs(ray))
    return ray / norm if norm > 0 else ray


def check_solution(lp: LinearProgram, sol: LpSolution, tol: float = 1e-7):
    """Verify feasibility, dual signs, complementary slackness and the gap.

    Returns a list of human-readable violation descriptions; an empty list
    means the solution passed every check at the given tolerance.
    """
    problems = []
    if sol.status != "optimal":
        return ["solution status is not optimal"]
    x, y, r = sol.primal, sol.duals, sol.reduced_costs
    if (x < lp.lower - tol).any() or (x > lp.upper + tol).any():
        problems.append("primal violates variable bounds")
    act = lp.row_coeffs @ x
    for k in range(lp.num_rows):
        b = lp.row_rhs[k]
        slack_scale = tol * (1.0 + abs(b))
        rel = lp.row_relations[k]
        if rel == "<=":
            if act[k] - b > slack_scale:
                problems.append(f"row {k} violated (<=)")
            if y[k] > tol:
                problems.append(f"row {k} dual sign (expected <= 0)")
            if y[k] < -tol and b - act[k] > slack_scale:
                problems.append(f"row {k} complementary slackness")
        elif rel == ">=":
            if b - act[k] > slack_scale:
                problems.append(f"row {k} violated (>=)")
            if y[k] < -tol:
                problems.append(f"row {k} dual sign (expected >= 0)")
            if y[k] > tol and act[k] - b > slack_scale:
                problems.append(f"row {k} complementary slackness")
        else:
            if abs(act[k] - b) > slack_scale:
                problems.append(f"row {k} violated (=)")
    expected_r = lp.objective - lp.row_coeffs.T @ y
    if np.max(np.abs(expected_r - r)) > tol * (1.0 + np.abs(lp.objective).max()):
        problems.append("reduced costs inconsistent with duals")
    bound_term = 0.0
    for j in range(lp.num_vars):
        rj = r[j]
        if rj > tol:
            if not np.isfinite(lp.lower[j]):
                problems.append(f"var {j} positive reduced cost, free below")
            elif x[j] - lp.lower[j] > tol * (1.0 + abs(lp.lower[j])):
                problems.append(f"var {j} complementary slackness (lower)")
            else:
                bound_term += rj * lp.lower[j]
        elif rj < -tol:
            if not np.isfinite(lp.upper[j]):
                problems.append(f"var {j} negative reduced cost, free above")
            elif lp.upper[j] - x[j] > tol * (1.0 + abs(lp.upper[j])):
                problems.append(f"var {j} complementary slackness (upper)")
            else:
                bound_term += rj * lp.upper[j]
    if not problems:
        dual_obj = float(y @ lp.row_rhs) + bound_term
        gap = abs(dual_obj - sol.objective_value)
        if gap > 1e-7 * (1.0 + abs(sol.objective_value)):
            problems.append(f"duality gap {gap:.3e}")
    return problems


def dump_lp(lp: LinearProgram) -> str:
    """Readable text rendering, mainly for debugging small programs."""
    def vname(j):
        return lp.names[j] if lp.names else f"x{j}"

    lines = ["minimize"]
    terms = [f"{lp.objective[j]:+g} {vname(j)}"
             for j in range(lp.num_vars) if lp.objective[j] != 0.0]
    lines.append("  " + (" ".join(terms) if terms else "0"))
    lines.append("subject to")
    for k in range(lp.num_rows):
        terms = [f"{lp.row_coeffs[k, j]:+g} {vname(j)}"
                 for j in range(lp.num_vars) if lp.row_coeffs[k, j] != 0.0]
        lines.append(f"  {' '.join(terms) if terms else '0'} "
                     f"{lp.row_relations[k]} {lp.row_rhs[k]:g}")
    lines.append("bounds")
    for j in range(lp.num_vars):
        lines.append(f"  {lp.lower[j]:g} <= {vname(j)} <= {lp.upper[j]:g}")
    return "\n".join(lines)
