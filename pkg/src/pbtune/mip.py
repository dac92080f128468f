"""Mixed-integer linear programming via best-first branch and bound.

Binary variables ride on the LP core from `pbtune.lp`: each node fixes a
subset of them through variable bounds and solves the relaxation with the
same deterministic simplex, warm started from the parent node's basis, so
identical inputs always explore identical trees. Complementarity conditions (products of nonnegative affine
expressions forced to zero) are linearized with one binary and two rows
apiece; the constants used in those rows are recorded so a solve can be
audited for binding linearization caps afterwards.
"""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass

import numpy as np

from .errors import MalformedProblem, NodeLimitExceeded, NumericalFailure
from .lp import BranchLpSolver, LinearProgram, solve_lp

INT_TOL = 1e-6
ROW_TOL = 1e-7


@dataclass(frozen=True)
class ComplementarityPair:
    """Record of one linearized product constraint.

    Both sides are affine in the LP variables and must be nonnegative at any
    feasible point; `z_index` is the switching binary, and `m_left`/`m_right`
    are the caps used in the rows  left <= m_left * z  and
    right <= m_right * (1 - z).
    """

    name: str
    left_terms: tuple
    left_const: float
    right_terms: tuple
    right_const: float
    m_left: float
    m_right: float
    z_index: int
    # Which sides use a heuristic cap (as opposed to a bound that provably
    # dominates the expression); only those count as "binding" in the audit.
    guard_left: bool = False
    guard_right: bool = False

    def left_value(self, x):
        return self.left_const + sum(c * x[j] for j, c in self.left_terms)

    def right_value(self, x):
        return self.right_const + sum(c * x[j] for j, c in self.right_terms)


@dataclass
class MipProblem:
    lp: LinearProgram
    binaries: tuple
    pairs: tuple = ()

    def __post_init__(self):
        n = self.lp.num_vars
        self.binaries = tuple(int(j) for j in self.binaries)
        for j in self.binaries:
            if not 0 <= j < n:
                raise MalformedProblem(f"binary index {j} out of range")
            if self.lp.lower[j] < -1e-12 or self.lp.upper[j] > 1.0 + 1e-12:
                raise MalformedProblem(
                    f"binary variable {j} must have bounds within [0, 1]")
        if len(set(self.binaries)) != len(self.binaries):
            raise MalformedProblem("duplicate binary index")


@dataclass
class MipSolution:
    status: str
    objective_value: float = np.nan
    primal: np.ndarray | None = None
    node_count: int = 0
    best_bound: float = -np.inf
    lp_iterations: int = 0


class MipBuilder:
    """Incremental constructor for LPs and MIPs with named variables."""

    def __init__(self):
        self._lo, self._hi, self._cost, self._names = [], [], [], []
        self._index = {}
        self._rows = []        # (terms, rel, rhs)
        self._binaries = []
        self._pairs = []

    def add_var(self, name, lo=-np.inf, hi=np.inf, cost=0.0):
        if name in self._index:
            raise MalformedProblem(f"duplicate variable name {name!r}")
        j = len(self._lo)
        self._index[name] = j
        self._lo.append(float(lo))
        self._hi.append(float(hi))
        self._cost.append(float(cost))
        self._names.append(name)
        return j

    def add_binary(self, name):
        j = self.add_var(name, 0.0, 1.0, 0.0)
        self._binaries.append(j)
        return j

    def __getitem__(self, name):
        return self._index[name]

    @property
    def num_vars(self):
        return len(self._lo)

    def add_row(self, terms, rel, rhs):
        """terms is a list of (index, coefficient) pairs; zeros are kept."""
        self._rows.append((tuple(terms), rel, float(rhs)))

    def add_complementarity(self, name, left_terms, left_const,
                            right_terms, right_const, m_left, m_right,
                            guard_left=False, guard_right=False):
        """Force (affine left) * (affine right) = 0 with one binary.

        Both sides must be nonnegative for every feasible point; the caller
        is responsible for that invariant and `validate_big_m` audits it on
        solutions. Caps must be positive and finite. A side whose cap is
        merely heuristic should set its guard flag so the audit treats
        near-cap values as binding.
        """
        if not (np.isfinite(m_left) and np.isfinite(m_right)
                and m_left > 0 and m_right > 0):
            raise MalformedProblem(
                f"complementarity {name!r} needs positive finite caps")
        z = self.add_binary(f"_z[{name}]")
        left_terms = tuple((int(j), float(c)) for j, c in left_terms)
        right_terms = tuple((int(j), float(c)) for j, c in right_terms)
        # left <= m_left * z
        self.add_row(list(left_terms) + [(z, -m_left)], "<=", -left_const)
        # right <= m_right * (1 - z)
        self.add_row(list(right_terms) + [(z, m_right)], "<=",
                     m_right - right_const)
        self._pairs.append(ComplementarityPair(
            name=name, left_terms=left_terms, left_const=float(left_const),
            right_terms=right_terms, right_const=float(right_const),
            m_left=float(m_left), m_right=float(m_right), z_index=z,
            guard_left=bool(guard_left), guard_right=bool(guard_right)))
        return z

    def build(self, objective=None):
        n = self.num_vars
        if objective is None:
            objective = np.array(self._cost, dtype=float)
        coeffs = np.zeros((len(self._rows), n))
        rels, rhs = [], []
        for i, (terms, rel, b) in enumerate(self._rows):
            for j, c in terms:
                coeffs[i, j] += c
            rels.append(rel)
            rhs.append(b)
        lp = LinearProgram(objective, coeffs, rels, rhs,
                           np.array(self._lo), np.array(self._hi),
                           names=self._names)
        return MipProblem(lp=lp, binaries=tuple(self._binaries),
                          pairs=tuple(self._pairs))


def _is_integral(x, binaries):
    return all(abs(x[j] - round(x[j])) <= INT_TOL for j in binaries)


def _point_feasible(lp, x):
    if (x < lp.lower - 1e-9).any() or (x > lp.upper + 1e-9).any():
        return False
    act = lp.row_coeffs @ x
    for k, rel in enumerate(lp.row_relations):
        slack = ROW_TOL * (1.0 + abs(lp.row_rhs[k]))
        if rel == "<=" and act[k] - lp.row_rhs[k] > slack:
            return False
        if rel == ">=" and lp.row_rhs[k] - act[k] > slack:
            return False
        if rel == "=" and abs(act[k] - lp.row_rhs[k]) > slack:
            return False
    return True


def _rows_touching(lp, binaries):
    touch = {}
    for j in binaries:
        touch[j] = np.flatnonzero(lp.row_coeffs[:, j] != 0.0)
    return touch


def _repair_rounding(lp, binaries, touch, sol, lower, upper):
    """Round fractional binaries greedily and keep the result if feasible.

    Each fractional binary picks the 0/1 value with the smaller total
    positive violation over the rows it appears in, holding everything else
    at the relaxation values. The candidate is then checked against the full
    program; None is returned when the check fails.
    """
    x = sol.primal.copy()
    act = lp.row_coeffs @ x

    def set_value(j, v):
        old = x[j]
        if v != old:
            for k in touch[j]:
                act[k] += lp.row_coeffs[k, j] * (v - old)
            x[j] = v

    def penalty(j):
        pen = 0.0
        for k in touch[j]:
            rel = lp.row_relations[k]
            if rel == "<=":
                pen += max(0.0, act[k] - lp.row_rhs[k])
            elif rel == ">=":
                pen += max(0.0, lp.row_rhs[k] - act[k])
            else:
                pen += abs(act[k] - lp.row_rhs[k])
        return pen

    for j in binaries:
        if upper[j] - lower[j] <= INT_TOL:
            set_value(j, lower[j])
            continue
        if abs(x[j] - round(x[j])) <= INT_TOL:
            set_value(j, round(x[j]))
            continue
        set_value(j, 0.0)
        pen0 = penalty(j)
        set_value(j, 1.0)
        pen1 = penalty(j)
        if pen0 <= pen1 + 1e-12:
            set_value(j, 0.0)
    if _point_feasible(lp, x):
        return x
    return None


def solve_mip(problem: MipProblem, node_limit: int = 10 ** 6,
              initial: np.ndarray | None = None) -> MipSolution:
    """Best-first branch and bound over the problem's binary variables.

    Nodes are explored in bound order with deeper nodes first on ties;
    branching picks the most fractional binary, lowest index on ties. The
    node count equals the number of relaxations explored in the tree; one
    further solve re-derives the winner's continuous part. An optional
    `initial` point seeds the incumbent if it is feasible and integral.
    """
    lp = problem.lp
    binaries = problem.binaries
    if not binaries:
        sol = solve_lp(lp)
        return MipSolution(status=sol.status,
                           objective_value=sol.objective_value,
                           primal=sol.primal, node_count=1,
                           best_bound=sol.objective_value,
                           lp_iterations=sol.iterations)

    touch = _rows_touching(lp, binaries)
    inc_obj = np.inf
    inc_x = None
    if initial is not None:
        cand = np.asarray(initial, dtype=float)
        if cand.shape == (lp.num_vars,) and _is_integral(cand, binaries) \
                and _point_feasible(lp, cand):
            inc_obj = float(lp.objective @ cand)
            inc_x = cand.copy()

    def better(bound):
        if inc_x is None:
            return True
        return bound < inc_obj - 1e-9 * (1.0 + abs(inc_obj))

    counter = itertools.count()
    heap = []
    nodes = 0
    lp_iters = 0
    best_bound_seen = np.inf

    def consider(sol, lower, upper, depth, state):
        """Process a solved relaxation; push if it still needs branching."""
        nonlocal inc_obj, inc_x
        if sol.status == "infeasible":
            return
        if sol.status == "unbounded":
            heapq.heappush(heap, (-np.inf, -depth, next(counter),
                                  lower, upper, None, None))
            return
        bound = sol.objective_value
        if not better(bound):
            return
        if _is_integral(sol.primal, binaries):
            x = sol.primal.copy()
            for j in binaries:
                x[j] = round(x[j])
            if _point_feasible(lp, x):
                obj = float(lp.objective @ x)
                if obj < inc_obj - 1e-12:
                    inc_obj, inc_x = obj, x
                return
            if all(upper[j] - lower[j] <= 0.5 for j in binaries):
                # Leaf relaxation: the LP point is feasible by construction
                # and its binaries sit exactly on their fixed bounds, so the
                # rounded-point check can only fail on tolerance noise.
                if bound < inc_obj - 1e-12:
                    inc_obj, inc_x = bound, sol.primal.copy()
                return
            # Rounding nudged a near-integral binary across a big-M row;
            # branch to force exact integrality instead.
        else:
            repaired = _repair_rounding(lp, binaries, touch, sol, lower, upper)
            if repaired is not None:
                obj = float(lp.objective @ repaired)
                if obj < inc_obj - 1e-12:
                    inc_obj, inc_x = obj, repaired.copy()
                if not better(bound):
                    return
        heapq.heappush(heap, (bound, -depth, next(counter),
                              lower, upper, sol, state))

    warm = BranchLpSolver(lp)
    root = warm.root
    nodes += 1
    lp_iters += root.iterations
    if root.status == "infeasible":
        return MipSolution(status="infeasible", node_count=nodes,
                           lp_iterations=lp_iters)
    consider(root, lp.lower.copy(), lp.upper.copy(), 0, warm.root_state)

    while heap:
        bound, negdepth, _, lower, upper, sol, state = heapq.heappop(heap)
        if not better(bound):
            continue
        best_bound_seen = min(best_bound_seen, bound)
        if sol is None:
            # Unbounded relaxation: pin binaries until the LP makes sense.
            free = [j for j in binaries if upper[j] - lower[j] > 0.5]
            if not free:
                return MipSolution(status="unbounded",
                                   objective_value=-np.inf,
                                   node_count=nodes, lp_iterations=lp_iters)
            branch = free[0]
        else:
            fracs = [(abs(sol.primal[j] - round(sol.primal[j])), j)
                     for j in binaries
                     if upper[j] - lower[j] > 0.5
                     and abs(sol.primal[j] - round(sol.primal[j])) > INT_TOL]
            if not fracs:
                # Integral but the rounded point failed feasibility; split on
                # the first unfixed binary to force exact integrality.
                free = [j for j in binaries if upper[j] - lower[j] > 0.5]
                if not free:
                    continue
                branch = free[0]
            else:
                branch = max(fracs, key=lambda t: (t[0], -t[1]))[1]
        depth = -negdepth + 1
        for v in (0.0, 1.0):
            if nodes >= node_limit:
                raise NodeLimitExceeded(
                    f"gave up after {nodes} relaxations; incumbent "
                    f"{inc_obj if inc_x is not None else None}")
            lo2, hi2 = lower.copy(), upper.copy()
            lo2[branch] = v
            hi2[branch] = v
            child, child_state = warm.solve(lo2, hi2, state)
            nodes += 1
            lp_iters += child.iterations
            consider(child, lo2, hi2, depth, child_state)

    if inc_x is None:
        return MipSolution(status="infeasible", node_count=nodes,
                           lp_iterations=lp_iters)
    # Re-derive the winner's continuous part from a fresh solve with its
    # binaries pinned. Warm-started node vertices can park spare dual
    # freedom at linearization caps; a cold solve of the winning leaf keeps
    # the objective while landing on an ordinary vertex, and can only
    # improve an incumbent that came from rounding repair.
    lo2, hi2 = lp.lower.copy(), lp.upper.copy()
    for j in binaries:
        lo2[j] = hi2[j] = round(inc_x[j])
    try:
        leaf = solve_lp(lp.with_bounds(lo2, hi2))
    except NumericalFailure:
        leaf = None
    if leaf is not None and leaf.status == "optimal":
        lp_iters += leaf.iterations
        if leaf.objective_value <= inc_obj + 1e-9 * (1.0 + abs(inc_obj)):
            inc_obj = min(inc_obj, leaf.objective_value)
            inc_x = leaf.primal
    return MipSolution(status="optimal", objective_value=inc_obj,
                       primal=inc_x, node_count=nodes,
                       best_bound=min(best_bound_seen, inc_obj),
                       lp_iterations=lp_iters)


def validate_big_m(problem: MipProblem, primal: np.ndarray,
                   guard: float = 0.95, tol: float = 1e-6):
    """Audit a solution's complementarity pairs against their caps.

    Returns a list of findings; empty means the solution is trustworthy.
    Negative side values and non-complementary products are always reported
    (they indicate a modeling bug). A side near its cap is reported only
    when the pair flagged that side as guarded, i.e. its cap is a heuristic
    that could conceivably have clipped the true optimum.
    """
    findings = []
    for pair in problem.pairs:
        left = pair.left_value(primal)
        right = pair.right_value(primal)
        if left < -tol:
            findings.append(f"{pair.name}: left side negative ({left:.3e})")
        if right < -tol:
            findings.append(f"{pair.name}: right side negative ({right:.3e})")
        if pair.guard_left and left > guard * pair.m_left:
            findings.append(
                f"{pair.name}: left side {left:.6g} within "
                f"{(1 - guard) * 100:.0f}% of heuristic cap {pair.m_left:.6g}")
        if pair.guard_right and right > guard * pair.m_right:
            findings.append(
                f"{pair.name}: right side {right:.6g} within "
                f"{(1 - guard) * 100:.0f}% of heuristic cap {pair.m_right:.6g}")
        if min(left, right) > tol:
            findings.append(
                f"{pair.name}: product not complementary "
                f"(left {left:.3e}, right {right:.3e})")
    return findings
