"""Linear classifier primitives: hinge losses, the box-constrained training
LP, and the validation-set partition used by the adversarial tuner.

A model is the pair (w, b) classifying x by sign(x.w - b). Training minimizes
the mean hinge loss subject to a componentwise box |w_j| <= w_bar_j, so the
box vector w_bar acts as the tunable regularization hyperparameter.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .errors import DimensionMismatch, MalformedProblem, NumericalFailure
from .lp import LinearProgram, solve_lp

# |b| is capped so every constant derived from the model stays finite.
INTERCEPT_CAP = 1e3
FEAS_TOL = 1e-6


def _as_features(x, dim):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.ndim != 1 or x.shape[0] != dim:
        raise DimensionMismatch(
            f"expected a feature vector of length {dim}, got shape {x.shape}")
    return x


@dataclass(frozen=True)
class HyperBounds:
    """Componentwise search box for the regularization vector w_bar."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.atleast_1d(np.asarray(self.lower, dtype=float))
        upper = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lower.ndim != 1 or lower.shape != upper.shape:
            raise MalformedProblem("bound vectors must share one dimension")
        if not (np.isfinite(lower).all() and np.isfinite(upper).all()):
            raise MalformedProblem("bounds must be finite")
        if (lower < 0).any():
            raise MalformedProblem("lower bounds must be nonnegative")
        if (lower > upper).any():
            raise MalformedProblem("need lower <= upper componentwise")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def num_features(self):
        return self.lower.shape[0]

    @classmethod
    def box(cls, num_features, upper=1.0, lower=0.0):
        """Uniform bounds, the common experimental setting."""
        return cls(np.full(num_features, float(lower)),
                   np.full(num_features, float(upper)))


@dataclass(frozen=True)
class SvmModel:
    """A linear classifier, optionally carrying its training certificates.

    xi is the training slack vector of the LP that produced the model and
    w_bar the box that constrained it; when both are absent the model is just
    a bare hyperplane. The box invariant is checked at construction.
    """

    w: np.ndarray
    b: float
    xi: Optional[np.ndarray] = None
    w_bar: Optional[np.ndarray] = None

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.w, dtype=float))
        if w.ndim != 1:
            raise MalformedProblem("w must be a vector")
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "b", float(self.b))
        if self.xi is not None:
            object.__setattr__(self, "xi",
                               np.atleast_1d(np.asarray(self.xi, float)))
        if self.w_bar is not None:
            w_bar = np.atleast_1d(np.asarray(self.w_bar, dtype=float))
            if w_bar.shape != w.shape:
                raise DimensionMismatch("w_bar and w must share a dimension")
            if (np.abs(w) > w_bar + FEAS_TOL).any():
                raise MalformedProblem("w violates its own box -w_bar..w_bar")
            object.__setattr__(self, "w_bar", w_bar)

    @property
    def num_features(self):
        return self.w.shape[0]

    def decision_values(self, features):
        """x.w - b for one feature vector or a stack of rows."""
        features = np.asarray(features, dtype=float)
        if features.ndim == 1:
            return float(_as_features(features, self.num_features) @ self.w
                         - self.b)
        if features.ndim != 2 or features.shape[1] != self.num_features:
            raise DimensionMismatch(
                f"expected rows of length {self.num_features}, "
                f"got shape {features.shape}")
        return features @ self.w - self.b


def hinge_loss(model, x, y):
    """max(0, 1 - y (x.w - b)) for a single labeled point."""
    return max(0.0, 1.0 - float(y) * model.decision_values(x))


def zero_one_margin_loss(model, x, y):
    """1 when the point is misclassified or inside the margin, else 0.

    The boundary y (x.w - b) = 1 counts as outside (strict inequality).
    """
    return int(float(y) * model.decision_values(x) < 1.0)


def mean_hinge_loss(model, features, labels):
    """Mean hinge loss over a dataset slice."""
    values = model.decision_values(np.atleast_2d(np.asarray(features, float)))
    labels = np.asarray(labels, dtype=float).ravel()
    if labels.shape[0] != values.shape[0]:
        raise DimensionMismatch("feature rows and labels differ in length")
    return float(np.mean(np.maximum(0.0, 1.0 - labels * values)))


def accuracy(model, features, labels):
    """Fraction of points with y sign(x.w - b) > 0.

    A decision value of exactly zero counts as a misclassification for both
    labels, so the all-zero model scores 0.
    """
    values = model.decision_values(np.atleast_2d(np.asarray(features, float)))
    labels = np.asarray(labels, dtype=float).ravel()
    if labels.shape[0] == 0:
        raise MalformedProblem("accuracy of an empty slice is undefined")
    if labels.shape[0] != values.shape[0]:
        raise DimensionMismatch("feature rows and labels differ in length")
    return float(np.mean(labels * np.sign(values) > 0))


class TrainingLp(NamedTuple):
    """The box-constrained training LP plus its variable layout."""

    lp: LinearProgram
    w: slice
    b: int
    xi: slice


def build_training_lp(features, labels, w_bar, intercept_cap=INTERCEPT_CAP):
    """LP minimizing mean training slack subject to hinge rows and the box.

    Variables are laid out as [w_0..w_{p-1}, b, xi_0..xi_{n-1}]; w_j is
    boxed to [-w_bar_j, w_bar_j] through variable bounds so its reduced
    costs expose the box multipliers directly.
    """
    features = np.atleast_2d(np.asarray(features, dtype=float))
    labels = np.asarray(labels, dtype=float).ravel()
    n, p = features.shape
    if labels.shape[0] != n:
        raise DimensionMismatch("feature rows and labels differ in length")
    if n == 0:
        raise MalformedProblem("cannot train on an empty slice")
    w_bar = np.atleast_1d(np.asarray(w_bar, dtype=float))
    if w_bar.shape[0] != p:
        raise DimensionMismatch("w_bar length must equal the feature count")
    if (w_bar < 0).any():
        raise MalformedProblem("w_bar must be nonnegative")

    total = p + 1 + n
    objective = np.zeros(total)
    objective[p + 1:] = 1.0 / n
    lower = np.concatenate([-w_bar, [-intercept_cap], np.zeros(n)])
    upper = np.concatenate([w_bar, [intercept_cap], np.full(n, np.inf)])
    rows = np.zeros((n, total))
    # y_i (x_i . w - b) + xi_i >= 1
    rows[:, :p] = labels[:, None] * features
    rows[:, p] = -labels
    rows[np.arange(n), p + 1 + np.arange(n)] = 1.0
    names = ([f"w{j}" for j in range(p)] + ["b"]
             + [f"xi{i}" for i in range(n)])
    lp = LinearProgram(objective, rows, [">="] * n, np.ones(n),
                       lower, upper, names=names)
    return TrainingLp(lp, slice(0, p), p, slice(p + 1, total))


def train_inner_svm(features, labels, w_bar, intercept_cap=INTERCEPT_CAP):
    """Train the box-constrained soft classifier by solving its LP.

    Returns the model with its slack vector and box attached; the optimal
    mean training hinge loss is mean(model.xi).
    """
    layout = build_training_lp(features, labels, w_bar, intercept_cap)
    solution = solve_lp(layout.lp)
    if solution.status != "optimal":
        raise NumericalFailure(
            f"training LP ended with status {solution.status}")
    x = solution.primal
    return SvmModel(w=x[layout.w], b=x[layout.b], xi=x[layout.xi],
                    w_bar=np.atleast_1d(np.asarray(w_bar, float)))


@dataclass(frozen=True)
class FlipSets:
    """Partition of validation indices by a reference model's margin.

    v1 holds in-margin points, v2 out-of-margin correct ones, v3
    out-of-margin misclassified ones; v_f is the subset whose labels the
    pessimistic formulation flips.
    """

    v1: np.ndarray
    v2: np.ndarray
    v3: np.ndarray
    v_f: np.ndarray

    def __post_init__(self):
        parts = []
        for name in ("v1", "v2", "v3", "v_f"):
            arr = np.asarray(getattr(self, name), dtype=int).ravel()
            object.__setattr__(self, name, arr)
            parts.append(arr)
        v1, v2, v3, v_f = parts
        union = np.concatenate([v1, v2, v3])
        n = union.shape[0]
        if n == 0:
            raise MalformedProblem("the validation partition is empty")
        if not np.array_equal(np.sort(union), np.arange(n)):
            raise MalformedProblem(
                "v1, v2, v3 must partition the validation indices")
        if v_f.size and (not np.array_equal(np.unique(v_f), np.sort(v_f))
                         or v_f.min() < 0 or v_f.max() >= n):
            raise MalformedProblem("v_f must be a set of validation indices")

    @property
    def num_points(self):
        return self.v1.size + self.v2.size + self.v3.size


FLIP_MODES = ("margin_plus_misclassified", "all", "threshold")


def compute_flip_sets(reference, features, labels,
                      mode="margin_plus_misclassified", train_size=None):
    """Partition validation points by the reference model and pick v_f.

    Membership uses the functional margin f = x.w - b: |f| < 1 is in-margin
    (strict, so |f| = 1 is out). mode selects the flip set: the default
    flips in-margin plus misclassified points, "all" flips everything, and
    "threshold" flips everything unless both the training set (train_size)
    and the validation set are comfortably large.
    """
    if mode not in FLIP_MODES:
        raise MalformedProblem(f"unknown flip mode {mode!r}")
    features = np.atleast_2d(np.asarray(features, dtype=float))
    labels = np.asarray(labels, dtype=float).ravel()
    values = reference.decision_values(features)
    if labels.shape[0] != values.shape[0]:
        raise DimensionMismatch("feature rows and labels differ in length")
    margins = labels * values
    in_margin = np.abs(values) < 1.0
    v1 = np.flatnonzero(in_margin)
    v2 = np.flatnonzero(~in_margin & (margins >= 1.0))
    v3 = np.flatnonzero(~in_margin & (margins <= -1.0))
    if mode == "threshold":
        if train_size is None:
            raise MalformedProblem(
                "threshold mode needs the training set size")
        mode = ("margin_plus_misclassified"
                if train_size > 20 and labels.shape[0] > 15 else "all")
    if mode == "all":
        v_f = np.arange(labels.shape[0])
    else:
        v_f = np.sort(np.concatenate([v1, v3]))
    return FlipSets(v1=v1, v2=v2, v3=v3, v_f=v_f)
