"""Evasion attacks with an l2 budget against a linear reference model.

For a linear classifier the most damaging direction for a point is the
closed-form -y*w/||w||, so the stepping loop exists to respect the
projection structure rather than to search. Points keep their labels; only
features move, and never further than the budget from where they started.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .data import LabeledDataset
from .errors import DegenerateReference, MalformedProblem
from .svm import INTERCEPT_CAP, train_inner_svm

DEFAULT_MAX_ITERS = 20


@dataclass(frozen=True)
class AttackConfig:
    """Budget, step schedule, and target rows for one attack run.

    step_size None means one tenth of the budget, which together with the
    default iteration count always reaches the ball boundary.
    """

    rho: float
    target_indices: np.ndarray
    step_size: Optional[float] = None
    max_iters: int = DEFAULT_MAX_ITERS

    def __post_init__(self):
        if not np.isfinite(self.rho) or self.rho < 0:
            raise MalformedProblem("rho must be finite and nonnegative")
        if self.step_size is not None and not self.step_size > 0:
            raise MalformedProblem("step_size must be positive")
        if self.max_iters < 1:
            raise MalformedProblem("max_iters must be at least 1")
        targets = np.unique(np.asarray(self.target_indices, dtype=int))
        if targets.size and targets[0] < 0:
            raise MalformedProblem("target indices must be nonnegative")
        object.__setattr__(self, "target_indices", targets)

    def resolved_step(self):
        if self.step_size is not None:
            return float(self.step_size)
        return self.rho / 10.0

    def sidecar_json(self, seed):
        """JSON provenance blob written next to a perturbed CSV."""
        return json.dumps({"rho": float(self.rho), "seed": int(seed),
                           "target_indices": self.target_indices.tolist()})


def train_reference_svm(train, c, intercept_cap=INTERCEPT_CAP):
    """Soft-margin reference classifier with the uniform box [-c, c]."""
    if not c > 0:
        raise DegenerateReference(
            "box level c must be positive; c = 0 trains the zero model")
    w_bar = np.full(train.features.shape[1], float(c))
    return train_inner_svm(train.features, train.labels, w_bar,
                           intercept_cap=intercept_cap)


def select_margin_targets(model, data):
    """Rows strictly inside the model's margin band, |f(x)| < 1."""
    scores = model.decision_values(data.features)
    return np.flatnonzero(np.abs(scores) < 1.0)


def perturb(points, model, config):
    """Push targeted rows across the boundary within the l2 budget.

    Each step moves a target along -y*w/||w|| and re-projects onto the
    ball around its original position, so the reference model's hinge
    loss at the point never decreases. Untargeted rows and all labels
    pass through untouched; zero budget or no targets returns the input
    as is.
    """
    w = np.asarray(model.w, dtype=float).ravel()
    norm = float(np.linalg.norm(w))
    if norm == 0.0:
        raise DegenerateReference("reference model has w = 0")
    targets = config.target_indices
    n = points.features.shape[0]
    if targets.size and targets[-1] >= n:
        raise MalformedProblem(
            f"target index {targets[-1]} out of range for {n} rows")
    if config.rho == 0.0 or targets.size == 0:
        return points

    step = config.resolved_step()
    moved = points.features.copy()
    origin = moved[targets].copy()
    # Per-target unit direction; label sign decides which side to flee.
    direction = -np.outer(points.labels[targets], w / norm)
    block = origin.copy()
    for _ in range(config.max_iters):
        block += step * direction
        offset = block - origin
        dist = np.linalg.norm(offset, axis=1)
        over = dist > config.rho
        if over.any():
            block[over] = (origin[over]
                           + offset[over] * (config.rho / dist[over])[:, None])
    moved[targets] = block
    return LabeledDataset(moved, points.labels,
                          feature_names=points.feature_names,
                          standardization=points.standardization)
