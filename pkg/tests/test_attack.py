"""Attack config, reference training, targeting, and perturbation."""

import json

import numpy as np
import pytest
from oracles import lp_minimum_by_vertex_enumeration

from pbtune import errors
from pbtune.attack import (
    AttackConfig,
    perturb,
    select_margin_targets,
    train_reference_svm,
)
from pbtune.data import LabeledDataset
from pbtune.svm import SvmModel, build_training_lp, hinge_loss, mean_hinge_loss


def make_points(features, labels):
    return LabeledDataset(np.asarray(features, float),
                          np.asarray(labels, float))


def random_points(rng, n, p):
    x = rng.normal(size=(n, p)) * rng.uniform(0.5, 2.0)
    y = np.where(rng.random(n) < 0.5, 1.0, -1.0)
    y[0], y[1] = 1.0, -1.0
    return make_points(x, y)


def test_config_validation():
    AttackConfig(rho=0.0, target_indices=[])
    with pytest.raises(errors.MalformedProblem):
        AttackConfig(rho=-0.1, target_indices=[])
    with pytest.raises(errors.MalformedProblem):
        AttackConfig(rho=0.5, target_indices=[], step_size=0.0)
    with pytest.raises(errors.MalformedProblem):
        AttackConfig(rho=0.5, target_indices=[], max_iters=0)
    with pytest.raises(errors.MalformedProblem):
        AttackConfig(rho=0.5, target_indices=[-1])


def test_config_default_step_and_sidecar():
    config = AttackConfig(rho=0.4, target_indices=[2, 0, 2])
    assert config.resolved_step() == pytest.approx(0.04)
    np.testing.assert_array_equal(config.target_indices, [0, 2])
    raw = json.loads(config.sidecar_json(seed=7))
    assert raw == {"rho": 0.4, "seed": 7, "target_indices": [0, 2]}


def test_reference_svm_separable_pair():
    train = make_points([[-1.5], [1.5]], [-1.0, 1.0])
    model = train_reference_svm(train, c=1.0)
    assert np.mean(model.xi) == pytest.approx(0.0, abs=1e-9)
    assert mean_hinge_loss(model, train.features, train.labels) \
        == pytest.approx(0.0, abs=1e-9)


def test_reference_svm_rejects_zero_box():
    train = make_points([[-1.0], [1.0]], [-1.0, 1.0])
    with pytest.raises(errors.DegenerateReference):
        train_reference_svm(train, c=0.0)
    with pytest.raises(errors.DegenerateReference):
        train_reference_svm(train, c=-1.0)


def test_reference_svm_matches_vertex_oracle():
    rng = np.random.default_rng(17)
    train = random_points(rng, 6, 2)
    c = 0.8
    layout = build_training_lp(train.features, train.labels,
                               np.full(2, c), intercept_cap=5.0)
    oracle_obj, _ = lp_minimum_by_vertex_enumeration(layout.lp)
    model = train_reference_svm(train, c, intercept_cap=5.0)
    assert np.mean(model.xi) == pytest.approx(oracle_obj, abs=1e-8)


def test_margin_target_selection_is_strict():
    model = SvmModel(w=[1.0], b=0.0)
    data = make_points([[0.3], [1.5], [1.0], [-0.999], [-1.0]],
                       [1.0, 1.0, -1.0, -1.0, 1.0])
    np.testing.assert_array_equal(select_margin_targets(model, data), [0, 3])


def test_perturb_zero_budget_is_identity():
    data = make_points([[0.2, -1.0], [0.5, 0.25]], [1.0, -1.0])
    model = SvmModel(w=[1.0, -0.5], b=0.1)
    out = perturb(data, model, AttackConfig(rho=0.0, target_indices=[0, 1]))
    assert out is data


def test_perturb_empty_targets_is_identity():
    data = make_points([[0.2], [0.5]], [1.0, -1.0])
    model = SvmModel(w=[1.0], b=0.0)
    out = perturb(data, model, AttackConfig(rho=0.3, target_indices=[]))
    assert out is data


def test_perturb_one_dimensional_closed_form():
    # x0 = 1, y = +1, w = 1, b = 0: the harm direction is -1 and the
    # budget stops the point at exactly 0.5.
    data = make_points([[1.0]], [1.0])
    model = SvmModel(w=[1.0], b=0.0)
    out = perturb(data, model, AttackConfig(rho=0.5, target_indices=[0]))
    assert out.features[0, 0] == pytest.approx(0.5, abs=1e-12)
    assert out.labels[0] == 1.0


def test_perturb_rejects_zero_model_and_bad_targets():
    data = make_points([[1.0]], [1.0])
    with pytest.raises(errors.DegenerateReference):
        perturb(data, SvmModel(w=[0.0], b=0.0),
                AttackConfig(rho=0.5, target_indices=[0]))
    with pytest.raises(errors.MalformedProblem):
        perturb(data, SvmModel(w=[1.0], b=0.0),
                AttackConfig(rho=0.5, target_indices=[3]))


def test_perturb_budget_and_harm_invariants():
    rng = np.random.default_rng(12345)
    for _ in range(100):
        n = int(rng.integers(2, 9))
        p = int(rng.integers(1, 4))
        data = random_points(rng, n, p)
        w = rng.normal(size=p)
        while np.linalg.norm(w) == 0.0:
            w = rng.normal(size=p)
        model = SvmModel(w=w, b=float(rng.normal()))
        rho = float(rng.uniform(0.0, 1.2))
        k = int(rng.integers(0, n + 1))
        targets = rng.choice(n, size=k, replace=False)
        config = AttackConfig(rho=rho, target_indices=targets)
        out = perturb(data, model, config)
        shift = np.linalg.norm(out.features - data.features, axis=1)
        assert (shift <= rho + 1e-12).all()
        np.testing.assert_array_equal(out.labels, data.labels)
        untargeted = np.setdiff1d(np.arange(n), config.target_indices)
        np.testing.assert_array_equal(out.features[untargeted],
                                      data.features[untargeted])
        for i in config.target_indices:
            before = hinge_loss(model, data.features[i], data.labels[i])
            after = hinge_loss(model, out.features[i], out.labels[i])
            assert after >= before - 1e-12


def test_perturb_monotone_harm_along_steps():
    data = make_points([[0.8, -0.2]], [1.0])
    model = SvmModel(w=[2.0, 1.0], b=0.0)
    last = hinge_loss(model, data.features[0], 1.0)
    for iters in range(1, 8):
        config = AttackConfig(rho=0.6, target_indices=[0],
                              step_size=0.05, max_iters=iters)
        out = perturb(data, model, config)
        now = hinge_loss(model, out.features[0], 1.0)
        assert now >= last - 1e-12
        last = now
