"""
test_trainer.py - Optimizer recipe, batch streams, training runs and evaluation
"""

import math

import numpy as np
import pytest
from numpy.testing import assert_array_equal

import trainer
from data import LabeledSet, gen_task
from dicts import METRICS_HEADER
from models import ModelConfig, init_model, load_checkpoint, save_checkpoint
from objectives import ConfigError, LIRRConfig, LabeledBatch, loss_dependent, loss_invariant
from scenarios import make_scenario
from trainer import (
    BatchSampler,
    DivergenceError,
    OptimConfig,
    evaluate,
    predict,
    sgd_step,
    train,
    write_metrics_csv,
)
from diffcore import DimensionError, Graph, ParameterError

SMALL = dict(encoder_hidden=(8,), z_dim=4, head_hidden=8)


def small_task(kind="conditional_shift", seed=0):
    return gen_task(make_scenario(kind), n=200, m=20, k=150, seed=seed, test_size=100)


def small_model_cfg(task_kind="classification"):
    return ModelConfig(task_kind=task_kind, **SMALL)


def quick_run(method, task=None, iters=30, lirr=None, seed=0):
    task = task or small_task()
    lirr = lirr or LIRRConfig(task_kind=task.task_kind)
    optim = OptimConfig(total_iters=iters, batch_size=16, seed=seed)
    return train(method, task, lirr, optim, small_model_cfg(task.task_kind))


# ----------------------------------------------------------------------
# Optimizer
# ----------------------------------------------------------------------
@pytest.mark.parametrize("kwargs", [dict(lr=0.0), dict(momentum=1.0), dict(momentum=-0.1), dict(weight_decay=-1.0),
                                    dict(total_iters=0), dict(batch_size=0), dict(decay_fraction=1.5)])
def test_optim_config_validation(kwargs):
    with pytest.raises(ConfigError):
        OptimConfig(**kwargs)


def test_learning_rate_schedule():
    cfg = OptimConfig(lr=1e-3, total_iters=4000)
    assert cfg.decay_iter == 3000
    assert cfg.lr_at(2999) == 1e-3
    assert cfg.lr_at(3000) == 1e-3 * 0.1
    assert cfg.lr_at(3999) == 1e-3 * 0.1


def test_zero_gradient_leaves_params():
    params = {"w": np.array([[1.5, -2.0]])}
    out = sgd_step(params, {"w": np.zeros((1, 2))}, {}, lr=0.1, momentum=0.9, weight_decay=0.0)
    assert_array_equal(out["w"], params["w"])


def test_plain_gradient_step():
    params = {"w": np.array([[1.0, 2.0]])}
    grads = {"w": np.array([[0.5, -1.0]])}
    out = sgd_step(params, grads, {}, lr=0.1, momentum=0.0, weight_decay=0.0)
    assert_array_equal(out["w"], params["w"] - 0.1 * grads["w"])


def test_two_steps_on_quadratic():
    # f(p) = p^2, grad 2p; p0 = 1, lr .1, momentum .9, decay .01
    params = {"p": np.array([[1.0]])}
    velocity = {}
    for _ in range(2):
        params = sgd_step(params, {"p": 2.0 * params["p"]}, velocity, lr=0.1, momentum=0.9, weight_decay=0.01)
    v1 = 2.0 + 0.01
    p1 = 1.0 - 0.1 * v1
    v2 = 0.9 * v1 + 2.0 * p1 + 0.01 * p1
    assert params["p"].item() == pytest.approx(p1 - 0.1 * v2, abs=1e-12)
    assert velocity["p"].item() == pytest.approx(v2, abs=1e-12)


def test_sgd_shape_errors():
    with pytest.raises(DimensionError):
        sgd_step({"w": np.zeros((2, 2))}, {"w": np.zeros((1, 2))}, {}, 0.1, 0.0, 0.0)
    with pytest.raises(ParameterError):
        sgd_step({"w": np.zeros((2, 2))}, {}, {}, 0.1, 0.0, 0.0)


# ----------------------------------------------------------------------
# Evaluation
# ----------------------------------------------------------------------
def _constant_classifier(label):
    model = init_model(small_model_cfg(), seed=3)
    model.params["fi.1.W"] = np.zeros_like(model.params["fi.1.W"])
    model.params["fi.1.b"] = np.array([[1.0, 0.0]]) if label == 0 else np.array([[0.0, 1.0]])
    return model


def test_evaluate_perfect_and_constant(rng):
    model = init_model(small_model_cfg(), seed=3)
    x = rng.normal(size=(40, 2))
    assert evaluate(model, LabeledSet(x, predict(model, x), "target")) == 1.0
    balanced = LabeledSet(x, np.tile([0, 1], 20), "target")
    assert evaluate(_constant_classifier(0), balanced) == 0.5


def test_evaluate_matches_confusion_matrix(rng):
    model = init_model(small_model_cfg(), seed=4)
    x = rng.normal(size=(200, 2))
    y = rng.integers(0, 2, size=200)
    pred = predict(model, x)
    confusion = np.zeros((2, 2))
    np.add.at(confusion, (y, pred), 1)
    assert evaluate(model, LabeledSet(x, y, "target")) == pytest.approx(np.trace(confusion) / 200)


def test_evaluate_regression_mae(rng):
    model = init_model(small_model_cfg("regression"), seed=1)
    model.params["fi.1.W"] = np.zeros_like(model.params["fi.1.W"])
    model.params["fi.1.b"] = np.array([[0.25]])
    y = rng.normal(size=30)
    data = LabeledSet(rng.normal(size=(30, 2)), y, "target")
    assert evaluate(model, data) == pytest.approx(np.mean(np.abs(0.25 - y)), rel=1e-12)


def test_evaluate_empty_set():
    with pytest.raises(ParameterError):
        evaluate(init_model(small_model_cfg(), 0), LabeledSet(np.zeros((0, 2)), np.zeros(0), "target"))


def test_domain_head_scores_tagged_sets(rng):
    model = init_model(small_model_cfg(), seed=6)
    model.eval_head = "domain"
    x = rng.normal(size=(60, 2))
    y = rng.integers(0, 2, size=60)
    for tag, flag in (("source", 0), ("target", 1)):
        expected = np.mean(model.predict_domain(x, flag).argmax(axis=1) == y)
        assert evaluate(model, LabeledSet(x, y, tag)) == pytest.approx(expected)
    # no domain flag: the invariant predictor
    assert_array_equal(predict(model, x), model.predict(x).argmax(axis=1))


def test_invariant_head_ignores_domain_flag(rng):
    model = init_model(small_model_cfg(), seed=6)
    x = rng.normal(size=(30, 2))
    assert_array_equal(predict(model, x, 1), predict(model, x))


# ----------------------------------------------------------------------
# Batches
# ----------------------------------------------------------------------
def test_sampler_streams_are_reproducible():
    task = small_task()
    a, b = BatchSampler(task, 16, seed=5), BatchSampler(task, 16, seed=5)
    for _ in range(3):
        first, second = a.next(), b.next()
        assert_array_equal(first.source.x, second.source.x)
        assert_array_equal(first.target_labeled.y, second.target_labeled.y)
        assert_array_equal(first.target_unlabeled, second.target_unlabeled)
    assert first.sizes == (16, 16, 16)


def test_labeled_target_batch_comes_from_labeled_set():
    task = small_task()
    batch = BatchSampler(task, 64, seed=0).next()
    labeled = {tuple(row) for row in task.target_labeled.features}
    assert all(tuple(row) in labeled for row in batch.target_labeled.x)


def test_oracle_sampler_uses_pool_labels():
    task = small_task()
    batch = BatchSampler(task, 32, seed=0, oracle_target=True).next()
    assert len(batch.source) == 0
    lookup = {tuple(x): y for x, y in zip(task.target_unlabeled.features, task.target_unlabeled.oracle_labels)}
    assert all(lookup[tuple(x)] == y for x, y in zip(batch.target_labeled.x, batch.target_labeled.y))


# ----------------------------------------------------------------------
# Training
# ----------------------------------------------------------------------
def test_unknown_method_and_kind_mismatch():
    task = small_task()
    with pytest.raises(ConfigError):
        quick_run("cdan", task)
    with pytest.raises(ConfigError):
        train("lirr", task, LIRRConfig(task_kind="regression"), OptimConfig(total_iters=2), small_model_cfg())


def test_run_is_deterministic():
    first, second = quick_run("lirr"), quick_run("lirr")
    assert first.iterations == second.iterations == 30
    assert (first.src_metric, first.tgt_metric) == (second.src_metric, second.tgt_metric)
    for name, value in first.model.params.items():
        assert_array_equal(value, second.model.params[name])
    assert [r.l_total for r in first.reports] == [r.l_total for r in second.reports]


def test_zero_lambda_lirr_matches_s_plus_t():
    task = small_task("label_shift")
    lirr = quick_run("lirr", task, iters=40, lirr=LIRRConfig(lambda_risk=0.0, lambda_rep=0.0, eval_head="invariant"))
    plain = quick_run("s_plus_t", task, iters=40)
    assert [r.l_i for r in lirr.reports] == [r.l_i for r in plain.reports]
    for name, value in plain.model.params.items():
        if name.startswith(("g.", "fi.")):
            assert_array_equal(lirr.model.params[name], value)
    assert (lirr.src_metric, lirr.tgt_metric) == (plain.src_metric, plain.tgt_metric)


@pytest.mark.parametrize("method", ["dann", "irm", "risk_only", "full_t", "lirr_cosc"])
def test_every_method_trains(method):
    record = quick_run(method, iters=20)
    assert record.status == "ok"
    assert record.iterations == 20
    assert 0.0 <= record.tgt_metric <= 1.0
    assert record.model.is_finite()
    if method == "lirr_cosc":
        assert record.model.head_kind == "cosine"
    if method == "irm":
        assert all(math.isfinite(r.penalty) and r.penalty >= 0.0 for r in record.reports)


def test_checkpoint_keeps_trained_coefficients(tmp_path):
    record = quick_run("lirr", iters=5, lirr=LIRRConfig(lambda_risk=0.01, lambda_rep=0.1))
    path = str(tmp_path / "model.ckpt")
    save_checkpoint(record.model, path)
    loaded, _ = load_checkpoint(path)
    assert (loaded.grl_lambda_risk, loaded.grl_lambda_rep) == (0.01, 0.1)
    assert loaded.eval_head == "domain"
    assert_array_equal(predict(loaded, small_task().test_target.features, 1),
                       predict(record.model, small_task().test_target.features, 1))


@pytest.mark.parametrize("method,expected", [("dann", (0.0, 0.5)), ("risk_only", (0.2, 0.0)),
                                             ("s_plus_t", (0.0, 0.0))])
def test_reversal_coefficients_follow_the_method(method, expected):
    record = quick_run(method, iters=2, lirr=LIRRConfig(lambda_risk=0.2, lambda_rep=0.5))
    assert (record.model.grl_lambda_risk, record.model.grl_lambda_rep) == expected


def test_baselines_keep_the_invariant_head():
    assert quick_run("dann", iters=2).model.eval_head == "invariant"
    assert quick_run("lirr_cosc", iters=2).model.eval_head == "invariant"
    assert quick_run("lirr", iters=2, lirr=LIRRConfig(eval_head="invariant")).model.eval_head == "invariant"


def test_regression_run_reports_mae():
    record = quick_run("lirr", small_task("regression_sine_shift"), iters=20)
    assert record.tgt_metric >= 0.0


def test_learning_rate_decays_in_record():
    record = quick_run("s_plus_t", iters=40)
    assert record.lrs[29] == OptimConfig().lr
    assert record.lrs[30] == OptimConfig().lr * 0.1


def test_divergence_aborts_with_record(monkeypatch):
    monkeypatch.setattr(trainer, "DIVERGENCE_LIMIT", 1e-9)
    with pytest.raises(DivergenceError) as err:
        quick_run("lirr")
    assert err.value.record.status == "diverged"
    assert err.value.record.iterations == 0


def test_metrics_csv_layout(tmp_path):
    record = quick_run("lirr", iters=10)
    path = tmp_path / "metrics.csv"
    write_metrics_csv(record, str(path))
    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(METRICS_HEADER)
    assert len(lines) == 12
    assert lines[-1].startswith("final,")
    assert float(lines[1].split(",")[-1]) == OptimConfig().lr


# ----------------------------------------------------------------------
# Acceptance scale
# ----------------------------------------------------------------------
@pytest.mark.slow
def test_s_plus_t_learns_separable_source():
    task = gen_task(make_scenario("covariate_shift"), 2000, 100, 2000, seed=0, test_size=2000)
    record = train("s_plus_t", task, optim_cfg=OptimConfig(total_iters=2000))
    assert record.src_metric > 0.95


@pytest.mark.slow
def test_zero_lambda_degeneracy_full_length():
    task = gen_task(make_scenario("conditional_shift"), 2000, 100, 2000, seed=1, test_size=500)
    lirr = train("lirr", task, LIRRConfig(lambda_risk=0.0, lambda_rep=0.0, eval_head="invariant"))
    plain = train("s_plus_t", task)
    assert [r.l_i for r in lirr.reports] == [r.l_i for r in plain.reports]
    assert (lirr.src_metric, lirr.tgt_metric) == (plain.src_metric, plain.tgt_metric)


@pytest.mark.slow
def test_domain_aware_predictor_fits_at_least_as_well():
    task = gen_task(make_scenario("conditional_shift"), 2000, 100, 2000, seed=2, test_size=1000)
    model = train("s_plus_t", task, optim_cfg=OptimConfig(total_iters=1500)).model
    # f_d starts as a copy of f_i with a silent domain channel, so L_d == L_i before it trains
    fd_first = np.zeros_like(model.params["fd.0.W"])
    fd_first[: model.z_dim] = model.params["fi.0.W"]
    model.params["fd.0.W"] = fd_first
    for name in model.params:
        if name.startswith("fd.") and name != "fd.0.W":
            model.params[name] = model.params["fi" + name[2:]].copy()

    sampler = BatchSampler(task, 64, seed=9)
    velocity = {}
    for _ in range(400):
        graph = Graph()
        binding = model.bind(graph)
        batches = sampler.next()
        loss = loss_dependent(binding, batches.source, batches.target_labeled)
        grads = binding.gradients(graph.backward(loss))
        fd = {name: value for name, value in model.params.items() if name.startswith("fd.")}
        model.params.update(sgd_step(fd, grads, velocity, lr=1e-3, momentum=0.9, weight_decay=0.0))

    source = LabeledBatch(*task.scenario.sample(0, 1000, np.random.default_rng(21)))
    target = LabeledBatch(task.test_target.features, task.test_target.labels)
    held_d = loss_dependent(model.bind(Graph()), source, target).item()
    held_i = loss_invariant(model.bind(Graph()), source, target).item()
    assert held_d <= held_i + 0.01
