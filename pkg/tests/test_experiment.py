from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from expdnn.experiment import (
    CASE_IDS,
    DatasetSpec,
    DivergenceError,
    ExperimentConfig,
    explain,
    grad_check,
    run_case,
    table_network,
    train,
)
from expdnn.network import backward, init_params
from expdnn.numerics import RngState, ShapeError
from expdnn.optim import NadamHyper

PAPER_WEIGHTS = {
    "case1-1": {"g1": 1.2318, "g2": 0.5673},
    "case1-2": {"g1": 1.3499, "g2": 0.0544, "g3": 0.0520, "g4": 0.0515},
    "case1-3": {"g1": 1.0047, "g5": 1.3884, "g3": -0.6093, "g4": -0.6140},
    "case2-1": {"q1": 2.0086, "q2": 2.0086},
    "case2-2": {"q1": 1.9830, "q2": 1.9830, "q3": 1.0000, "q4": 1.7162},
    "case3": {"sepal_length": 0.8870, "sepal_width": 0.8834, "petal_length": 1.8384, "petal_width": 1.8925},
}


def short(case_setup, case_id, epochs=200, seed=0):
    return case_setup(case_id, seed, epochs)


# --- train ------------------------------------------------------------------


def test_zero_epochs_returns_init(case_setup):
    cfg, d = short(case_setup, "case1-1", epochs=0)
    result = train(cfg, d)
    init, _ = init_params(cfg.network, RngState(cfg.seed))
    assert result.params.vector.tobytes() == init.vector.tobytes()
    assert result.loss_history == [(0, result.final_loss)]


def test_training_is_bitwise_deterministic(case_setup):
    cfg, d = short(case_setup, "case3", epochs=300)
    a, b = train(cfg, d), train(cfg, d)
    assert a.params.vector.tobytes() == b.params.vector.tobytes()
    assert a.loss_history == b.loss_history


def test_loss_history_layout(case_setup):
    cfg, d = short(case_setup, "case2-1", epochs=2500)
    result = train(replace(cfg, loss_log_stride=1000), d)
    assert [e for e, _ in result.loss_history] == [0, 1000, 2000, 2500]
    assert result.loss_history[-1][1] == result.final_loss


@pytest.mark.parametrize("case_id", CASE_IDS)
def test_training_reduces_loss(case_setup, case_id):
    cfg, d = short(case_setup, case_id, epochs=500)
    result = train(cfg, d)
    assert result.final_loss < result.loss_history[0][1]


def test_zero_column_weight_frozen_in_training(case_setup):
    cfg, d = short(case_setup, "case2-2", epochs=2000)
    result = train(cfg, d)
    assert result.params.explainable_weights[2] == 1.0
    assert result.params.explainable_weights[0] != 1.0


def test_divergence_is_reported(case_setup):
    cfg, d = short(case_setup, "case1-1", epochs=50)
    cfg = replace(cfg, optimizer=NadamHyper(learning_rate=1e300))
    with pytest.raises(DivergenceError) as info:
        train(cfg, d)
    assert 0 < info.value.epoch <= 50


def test_config_feature_count_must_match():
    cfg = ExperimentConfig(
        network=table_network(2, 1, "linear"),
        dataset=DatasetSpec(builtin="case1"),
        selected_features=("g1", "g2", "g3"),
    )
    with pytest.raises(ShapeError, match="2 inputs"):
        cfg.prepare()


def test_standardize_flag(case_setup):
    cfg, _ = case_setup("case3")
    d = replace(cfg, standardize=True).prepare()
    np.testing.assert_allclose(d.features.mean(axis=0), 0.0, atol=1e-12)


# --- explain ----------------------------------------------------------------


def test_explain_case1_1_reference_values():
    w = PAPER_WEIGHTS["case1-1"]
    report = explain(np.array(list(w.values())), list(w))
    assert report.ranking() == ["g1", "g2"]


def test_explain_case1_3_reference_values():
    w = PAPER_WEIGHTS["case1-3"]
    report = explain(np.array(list(w.values())), list(w))
    assert report.ranking() == ["g5", "g1", "g4", "g3"]
    g4 = report.by_feature()["g4"]
    assert g4.weight == -0.6140 and g4.abs_weight == 0.6140 and g4.rank == 3


def test_explain_case3_reference_values():
    w = PAPER_WEIGHTS["case3"]
    report = explain(np.array(list(w.values())), list(w))
    assert report.ranking() == ["petal_width", "petal_length", "sepal_length", "sepal_width"]


def test_explain_ties_follow_input_order():
    report = explain(np.array([1.0, -1.0, 1.0]), ["c", "a", "b"])
    assert report.ranking() == ["c", "a", "b"]
    assert [e.rank for e in report.entries] == [1, 2, 3]


def test_explain_count_mismatch():
    with pytest.raises(ShapeError):
        explain(np.array([1.0, 2.0]), ["a"])


weights = st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=1, max_size=8)


@given(weights)
def test_report_invariants(ws):
    names = [f"x{i}" for i in range(len(ws))]
    report = explain(np.array(ws), names)
    assert sorted(e.rank for e in report.entries) == list(range(1, len(ws) + 1))
    for e in report.entries:
        assert e.abs_weight == abs(e.weight)
    absw = [e.abs_weight for e in report.entries]
    assert all(a >= b for a, b in zip(absw, absw[1:]))


@given(weights, st.floats(1e-3, 1e3))
def test_ranking_invariant_under_positive_scaling(ws, c):
    w = np.array(ws)
    # scaling can merge or split near-ties through rounding; compare only clear orders
    order = explain(w, range(len(ws))).ranking()
    scaled = explain(w * c, range(len(ws))).ranking()
    mags = np.abs(w)
    for i, j in zip(order, order[1:]):
        if mags[i] > mags[j] * (1 + 1e-12):
            assert scaled.index(i) < scaled.index(j)


# --- grad_check -------------------------------------------------------------


@pytest.mark.parametrize("case_id", ["case1-1", "case3"])
def test_grad_check_passes(case_setup, case_id):
    cfg, d = case_setup(case_id)
    report = grad_check(cfg, d, step=1e-6, tolerance=1e-5)
    assert report.passed, report
    assert report.offending_parameter is None


def test_grad_check_detects_sign_flip(case_setup):
    cfg, d = case_setup("case1-1")

    def corrupted(params, config, trace, targets):
        g = backward(params, config, trace, targets)
        g.hidden_weights[1][0, 1] *= -1.0
        return g

    report = grad_check(cfg, d, backward_fn=corrupted)
    assert not report.passed
    assert report.offending_parameter == "hidden_weights[1][0,1]"


def test_grad_check_leaves_symmetric_point(case_setup):
    from expdnn.experiment import perturbed_params

    cfg, _ = case_setup("case1-1")
    p = perturbed_params(cfg, 0)
    assert np.all(p.explainable_weights != 1.0)
    assert len(set(p.hidden_weights[0].ravel().tolist())) > 1


# --- run_case ---------------------------------------------------------------


def test_run_case_unknown_id():
    with pytest.raises(ValueError, match="case1-1, case1-2"):
        run_case("case4", [0])


def test_run_case_needs_seeds():
    with pytest.raises(ValueError):
        run_case("case1-1", [])


def test_run_case_structure():
    outcome = run_case("case2-2", [3, 1], epochs=300)
    assert [r.seed for r in outcome.runs] == [3, 1]
    assert all(r.weight("q3") == 1.0 for r in outcome.runs)
    assert outcome.checks[0].fraction_satisfied == 1.0
    assert 0.0 <= outcome.aggregate <= 1.0


def test_run_case_parallel_matches_serial():
    a = run_case("case1-1", [0, 1], epochs=200, workers=1)
    b = run_case("case1-1", [0, 1], epochs=200, workers=2)
    for ra, rb in zip(a.runs, b.runs):
        assert ra.report == rb.report and ra.final_loss == rb.final_loss


def test_case_builds_table_architecture(case_setup):
    cfg, d = case_setup("case3")
    net = cfg.network
    assert net.hidden_sizes == (4, 4, 4)
    assert [a.value for a in net.hidden_activations] == ["linear", "tanh", "tanh"]
    assert net.output_activation.value == "softmax" and net.n_outputs == 3
    assert net.loss.value == "categorical_cross_entropy"
    assert d.feature_names == ("sepal_length", "sepal_width", "petal_length", "petal_width")
    cfg, d = case_setup("case1-3")
    assert d.feature_names == ("g1", "g5", "g3", "g4")
    assert cfg.network.loss.value == "mse"
