import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from c3o.core import ClusterConfig, FeatureVector
from c3o.errors import FeatureMismatch, NotEnoughData, UnknownMachineType
from c3o.predictors import (
    default_reference,
    fit_scaleout,
    model_from_dict,
    model_to_dict,
    predict_optimistic,
    predict_pessimistic,
    scaleout_curve,
    train_optimistic,
    train_pessimistic,
)
from c3o.repository import CorrelationWeights, feature_weights
from c3o.simulator import builtin_specs, ground_truth_runtime

NS = ("node_count", "size_mb")


def fv(*values, names=NS):
    return FeatureVector(names, values)


def separable_points():
    # runtime = 50 * size_gb * (1 + 4/n)
    return [(fv(n, gb * 1000.0), 50.0 * gb * (1 + 4 / n)) for n in (1, 2, 4, 8) for gb in (10, 15, 20)]


# --- pessimistic -----------------------------------------------------------


def test_weighted_distance_matches_hand_evaluation():
    pts = [(fv(0.0, 0.0), 1.0), (fv(1.0, 1.0), 2.0), (fv(0.5, 0.5), 3.0)]
    model = train_pessimistic(pts, CorrelationWeights(NS, (1.0, 0.25)), k=3)
    d = model.distances(fv(0.0, 0.0))
    assert d[1] == pytest.approx(math.sqrt(1 * 1 + 0.25 * 1))
    assert d[1] == pytest.approx(1.1180, abs=1e-4)


def test_inverse_distance_example():
    pts = [(fv(0.0, names=("x",)), 100.0), (fv(1.0, names=("x",)), 200.0)]
    model = train_pessimistic(pts, CorrelationWeights(("x",), (1.0,)), k=2)
    # weights 1/0.25 and 1/0.75
    expected = (4 * 100 + (4 / 3) * 200) / (4 + 4 / 3)
    assert predict_pessimistic(model, fv(0.25, names=("x",))) == pytest.approx(expected)
    assert expected == pytest.approx(125.0)


def test_equidistant_neighbours_average():
    pts = [(fv(0.0, names=("x",)), 100.0), (fv(1.0, names=("x",)), 200.0)]
    model = train_pessimistic(pts, CorrelationWeights(("x",), (1.0,)), k=2)
    assert model.predict(fv(0.5, names=("x",))) == 150.0


def test_single_point_clamps_k():
    model = train_pessimistic([(fv(2.0, 1000.0), 7.0)], CorrelationWeights(NS, (0.0, 0.0)), k=3)
    assert model.k == 1
    assert model.predict(fv(4.0, 3000.0)) == 7.0


def test_zero_weights_fall_back_to_global_mean():
    pts = [(fv(n, 1000.0 * n), 10.0 * n) for n in (1, 2, 3, 4, 5)]
    model = train_pessimistic(pts, CorrelationWeights(NS, (0.0, 0.0)), k=3)
    assert model.predict(fv(9.0, 9.0)) == pytest.approx(30.0)


def test_machine_index_is_categorical():
    names = ("machine_type_index", "x")
    pts = [(fv(0.0, 0.0, names=names), 10.0), (fv(3.0, 0.0, names=names), 40.0), (fv(1.0, 1.0, names=names), 20.0)]
    model = train_pessimistic(pts, CorrelationWeights(names, (1.0, 1.0)), k=3)
    d = model.distances(fv(2.0, 0.0, names=names))
    # machine 2 differs from 0 and 3 by the same indicator, not by |2-0| vs |2-3|
    assert d[0] == d[1] == 1.0


def test_pessimistic_rejects_wrong_features():
    model = train_pessimistic([(fv(1.0, 1.0), 1.0)], CorrelationWeights(NS, (1.0, 1.0)))
    with pytest.raises(FeatureMismatch):
        model.predict(fv(1.0, names=("node_count",)))
    with pytest.raises(NotEnoughData):
        train_pessimistic([], CorrelationWeights(NS, (1.0, 1.0)))


point_sets = st.lists(
    st.tuples(st.integers(1, 16), st.sampled_from([1000.0, 2000.0, 5000.0]), st.floats(1.0, 1e6)),
    min_size=1,
    max_size=30,
    unique_by=lambda t: (t[0], t[1]),
)


@given(point_sets, st.integers(1, 5))
def test_pessimistic_reproduces_training_points_exactly(rows, k):
    pts = [(fv(float(n), s), rt) for n, s, rt in rows]
    model = train_pessimistic(pts, feature_weights(pts), k)
    for x, rt in pts:
        assert model.predict(x) == rt


@given(point_sets, st.integers(1, 16), st.floats(500.0, 6000.0))
def test_pessimistic_prediction_is_a_convex_combination(rows, qn, qs):
    pts = [(fv(float(n), s), rt) for n, s, rt in rows]
    model = train_pessimistic(pts, CorrelationWeights(NS, (1.0, 0.5)), 3)
    query = fv(float(qn), qs)
    nearest = np.argsort(model.distances(query), kind="stable")[: model.k]
    ys = model.train_y[nearest]
    p = model.predict(query)
    assert ys.min() * (1 - 1e-12) <= p <= ys.max() * (1 + 1e-12)


@given(point_sets, st.floats(0.01, 100.0), st.integers(1, 16), st.floats(500.0, 6000.0))
def test_pessimistic_scales_with_runtimes(rows, c, qn, qs):
    pts = [(fv(float(n), s), rt) for n, s, rt in rows]
    scaled = [(x, c * rt) for x, rt in pts]
    a = train_pessimistic(pts, feature_weights(pts), 3)
    b = train_pessimistic(scaled, feature_weights(scaled), 3)
    q = fv(float(qn), qs)
    assert b.predict(q) == pytest.approx(c * a.predict(q), rel=1e-9)


# --- scale-out fit ---------------------------------------------------------


def test_fit_scaleout_recovers_known_curve():
    pts = [(n, 100 + 200 / n) for n in (1, 2, 4, 8)]
    assert fit_scaleout(pts) == pytest.approx((100, 200, 0, 0), abs=1e-6)


def test_fit_scaleout_flat():
    theta = fit_scaleout([(2, 500.0), (4, 500.0)])
    assert theta == pytest.approx((500.0, 0.0, 0.0, 0.0), abs=1e-9)
    assert theta[2] == theta[3] == 0.0


def test_fit_scaleout_needs_two_node_counts():
    with pytest.raises(NotEnoughData):
        fit_scaleout([(4, 1.0), (4, 2.0)])


def test_pagerank_scaleout_is_flat():
    spec = builtin_specs()["pagerank"]
    data, params = {"size_mb": 280.0}, {"convergence_criterion": 0.001}
    pts = [(n, ground_truth_runtime(spec, ClusterConfig("m5.xlarge", n), data, params)) for n in range(2, 13)]
    theta = fit_scaleout(pts)
    assert theta[1] / theta[0] < 0.5


@given(
    st.tuples(*[st.floats(0.0, 100.0)] * 4).filter(lambda t: t[0] + t[1] > 1e-3),
    st.lists(st.integers(1, 64), min_size=4, max_size=12, unique=True),
)
def test_fit_scaleout_residual_is_negligible_in_span(theta, nodes):
    t = [float(scaleout_curve(theta, n)) for n in nodes]
    fitted = fit_scaleout(list(zip(nodes, t)))
    resid = np.array([float(scaleout_curve(fitted, n)) for n in nodes]) - t
    assert np.dot(resid, resid) <= 1e-8 * np.dot(t, t)


# --- optimistic ------------------------------------------------------------


def test_optimistic_separable_training_error():
    pts = separable_points()
    model = train_optimistic(pts)
    for x, rt in pts:
        assert abs(model.predict(x) - rt) / rt < 1e-3


@pytest.mark.parametrize("gb", [10, 15, 20])
def test_optimistic_extrapolates_node_count(gb):
    model = train_optimistic(separable_points())
    truth = 50.0 * gb * 1.25
    assert abs(model.predict(fv(16.0, gb * 1000.0)) - truth) / truth < 0.05


def test_constant_runtimes_give_unit_factors():
    pts = [(fv(n, s), 1000.0) for n in (2, 4, 8) for s in (1e3, 2e3)]
    model = train_optimistic(pts)
    assert model.reference_runtime == pytest.approx(1000.0)
    for f in model.feature_factors.values():
        assert np.allclose(f.factors, 1.0)
    assert model.scale_ratio(32.0) == pytest.approx(1.0)


def test_single_valued_feature_is_ignored():
    names = ("node_count", "size_mb", "k")
    pts = [(fv(n, s, 5.0, names=names), s / n) for n in (2, 4, 8) for s in (1e3, 2e3)]
    model = train_optimistic(pts)
    assert "k" not in model.feature_factors
    assert model.predict(fv(4.0, 1e3, 5.0, names=names)) == model.predict(fv(4.0, 1e3, 99.0, names=names))


def test_query_at_reference_returns_reference_runtime():
    model = train_optimistic(separable_points())
    assert model.predict(model.reference) == pytest.approx(model.reference_runtime, rel=1e-12)


def test_reference_is_coordinate_median_with_modal_machine():
    names = ("machine_type_index", "node_count")
    pts = [(fv(m, n, names=names), 1.0) for m, n in [(0, 2), (1, 4), (1, 8), (2, 16)]]
    ref = default_reference(pts)
    assert ref.values == (1.0, 6.0)


def test_unknown_machine_raises():
    names = ("machine_type_index", "node_count")
    pts = [(fv(m, n, names=names), 100.0 / n * (1 + m)) for m in (0, 1) for n in (2, 4, 8)]
    model = train_optimistic(pts, machine_names=("A", "B", "C"))
    with pytest.raises(UnknownMachineType, match="C"):
        model.predict(fv(2.0, 4.0, names=names))
    assert model.predict(fv(1.0, 4.0, names=names)) == pytest.approx(50.0)


def test_optimistic_needs_two_points():
    with pytest.raises(NotEnoughData):
        train_optimistic([(fv(2.0, 1.0), 1.0)])


@given(
    st.lists(
        st.tuples(st.integers(0, 2), st.integers(1, 16), st.floats(1.0, 100.0), st.floats(1.0, 1e6)),
        min_size=2,
        max_size=25,
    ),
    st.integers(0, 2),
    st.integers(1, 64),
    st.floats(0.1, 500.0),
)
def test_optimistic_predictions_are_positive(rows, qm, qn, qx):
    names = ("machine_type_index", "node_count", "x")
    pts = [(fv(float(m), float(n), x, names=names), rt) for m, n, x, rt in rows]
    model = train_optimistic(pts)
    query = fv(float(qm), float(qn), qx, names=names)
    try:
        p = model.predict(query)
    except UnknownMachineType:
        return
    assert p > 0 and math.isfinite(p)


# --- serialization ---------------------------------------------------------


def test_models_round_trip_through_json():
    pts = separable_points()
    for model in (train_pessimistic(pts, feature_weights(pts)), train_optimistic(pts)):
        obj = json.loads(json.dumps(model_to_dict(model)))
        assert obj["model_format"] == 1
        back = model_from_dict(obj)
        for q in (fv(3.0, 12_000.0), fv(16.0, 20_000.0), fv(1.0, 10_000.0)):
            assert back.predict(q) == pytest.approx(model.predict(q), rel=1e-12)


def test_unknown_model_format():
    with pytest.raises(ValueError):
        model_from_dict({"model_format": 2, "family": "pessimistic"})


def test_predict_aliases():
    pts = separable_points()
    opt = train_optimistic(pts)
    pess = train_pessimistic(pts, feature_weights(pts))
    q = fv(3.0, 12_000.0)
    assert predict_optimistic(opt, q) == opt.predict(q)
    assert predict_pessimistic(pess, q) == pess.predict(q)
