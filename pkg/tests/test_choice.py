import numpy as np
import pytest
from hypothesis import given, strategies as st

from transitopt.choice import (
    FeatureEncoder,
    LabeledDataset,
    LogitModel,
    PathFeatures,
    StationProximityCoreRule,
    TableModel,
    TravelTimeAdoptRule,
    compose_usage,
    exact_usage_expectation,
    f1_score,
    load_model,
    load_training,
    model_fingerprint,
    penalized_loss_and_grad,
    prob_adopt,
    prob_core,
    roc_auc,
    save_model,
    save_training,
    serialize_model,
    train_logit,
    weighted_f1,
)
from transitopt.demand import FeatureSpec
from transitopt.errors import SchemaError, TrainingError

RNG = np.random.default_rng(1234)

NUMERIC_SCHEMA = (FeatureSpec("x1", "numeric"), FeatureSpec("x2", "numeric"))


def make_logit(weights, intercept, schema=NUMERIC_SCHEMA, task="core"):
    if task == "adopt":
        schema = schema + tuple(
            FeatureSpec(n, "numeric") for n in ("total_min", "transfers", "walk_min", "transit_min")
        )
    encoder = FeatureEncoder(schema, {})
    w = np.zeros(len(encoder.feature_names))
    for name, value in weights.items():
        w[encoder.feature_names.index(name)] = value
    return LogitModel(task=task, encoder=encoder, weights=w, intercept=intercept)


# ---------------------------------------------------------------------------
# Usage composition
# ---------------------------------------------------------------------------


@pytest.mark.parametrize(
    "core,adopt,expected",
    [(1, 0, 1), (0, 1, 1), (0, 0, 0), (1, 1, 1)],
)
def test_compose_usage_truth_table(core, adopt, expected):
    assert compose_usage(core, adopt) == expected


def test_exact_expectation_core_dominates():
    assert exact_usage_expectation(1.0, [0.1, 0.9]) == 1.0


def test_exact_expectation_no_paths():
    assert exact_usage_expectation(0.0, []) == 0.0


def test_exact_expectation_hand_value():
    # 0.2 + 0.8 * (1 - 0.5*0.5) = 0.8
    assert exact_usage_expectation(0.2, [0.5, 0.5]) == pytest.approx(0.8)


def test_exact_expectation_matches_monte_carlo():
    p_core, qs = 0.3, [0.4, 0.15, 0.6]
    n = 100_000
    rng = np.random.default_rng(99)
    core = rng.random(n) < p_core
    adopt = np.zeros(n, dtype=bool)
    for q in qs:
        adopt |= rng.random(n) < q
    used = np.where(core, True, adopt)
    expected = exact_usage_expectation(p_core, qs)
    sigma = np.sqrt(expected * (1 - expected) / n)
    assert abs(used.mean() - expected) < 3 * sigma


@given(
    st.floats(0, 1), st.floats(0, 1),
    st.lists(st.floats(0, 1), max_size=4),
)
def test_exact_expectation_monotone(p1, p2, qs):
    lo, hi = sorted((p1, p2))
    assert exact_usage_expectation(lo, qs) <= exact_usage_expectation(hi, qs) + 1e-12
    if qs:
        bumped = [min(1.0, qs[0] + 0.1)] + qs[1:]
        assert exact_usage_expectation(p1, qs) <= exact_usage_expectation(p1, bumped) + 1e-12


# ---------------------------------------------------------------------------
# Model families
# ---------------------------------------------------------------------------


def test_logit_all_zero_params_is_half():
    model = make_logit({}, 0.0)
    assert prob_core(model, {"x1": 3.0, "x2": -1.0}) == pytest.approx(0.5)


def test_adopt_logit_all_zero_params_is_half():
    model = make_logit({}, 0.0, task="adopt")
    pf = PathFeatures(total_min=30.0, transfers=1, walk_min=10.0, transit_min=20.0)
    assert prob_adopt(model, {"x1": 0.0, "x2": 0.0}, pf) == pytest.approx(0.5)


def test_station_proximity_rule_values():
    rule = StationProximityCoreRule()
    near = {"o_station_walk_min": 3.0, "d_station_walk_min": 4.9}
    far = {"o_station_walk_min": 3.0, "d_station_walk_min": 5.1}
    assert prob_core(rule, near) == pytest.approx(0.8)
    assert prob_core(rule, far) == pytest.approx(0.2)


def test_travel_time_rule_steps_down():
    rule = TravelTimeAdoptRule()
    mk = lambda total: PathFeatures(total, 0, 5.0, total - 5.0)
    assert prob_adopt(rule, {}, mk(20.0)) > prob_adopt(rule, {}, mk(50.0))
    assert prob_adopt(rule, {}, mk(50.0)) > prob_adopt(rule, {}, mk(90.0))


def test_table_model_echoes_stored_value():
    model = TableModel(task="core", table={"t1": 0.35})
    assert prob_core(model, {}, key="t1") == pytest.approx(0.35)
    with pytest.raises(SchemaError):
        prob_core(model, {}, key="missing")


def test_ground_truth_monotone_in_time():
    model = make_logit({"total_min": -0.08}, 1.0, task="adopt")
    probs = [
        prob_adopt(model, {"x1": 0.0, "x2": 0.0},
                   PathFeatures(t, 0, 5.0, t - 5.0))
        for t in np.linspace(10, 120, 23)
    ]
    assert all(a >= b - 1e-12 for a, b in zip(probs, probs[1:]))


def test_task_mismatch_rejected():
    model = make_logit({}, 0.0)
    pf = PathFeatures(10.0, 0, 2.0, 8.0)
    with pytest.raises(SchemaError):
        prob_adopt(model, {"x1": 0.0, "x2": 0.0}, pf)


def test_encoder_rejects_unknown_category():
    schema = (FeatureSpec("color", "categorical"),)
    enc = FeatureEncoder(schema, {"color": ("blue", "red")})
    with pytest.raises(SchemaError):
        enc.encode_row({"color": "green"})


def test_path_features_validated():
    with pytest.raises(SchemaError):
        PathFeatures(total_min=10.0, transfers=0, walk_min=8.0, transit_min=5.0)


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


def test_f1_hand_value():
    y = np.array([1, 1, 0, 0, 1])
    yhat = np.array([1, 0, 0, 1, 1])
    # tp=2 fp=1 fn=1 -> f1 = 4/6
    assert f1_score(y, yhat) == pytest.approx(2 / 3)


def test_weighted_f1_balances_classes():
    y = np.array([0, 0, 0, 1])
    yhat = np.array([0, 0, 0, 1])
    assert weighted_f1(y, yhat) == pytest.approx(1.0)


def test_auc_perfect_and_reversed():
    y = np.array([0, 0, 1, 1])
    assert roc_auc(y, np.array([0.1, 0.2, 0.8, 0.9])) == pytest.approx(1.0)
    assert roc_auc(y, np.array([0.9, 0.8, 0.2, 0.1])) == pytest.approx(0.0)
    assert roc_auc(y, np.array([0.5, 0.5, 0.5, 0.5])) == pytest.approx(0.5)


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


def _separable_dataset(n=400, seed=5):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, 2))
    y = (x[:, 0] + 2 * x[:, 1] > 0).astype(int)
    rows = [{"x1": float(a), "x2": float(b)} for a, b in x]
    return LabeledDataset(NUMERIC_SCHEMA, rows, y)


def test_train_logit_separable_high_accuracy():
    dataset = _separable_dataset()
    split = 300
    train = LabeledDataset(dataset.schema, dataset.rows[:split], dataset.labels[:split])
    model, report = train_logit(train, task="core", folds=5, seed=0)
    correct = 0
    for row, label in zip(dataset.rows[split:], dataset.labels[split:]):
        pred = int(prob_core(model, row) >= 0.5)
        correct += pred == label
    assert correct / (len(dataset.rows) - split) >= 0.95
    assert report.scoring == "f1"


def test_gradient_matches_central_differences():
    rng = np.random.default_rng(7)
    X = rng.normal(size=(40, 3))
    y = (rng.random(40) < 0.4).astype(float)
    sw = np.where(y == 1, 3.0, 1.0)
    eps = 1e-6
    for _ in range(20):
        params = rng.normal(scale=0.8, size=4)
        _, grad = penalized_loss_and_grad(params, X, y, sw, 1.0)
        fd = np.zeros_like(params)
        for j in range(len(params)):
            up, down = params.copy(), params.copy()
            up[j] += eps
            down[j] -= eps
            f_up, _ = penalized_loss_and_grad(up, X, y, sw, 1.0)
            f_down, _ = penalized_loss_and_grad(down, X, y, sw, 1.0)
            fd[j] = (f_up - f_down) / (2 * eps)
        assert np.max(np.abs(grad - fd)) < 1e-5


def test_intercept_only_model_recovers_prior():
    rng = np.random.default_rng(11)
    n = 4000
    y = (rng.random(n) < 0.7).astype(int)
    rows = [{"x1": 0.0, "x2": 0.0} for _ in range(n)]
    dataset = LabeledDataset(NUMERIC_SCHEMA, rows, y)
    model, _ = train_logit(dataset, task="core", c_grid=(10.0,), folds=2, seed=0)
    p = prob_core(model, {"x1": 0.0, "x2": 0.0})
    assert abs(p - y.mean()) < 0.02


def test_predictions_invariant_under_feature_rescaling():
    dataset = _separable_dataset(n=240, seed=9)
    scaled_rows = [{"x1": r["x1"] * 100.0, "x2": r["x2"]} for r in dataset.rows]
    scaled = LabeledDataset(dataset.schema, scaled_rows, dataset.labels)
    # effectively unregularized: the MLE is scale-equivariant
    m1, _ = train_logit(dataset, task="core", c_grid=(1e6,), folds=2, seed=0)
    m2, _ = train_logit(scaled, task="core", c_grid=(1e6,), folds=2, seed=0)
    for row, srow in zip(dataset.rows, scaled_rows):
        assert (prob_core(m1, row) >= 0.5) == (prob_core(m2, srow) >= 0.5)


def test_single_class_raises_training_error():
    rows = [{"x1": 1.0, "x2": 0.0} for _ in range(10)]
    dataset = LabeledDataset(NUMERIC_SCHEMA, rows, np.ones(10, dtype=int))
    with pytest.raises(TrainingError):
        train_logit(dataset, task="core")


def test_adopt_grid_uses_class_weights():
    rng = np.random.default_rng(3)
    n = 300
    x = rng.normal(size=(n, 2))
    y = (x[:, 0] - 0.5 + rng.normal(scale=0.3, size=n) > 0.8).astype(int)
    if y.sum() < 5:
        y[:5] = 1
    rows = [{"x1": float(a), "x2": float(b)} for a, b in x]
    dataset = LabeledDataset(NUMERIC_SCHEMA, rows, y)
    model, report = train_logit(dataset, task="adopt", folds=3, seed=1)
    assert report.scoring == "weighted_f1"
    assert model.class_weight in (2.0, 3.0, 5.0, 10.0)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def test_logit_model_file_roundtrip(tmp_path):
    schema = NUMERIC_SCHEMA + (
        FeatureSpec("income_level", "ordinal"),
        FeatureSpec("vehicle_access", "categorical"),
    )
    encoder = FeatureEncoder(schema, {"vehicle_access": ("none", "own", "shared")})
    model = LogitModel(
        task="core",
        encoder=encoder,
        weights=np.array([0.5, -1.25, 0.1, -0.6, 0.2]),
        intercept=0.75,
        class_weight=3.0,
    )
    path = tmp_path / "core.model"
    save_model(model, path)
    loaded = load_model(path)
    row = {"x1": 1.0, "x2": 2.0, "income_level": 4, "vehicle_access": "shared"}
    assert prob_core(loaded, row) == pytest.approx(prob_core(model, row))
    assert serialize_model(loaded) == serialize_model(model)
    assert model_fingerprint(loaded) == model_fingerprint(model)


def test_rule_model_file_roundtrip(tmp_path):
    for model in (StationProximityCoreRule(threshold_min=4.0), TravelTimeAdoptRule(p_mid=0.25)):
        path = tmp_path / f"{model.task}.model"
        save_model(model, path)
        loaded = load_model(path)
        assert serialize_model(loaded) == serialize_model(model)


def test_table_model_file_roundtrip(tmp_path):
    model = TableModel(task="adopt", table={"t1|p0": 0.4, "t2|p1": 0.05})
    path = tmp_path / "table.model"
    save_model(model, path)
    loaded = load_model(path)
    pf = PathFeatures(10.0, 0, 2.0, 8.0)
    assert prob_adopt(loaded, {}, pf, key="t1|p0") == pytest.approx(0.4)


def test_training_file_roundtrip(tmp_path):
    dataset = _separable_dataset(n=20)
    path = tmp_path / "data.csv"
    save_training(dataset, path)
    loaded = load_training(path)
    assert np.array_equal(loaded.labels, dataset.labels)
    assert loaded.rows[3] == pytest.approx(dataset.rows[3])
