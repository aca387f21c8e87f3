"""Probabilistic rider-choice models and the usage composition rule.

Two model roles exist. A *core* model maps a trip's context to the probability
that the trip depends on transit and must be served. An *adopt* model maps a
(context, path-features) pair to the probability that a latent trip would
accept that specific path. Both are deterministic probability functions; all
randomness lives in the scenario sampler.

Four families are implemented: a trainable L2-regularized logistic model with
class weighting, hand-written rule models, lookup tables (so externally
produced probabilities can be consumed), and ground-truth logit processes
emitted by the instance generator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import minimize

from .demand import FEATURE_KINDS, FeatureSpec
from .errors import FormatError, SchemaError, TrainingError
from . import fileio

MODEL_KINDS = ("logit", "rule_based", "table", "ground_truth")
TASKS = ("core", "adopt")

# Path-feature columns appended to the context for adopt models, in order.
PATH_FEATURE_NAMES = ("total_min", "transfers", "walk_min", "transit_min")


@dataclass(frozen=True)
class PathFeatures:
    """Rider-facing description of one candidate path."""

    total_min: float
    transfers: int
    walk_min: float
    transit_min: float

    def __post_init__(self):
        if min(self.total_min, self.transfers, self.walk_min, self.transit_min) < 0:
            raise SchemaError("path features must be nonnegative")
        if self.total_min + 1e-9 < self.walk_min + self.transit_min:
            raise SchemaError("total time below walk + in-vehicle time")

    def as_dict(self) -> dict[str, float]:
        return {
            "total_min": self.total_min,
            "transfers": float(self.transfers),
            "walk_min": self.walk_min,
            "transit_min": self.transit_min,
        }


def _sigmoid(m: float) -> float:
    if m >= 0:
        return 1.0 / (1.0 + math.exp(-m))
    e = math.exp(m)
    return e / (1.0 + e)


def _clamp01(p: float, what: str) -> float:
    if not (0.0 <= p <= 1.0) or not math.isfinite(p):
        raise SchemaError(f"{what} produced probability {p} outside [0, 1]")
    return p


# ---------------------------------------------------------------------------
# Feature encoding
# ---------------------------------------------------------------------------


class FeatureEncoder:
    """Maps raw feature dicts to a dense vector.

    Numerics pass through, ordinals become integer codes, categoricals become
    one-hot columns with the lexicographically first category as reference.
    """

    def __init__(self, schema, categories):
        self.schema: tuple[FeatureSpec, ...] = tuple(schema)
        self.categories: dict[str, tuple[str, ...]] = dict(categories)
        names: list[str] = []
        for spec in self.schema:
            if spec.kind == "categorical":
                names.extend(f"{spec.name}={c}" for c in self.categories[spec.name][1:])
            else:
                names.append(spec.name)
        self.feature_names = tuple(names)

    @classmethod
    def fit(cls, schema, rows) -> "FeatureEncoder":
        categories: dict[str, tuple[str, ...]] = {}
        for spec in schema:
            if spec.kind == "categorical":
                seen = sorted({str(r[spec.name]) for r in rows})
                if not seen:
                    raise TrainingError(f"no values observed for feature {spec.name}")
                categories[spec.name] = tuple(seen)
        return cls(schema, categories)

    def encode_row(self, row: dict) -> np.ndarray:
        out = np.zeros(len(self.feature_names))
        pos = 0
        for spec in self.schema:
            if spec.name not in row:
                raise SchemaError(f"missing feature {spec.name}")
            value = row[spec.name]
            if spec.kind == "categorical":
                cats = self.categories[spec.name]
                text = str(value)
                if text not in cats:
                    raise SchemaError(f"unknown category {text!r} for feature {spec.name}")
                idx = cats.index(text)
                if idx > 0:
                    out[pos + idx - 1] = 1.0
                pos += len(cats) - 1
            else:
                v = float(value)
                if not math.isfinite(v):
                    raise SchemaError(f"non-finite value for feature {spec.name}")
                out[pos] = v
                pos += 1
        return out

    def encode_matrix(self, rows) -> np.ndarray:
        return np.array([self.encode_row(r) for r in rows])


# ---------------------------------------------------------------------------
# Model families
# ---------------------------------------------------------------------------


class ChoiceModel:
    """Base: a deterministic probability function with a kind tag and a task."""

    kind: str
    task: str

    def prob(self, context: dict, pf: PathFeatures | None = None, key: str | None = None) -> float:
        raise NotImplementedError


@dataclass
class LogitModel(ChoiceModel):
    task: str
    encoder: FeatureEncoder
    weights: np.ndarray
    intercept: float
    class_weight: float = 1.0
    kind: str = "logit"

    def __post_init__(self):
        if len(self.weights) != len(self.encoder.feature_names):
            raise SchemaError("weight vector length does not match encoded feature count")

    def prob(self, context, pf=None, key=None) -> float:
        row = dict(context)
        if self.task == "adopt":
            if pf is None:
                raise SchemaError("adopt model requires path features")
            row.update(pf.as_dict())
        x = self.encoder.encode_row(row)
        return _sigmoid(float(x @ self.weights) + self.intercept)


@dataclass
class StationProximityCoreRule(ChoiceModel):
    """Core probability from walk access: near-station trips get p_near, else p_far."""

    threshold_min: float = 5.0
    p_near: float = 0.8
    p_far: float = 0.2
    origin_feature: str = "o_station_walk_min"
    dest_feature: str = "d_station_walk_min"
    kind: str = "rule_based"
    task: str = "core"

    def prob(self, context, pf=None, key=None) -> float:
        for name in (self.origin_feature, self.dest_feature):
            if name not in context:
                raise SchemaError(f"rule model needs feature {name}")
        near = (
            float(context[self.origin_feature]) <= self.threshold_min
            and float(context[self.dest_feature]) <= self.threshold_min
        )
        return self.p_near if near else self.p_far


@dataclass
class TravelTimeAdoptRule(ChoiceModel):
    """Adoption probability stepped down by total path time."""

    fast_min: float = 35.0
    slow_min: float = 70.0
    p_fast: float = 0.6
    p_mid: float = 0.3
    p_slow: float = 0.1
    kind: str = "rule_based"
    task: str = "adopt"

    def prob(self, context, pf=None, key=None) -> float:
        if pf is None:
            raise SchemaError("adopt model requires path features")
        if pf.total_min <= self.fast_min:
            return self.p_fast
        if pf.total_min <= self.slow_min:
            return self.p_mid
        return self.p_slow


@dataclass
class TableModel(ChoiceModel):
    """Lookup of externally produced probabilities.

    Core keys are trip ids; adopt keys are ``trip_id|path_id``.
    """

    task: str
    table: dict[str, float]
    kind: str = "table"

    def prob(self, context, pf=None, key=None) -> float:
        if key is None:
            raise SchemaError("table model lookup requires a key")
        if key not in self.table:
            raise SchemaError(f"table model has no entry for key {key!r}")
        return self.table[key]


def adopt_key(trip_id: str, path_id: str) -> str:
    return f"{trip_id}|{path_id}"


def prob_core(model: ChoiceModel, context: dict, key: str | None = None) -> float:
    """P(trip is core | context); ``key`` is only consulted by table models."""
    if model.task != "core":
        raise SchemaError(f"model task is {model.task!r}, expected core")
    return _clamp01(model.prob(context, key=key), "core model")


def prob_adopt(
    model: ChoiceModel, context: dict, pf: PathFeatures, key: str | None = None
) -> float:
    """P(latent trip adopts this path | context, path features)."""
    if model.task != "adopt":
        raise SchemaError(f"model task is {model.task!r}, expected adopt")
    return _clamp01(model.prob(context, pf=pf, key=key), "adopt model")


def compose_usage(core: bool, adopt: bool) -> bool:
    """Whether the trip uses the system: core trips always, latent iff they adopt."""
    return bool(core) or bool(adopt)


def exact_usage_expectation(p_core: float, adopt_probs) -> float:
    """Closed-form E[usage] given the core probability and the per-path adoption
    probabilities of the feasible considered paths (independent decisions)."""
    probs = list(adopt_probs)
    for p in [p_core, *probs]:
        if not 0.0 <= p <= 1.0:
            raise SchemaError(f"probability {p} outside [0, 1]")
    reject_all = 1.0
    for q in probs:
        reject_all *= 1.0 - q
    return p_core + (1.0 - p_core) * (1.0 - reject_all)


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


def f1_score(y_true: np.ndarray, y_pred: np.ndarray, positive: int = 1) -> float:
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    tp = int(np.sum((y_pred == positive) & (y_true == positive)))
    fp = int(np.sum((y_pred == positive) & (y_true != positive)))
    fn = int(np.sum((y_pred != positive) & (y_true == positive)))
    if 2 * tp + fp + fn == 0:
        return 0.0
    return 2 * tp / (2 * tp + fp + fn)


def weighted_f1(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    """Support-weighted mean of the per-class F1 scores."""
    y_true = np.asarray(y_true)
    n = len(y_true)
    total = 0.0
    for cls in (0, 1):
        support = int(np.sum(y_true == cls))
        if support:
            total += support / n * f1_score(y_true, y_pred, positive=cls)
    return total


def roc_auc(y_true: np.ndarray, scores: np.ndarray) -> float:
    """Rank-based AUC (Mann-Whitney) with midranks for ties."""
    y_true = np.asarray(y_true)
    scores = np.asarray(scores, dtype=float)
    n_pos = int(np.sum(y_true == 1))
    n_neg = len(y_true) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise TrainingError("AUC undefined with a single class")
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(len(scores))
    sorted_scores = scores[order]
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    rank_sum = float(np.sum(ranks[y_true == 1]))
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


@dataclass
class LabeledDataset:
    schema: tuple[FeatureSpec, ...]
    rows: list[dict]
    labels: np.ndarray


@dataclass
class CVReport:
    folds: int
    seed: int
    scoring: str
    grid_scores: list[tuple[float, float, float]]  # (C, class_weight, mean score)
    best_c: float
    best_weight: float
    best_score: float


def penalized_loss_and_grad(params: np.ndarray, X: np.ndarray, y: np.ndarray,
                            sample_weight: np.ndarray, c_value: float):
    """Objective 0.5*||w||^2 + C * sum_i s_i * logloss_i and its gradient.

    The intercept (last entry of ``params``) is not regularized. Log loss is
    computed via logaddexp for numerical stability.
    """
    w = params[:-1]
    b = params[-1]
    margins = X @ w + b
    losses = np.logaddexp(0.0, margins) - y * margins
    value = 0.5 * float(w @ w) + c_value * float(sample_weight @ losses)
    sig = 1.0 / (1.0 + np.exp(-np.clip(margins, -500, 500)))
    residual = sample_weight * (sig - y)
    grad_w = w + c_value * (X.T @ residual)
    grad_b = c_value * float(np.sum(residual))
    return value, np.concatenate([grad_w, [grad_b]])


def _fit_weighted_logit(X, y, class_weight, c_value, max_iter=200):
    sample_weight = np.where(y == 1, class_weight, 1.0)
    x0 = np.zeros(X.shape[1] + 1)
    result = minimize(
        penalized_loss_and_grad,
        x0,
        args=(X, y, sample_weight, c_value),
        method="L-BFGS-B",
        jac=True,
        options={"maxiter": max_iter, "ftol": 1e-12, "gtol": 1e-9},
    )
    return result.x[:-1], float(result.x[-1])


def _stratified_folds(labels: np.ndarray, k: int, seed: int) -> np.ndarray:
    """Deterministic stratified fold ids: shuffle within class, assign round-robin."""
    rng = np.random.default_rng(seed)
    fold = np.empty(len(labels), dtype=int)
    for cls in (0, 1):
        idx = np.flatnonzero(labels == cls)
        rng.shuffle(idx)
        fold[idx] = np.arange(len(idx)) % k
    return fold


DEFAULT_C_GRID = (0.1, 0.8, 1.0, 10.0)
DEFAULT_ADOPT_WEIGHTS = (2.0, 3.0, 5.0, 10.0)


def train_logit(
    dataset: LabeledDataset,
    task: str = "core",
    c_grid=None,
    weight_grid=None,
    folds: int = 5,
    seed: int = 0,
    max_iter: int = 200,
):
    """Grid-search k-fold CV over (C, class weight), refit best on all data.

    Scoring is plain F1 for core models and support-weighted F1 for adopt
    models (which face imbalanced labels). Returns (LogitModel, CVReport).
    """
    if task not in TASKS:
        raise SchemaError(f"unknown task {task!r}")
    if folds < 2:
        raise TrainingError("cross-validation needs at least 2 folds")
    y = np.asarray(dataset.labels, dtype=float)
    if len(set(y.tolist())) < 2:
        raise TrainingError("training data contains a single class")
    if c_grid is None:
        c_grid = DEFAULT_C_GRID
    if weight_grid is None:
        weight_grid = (1.0,) if task == "core" else DEFAULT_ADOPT_WEIGHTS

    encoder = FeatureEncoder.fit(dataset.schema, dataset.rows)
    X = encoder.encode_matrix(dataset.rows)
    fold_of = _stratified_folds(y, folds, seed)
    scoring = "f1" if task == "core" else "weighted_f1"
    scorer = f1_score if task == "core" else weighted_f1

    grid_scores = []
    best = None
    for c_value in c_grid:
        for class_weight in weight_grid:
            scores = []
            for k in range(folds):
                train = fold_of != k
                val = ~train
                if len(set(y[train].tolist())) < 2:
                    raise TrainingError(f"fold {k} leaves a single class in training")
                w, b = _fit_weighted_logit(X[train], y[train], class_weight, c_value, max_iter)
                margins = np.clip(X[val] @ w + b, -500, 500)
                p_val = 1.0 / (1.0 + np.exp(-margins))
                scores.append(scorer(y[val], (p_val >= 0.5).astype(int)))
            mean_score = float(np.mean(scores))
            grid_scores.append((float(c_value), float(class_weight), mean_score))
            if best is None or mean_score > best[0]:
                best = (mean_score, float(c_value), float(class_weight))

    best_score, best_c, best_weight = best
    w, b = _fit_weighted_logit(X, y, best_weight, best_c, max_iter)
    model = LogitModel(
        task=task, encoder=encoder, weights=w, intercept=b, class_weight=best_weight
    )
    report = CVReport(
        folds=folds,
        seed=seed,
        scoring=scoring,
        grid_scores=grid_scores,
        best_c=best_c,
        best_weight=best_weight,
        best_score=best_score,
    )
    return model, report


# ---------------------------------------------------------------------------
# Training-data file: header "label,<feature:kind>,..." then rows
# ---------------------------------------------------------------------------


def save_training(dataset: LabeledDataset, path: str | Path) -> None:
    header = ["label"] + [f"{s.name}:{s.kind}" for s in dataset.schema]
    rows = []
    for row, label in zip(dataset.rows, dataset.labels):
        fields = [str(int(label))]
        for spec in dataset.schema:
            value = row[spec.name]
            if spec.kind == "categorical":
                fields.append(f'"{value}"')
            elif spec.kind == "ordinal":
                fields.append(str(int(value)))
            else:
                fields.append(fileio.fmt_num(float(value)))
        rows.append(fields)
    fileio.write_delimited(path, header, rows, fileio.provenance_for("training-data"))


def load_training(path: str | Path) -> LabeledDataset:
    path_str = str(path)
    _, header, raw_rows = fileio.read_delimited(path)
    if not header or header[0] != "label":
        raise FormatError(path_str, 1, "first column must be 'label'")
    schema = []
    for cell in header[1:]:
        name, sep, kind = cell.partition(":")
        if not sep or kind not in FEATURE_KINDS:
            raise FormatError(path_str, 1, f"bad feature column {cell!r}")
        schema.append(FeatureSpec(name, kind))
    rows, labels = [], []
    for lineno, fields in raw_rows:
        if len(fields) != len(header):
            raise FormatError(path_str, lineno, "wrong field count")
        if fields[0] not in ("0", "1"):
            raise FormatError(path_str, lineno, f"label must be 0/1, got {fields[0]!r}")
        labels.append(int(fields[0]))
        row: dict[str, object] = {}
        for spec, raw in zip(schema, fields[1:]):
            if spec.kind == "categorical":
                row[spec.name] = raw
            elif spec.kind == "ordinal":
                row[spec.name] = int(raw)
            else:
                row[spec.name] = float(raw)
        rows.append(row)
    return LabeledDataset(tuple(schema), rows, np.array(labels))


# ---------------------------------------------------------------------------
# Model files (round-trippable line format)
# ---------------------------------------------------------------------------


def serialize_model(model: ChoiceModel) -> str:
    lines = [
        "# artifact: choice-model",
        f"# tool_version: {fileio.TOOL_VERSION}",
        f"kind={model.kind}",
        f"task={model.task}",
    ]
    if isinstance(model, LogitModel):
        lines.append(f"class_weight={fileio.fmt_num(model.class_weight)}")
        lines.append(f"intercept={fileio.fmt_num(model.intercept)}")
        for spec in model.encoder.schema:
            lines.append(f"feature={spec.name},{spec.kind}")
        for name in sorted(model.encoder.categories):
            cats = ",".join(model.encoder.categories[name])
            lines.append(f"categories={name},{cats}")
        for name, w in zip(model.encoder.feature_names, model.weights):
            lines.append(f"weight={name},{fileio.fmt_num(float(w))}")
    elif isinstance(model, StationProximityCoreRule):
        lines.append("rule=station_proximity")
        for attr in ("threshold_min", "p_near", "p_far"):
            lines.append(f"param={attr},{fileio.fmt_num(getattr(model, attr))}")
        lines.append(f"param=origin_feature,{model.origin_feature}")
        lines.append(f"param=dest_feature,{model.dest_feature}")
    elif isinstance(model, TravelTimeAdoptRule):
        lines.append("rule=travel_time")
        for attr in ("fast_min", "slow_min", "p_fast", "p_mid", "p_slow"):
            lines.append(f"param={attr},{fileio.fmt_num(getattr(model, attr))}")
    elif isinstance(model, TableModel):
        for key in sorted(model.table):
            lines.append(f"row={key},{fileio.fmt_num(model.table[key])}")
    else:
        raise SchemaError(f"cannot serialize model of type {type(model).__name__}")
    return "\n".join(lines) + "\n"


def model_fingerprint(model: ChoiceModel) -> str:
    return fileio.sha256_text(serialize_model(model))


def save_model(model: ChoiceModel, path: str | Path) -> None:
    Path(path).write_text(serialize_model(model), encoding="utf-8", newline="")


def load_model(path: str | Path) -> ChoiceModel:
    path_str = str(path)
    entries: list[tuple[int, str, str]] = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise FormatError(path_str, lineno, f"expected key=value, got {line!r}")
        entries.append((lineno, key, value))
    fields = {k: v for _, k, v in entries}
    kind = fields.get("kind")
    task = fields.get("task")
    if kind not in MODEL_KINDS:
        raise FormatError(path_str, 1, f"unknown model kind {kind!r}")
    if task not in TASKS:
        raise FormatError(path_str, 1, f"unknown task {task!r}")

    if kind in ("logit", "ground_truth"):
        schema = []
        categories: dict[str, tuple[str, ...]] = {}
        weights: dict[str, float] = {}
        for lineno, key, value in entries:
            if key == "feature":
                name, _, fkind = value.partition(",")
                schema.append(FeatureSpec(name, fkind))
            elif key == "categories":
                parts = value.split(",")
                categories[parts[0]] = tuple(parts[1:])
            elif key == "weight":
                name, _, w = value.rpartition(",")
                weights[name] = float(w)
        if task == "adopt":
            declared = {s.name for s in schema}
            missing = [n for n in PATH_FEATURE_NAMES if n not in declared]
            if missing:
                raise FormatError(path_str, 1, f"adopt model missing path features {missing}")
        encoder = FeatureEncoder(tuple(schema), categories)
        w = np.array([weights.get(n, 0.0) for n in encoder.feature_names])
        model = LogitModel(
            task=task,
            encoder=encoder,
            weights=w,
            intercept=float(fields["intercept"]),
            class_weight=float(fields.get("class_weight", "1.0")),
            kind=kind,
        )
        return model
    if kind == "rule_based":
        params: dict[str, str] = {}
        for _, key, value in entries:
            if key == "param":
                name, _, v = value.partition(",")
                params[name] = v
        rule = fields.get("rule")
        if rule == "station_proximity":
            return StationProximityCoreRule(
                threshold_min=float(params.get("threshold_min", "5.0")),
                p_near=float(params.get("p_near", "0.8")),
                p_far=float(params.get("p_far", "0.2")),
                origin_feature=params.get("origin_feature", "o_station_walk_min"),
                dest_feature=params.get("dest_feature", "d_station_walk_min"),
            )
        if rule == "travel_time":
            return TravelTimeAdoptRule(
                fast_min=float(params.get("fast_min", "35.0")),
                slow_min=float(params.get("slow_min", "70.0")),
                p_fast=float(params.get("p_fast", "0.6")),
                p_mid=float(params.get("p_mid", "0.3")),
                p_slow=float(params.get("p_slow", "0.1")),
            )
        raise FormatError(path_str, 1, f"unknown rule {rule!r}")
    # table
    table: dict[str, float] = {}
    for lineno, key, value in entries:
        if key == "row":
            k, _, p = value.rpartition(",")
            table[k] = float(p)
    return TableModel(task=task, table=table)
