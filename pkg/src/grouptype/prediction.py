"""Group-type prediction: z-score ensemble, tree classifier, ROC and feature ranking."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .forest import Tree, fit_forest, forest_proba
from .metrics import GroupMetrics, is_defined, read_metrics_csv
from .model import CHANNELS, KINDS, Label

log = logging.getLogger(__name__)

FEATURES: tuple[str, ...] = (
    ("s_g",)
    + tuple(f"{k.value}_{m}" for k in KINDS for m in ("E_int", "a", "b", "t", "u"))
    + tuple(f"{c.value}_{m}" for c in CHANNELS for m in ("H", "h"))
)
SCORE_FEATURES: tuple[str, ...] = (
    tuple(f"{k.value}_{m}" for m in ("t", "u") for k in KINDS)
    + tuple(f"{c.value}_h" for c in CHANNELS)
)
MODEL_FORMAT = "grouptype-model"
MODEL_VERSION = 1


@dataclass(frozen=True)
class FeatureVector:
    group_id: str
    values: tuple[float, ...]
    defined: tuple[bool, ...]


@dataclass
class FeatureTable:
    """Feature matrix over groups; undefined entries are NaN."""

    group_ids: list[str]
    origins: list[str]
    values: np.ndarray
    names: tuple[str, ...] = FEATURES

    @classmethod
    def from_metrics(cls, metrics: Sequence[GroupMetrics]) -> "FeatureTable":
        ms = sorted(metrics, key=lambda m: m.group_id)
        vals = np.full((len(ms), len(FEATURES)), np.nan)
        for i, m in enumerate(ms):
            for j, name in enumerate(FEATURES):
                v = m.get(name)
                if is_defined(v):
                    vals[i, j] = float(v)
        return cls([m.group_id for m in ms], [m.origin.value for m in ms], vals)

    @classmethod
    def from_csv(cls, path) -> "FeatureTable":
        rows = sorted(read_metrics_csv(path), key=lambda r: r["group_id"])
        vals = np.full((len(rows), len(FEATURES)), np.nan)
        for i, r in enumerate(rows):
            for j, name in enumerate(FEATURES):
                if r[name] != "":
                    vals[i, j] = float(r[name])
        return cls([r["group_id"] for r in rows], [r["origin"] for r in rows], vals)

    def __len__(self) -> int:
        return len(self.group_ids)

    @property
    def defined(self) -> np.ndarray:
        return ~np.isnan(self.values)

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.names.index(name)]

    def rows(self, ids: Sequence[str]) -> "FeatureTable":
        pos = {g: i for i, g in enumerate(self.group_ids)}
        sel = [pos[g] for g in ids]
        return FeatureTable([self.group_ids[i] for i in sel], [self.origins[i] for i in sel],
                            self.values[sel], self.names)

    def subset(self, names: Sequence[str]) -> "FeatureTable":
        cols = [self.names.index(n) for n in names]
        return FeatureTable(self.group_ids, self.origins, self.values[:, cols], tuple(names))

    def vectors(self) -> list[FeatureVector]:
        d = self.defined
        return [FeatureVector(g, tuple(self.values[i]), tuple(d[i]))
                for i, g in enumerate(self.group_ids)]


# ---------------------------------------------------------------- z-scores

@dataclass
class ZScores:
    group_ids: list[str]
    names: tuple[str, ...]
    z: np.ndarray
    imputed: np.ndarray
    mean: np.ndarray
    std: np.ndarray


def _column_stats(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mean and population std per column over defined (non-NaN) entries."""
    mean = np.zeros(values.shape[1])
    std = np.zeros(values.shape[1])
    for j in range(values.shape[1]):
        col = values[:, j]
        col = col[~np.isnan(col)]
        if len(col) >= 2:
            mean[j] = math.fsum(col) / len(col)
            std[j] = math.sqrt(math.fsum((col - mean[j]) ** 2) / len(col))
        elif len(col) == 1:
            mean[j] = col[0]
    return mean, std


def _apply_stats(values: np.ndarray, mean: np.ndarray, std: np.ndarray) -> np.ndarray:
    safe = np.where(std > 0, std, 1.0)
    z = (values - mean) / safe
    z[:, std == 0] = 0.0
    return np.where(np.isnan(values), 0.0, z)


def zscore(table: FeatureTable, subset: Sequence[str] | None = None,
           fit_ids: Sequence[str] | None = None) -> ZScores:
    """Standardize columns to mean 0 and population std 1 over their defined entries.

    Undefined entries are imputed at the mean (z = 0). A column with zero
    variance, or fewer than two defined values, becomes all zeros. Statistics
    come from ``fit_ids`` when given, else from every row.
    """
    t = table.subset(subset) if subset is not None else table
    fit = t.rows(fit_ids) if fit_ids is not None else t
    if len(fit) < 2:
        raise ValueError("z-scoring needs at least 2 groups")
    mean, std = _column_stats(fit.values)
    for name, s in zip(t.names, std):
        if s == 0:
            log.warning("feature %s has zero variance; its z-scores are set to 0", name)
    return ZScores(list(t.group_ids), t.names, _apply_stats(t.values, mean, std),
                   np.isnan(t.values), mean, std)


@dataclass(frozen=True)
class ScoreResult:
    group_id: str
    score: float
    components: tuple[float, ...]
    imputed: tuple[str, ...] = ()


def score(z: ZScores) -> list[ScoreResult]:
    """S_g: the even-weighted mean of the nine sociality z-scores (t, u per kind; h per channel)."""
    cols = [z.names.index(n) for n in SCORE_FEATURES]
    out = []
    for i, g in enumerate(z.group_ids):
        comps = tuple(float(z.z[i, c]) for c in cols)
        out.append(ScoreResult(g, math.fsum(comps) / len(comps), comps,
                               tuple(n for n, c in zip(SCORE_FEATURES, cols) if z.imputed[i, c])))
    return out


def score_table(table: FeatureTable, fit_ids: Sequence[str] | None = None) -> list[ScoreResult]:
    return score(zscore(table, SCORE_FEATURES, fit_ids))


def predict_by_threshold(scores: Sequence[ScoreResult], threshold: float = 0.0) -> dict[str, Label]:
    return {s.group_id: Label.SOCIAL if s.score > threshold else Label.TOPICAL for s in scores}


# ---------------------------------------------------------------- labels

def binary_labels(table: FeatureTable, labels: Mapping[str, Label]) -> tuple[list[str], np.ndarray]:
    """Ids of rows labeled social/topical (unknown and unlabeled dropped) and their 0/1 targets."""
    ids, y = [], []
    for g in table.group_ids:
        lab = labels.get(g)
        if lab in (Label.SOCIAL, Label.TOPICAL):
            ids.append(g)
            y.append(1 if lab is Label.SOCIAL else 0)
    return ids, np.array(y, dtype=np.int64)


# ---------------------------------------------------------------- classifier

@dataclass
class TrainConfig:
    trees: int = 100
    max_depth: int = 8
    min_samples_leaf: int = 2
    max_features: int | None = None
    seed: int = 0


@dataclass
class PredictionModel:
    features: tuple[str, ...]
    mean: np.ndarray
    std: np.ndarray
    trees: list[Tree]
    config: TrainConfig

    def transform(self, table: FeatureTable) -> np.ndarray:
        return _apply_stats(table.subset(self.features).values, self.mean, self.std)

    def predict_proba(self, table: FeatureTable) -> np.ndarray:
        """Probability that each group is social."""
        return forest_proba(self.trees, self.transform(table))

    def predict(self, table: FeatureTable) -> dict[str, Label]:
        p = self.predict_proba(table)
        return {g: Label.SOCIAL if x > 0.5 else Label.TOPICAL for g, x in zip(table.group_ids, p)}

    def to_dict(self) -> dict:
        return {"format": MODEL_FORMAT, "version": MODEL_VERSION,
                "features": list(self.features), "mean": self.mean.tolist(),
                "std": self.std.tolist(), "config": vars(self.config),
                "trees": [t.to_dict() for t in self.trees]}

    @classmethod
    def from_dict(cls, d: dict) -> "PredictionModel":
        if d.get("format") != MODEL_FORMAT or d.get("version") != MODEL_VERSION:
            raise ValueError("not a grouptype model file (or unsupported version)")
        return cls(tuple(d["features"]), np.array(d["mean"], dtype=np.float64),
                   np.array(d["std"], dtype=np.float64), [Tree.from_dict(t) for t in d["trees"]],
                   TrainConfig(**d["config"]))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> "PredictionModel":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def train(table: FeatureTable, labels: Mapping[str, Label], config: TrainConfig | None = None,
          features: Sequence[str] = FEATURES, threads: int = 1) -> PredictionModel:
    config = config or TrainConfig()
    ids, y = binary_labels(table, labels)
    if len(set(y.tolist())) < 2:
        raise ValueError("training needs both social and topical groups")
    sub = table.rows(ids).subset(features)
    mean, std = _column_stats(sub.values)
    X = _apply_stats(sub.values, mean, std)
    trees = fit_forest(X, y, config.trees, config.max_depth, config.min_samples_leaf,
                       config.max_features, config.seed, threads)
    return PredictionModel(tuple(features), mean, std, trees, config)


# ---------------------------------------------------------------- evaluation

@dataclass
class Roc:
    fpr: list[float]
    tpr: list[float]
    thresholds: list[float]
    auc: float

    def points(self) -> list[list[float]]:
        return [[f, t] for f, t in zip(self.fpr, self.tpr)]


def roc_auc(scores: Sequence[float], y: Sequence[int]) -> Roc:
    """ROC by a descending threshold sweep (tied scores form one step), AUC by trapezoids."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    pos, neg = int(y.sum()), int(len(y) - y.sum())
    if pos == 0 or neg == 0:
        raise ValueError("ROC needs both classes")
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    last = np.r_[np.nonzero(np.diff(s))[0], len(s) - 1]
    tp = np.cumsum(y)[last]
    fp = (last + 1) - tp
    tpr = np.r_[0.0, tp / pos]
    fpr = np.r_[0.0, fp / neg]
    auc = float(np.sum((fpr[1:] - fpr[:-1]) * (tpr[1:] + tpr[:-1]) / 2))
    return Roc(fpr.tolist(), tpr.tolist(), [math.inf] + s[last].tolist(), auc)


def stratified_folds(y: np.ndarray, k: int, seed: int) -> np.ndarray:
    """Fold index per sample: each class is permuted and dealt round-robin."""
    if k < 2:
        raise ValueError("need at least 2 folds")
    if k > len(y):
        raise ValueError(f"{k} folds for {len(y)} labeled groups")
    rng = np.random.default_rng(seed)
    folds = np.empty(len(y), dtype=np.int64)
    offset = 0
    for c in (0, 1):
        idx = np.nonzero(y == c)[0]
        perm = idx[rng.permutation(len(idx))]
        folds[perm] = (offset + np.arange(len(idx))) % k
        offset += len(idx)
    return folds


def _confusion(pred: np.ndarray, y: np.ndarray) -> dict[str, int]:
    return {"tp": int(((pred == 1) & (y == 1)).sum()), "fp": int(((pred == 1) & (y == 0)).sum()),
            "tn": int(((pred == 0) & (y == 0)).sum()), "fn": int(((pred == 0) & (y == 1)).sum())}


@dataclass
class EvalReport:
    method: str
    accuracy: float
    auc: float
    roc: Roc
    confusion: dict[str, int]
    folds: list[dict] = field(default_factory=list)
    predictions: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"method": self.method, "accuracy": self.accuracy, "auc": self.auc,
                "confusion": self.confusion, "roc": self.roc.points(), "folds": self.folds}


def evaluate_scores(scores: Sequence[ScoreResult], labels: Mapping[str, Label],
                    threshold: float = 0.0) -> EvalReport:
    ids, y, s = [], [], []
    for r in scores:
        lab = labels.get(r.group_id)
        if lab in (Label.SOCIAL, Label.TOPICAL):
            ids.append(r.group_id)
            y.append(int(lab is Label.SOCIAL))
            s.append(r.score)
    y, s = np.array(y), np.array(s)
    pred = (s > threshold).astype(np.int64)
    return EvalReport("score", float((pred == y).mean()), roc_auc(s, y).auc, roc_auc(s, y),
                      _confusion(pred, y), predictions=dict(zip(ids, s.tolist())))


def cross_validate(table: FeatureTable, labels: Mapping[str, Label], k: int = 10, seed: int = 0,
                   config: TrainConfig | None = None, features: Sequence[str] = FEATURES,
                   threads: int = 1) -> EvalReport:
    """k-fold stratified cross-validation; out-of-fold probabilities are pooled."""
    config = config or TrainConfig(seed=seed)
    ids, y = binary_labels(table, labels)
    if len(set(y.tolist())) < 2:
        raise ValueError("cross-validation needs both social and topical groups")
    folds = stratified_folds(y, k, seed)
    lab = table.rows(ids)
    proba = np.zeros(len(ids))
    per_fold = []
    for f in range(k):
        test = folds == f
        train_ids = [g for g, t in zip(ids, test) if not t]
        test_ids = [g for g, t in zip(ids, test) if t]
        model = train(lab.rows(train_ids), labels, config, features, threads)
        p = model.predict_proba(lab.rows(test_ids))
        proba[test] = p
        yt = y[test]
        per_fold.append({"fold": f, "size": int(test.sum()),
                         "accuracy": float(((p > 0.5).astype(int) == yt).mean()),
                         "auc": roc_auc(p, yt).auc if 0 < yt.sum() < len(yt) else None})
    pred = (proba > 0.5).astype(np.int64)
    roc = roc_auc(proba, y)
    return EvalReport("classifier", float((pred == y).mean()), roc.auc, roc, _confusion(pred, y),
                      per_fold, dict(zip(ids, proba.tolist())))


# ---------------------------------------------------------------- feature ranking

def chi_square_statistic(x: np.ndarray, y: np.ndarray, bins: int = 10) -> float:
    """Pearson chi-square of quantile-binned ``x`` against binary ``y``.

    NaN entries form their own bin.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    nan = np.isnan(x)
    cells = np.zeros(len(x), dtype=np.int64)
    if (~nan).any():
        edges = np.unique(np.quantile(x[~nan], np.linspace(0, 1, bins + 1)[1:-1]))
        cells[~nan] = np.searchsorted(edges, x[~nan], side="right")
    cells[nan] = bins + 1
    used = np.unique(cells)
    if len(used) < 2 or len(np.unique(y)) < 2:
        return 0.0
    table = np.array([[np.sum((cells == c) & (y == v)) for v in (0, 1)] for c in used],
                     dtype=np.float64)
    expected = table.sum(1, keepdims=True) * table.sum(0, keepdims=True) / table.sum()
    return float(((table - expected) ** 2 / expected).sum())


def chi_square_rank(table: FeatureTable, labels: Mapping[str, Label], bins: int = 10,
                    features: Sequence[str] = FEATURES) -> list[tuple[str, float]]:
    """Features sorted by decreasing chi-square statistic (ties by feature order)."""
    ids, y = binary_labels(table, labels)
    lab = table.rows(ids)
    stats = [(name, chi_square_statistic(lab.column(name), y, bins)) for name in features]
    order = sorted(range(len(stats)), key=lambda i: (-stats[i][1], i))
    return [stats[i] for i in order]


def agreement_curve(scores: Sequence[ScoreResult], predictions: Mapping[str, Mapping[str, Label]],
                    labels: Mapping[str, Label], bins: int | Sequence[float] = 10) -> dict:
    """Accuracy of each prediction method per S_g bin.

    ``bins`` is a count of equal-width bins over the labeled score range, or
    explicit edges. Empty bins are omitted and listed under ``empty_bins``.
    """
    rows = [(r.group_id, r.score) for r in scores
            if labels.get(r.group_id) in (Label.SOCIAL, Label.TOPICAL)]
    s = np.array([x for _, x in rows])
    if isinstance(bins, int):
        lo, hi = (float(s.min()), float(s.max())) if len(s) else (0.0, 1.0)
        if hi == lo:
            hi = lo + 1.0
        edges = np.linspace(lo, hi, bins + 1)
    else:
        edges = np.asarray(bins, dtype=np.float64)
    which = np.clip(np.searchsorted(edges, s, side="right") - 1, 0, len(edges) - 2)
    out, empty = [], []
    for b in range(len(edges) - 1):
        members = [rows[i][0] for i in np.nonzero(which == b)[0]]
        if not members:
            empty.append(b)
            continue
        acc = {}
        for method, pred in predictions.items():
            hits = [pred[g] is labels[g] for g in members if g in pred]
            acc[method] = sum(hits) / len(hits) if hits else None
        social = sum(labels[g] is Label.SOCIAL for g in members) / len(members)
        out.append({"bin": b, "lo": float(edges[b]), "hi": float(edges[b + 1]),
                    "groups": len(members), "fraction_social": social, "accuracy": acc})
    return {"bins": out, "empty_bins": empty}


def score_deciles(scores: Sequence[ScoreResult], labels: Mapping[str, Label], n: int = 10) -> list[dict]:
    """Fraction of social groups per S_g quantile bin (equal-count, ascending score)."""
    rows = sorted(((r.score, r.group_id) for r in scores
                   if labels.get(r.group_id) in (Label.SOCIAL, Label.TOPICAL)))
    out = []
    for q in range(n):
        chunk = rows[q * len(rows) // n:(q + 1) * len(rows) // n]
        if chunk:
            out.append({"decile": q, "groups": len(chunk), "min_score": chunk[0][0],
                        "max_score": chunk[-1][0],
                        "fraction_social": sum(labels[g] is Label.SOCIAL for _, g in chunk) / len(chunk)})
    return out


def evaluation_report(table: FeatureTable, labels: Mapping[str, Label], seed: int, k: int = 10,
                      top_k: int = 5, config: TrainConfig | None = None,
                      score_fit_ids: Sequence[str] | None = None, threads: int = 1) -> dict:
    """Score, classifier and top-k classifier results in one Table-2-shaped dict."""
    config = config or TrainConfig(seed=seed)
    scores = score_table(table, score_fit_ids)
    score_eval = evaluate_scores(scores, labels)
    cv = cross_validate(table, labels, k, seed, config, FEATURES, threads)
    ranking = chi_square_rank(table, labels)
    top = [name for name, _ in ranking[:top_k]]
    cv_top = cross_validate(table, labels, k, seed, config, top, threads)
    thresholded = predict_by_threshold(scores)
    classifier_pred = {g: Label.SOCIAL if p > 0.5 else Label.TOPICAL for g, p in cv.predictions.items()}
    return {
        "summary": {
            "score": {"accuracy": score_eval.accuracy, "auc": score_eval.auc},
            "classifier": {"accuracy": cv.accuracy, "auc": cv.auc},
            f"classifier_chi2_top{top_k}": {"accuracy": cv_top.accuracy, "auc": cv_top.auc},
        },
        "labeled_groups": len(cv.predictions),
        "folds": k,
        "score": score_eval.to_dict(),
        "classifier": cv.to_dict(),
        f"classifier_chi2_top{top_k}": cv_top.to_dict() | {"features": top},
        "feature_ranking": [{"feature": n, "chi2": s} for n, s in ranking],
        "agreement_curve": agreement_curve(scores, {"score": thresholded, "classifier": classifier_pred},
                                           labels),
        "score_deciles": score_deciles(scores, labels),
    }
