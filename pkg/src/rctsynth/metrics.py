"""Fidelity scores between a real and a synthetic table.

Univariate closeness is one minus the two-sample Kolmogorov-Smirnov distance
for continuous columns and one minus the total variation distance for
discrete columns. Bivariate closeness is one minus half the Spearman
correlation gap for continuous pairs, and one minus half the L1 gap between
joint contingency proportions for discrete and mixed pairs (the continuous
member of a mixed pair is binned by the real data's quartiles, so both tables
are cut identically). Machine-learning efficacy trains one classifier on real
rows and one on synthetic rows, evaluates both on the same held-out real rows,
and reports how far apart their precision/recall/F1 land.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .dataset import (
    CONTINUOUS,
    DISCRETE,
    DataTable,
    bin_by_boundaries,
    empirical_quantile,
    quartile_boundaries,
    train_test_split,
)
from .errors import DegenerateInputError
from .regression import _fit_logistic_arrays, _sigmoid


# ---------------------------------------------------------------------------
# univariate scores
# ---------------------------------------------------------------------------

def ks_complement(real, synth) -> float:
    """1 minus the two-sample KS statistic, evaluated at all pooled points."""
    a = _observed_floats(real, "real")
    b = _observed_floats(synth, "synth")
    a_sorted = np.sort(a)
    b_sorted = np.sort(b)
    pooled = np.concatenate([a_sorted, b_sorted])
    cdf_a = np.searchsorted(a_sorted, pooled, side="right") / a_sorted.size
    cdf_b = np.searchsorted(b_sorted, pooled, side="right") / b_sorted.size
    return 1.0 - float(np.max(np.abs(cdf_a - cdf_b)))


def tvd_complement(real, synth) -> float:
    """1 minus half the L1 distance between stratum proportions.

    Strata are the union of values observed in either sample.
    """
    a = _observed_labels(real, "real")
    b = _observed_labels(synth, "synth")
    strata = sorted(set(a) | set(b))
    pa = np.array([a.count(s) for s in strata], dtype=np.float64) / len(a)
    pb = np.array([b.count(s) for s in strata], dtype=np.float64) / len(b)
    return 1.0 - 0.5 * float(np.sum(np.abs(pa - pb)))


def _observed_floats(values, name) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    arr = arr[~np.isnan(arr)]
    if arr.size == 0:
        raise ValueError(f"{name} sample is empty")
    return arr


def _observed_labels(values, name) -> list:
    out = [v for v in values if v is not None and not _is_nan(v)]
    if not out:
        raise ValueError(f"{name} sample is empty")
    return out


def _is_nan(v) -> bool:
    return isinstance(v, float) and math.isnan(v)


# ---------------------------------------------------------------------------
# bivariate scores
# ---------------------------------------------------------------------------

def spearman(x, y) -> float:
    """Pearson correlation of mid-ranks; 0 when either input is constant."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError("x and y must have the same length")
    if x.size < 3:
        raise ValueError("spearman needs at least 3 observations")
    if np.all(x == x[0]) or np.all(y == y[0]):
        return 0.0
    rx = rankdata(x)
    ry = rankdata(y)
    rx = (rx - rx.mean()) / rx.std()
    ry = (ry - ry.mean()) / ry.std()
    return float(np.mean(rx * ry))


def correlation_similarity(real_xy, synth_xy) -> float:
    """1 minus half the gap between real and synthetic Spearman correlations."""
    rho_real = spearman(*real_xy)
    rho_synth = spearman(*synth_xy)
    return 1.0 - 0.5 * abs(rho_real - rho_synth)


def contingency_similarity(real_ab, synth_ab) -> float:
    """1 minus half the L1 gap between joint contingency proportions."""
    real_cells = _joint_cells(*real_ab)
    synth_cells = _joint_cells(*synth_ab)
    cells = set(real_cells) | set(synth_cells)
    total = 0.0
    n_real = sum(real_cells.values())
    n_synth = sum(synth_cells.values())
    for cell in cells:
        total += abs(real_cells.get(cell, 0) / n_real - synth_cells.get(cell, 0) / n_synth)
    return 1.0 - 0.5 * total


def _joint_cells(a, b) -> dict:
    counts: dict = {}
    kept = 0
    for va, vb in zip(a, b):
        if va is None or vb is None or _is_nan(va) or _is_nan(vb):
            continue
        counts[(va, vb)] = counts.get((va, vb), 0) + 1
        kept += 1
    if kept == 0:
        raise ValueError("empty sample in contingency computation")
    return counts


# ---------------------------------------------------------------------------
# classifiers and efficacy
# ---------------------------------------------------------------------------

def _feature_matrix(train: DataTable, other: DataTable, label: str):
    """Standardized, one-hot expanded, mean/mode imputed feature matrices.

    Imputation and scaling statistics come from ``train`` only and are applied
    to both tables.
    """
    blocks_train = []
    blocks_other = []
    for col in train.schema:
        if col.name == label:
            continue
        tv = train.values(col.name).astype(np.float64)
        ov = other.values(col.name).astype(np.float64)
        tm = train.missing(col.name)
        om = other.missing(col.name)
        if col.kind == CONTINUOUS:
            fill = float(np.mean(tv[~tm])) if (~tm).any() else 0.0
            tv = np.where(tm, fill, tv)
            ov = np.where(om, fill, ov)
            mu = float(np.mean(tv))
            sd = float(np.std(tv))
            if sd == 0.0:
                sd = 1.0
            blocks_train.append(((tv - mu) / sd)[:, None])
            blocks_other.append(((ov - mu) / sd)[:, None])
        else:
            observed = tv[~tm].astype(np.int64)
            mode = int(np.bincount(observed, minlength=len(col.categories)).argmax()) if observed.size else 0
            ti = np.where(tm, mode, tv).astype(np.int64)
            oi = np.where(om, mode, ov).astype(np.int64)
            eye = np.eye(len(col.categories))
            blocks_train.append(eye[ti])
            blocks_other.append(eye[oi])
    return np.hstack(blocks_train), np.hstack(blocks_other)


def knn_classify(train: DataTable, test: DataTable, label: str, k: int = 5) -> np.ndarray:
    """Majority vote over the k nearest training rows by Euclidean distance.

    Features are standardized and imputed from the training table; vote ties
    go to the negative class (code 0).
    """
    if k > train.n_rows:
        raise ValueError(f"k={k} exceeds the {train.n_rows} training rows")
    if k < 1:
        raise ValueError("k must be at least 1")
    y = train.values(label)
    if len(np.unique(y[~train.missing(label)])) < 2:
        raise DegenerateInputError("training labels contain a single class")
    x_train, x_test = _feature_matrix(train, test, label)
    d2 = (
        np.sum(x_test * x_test, axis=1)[:, None]
        - 2.0 * x_test @ x_train.T
        + np.sum(x_train * x_train, axis=1)[None, :]
    )
    neighbor_idx = np.argsort(d2, axis=1, kind="stable")[:, :k]
    votes = np.sum(y[neighbor_idx] == 1, axis=1)
    return (votes * 2 > k).astype(np.int64)


def logistic_classify(train: DataTable, test: DataTable, label: str) -> np.ndarray:
    """Logistic-model classifier at the 0.5 probability threshold."""
    y = train.values(label).astype(np.float64)
    if len(np.unique(y[~train.missing(label)])) < 2:
        raise DegenerateInputError("training labels contain a single class")
    x_train, x_test = _feature_matrix(train, test, label)
    ones_train = np.hstack([np.ones((x_train.shape[0], 1)), x_train])
    ones_test = np.hstack([np.ones((x_test.shape[0], 1)), x_test])
    names = [f"f{i}" for i in range(ones_train.shape[1])]
    model = _fit_logistic_arrays(ones_train, y, names, label, ())
    p = _sigmoid(ones_test @ model.coefficients)
    return (p >= 0.5).astype(np.int64)


CLASSIFIERS = {
    "knn": lambda train, test, label, k: knn_classify(train, test, label, k),
    "logistic": lambda train, test, label, k: logistic_classify(train, test, label),
}


@dataclass(frozen=True)
class PRF1:
    precision: float
    recall: float
    f1: float
    degenerate: bool = False

    def as_dict(self) -> dict:
        return {"precision": self.precision, "recall": self.recall, "f1": self.f1}


def prf1(predicted, truth) -> PRF1:
    """Precision, recall and F1 with positives coded 1; 0 on empty denominators."""
    pred = np.asarray(predicted, dtype=np.int64)
    true = np.asarray(truth, dtype=np.int64)
    if pred.shape != true.shape:
        raise ValueError("predicted and truth must have the same length")
    tp = int(np.sum((pred == 1) & (true == 1)))
    fp = int(np.sum((pred == 1) & (true == 0)))
    fn = int(np.sum((pred == 0) & (true == 1)))
    degenerate = False
    if tp + fp == 0:
        precision, degenerate = 0.0, True
    else:
        precision = tp / (tp + fp)
    if tp + fn == 0:
        recall, degenerate = 0.0, True
    else:
        recall = tp / (tp + fn)
    if precision + recall == 0.0:
        f1, degenerate = 0.0, True
    else:
        f1 = 2.0 * precision * recall / (precision + recall)
    return PRF1(precision, recall, f1, degenerate)


def ml_efficacy(
    real: DataTable,
    synth: DataTable,
    label: str,
    seed: int,
    test_fraction: float = 0.3,
    k: int = 5,
    classifiers=("knn", "logistic"),
) -> dict:
    """Compare classifiers trained on real versus synthetic rows.

    The real table is split once; the synthetic table is split with the same
    seed and fraction (same-size protocol), and both classifiers predict the
    same real test rows. Reports each side's precision/recall/F1 along with
    absolute and relative (real - synth) differences.
    """
    if real.schema != synth.schema:
        raise ValueError("real and synthetic tables must share a schema")
    if not real.column_schema(label).is_binary:
        raise ValueError(f"label {label!r} must be binary")
    real_train, real_test = train_test_split(real, test_fraction, seed)
    synth_train, _ = train_test_split(synth, test_fraction, seed)
    for name, tbl in (("real", real_train), ("synthetic", synth_train)):
        labels = tbl.values(label)
        if len(np.unique(labels[~tbl.missing(label)])) < 2:
            raise DegenerateInputError(f"{name} training labels contain a single class")
    truth = real_test.values(label)
    out = {}
    for clf_name in classifiers:
        clf = CLASSIFIERS[clf_name]
        scores_real = prf1(clf(real_train, real_test, label, k), truth)
        scores_synth = prf1(clf(synth_train, real_test, label, k), truth)
        diff = {
            key: scores_real.as_dict()[key] - scores_synth.as_dict()[key]
            for key in ("precision", "recall", "f1")
        }
        rel_diff = {
            key: (diff[key] / scores_real.as_dict()[key])
            if scores_real.as_dict()[key] != 0.0
            else float("nan")
            for key in diff
        }
        out[clf_name] = {
            "real": scores_real.as_dict(),
            "synthetic": scores_synth.as_dict(),
            "diff": diff,
            "rel_diff": rel_diff,
        }
    return out


# ---------------------------------------------------------------------------
# whole-table scoring and aggregation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MetricConfig:
    label: str
    test_fraction: float = 0.3
    knn_k: int = 5
    classifiers: tuple[str, ...] = ("knn", "logistic")
    run_efficacy: bool = True


@dataclass
class MetricsReport:
    """Scores for one synthetic table against the real one."""

    run_id: int
    univariate: dict[str, float] = field(default_factory=dict)
    bivariate: dict[str, float] = field(default_factory=dict)
    efficacy: dict[str, dict] = field(default_factory=dict)
    skipped: tuple[str, ...] = ()
    timing_seconds: float = 0.0

    def rows(self):
        """Long-format (metric, target, value) triples, deterministic order."""
        for column in sorted(self.univariate):
            metric, target = self.univariate_kind(column), column
            yield metric, target, self.univariate[column]
        for pair in sorted(self.bivariate):
            metric, target = self.bivariate_kind(pair), pair
            yield metric, target, self.bivariate[pair]
        for clf in sorted(self.efficacy):
            block = self.efficacy[clf]
            for side in ("real", "synthetic", "diff", "rel_diff"):
                for key in ("precision", "recall", "f1"):
                    yield f"efficacy_{key}_{side}", clf, block[side][key]

    _kinds: dict = field(default_factory=dict, repr=False)

    def univariate_kind(self, column: str) -> str:
        return self._kinds.get(("u", column), "ks_complement")

    def bivariate_kind(self, pair: str) -> str:
        return self._kinds.get(("b", pair), "correlation_similarity")


def pair_key(a: str, b: str) -> str:
    return f"{a}|{b}"


def score_tables(
    real: DataTable,
    synth: DataTable,
    config: MetricConfig,
    seed: int = 0,
    run_id: int = 0,
) -> MetricsReport:
    """Score every column, every column pair, and (optionally) ML efficacy."""
    if real.schema != synth.schema:
        raise ValueError("real and synthetic tables must share a schema")
    report = MetricsReport(run_id=run_id)
    skipped: list[str] = []

    cont = [c.name for c in real.schema if c.kind == CONTINUOUS]
    disc = [c.name for c in real.schema if c.kind == DISCRETE]

    for name in cont:
        report.univariate[name] = ks_complement(
            _observed_column(real, name), _observed_column(synth, name)
        )
        report._kinds[("u", name)] = "ks_complement"
    for name in disc:
        report.univariate[name] = tvd_complement(
            list(_observed_column(real, name)), list(_observed_column(synth, name))
        )
        report._kinds[("u", name)] = "tvd_complement"

    # continuous pairs: correlation similarity on pairwise-complete rows
    for i in range(len(cont)):
        for j in range(i + 1, len(cont)):
            a, b = cont[i], cont[j]
            real_xy = _pairwise_complete(real, a, b)
            synth_xy = _pairwise_complete(synth, a, b)
            key = pair_key(a, b)
            if _constant(real_xy[0]) or _constant(real_xy[1]) or \
               _constant(synth_xy[0]) or _constant(synth_xy[1]):
                skipped.append(key)
                continue
            report.bivariate[key] = correlation_similarity(real_xy, synth_xy)
            report._kinds[("b", key)] = "correlation_similarity"

    # discrete and mixed pairs: contingency similarity; the continuous member
    # is binned by the real table's quartiles on both sides
    names = [c.name for c in real.schema]
    for i in range(len(names)):
        for j in range(i + 1, len(names)):
            a, b = names[i], names[j]
            kind_a = real.column_schema(a).kind
            kind_b = real.column_schema(b).kind
            if kind_a == CONTINUOUS and kind_b == CONTINUOUS:
                continue
            real_ab = (_binned_or_codes(real, real, a), _binned_or_codes(real, real, b))
            synth_ab = (_binned_or_codes(synth, real, a), _binned_or_codes(synth, real, b))
            key = pair_key(a, b)
            report.bivariate[key] = contingency_similarity(real_ab, synth_ab)
            report._kinds[("b", key)] = "contingency_similarity"

    if config.run_efficacy:
        report.efficacy = ml_efficacy(
            real,
            synth,
            config.label,
            seed=seed,
            test_fraction=config.test_fraction,
            k=config.knn_k,
            classifiers=config.classifiers,
        )
    report.skipped = tuple(skipped)
    return report


def _observed_column(table: DataTable, name: str) -> np.ndarray:
    vals = table.values(name)
    return vals[~table.missing(name)]


def _pairwise_complete(table: DataTable, a: str, b: str):
    keep = ~(table.missing(a) | table.missing(b))
    return table.values(a)[keep], table.values(b)[keep]


def _constant(values) -> bool:
    arr = np.asarray(values, dtype=np.float64)
    return arr.size == 0 or bool(np.all(arr == arr[0]))


def _binned_or_codes(table: DataTable, boundary_table: DataTable, name: str) -> list:
    """Column as discrete labels, quartile-binning continuous columns by the
    boundary table's observed quartiles."""
    col = table.column_schema(name)
    miss = table.missing(name)
    if col.kind == DISCRETE:
        return [None if m else int(v) for v, m in zip(table.values(name), miss)]
    ref = boundary_table.values(name)[~boundary_table.missing(name)]
    cuts = quartile_boundaries(ref)
    bins = bin_by_boundaries(table.values(name), cuts)
    return [None if m else int(v) for v, m in zip(bins, miss)]


def aggregate_runs(reports) -> dict:
    """Box-plot statistics per metric key across runs.

    Returns ``{(metric, target): {mean, sd, min, q25, median, q75, max, count}}``
    with the population standard deviation.
    """
    reports = list(reports)
    if not reports:
        raise ValueError("aggregate_runs needs at least one report")
    collected: dict[tuple[str, str], list[float]] = {}
    for report in reports:
        for metric, target, value in report.rows():
            collected.setdefault((metric, target), []).append(float(value))
    out = {}
    for key in sorted(collected):
        values = np.sort(np.asarray(collected[key], dtype=np.float64))
        values = values[~np.isnan(values)]
        if values.size == 0:
            continue
        out[key] = {
            "mean": float(np.mean(values)),
            "sd": float(np.std(values)),
            "min": float(values[0]),
            "q25": empirical_quantile(values, 0.25),
            "median": empirical_quantile(values, 0.5),
            "q75": empirical_quantile(values, 0.75),
            "max": float(values[-1]),
            "count": int(values.size),
        }
    return out
