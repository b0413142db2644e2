"""Detection and ranking metrics used to compare fairness tests."""

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import digamma

from .errors import ContractError, UndefinedMetricError
from .linalg import child_seed, make_rng


@dataclass(frozen=True)
class PrCurve:
    thresholds: np.ndarray
    precision: np.ndarray
    recall: np.ndarray
    average_precision: float

    def to_rows(self):
        return list(zip(self.recall.tolist(), self.precision.tolist()))


@dataclass(frozen=True)
class RankedRelevance:
    predicted_scores: np.ndarray
    true_relevance: np.ndarray
    ndcg: float


def _check_binary(scores, labels):
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels).reshape(-1)
    if scores.shape != labels.shape:
        raise ContractError("scores and labels must have the same length")
    if not np.all((labels == 0) | (labels == 1)):
        raise ContractError("labels must be 0/1")
    labels = labels.astype(np.int64)
    if labels.sum() == 0:
        raise UndefinedMetricError("average precision needs at least one positive label")
    return scores, labels


def _descending(scores):
    # stable sort on the negated scores keeps ties in index order
    return np.argsort(-scores, kind="stable")


def average_precision(scores, labels):
    """Non-interpolated AP: mean precision at the rank of each positive."""
    scores, labels = _check_binary(scores, labels)
    ranked = labels[_descending(scores)]
    hits = np.cumsum(ranked)
    precision = hits / np.arange(1, ranked.size + 1)
    return float(precision[ranked == 1].sum() / hits[-1])


def pr_curve(scores, labels):
    """Precision/recall at every distinct threshold, highest threshold first."""
    scores, labels = _check_binary(scores, labels)
    order = _descending(scores)
    s, ranked = scores[order], labels[order]
    tp = np.cumsum(ranked)
    # last position of each run of equal scores
    last = np.r_[np.flatnonzero(np.diff(s) != 0), s.size - 1]
    precision = tp[last] / (last + 1)
    recall = tp[last] / tp[-1]
    return PrCurve(s[last], precision, recall, average_precision(scores, labels))


def ndcg(predicted_scores, true_relevance):
    """Linear-gain NDCG of the predicted order (ties by index)."""
    pred = np.asarray(predicted_scores, dtype=np.float64).reshape(-1)
    rel = np.asarray(true_relevance, dtype=np.float64).reshape(-1)
    if pred.shape != rel.shape or pred.size == 0:
        raise ContractError("ndcg needs two equal-length, non-empty vectors")
    if np.any(rel < 0):
        raise ContractError("relevances must be >= 0")
    discount = 1.0 / np.log2(np.arange(2, rel.size + 2))
    ideal = float(np.sort(rel)[::-1] @ discount)
    if ideal <= 0:
        raise UndefinedMetricError("ndcg is undefined when every relevance is zero")
    dcg = float(rel[_descending(pred)] @ discount)
    return dcg / ideal


def mi_discrete_continuous(feature, c, k=3, seed=0):
    """Nearest-neighbour estimate (nats) of I(feature; c) for discrete ``c``.

    For each point, ``d_i`` is the distance to its k-th neighbour within its
    own class and ``m_i`` counts all points strictly closer than ``d_i``
    (the point itself included). Features get a tiny seeded uniform jitter
    so that repeated values do not collapse the neighbour distances.
    """
    x = np.asarray(feature, dtype=np.float64).reshape(-1)
    c = np.asarray(c).reshape(-1)
    if x.shape != c.shape:
        raise ContractError("feature and c must have the same length")
    if k < 1:
        raise ContractError("k must be >= 1")
    n = x.size
    if n and np.ptp(x) == 0:
        # a constant carries no information; jitter alone would only add noise
        return 0.0
    rng = make_rng(child_seed(seed, "mi-jitter"))
    x = (x + rng.uniform(0.0, 1e-10, size=n))[:, None]
    radius = np.empty(n)
    class_size = np.empty(n)
    for value in np.unique(c):
        idx = np.flatnonzero(c == value)
        if idx.size < k + 1:
            raise ContractError(f"class {value!r} has {idx.size} members, needs >= {k + 1}")
        dist, _ = cKDTree(x[idx]).query(x[idx], k=k + 1)
        radius[idx] = dist[:, -1]
        class_size[idx] = idx.size
    tree = cKDTree(x)
    strict = np.nextafter(radius, 0.0)
    m = tree.query_ball_point(x, strict, return_length=True).astype(np.float64)
    m = np.maximum(m, 1.0)
    mi = digamma(n) - np.mean(digamma(class_size)) + digamma(k) - np.mean(digamma(m))
    return max(0.0, float(mi))


def feature_mi(dataset, attribute=0, k=3, seed=0):
    """Group-aggregated MI of every feature group with one protected column."""
    c = dataset.protected[:, attribute]
    per_feature = np.array([
        mi_discrete_continuous(dataset.features[:, j], c, k, seed)
        for j in range(dataset.n_features)
    ])
    return np.array([per_feature[g].mean() for g in dataset.feature_groups()])


def transparency_ndcg(report, dataset, attribute=0, k=3, seed=0):
    """NDCG of a transparency ranking against kNN mutual information."""
    if dataset.protected.shape[1] == 0:
        raise ContractError("dataset has no protected columns")
    relevance = feature_mi(dataset, attribute, k, seed)
    return ndcg(report.scores, relevance)


def compare_models(fair_scores, unfair_scores):
    """Medians, IQRs and P(unfair > fair) over all cross pairs (ties count half)."""
    fair = np.asarray(fair_scores, dtype=np.float64).reshape(-1)
    unfair = np.asarray(unfair_scores, dtype=np.float64).reshape(-1)
    if fair.size == 0 or unfair.size == 0:
        raise ContractError("both score sets must be non-empty")
    sf = np.sort(fair)
    below = np.searchsorted(sf, unfair, side="left")
    ties = np.searchsorted(sf, unfair, side="right") - below
    prob = float((below.sum() + 0.5 * ties.sum()) / (fair.size * unfair.size))

    def iqr(a):
        q1, q3 = np.percentile(a, [25, 75])
        return float(q3 - q1)

    return {
        "fair_median": float(np.median(fair)),
        "unfair_median": float(np.median(unfair)),
        "fair_iqr": iqr(fair),
        "unfair_iqr": iqr(unfair),
        "p_unfair_greater": prob,
        "n_fair": int(fair.size),
        "n_unfair": int(unfair.size),
    }
