"""External and internal cluster validation indices.

External indices compare a candidate partition against truth labels via
the four pair categories: SS (co-clustered in both), SD (co-clustered in
the candidate only), DS (co-clustered in the truth only), DD (separated in
both). Internal indices score a partition directly against the pairwise
dissimilarity it was cut from.

Naming caveat: the classical printed definitions are
``sensitivity = SS/(SS+SD)`` and ``specificity = SS/(SS+DS)``, and those
are exactly what :func:`sensitivity` and :func:`specificity` compute. The
summary-table convention used by the reporting layer swaps the two (its
``sens`` column is SS/(SS+DS), which is 1.0 for a single all-inclusive
cluster); :func:`compute_indices` applies that mapping.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "PairCounts",
    "IndexReport",
    "pair_counts",
    "rand_index",
    "jaccard_index",
    "crand_index",
    "sensitivity",
    "specificity",
    "purity",
    "silhouette",
    "dunn_index",
    "davies_bouldin",
    "compute_indices",
]


@dataclass(frozen=True)
class PairCounts:
    ss: int
    sd: int
    ds: int
    dd: int

    @property
    def total(self):
        return self.ss + self.sd + self.ds + self.dd


def _as_labels(partition):
    labels = np.asarray(getattr(partition, "labels", partition))
    if labels.ndim != 1:
        raise ValueError("labels must be 1-d")
    return labels


def pair_counts(candidate, truth):
    """Classify every unordered pair of items into SS/SD/DS/DD."""
    a = _as_labels(candidate)
    b = _as_labels(truth)
    if a.shape != b.shape:
        raise ValueError(f"label lengths differ: {a.shape[0]} vs {b.shape[0]}")
    n = a.shape[0]
    if n < 2:
        raise ValueError("need at least 2 items to form pairs")
    iu, ju = np.triu_indices(n, k=1)
    same_a = a[iu] == a[ju]
    same_b = b[iu] == b[ju]
    ss = int(np.sum(same_a & same_b))
    sd = int(np.sum(same_a & ~same_b))
    ds = int(np.sum(~same_a & same_b))
    dd = int(np.sum(~same_a & ~same_b))
    return PairCounts(ss=ss, sd=sd, ds=ds, dd=dd)


def rand_index(pc):
    """Fraction of pairs treated concordantly: (SS + DD) / all pairs."""
    return (pc.ss + pc.dd) / pc.total


def jaccard_index(pc):
    """SS / (SS + SD + DS); vacuously 1.0 when no pair is co-clustered anywhere."""
    den = pc.ss + pc.sd + pc.ds
    if den == 0:
        return 1.0
    return pc.ss / den


def sensitivity(pc):
    """Printed-definition ratio SS / (SS + SD); vacuously 1.0 when the
    candidate co-clusters no pair at all."""
    den = pc.ss + pc.sd
    if den == 0:
        return 1.0
    return pc.ss / den


def specificity(pc):
    """Printed-definition ratio SS / (SS + DS); vacuously 1.0 when the
    truth co-clusters no pair at all."""
    den = pc.ss + pc.ds
    if den == 0:
        return 1.0
    return pc.ss / den


def crand_index(candidate, truth):
    """Chance-adjusted Rand index computed from the contingency table.

    Equals 1.0 for identical partitions, has expectation 0 under random
    labeling with fixed marginals, and can be negative. Degenerate
    marginals (expected agreement equals maximal agreement, e.g. both
    partitions trivial) return 1.0 when the partitions are identical and
    0.0 otherwise.
    """
    a = _as_labels(candidate)
    b = _as_labels(truth)
    if a.shape != b.shape:
        raise ValueError(f"label lengths differ: {a.shape[0]} vs {b.shape[0]}")
    n = a.shape[0]
    if n < 2:
        raise ValueError("need at least 2 items")
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    ra, cb = ai.max() + 1, bi.max() + 1
    table = np.zeros((ra, cb), dtype=np.int64)
    np.add.at(table, (ai, bi), 1)

    def comb2(x):
        return x * (x - 1) / 2.0

    sum_cells = comb2(table.astype(float)).sum()
    sum_rows = comb2(table.sum(axis=1).astype(float)).sum()
    sum_cols = comb2(table.sum(axis=0).astype(float)).sum()
    total = comb2(float(n))
    expected = sum_rows * sum_cols / total
    maximal = 0.5 * (sum_rows + sum_cols)
    if maximal == expected:
        return 1.0 if np.array_equal(ai, bi) else 0.0
    return (sum_cells - expected) / (maximal - expected)


def purity(candidate, truth):
    """Mean fraction of each candidate cluster taken by its majority label."""
    a = _as_labels(candidate)
    b = _as_labels(truth)
    if a.shape != b.shape:
        raise ValueError(f"label lengths differ: {a.shape[0]} vs {b.shape[0]}")
    correct = 0
    for lab in np.unique(a):
        members = b[a == lab]
        _, counts = np.unique(members, return_counts=True)
        correct += counts.max()
    return correct / a.shape[0]


def _check_internal_args(d, labels):
    d = np.asarray(getattr(d, "values", d), dtype=float)
    labels = _as_labels(labels)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise ValueError(f"dissimilarity must be square, got {d.shape}")
    if labels.shape[0] != d.shape[0]:
        raise ValueError("label count does not match matrix size")
    return d, labels


def silhouette(d, partition):
    """Per-item silhouettes, per-cluster means, and the global score.

    The global score is the unweighted mean of the per-cluster means.
    Singletons score 0. A single-cluster partition has no between-cluster
    term; the per-item values are NaN and the global score is the +inf
    sentinel used in the summary tables.

    Returns
    -------
    (s, cluster_means, global_score)
    """
    d, labels = _check_internal_args(d, partition)
    clusters = np.unique(labels)
    n = labels.shape[0]
    if clusters.size == 1:
        return np.full(n, np.nan), {int(clusters[0]): math.nan}, math.inf
    s = np.zeros(n)
    for i in range(n):
        own = labels[i]
        mask_own = labels == own
        if mask_own.sum() == 1:
            s[i] = 0.0
            continue
        # Subtract the diagonal explicitly: some producers leave a nonzero
        # self-dissimilarity on it.
        a = (d[i, mask_own].sum() - d[i, i]) / (mask_own.sum() - 1)
        b = min(
            d[i, labels == other].mean()
            for other in clusters
            if other != own
        )
        denom = max(a, b)
        s[i] = 0.0 if denom == 0 else (b - a) / denom
    cluster_means = {int(c): float(s[labels == c].mean()) for c in clusters}
    global_score = float(np.mean(list(cluster_means.values())))
    return s, cluster_means, global_score


def dunn_index(d, partition):
    """Smallest between-cluster distance over largest cluster diameter.

    Distances are taken pointwise: the minimum pairwise dissimilarity
    between clusters, the maximum within. A zero maximal diameter (e.g.
    every cluster a singleton) yields the +inf sentinel.
    """
    d, labels = _check_internal_args(d, partition)
    clusters = np.unique(labels)
    if clusters.size < 2:
        raise ValueError("dunn index needs at least 2 clusters")
    max_diam = 0.0
    for c in clusters:
        idx = np.nonzero(labels == c)[0]
        if idx.size > 1:
            sub = d[np.ix_(idx, idx)]
            iu = np.triu_indices(idx.size, k=1)
            max_diam = max(max_diam, float(sub[iu].max()))
    min_sep = math.inf
    for ii, c in enumerate(clusters):
        for other in clusters[ii + 1 :]:
            block = d[np.ix_(labels == c, labels == other)]
            min_sep = min(min_sep, float(block.min()))
    if max_diam == 0.0:
        return math.inf
    return min_sep / max_diam


def davies_bouldin(d, partition):
    """Medoid-based Davies-Bouldin score (lower is better).

    Each cluster is summarized by its medoid (member minimizing the total
    dissimilarity to the cluster, lowest index on ties); scatter is the
    mean dissimilarity to the medoid and separation is the medoid-medoid
    dissimilarity. A zero separation with positive scatter contributes the
    +inf sentinel; zero separation with zero scatter contributes 0.
    """
    d, labels = _check_internal_args(d, partition)
    clusters = np.unique(labels)
    if clusters.size < 2:
        raise ValueError("davies-bouldin needs at least 2 clusters")
    medoids, scatters = [], []
    for c in clusters:
        idx = np.nonzero(labels == c)[0]
        sub = d[np.ix_(idx, idx)]
        totals = sub.sum(axis=1)
        m = idx[int(np.argmin(totals))]  # argmin takes the lowest index on ties
        medoids.append(m)
        scatters.append(float(d[idx, m].mean()))
    worst = []
    for i in range(clusters.size):
        best = 0.0
        for j in range(clusters.size):
            if i == j:
                continue
            sep = float(d[medoids[i], medoids[j]])
            num = scatters[i] + scatters[j]
            if sep == 0.0:
                ratio = 0.0 if num == 0.0 else math.inf
            else:
                ratio = num / sep
            best = max(best, ratio)
        worst.append(best)
    return float(np.mean(worst))


@dataclass
class IndexReport:
    """One row of validation scores for a (method, parameter, C, seed) cell.

    External fields are None when the dataset carries no truth labels.
    ``sens``/``spec`` follow the summary-table convention (see module
    docstring): sens = SS/(SS+DS), spec = SS/(SS+SD).
    """

    method: str
    n_clusters: int
    rand: float | None = None
    crand: float | None = None
    jaccard: float | None = None
    sens: float | None = None
    spec: float | None = None
    purity: float | None = None
    silhouette_global: float | None = None
    dunn: float | None = None
    davies_bouldin: float | None = None
    metadata: dict = field(default_factory=dict)


def compute_indices(d, partition, truth=None, method="", metadata=None):
    """Score one partition, applying the summary-table conventions.

    Internal indices always come from the dissimilarity; external ones
    need truth labels. A single-cluster partition gets the sentinel row
    (silhouette inf, dunn inf, davies_bouldin 0.0).
    """
    d_arr, labels = _check_internal_args(d, partition)
    c = int(np.unique(labels).size)
    if c == 1:
        sil, dn, db = math.inf, math.inf, 0.0
    else:
        _, _, sil = silhouette(d_arr, labels)
        dn = dunn_index(d_arr, labels)
        db = davies_bouldin(d_arr, labels)
    report = IndexReport(
        method=method,
        n_clusters=c,
        silhouette_global=sil,
        dunn=dn,
        davies_bouldin=db,
        metadata=dict(metadata or {}),
    )
    if truth is not None:
        truth = _as_labels(truth)
        pc = pair_counts(labels, truth)
        report.rand = rand_index(pc)
        report.crand = crand_index(labels, truth)
        report.jaccard = jaccard_index(pc)
        # Table convention: the sens column is the truth-pair recall
        # SS/(SS+DS) (printed "specificity"), and vice versa.
        report.sens = specificity(pc)
        report.spec = sensitivity(pc)
        report.purity = purity(labels, truth)
    return report
