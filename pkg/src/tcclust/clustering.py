"""Agglomerative average-linkage clustering over a precomputed dissimilarity.

The merge tree uses the usual id convention: leaves are 0..n-1 and the
cluster created by merge i is n+i. Ties in the candidate pair search are
broken deterministically by the smallest (left id, right id) pair, so the
tree is a pure function of the input matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

__all__ = [
    "DissimilarityMatrix",
    "MergeRecord",
    "Dendrogram",
    "Partition",
    "average_linkage",
    "cut_tree",
    "save_dendrogram",
    "load_dendrogram",
    "save_partition",
    "load_partition",
]


@dataclass(frozen=True)
class DissimilarityMatrix:
    """Square symmetric matrix of pairwise dissimilarities.

    Entries must be finite; symmetry is required only within 1e-9 to absorb
    accumulation noise, and the stored values keep whichever of the two
    triangles the producer wrote.
    """

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise ValueError(f"dissimilarity must be square, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("dissimilarity entries must be finite")
        if not np.allclose(values, values.T, atol=1e-9, rtol=0.0):
            raise ValueError("dissimilarity must be symmetric within 1e-9")
        object.__setattr__(self, "values", values)

    @property
    def n(self):
        return self.values.shape[0]


class MergeRecord(NamedTuple):
    left: int
    right: int
    height: float
    size: int


@dataclass(frozen=True)
class Dendrogram:
    n_leaves: int
    merges: list = field(default_factory=list)

    def __post_init__(self):
        if len(self.merges) != self.n_leaves - 1:
            raise ValueError(
                f"{self.n_leaves} leaves require {self.n_leaves - 1} merges, "
                f"got {len(self.merges)}"
            )


@dataclass(frozen=True)
class Partition:
    """Cluster labels 1..C, one per leaf, every label occupied."""

    labels: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=int)
        if labels.ndim != 1 or labels.size == 0:
            raise ValueError("labels must be a non-empty 1-d sequence")
        c = labels.max() if labels.size else 0
        present = set(labels.tolist())
        if labels.min() < 1 or present != set(range(1, c + 1)):
            raise ValueError(f"labels must cover 1..C exactly, got {sorted(present)}")
        object.__setattr__(self, "labels", labels)

    @property
    def n_clusters(self):
        return int(self.labels.max())


def average_linkage(dissimilarity):
    """Build the average-linkage (UPGMA) merge tree.

    Parameters
    ----------
    dissimilarity : DissimilarityMatrix or ndarray
        Pairwise dissimilarities; the diagonal is ignored.

    Returns
    -------
    Dendrogram
        n-1 merges with non-decreasing heights. Average linkage is
        reducible, so monotone heights are guaranteed and asserted.
    """
    if not isinstance(dissimilarity, DissimilarityMatrix):
        dissimilarity = DissimilarityMatrix(np.asarray(dissimilarity))
    n = dissimilarity.n
    if n < 2:
        raise ValueError("need at least 2 items to cluster")
    # Work on a shrinking copy; slot i of the working matrix holds cluster ids[i].
    work = 0.5 * (dissimilarity.values + dissimilarity.values.T)
    ids = list(range(n))
    sizes = [1] * n
    merges = []
    prev_height = -np.inf
    for step in range(n - 1):
        m = work.shape[0]
        iu, ju = np.triu_indices(m, k=1)
        dists = work[iu, ju]
        best = dists.min()
        cand = np.nonzero(dists == best)[0]
        # Deterministic tie-break: smallest (left id, right id).
        key = min(
            (min(ids[iu[c]], ids[ju[c]]), max(ids[iu[c]], ids[ju[c]]))
            for c in cand
        )
        i = ids.index(key[0])
        j = ids.index(key[1])
        if i > j:
            i, j = j, i
        height = float(work[i, j])
        assert height >= prev_height - 1e-9, "average linkage heights must be monotone"
        prev_height = max(prev_height, height)
        si, sj = sizes[i], sizes[j]
        merges.append(MergeRecord(key[0], key[1], height, si + sj))
        # Lance-Williams update for the average linkage.
        merged_row = (si * work[i, :] + sj * work[j, :]) / (si + sj)
        work[i, :] = merged_row
        work[:, i] = merged_row
        work[i, i] = 0.0
        keep = [r for r in range(m) if r != j]
        work = work[np.ix_(keep, keep)]
        ids[i] = n + step
        sizes[i] = si + sj
        del ids[j], sizes[j]
    return Dendrogram(n_leaves=n, merges=merges)


def cut_tree(dendrogram, n_clusters):
    """Cut the merge tree into exactly n_clusters groups.

    Undoes the last n_clusters-1 merges; components are labeled 1..C in
    order of their smallest contained leaf id.
    """
    n = dendrogram.n_leaves
    c = int(n_clusters)
    if not 1 <= c <= n:
        raise ValueError(f"n_clusters must be in 1..{n}, got {n_clusters}")
    parent = list(range(2 * n - 1))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for step, rec in enumerate(dendrogram.merges[: n - c]):
        node = n + step
        parent[find(rec.left)] = node
        parent[find(rec.right)] = node

    roots = {}
    labels = np.empty(n, dtype=int)
    for leaf in range(n):
        root = find(leaf)
        if root not in roots:
            roots[root] = len(roots) + 1  # first appearance = smallest leaf id
        labels[leaf] = roots[root]
    return Partition(labels=labels)


def save_dendrogram(dendrogram, path):
    """One merge per line: left right height size (height at 17 digits)."""
    with open(path, "w") as fh:
        for m in dendrogram.merges:
            fh.write("%d %d %.17g %d\n" % (m.left, m.right, m.height, m.size))


def load_dendrogram(path):
    merges = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 4:
                raise ValueError(f"{path}: line {lineno}: expected 4 fields")
            merges.append(
                MergeRecord(int(parts[0]), int(parts[1]), float(parts[2]), int(parts[3]))
            )
    return Dendrogram(n_leaves=len(merges) + 1, merges=merges)


def save_partition(partition, path):
    """One ``index,label`` pair per line, indices in order."""
    with open(path, "w") as fh:
        for i, lab in enumerate(partition.labels):
            fh.write(f"{i},{int(lab)}\n")


def load_partition(path):
    pairs = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            left, _, right = line.partition(",")
            try:
                pairs.append((int(left), int(right)))
            except ValueError as exc:
                raise ValueError(f"{path}: line {lineno}: {exc}") from exc
    pairs.sort()
    if [i for i, _ in pairs] != list(range(len(pairs))):
        raise ValueError(f"{path}: indices must be exactly 0..{len(pairs) - 1}")
    return Partition(labels=np.array([lab for _, lab in pairs], dtype=int))
