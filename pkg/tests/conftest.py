"""Shared corpus builders for the pipeline, CLI, and acceptance tests."""

import numpy as np

from tcclust.dataset import ExpressionDataset, generate_mixture
from tcclust.finite_hmm import FiniteHmmModel


def pull_home_model(home, means, stay=0.9, var=0.25):
    """A model whose every row pulls toward one home state, so sequences
    mostly emit from that state's mean with short excursions."""
    k = len(means)
    off = (1.0 - stay) / (k - 1)
    row = np.full(k, off)
    row[home] = stay
    return FiniteHmmModel(
        k=k,
        initial=row.copy(),
        transition=np.tile(row, (k, 1)),
        means=np.asarray(means, dtype=float),
        variances=np.full(k, var),
    )


def recovery_corpus(n_per_class=20, seq_length=12, seed=2024):
    """Three well-separated generating models over shared state means
    (-5, 0, +5); class j lives mostly at mean j with rare excursions.

    stay=0.97 keeps within-class trajectories nearly constant (so the
    overlap dissimilarity separates classes cleanly) while the rare
    excursions populate every transition arc of the pooled dynamics.
    """
    means = [-5.0, 0.0, 5.0]
    models = [pull_home_model(h, means, stay=0.97) for h in range(3)]
    ds, _ = generate_mixture(models, n_per_class, seq_length, seed)
    return ds


def temporal_corpus(n_per_class=30, seed=2024):
    """Two classes whose mean curves hold the same multiset of values and
    differ only in the ORDER of two mid-level points.

    Both classes follow the length-48 template
    [-5]*6, [-0.8]*9, [+0.8]*18, [-0.8]*9, [+5]*6; class B swaps the
    values at one +0.8 position and one -0.8 position. Noise is wide on
    the +-5 anchors (sigma 1.05) and narrow on the mid levels (sigma 0.4).

    The anchors carry almost all of the variance that the Pearson
    correlation normalizes by, so the two-point swap moves the
    correlation between classes by less than the noise jitter moves it
    within a class: a correlation-based dissimilarity cannot separate
    the classes. A state-sequence method reads the swap directly as two
    mismatched hidden states, which is plenty at this noise level.
    """
    mid = 0.8
    base = np.concatenate([
        np.full(6, -5.0),
        np.full(9, -mid),
        np.full(18, mid),
        np.full(9, -mid),
        np.full(6, 5.0),
    ])
    arr_a = base.copy()
    arr_b = base.copy()
    p, q = 20, 38
    arr_b[p], arr_b[q] = arr_a[q], arr_a[p]
    sig = np.where(np.abs(base) == 5.0, 1.05, 0.4)

    rng = np.random.default_rng(seed)
    rows, labels = [], []
    for cls, arr in enumerate([arr_a, arr_b]):
        for _ in range(n_per_class):
            rows.append(arr + rng.normal(size=arr.size) * sig)
            labels.append(cls)
    return ExpressionDataset(
        gene_ids=[f"g{i:03d}" for i in range(len(rows))],
        values=np.vstack(rows),
        time_labels=[f"t{j + 1}" for j in range(base.size)],
        truth_labels=labels,
    )


def tiny_mixture(seed=11, n_per_model=6, seq_length=6):
    """Small two-class corpus for fast pipeline and CLI tests."""
    models = [
        pull_home_model(0, [-3.0, 3.0], stay=0.92, var=0.2),
        pull_home_model(1, [-3.0, 3.0], stay=0.92, var=0.2),
    ]
    ds, _ = generate_mixture(models, n_per_model, seq_length, seed)
    return ds
