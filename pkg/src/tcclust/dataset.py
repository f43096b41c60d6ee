"""Loading, validation, and generation of time-course expression datasets.

A dataset is a rectangular matrix of N gene series measured at T ordered
time points, optionally carrying integer class labels used only for
external cluster validation. Files are tab- or comma-delimited text with a
header row; the first column holds gene identifiers and an optional final
column named ``label`` holds the class labels.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace

import numpy as np

__all__ = [
    "DatasetError",
    "ParseError",
    "ValidationError",
    "NormalizationError",
    "ExpressionDataset",
    "SyntheticSpec",
    "load_dataset",
    "save_dataset",
    "normalize_t1",
    "generate_synthetic",
    "generate_mixture",
    "save_matrix",
    "load_matrix",
]


class DatasetError(ValueError):
    """Base class for dataset ingestion problems."""


class ParseError(DatasetError):
    """A delimited input file could not be parsed."""


class ValidationError(DatasetError):
    """Parsed content violates a structural requirement."""


class NormalizationError(DatasetError):
    """A series cannot be rescaled to its first time point."""


@dataclass
class ExpressionDataset:
    """In-memory expression matrix.

    Attributes
    ----------
    gene_ids : list of str
        Unique row identifiers, one per series.
    values : ndarray, shape (N, T)
        Expression values, finite floats.
    time_labels : list of str
        Column names for the T time points.
    truth_labels : list of int or None
        Optional class labels (may include -1 for an outlier class).
    """

    gene_ids: list
    values: np.ndarray
    time_labels: list
    truth_labels: list | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)

    @property
    def n_genes(self):
        return self.values.shape[0]

    @property
    def n_times(self):
        return self.values.shape[1]

    def validate(self):
        """Check structural invariants, raising ValidationError on failure."""
        n, t = self.values.shape
        if n < 2 or t < 2:
            raise ValidationError(
                f"dataset must have at least 2 series and 2 time points, got {n}x{t}"
            )
        if len(self.gene_ids) != n:
            raise ValidationError("gene id count does not match row count")
        if len(set(self.gene_ids)) != n:
            dupes = sorted({g for g in self.gene_ids if self.gene_ids.count(g) > 1})
            raise ValidationError(f"duplicate gene ids: {dupes[:5]}")
        if len(self.time_labels) != t:
            raise ValidationError("time label count does not match column count")
        if not np.all(np.isfinite(self.values)):
            bad = np.argwhere(~np.isfinite(self.values))[0]
            raise ValidationError(
                f"non-finite value at gene {self.gene_ids[bad[0]]!r}, column {bad[1] + 1}"
            )
        if self.truth_labels is not None and len(self.truth_labels) != n:
            raise ValidationError("truth label count does not match row count")
        return self


_DELIMS = {"tsv": "\t", "csv": ","}


def load_dataset(path, fmt="tsv"):
    """Read a delimited expression file into a validated ExpressionDataset.

    The header row is required. A final column named ``label`` is parsed as
    integer truth labels instead of expression values.
    """
    if fmt not in _DELIMS:
        raise ValueError(f"unknown format {fmt!r}, expected one of {sorted(_DELIMS)}")
    delim = _DELIMS[fmt]
    with open(path, newline="") as fh:
        rows = [row for row in csv.reader(fh, delimiter=delim) if row]
    if not rows:
        raise ParseError(f"{path}: empty file")
    header = [c.strip() for c in rows[0]]
    if len(header) < 3:
        raise ParseError(f"{path}: header must name an id column and at least 2 time points")
    has_labels = header[-1].lower() == "label"
    time_labels = header[1 : -1 if has_labels else len(header)]
    width = len(header)

    gene_ids, values, labels = [], [], []
    for lineno, row in enumerate(rows[1:], start=2):
        row = [c.strip() for c in row]
        if len(row) != width:
            raise ParseError(
                f"{path}: row {lineno} has {len(row)} fields, expected {width}"
            )
        gene_ids.append(row[0])
        raw = row[1 : width - 1] if has_labels else row[1:]
        try:
            values.append([float(c) for c in raw])
        except ValueError as exc:
            raise ParseError(f"{path}: row {lineno}: {exc}") from None
        if has_labels:
            try:
                labels.append(int(row[-1]))
            except ValueError:
                raise ParseError(
                    f"{path}: row {lineno}: label {row[-1]!r} is not an integer"
                ) from None
    if not gene_ids:
        raise ParseError(f"{path}: no data rows")
    ds = ExpressionDataset(
        gene_ids=gene_ids,
        values=np.asarray(values, dtype=float),
        time_labels=time_labels,
        truth_labels=labels if has_labels else None,
    )
    return ds.validate()


def save_dataset(dataset, path, fmt="tsv"):
    """Write a dataset back to delimited text with a header row."""
    delim = _DELIMS[fmt]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, delimiter=delim, lineterminator="\n")
        header = ["gene"] + list(dataset.time_labels)
        if dataset.truth_labels is not None:
            header.append("label")
        writer.writerow(header)
        for i, gid in enumerate(dataset.gene_ids):
            row = [gid] + ["%.17g" % v for v in dataset.values[i]]
            if dataset.truth_labels is not None:
                row.append(str(dataset.truth_labels[i]))
            writer.writerow(row)


def normalize_t1(dataset):
    """Rescale every series by its value at the first time point.

    Returns a new dataset; the input is left untouched. After the
    transform every series starts at exactly 1, so the operation is
    idempotent. A zero at the first time point is unrecoverable and raises
    NormalizationError naming the offending gene.
    """
    first = dataset.values[:, 0]
    zero = np.nonzero(first == 0.0)[0]
    if zero.size:
        raise NormalizationError(
            f"gene {dataset.gene_ids[zero[0]]!r} has value 0 at the first time point"
        )
    scaled = dataset.values / first[:, None]
    return replace(dataset, values=scaled)


@dataclass
class SyntheticSpec:
    """Recipe for sampling sequences from a known generating model.

    ``true_model`` is a finite Gaussian-emission HMM (see
    :mod:`tcclust.finite_hmm`); sampling is ancestral and fully determined
    by ``seed``.
    """

    n_sequences: int
    seq_length: int
    true_model: object
    seed: int

    def validate(self):
        if self.n_sequences < 1:
            raise ValueError("n_sequences must be >= 1")
        if self.seq_length < 1:
            raise ValueError("seq_length must be >= 1")
        return self


def _sample_paths(model, n,
                  length, rng):
    k = model.k
    states = np.empty((n, length), dtype=int)
    for i in range(n):
        s = rng.choice(k, p=model.initial)
        for t in range(length):
            states[i, t] = s
            if t + 1 < length:
                s = rng.choice(k, p=model.transition[s])
    sd = np.sqrt(model.variances)
    obs = model.means[states] + rng.standard_normal(states.shape) * sd[states]
    return states, obs


def generate_synthetic(spec):
    """Sample a dataset from one generating model.

    Returns (dataset, trajectories) where trajectories is the (N, T) array
    of true hidden state indices. All series carry branch label 0.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    states, obs = _sample_paths(spec.true_model, spec.n_sequences, spec.seq_length, rng)
    ds = ExpressionDataset(
        gene_ids=[f"g{i:04d}" for i in range(spec.n_sequences)],
        values=obs,
        time_labels=[f"t{j + 1}" for j in range(spec.seq_length)],
        truth_labels=[0] * spec.n_sequences,
    )
    return ds, states


def generate_mixture(models, n_per_model, seq_length, seed):
    """Sample a labeled corpus from several generating models.

    Each series carries the index of the model that produced it as its
    truth label. Returns (dataset, trajectories).
    """
    rng = np.random.default_rng(seed)
    all_states, all_obs, labels = [], [], []
    for j, model in enumerate(models):
        states, obs = _sample_paths(model, n_per_model, seq_length, rng)
        all_states.append(states)
        all_obs.append(obs)
        labels.extend([j] * n_per_model)
    values = np.vstack(all_obs)
    ds = ExpressionDataset(
        gene_ids=[f"g{i:04d}" for i in range(values.shape[0])],
        values=values,
        time_labels=[f"t{j + 1}" for j in range(seq_length)],
        truth_labels=labels,
    )
    return ds, np.vstack(all_states)


def save_matrix(matrix, path):
    """Write a symmetric matrix as delimited text, one row per line.

    Values are rendered with 17 significant digits so a round trip through
    text reproduces the exact float64 bits.
    """
    values = np.asarray(getattr(matrix, "values", matrix), dtype=float)
    if values.ndim != 2 or values.shape[0] != values.shape[1]:
        raise ValidationError(f"matrix must be square, got shape {values.shape}")
    if not np.allclose(values, values.T, atol=1e-9, rtol=0.0):
        raise ValidationError("matrix is not symmetric within 1e-9")
    with open(path, "w") as fh:
        for row in values:
            fh.write(" ".join("%.17g" % v for v in row))
            fh.write("\n")


def load_matrix(path):
    """Read a matrix written by save_matrix back into an ndarray."""
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rows.append([float(c) for c in line.split()])
            except ValueError as exc:
                raise ParseError(f"{path}: line {lineno}: {exc}") from None
    if not rows:
        raise ParseError(f"{path}: empty matrix file")
    n = len(rows[0])
    if any(len(r) != n for r in rows):
        raise ParseError(f"{path}: ragged rows")
    if len(rows) != n:
        raise ParseError(f"{path}: expected square matrix, got {len(rows)}x{n}")
    return np.asarray(rows, dtype=float)
