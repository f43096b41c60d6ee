"""Report assembly: delimited summaries, JSON records, and figures.

The CSV mirrors the usual summary-table layout, one row per
(method, parameter, seed-or-mean, cluster count) cell with the columns
rand, crand, jacc, sens, spec, sil, dunn, DB*, puri. Figures are rendered
with the Agg backend so the pipeline runs headless.
"""

from __future__ import annotations

import csv
import json
import math

import numpy as np

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

__all__ = [
    "CSV_COLUMNS",
    "write_report_csv",
    "write_reports_jsonl",
    "read_reports_jsonl",
    "write_states_hist_csv",
    "write_transition_csv",
    "render_dendrogram",
    "render_states_hist",
    "render_transition",
    "render_index_curves",
]

CSV_COLUMNS = [
    "method",
    "param",
    "seed",
    "C",
    "rand",
    "crand",
    "jacc",
    "sens",
    "spec",
    "sil",
    "dunn",
    "db_star",
    "puri",
]

_REPORT_FIELDS = [
    ("rand", "rand"),
    ("crand", "crand"),
    ("jacc", "jaccard"),
    ("sens", "sens"),
    ("spec", "spec"),
    ("sil", "silhouette_global"),
    ("dunn", "dunn"),
    ("db_star", "davies_bouldin"),
    ("puri", "purity"),
]


def _cell(value):
    if value is None:
        return ""
    if isinstance(value, float):
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        if math.isnan(value):
            return "nan"
        return "%.6f" % value
    return str(value)


def report_row(report):
    """Flatten one IndexReport into the CSV column order."""
    meta = report.metadata
    row = [
        report.method,
        _cell(meta.get("param")),
        _cell(meta.get("seed")),
        str(report.n_clusters),
    ]
    for _, attr in _REPORT_FIELDS:
        row.append(_cell(getattr(report, attr)))
    return row


def write_report_csv(reports, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for rep in reports:
            writer.writerow(report_row(rep))


def write_reports_jsonl(reports, path):
    """One JSON record per report row, keyed like the CSV but unrounded."""
    with open(path, "w") as fh:
        for rep in reports:
            record = {
                "method": rep.method,
                "param": rep.metadata.get("param"),
                "seed": rep.metadata.get("seed"),
                "C": rep.n_clusters,
            }
            for col, attr in _REPORT_FIELDS:
                val = getattr(rep, attr)
                if isinstance(val, float) and not math.isfinite(val):
                    val = repr(val)  # JSON has no inf/nan literals
                record[col] = val
            fh.write(json.dumps(record) + "\n")


def read_reports_jsonl(path):
    """Rebuild IndexReports from a reports.jsonl file (inverse of the
    writer, including the string-encoded inf/nan values)."""
    from .validation import IndexReport

    reports = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            kwargs = {}
            for col, attr in _REPORT_FIELDS:
                val = record.get(col)
                if isinstance(val, str):
                    val = float(val)
                kwargs[attr] = val
            reports.append(
                IndexReport(
                    method=record.get("method", ""),
                    n_clusters=int(record.get("C", 0)),
                    metadata={"param": record.get("param"), "seed": record.get("seed")},
                    **kwargs,
                )
            )
    return reports


def write_states_hist_csv(hist, path):
    """Histogram of represented-state counts, rows of (K, snapshots)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["n_states", "snapshots"])
        for k in sorted(hist):
            writer.writerow([k, hist[k]])


def write_transition_csv(matrix, sparsity, path):
    """Thresholded transition matrix; the sparsity fraction rides along as
    a leading comment line."""
    matrix = np.asarray(matrix)
    with open(path, "w", newline="") as fh:
        fh.write("# sparsity=%.6f\n" % sparsity)
        writer = csv.writer(fh, lineterminator="\n")
        for row in matrix:
            writer.writerow(["%.6f" % v for v in row])


def _merges_to_scipy(dendrogram):
    return np.asarray(
        [[m.left, m.right, m.height, m.size] for m in dendrogram.merges],
        dtype=float,
    )


def render_dendrogram(dendrogram, path, title=""):
    """Draw the merge tree to an image file."""
    from scipy.cluster.hierarchy import dendrogram as scipy_draw

    fig, ax = plt.subplots(figsize=(max(6.0, dendrogram.n_leaves * 0.12), 4.0))
    scipy_draw(_merges_to_scipy(dendrogram), ax=ax, no_labels=dendrogram.n_leaves > 40,
               color_threshold=0.0, link_color_func=lambda _: "tab:blue")
    ax.set_ylabel("merge height")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_states_hist(hist, path, title=""):
    """Bar chart of the posterior distribution over represented states."""
    ks = sorted(hist)
    fig, ax = plt.subplots(figsize=(5.0, 3.5))
    ax.bar(ks, [hist[k] for k in ks], color="tab:blue", width=0.8)
    ax.set_xlabel("represented states")
    ax.set_ylabel("snapshots")
    ax.set_xticks(ks)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_transition(matrix, sparsity, path, title=""):
    """Heatmap of a (thresholded) transition matrix."""
    matrix = np.asarray(matrix)
    fig, ax = plt.subplots(figsize=(4.5, 4.0))
    im = ax.imshow(matrix, cmap="Greys", vmin=0.0, vmax=max(matrix.max(), 1e-12))
    fig.colorbar(im, ax=ax, fraction=0.046)
    ax.set_xlabel("to state")
    ax.set_ylabel("from state")
    label = f"fraction above threshold: {sparsity:.3f}"
    ax.set_title(f"{title}\n{label}" if title else label)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_index_curves(reports, path, index="crand"):
    """Line plot of one index against the cluster count, one curve per
    (method, param) pair. Mean rows stand in for their per-seed rows;
    groups that never produced a mean row (single-chain methods) fall
    back to the per-seed values."""
    attr = dict(_REPORT_FIELDS).get(index, index)
    groups = {}
    for rep in reports:
        val = getattr(rep, attr, None)
        if val is None or not math.isfinite(val):
            continue
        key = (rep.method, str(rep.metadata.get("param", "")))
        aggregate = rep.metadata.get("seed") in (None, "", "mean")
        groups.setdefault(key, []).append((aggregate, rep.n_clusters, val))
    curves = {}
    for key, rows in groups.items():
        has_aggregate = any(agg for agg, _, _ in rows)
        curves[key] = [
            (c, val) for agg, c, val in rows if agg == has_aggregate
        ]
    fig, ax = plt.subplots(figsize=(5.5, 4.0))
    for (method, param), pts in sorted(curves.items()):
        pts.sort()
        label = method if not param else f"{method} ({param})"
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=label)
    ax.set_xlabel("clusters")
    ax.set_ylabel(index)
    if curves:
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
