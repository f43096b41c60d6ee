"""End-to-end pipeline: data in, dissimilarities, trees, scores, figures out.

Configuration is flat key = value text (lists comma-separated, ``#``
comments allowed); command-line flags override file values. Every run is
fully determined by its configuration, including all random seeds, so a
repeated run reproduces report.csv byte for byte.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, fields as dc_fields
from pathlib import Path

import numpy as np

from . import clustering, dataset, finite_hmm, hdp_hmm, report, validation

__all__ = [
    "PipelineError",
    "RunConfig",
    "parse_config",
    "eisen_dissimilarity",
    "run_pipeline",
]


class PipelineError(RuntimeError):
    """A pipeline stage failed; carries the stage name for diagnostics."""

    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class RunConfig:
    """Everything a pipeline run needs. See the shipped example configs."""

    input: str = ""
    format: str = "tsv"
    out: str = "results"
    normalize: bool = False
    methods: list = field(default_factory=lambda: ["eisen", "finite", "hdp"])
    # finite model settings
    k: list = field(default_factory=lambda: [2])
    seeds: list = field(default_factory=lambda: [0])
    tol: float = 1e-6
    max_iter: int = 200
    # infinite model settings
    b_gamma: list = field(default_factory=lambda: [1.0])
    hdp_seed: int = 0
    burn_in: int = 1000
    samples: int = 50
    spacing: int = 20
    threshold: float = 1e-3
    # clustering / reporting
    cut_c: list = field(default_factory=lambda: [2])
    figures: bool = True

    def validate(self):
        if not self.input:
            raise ValueError("an input dataset is required")
        bad = [m for m in self.methods if m not in ("eisen", "finite", "hdp")]
        if bad:
            raise ValueError(f"unknown methods {bad}; expected eisen/finite/hdp")
        if any(int(c) < 1 for c in self.cut_c):
            raise ValueError("cut_c values must be >= 1")
        if any(int(kk) < 1 for kk in self.k):
            raise ValueError("k values must be >= 1")
        if any(float(b) <= 0 for b in self.b_gamma):
            raise ValueError("b_gamma values must be positive")
        return self


_LIST_FIELDS = {"methods", "k", "seeds", "b_gamma", "cut_c"}
_INT_FIELDS = {"max_iter", "hdp_seed", "burn_in", "samples", "spacing"}
_FLOAT_FIELDS = {"tol", "threshold"}
_BOOL_FIELDS = {"normalize", "figures"}


def _coerce(name, raw):
    if name in _LIST_FIELDS:
        items = [x.strip() for x in str(raw).split(",") if x.strip()] if isinstance(raw, str) else list(raw)
        if name == "methods":
            return [str(x) for x in items]
        if name == "b_gamma":
            return [float(x) for x in items]
        return [int(x) for x in items]
    if name in _INT_FIELDS:
        return int(raw)
    if name in _FLOAT_FIELDS:
        return float(raw)
    if name in _BOOL_FIELDS:
        if isinstance(raw, bool):
            return raw
        text = str(raw).strip().lower()
        if text in ("1", "true", "yes", "on"):
            return True
        if text in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{name}: expected a boolean, got {raw!r}")
    return str(raw)


def parse_config(path=None, overrides=None):
    """Build a RunConfig from an optional file plus override pairs.

    Unknown keys raise immediately so typos cannot silently change a run.
    """
    known = {f.name for f in dc_fields(RunConfig)}
    values = {}
    if path is not None:
        for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}: line {lineno}: expected key = value")
            key, _, raw = line.partition("=")
            key = key.strip().replace("-", "_")
            if key not in known:
                raise ValueError(f"{path}: line {lineno}: unknown key {key!r}")
            values[key] = _coerce(key, raw.strip())
    for key, raw in (overrides or {}).items():
        if raw is None:
            continue
        key = key.replace("-", "_")
        if key not in known:
            raise ValueError(f"unknown configuration key {key!r}")
        values[key] = _coerce(key, raw)
    return RunConfig(**values).validate()


def eisen_dissimilarity(ds):
    """Classic correlation baseline: 1 minus the Pearson correlation of the
    raw series. A series with zero variance has no defined correlation;
    its off-diagonal entries get the maximum dissimilarity 2 and a warning
    is recorded. The diagonal is exactly zero.
    """
    values = np.asarray(getattr(ds, "values", ds), dtype=float)
    n = values.shape[0]
    centered = values - values.mean(axis=1, keepdims=True)
    norms = np.sqrt((centered * centered).sum(axis=1))
    flat = norms == 0.0
    if np.any(flat):
        ids = getattr(ds, "gene_ids", None)
        names = [ids[i] if ids else str(i) for i in np.nonzero(flat)[0][:5]]
        warnings.warn(
            f"{int(flat.sum())} series have zero variance (e.g. {names}); "
            "their dissimilarities default to 2",
            stacklevel=2,
        )
    safe = np.where(flat, 1.0, norms)
    unit = centered / safe[:, None]
    corr = np.clip(unit @ unit.T, -1.0, 1.0)
    out = 1.0 - corr
    out[flat, :] = 2.0
    out[:, flat] = 2.0
    np.fill_diagonal(out, 0.0)
    return clustering.DissimilarityMatrix(out)


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except PipelineError:
        raise
    except Exception as exc:
        raise PipelineError(name, exc) from exc


def _score_partitions(diss, cfg, truth, method, param, seed_tag, reports, outdir, tag):
    dendro = clustering.average_linkage(diss)
    clustering.save_dendrogram(dendro, outdir / f"dendrogram_{tag}.txt")
    if cfg.figures:
        report.render_dendrogram(dendro, outdir / f"dendrogram_{tag}.png", title=tag)
    for c in cfg.cut_c:
        part = clustering.cut_tree(dendro, int(c))
        clustering.save_partition(part, outdir / f"partition_{tag}_C{int(c)}.txt")
        rep = validation.compute_indices(
            diss,
            part,
            truth=truth,
            method=method,
            metadata={"param": param, "seed": seed_tag},
        )
        reports.append(rep)
    return dendro


def _mean_report(per_seed, method, param, c):
    """Average every numeric index over seeds for one (param, C) cell."""
    rows = [r for r in per_seed if r.n_clusters == c]
    mean = validation.IndexReport(
        method=method,
        n_clusters=c,
        metadata={"param": param, "seed": "mean"},
    )
    for attr in (
        "rand",
        "crand",
        "jaccard",
        "sens",
        "spec",
        "purity",
        "silhouette_global",
        "dunn",
        "davies_bouldin",
    ):
        vals = [getattr(r, attr) for r in rows]
        if any(v is None for v in vals):
            continue
        setattr(mean, attr, float(np.mean(vals)))
    return mean


def _run_eisen(ds, cfg, truth, reports, outdir):
    diss = eisen_dissimilarity(ds)
    dataset.save_matrix(diss, outdir / "dissimilarity_eisen.txt")
    _score_partitions(diss, cfg, truth, "eisen", None, None, reports, outdir, "eisen")


def _run_finite(ds, cfg, truth, reports, outdir):
    for k in cfg.k:
        per_seed = []
        for seed in cfg.seeds:
            tag = f"finite_k{int(k)}_seed{int(seed)}"
            model, _ = finite_hmm.baum_welch(ds, int(k), int(seed), tol=cfg.tol, max_iter=cfg.max_iter)
            finite_hmm.save_model(model, outdir / f"model_{tag}.txt")
            diss = finite_hmm.dissimilarity_matrix(model, ds)
            dataset.save_matrix(diss, outdir / f"dissimilarity_{tag}.txt")
            start = len(reports)
            _score_partitions(diss, cfg, truth, "finite", int(k), int(seed), reports, outdir, tag)
            per_seed.extend(reports[start:])
        for c in cfg.cut_c:
            reports.append(_mean_report(per_seed, "finite", int(k), int(c)))


def _run_hdp(ds, cfg, truth, reports, outdir):
    values = np.asarray(ds.values, dtype=float)
    for bg in cfg.b_gamma:
        tag = f"hdp_bg{bg:g}_seed{int(cfg.hdp_seed)}"
        hypers = hdp_hmm.HdpHyperParams.for_data(values, b_gamma=float(bg))
        sample_set = hdp_hmm.run_chain(
            values, hypers, int(cfg.hdp_seed), (cfg.burn_in, cfg.samples, cfg.spacing)
        )
        hdp_hmm.save_samples(sample_set, outdir / f"snapshots_{tag}.txt")
        hist = hdp_hmm.represented_state_histogram(sample_set)
        report.write_states_hist_csv(hist, outdir / f"states_hist_{tag}.csv")
        matrix, sparsity = hdp_hmm.empirical_transition_matrix(sample_set, threshold=cfg.threshold)
        report.write_transition_csv(matrix, sparsity, outdir / f"transition_{tag}.csv")
        if cfg.figures:
            report.render_states_hist(hist, outdir / f"states_hist_{tag}.png", title=tag)
            report.render_transition(matrix, sparsity, outdir / f"transition_{tag}.png", title=tag)
        diss = hdp_hmm.empirical_dissimilarity(sample_set)
        dataset.save_matrix(diss, outdir / f"dissimilarity_{tag}.txt")
        _score_partitions(diss, cfg, truth, "hdp", float(bg), int(cfg.hdp_seed), reports, outdir, tag)


def run_pipeline(cfg):
    """Run every configured method and assemble the report artifacts.

    Returns the list of IndexReports, one per (method, param, seed, C)
    row, in the exact order written to report.csv. Artifacts written
    before a failing stage are kept for inspection.
    """
    cfg.validate()
    outdir = Path(cfg.out)
    outdir.mkdir(parents=True, exist_ok=True)
    ds = _stage("ingest", dataset.load_dataset, cfg.input, cfg.format)
    if cfg.normalize:
        ds = _stage("normalize", dataset.normalize_t1, ds)
    truth = ds.truth_labels
    reports = []
    for method in cfg.methods:
        runner = {"eisen": _run_eisen, "finite": _run_finite, "hdp": _run_hdp}[method]
        _stage(method, runner, ds, cfg, truth, reports, outdir)
    _stage("report", report.write_report_csv, reports, outdir / "report.csv")
    _stage("report", report.write_reports_jsonl, reports, outdir / "reports.jsonl")
    if cfg.figures and truth is not None:
        _stage("report", report.render_index_curves, reports, outdir / "index_curves.png")
    return reports
