import numpy as np
import numpy.testing as npt
import pytest

from conftest import tiny_mixture
from tcclust.dataset import ExpressionDataset, save_dataset
from tcclust.pipeline import (
    PipelineError,
    RunConfig,
    eisen_dissimilarity,
    parse_config,
    run_pipeline,
)
from tcclust.report import CSV_COLUMNS


def write_corpus(tmp_path, name="mix.tsv"):
    ds = tiny_mixture()
    path = tmp_path / name
    save_dataset(ds, path)
    return path, ds


def small_config(tmp_path, **kw):
    path, _ = write_corpus(tmp_path)
    base = dict(
        input=str(path),
        out=str(tmp_path / "res"),
        methods=["eisen", "finite"],
        k=[2],
        seeds=[0, 1],
        cut_c=[2],
        figures=False,
    )
    base.update(kw)
    return RunConfig(**base)


def test_parse_config_file_and_overrides(tmp_path):
    cfg_file = tmp_path / "run.cfg"
    cfg_file.write_text(
        "# comment line\n"
        "input = data.tsv\n"
        "methods = eisen, finite\n"
        "k = 2, 3\n"
        "burn-in = 500   # dashes normalize to underscores\n"
        "normalize = true\n"
        "b_gamma = 0.5, 2\n"
    )
    cfg = parse_config(cfg_file, {"out": "results", "seeds": "1,2,3", "tol": None})
    assert cfg.input == "data.tsv"
    assert cfg.methods == ["eisen", "finite"]
    assert cfg.k == [2, 3]
    assert cfg.burn_in == 500
    assert cfg.normalize is True
    assert cfg.b_gamma == [0.5, 2.0]
    assert cfg.seeds == [1, 2, 3]
    assert cfg.out == "results"
    assert cfg.tol == 1e-6  # None overrides are ignored


def test_parse_config_unknown_key(tmp_path):
    cfg_file = tmp_path / "run.cfg"
    cfg_file.write_text("input = x.tsv\nbogus = 1\n")
    with pytest.raises(ValueError, match="line 2.*bogus"):
        parse_config(cfg_file)
    with pytest.raises(ValueError, match="mystery"):
        parse_config(None, {"input": "x.tsv", "mystery": 4})


def test_parse_config_bad_lines(tmp_path):
    cfg_file = tmp_path / "run.cfg"
    cfg_file.write_text("input x.tsv\n")
    with pytest.raises(ValueError, match="key = value"):
        parse_config(cfg_file)
    cfg_file.write_text("input = x.tsv\nnormalize = sometimes\n")
    with pytest.raises(ValueError, match="boolean"):
        parse_config(cfg_file)


def test_config_validation():
    with pytest.raises(ValueError, match="input"):
        RunConfig().validate()
    with pytest.raises(ValueError, match="methods"):
        RunConfig(input="x", methods=["kmeans"]).validate()
    with pytest.raises(ValueError, match="cut_c"):
        RunConfig(input="x", cut_c=[0]).validate()
    with pytest.raises(ValueError, match="b_gamma"):
        RunConfig(input="x", b_gamma=[0.0]).validate()


def test_eisen_perfect_and_anti_correlation():
    ds = ExpressionDataset(
        gene_ids=["a", "b", "c"],
        values=np.array([[1.0, 2.0, 3.0], [2.0, 4.0, 6.0], [3.0, 2.0, 1.0]]),
        time_labels=["t1", "t2", "t3"],
    )
    d = eisen_dissimilarity(ds).values
    assert d[0, 1] == pytest.approx(0.0, abs=1e-12)
    assert d[0, 2] == pytest.approx(2.0, abs=1e-12)
    npt.assert_array_equal(np.diag(d), 0.0)


def test_eisen_matches_corrcoef():
    rng = np.random.default_rng(19)
    values = rng.normal(size=(6, 9))
    ds = ExpressionDataset(
        gene_ids=[f"g{i}" for i in range(6)],
        values=values,
        time_labels=[f"t{j}" for j in range(9)],
    )
    d = eisen_dissimilarity(ds).values
    want = 1.0 - np.corrcoef(values)
    np.fill_diagonal(want, 0.0)
    npt.assert_allclose(d, want, atol=1e-12)


def test_eisen_flat_series_warns():
    ds = ExpressionDataset(
        gene_ids=["flat", "b", "c"],
        values=np.array([[2.0, 2.0, 2.0], [1.0, 2.0, 3.0], [3.0, 1.0, 2.0]]),
        time_labels=["t1", "t2", "t3"],
    )
    with pytest.warns(UserWarning, match="flat"):
        d = eisen_dissimilarity(ds).values
    assert d[0, 1] == 2.0 and d[0, 2] == 2.0
    assert d[0, 0] == 0.0


def test_run_pipeline_artifacts_and_rows(tmp_path):
    cfg = small_config(tmp_path, cut_c=[2, 3])
    reports = run_pipeline(cfg)
    # eisen: 2 cuts; finite: 2 seeds x 2 cuts + 2 mean rows
    assert len(reports) == 2 + 4 + 2
    res = tmp_path / "res"
    for name in (
        "dissimilarity_eisen.txt",
        "dendrogram_eisen.txt",
        "partition_eisen_C2.txt",
        "model_finite_k2_seed0.txt",
        "dissimilarity_finite_k2_seed1.txt",
        "partition_finite_k2_seed1_C3.txt",
        "report.csv",
        "reports.jsonl",
    ):
        assert (res / name).exists(), name
    header = (res / "report.csv").read_text().splitlines()[0]
    assert header == ",".join(CSV_COLUMNS)


def test_run_pipeline_mean_of_seeds(tmp_path):
    cfg = small_config(tmp_path)
    reports = run_pipeline(cfg)
    per_seed = [
        r for r in reports if r.method == "finite" and r.metadata["seed"] != "mean"
    ]
    mean_rows = [
        r for r in reports if r.method == "finite" and r.metadata["seed"] == "mean"
    ]
    assert len(per_seed) == 2 and len(mean_rows) == 1
    for attr in ("rand", "crand", "jaccard", "silhouette_global", "dunn"):
        want = np.mean([getattr(r, attr) for r in per_seed])
        assert getattr(mean_rows[0], attr) == pytest.approx(want)


def test_run_pipeline_deterministic(tmp_path):
    cfg_a = small_config(tmp_path, out=str(tmp_path / "a"))
    cfg_b = small_config(tmp_path, out=str(tmp_path / "b"))
    run_pipeline(cfg_a)
    run_pipeline(cfg_b)
    a = (tmp_path / "a" / "report.csv").read_bytes()
    b = (tmp_path / "b" / "report.csv").read_bytes()
    assert a == b


def test_run_pipeline_hdp_artifacts(tmp_path):
    cfg = small_config(
        tmp_path,
        methods=["hdp"],
        burn_in=30,
        samples=5,
        spacing=2,
    )
    reports = run_pipeline(cfg)
    assert [r.method for r in reports] == ["hdp"]
    res = tmp_path / "res"
    tag = "hdp_bg1_seed0"
    for name in (
        f"snapshots_{tag}.txt",
        f"states_hist_{tag}.csv",
        f"transition_{tag}.csv",
        f"dissimilarity_{tag}.txt",
        f"partition_{tag}_C2.txt",
    ):
        assert (res / name).exists(), name
    first = (res / f"transition_{tag}.csv").read_text().splitlines()[0]
    assert first.startswith("# sparsity=")


def test_run_pipeline_k1_single_cluster_row(tmp_path):
    cfg = small_config(tmp_path, methods=["finite"], k=[1], seeds=[0], cut_c=[2])
    reports = run_pipeline(cfg)
    # k=1 marginals are degenerate, the matrix is all zero, but cutting
    # and scoring still work deterministically
    diss = np.loadtxt(tmp_path / "res" / "dissimilarity_finite_k1_seed0.txt")
    npt.assert_array_equal(diss, 0.0)
    assert all(r.n_clusters == 2 for r in reports)


def test_run_pipeline_figures(tmp_path):
    cfg = small_config(tmp_path, figures=True, methods=["eisen"])
    run_pipeline(cfg)
    res = tmp_path / "res"
    assert (res / "dendrogram_eisen.png").stat().st_size > 0
    assert (res / "index_curves.png").stat().st_size > 0


def test_run_pipeline_stage_failure(tmp_path):
    cfg = small_config(tmp_path, input=str(tmp_path / "missing.tsv"))
    with pytest.raises(PipelineError, match="stage 'ingest' failed"):
        run_pipeline(cfg)


def test_run_pipeline_normalize_failure_stage(tmp_path):
    ds = ExpressionDataset(
        gene_ids=["a", "b"],
        values=np.array([[0.0, 1.0, 2.0], [1.0, 2.0, 3.0]]),
        time_labels=["t1", "t2", "t3"],
    )
    path = tmp_path / "zeros.tsv"
    save_dataset(ds, path)
    cfg = RunConfig(input=str(path), out=str(tmp_path / "res"), normalize=True)
    with pytest.raises(PipelineError, match="stage 'normalize' failed"):
        run_pipeline(cfg)


def test_run_pipeline_keeps_partial_artifacts(tmp_path):
    # make the hdp stage fail after eisen already wrote its files
    cfg = small_config(tmp_path, methods=["eisen", "hdp"], samples=0)
    with pytest.raises(PipelineError, match="stage 'hdp' failed"):
        run_pipeline(cfg)
    assert (tmp_path / "res" / "dissimilarity_eisen.txt").exists()
