"""Command-line interface.

Each subcommand wraps one stage of the workflow so intermediate files
can be produced, inspected, and fed forward by hand; ``pipeline`` runs
the whole sweep from a config file. Commands exit 0 on success and 1 on
failure, printing ``stage '<name>' failed: <reason>`` to stderr.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import clustering, dataset, finite_hmm, hdp_hmm, pipeline, report, validation


def _load_input(args):
    ds = dataset.load_dataset(args.input, args.format)
    if getattr(args, "normalize", False):
        ds = dataset.normalize_t1(ds)
    return ds


def _int_list(text):
    return [int(x) for x in str(text).split(",") if x.strip()]


def cmd_ingest(args):
    ds = _load_input(args)
    out_fmt = args.out_format or args.format
    dataset.save_dataset(ds, args.out, out_fmt)
    labeled = "yes" if ds.truth_labels is not None else "no"
    print(f"genes={ds.n_genes} times={ds.n_times} labels={labeled} -> {args.out}")


def cmd_fit_finite(args):
    ds = _load_input(args)
    model, trace = finite_hmm.baum_welch(
        ds, args.k, args.seed, tol=args.tol, max_iter=args.max_iter
    )
    finite_hmm.save_model(model, args.out)
    print(
        f"k={args.k} seed={args.seed} iterations={len(trace)} "
        f"loglik={trace[-1]:.6f} -> {args.out}"
    )


def cmd_fit_hdp(args):
    ds = _load_input(args)
    hypers = hdp_hmm.HdpHyperParams.for_data(ds.values, b_gamma=args.b_gamma)
    sample_set = hdp_hmm.run_chain(
        ds.values, hypers, args.seed, (args.burn_in, args.samples, args.spacing)
    )
    hdp_hmm.save_samples(sample_set, args.out)
    hist = hdp_hmm.represented_state_histogram(sample_set)
    mode_k = max(hist, key=lambda k: (hist[k], -k))
    print(
        f"b_gamma={args.b_gamma:g} seed={args.seed} snapshots={len(sample_set.samples)} "
        f"mode_states={mode_k} -> {args.out}"
    )


def cmd_similarity(args):
    if args.method == "eisen":
        if not args.input:
            raise ValueError("eisen dissimilarities need --input")
        diss = pipeline.eisen_dissimilarity(_load_input(args))
    elif args.method == "finite":
        if not args.input or not args.model:
            raise ValueError("finite dissimilarities need --input and --model")
        model = finite_hmm.load_model(args.model)
        diss = finite_hmm.dissimilarity_matrix(model, _load_input(args))
    else:
        if not args.snapshots:
            raise ValueError("hdp dissimilarities need --snapshots")
        sample_set = hdp_hmm.load_samples(args.snapshots)
        diss = hdp_hmm.empirical_dissimilarity(sample_set)
    dataset.save_matrix(diss, args.out)
    print(f"method={args.method} n={diss.n} -> {args.out}")


def cmd_cluster(args):
    matrix = dataset.load_matrix(args.matrix)
    dendro = clustering.average_linkage(matrix)
    clustering.save_dendrogram(dendro, args.out)
    cuts = args.cut_c or []
    if cuts:
        template = args.partition_out
        if template is None:
            template = str(Path(args.out).with_suffix("")) + "_C{C}.txt"
        if len(cuts) > 1 and "{C}" not in template:
            raise ValueError("--partition-out needs a {C} placeholder for multiple cuts")
        for c in cuts:
            part = clustering.cut_tree(dendro, c)
            path = template.replace("{C}", str(c))
            clustering.save_partition(part, path)
            print(f"C={c} -> {path}")
    print(f"n={dendro.n_leaves} merges={len(dendro.merges)} -> {args.out}")


def cmd_validate(args):
    matrix = dataset.load_matrix(args.matrix)
    part = clustering.load_partition(args.partition)
    truth = None
    if args.input:
        ds = dataset.load_dataset(args.input, args.format)
        if ds.truth_labels is None:
            raise ValueError(f"{args.input} carries no label column")
        truth = ds.truth_labels
    rep = validation.compute_indices(matrix, part, truth=truth, method=args.method)
    header = ",".join(report.CSV_COLUMNS)
    row = ",".join(report.report_row(rep))
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(header + "\n" + row + "\n")
    print(header)
    print(row)


def cmd_report(args):
    results = Path(args.results)
    reports = report.read_reports_jsonl(results / "reports.jsonl")
    report.write_report_csv(reports, results / "report.csv")
    report.render_index_curves(reports, results / "index_curves.png", index=args.index)
    print(f"rows={len(reports)} -> {results / 'report.csv'}")


def cmd_pipeline(args):
    override_keys = (
        "input",
        "format",
        "out",
        "normalize",
        "methods",
        "k",
        "seeds",
        "tol",
        "max_iter",
        "b_gamma",
        "hdp_seed",
        "burn_in",
        "samples",
        "spacing",
        "threshold",
        "cut_c",
        "figures",
    )
    overrides = {key: getattr(args, key) for key in override_keys}
    cfg = pipeline.parse_config(args.config, overrides)
    reports = pipeline.run_pipeline(cfg)
    print(f"rows={len(reports)} -> {Path(cfg.out) / 'report.csv'}")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="tcclust",
        description="Model-based clustering of time-course expression series.",
    )
    sub = parser.add_subparsers(dest="stage", required=True)

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--input", required=True, help="expression table to read")
    data.add_argument("--format", default="tsv", choices=("tsv", "csv"))
    data.add_argument(
        "--normalize",
        action="store_true",
        help="divide every series by its first time point",
    )

    p = sub.add_parser("ingest", parents=[data], help="validate and rewrite a dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--out-format", choices=("tsv", "csv"))
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("fit-finite", parents=[data], help="fit a k-state model by EM")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--max-iter", type=int, default=200)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit_finite)

    p = sub.add_parser("fit-hdp", parents=[data], help="sample the infinite model")
    p.add_argument("--b-gamma", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--burn-in", type=int, default=1000)
    p.add_argument("--samples", type=int, default=50)
    p.add_argument("--spacing", type=int, default=20)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit_hdp)

    p = sub.add_parser("similarity", help="build a pairwise dissimilarity matrix")
    p.add_argument("--method", required=True, choices=("eisen", "finite", "hdp"))
    p.add_argument("--input", help="expression table (eisen, finite)")
    p.add_argument("--format", default="tsv", choices=("tsv", "csv"))
    p.add_argument("--normalize", action="store_true")
    p.add_argument("--model", help="fitted finite model file")
    p.add_argument("--snapshots", help="posterior snapshot file")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_similarity)

    p = sub.add_parser("cluster", help="average-linkage tree, optional cuts")
    p.add_argument("--matrix", required=True)
    p.add_argument("--cut-c", type=_int_list, help="comma-separated cluster counts")
    p.add_argument(
        "--partition-out",
        help="partition path; use a {C} placeholder with multiple cuts",
    )
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("validate", help="score a partition against a matrix")
    p.add_argument("--matrix", required=True)
    p.add_argument("--partition", required=True)
    p.add_argument("--input", help="labeled dataset supplying truth labels")
    p.add_argument("--format", default="tsv", choices=("tsv", "csv"))
    p.add_argument("--method", default="cli", help="method tag for the report row")
    p.add_argument("--out", help="optional single-row csv")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("report", help="rebuild report.csv and figures from jsonl")
    p.add_argument("--results", required=True, help="pipeline output directory")
    p.add_argument("--index", default="crand", help="index for the curve figure")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("pipeline", help="run the full sweep from a config")
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--input")
    p.add_argument("--format", choices=("tsv", "csv"))
    p.add_argument("--out")
    p.add_argument("--normalize", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--methods", help="comma list from eisen,finite,hdp")
    p.add_argument("--k", help="comma list of finite state counts")
    p.add_argument("--seeds", help="comma list of finite seeds")
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--b-gamma", dest="b_gamma", help="comma list of gamma rate priors")
    p.add_argument("--hdp-seed", dest="hdp_seed", type=int)
    p.add_argument("--burn-in", dest="burn_in", type=int)
    p.add_argument("--samples", type=int)
    p.add_argument("--spacing", type=int)
    p.add_argument("--threshold", type=float)
    p.add_argument("--cut-c", dest="cut_c", help="comma list of cluster counts")
    p.add_argument("--figures", action=argparse.BooleanOptionalAction, default=None)
    p.set_defaults(func=cmd_pipeline)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except pipeline.PipelineError as exc:
        print(exc, file=sys.stderr)
        return 1
    except Exception as exc:  # argparse errors exit earlier via SystemExit
        print(f"stage '{args.stage}' failed: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
