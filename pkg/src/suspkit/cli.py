"""Command-line entry point.

One root seed and one JSON config drive every stage; flags override
config values.  Each stage writes versioned artifacts plus a manifest
(config hash, seed, output hashes) into the workdir, and a separate
timing sidecar, so reruns with the same config and seed produce
byte-identical manifests.

Exit codes: 0 success, 2 usage error, 3 data or dependency error,
4 internal error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
import time
from pathlib import Path

from .content_clustering import toxicity_summary, write_cluster_report
from .corpus import CorpusStore, EmptyClass, TimeWindow
from .errors import MissingArtifact, SuspkitError
from .explainability import (
    explain_matrix,
    impact_summary,
    write_explanations_csv,
    write_summary_csv,
)
from .graph_embedding import save_embeddings, write_graph_csv
from .manifest import (
    atomic_path,
    canonical_json,
    config_hash,
    stage_seed,
    write_stage_manifest,
    write_timing,
)
from .pipeline import (
    ExtractionContext,
    PipelineConfig,
    extract_window_features,
    run_clustering,
    run_graph_stage,
    select_users_for_window,
    split_users,
    train_on_matrix,
)
from .suspension_model import (
    SPLIT_SECOND_TEST,
    SPLIT_TEST,
    FeatureMatrix,
    kfold_cv,
    load_model,
    save_model,
    evaluate as evaluate_model,
    write_curve_csv,
)
from .synth import GeneratorConfig, generate
from .wallets import read_wallet_csv, write_wallet_csv


def _load_config(args: argparse.Namespace) -> PipelineConfig:
    data = {}
    if args.config:
        data = json.loads(Path(args.config).read_text(encoding="utf-8"))
    config = PipelineConfig.from_dict(data)
    overrides = {}
    for name in ("workdir", "seed", "threads"):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    for name in ("tweets", "snapshots", "labels", "tau", "toxicity_scores"):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    if getattr(args, "families", None):
        overrides["families"] = tuple(args.families.split(","))
    if overrides:
        config = dataclasses.replace(config, **overrides)
    return config


def _workdir(config: PipelineConfig) -> Path:
    path = Path(config.workdir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _store_path(config: PipelineConfig) -> Path:
    return Path(config.workdir) / "corpus.sqlite"


def _open_store(config: PipelineConfig) -> CorpusStore:
    path = _store_path(config)
    if not path.exists():
        raise MissingArtifact(f"no ingested corpus at {path}; run ingest first")
    return CorpusStore(path)


def _write_json(path: Path, payload) -> None:
    with atomic_path(path) as tmp:
        tmp.write_text(canonical_json(payload) + "\n", encoding="utf-8")


def _require_artifact(workdir: Path, name: str, hint: str) -> Path:
    path = workdir / name
    if not path.exists():
        raise MissingArtifact(f"{path} not found; run {hint} first")
    return path


def _finish_stage(
    config: PipelineConfig,
    stage: str,
    inputs: dict[str, str],
    outputs: list[Path],
    started: float,
) -> None:
    workdir = Path(config.workdir)
    write_stage_manifest(
        workdir,
        stage,
        config_digest=config_hash(config.to_dict()),
        root_seed=config.seed,
        inputs=inputs,
        outputs=outputs,
    )
    write_timing(workdir, stage, time.monotonic() - started)


def cmd_synth(config: PipelineConfig, args: argparse.Namespace) -> None:
    started = time.monotonic()
    workdir = _workdir(config)
    out_dir = Path(args.out) if args.out else workdir / "synth"
    gen = GeneratorConfig(
        n_suspended=args.suspended,
        n_normal=args.normal,
        corpus_start=config.window_start_epoch(),
        window_days=config.window_days,
        n_windows=args.windows,
        drift=args.drift,
    )
    paths = generate(gen, seed=stage_seed(config.seed, "synth"), out_dir=out_dir)
    outputs = [paths["tweets"], paths["snapshots"], paths["labels"]]
    _finish_stage(config, "synth", {"out": str(out_dir)}, outputs, started)
    print(f"synth: wrote {len(outputs)} files to {out_dir}")


def cmd_ingest(config: PipelineConfig, args: argparse.Namespace) -> None:
    started = time.monotonic()
    workdir = _workdir(config)
    for name in ("tweets", "snapshots", "labels"):
        value = getattr(config, name)
        if not value:
            raise MissingArtifact(f"ingest needs a {name} path (config or flag)")
        if not Path(value).exists():
            raise MissingArtifact(f"{name} file not found: {value}")
    db = _store_path(config)
    db.unlink(missing_ok=True)
    with CorpusStore(db) as store:
        stats = {
            "tweets": store.ingest_tweets(config.tweets),
            "snapshots": store.ingest_snapshots(config.snapshots),
            "labels": store.ingest_labels(config.labels),
        }
    payload = {
        name: {"parsed": s.parsed, "skipped": s.skipped, "inserted": s.inserted}
        for name, s in stats.items()
    }
    stats_path = workdir / "ingest_stats.json"
    _write_json(stats_path, payload)
    inputs = {name: str(getattr(config, name)) for name in ("tweets", "snapshots", "labels")}
    _finish_stage(config, "ingest", inputs, [db, stats_path], started)
    for name, s in stats.items():
        print(f"ingest: {name} parsed={s.parsed} skipped={s.skipped}")


def cmd_features(config: PipelineConfig, args: argparse.Namespace) -> None:
    started = time.monotonic()
    workdir = _workdir(config)
    first, second = config.windows()
    outputs: list[Path] = []
    with _open_store(config) as store:
        users = select_users_for_window(
            store, first, stage_seed(config.seed, f"balance:{first.start}:{first.end}")
        )
        train_users, test_users = split_users(
            users, config.test_fraction, stage_seed(config.seed, "split")
        )
        feats_train = extract_window_features(store, first, train_users, config)
        feats_test = None
        if test_users:
            feats_test = extract_window_features(
                store, first, test_users, config, context=feats_train.context
            )
        feats_second = None
        try:
            users2 = select_users_for_window(
                store, second,
                stage_seed(config.seed, f"balance:{second.start}:{second.end}"),
            )
        except EmptyClass:
            users2 = {}
        if users2:
            graph_window = TimeWindow(first.start, max(first.end, second.end))
            context = ExtractionContext(
                provider=feats_train.context.provider,
                idf=feats_train.context.idf,
                pca=feats_train.context.pca,
            )
            feats_second = extract_window_features(
                store, second, users2, config,
                context=context, graph_window=graph_window,
            )

    for name, feats in (
        ("train", feats_train),
        ("test", feats_test),
        ("second_test", feats_second),
    ):
        if feats is None:
            continue
        path = workdir / f"features_{name}.csv"
        with atomic_path(path) as tmp:
            feats.combined.to_csv(tmp)
        outputs.append(path)
    families_path = workdir / "families.json"
    _write_json(
        families_path,
        {name: list(mat.feature_names) for name, mat in feats_train.families.items()},
    )
    outputs.append(families_path)
    users_path = workdir / "users.json"
    _write_json(
        users_path,
        {
            "train": train_users,
            "test": test_users,
            "second_test": users2,
            "dropped": feats_train.dropped_users
            + (feats_test.dropped_users if feats_test else []),
        },
    )
    outputs.append(users_path)
    _finish_stage(
        config, "features", {"corpus": str(_store_path(config))}, outputs, started
    )
    print(
        f"features: train={len(feats_train.combined.user_ids)}"
        f" test={len(feats_test.combined.user_ids) if feats_test else 0}"
        f" second_test={len(feats_second.combined.user_ids) if feats_second else 0}"
        f" columns={len(feats_train.combined.feature_names)}"
    )


def cmd_train(config: PipelineConfig, args: argparse.Namespace) -> None:
    started = time.monotonic()
    workdir = _workdir(config)
    train_path = _require_artifact(workdir, "features_train.csv", "features")
    matrix = FeatureMatrix.from_csv(train_path)
    model, mask = train_on_matrix(matrix, config)
    selected = FeatureMatrix(
        feature_names=model.feature_names,
        user_ids=matrix.user_ids,
        X=matrix.X[:, mask],
        y=matrix.y,
    )
    fold_reports, cv_mean = kfold_cv(
        selected,
        k=config.k_folds,
        seed=stage_seed(config.seed, "folds"),
        kind=config.model_kind,
        hyper=config.hyper(),
    )
    model_path = workdir / "model.json"
    with atomic_path(model_path) as tmp:
        save_model(tmp, model)
    cv_path = workdir / "cv_report.json"
    _write_json(
        cv_path,
        {"folds": [r.to_dict() for r in fold_reports], "mean": cv_mean.to_dict()},
    )
    _finish_stage(
        config, "train", {"features": str(train_path)}, [model_path, cv_path], started
    )
    print(
        f"train: kind={config.model_kind} selected={len(model.feature_names)}"
        f"/{len(matrix.feature_names)} cv_f1={cv_mean.f1:.4f}"
    )


def cmd_evaluate(config: PipelineConfig, args: argparse.Namespace) -> None:
    started = time.monotonic()
    workdir = _workdir(config)
    split = args.split
    model_path = _require_artifact(workdir, "model.json", "train")
    matrix_path = _require_artifact(workdir, f"features_{split}.csv", "features")
    model = load_model(model_path)
    matrix = FeatureMatrix.from_csv(matrix_path)
    report = evaluate_model(model, matrix, split)
    report_path = workdir / f"report_{split}.json"
    _write_json(report_path, report.to_dict())
    roc_path = workdir / f"roc_{split}.csv"
    pr_path = workdir / f"pr_{split}.csv"
    with atomic_path(roc_path) as tmp:
        write_curve_csv(tmp, report.roc_points)
    with atomic_path(pr_path) as tmp:
        write_curve_csv(tmp, report.pr_points)
    _finish_stage(
        config,
        f"evaluate_{split}",
        {"model": str(model_path), "features": str(matrix_path)},
        [report_path, roc_path, pr_path],
        started,
    )
    print(
        f"evaluate[{split}]: f1={report.f1:.4f} auc={report.roc_auc:.4f}"
        f" acc={report.accuracy:.4f} n={report.n_pos + report.n_neg}"
    )


def cmd_explain(config: PipelineConfig, args: argparse.Namespace) -> None:
    started = time.monotonic()
    workdir = _workdir(config)
    model_path = _require_artifact(workdir, "model.json", "train")
    train_path = _require_artifact(workdir, "features_train.csv", "features")
    test_path = workdir / "features_test.csv"
    matrix_path = test_path if test_path.exists() else train_path
    model = load_model(model_path)
    matrix = FeatureMatrix.from_csv(matrix_path)
    background = FeatureMatrix.from_csv(train_path)
    n_rows = args.rows if args.rows is not None else config.explain_instances
    rows = list(range(min(n_rows, len(matrix.user_ids))))
    explanations = explain_matrix(
        model,
        matrix,
        background,
        rows=rows,
        background_size=config.background_size,
        samples=config.shap_samples,
        seed=stage_seed(config.seed, "explain"),
        method=config.explain_method,
    )
    summary = impact_summary(explanations)
    exp_path = workdir / "explanations.csv"
    with atomic_path(exp_path) as tmp:
        write_explanations_csv(tmp, explanations)
    summary_path = workdir / "impact_summary.csv"
    with atomic_path(summary_path) as tmp:
        write_summary_csv(tmp, summary)
    _finish_stage(
        config,
        "explain",
        {"model": str(model_path), "features": str(matrix_path)},
        [exp_path, summary_path],
        started,
    )
    top = ", ".join(summary.ranking[:5])
    print(f"explain: {len(explanations)} rows; top features: {top}")


def cmd_cluster(config: PipelineConfig, args: argparse.Namespace) -> None:
    started = time.monotonic()
    workdir = _workdir(config)
    with _open_store(config) as store:
        artifacts = run_clustering(store, config)
    clusters_path = workdir / "clusters.jsonl"
    digest_path = workdir / "clusters_digest.txt"
    with atomic_path(clusters_path) as tmp_jsonl:
        with atomic_path(digest_path) as tmp_digest:
            write_cluster_report(artifacts.report, tmp_jsonl, tmp_digest)
    wallets_path = workdir / "wallets.csv"
    with atomic_path(wallets_path) as tmp:
        write_wallet_csv(tmp, artifacts.wallet_hits)
    keywords_path = workdir / "keywords.json"
    _write_json(keywords_path, artifacts.keyword_hits)
    outputs = [clusters_path, digest_path, wallets_path, keywords_path]
    inputs = {"corpus": str(_store_path(config))}
    if config.toxicity_scores:
        known = set(artifacts.assignment.item_ids)
        tox = toxicity_summary(
            config.toxicity_scores, known_ids=known, threshold=config.toxicity_threshold
        )
        tox_path = workdir / "toxicity.json"
        _write_json(
            tox_path,
            {
                "scored": tox.scored,
                "toxic": tox.toxic,
                "fraction": tox.fraction,
                "skipped_unknown": tox.skipped_unknown,
                "threshold": tox.threshold,
            },
        )
        outputs.append(tox_path)
        inputs["toxicity_scores"] = str(config.toxicity_scores)
    _finish_stage(config, "cluster", inputs, outputs, started)
    print(
        f"cluster: {artifacts.assignment.n_clusters} clusters over"
        f" {len(artifacts.texts)} posts; {len(artifacts.wallet_hits)} wallet hits"
    )


def cmd_graph(config: PipelineConfig, args: argparse.Namespace) -> None:
    started = time.monotonic()
    workdir = _workdir(config)
    with _open_store(config) as store:
        artifacts = run_graph_stage(store, config)
    graph_path = workdir / "graph.csv"
    with atomic_path(graph_path) as tmp:
        write_graph_csv(tmp, artifacts.graph)
    emb_path = workdir / "graph_embeddings.emb1"
    with atomic_path(emb_path) as tmp:
        save_embeddings(tmp, artifacts.embeddings)
    ranking_path = workdir / "graph_ranking.json"
    _write_json(
        ranking_path,
        {
            "mrr": artifacts.ranking.mrr,
            "auc": artifacts.ranking.auc,
            "negatives_per_positive": artifacts.ranking.negatives_per_positive,
            "held_out_edges": len(artifacts.held_out),
            "nodes": artifacts.graph.n_nodes,
            "edges": artifacts.graph.n_edges,
        },
    )
    _finish_stage(
        config,
        "graph",
        {"corpus": str(_store_path(config))},
        [graph_path, emb_path, ranking_path],
        started,
    )
    print(
        f"graph: {artifacts.graph.n_nodes} nodes {artifacts.graph.n_edges} edges;"
        f" held-out mrr={artifacts.ranking.mrr:.4f} auc={artifacts.ranking.auc:.4f}"
    )


def cmd_report(config: PipelineConfig, args: argparse.Namespace) -> None:
    started = time.monotonic()
    workdir = _workdir(config)
    sections = {}
    for key, name in (
        ("cv", "cv_report.json"),
        ("test", "report_test.json"),
        ("second_test", "report_second_test.json"),
        ("graph", "graph_ranking.json"),
        ("toxicity", "toxicity.json"),
    ):
        path = workdir / name
        if path.exists():
            sections[key] = json.loads(path.read_text(encoding="utf-8"))
    clusters_path = workdir / "clusters.jsonl"
    if clusters_path.exists():
        sizes = []
        with open(clusters_path, encoding="utf-8") as fh:
            for line in fh:
                sizes.append(json.loads(line)["size"])
        sections["clusters"] = {
            "n_clusters": len(sizes),
            "n_items": sum(sizes),
            "largest": sizes[:10],
        }
    wallets_path = workdir / "wallets.csv"
    if wallets_path.exists():
        hits = read_wallet_csv(wallets_path)
        by_chain: dict[str, int] = {}
        for hit in hits:
            by_chain[hit.chain] = by_chain.get(hit.chain, 0) + 1
        sections["wallets"] = {"total": len(hits), "by_chain": by_chain}
    summary_path = workdir / "impact_summary.csv"
    if summary_path.exists():
        with open(summary_path, newline="", encoding="utf-8") as fh:
            top = [row["feature"] for row in csv.DictReader(fh)][:10]
        sections["top_features"] = top
    if not sections:
        raise MissingArtifact("no stage outputs found in workdir; run stages first")
    report_path = workdir / "report.json"
    _write_json(report_path, sections)
    _finish_stage(config, "report", {"workdir": str(workdir)}, [report_path], started)
    print(f"report: {', '.join(sorted(sections))} -> {report_path}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="suspkit",
        description="Account-suspension analysis pipeline over tweet corpora.",
    )
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--workdir", help="artifact directory (overrides config)")
    parser.add_argument("--seed", type=int, help="root seed (overrides config)")
    parser.add_argument("--threads", type=int, help="intra-stage thread cap")
    sub = parser.add_subparsers(dest="stage", required=True)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--out", help="output directory (default workdir/synth)")
    p.add_argument("--suspended", type=int, default=400)
    p.add_argument("--normal", type=int, default=400)
    p.add_argument("--windows", type=int, choices=(1, 2), default=1)
    p.add_argument("--drift", action="store_true")

    p = sub.add_parser("ingest", help="load corpus files into the store")
    p.add_argument("--tweets")
    p.add_argument("--snapshots")
    p.add_argument("--labels")

    p = sub.add_parser("features", help="extract per-family feature matrices")
    p.add_argument("--families", help="comma-separated family subset")

    sub.add_parser("train", help="fit the suspension classifier")

    p = sub.add_parser("evaluate", help="score a split with the trained model")
    p.add_argument("--split", choices=(SPLIT_TEST, SPLIT_SECOND_TEST), default=SPLIT_TEST)

    p = sub.add_parser("explain", help="attribute predictions to features")
    p.add_argument("--rows", type=int, help="number of rows to explain")

    p = sub.add_parser("cluster", help="cluster suspended-account posts")
    p.add_argument("--tau", type=float)
    p.add_argument("--toxicity-scores", dest="toxicity_scores")

    sub.add_parser("graph", help="train and evaluate graph embeddings")
    sub.add_parser("report", help="aggregate stage outputs into one digest")
    return parser


_COMMANDS = {
    "synth": cmd_synth,
    "ingest": cmd_ingest,
    "features": cmd_features,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "explain": cmd_explain,
    "cluster": cmd_cluster,
    "graph": cmd_graph,
    "report": cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = _load_config(args)
        _COMMANDS[args.stage](config, args)
    except (SuspkitError, FileNotFoundError, ValueError) as exc:
        line = {"error": type(exc).__name__, "message": str(exc), "stage": args.stage}
        print(json.dumps(line, sort_keys=True), file=sys.stderr)
        return 3
    except Exception as exc:  # pragma: no cover - defensive
        line = {"error": "InternalError", "type": type(exc).__name__,
                "message": str(exc), "stage": args.stage}
        print(json.dumps(line, sort_keys=True), file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
