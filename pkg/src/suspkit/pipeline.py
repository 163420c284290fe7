"""End-to-end orchestration: user selection, per-family feature
extraction, training, clustering, and the two-window protocol.

All state fitted on training data (IDF table, PCA basis, graph
embeddings) is carried in an ExtractionContext and reused verbatim
for evaluation windows, so evaluating on the training window itself
reproduces the training features bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Sequence

import numpy as np

from .activity_features import ACTIVITY_FEATURE_NAMES
from .activity_features import features_from_timeline as activity_features
from .content_clustering import (
    ClusterAssignment,
    cluster_cosine,
    cluster_report,
    keyword_search,
)
from .corpus import (
    STATUS_SUSPENDED,
    CorpusStore,
    TimeWindow,
    parse_status_date,
    select_window_users,
    split_windows,
    undersample_balance,
)
from .errors import SuspkitError
from .graph_embedding import (
    RELATIONS,
    NodeEmbeddings,
    RankingEval,
    RelationGraph,
    build_graph,
    evaluate as evaluate_ranking,
    export_node_features,
    graph_feature_names,
    split_edges,
    train_embeddings,
)
from .manifest import stage_seed
from .profile_features import PROFILE_FEATURE_NAMES, features_from_snapshots
from .suspension_model import (
    FAMILY_ORDER,
    MODEL_KIND_GBDT,
    SPLIT_SECOND_TEST,
    SPLIT_TEST,
    EvalReport,
    FeatureMatrix,
    TrainedModel,
    assemble,
    evaluate as evaluate_model,
    kfold_cv,
    select_features,
    train,
)
from .textual_features import (
    TEXTUAL_FEATURE_NAMES,
    HashtagIdfTable,
    build_idf,
    features_from_timeline as textual_features,
    user_hashtag_counts,
)
from .text_embedding import (
    EmbeddingProvider,
    HashedNgramEncoder,
    PcaModel,
    PrecomputedEmbeddings,
    aggregate_post_embeddings,
    pca_fit,
    pca_transform,
    post_embedding_feature_names,
)
from .vectors import EmbeddingMatrix
from .wallets import WalletHit, extract_wallets

DEFAULT_WINDOW_START = "2022-02-23T00:00:00+00:00"


@dataclass
class PipelineConfig:
    tweets: str = ""
    snapshots: str = ""
    labels: str = ""
    workdir: str = "work"
    embeddings_file: str | None = None
    toxicity_scores: str | None = None
    window_start: str = DEFAULT_WINDOW_START
    window_days: int = 21
    families: tuple[str, ...] = FAMILY_ORDER
    encoder_dim: int = 256
    pca_components: int = 20
    tau: float = 0.9
    cluster_sample_n: int = 10
    keywords: tuple[str, ...] = ("crypto", "nft", "donation")
    relations: tuple[str, ...] = RELATIONS
    graph_dim: int = 16
    graph_epochs: int = 100
    graph_lr: float = 0.5
    graph_negatives: int = 5
    graph_batch: int = 256
    graph_holdout_fraction: float = 0.05
    model_kind: str = MODEL_KIND_GBDT
    n_rounds: int = 150
    learning_rate: float = 0.1
    max_depth: int = 5
    reg_lambda: float = 1.0
    select_threshold: float = 0.002
    k_folds: int = 5
    test_fraction: float = 0.25
    explain_instances: int = 64
    background_size: int = 64
    shap_samples: int = 8
    explain_method: str = "auto"
    toxicity_threshold: float = 0.5
    threads: int = 1
    seed: int = 0

    def __post_init__(self):
        self.families = tuple(self.families)
        self.keywords = tuple(self.keywords)
        self.relations = tuple(self.relations)
        unknown = set(self.families) - set(FAMILY_ORDER)
        if unknown:
            raise ValueError(f"unknown families: {sorted(unknown)}")

    def window_start_epoch(self) -> int:
        epoch = parse_status_date(self.window_start)
        if epoch is None:
            raise ValueError("window_start must be a date")
        return epoch

    def windows(self) -> tuple[TimeWindow, TimeWindow]:
        return split_windows(self.window_start_epoch(), self.window_days)

    def hyper(self) -> dict:
        return {
            "n_rounds": self.n_rounds,
            "learning_rate": self.learning_rate,
            "max_depth": self.max_depth,
            "reg_lambda": self.reg_lambda,
        }

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            out[f.name] = list(value) if isinstance(value, tuple) else value
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)


def make_provider(config: PipelineConfig) -> EmbeddingProvider:
    if config.embeddings_file:
        return PrecomputedEmbeddings.from_file(config.embeddings_file)
    return HashedNgramEncoder(dim=config.encoder_dim)


@dataclass
class ExtractionContext:
    """State fitted on the training window and reused elsewhere."""

    provider: EmbeddingProvider | None = None
    idf: HashtagIdfTable | None = None
    pca: PcaModel | None = None
    graph_window: TimeWindow | None = None
    graph: RelationGraph | None = None
    node_embeddings: NodeEmbeddings | None = None


@dataclass
class WindowFeatures:
    window: TimeWindow
    families: dict[str, FeatureMatrix]
    combined: FeatureMatrix
    dropped_users: list[str]
    context: ExtractionContext


def _embed_posts(
    provider: EmbeddingProvider, post_ids: list[str], texts: list[str]
) -> EmbeddingMatrix:
    # The fallback encoder depends only on the text, so duplicate
    # texts are encoded once; the precomputed provider is keyed by
    # post id and looked up directly.
    if isinstance(provider, PrecomputedEmbeddings):
        return provider.embed(post_ids, texts)
    unique, inverse = np.unique(np.asarray(texts, dtype=object), return_inverse=True)
    encoded = provider.embed([str(i) for i in range(len(unique))], list(unique))
    return EmbeddingMatrix(item_ids=post_ids, vectors=encoded.vectors[inverse])


def extract_window_features(
    store: CorpusStore,
    window: TimeWindow,
    users: dict[str, int],
    config: PipelineConfig,
    context: ExtractionContext | None = None,
    graph_window: TimeWindow | None = None,
    families: Sequence[str] | None = None,
) -> WindowFeatures:
    """Per-family feature matrices for one window's labeled users.

    Users without any in-window profile snapshot are dropped from all
    families so every family covers the same user set.  Pass the
    training window's context when extracting an evaluation window.
    """
    families = tuple(families if families is not None else config.families)
    unknown = set(families) - set(FAMILY_ORDER)
    if unknown:
        raise ValueError(f"unknown families: {sorted(unknown)}")
    if not families:
        raise ValueError("no families requested")

    kept: list[str] = []
    dropped: list[str] = []
    snaps_map = {}
    for user in sorted(users):
        snaps = store.snapshots(user, window)
        if snaps:
            kept.append(user)
            snaps_map[user] = snaps
        else:
            dropped.append(user)
    y = np.asarray([users[u] for u in kept], dtype=np.int64)

    need_timeline = bool({"activity", "textual", "post_embedding"} & set(families))
    timelines = {u: store.user_timeline(u, window) for u in kept} if need_timeline else {}

    out_context = ExtractionContext(
        provider=context.provider if context else None,
        idf=context.idf if context else None,
        pca=context.pca if context else None,
        graph_window=context.graph_window if context else None,
        graph=context.graph if context else None,
        node_embeddings=context.node_embeddings if context else None,
    )
    mats: dict[str, FeatureMatrix] = {}

    if "profile" in families:
        rows = [features_from_snapshots(snaps_map[u], window) for u in kept]
        X = np.asarray([[r[name] for name in PROFILE_FEATURE_NAMES] for r in rows])
        X = X.reshape(len(kept), len(PROFILE_FEATURE_NAMES))
        mats["profile"] = FeatureMatrix(PROFILE_FEATURE_NAMES, list(kept), X, y)

    if "activity" in families:
        rows = [activity_features(timelines[u]) for u in kept]
        X = np.asarray([[r[name] for name in ACTIVITY_FEATURE_NAMES] for r in rows])
        X = X.reshape(len(kept), len(ACTIVITY_FEATURE_NAMES))
        mats["activity"] = FeatureMatrix(ACTIVITY_FEATURE_NAMES, list(kept), X, y)

    if "textual" in families:
        if out_context.idf is None:
            out_context.idf = build_idf({u: user_hashtag_counts(timelines[u]) for u in kept})
        rows = [textual_features(timelines[u], out_context.idf) for u in kept]
        X = np.asarray([[r[name] for name in TEXTUAL_FEATURE_NAMES] for r in rows])
        X = X.reshape(len(kept), len(TEXTUAL_FEATURE_NAMES))
        mats["textual"] = FeatureMatrix(TEXTUAL_FEATURE_NAMES, list(kept), X, y)

    if "post_embedding" in families:
        if out_context.provider is None:
            out_context.provider = make_provider(config)
        post_ids, post_texts = [], []
        per_user: dict[str, tuple[list[str], list[str]]] = {}
        for u in kept:
            ids = [t.tweet_id for t in timelines[u]]
            kinds = [t.kind for t in timelines[u]]
            per_user[u] = (ids, kinds)
            post_ids.extend(ids)
            post_texts.extend(t.text for t in timelines[u])
        if out_context.pca is None and len(post_ids) < 2:
            raise SuspkitError("too few posts to fit the embedding reduction")
        if post_ids:
            raw = _embed_posts(out_context.provider, post_ids, post_texts)
            if out_context.pca is None:
                k = min(config.pca_components, raw.dim, len(post_ids))
                out_context.pca = pca_fit(raw.vectors, k,
                                          seed=stage_seed(config.seed, "pca"))
            reduced = EmbeddingMatrix(post_ids, pca_transform(out_context.pca, raw.vectors))
            index = reduced.row_index()
        else:
            reduced = EmbeddingMatrix([], np.empty((0, out_context.pca.k)))
            index = {}
        names = post_embedding_feature_names(out_context.pca.k)
        X = np.empty((len(kept), len(names)))
        for i, u in enumerate(kept):
            ids, kinds = per_user[u]
            X[i] = aggregate_post_embeddings(ids, kinds, reduced, index)
        mats["post_embedding"] = FeatureMatrix(names, list(kept), X, y)

    if "graph_embedding" in families:
        g_window = graph_window or window
        if (
            out_context.node_embeddings is None
            or out_context.graph_window != g_window
        ):
            graph = build_graph(store, g_window, config.relations)
            emb = None
            if graph.n_edges:
                emb = train_embeddings(
                    graph,
                    dim=config.graph_dim,
                    epochs=config.graph_epochs,
                    lr=config.graph_lr,
                    negatives_per_edge=config.graph_negatives,
                    batch_size=config.graph_batch,
                    seed=stage_seed(config.seed, "graph"),
                    threads=config.threads,
                )
            out_context.graph_window = g_window
            out_context.graph = graph
            out_context.node_embeddings = emb
        names = graph_feature_names(config.graph_dim)
        if out_context.node_embeddings is not None:
            X = export_node_features(out_context.node_embeddings, kept)
        else:
            X = np.full((len(kept), config.graph_dim), np.nan)
        mats["graph_embedding"] = FeatureMatrix(names, list(kept), X, y)

    return WindowFeatures(
        window=window,
        families=mats,
        combined=assemble(mats),
        dropped_users=dropped,
        context=out_context,
    )


def _window_tag(window: TimeWindow) -> str:
    return f"{window.start}:{window.end}"


def select_users_for_window(store: CorpusStore, window: TimeWindow, seed: int) -> dict[str, int]:
    users = select_window_users(window, store.labels(), store.active_users(window))
    return undersample_balance(users, seed)


def split_users(
    users: dict[str, int], fraction: float, seed: int
) -> tuple[dict[str, int], dict[str, int]]:
    """Stratified user-level train/test split."""
    if not 0.0 <= fraction < 1.0:
        raise ValueError("fraction must be in [0, 1)")
    rng = np.random.default_rng(seed)
    test: dict[str, int] = {}
    train_part: dict[str, int] = {}
    for label in (0, 1):
        members = sorted(u for u, v in users.items() if v == label)
        rng.shuffle(members)
        n_test = int(round(fraction * len(members)))
        for u in members[:n_test]:
            test[u] = label
        for u in members[n_test:]:
            train_part[u] = label
    return train_part, test


@dataclass
class TrainingArtifacts:
    model: TrainedModel
    selection_mask: np.ndarray
    fold_reports: list[EvalReport]
    cv_mean: EvalReport
    test_report: EvalReport | None
    features_train: WindowFeatures
    features_test: WindowFeatures | None


def train_on_matrix(
    matrix: FeatureMatrix, config: PipelineConfig
) -> tuple[TrainedModel, np.ndarray]:
    """Feature selection followed by a fit on the selected columns."""
    mask = select_features(
        matrix,
        config.select_threshold,
        kind=config.model_kind,
        hyper=config.hyper(),
        seed=stage_seed(config.seed, "select"),
    )
    model = train(
        matrix,
        kind=config.model_kind,
        hyper=config.hyper(),
        seed=stage_seed(config.seed, "train"),
        mask=mask,
    )
    return model, mask


def train_model_on_features(
    features: WindowFeatures, config: PipelineConfig, families: Sequence[str] | None = None
) -> tuple[TrainedModel, np.ndarray]:
    matrix = (
        features.combined
        if families is None
        else assemble({name: features.families[name] for name in families})
    )
    return train_on_matrix(matrix, config)


def run_training(store: CorpusStore, config: PipelineConfig) -> TrainingArtifacts:
    """Window-1 protocol: balance, user-level split, feature
    selection, K-fold cross-validation, and held-out evaluation."""
    first, _ = config.windows()
    users = select_users_for_window(
        store, first, stage_seed(config.seed, f"balance:{_window_tag(first)}")
    )
    train_users, test_users = split_users(
        users, config.test_fraction, stage_seed(config.seed, "split")
    )
    features_train = extract_window_features(store, first, train_users, config)
    model, mask = train_model_on_features(features_train, config)

    selected = FeatureMatrix(
        feature_names=model.feature_names,
        user_ids=features_train.combined.user_ids,
        X=features_train.combined.X[:, mask],
        y=features_train.combined.y,
    )
    fold_reports, cv_mean = kfold_cv(
        selected,
        k=config.k_folds,
        seed=stage_seed(config.seed, "folds"),
        kind=config.model_kind,
        hyper=config.hyper(),
    )

    features_test = None
    test_report = None
    if test_users:
        features_test = extract_window_features(
            store, first, test_users, config, context=features_train.context
        )
        test_report = evaluate_model(model, features_test.combined, SPLIT_TEST)
    return TrainingArtifacts(
        model=model,
        selection_mask=mask,
        fold_reports=fold_reports,
        cv_mean=cv_mean,
        test_report=test_report,
        features_train=features_train,
        features_test=features_test,
    )


def second_window_protocol(
    store: CorpusStore,
    config: PipelineConfig,
    families: Sequence[str] | None = None,
    windows: tuple[TimeWindow, TimeWindow] | None = None,
) -> tuple[EvalReport, EvalReport]:
    """Train on all window-1 users, evaluate on window-2 users.

    Window-2 graph features are computed over the union time range so
    training-window edges are retained.  When the two windows are the
    same, the pair of reports is identical by construction.
    """
    first, second = windows if windows is not None else config.windows()
    users1 = select_users_for_window(
        store, first, stage_seed(config.seed, f"balance:{_window_tag(first)}")
    )
    users2 = select_users_for_window(
        store, second, stage_seed(config.seed, f"balance:{_window_tag(second)}")
    )
    features1 = extract_window_features(store, first, users1, config, families=families)
    model, _ = train_model_on_features(features1, config)
    report1 = evaluate_model(model, features1.combined, SPLIT_TEST)

    graph_window = TimeWindow(min(first.start, second.start), max(first.end, second.end))
    context = features1.context
    if "graph_embedding" in (families or config.families):
        # Retrain embeddings over the combined range for window 2.
        context = ExtractionContext(
            provider=context.provider, idf=context.idf, pca=context.pca
        )
    features2 = extract_window_features(
        store, second, users2, config, context=context,
        graph_window=graph_window, families=families,
    )
    report2 = evaluate_model(model, features2.combined, SPLIT_SECOND_TEST)
    return report1, report2


@dataclass
class ClusterArtifacts:
    assignment: ClusterAssignment
    report: list[dict]
    keyword_hits: list[dict]
    wallet_hits: list[WalletHit]
    texts: list[str]


def run_clustering(
    store: CorpusStore, config: PipelineConfig, window: TimeWindow | None = None
) -> ClusterArtifacts:
    """Cluster the window's suspended-account posts and scan them for
    keywords and wallet addresses."""
    if window is None:
        window, _ = config.windows()
    labels = store.labels()
    suspended = sorted(
        u
        for u, lab in labels.items()
        if lab.status == STATUS_SUSPENDED
        and lab.status_date is not None
        and window.contains(lab.status_date)
    )
    posts = []
    for user in suspended:
        posts.extend(store.user_timeline(user, window))

    texts = [t.text for t in posts]
    post_ids = [t.tweet_id for t in posts]
    if len(posts) >= 2:
        provider = make_provider(config)
        raw = _embed_posts(provider, post_ids, texts)
        k = min(config.pca_components, raw.dim, len(posts))
        pca = pca_fit(raw.vectors, k, seed=stage_seed(config.seed, "cluster-pca"))
        reduced = EmbeddingMatrix(post_ids, pca_transform(pca, raw.vectors))
    else:
        reduced = EmbeddingMatrix(post_ids, np.zeros((len(posts), 1)))
    assignment = cluster_cosine(reduced, tau=config.tau)
    report = cluster_report(assignment, texts, sample_n=config.cluster_sample_n)
    hits = keyword_search(assignment, texts, config.keywords)
    wallets = extract_wallets(posts)
    return ClusterArtifacts(
        assignment=assignment,
        report=report,
        keyword_hits=hits,
        wallet_hits=wallets,
        texts=texts,
    )


@dataclass
class GraphArtifacts:
    graph: RelationGraph
    train_graph: RelationGraph
    held_out: list[tuple[str, str, str]]
    embeddings: NodeEmbeddings
    ranking: RankingEval


def run_graph_stage(
    store: CorpusStore, config: PipelineConfig, window: TimeWindow | None = None
) -> GraphArtifacts:
    """Build the window graph, train embeddings on a held-out split,
    and report ranking metrics."""
    if window is None:
        window, _ = config.windows()
    graph = build_graph(store, window, config.relations)
    train_graph, held_out = split_edges(
        graph, config.graph_holdout_fraction, seed=stage_seed(config.seed, "graph-split")
    )
    emb = train_embeddings(
        train_graph,
        dim=config.graph_dim,
        epochs=config.graph_epochs,
        lr=config.graph_lr,
        negatives_per_edge=config.graph_negatives,
        batch_size=config.graph_batch,
        seed=stage_seed(config.seed, "graph"),
        threads=config.threads,
    )
    ranking = evaluate_ranking(
        emb, held_out, negatives_per_positive=100, seed=stage_seed(config.seed, "graph-neg")
    )
    return GraphArtifacts(
        graph=graph,
        train_graph=train_graph,
        held_out=held_out,
        embeddings=emb,
        ranking=ranking,
    )
