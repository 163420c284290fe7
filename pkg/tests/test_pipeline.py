import numpy as np
import pytest

from suspkit.corpus import CorpusStore, MalformedRecord
from suspkit.pipeline import (
    ExtractionContext,
    PipelineConfig,
    extract_window_features,
    run_clustering,
    run_graph_stage,
    run_training,
    second_window_protocol,
    select_users_for_window,
    split_users,
    train_on_matrix,
)
from suspkit.suspension_model import FAMILY_ORDER
from suspkit.synth import GeneratorConfig, generate


@pytest.fixture(scope="module")
def store(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth-corpus")
    paths = generate(GeneratorConfig(n_suspended=30, n_normal=30), seed=0, out_dir=out)
    store = CorpusStore()
    store.ingest_tweets(paths["tweets"])
    store.ingest_snapshots(paths["snapshots"])
    store.ingest_labels(paths["labels"])
    return store


def fast_config(**overrides):
    defaults = dict(
        encoder_dim=64,
        pca_components=8,
        graph_dim=8,
        graph_epochs=30,
        graph_batch=64,
        n_rounds=30,
        max_depth=3,
        k_folds=3,
        explain_instances=8,
        background_size=16,
        shap_samples=4,
        seed=0,
    )
    defaults.update(overrides)
    return PipelineConfig(**defaults)


class TestPipelineConfig:
    def test_dict_roundtrip(self):
        config = fast_config(tau=0.85, families=("profile", "activity"))
        assert PipelineConfig.from_dict(config.to_dict()) == config

    def test_unknown_key_rejected(self):
        with pytest.raises(ValueError):
            PipelineConfig.from_dict({"mystery_knob": 1})

    def test_unknown_family_rejected(self):
        with pytest.raises(ValueError):
            PipelineConfig(families=("profile", "weather"))

    def test_windows_are_back_to_back(self):
        first, second = fast_config().windows()
        assert second.start == first.end
        assert first.days == second.days == 21

    def test_bad_window_start(self):
        with pytest.raises(MalformedRecord):
            fast_config(window_start="soon").windows()

    def test_hyper_keys(self):
        assert set(fast_config().hyper()) == {
            "n_rounds", "learning_rate", "max_depth", "reg_lambda",
        }


class TestUserSelection:
    def test_balanced_classes(self, store):
        window, _ = fast_config().windows()
        users = select_users_for_window(store, window, seed=0)
        counts = {0: 0, 1: 0}
        for label in users.values():
            counts[label] += 1
        assert counts[0] == counts[1] > 0

    def test_split_users_stratified_and_disjoint(self):
        users = {f"s{i}": 1 for i in range(20)}
        users.update({f"n{i}": 0 for i in range(20)})
        train_part, test_part = split_users(users, fraction=0.25, seed=1)
        assert set(train_part) | set(test_part) == set(users)
        assert not set(train_part) & set(test_part)
        assert sum(test_part.values()) == 5  # 25% of each class
        assert len(test_part) == 10

    def test_split_deterministic(self):
        users = {f"u{i}": i % 2 for i in range(30)}
        assert split_users(users, 0.3, seed=4) == split_users(users, 0.3, seed=4)

    def test_fraction_validation(self):
        with pytest.raises(ValueError):
            split_users({"a": 1}, fraction=1.0, seed=0)


class TestExtraction:
    def test_all_families_present_and_aligned(self, store):
        config = fast_config()
        window, _ = config.windows()
        users = select_users_for_window(store, window, seed=0)
        features = extract_window_features(store, window, users, config)
        assert set(features.families) == set(FAMILY_ORDER)
        total = sum(m.width for m in features.families.values())
        assert features.combined.width == total
        assert features.combined.user_ids == sorted(users)
        assert features.dropped_users == []
        for matrix in features.families.values():
            assert matrix.user_ids == features.combined.user_ids

    def test_family_subset(self, store):
        config = fast_config()
        window, _ = config.windows()
        users = select_users_for_window(store, window, seed=0)
        features = extract_window_features(
            store, window, users, config, families=("profile", "activity")
        )
        assert set(features.families) == {"profile", "activity"}

    def test_context_reuse_is_bit_identical(self, store):
        config = fast_config(families=("textual", "post_embedding"))
        window, _ = config.windows()
        users = select_users_for_window(store, window, seed=0)
        first = extract_window_features(store, window, users, config)
        again = extract_window_features(
            store, window, users, config, context=first.context
        )
        assert np.array_equal(first.combined.X, again.combined.X, equal_nan=True)

    def test_unknown_family_rejected(self, store):
        config = fast_config()
        window, _ = config.windows()
        with pytest.raises(ValueError):
            extract_window_features(store, window, {}, config, families=("weather",))

    def test_empty_family_list_rejected(self, store):
        config = fast_config()
        window, _ = config.windows()
        with pytest.raises(ValueError):
            extract_window_features(store, window, {}, config, families=())


@pytest.fixture(scope="module")
def artifacts(store):
    return run_training(store, fast_config())


class TestTraining:
    def test_fold_reports(self, artifacts):
        assert len(artifacts.fold_reports) == 3
        assert artifacts.cv_mean.f1 == pytest.approx(
            np.mean([r.f1 for r in artifacts.fold_reports])
        )

    def test_learns_the_synthetic_classes(self, artifacts):
        assert artifacts.cv_mean.f1 > 0.8
        assert artifacts.test_report is not None
        assert artifacts.test_report.f1 > 0.8
        assert artifacts.test_report.split == "test"

    def test_selection_mask_matches_model(self, artifacts):
        mask = artifacts.selection_mask
        assert mask.dtype == bool
        assert mask.shape == (artifacts.features_train.combined.width,)
        assert len(artifacts.model.feature_names) == int(mask.sum())

    def test_train_on_matrix_applies_mask(self, store):
        config = fast_config(families=("profile",))
        window, _ = config.windows()
        users = select_users_for_window(store, window, seed=0)
        features = extract_window_features(store, window, users, config)
        model, mask = train_on_matrix(features.combined, config)
        assert model.medians.shape == (int(mask.sum()),)


class TestSecondWindowProtocol:
    def test_identical_windows_give_identical_reports(self, store):
        config = fast_config(families=("profile",))
        window, _ = config.windows()
        r1, r2 = second_window_protocol(
            store, config, families=("profile",), windows=(window, window)
        )
        assert (r1.split, r2.split) == ("test", "second_test")
        assert r1.f1 == r2.f1
        assert r1.roc_auc == r2.roc_auc
        assert r1.accuracy == r2.accuracy
        assert r1.roc_points == r2.roc_points
        assert r1.pr_points == r2.pr_points


class TestClustering:
    def test_artifacts(self, store):
        config = fast_config()
        artifacts = run_clustering(store, config)
        assignment = artifacts.assignment
        assert assignment.n_clusters >= 1
        assert len(artifacts.texts) == len(assignment.item_ids) > 0
        assert artifacts.report
        assert artifacts.report[0]["size"] >= artifacts.report[-1]["size"]
        # the planted promo text repeats, so wallets must surface
        assert artifacts.wallet_hits
        assert any(hit["matches"]["crypto"] > 0 for hit in artifacts.keyword_hits)


class TestGraphStage:
    def test_artifacts(self, store):
        artifacts = run_graph_stage(store, fast_config())
        g = artifacts.graph
        assert artifacts.train_graph.n_edges == g.n_edges - len(artifacts.held_out)
        assert artifacts.held_out
        assert artifacts.embeddings.vectors.shape[1] == 8
        assert 0.0 <= artifacts.ranking.auc <= 1.0
        assert 0.0 < artifacts.ranking.mrr <= 1.0
