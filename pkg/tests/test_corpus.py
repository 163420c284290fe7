import json

import numpy as np
import pytest

from suspkit.corpus import (
    AccountLabel,
    CorpusStore,
    EmptyClass,
    MalformedRecord,
    TimeWindow,
    parse_label_row,
    parse_snapshot_record,
    parse_status_date,
    parse_tweet_record,
    select_window_users,
    split_windows,
    undersample_balance,
    DAY_SECONDS,
)

from conftest import WINDOW_START, snapshot_line, tweet_line


class TestParseTweet:
    def test_original_post(self):
        t = parse_tweet_record(tweet_line(text="just text"))
        assert t.kind == "original"
        assert t.referenced_tweet_id is None
        assert t.lang == "und"

    def test_retweet_from_reference_triplet(self):
        t = parse_tweet_record(
            tweet_line(
                retweeted_status_id="r1",
                retweeted_user_id="u2",
                retweeted_status_created_at=WINDOW_START - 60,
            )
        )
        assert t.kind == "retweet"
        assert t.referenced_tweet_id == "r1"
        assert t.referenced_user_id == "u2"
        assert t.referenced_created_at == WINDOW_START - 60

    def test_quote_from_reference_triplet(self):
        t = parse_tweet_record(
            tweet_line(
                quoted_status_id="q1",
                quoted_user_id="u3",
                quoted_status_created_at=WINDOW_START - 5,
            )
        )
        assert t.kind == "quote"
        assert t.referenced_user_id == "u3"

    def test_partial_reference_triplet_rejected(self):
        with pytest.raises(MalformedRecord):
            parse_tweet_record(tweet_line(retweeted_status_id="r1"))

    def test_reference_newer_than_post_rejected(self):
        with pytest.raises(MalformedRecord):
            parse_tweet_record(
                tweet_line(
                    quoted_status_id="q1",
                    quoted_user_id="u3",
                    quoted_status_created_at=WINDOW_START + 60,
                )
            )

    @pytest.mark.parametrize("missing", ["id", "user_id", "created_at", "text"])
    def test_missing_required_field_rejected(self, missing):
        with pytest.raises(MalformedRecord):
            parse_tweet_record(tweet_line(**{missing: None}))

    def test_invalid_json_rejected(self):
        with pytest.raises(MalformedRecord):
            parse_tweet_record("{not json")

    def test_non_object_rejected(self):
        with pytest.raises(MalformedRecord):
            parse_tweet_record(json.dumps([1, 2]))

    def test_hashtag_hash_prefix_stripped(self):
        t = parse_tweet_record(tweet_line(hashtags=["#crypto", "news"]))
        assert t.hashtags == ("crypto", "news")

    def test_numeric_ids_accepted_as_strings(self):
        t = parse_tweet_record(tweet_line(id=42, user_id=7))
        assert (t.tweet_id, t.user_id) == ("42", "7")

    def test_float_epoch_must_be_integral(self):
        assert parse_tweet_record(tweet_line(created_at=1.0)).created_at == 1
        with pytest.raises(MalformedRecord):
            parse_tweet_record(tweet_line(created_at=1.5))


class TestParseSnapshot:
    def test_basic_fields(self):
        s = parse_snapshot_record(snapshot_line())
        assert s.followers == 10
        assert s.name == "Alice"
        assert not s.verified

    def test_negative_count_rejected(self):
        with pytest.raises(MalformedRecord):
            parse_snapshot_record(snapshot_line(followers=-1))

    def test_created_after_observed_rejected(self):
        with pytest.raises(MalformedRecord):
            parse_snapshot_record(
                snapshot_line(account_created_at=WINDOW_START + 10 * DAY_SECONDS)
            )

    def test_non_boolean_flag_rejected(self):
        with pytest.raises(MalformedRecord):
            parse_snapshot_record(snapshot_line(verified="yes"))

    def test_flags_default_false(self):
        s = parse_snapshot_record(snapshot_line())
        assert (s.verified, s.default_profile, s.default_profile_image) == (
            False,
            False,
            False,
        )


class TestLabels:
    def test_status_date_parsing(self):
        assert parse_status_date("2022-02-23") == WINDOW_START
        assert parse_status_date("2022-02-23T00:00:00Z") == WINDOW_START
        assert parse_status_date("2022-02-23T01:00:00+01:00") == WINDOW_START
        assert parse_status_date("") is None
        with pytest.raises(MalformedRecord):
            parse_status_date("not a date")

    def test_suspended_requires_date(self):
        row = {"user_id": "u1", "status": "suspended", "status_date": ""}
        with pytest.raises(MalformedRecord):
            parse_label_row(row)

    def test_normal_allows_empty_date(self):
        label = parse_label_row({"user_id": "u1", "status": "normal", "status_date": ""})
        assert label.status_date is None

    def test_unknown_status_rejected(self):
        with pytest.raises(MalformedRecord):
            parse_label_row({"user_id": "u1", "status": "banned", "status_date": ""})


class TestTimeWindow:
    def test_half_open_contains(self, window):
        assert window.contains(window.start)
        assert not window.contains(window.end)

    def test_empty_window_rejected(self):
        with pytest.raises(ValueError):
            TimeWindow(10, 10)

    def test_split_windows_back_to_back(self):
        first, second = split_windows(WINDOW_START, window_days=21)
        assert first.days == 21
        assert second.start == first.end
        assert second.end - second.start == 21 * DAY_SECONDS


class TestCorpusStore:
    def test_ingest_counts_and_skips(self, window):
        store = CorpusStore()
        lines = [tweet_line(id=f"t{i}") for i in range(3)] + ["{broken", ""]
        stats = store.ingest_tweets(lines)
        assert (stats.parsed, stats.skipped, stats.inserted) == (3, 1, 3)
        assert store.tweet_count() == 3

    def test_reingest_is_idempotent(self):
        store = CorpusStore()
        lines = [tweet_line(id=f"t{i}") for i in range(4)]
        store.ingest_tweets(lines)
        stats = store.ingest_tweets(lines)
        assert stats.inserted == 0
        assert store.tweet_count() == 4

    def test_timeline_sorted_by_time_then_id(self, window):
        store = CorpusStore()
        store.ingest_tweets(
            [
                tweet_line(id="b", created_at=WINDOW_START + 10),
                tweet_line(id="a", created_at=WINDOW_START + 10),
                tweet_line(id="c", created_at=WINDOW_START + 5),
            ]
        )
        timeline = store.user_timeline("u1", window)
        assert [t.tweet_id for t in timeline] == ["c", "a", "b"]

    def test_timeline_respects_window_bounds(self, window):
        store = CorpusStore()
        store.ingest_tweets(
            [
                tweet_line(id="in", created_at=window.start),
                tweet_line(id="out_low", created_at=window.start - 1),
                tweet_line(id="out_high", created_at=window.end),
            ]
        )
        assert [t.tweet_id for t in store.user_timeline("u1", window)] == ["in"]

    def test_unknown_user_gets_empty_timeline(self, window):
        assert CorpusStore().user_timeline("ghost", window) == []

    def test_active_users_distinct_sorted(self, window):
        store = CorpusStore()
        store.ingest_tweets(
            [
                tweet_line(id="1", user_id="zed"),
                tweet_line(id="2", user_id="amy"),
                tweet_line(id="3", user_id="amy"),
            ]
        )
        assert store.active_users(window) == ["amy", "zed"]

    def test_snapshot_roundtrip(self, window):
        store = CorpusStore()
        store.ingest_snapshots([snapshot_line(observed_at=WINDOW_START + 2)])
        snaps = store.snapshots("u1", window)
        assert len(snaps) == 1
        assert snaps[0].statuses == 30

    def test_label_ingest(self, tmp_path, window):
        labels_csv = tmp_path / "labels.csv"
        labels_csv.write_text(
            "user_id,status,status_date\n"
            "u1,suspended,2022-03-01\n"
            "u2,normal,\n"
            "u3,banned,\n"
        )
        store = CorpusStore()
        stats = store.ingest_labels(labels_csv)
        assert (stats.parsed, stats.skipped) == (2, 1)
        labels = store.labels()
        assert labels["u1"].status == "suspended"
        assert labels["u1"].status_date == parse_status_date("2022-03-01")
        assert labels["u2"].status_date is None


class TestUserSelection:
    def _labels(self, window):
        inside = window.start + DAY_SECONDS
        outside = window.end + DAY_SECONDS
        return {
            "s_in": AccountLabel("s_in", "suspended", inside),
            "s_out": AccountLabel("s_out", "suspended", outside),
            "d1": AccountLabel("d1", "deactivated", inside),
            "n1": AccountLabel("n1", "normal"),
        }

    def test_positive_negative_assignment(self, window):
        labels = self._labels(window)
        active = ["n1", "unlabeled", "s_out", "d1"]
        users = select_window_users(window, labels, active)
        assert users == {"s_in": 1, "n1": 0, "unlabeled": 0}

    def test_suspended_active_user_stays_positive(self, window):
        labels = self._labels(window)
        users = select_window_users(window, labels, ["s_in"])
        assert users["s_in"] == 1

    def test_balance_equalizes_and_is_deterministic(self):
        users = {f"s{i}": 1 for i in range(3)}
        users.update({f"n{i}": 0 for i in range(9)})
        first = undersample_balance(users, seed=11)
        second = undersample_balance(users, seed=11)
        assert first == second
        values = np.asarray(sorted(first.values()))
        assert (values == 1).sum() == 3
        assert (values == 0).sum() == 3
        assert set(first) <= set(users)

    def test_balance_requires_both_classes(self):
        with pytest.raises(EmptyClass):
            undersample_balance({"a": 0, "b": 0}, seed=0)
