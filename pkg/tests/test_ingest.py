import json

import pytest
from hypothesis import given, settings, strategies as st

from sessrec.ingest import (
    DataError, Example, Session, augment_prefixes, build_corpus, load_events,
    make_corpus, split_by_day, split_holdout, truncate_recent, RawEvent, Corpus,
)


def ev(sid, item, ts):
    return RawEvent(sid, item, ts)


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


class TestLoadEvents:
    def test_csv_three_lines(self, tmp_path):
        p = write(tmp_path, "e.csv",
                  "session_id,item_id,timestamp\ns1,a,10\ns1,b,11\ns2,a,12\n")
        events, report = load_events(p)
        assert len(events) == 3
        assert report.n_malformed == 0
        assert events[0] == RawEvent("s1", "a", 10)

    def test_empty_file(self, tmp_path):
        p = write(tmp_path, "e.csv", "session_id,item_id,timestamp\n")
        events, report = load_events(p)
        assert events == [] and report.n_malformed == 0

    def test_non_integer_timestamp_skipped(self, tmp_path):
        p = write(tmp_path, "e.csv",
                  "session_id,item_id,timestamp\ns1,a,10\ns1,b,oops\n"
                  + "\n".join(f"s1,c,{i}" for i in range(20)) + "\n")
        events, report = load_events(p)
        assert report.n_malformed == 1
        assert len(events) == 21

    def test_too_many_malformed_is_error(self, tmp_path):
        p = write(tmp_path, "e.csv",
                  "session_id,item_id,timestamp\ns1,a,x\ns1,b,y\ns1,c,3\n")
        with pytest.raises(DataError):
            load_events(p)

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError):
            load_events(tmp_path / "nope.csv")

    def test_unknown_format(self, tmp_path):
        p = write(tmp_path, "e.csv", "session_id,item_id,timestamp\n")
        with pytest.raises(DataError):
            load_events(p, format="parquet")

    def test_jsonl(self, tmp_path):
        rows = [{"session_id": "s1", "item_id": "a", "timestamp": 5},
                {"session_id": "s1", "item_id": "b", "timestamp": 6}]
        p = write(tmp_path, "e.jsonl", "\n".join(json.dumps(r) for r in rows))
        events, _ = load_events(p)
        assert [e.item_key for e in events] == ["a", "b"]

    def test_tsv(self, tmp_path):
        p = write(tmp_path, "e.tsv", "session_id\titem_id\ttimestamp\ns1\ta\t5\n")
        events, _ = load_events(p)
        assert events == [RawEvent("s1", "a", 5)]


class TestBuildCorpus:
    def test_single_session_counts(self):
        events = [ev("s1", "a", 1), ev("s1", "b", 2), ev("s1", "a", 3)]
        vocab, sessions = build_corpus(events, min_item_support=1, min_session_len=2)
        assert vocab.size == 2
        assert vocab.popularity[vocab.key_to_index["a"]] == 2
        assert vocab.popularity[vocab.key_to_index["b"]] == 1
        assert sessions[0].items == [vocab.key_to_index["a"], vocab.key_to_index["b"],
                                     vocab.key_to_index["a"]]

    def test_low_support_item_dropped(self):
        events = ([ev("s1", "a", 1), ev("s1", "rare", 2), ev("s1", "b", 3)]
                  + [ev(f"s{i}", "a", 10 * i) for i in range(2, 8)]
                  + [ev(f"s{i}", "b", 10 * i + 1) for i in range(2, 8)])
        vocab, sessions = build_corpus(events, min_item_support=5, min_session_len=2)
        assert "rare" not in vocab.key_to_index
        s1 = next(s for s in sessions if s.id == "s1")
        assert len(s1.items) == 2

    def test_fixed_point_removes_shrunk_session(self):
        # hand-traced 3-session toy log: dropping the rare item shrinks s3
        # to length 1, which then gets removed entirely
        events = [
            ev("s1", "a", 1), ev("s1", "b", 2),
            ev("s2", "a", 3), ev("s2", "b", 4),
            ev("s3", "a", 5), ev("s3", "x", 6),
        ]
        vocab, sessions = build_corpus(events, min_item_support=2, min_session_len=2)
        assert {s.id for s in sessions} == {"s1", "s2"}
        assert "x" not in vocab.key_to_index
        # popularity reflects surviving sessions only: a appears in s1, s2, s3->dropped
        assert vocab.popularity[vocab.key_to_index["a"]] == 2

    def test_fixed_point_idempotent(self):
        events = [ev(f"s{i}", k, i * 10 + j)
                  for i in range(6) for j, k in enumerate(["a", "b", "c"])]
        vocab, sessions = build_corpus(events, min_item_support=3, min_session_len=2)
        # rebuild from the surviving corpus: nothing changes
        events2 = [ev(s.id, vocab.keys[it], s.start_ts + j)
                   for s in sessions for j, it in enumerate(s.items)]
        vocab2, sessions2 = build_corpus(events2, min_item_support=3, min_session_len=2)
        assert [s.items for s in sessions2] == [s.items for s in sessions]
        assert vocab2.popularity == vocab.popularity

    def test_popularity_totals_match_click_count(self):
        events = [ev(f"s{i}", k, i * 10 + j)
                  for i in range(8) for j, k in enumerate(["a", "b"])]
        vocab, sessions = build_corpus(events, 1, 2)
        assert sum(vocab.popularity) == sum(len(s.items) for s in sessions)

    def test_all_filtered_is_error(self):
        with pytest.raises(DataError):
            build_corpus([ev("s1", "a", 1), ev("s1", "b", 2)], min_item_support=10,
                         min_session_len=2)

    def test_empty_events_is_error(self):
        with pytest.raises(DataError):
            build_corpus([], 1, 2)

    def test_timestamp_ties_keep_input_order(self):
        events = [ev("s1", "a", 5), ev("s1", "b", 5), ev("s1", "c", 5)]
        vocab, sessions = build_corpus(events, 1, 2)
        assert [vocab.keys[i] for i in sessions[0].items] == ["a", "b", "c"]


class TestTruncateRecent:
    def test_long_list_keeps_last_ten(self):
        assert truncate_recent(list(range(15)), 10) == list(range(5, 15))

    def test_short_list_unchanged(self):
        assert truncate_recent([1, 2, 3], 10) == [1, 2, 3]

    def test_boundary_unchanged(self):
        assert truncate_recent(list(range(10)), 10) == list(range(10))

    def test_bad_cap(self):
        with pytest.raises(DataError):
            truncate_recent([1], 0)


class TestAugmentPrefixes:
    def test_three_items(self):
        s = Session("s", [0, 1, 2], day=0)
        assert augment_prefixes(s, cap=10) == [
            Example((0,), 1), Example((0, 1), 2)]

    def test_two_items(self):
        s = Session("s", [0, 1], day=0)
        assert augment_prefixes(s, cap=10) == [Example((0,), 1)]

    def test_length_one_yields_nothing(self):
        assert augment_prefixes(Session("s", [0], day=0), cap=10) == []

    def test_twelve_items_cap_ten(self):
        s = Session("s", list(range(12)), day=0)
        out = augment_prefixes(s, cap=10)
        assert len(out) == 11
        assert out[-1] == Example(tuple(range(1, 11)), 11)
        assert len(out[-1].prefix) == 10

    def test_uncapped(self):
        s = Session("s", list(range(12)), day=0)
        out = augment_prefixes(s, cap=None)
        assert len(out[-1].prefix) == 11

    @given(st.integers(min_value=2, max_value=12))
    @settings(max_examples=20, deadline=None)
    def test_example_count_property(self, length):
        s = Session("s", list(range(length)), day=0)
        assert len(augment_prefixes(s, cap=10)) == length - 1


class TestSplits:
    def sessions(self, n, same_ts=False):
        return [Session(f"s{i}", [0, 1], day=0 if same_ts else i,
                        start_ts=0 if same_ts else i * 1000) for i in range(n)]

    def test_ten_sessions_fraction_tenth(self):
        train, val = split_holdout(self.sessions(10), 0.1)
        assert len(val) == 1 and val[0].id == "s9"

    def test_ties_broken_by_input_order(self):
        train, val = split_holdout(self.sessions(10, same_ts=True), 0.1)
        assert val[0].id == "s9"

    def test_seven_sessions_ceil(self):
        train, val = split_holdout(self.sessions(7), 0.1)
        assert len(val) == 1 and len(train) == 6

    def test_partition_property(self):
        sessions = self.sessions(13)
        train, val = split_holdout(sessions, 0.25)
        assert len(train) + len(val) == 13
        assert {s.id for s in train} | {s.id for s in val} == {s.id for s in sessions}
        assert not ({s.id for s in train} & {s.id for s in val})
        assert min(s.day for s in val) >= max(s.day for s in train)

    def test_too_few_sessions(self):
        with pytest.raises(DataError):
            split_holdout(self.sessions(1), 0.1)

    def test_split_by_day(self):
        sessions = [Session("a", [0, 1], 3), Session("b", [0, 1], 3),
                    Session("c", [0, 1], 5)]
        buckets = split_by_day(sessions)
        assert list(buckets) == [3, 5]
        assert [s.id for s in buckets[3]] == ["a", "b"]

    def test_split_by_day_empty(self):
        assert split_by_day([]) == {}

    def test_split_by_day_single(self):
        assert list(split_by_day([Session("a", [0], 2)])) == [2]


def test_corpus_round_trip(tmp_path):
    events = [ev(f"s{i}", k, i * 100 + j)
              for i in range(30) for j, k in enumerate(["a", "b", "c"])]
    corpus = make_corpus(events, min_item_support=2, min_session_len=2)
    path = tmp_path / "corpus.json"
    corpus.save(path)
    loaded = Corpus.load(path)
    assert loaded.to_dict() == corpus.to_dict()
    # popularity counted on the training sessions
    total = sum(len(s.items) for s in loaded.train_sessions + loaded.val_sessions)
    assert sum(loaded.vocab.popularity) == total
