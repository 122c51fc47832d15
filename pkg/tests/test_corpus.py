import collections

import numpy as np
import pytest
from hypothesis import given, strategies as st

from intentrec import corpus as C
from oracles import segment_oracle


def write_lines(tmp_path, lines, name="data.txt"):
    path = tmp_path / name
    path.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
    return path


class TestLoad:
    def test_parses_users_and_items(self, tmp_path):
        path = write_lines(tmp_path, ["7 3 9 3 5", "2 1 1 1"])
        corpus = C.load_interactions(path)
        assert corpus.user_count == 2
        assert corpus.sequences[0].user_id == 7
        assert corpus.sequences[0].items == [3, 9, 3, 5]
        assert corpus.sequences[1].items == [1, 1, 1]
        assert corpus.item_count == 9
        assert corpus.action_count == 7

    def test_empty_line_names_line_number(self, tmp_path):
        path = write_lines(tmp_path, ["1 2 3", "", "3 4 5"])
        with pytest.raises(C.CorpusError, match="line 2"):
            C.load_interactions(path)

    def test_line_without_items_rejected(self, tmp_path):
        path = write_lines(tmp_path, ["1 2 3", "9"])
        with pytest.raises(C.CorpusError, match="line 2"):
            C.load_interactions(path)

    def test_non_integer_token_rejected(self, tmp_path):
        path = write_lines(tmp_path, ["1 2 x"])
        with pytest.raises(C.CorpusError, match="line 1"):
            C.load_interactions(path)

    def test_empty_file_rejected(self, tmp_path):
        path = write_lines(tmp_path, [])
        with pytest.raises(C.CorpusError, match="empty"):
            C.load_interactions(path)

    def test_missing_file_raises_file_not_found(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            C.load_interactions(tmp_path / "nope.txt")

    def test_duplicate_user_rejected(self, tmp_path):
        path = write_lines(tmp_path, ["1 2 3", "1 4 5"])
        with pytest.raises(C.CorpusError, match="line 2"):
            C.load_interactions(path)

    def test_non_positive_item_rejected(self, tmp_path):
        path = write_lines(tmp_path, ["1 2 0 3"])
        with pytest.raises(C.CorpusError, match="line 1"):
            C.load_interactions(path)


class TestFiveCore:
    def test_dense_corpus_unchanged(self, corpus_factory):
        corpus = corpus_factory([[1, 2, 1, 2, 1], [2, 1, 2, 1, 2]], split=False)
        out = C.five_core_filter(corpus)
        assert [s.items for s in out.sequences] == [s.items for s in corpus.sequences]

    def test_rare_item_dropped_then_user_cascade(self, corpus_factory):
        # item 9 appears once; removing it shortens user 2 below five,
        # whose removal starves items 3 and 4
        base = [[1, 2, 1, 2, 1, 2, 1, 2, 1, 2]] * 2
        cascade = [[1, 2, 3, 4, 9], [3, 4, 3, 4, 3, 4]]
        corpus = corpus_factory(base + cascade, split=False)
        out = C.five_core_filter(corpus)
        surviving_items = {i for s in out.sequences for i in s.items}
        assert 9 not in surviving_items
        counts = collections.Counter(i for s in out.sequences for i in s.items)
        assert all(c >= 5 for c in counts.values())
        assert all(len(s) >= 5 for s in out.sequences)

    def test_everything_filtered_raises(self, corpus_factory):
        corpus = corpus_factory([[1, 2, 3]], split=False)
        with pytest.raises(C.CorpusError):
            C.five_core_filter(corpus)

    @given(st.lists(
        st.lists(st.integers(min_value=1, max_value=12), min_size=1, max_size=15),
        min_size=1, max_size=12,
    ))
    def test_fixpoint_and_idempotence(self, item_lists):
        sequences = [C.InteractionSequence(u, items)
                     for u, items in enumerate(item_lists, start=1)]
        corpus = C.Corpus(sequences, item_count=12)
        try:
            once = C.five_core_filter(corpus)
        except C.CorpusError:
            return
        counts = collections.Counter(i for s in once.sequences for i in s.items)
        assert all(c >= 5 for c in counts.values())
        assert all(len(s) >= 5 for s in once.sequences)
        twice = C.five_core_filter(once)
        assert [s.items for s in twice.sequences] == [s.items for s in once.sequences]


class TestReindex:
    def test_first_appearance_order(self, corpus_factory):
        corpus = corpus_factory([[5, 900, 5]], split=False)
        out = C.reindex(corpus)
        assert out.sequences[0].items == [1, 2, 1]
        assert out.id_map == {5: 1, 900: 2}
        assert out.item_count == 2

    def test_across_users(self, corpus_factory):
        corpus = corpus_factory([[10, 20], [20, 30]], split=False)
        out = C.reindex(corpus)
        assert out.sequences[0].items == [1, 2]
        assert out.sequences[1].items == [2, 3]

    @given(st.lists(
        st.lists(st.integers(min_value=1, max_value=1000), min_size=1, max_size=20),
        min_size=1, max_size=10,
    ))
    def test_dense_range_and_count_preserved(self, item_lists):
        sequences = [C.InteractionSequence(u, items)
                     for u, items in enumerate(item_lists, start=1)]
        out = C.reindex(C.Corpus(sequences, item_count=1000))
        distinct_before = {i for items in item_lists for i in items}
        distinct_after = {i for s in out.sequences for i in s.items}
        assert distinct_after == set(range(1, len(distinct_before) + 1))
        assert out.action_count == sum(len(x) for x in item_lists)


class TestSplit:
    def test_views_for_five_items(self, corpus_factory):
        corpus = C.split_leave_one_out(corpus_factory([[1, 2, 3, 4, 5]], split=False))
        seq = corpus.sequences[0]
        assert corpus.train_items(seq) == [1, 2, 3]
        assert corpus.valid_pair(seq) == ([1, 2, 3], 4)
        assert corpus.test_pair(seq) == ([1, 2, 3, 4], 5)

    def test_minimal_three_items(self, corpus_factory):
        corpus = C.split_leave_one_out(corpus_factory([[1, 2, 3]], split=False))
        seq = corpus.sequences[0]
        assert corpus.train_items(seq) == [1]
        assert corpus.valid_pair(seq)[1] == 2
        assert corpus.test_pair(seq) == ([1, 2], 3)

    def test_one_test_pair_per_user(self, corpus_factory):
        corpus = C.split_leave_one_out(
            corpus_factory([[1, 2, 3], [2, 3, 4, 5], [1, 3, 5]], split=False))
        assert len([corpus.test_pair(s) for s in corpus.sequences]) == corpus.user_count

    def test_short_users_dropped_with_log(self, corpus_factory, caplog):
        corpus = corpus_factory([[1, 2], [1, 2, 3]], split=False)
        with caplog.at_level("WARNING"):
            out = C.split_leave_one_out(corpus)
        assert out.user_count == 1
        assert "1 user(s)" in caplog.text

    def test_all_too_short_raises(self, corpus_factory):
        with pytest.raises(C.CorpusError):
            C.split_leave_one_out(corpus_factory([[1, 2]], split=False))

    def test_views_require_split(self, corpus_factory):
        corpus = corpus_factory([[1, 2, 3]], split=False)
        with pytest.raises(C.CorpusError):
            corpus.train_items(corpus.sequences[0])


class TestSegment:
    def test_short_branch_hand_case(self):
        got = [(i.input, i.target) for i in C.segment([1, 2, 3, 4], 50)]
        assert got == [((1,), 2), ((1, 2), 3), ((1, 2, 3), 4)]

    def test_minimal_sequence(self):
        got = [(i.input, i.target) for i in C.segment([1, 2], 50)]
        assert got == [((1,), 2)]

    def test_sliding_branch_hand_case(self):
        got = [(i.input, i.target) for i in C.segment([1, 2, 3, 4, 5, 6], 3)]
        assert got == [((1,), 2), ((1, 2), 3), ((1, 2, 3), 4),
                       ((2, 3, 4), 5), ((3, 4, 5), 6)]

    def test_too_short_yields_nothing(self):
        assert C.segment([1], 5) == []
        assert C.segment([], 5) == []

    def test_ids_and_user_assigned(self):
        out = C.segment([4, 5, 6], 10, source_user=9, start_id=7)
        assert [i.instance_id for i in out] == [7, 8]
        assert all(i.source_user == 9 for i in out)

    @given(
        st.lists(st.integers(min_value=1, max_value=50), min_size=2, max_size=60),
        st.sampled_from([1, 2, 3, 10, 50]),
    )
    def test_matches_prefix_oracle(self, items, n):
        got = [(i.input, i.target) for i in C.segment(items, n)]
        assert got == segment_oracle(items, n)
        assert len(got) == len(items) - 1

    @given(
        st.lists(st.integers(min_value=1, max_value=50), min_size=2, max_size=60),
        st.sampled_from([1, 3, 10]),
    )
    def test_window_is_suffix_of_prefix(self, items, n):
        for inst in C.segment(items, n):
            t = inst.instance_id + 1  # 0-based target position
            assert inst.target == items[t]
            assert list(inst.input) == items[max(0, t - n):t]


class TestTargetIndex:
    def test_grouping_hand_case(self):
        instances = [
            C.TrainingInstance(0, (1,), 2, 1),
            C.TrainingInstance(1, (1, 2), 3, 1),
            C.TrainingInstance(2, (4,), 2, 2),
        ]
        index = C.build_target_index(instances)
        assert index.buckets == {2: [0, 2], 3: [1]}

    def test_distinct_targets_singleton_buckets(self):
        instances = [C.TrainingInstance(i, (1,), 10 + i, 1) for i in range(4)]
        index = C.build_target_index(instances)
        assert all(len(b) == 1 for b in index.buckets.values())

    def test_partition_property(self, corpus_factory):
        corpus = corpus_factory([[1, 2, 3, 4, 5], [2, 4, 2, 4, 6], [3, 1, 4, 1, 5]])
        instances = C.segment_corpus(corpus, 3)
        index = C.build_target_index(instances)
        scattered = sorted(i for bucket in index.buckets.values() for i in bucket)
        assert scattered == list(range(len(instances)))
        expected = sum(len(corpus.train_items(s)) - 1 for s in corpus.sequences)
        assert len(scattered) == expected

    def test_misnumbered_instances_rejected(self):
        instances = [C.TrainingInstance(5, (1,), 2, 1)]
        with pytest.raises(C.CorpusError):
            C.build_target_index(instances)


class TestSamplePositive:
    def _index(self, targets):
        instances = [C.TrainingInstance(i, (1,), t, 1) for i, t in enumerate(targets)]
        return C.build_target_index(instances), instances

    def test_singleton_returns_anchor(self, rng):
        index, instances = self._index([7])
        assert C.sample_positive(index, instances[0], rng) is instances[0]

    def test_pair_is_forced(self, rng):
        index, instances = self._index([7, 7])
        for _ in range(5):
            assert C.sample_positive(index, instances[0], rng).instance_id == 1

    def test_uniform_over_bucket(self):
        index, instances = self._index([3] * 11)
        rng = np.random.default_rng(99)
        counts = collections.Counter(
            C.sample_positive(index, instances[0], rng).instance_id
            for _ in range(10_000)
        )
        assert set(counts) == set(range(1, 11))
        for member in range(1, 11):
            assert abs(counts[member] / 10_000 - 0.1) <= 0.01

    def test_missing_bucket_is_integrity_error(self, rng):
        index, _ = self._index([3])
        stray = C.TrainingInstance(9, (1,), 99, 1)
        with pytest.raises(C.CorpusError):
            C.sample_positive(index, stray, rng)


class TestPadWindow:
    def test_pads_left(self):
        assert C.pad_window([4, 5], 5) == [0, 0, 0, 4, 5]

    def test_truncates_to_most_recent(self):
        assert C.pad_window([1, 2, 3, 4, 5], 3) == [3, 4, 5]

    def test_exact_fit(self):
        assert C.pad_window([1, 2], 2) == [1, 2]


class TestPersistence:
    def test_roundtrip(self, tmp_path, corpus_factory):
        corpus = C.split_leave_one_out(
            corpus_factory([[1, 2, 3, 4, 5], [2, 1, 2, 1, 3]], split=False))
        paths = C.write_preprocessed(corpus, tmp_path / "out")
        again = C.load_preprocessed(tmp_path / "out")
        assert [s.items for s in again.sequences] == [s.items for s in corpus.sequences]
        assert again.split_ready
        assert paths["stats"].exists() and paths["id_map"].exists()

    def test_stats_fields(self, corpus_factory):
        corpus = corpus_factory([[1, 2, 3, 4, 5]], split=False)
        stats = corpus.stats()
        assert stats["users"] == 1
        assert stats["items"] == 5
        assert stats["actions"] == 5
        assert stats["avg_actions_per_user"] == 5.0
        assert stats["sparsity"] == 0.0

    def test_missing_dir_raises(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            C.load_preprocessed(tmp_path / "absent")
