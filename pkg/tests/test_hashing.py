import math

import numpy as np
import pytest

from hashexit.errors import ConfigError, ParseError
from hashexit.hashing import (
    CorpusStats,
    EmbeddingTable,
    HashTable,
    Vocab,
    bucket_to_layer,
    build_clustered,
    build_frequency,
    build_mi,
    build_random,
    kmeans,
    load_embeddings,
    load_hash_table,
    parse_hash_table,
    save_embeddings,
    save_hash_table,
    serialize_hash_table,
    token_label_mi,
)

from helpers import make_random_labeled_corpus


def small_vocab(n=6):
    return Vocab(tuple("abcdef"[:n]))


class TestBucketToLayer:
    def test_three_buckets_twelve_layers(self):
        assert [bucket_to_layer(b, 3, 12) for b in range(3)] == [1, 5, 9]

    def test_identity_partition(self):
        for L in (1, 4, 12):
            assert [bucket_to_layer(b, L, L) for b in range(L)] == list(range(1, L + 1))

    def test_uneven_division(self):
        assert bucket_to_layer(1, 3, 6) == 3

    def test_monotone_and_bounded(self):
        for L in range(1, 13):
            for B in range(1, L + 1):
                layers = [bucket_to_layer(b, B, L) for b in range(B)]
                assert layers[0] == 1
                assert all(1 <= x <= L for x in layers)
                assert all(a < b for a, b in zip(layers, layers[1:]))

    def test_more_buckets_than_layers(self):
        with pytest.raises(ConfigError):
            bucket_to_layer(0, 13, 12)

    def test_bucket_out_of_range(self):
        with pytest.raises(ConfigError):
            bucket_to_layer(3, 3, 12)


class TestRandomHash:
    def test_single_bucket(self):
        t = build_random(small_vocab(), 1, 6, seed=0)
        assert np.all(t.buckets == 0)
        assert np.all(t.layers == 1)

    def test_deterministic(self):
        a = build_random(small_vocab(), 3, 6, seed=42)
        b = build_random(small_vocab(), 3, 6, seed=42)
        assert a == b
        assert serialize_hash_table(a) == serialize_hash_table(b)

    def test_equal_bucket_sizes(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            v = int(rng.integers(2, 40))
            L = int(rng.integers(2, 12))
            B = int(rng.integers(1, L + 1))
            t = build_random(Vocab(tuple(f"w{i}" for i in range(v))), B, L,
                             seed=int(rng.integers(1 << 30)))
            sizes = t.bucket_sizes()
            assert sizes.max() - sizes.min() <= 1

    def test_inconsistent_pair_differs(self):
        vocab = Vocab(tuple(f"w{i}" for i in range(16)))
        # coincidence is possible in principle; resample before judging
        differing = 0
        for seed in range(5):
            train, infer = build_random(vocab, 4, 8, seed=seed, consistent=False)
            assert train.method == "rand-incons-A"
            assert infer.method == "rand-incons-B"
            if np.any(train.buckets != infer.buckets):
                differing += 1
        assert differing >= 1

    def test_consistent_is_single_table(self):
        t = build_random(small_vocab(), 2, 4, seed=1)
        assert isinstance(t, HashTable)
        assert t.method == "rand-cons"

    def test_unknown_token_gets_last_layer(self):
        t = build_random(small_vocab(), 2, 4, seed=1)
        assert t.layer_of(99) == 4
        assert t.layer_of(-1) == 4
        assert t.layer_for("zzz") == 4


class TestFrequencyHash:
    def test_six_token_fixture(self):
        # sort by freq desc: a,b | c,d | e,f -> layers 1,3,5 (hand chunking)
        vocab = small_vocab()
        stats = CorpusStats(np.array([100, 50, 40, 10, 5, 1]), doc_count=6)
        t = build_frequency(vocab, stats, 3, 6)
        assert [t.layer_for(x) for x in "abcdef"] == [1, 1, 3, 3, 5, 5]

    def test_all_equal_ties_by_token_id(self):
        vocab = small_vocab()
        stats = CorpusStats(np.full(6, 7), doc_count=6)
        t = build_frequency(vocab, stats, 3, 6)
        assert list(t.buckets) == [0, 0, 1, 1, 2, 2]

    def test_single_bucket(self):
        stats = CorpusStats(np.array([3, 2, 1, 1, 1, 1]), doc_count=6)
        t = build_frequency(small_vocab(), stats, 1, 6)
        assert np.all(t.layers == 1)

    def test_uneven_chunks_front_loaded(self):
        # V=5, B=3: chunk sizes 2,2,1
        vocab = Vocab(tuple("abcde"))
        stats = CorpusStats(np.array([9, 7, 5, 3, 1]), doc_count=5)
        t = build_frequency(vocab, stats, 3, 6)
        assert list(t.bucket_sizes()) == [2, 2, 1]


class TestMutualInformation:
    def test_always_present_is_zero(self):
        vocab = Vocab(("x",))
        docs = [["x"], ["x"], ["x"], ["x"]]
        stats = CorpusStats.from_documents(vocab, docs, ["1", "1", "0", "0"])
        assert token_label_mi(stats, 0) == 0.0

    def test_perfect_predictor_is_ln2(self):
        vocab = Vocab(("x", "y"))
        docs = [["x"], ["x"], ["y"], ["y"]]
        stats = CorpusStats.from_documents(vocab, docs, ["1", "1", "0", "0"])
        assert token_label_mi(stats, 0) == pytest.approx(math.log(2), abs=1e-12)

    def test_independent_token_is_zero(self):
        vocab = Vocab(("x", "y"))
        docs = [["x"], ["y"], ["x"], ["y"]]
        stats = CorpusStats.from_documents(vocab, docs, ["1", "1", "0", "0"])
        assert token_label_mi(stats, 0) == pytest.approx(0.0, abs=1e-12)

    def test_unlabeled_stats_rejected(self):
        stats = CorpusStats(np.array([1, 1]), doc_count=2)
        with pytest.raises(ConfigError):
            token_label_mi(stats, 0)

    def test_nonnegative_on_random_corpora(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            vocab, stats, _, _ = make_random_labeled_corpus(rng)
            for t in range(len(vocab)):
                assert token_label_mi(stats, t) >= 0.0


class TestMiHash:
    def test_two_token_order(self):
        vocab = Vocab(("hi", "lo"))
        # "hi" present iff label 1; "lo" in every doc
        docs = [["hi", "lo"], ["hi", "lo"], ["lo"], ["lo"]]
        stats = CorpusStats.from_documents(vocab, docs, ["1", "1", "0", "0"])
        t = build_mi(vocab, stats, 2, 2)
        assert t.layer_for("hi") == 1
        assert t.layer_for("lo") == 2

    def test_all_equal_mi_ties_by_token_id(self):
        vocab = Vocab(("x", "y"))
        docs = [["x", "y"], ["x", "y"], ["x", "y"], ["x", "y"]]
        stats = CorpusStats.from_documents(vocab, docs, ["1", "1", "0", "0"])
        t = build_mi(vocab, stats, 2, 2)
        assert t.layer_for("x") == 1
        assert t.layer_for("y") == 2

    def test_single_bucket(self):
        vocab = Vocab(("x", "y"))
        docs = [["x"], ["y"]]
        stats = CorpusStats.from_documents(vocab, docs, ["1", "0"])
        t = build_mi(vocab, stats, 1, 4)
        assert np.all(t.layers == 1)

    def test_requires_labels(self):
        stats = CorpusStats(np.array([1, 1]), doc_count=2)
        with pytest.raises(ConfigError):
            build_mi(Vocab(("x", "y")), stats, 2, 2)


class TestKmeans:
    def test_two_separated_clouds(self):
        rng = np.random.default_rng(2)
        cloud_a = rng.normal(loc=0.0, scale=0.1, size=(20, 3))
        cloud_b = rng.normal(loc=10.0, scale=0.1, size=(20, 3))
        points = np.vstack([cloud_a, cloud_b])
        labels, centers = kmeans(points, 2, seed=0)
        # each cloud lands in exactly one cluster
        assert len(set(labels[:20])) == 1
        assert len(set(labels[20:])) == 1
        assert labels[0] != labels[20]
        within = np.linalg.norm(points - centers[labels], axis=1).max()
        between = np.linalg.norm(centers[0] - centers[1])
        assert within < between

    def test_k_equals_n(self):
        rng = np.random.default_rng(4)
        points = rng.normal(size=(7, 2))
        labels, centers = kmeans(points, 7, seed=1)
        assert sorted(labels) == list(range(7))
        inertia = ((points - centers[labels]) ** 2).sum()
        assert inertia == pytest.approx(0.0, abs=1e-20)

    def test_k_one_gives_global_mean(self):
        rng = np.random.default_rng(6)
        points = rng.normal(size=(15, 4))
        labels, centers = kmeans(points, 1, seed=0)
        assert np.all(labels == 0)
        assert np.allclose(centers[0], points.mean(axis=0), atol=1e-12)

    def test_deterministic(self):
        rng = np.random.default_rng(8)
        points = rng.normal(size=(30, 3))
        out1 = kmeans(points, 4, seed=9)
        out2 = kmeans(points, 4, seed=9)
        assert np.array_equal(out1[0], out2[0])
        assert np.array_equal(out1[1], out2[1])

    def test_k_too_large(self):
        with pytest.raises(ConfigError):
            kmeans(np.zeros((3, 2)), 4, seed=0)

    def test_centroids_match_assignment(self):
        rng = np.random.default_rng(10)
        points = rng.normal(size=(25, 2))
        labels, centers = kmeans(points, 3, seed=2)
        for c in range(3):
            assert np.allclose(centers[c], points[labels == c].mean(axis=0))


class TestClusteredHash:
    def test_single_bucket(self):
        vocab = small_vocab()
        emb = EmbeddingTable(vocab.tokens, np.random.default_rng(0).normal(size=(6, 4)))
        t = build_clustered(vocab, emb, 1, 6, seed=0)
        assert np.all(t.layers == 1)

    def test_low_norm_cluster_exits_first(self):
        vocab = Vocab(("a", "b", "c", "d"))
        vectors = np.array([
            [0.5, 0.0],
            [0.6, 0.1],
            [3.0, 3.0],
            [3.1, 2.9],
        ])
        t = build_clustered(vocab, EmbeddingTable(vocab.tokens, vectors), 2, 2, seed=0)
        assert t.layer_for("a") == 1
        assert t.layer_for("b") == 1
        assert t.layer_for("c") == 2
        assert t.layer_for("d") == 2

    def test_identical_embeddings_still_partition(self):
        vocab = small_vocab()
        emb = EmbeddingTable(vocab.tokens, np.ones((6, 3)))
        t = build_clustered(vocab, emb, 3, 6, seed=0)
        sizes = t.bucket_sizes()
        assert sizes.sum() == 6
        assert np.all(sizes >= 1)  # repair keeps every bucket non-empty

    def test_missing_embedding_rejected(self):
        vocab = small_vocab()
        emb = EmbeddingTable(("a", "b"), np.ones((2, 3)))
        with pytest.raises(ConfigError):
            build_clustered(vocab, emb, 2, 4, seed=0)


class TestSerialization:
    def test_round_trip_equality(self):
        t = build_random(small_vocab(), 3, 6, seed=5)
        assert parse_hash_table(serialize_hash_table(t)) == t

    def test_round_trip_bytes(self):
        t = build_random(small_vocab(), 2, 8, seed=5)
        text = serialize_hash_table(t)
        assert serialize_hash_table(parse_hash_table(text)) == text

    def test_file_round_trip(self, tmp_path):
        t = build_random(small_vocab(), 3, 6, seed=7)
        path = tmp_path / "table.hash"
        save_hash_table(t, path)
        assert load_hash_table(path) == t

    def test_header_carries_metadata(self):
        t = build_random(small_vocab(), 3, 6, seed=12)
        head = serialize_hash_table(t).splitlines()[0]
        assert head == "#hashee v1 method=rand-cons B=3 L=6 seed=12"

    def test_bad_header_rejected(self):
        with pytest.raises(ParseError):
            parse_hash_table("#wrong v9 method=mi B=1 L=1 seed=0\n")

    def test_inconsistent_layer_rejected(self):
        text = "#hashee v1 method=rand-cons B=2 L=4 seed=0\na\t0\t1\nb\t1\t4\n"
        with pytest.raises(ParseError):
            parse_hash_table(text)

    def test_truncated_line_rejected(self):
        text = "#hashee v1 method=rand-cons B=2 L=4 seed=0\na\t0\n"
        with pytest.raises(ParseError):
            parse_hash_table(text)


class TestEmbeddingIO:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(1)
        emb = EmbeddingTable(("a", "b", "c"), rng.normal(size=(3, 5)))
        path = tmp_path / "emb.txt"
        save_embeddings(emb, path)
        back = load_embeddings(path)
        assert back.tokens == emb.tokens
        assert np.array_equal(back.vectors, emb.vectors)

    def test_header_shape(self, tmp_path):
        emb = EmbeddingTable(("a",), np.array([[1.0, 2.0]]))
        path = tmp_path / "emb.txt"
        save_embeddings(emb, path)
        assert path.read_text().splitlines()[0] == "1 2"

    def test_short_line_rejected(self, tmp_path):
        path = tmp_path / "emb.txt"
        path.write_text("2 3\na 1.0 2.0 3.0\nb 1.0\n")
        with pytest.raises(ParseError):
            load_embeddings(path)


class TestTableLaws:
    """Sort-key monotonicity, balance, and round-trips on random corpora."""

    def test_frequency_and_mi_laws(self):
        rng = np.random.default_rng(123)
        for _ in range(50):
            vocab, stats, _, _ = make_random_labeled_corpus(rng)
            L = int(rng.integers(2, 13))
            B = int(rng.integers(1, L + 1))
            freq_t = build_frequency(vocab, stats, B, L)
            mi_t = build_mi(vocab, stats, B, L)
            mi_scores = np.array([token_label_mi(stats, t) for t in range(len(vocab))])
            for table, key in ((freq_t, stats.freq), (mi_t, mi_scores)):
                layers = table.layers
                sizes = table.bucket_sizes()
                assert sizes.max() - sizes.min() <= 1
                for t1 in range(len(vocab)):
                    for t2 in range(len(vocab)):
                        if key[t1] > key[t2]:
                            assert layers[t1] <= layers[t2]
                assert parse_hash_table(serialize_hash_table(table)) == table
