import numpy as np
import pytest

from tablesearch.indexes import (DenseIndexExact, IndexError_, SparseIndex,
                                 bm25_search, build_exact, build_ivf, load_index,
                                 save_index, search_exact, search_ivf)


def random_data(seed, n=200, dim=16):
    rng = np.random.default_rng(seed)
    vectors = rng.normal(size=(n, dim))
    ids = rng.choice(10 * n, size=n, replace=False).astype(np.uint64)
    return vectors, ids


def brute_force(vectors, ids, q, k):
    """Independent full-scan oracle."""
    scored = sorted(
        ((float(np.dot(v.astype(np.float32).astype(np.float64), q)), int(i))
         for v, i in zip(vectors, ids)),
        key=lambda t: (-t[0], t[1]),
    )
    return [i for _, i in scored[:k]]


def test_exact_k0_empty():
    vectors, ids = random_data(0)
    assert search_exact(build_exact(vectors, ids), np.zeros(16), 0) == []


def test_exact_unit_vector_hit():
    vectors = np.eye(4)
    ids = np.array([10, 11, 12, 13], dtype=np.uint64)
    res = search_exact(build_exact(vectors, ids), np.eye(4)[2], 2)
    assert res[0].triple_id == 12
    assert res[0].score == pytest.approx(1.0)
    assert res[0].rank == 1


@pytest.mark.parametrize("seed", range(5))
def test_exact_matches_brute_force(seed):
    vectors, ids = random_data(seed)
    index = build_exact(vectors, ids)
    rng = np.random.default_rng(seed + 1000)
    q = rng.normal(size=16)
    res = search_exact(index, q, 10)
    assert [r.triple_id for r in res] == brute_force(vectors, ids, q, 10)


def test_exact_dim_mismatch():
    vectors, ids = random_data(0)
    with pytest.raises(IndexError_):
        search_exact(build_exact(vectors, ids), np.zeros(8), 5)


@pytest.mark.parametrize("n_clusters", [1, 8])
def test_ivf_full_probe_equals_exact(n_clusters):
    vectors, ids = random_data(3)
    exact = build_exact(vectors, ids)
    ivf = build_ivf(vectors, ids, n_clusters, seed=7)
    q = np.random.default_rng(4).normal(size=16)
    a = search_exact(exact, q, 20)
    b = search_ivf(ivf, q, 20, nprobe=n_clusters)
    assert [(r.triple_id, r.score) for r in a] == [(r.triple_id, r.score) for r in b]


def test_ivf_partial_probe_recall():
    vectors, ids = random_data(11, n=500, dim=16)
    exact = build_exact(vectors, ids)
    ivf = build_ivf(vectors, ids, 16, seed=5)
    rng = np.random.default_rng(6)
    recalls = []
    for _ in range(20):
        q = rng.normal(size=16)
        truth = {r.triple_id for r in search_exact(exact, q, 10)}
        got = {r.triple_id for r in search_ivf(ivf, q, 10, nprobe=4)}
        recalls.append(len(truth & got) / 10)
    assert np.mean(recalls) >= 0.6


def test_ivf_empty_index():
    ivf = build_ivf(np.zeros((0, 8)), np.zeros(0, dtype=np.uint64), 4)
    assert search_ivf(ivf, np.zeros(8), 5) == []


def test_bm25_no_indexed_tokens():
    index = SparseIndex.build(["hello world"], [1])
    assert bm25_search(index, "zzz qqq", 5) == []


def test_bm25_single_document():
    index = SparseIndex.build(["albany park library"], [7])
    res = bm25_search(index, "albany park library", 5)
    assert len(res) == 1 and res[0].triple_id == 7 and res[0].score > 0


def test_bm25_hand_computed():
    docs = ["the cat sat", "the dog ran far away", "cat and dog"]
    index = SparseIndex.build(docs, [0, 1, 2])
    k1, b = 1.2, 0.75
    N = 3
    avgdl = (3 + 5 + 3) / 3

    def idf(df):
        return np.log(1 + (N - df + 0.5) / (df + 0.5))

    def term(df, tf, dl):
        return idf(df) * tf * (k1 + 1) / (tf + k1 * (1 - b + b * dl / avgdl))

    # query "cat dog": doc 2 has both (df cat=2, df dog=2, dl=3)
    expected_doc2 = term(2, 1, 3) + term(2, 1, 3)
    expected_doc0 = term(2, 1, 3)
    expected_doc1 = term(2, 1, 5)
    res = {r.triple_id: r.score for r in bm25_search(index, "cat dog", 3)}
    assert res[2] == pytest.approx(expected_doc2, abs=1e-9)
    assert res[0] == pytest.approx(expected_doc0, abs=1e-9)
    assert res[1] == pytest.approx(expected_doc1, abs=1e-9)


def test_bm25_tie_break_by_id():
    index = SparseIndex.build(["same text", "same text"], [5, 3])
    res = bm25_search(index, "same", 2)
    assert [r.triple_id for r in res] == [3, 5]


@pytest.mark.parametrize("kind", ["exact", "ivf", "sparse"])
def test_persistence_roundtrip(tmp_path, kind):
    vectors, ids = random_data(2, n=50, dim=8)
    q = np.random.default_rng(9).normal(size=8)
    if kind == "exact":
        index = build_exact(vectors, ids)
        results = lambda ix: [(r.triple_id, r.score) for r in ix.search(q, 10)]
    elif kind == "ivf":
        index = build_ivf(vectors, ids, 4, seed=1, nprobe=2)
        results = lambda ix: [(r.triple_id, r.score) for r in ix.search(q, 10)]
    else:
        index = SparseIndex.build(["doc one text", "doc two words", "three"], [1, 2, 3])
        results = lambda ix: [(r.triple_id, r.score) for r in ix.search("doc text", 5)]
    save_index(index, tmp_path / "idx")
    loaded = load_index(tmp_path / "idx")
    assert results(loaded) == results(index)


def test_persistence_detects_corruption(tmp_path):
    vectors, ids = random_data(2, n=10, dim=8)
    save_index(build_exact(vectors, ids), tmp_path / "idx")
    blob = tmp_path / "idx" / "vectors.f32"
    data = bytearray(blob.read_bytes())
    data[0] ^= 0xFF
    blob.write_bytes(bytes(data))
    with pytest.raises(IndexError_, match="checksum"):
        load_index(tmp_path / "idx")


def test_scores_sorted_descending():
    vectors, ids = random_data(8)
    res = search_exact(build_exact(vectors, ids), np.random.default_rng(1).normal(size=16), 50)
    scores = [r.score for r in res]
    assert scores == sorted(scores, reverse=True)
    assert [r.rank for r in res] == list(range(1, len(res) + 1))
