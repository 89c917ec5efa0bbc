"""First-stage retrieval indexes: exact dense, inverted-file dense, and BM25 sparse."""

import hashlib
import json
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .encoders import tokenize

FORMAT_VERSION = 1


class IndexError_(Exception):
    pass


@dataclass
class RetrievalResult:
    triple_id: int
    table_id: str
    score: float
    rank: int


def _top_k(scores: np.ndarray, ids: np.ndarray, k: int) -> list[tuple[int, float]]:
    """Top-k by score descending, ties broken by smaller id."""
    if k <= 0 or len(ids) == 0:
        return []
    order = np.lexsort((ids, -scores))[:k]
    return [(int(ids[i]), float(scores[i])) for i in order]


def _results(pairs, table_of) -> list[RetrievalResult]:
    return [
        RetrievalResult(triple_id=tid, table_id=table_of(tid) if table_of else "", score=score, rank=r + 1)
        for r, (tid, score) in enumerate(pairs)
    ]


class DenseIndexExact:
    def __init__(self, vectors: np.ndarray, ids: np.ndarray, table_of=None):
        # quantize to the on-disk f32 precision so save/load round-trips exactly
        vectors = np.asarray(vectors, dtype=np.float32).astype(np.float64)
        ids = np.asarray(ids, dtype=np.uint64)
        if vectors.shape[0] != ids.shape[0]:
            raise IndexError_("vector/id count mismatch")
        self.vectors = vectors
        self.ids = ids
        self.dim = vectors.shape[1] if vectors.ndim == 2 else 0
        self.table_of = table_of

    def __len__(self):
        return len(self.ids)

    def search(self, q: np.ndarray, k: int) -> list[RetrievalResult]:
        q = np.asarray(q, dtype=np.float64)
        if q.shape[0] != self.dim:
            raise IndexError_(f"query dim {q.shape[0]} != index dim {self.dim}")
        scores = self.vectors @ q
        return _results(_top_k(scores, self.ids, k), self.table_of)


class DenseIndexIVF:
    """Inverted-file dense index over a seeded k-means coarse quantizer."""

    def __init__(self, vectors, ids, n_clusters: int, seed: int = 0,
                 nprobe: int = 1, table_of=None):
        vectors = np.asarray(vectors, dtype=np.float32).astype(np.float64)
        ids = np.asarray(ids, dtype=np.uint64)
        if n_clusters < 1:
            raise IndexError_("n_clusters must be >= 1")
        n_clusters = min(n_clusters, len(ids)) if len(ids) else 1
        self.dim = vectors.shape[1] if vectors.ndim == 2 else 0
        self.nprobe = nprobe
        self.table_of = table_of
        centroids, self.assignments = _kmeans(vectors, n_clusters, seed)
        self.centroids = centroids.astype(np.float32).astype(np.float64)
        self.vectors = vectors
        self.ids = ids
        self.lists = defaultdict(list)
        for i, c in enumerate(self.assignments):
            self.lists[int(c)].append(i)

    @property
    def n_clusters(self) -> int:
        return len(self.centroids)

    def __len__(self):
        return len(self.ids)

    def search(self, q: np.ndarray, k: int, nprobe: int | None = None) -> list[RetrievalResult]:
        if len(self.ids) == 0:
            return []
        q = np.asarray(q, dtype=np.float64)
        if q.shape[0] != self.dim:
            raise IndexError_(f"query dim {q.shape[0]} != index dim {self.dim}")
        nprobe = self.nprobe if nprobe is None else nprobe
        nprobe = max(1, min(nprobe, self.n_clusters))
        cscores = self.centroids @ q
        probe = np.argsort(-cscores, kind="stable")[:nprobe]
        rows = [i for c in probe for i in self.lists.get(int(c), [])]
        if not rows:
            return []
        rows = np.asarray(rows)
        scores = self.vectors[rows] @ q
        return _results(_top_k(scores, self.ids[rows], k), self.table_of)


def _kmeans(vectors: np.ndarray, k: int, seed: int,
            max_iter: int = 25, tol: float = 1e-6) -> tuple[np.ndarray, np.ndarray]:
    n = len(vectors)
    if n == 0:
        return np.zeros((1, vectors.shape[1] if vectors.ndim == 2 else 0)), np.zeros(0, dtype=np.int64)
    rng = np.random.default_rng(seed)
    centroids = vectors[rng.choice(n, size=k, replace=False)].copy()
    assignments = np.zeros(n, dtype=np.int64)
    for _ in range(max_iter):
        sq = ((vectors[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2) if n * k * vectors.shape[1] < 5_000_000 else None
        if sq is None:
            # ||x - c||^2 = ||x||^2 - 2 x.c + ||c||^2; the ||x||^2 term does not affect argmin
            sq = -2.0 * (vectors @ centroids.T) + (centroids ** 2).sum(axis=1)[None, :]
        assignments = sq.argmin(axis=1)
        shift = 0.0
        new_centroids = centroids.copy()
        for c in range(k):
            members = vectors[assignments == c]
            if len(members):
                new_centroids[c] = members.mean(axis=0)
                shift = max(shift, float(np.linalg.norm(new_centroids[c] - centroids[c])))
        centroids = new_centroids
        if shift < tol:
            break
    return centroids, assignments


def build_exact(vectors, ids, table_of=None) -> DenseIndexExact:
    return DenseIndexExact(vectors, ids, table_of=table_of)


def search_exact(index: DenseIndexExact, q: np.ndarray, k: int) -> list[RetrievalResult]:
    return index.search(q, k)


def build_ivf(vectors, ids, n_clusters: int, seed: int = 0, nprobe: int = 1, table_of=None) -> DenseIndexIVF:
    return DenseIndexIVF(vectors, ids, n_clusters, seed=seed, nprobe=nprobe, table_of=table_of)


def search_ivf(index: DenseIndexIVF, q: np.ndarray, k: int, nprobe: int | None = None) -> list[RetrievalResult]:
    return index.search(q, k, nprobe=nprobe)


class SparseIndex:
    """Okapi BM25 over triple retrieval texts."""

    def __init__(self, k1: float = 1.2, b: float = 0.75, table_of=None):
        self.k1 = k1
        self.b = b
        self.postings: dict[str, list[tuple[int, int]]] = {}
        self.doc_len: dict[int, int] = {}
        self.table_of = table_of

    @classmethod
    def build(cls, texts: list[str], ids: list[int], k1: float = 1.2, b: float = 0.75, table_of=None) -> "SparseIndex":
        idx = cls(k1=k1, b=b, table_of=table_of)
        postings = defaultdict(list)
        for text, tid in zip(texts, ids):
            toks = tokenize(text)
            idx.doc_len[tid] = len(toks)
            for tok, tf in sorted(Counter(toks).items()):
                postings[tok].append((tid, tf))
        idx.postings = dict(postings)
        return idx

    @property
    def n_docs(self) -> int:
        return len(self.doc_len)

    @property
    def avgdl(self) -> float:
        return sum(self.doc_len.values()) / self.n_docs if self.n_docs else 0.0

    def idf(self, token: str) -> float:
        df = len(self.postings.get(token, ()))
        return math.log(1.0 + (self.n_docs - df + 0.5) / (df + 0.5))

    def search(self, query: str, k: int) -> list[RetrievalResult]:
        scores: dict[int, float] = defaultdict(float)
        avgdl = self.avgdl
        for token in tokenize(query):
            plist = self.postings.get(token)
            if not plist:
                continue
            idf = self.idf(token)
            for tid, tf in plist:
                dl = self.doc_len[tid]
                scores[tid] += idf * tf * (self.k1 + 1) / (tf + self.k1 * (1 - self.b + self.b * dl / avgdl))
        if not scores:
            return []
        ids = np.array(sorted(scores), dtype=np.uint64)
        vals = np.array([scores[int(i)] for i in ids], dtype=np.float64)
        return _results(_top_k(vals, ids, k), self.table_of)


def bm25_search(index: SparseIndex, query: str, k: int) -> list[RetrievalResult]:
    return index.search(query, k)


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_blob(path: Path, arr: np.ndarray, dtype: str) -> None:
    np.ascontiguousarray(arr.astype(dtype)).tofile(path)


def save_index(index, directory: str | Path) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = {"format_version": FORMAT_VERSION}
    if isinstance(index, DenseIndexExact):
        manifest.update(kind="dense-exact", dim=index.dim, count=len(index))
        _write_blob(directory / "vectors.f32", index.vectors, "<f4")
        _write_blob(directory / "ids.u64", index.ids, "<u8")
        files = ["vectors.f32", "ids.u64"]
    elif isinstance(index, DenseIndexIVF):
        manifest.update(kind="dense-ivf", dim=index.dim, count=len(index),
                        n_clusters=index.n_clusters, nprobe=index.nprobe)
        _write_blob(directory / "vectors.f32", index.vectors, "<f4")
        _write_blob(directory / "ids.u64", index.ids, "<u8")
        _write_blob(directory / "centroids.f32", index.centroids, "<f4")
        _write_blob(directory / "assignments.u32", index.assignments, "<u4")
        files = ["vectors.f32", "ids.u64", "centroids.f32", "assignments.u32"]
    elif isinstance(index, SparseIndex):
        manifest.update(kind="sparse-bm25", count=index.n_docs, k1=index.k1, b=index.b)
        payload = {
            "postings": {tok: plist for tok, plist in sorted(index.postings.items())},
            "doc_len": {str(tid): dl for tid, dl in sorted(index.doc_len.items())},
        }
        (directory / "postings.json").write_text(json.dumps(payload, sort_keys=True))
        files = ["postings.json"]
    else:
        raise IndexError_(f"cannot persist index of type {type(index)!r}")
    manifest["checksums"] = {f: _sha256(directory / f) for f in files}
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))


def load_index(directory: str | Path, table_of=None):
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    for fname, digest in manifest["checksums"].items():
        actual = _sha256(directory / fname)
        if actual != digest:
            raise IndexError_(f"checksum mismatch for {fname}: index file corrupted")
    kind = manifest["kind"]
    if kind == "sparse-bm25":
        idx = SparseIndex(k1=manifest["k1"], b=manifest["b"], table_of=table_of)
        payload = json.loads((directory / "postings.json").read_text())
        idx.postings = {tok: [(int(t), int(f)) for t, f in plist] for tok, plist in payload["postings"].items()}
        idx.doc_len = {int(t): int(dl) for t, dl in payload["doc_len"].items()}
        return idx
    dim, count = manifest["dim"], manifest["count"]
    vectors = np.fromfile(directory / "vectors.f32", dtype="<f4").reshape(count, dim).astype(np.float64)
    ids = np.fromfile(directory / "ids.u64", dtype="<u8")
    if kind == "dense-exact":
        return DenseIndexExact(vectors, ids, table_of=table_of)
    if kind == "dense-ivf":
        idx = DenseIndexIVF.__new__(DenseIndexIVF)
        idx.dim = dim
        idx.nprobe = manifest["nprobe"]
        idx.table_of = table_of
        idx.vectors = vectors
        idx.ids = ids
        idx.centroids = np.fromfile(directory / "centroids.f32", dtype="<f4").reshape(manifest["n_clusters"], dim).astype(np.float64)
        idx.assignments = np.fromfile(directory / "assignments.u32", dtype="<u4").astype(np.int64)
        idx.lists = defaultdict(list)
        for i, c in enumerate(idx.assignments):
            idx.lists[int(c)].append(i)
        return idx
    raise IndexError_(f"unknown index kind: {kind}")
