"""Two-round first-stage retrieval with table squashing."""

from dataclasses import dataclass

from .encoders import EncoderSpec, encode_question
from .indexes import RetrievalResult, SparseIndex


@dataclass
class RetrievalParams:
    k_u: int = 100           # triples requested
    k_t: int = 5             # minimum distinct tables
    max_try_ku: int = 1000   # expanded fetch size for round 2
    m: int = 3               # per-table triple cap during squashing

    def __post_init__(self):
        if self.k_u > self.max_try_ku:
            raise ValueError("k_u must be <= max_try_ku")
        if self.k_t < 1 or self.m < 1:
            raise ValueError("k_t and m must be >= 1")


def search_index(index, question: str, spec: EncoderSpec, k: int) -> list[RetrievalResult]:
    if isinstance(index, SparseIndex):
        return index.search(question, k)
    return index.search(encode_question(question, spec), k)


def _rerank(results: list[RetrievalResult]) -> list[RetrievalResult]:
    results = sorted(results, key=lambda r: (-r.score, r.triple_id))
    return [
        RetrievalResult(triple_id=r.triple_id, table_id=r.table_id, score=r.score, rank=i + 1)
        for i, r in enumerate(results)
    ]


def squash(expanded: list[RetrievalResult], p: RetrievalParams) -> list[RetrievalResult]:
    """Reduce an expanded fetch to at most k_u triples over the top k_t tables.

    Tables are ordered by their best triple rank; each kept table retains at
    most m best triples; any remaining overflow is dropped worst-rank-first
    starting from the lowest-ordered kept table.
    """
    by_table: dict[str, list[RetrievalResult]] = {}
    for r in expanded:
        by_table.setdefault(r.table_id, []).append(r)
    table_order = sorted(by_table, key=lambda t: min(r.rank for r in by_table[t]))
    kept_tables = table_order[:p.k_t]
    kept = {t: sorted(by_table[t], key=lambda r: r.rank)[:p.m] for t in kept_tables}
    total = sum(len(v) for v in kept.values())
    for t in reversed(kept_tables):
        while total > p.k_u and kept[t]:
            kept[t].pop()
            total -= 1
        if total <= p.k_u:
            break
    return _rerank([r for t in kept_tables for r in kept[t]])


def two_round_retrieve(question: str, spec: EncoderSpec, index, p: RetrievalParams) -> list[RetrievalResult]:
    round1 = search_index(index, question, spec, p.k_u)
    if len({r.table_id for r in round1}) >= p.k_t:
        return round1
    expanded = search_index(index, question, spec, p.max_try_ku)
    return squash(expanded, p)
