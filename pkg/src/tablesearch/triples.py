"""Row-wise complete-graph decomposition of tables into triples."""

import hashlib
import json
import struct
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path

from .corpus import CellStats, Table, TableCollection, is_outlier_cell


@dataclass(frozen=True)
class Triple:
    triple_id: int
    table_id: str
    row: int
    subject_col: int | None  # None => subject is the table title
    subject: str
    object_col: int
    object: str


def triple_key_hash(table_id: str, row: int, subject_col: int | None, object_col: int) -> int:
    sc = "" if subject_col is None else str(subject_col)
    key = f"{table_id}\x1f{row}\x1f{sc}\x1f{object_col}".encode()
    return int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), "little")


def build_row_triples(t: Table, row: int, stats: CellStats) -> list[Triple]:
    """One triple per unordered pair of usable nodes in the row.

    Nodes are the non-empty title plus non-empty, non-outlier cells. The
    title is always oriented as subject; between cells the lower column
    index is the subject.
    """
    cells = t.rows[row]
    usable_cols = [
        ci for ci in range(len(cells))
        if cells[ci].strip() and not is_outlier_cell(cells[ci], stats)
    ]
    triples = []
    if t.title.strip():
        for ci in usable_cols:
            triples.append(Triple(
                triple_id=triple_key_hash(t.id, row, None, ci),
                table_id=t.id, row=row,
                subject_col=None, subject=t.title,
                object_col=ci, object=cells[ci],
            ))
    for a, b in combinations(usable_cols, 2):
        triples.append(Triple(
            triple_id=triple_key_hash(t.id, row, a, b),
            table_id=t.id, row=row,
            subject_col=a, subject=cells[a],
            object_col=b, object=cells[b],
        ))
    return triples


def predicate_of(tr: Triple, t: Table) -> str:
    obj_name = t.columns[tr.object_col].name
    if tr.subject_col is None:
        return obj_name
    return f"{t.columns[tr.subject_col].name} - {obj_name}"


def _squeeze(s: str) -> str:
    return " ".join(s.split())


def retrieval_text(tr: Triple, t: Table) -> str:
    """Plain text form used for first-stage retrieval indexing."""
    obj_name = t.columns[tr.object_col].name
    parts = []
    if t.title.strip():
        parts.append(f"{t.title}.")
    if tr.subject_col is not None:
        subj_name = t.columns[tr.subject_col].name
        parts.append(f"{subj_name} {tr.subject}.")
    parts.append(f"{obj_name} {tr.object}.")
    return _squeeze(" ".join(parts))


def annotate(tr: Triple, t: Table) -> str:
    """Tagged text form used as ranking-model input."""
    obj_name = t.columns[tr.object_col].name
    if tr.subject_col is None:
        return f"[T] {t.title} [SC] [S] [OC] {obj_name} [O] {tr.object}"
    subj_name = t.columns[tr.subject_col].name
    return f"[T] {t.title} [SC] {subj_name} [S] {tr.subject} [OC] {obj_name} [O] {tr.object}"


class TripleStore:
    """All triples of a collection in a stable global order, indexed by id."""

    def __init__(self, triples: list[Triple]):
        self.triples = triples
        self.by_id = {tr.triple_id: tr for tr in triples}

    def __len__(self) -> int:
        return len(self.triples)

    def __iter__(self):
        return iter(self.triples)

    def get(self, triple_id: int) -> Triple:
        return self.by_id[triple_id]

    def table_of(self, triple_id: int) -> str:
        return self.by_id[triple_id].table_id


_SORT_KEY = lambda tr: (tr.table_id, tr.row, -1 if tr.subject_col is None else tr.subject_col, tr.object_col)


def build_collection_triples(c: TableCollection) -> TripleStore:
    triples = []
    for tid in c.ordered_ids():
        t = c.tables[tid]
        stats = c.stats[tid]
        for row in range(len(t.rows)):
            triples.extend(build_row_triples(t, row, stats))
    triples.sort(key=_SORT_KEY)
    return TripleStore(triples)


# Binary record: triple_id u64, table index u32, row u32, subject_col i32 (-1 = title), object_col u32
_REC = struct.Struct("<QIIiI")


def save_triples(store: TripleStore, path: str | Path, sidecar: str | Path | None = None) -> None:
    table_ids = sorted({tr.table_id for tr in store})
    table_index = {tid: i for i, tid in enumerate(table_ids)}
    header = json.dumps(table_ids).encode()
    with Path(path).open("wb") as fh:
        fh.write(struct.pack("<II", len(header), len(store)))
        fh.write(header)
        for tr in store:
            sc = -1 if tr.subject_col is None else tr.subject_col
            fh.write(_REC.pack(tr.triple_id, table_index[tr.table_id], tr.row, sc, tr.object_col))
    if sidecar is not None:
        with Path(sidecar).open("w") as fh:
            for tr in store:
                fh.write(json.dumps({
                    "triple_id": tr.triple_id, "table_id": tr.table_id, "row": tr.row,
                    "subject_col": tr.subject_col, "object_col": tr.object_col,
                }) + "\n")


def load_triples(path: str | Path, c: TableCollection) -> TripleStore:
    with Path(path).open("rb") as fh:
        header_len, count = struct.unpack("<II", fh.read(8))
        table_ids = json.loads(fh.read(header_len))
        triples = []
        for _ in range(count):
            triple_id, tix, row, sc, oc = _REC.unpack(fh.read(_REC.size))
            t = c.tables[table_ids[tix]]
            subject_col = None if sc < 0 else sc
            subject = t.title if subject_col is None else t.rows[row][subject_col]
            triples.append(Triple(
                triple_id=triple_id, table_id=t.id, row=row,
                subject_col=subject_col, subject=subject,
                object_col=oc, object=t.rows[row][oc],
            ))
    return TripleStore(triples)
