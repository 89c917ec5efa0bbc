"""Table ingestion, column typing, cell-length statistics and duplicate detection."""

import csv
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

NUMERIC_RE = re.compile(r"^[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?$")

# Fraction of non-empty cells that must parse as numbers for a column
# to be typed numeric.
NUMERIC_THRESHOLD = 0.9


class CorpusError(Exception):
    pass


@dataclass
class Column:
    name: str
    inferred_type: str = "text"  # "numeric" | "text"

    def __post_init__(self):
        self.name = self.name.strip()


@dataclass
class Table:
    id: str
    title: str
    columns: list[Column]
    rows: list[list[str]]

    def cell(self, row: int, col: int) -> str:
        return self.rows[row][col]

    @property
    def num_columns(self) -> int:
        return len(self.columns)


@dataclass
class CellStats:
    q1: float
    q3: float
    upper_fence: float

    @classmethod
    def from_token_counts(cls, counts: list[int]) -> "CellStats":
        if not counts:
            raise CorpusError("cannot compute cell stats without cells")
        q1, q3 = np.percentile(np.asarray(counts, dtype=np.float64), [25, 75])
        return cls(q1=float(q1), q3=float(q3), upper_fence=float(q3 + 1.5 * (q3 - q1)))


@dataclass
class IngestReport:
    tables: int = 0
    padded: int = 0


@dataclass
class TableCollection:
    tables: dict[str, Table] = field(default_factory=dict)
    stats: dict[str, CellStats] = field(default_factory=dict)

    def table(self, table_id: str) -> Table:
        return self.tables[table_id]

    def ordered_ids(self) -> list[str]:
        return sorted(self.tables)


def token_count(cell: str) -> int:
    return len(cell.split())


def _pad_rows(columns: int, rows: list[list[str]], report: IngestReport) -> list[list[str]]:
    out = []
    for row in rows:
        row = [str(c) for c in row]
        if len(row) < columns:
            row = row + [""] * (columns - len(row))
            report.padded += 1
        elif len(row) > columns:
            row = row[:columns]
            report.padded += 1
        out.append(row)
    return out


def ingest_tables(source: str | Path, format: str = "jsonl") -> tuple[TableCollection, IngestReport]:
    """Load tables from a jsonl file or a directory of csv files.

    Ragged rows are padded (or truncated) to the column count and counted
    in the report.
    """
    source = Path(source)
    if not source.exists():
        raise CorpusError(f"source does not exist: {source}")
    report = IngestReport()
    collection = TableCollection()
    if format == "jsonl":
        with source.open() as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                rec = json.loads(line)
                columns = [Column(name=c.get("name", "")) for c in rec["columns"]]
                table = Table(
                    id=str(rec["id"]),
                    title=rec.get("title", ""),
                    columns=columns,
                    rows=_pad_rows(len(columns), rec.get("rows", []), report),
                )
                collection.tables[table.id] = table
    elif format == "csv-dir":
        if not source.is_dir():
            raise CorpusError(f"csv-dir source must be a directory: {source}")
        for path in sorted(source.glob("*.csv")):
            with path.open(newline="") as fh:
                reader = csv.reader(fh)
                try:
                    header = next(reader)
                except StopIteration:
                    continue
                columns = [Column(name=h) for h in header]
                rows = _pad_rows(len(columns), list(reader), report)
            table = Table(id=path.stem, title=path.stem, columns=columns, rows=rows)
            collection.tables[table.id] = table
    else:
        raise CorpusError(f"unknown format: {format}")
    if not collection.tables:
        raise CorpusError(f"no tables found in {source}")
    report.tables = len(collection.tables)
    return collection, report


def infer_column_types(t: Table) -> Table:
    """Mark a column numeric iff >= 90% of its non-empty cells parse as numbers."""
    for ci, col in enumerate(t.columns):
        values = [row[ci] for row in t.rows if row[ci].strip()]
        if not values:
            col.inferred_type = "text"
            continue
        numeric = sum(1 for v in values if NUMERIC_RE.match(v.strip()))
        col.inferred_type = "numeric" if numeric / len(values) >= NUMERIC_THRESHOLD else "text"
    return t


def compute_cell_stats(t: Table) -> CellStats:
    counts = [token_count(cell) for row in t.rows for cell in row]
    if not counts:
        raise CorpusError(f"table {t.id} has no cells")
    return CellStats.from_token_counts(counts)


def is_outlier_cell(cell: str, stats: CellStats) -> bool:
    return token_count(cell) > stats.upper_fence


def _norm(s: str) -> str:
    return " ".join(s.lower().split())


def schema_duplicate_groups(c: TableCollection) -> list[list[str]]:
    """Group tables whose normalized (title, column names) are identical.

    The groups partition all table ids.
    """
    groups: dict[tuple, list[str]] = {}
    for tid in c.ordered_ids():
        t = c.tables[tid]
        key = (_norm(t.title), tuple(_norm(col.name) for col in t.columns))
        groups.setdefault(key, []).append(tid)
    return sorted(groups.values(), key=lambda g: g[0])


def prepare_collection(c: TableCollection) -> TableCollection:
    """Infer column types and compute per-table cell statistics."""
    for t in c.tables.values():
        infer_column_types(t)
        c.stats[t.id] = compute_cell_stats(t)
    return c


def serialize_collection(c: TableCollection, path: str | Path) -> None:
    with Path(path).open("w") as fh:
        for tid in c.ordered_ids():
            t = c.tables[tid]
            rec = {
                "id": t.id,
                "title": t.title,
                "columns": [{"name": col.name, "inferred_type": col.inferred_type} for col in t.columns],
                "rows": t.rows,
            }
            if tid in c.stats:
                s = c.stats[tid]
                rec["stats"] = {"q1": s.q1, "q3": s.q3, "upper_fence": s.upper_fence}
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def load_collection(path: str | Path) -> TableCollection:
    collection = TableCollection()
    with Path(path).open() as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            columns = [Column(name=c["name"], inferred_type=c.get("inferred_type", "text")) for c in rec["columns"]]
            table = Table(id=rec["id"], title=rec["title"], columns=columns, rows=rec["rows"])
            collection.tables[table.id] = table
            if "stats" in rec:
                s = rec["stats"]
                collection.stats[table.id] = CellStats(q1=s["q1"], q3=s["q3"], upper_fence=s["upper_fence"])
    return collection
