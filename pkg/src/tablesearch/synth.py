"""Seeded synthetic corpus generator for demos and self-consistency tests."""

import json
import random
from pathlib import Path

from .corpus import Column, Table, TableCollection

TEXT_COLUMNS = ["name", "city", "status", "kind", "owner", "region", "group", "label"]
NUMERIC_COLUMNS = ["count", "score", "size", "rank"]
ADJECTIVES = ["amber", "brisk", "cedar", "dusty", "ember", "frost", "gleam", "hollow",
              "iris", "jade", "kelp", "lunar", "maple", "noble", "onyx", "pearl"]
NOUNS = ["archive", "branch", "census", "depot", "estate", "fleet", "garden", "harbor",
         "island", "journal", "kiln", "ledger", "market", "nexus", "orchard", "plaza"]


def generate_table(index: int, rng: random.Random) -> Table:
    n_cols = rng.randint(4, 8)
    n_rows = rng.randint(10, 30)
    n_numeric = rng.randint(1, 2)
    names = rng.sample(TEXT_COLUMNS, n_cols - n_numeric) + rng.sample(NUMERIC_COLUMNS, n_numeric)
    rng.shuffle(names)
    numeric = set(rng.sample(NUMERIC_COLUMNS, n_numeric))
    title = f"{rng.choice(ADJECTIVES)} {rng.choice(NOUNS)} table {index:03d}"
    rows = []
    for r in range(n_rows):
        row = []
        for name in names:
            if name in numeric:
                row.append(str(index * 1000 + r * 7 + rng.randint(0, 6)))
            else:
                row.append(f"{rng.choice(ADJECTIVES)} {rng.choice(NOUNS)} t{index:03d}r{r}")
        rows.append(row)
    return Table(id=f"table{index:03d}", title=title,
                 columns=[Column(name=n) for n in names], rows=rows)


def generate_corpus(n_tables: int, seed: int = 0) -> TableCollection:
    rng = random.Random(seed)
    tables = {t.id: t for t in (generate_table(i, rng) for i in range(n_tables))}
    return TableCollection(tables=tables)


def write_corpus_jsonl(c: TableCollection, path: str | Path) -> None:
    with Path(path).open("w") as fh:
        for tid in c.ordered_ids():
            t = c.tables[tid]
            fh.write(json.dumps({
                "id": t.id, "title": t.title,
                "columns": [{"name": col.name} for col in t.columns],
                "rows": t.rows,
            }) + "\n")
