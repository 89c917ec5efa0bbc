"""Sampled SQL generation over a prepared table collection."""

import json
import random
from dataclasses import dataclass, field
from math import comb
from pathlib import Path

from .corpus import TableCollection, Table, is_outlier_cell

TITLE = -1  # sentinel column index for the title pseudo-column

AGG_OPS = ("MAX", "MIN", "COUNT", "SUM", "AVG")
COND_OPS = ("EQ", "LT", "GT")

AGG_TOKEN = {"MAX": "[M-A-X]", "MIN": "[M-I-N]", "COUNT": "[C-O-U-N-T]",
             "SUM": "[S-U-M]", "AVG": "[A-V-G]"}
OP_TOKEN = {"EQ": "[E-Q]", "LT": "[L-T]", "GT": "[G-T]"}
SELECT_TOKEN = "[S-E-L-E-C-T]"
WHERE_TOKEN = "[W-H-E-R-E]"
AND_TOKEN = "[A-N-D]"
TITLE_ATTR = "About"


class GenerationExhausted(Exception):
    def __init__(self, message: str, partial: list):
        super().__init__(message)
        self.partial = partial


@dataclass
class SqlQuery:
    table_id: str
    sel_col: int
    agg_op: str | None
    conditions: list[tuple[int, str, str]]  # (column index or TITLE, op, value)
    use_title: bool


@dataclass
class SqlDict:
    entries: set[str] = field(default_factory=set)

    def __contains__(self, text: str) -> bool:
        return text in self.entries

    def add(self, text: str) -> None:
        self.entries.add(text)

    def save(self, path: str | Path) -> None:
        Path(path).write_text("".join(e + "\n" for e in sorted(self.entries)))

    @classmethod
    def load(cls, path: str | Path) -> "SqlDict":
        return cls(entries=set(Path(path).read_text().splitlines()))


@dataclass
class GenConfig:
    batch_size: int = 100
    max_cond_cols: int = 3
    seed: int = 0
    agg_probability: float = 0.2

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


def canonical_sql_text(s: SqlQuery, t: Table) -> str:
    parts = [SELECT_TOKEN]
    if s.agg_op:
        parts.append(AGG_TOKEN[s.agg_op])
    parts.append(t.columns[s.sel_col].name)
    parts.append(WHERE_TOKEN)
    conds = []
    for col, op, value in s.conditions:
        name = TITLE_ATTR if col == TITLE else t.columns[col].name
        conds.append(f"{name} {OP_TOKEN[op]} {value}")
    parts.append(f" {AND_TOKEN} ".join(conds))
    return " ".join(" ".join(parts).split())


def sql_space_lower_bound(n_tables: int, n_rows: int, n_cols: int, max_cond_cols: int) -> int:
    """Analytic lower bound on distinct SQLs for a uniform collection."""
    return n_tables * n_rows * n_cols * sum(comb(n_cols, k) for k in range(max_cond_cols + 1))


def generate_sqls(c: TableCollection, cfg: GenConfig, sql_dict: SqlDict) -> list[SqlQuery]:
    """Sample a deduplicated batch of SQL queries (one seeded RNG stream)."""
    rng = random.Random(cfg.seed)
    table_ids = c.ordered_ids()
    accepted: list[SqlQuery] = []
    max_attempts = cfg.batch_size * 1000
    attempts = 0
    while len(accepted) < cfg.batch_size:
        attempts += 1
        if attempts > max_attempts:
            raise GenerationExhausted(
                f"gave up after {max_attempts} attempts with {len(accepted)}/{cfg.batch_size} SQLs",
                partial=accepted,
            )
        t = c.tables[rng.choice(table_ids)]
        named = [ci for ci, col in enumerate(t.columns) if col.name]
        if len(named) < 2:
            continue
        sel_col = rng.choice(named)
        candidates = [ci for ci in named if ci != sel_col]
        n_cond = rng.randint(1, min(cfg.max_cond_cols, len(candidates)))
        cond_cols = sorted(rng.sample(candidates, n_cond))
        alpha = 1.0 / (len(cond_cols) + 1)
        use_title = rng.random() < alpha and bool(t.title.strip())
        agg_op = None
        if t.columns[sel_col].inferred_type == "numeric" and rng.random() < cfg.agg_probability:
            agg_op = rng.choice(AGG_OPS)
        stats = c.stats[t.id]
        good_rows = [
            ri for ri in range(len(t.rows))
            if all(t.rows[ri][ci].strip() and not is_outlier_cell(t.rows[ri][ci], stats) for ci in cond_cols)
        ]
        if not good_rows:
            continue
        row = rng.choice(good_rows)
        conditions = []
        for ci in cond_cols:
            if t.columns[ci].inferred_type == "numeric":
                op = rng.choice(COND_OPS)
            else:
                op = "EQ"
            conditions.append((ci, op, t.rows[row][ci]))
        if use_title:
            conditions.append((TITLE, "EQ", t.title))
        query = SqlQuery(table_id=t.id, sel_col=sel_col, agg_op=agg_op,
                         conditions=conditions, use_title=use_title)
        text = canonical_sql_text(query, t)
        if text in sql_dict:
            continue
        sql_dict.add(text)
        accepted.append(query)
    return accepted


def save_sqls(queries: list[SqlQuery], c: TableCollection, path: str | Path) -> None:
    with Path(path).open("w") as fh:
        for i, q in enumerate(queries):
            fh.write(json.dumps({
                "sql_id": i,
                "table_id": q.table_id,
                "canonical_text": canonical_sql_text(q, c.tables[q.table_id]),
                "query": {
                    "sel_col": q.sel_col,
                    "agg_op": q.agg_op,
                    "conditions": [[col, op, val] for col, op, val in q.conditions],
                    "use_title": q.use_title,
                },
            }) + "\n")
