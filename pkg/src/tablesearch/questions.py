"""SQL-to-question realization and ground-truth assignment."""

import json
import random
import time
from dataclasses import dataclass, field
from pathlib import Path

import requests

from .corpus import Table, TableCollection
from .sqlgen import TITLE, SqlQuery, canonical_sql_text

AGG_WORD = {"MAX": "maximum", "MIN": "minimum", "COUNT": "number",
            "SUM": "total", "AVG": "average"}


class TranslatorError(Exception):
    pass


@dataclass
class QuestionRecord:
    question_id: int
    question: str
    sql_id: int
    ground_truth_table_ids: list[str]
    provenance: str = "template"  # "template" | "external"


@dataclass
class TranslatorConfig:
    endpoint: str = ""
    timeout: float = 30.0
    retries: int = 3
    backoff: float = 0.5


def _cond_phrase(col: int, op: str, value: str, t: Table) -> str:
    name = t.columns[col].name.lower()
    if op == "LT":
        return f"{name} is less than {value}"
    if op == "GT":
        return f"{name} is greater than {value}"
    return f"{name} is {value}"


def template_translate(s: SqlQuery, t: Table, seed: int = 0) -> str:
    """Deterministic template realization; every condition value and column
    name appears verbatim (column names lowercased)."""
    del seed  # reserved for template variants; realization is deterministic
    sel = t.columns[s.sel_col].name.lower()
    conds = [_cond_phrase(col, op, val, t) for col, op, val in s.conditions if col != TITLE]
    title_cond = next((val for col, _, val in s.conditions if col == TITLE), None)
    if s.agg_op:
        body = f"what is the {AGG_WORD[s.agg_op]} {sel} where {' and '.join(conds)}"
    else:
        body = f"what is the {sel} of the one whose {' and '.join(conds)}"
    if title_cond is not None:
        body += f" in {title_cond}"
    return body + "?"


def external_translate(sql_texts: list[str], cfg: TranslatorConfig,
                       fallback=None) -> tuple[list[str], list[str]]:
    """Translate a batch via the external service; order-preserving.

    Returns (questions, provenance flags). When the batch call fails after
    retries, items are retried one by one; an item that still fails falls
    back to the supplied fallback callable (index -> question).
    """
    if not cfg.endpoint:
        raise TranslatorError("translator endpoint not configured")
    if not sql_texts:
        return [], []

    def _post(texts: list[str]) -> list[str]:
        last = None
        for attempt in range(cfg.retries):
            try:
                resp = requests.post(cfg.endpoint, json={"sqls": texts}, timeout=cfg.timeout)
                resp.raise_for_status()
                questions = resp.json()["questions"]
                if len(questions) != len(texts):
                    raise TranslatorError("translator returned a misaligned batch")
                return questions
            except (requests.RequestException, TranslatorError, KeyError, ValueError) as exc:
                last = exc
                if attempt + 1 < cfg.retries:
                    time.sleep(cfg.backoff * (2 ** attempt))
        raise TranslatorError(f"translator failed after {cfg.retries} attempts: {last}")

    try:
        return _post(sql_texts), ["external"] * len(sql_texts)
    except TranslatorError:
        if fallback is None:
            raise
    questions, provenance = [], []
    for i, text in enumerate(sql_texts):
        try:
            questions.append(_post([text])[0])
            provenance.append("external")
        except TranslatorError:
            questions.append(fallback(i))
            provenance.append("template")
    return questions, provenance


def assign_ground_truth(s: SqlQuery, groups: list[list[str]]) -> list[str]:
    """The schema-duplicate group containing the source table."""
    for group in groups:
        if s.table_id in group:
            return list(group)
    return [s.table_id]


def build_question_records(queries: list[SqlQuery], c: TableCollection,
                           groups: list[list[str]], seed: int = 0,
                           translator: TranslatorConfig | None = None,
                           id_offset: int = 0) -> list[QuestionRecord]:
    tables = [c.tables[q.table_id] for q in queries]
    if translator is not None and translator.endpoint:
        texts = [canonical_sql_text(q, t) for q, t in zip(queries, tables)]
        questions, provenance = external_translate(
            texts, translator,
            fallback=lambda i: template_translate(queries[i], tables[i], seed),
        )
    else:
        questions = [template_translate(q, t, seed) for q, t in zip(queries, tables)]
        provenance = ["template"] * len(queries)
    return [
        QuestionRecord(
            question_id=id_offset + i,
            question=questions[i],
            sql_id=id_offset + i,
            ground_truth_table_ids=assign_ground_truth(queries[i], groups),
            provenance=provenance[i],
        )
        for i in range(len(queries))
    ]


def save_question_records(records: list[QuestionRecord], path: str | Path) -> None:
    with Path(path).open("w") as fh:
        for r in records:
            fh.write(json.dumps({
                "question_id": r.question_id, "question": r.question, "sql_id": r.sql_id,
                "ground_truth_table_ids": r.ground_truth_table_ids, "provenance": r.provenance,
            }) + "\n")


def load_question_records(path: str | Path) -> list[QuestionRecord]:
    records = []
    with Path(path).open() as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            records.append(QuestionRecord(
                question_id=rec["question_id"], question=rec["question"], sql_id=rec["sql_id"],
                ground_truth_table_ids=rec["ground_truth_table_ids"],
                provenance=rec.get("provenance", "template"),
            ))
    return records
