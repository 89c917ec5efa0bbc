import pytest

from tablesearch.corpus import Column, Table, TableCollection, prepare_collection
from tablesearch.sqlgen import (TITLE, GenConfig, GenerationExhausted, SqlDict,
                                SqlQuery, canonical_sql_text, generate_sqls,
                                sql_space_lower_bound)


def make_collection(n_tables=5, n_rows=6, numeric_col=True):
    tables = {}
    for t in range(n_tables):
        cols = [Column("Name"), Column("City"), Column("Population")]
        rows = [[f"name{t}_{r}", f"city{t}_{r}", str(100 + t * 10 + r)] for r in range(n_rows)]
        tables[f"t{t}"] = Table(id=f"t{t}", title=f"Title {t}", columns=cols, rows=rows)
    return prepare_collection(TableCollection(tables=tables))


def test_generate_batch_size_and_dedup():
    c = make_collection()
    d = SqlDict()
    batch = generate_sqls(c, GenConfig(batch_size=40, seed=1), d)
    assert len(batch) == 40
    texts = [canonical_sql_text(q, c.tables[q.table_id]) for q in batch]
    assert len(set(texts)) == 40
    assert all(t in d for t in texts)


def test_generate_rejects_dict_collisions():
    c = make_collection()
    d = SqlDict()
    first = generate_sqls(c, GenConfig(batch_size=30, seed=1), d)
    second = generate_sqls(c, GenConfig(batch_size=30, seed=2), d)
    t1 = {canonical_sql_text(q, c.tables[q.table_id]) for q in first}
    t2 = {canonical_sql_text(q, c.tables[q.table_id]) for q in second}
    assert not (t1 & t2)


def test_condition_values_verbatim():
    c = make_collection()
    for q in generate_sqls(c, GenConfig(batch_size=50, seed=3), SqlDict()):
        t = c.tables[q.table_id]
        for col, op, value in q.conditions:
            if col == TITLE:
                assert value == t.title
            else:
                assert value in (row[col] for row in t.rows)


def test_agg_only_on_numeric():
    c = make_collection()
    for q in generate_sqls(c, GenConfig(batch_size=100, seed=4, agg_probability=0.9), SqlDict()):
        if q.agg_op is not None:
            assert c.tables[q.table_id].columns[q.sel_col].inferred_type == "numeric"


def test_no_unnamed_columns():
    tables = {}
    cols = [Column(""), Column("Name"), Column("City")]
    rows = [[f"u{r}", f"n{r}", f"c{r}"] for r in range(5)]
    tables["t0"] = Table(id="t0", title="T", columns=cols, rows=rows)
    c = prepare_collection(TableCollection(tables=tables))
    for q in generate_sqls(c, GenConfig(batch_size=20, seed=5), SqlDict()):
        assert q.sel_col != 0
        assert all(col != 0 for col, _, _ in q.conditions)


def test_exhaustion_when_all_cells_outliers():
    # a single row of wildly different lengths makes every cond value an outlier
    cols = [Column("A"), Column("B")]
    rows = [["w", " ".join(["w"] * 500)]] + [["w", "w"]] * 0
    t = Table(id="t0", title="T", columns=cols, rows=rows)
    c = prepare_collection(TableCollection(tables={"t0": t}))
    # force fence below every cell: craft stats manually
    c.stats["t0"].upper_fence = -1.0
    with pytest.raises(GenerationExhausted) as e:
        generate_sqls(c, GenConfig(batch_size=2, seed=0), SqlDict())
    assert e.value.partial == []


def test_alpha_one_condition():
    c = make_collection(n_tables=40, n_rows=12)
    cfg = GenConfig(batch_size=10_000, max_cond_cols=1, seed=123)
    batch = generate_sqls(c, cfg, SqlDict())
    freq = sum(1 for q in batch if q.use_title) / len(batch)
    assert 0.48 <= freq <= 0.52


def test_canonical_text_simple():
    t = Table(id="t", title="T", columns=[Column("Name"), Column("City")],
              rows=[["Albany Park", "Chicago"]])
    q = SqlQuery(table_id="t", sel_col=1, agg_op=None,
                 conditions=[(0, "EQ", "Albany Park")], use_title=False)
    assert canonical_sql_text(q, t) == "[S-E-L-E-C-T] City [W-H-E-R-E] Name [E-Q] Albany Park"


def test_canonical_text_aggregate():
    t = Table(id="t", title="T", columns=[Column("City"), Column("Population")],
              rows=[["Chicago", "100"]])
    q = SqlQuery(table_id="t", sel_col=1, agg_op="MAX",
                 conditions=[(0, "EQ", "Chicago")], use_title=False)
    text = canonical_sql_text(q, t)
    assert text.startswith("[S-E-L-E-C-T] [M-A-X] Population [W-H-E-R-E]")


def test_canonical_text_title_and_operators():
    t = Table(id="t", title="My Title", columns=[Column("N"), Column("P")],
              rows=[["x", "5"]])
    q = SqlQuery(table_id="t", sel_col=0, agg_op=None,
                 conditions=[(1, "LT", "5"), (TITLE, "EQ", "My Title")], use_title=True)
    assert canonical_sql_text(q, t) == (
        "[S-E-L-E-C-T] N [W-H-E-R-E] P [L-T] 5 [A-N-D] About [E-Q] My Title")


def test_canonical_text_deterministic():
    t = Table(id="t", title="T", columns=[Column("A"), Column("B")], rows=[["x", "y"]])
    q = SqlQuery(table_id="t", sel_col=0, agg_op=None,
                 conditions=[(1, "EQ", "y")], use_title=False)
    assert canonical_sql_text(q, t) == canonical_sql_text(q, t)


def test_sql_space_lower_bound_paper_configuration():
    assert sql_space_lower_bound(100, 12, 10, 3) == 2_112_000
