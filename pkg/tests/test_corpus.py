import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tablesearch.corpus import (CellStats, Column, CorpusError, Table, TableCollection,
                                compute_cell_stats, infer_column_types, ingest_tables,
                                is_outlier_cell, load_collection, prepare_collection,
                                schema_duplicate_groups, serialize_collection)


def make_table(tid="t1", title="Title", headers=("a", "b"), rows=(("1", "2"),)):
    return Table(id=tid, title=title, columns=[Column(name=h) for h in headers],
                 rows=[list(r) for r in rows])


def test_ingest_jsonl_preserves_ids(tmp_path):
    path = tmp_path / "tables.jsonl"
    recs = [
        {"id": "x", "title": "X", "columns": [{"name": "a"}], "rows": [["1"]]},
        {"id": "y", "title": "Y", "columns": [{"name": "a"}], "rows": [["2"]]},
    ]
    path.write_text("".join(json.dumps(r) + "\n" for r in recs))
    collection, report = ingest_tables(path, "jsonl")
    assert sorted(collection.tables) == ["x", "y"]
    assert report.tables == 2 and report.padded == 0


def test_ingest_csv_dir(tmp_path):
    d = tmp_path / "csvs"
    d.mkdir()
    (d / "lib.csv").write_text("a,b\n1,2\n3,4\n5,6\n")
    collection, _ = ingest_tables(d, "csv-dir")
    t = collection.tables["lib"]
    assert [c.name for c in t.columns] == ["a", "b"]
    assert len(t.rows) == 3
    assert t.title == "lib"


def test_ingest_pads_ragged_rows(tmp_path):
    path = tmp_path / "tables.jsonl"
    rec = {"id": "x", "title": "", "columns": [{"name": "a"}, {"name": "b"}, {"name": "c"}],
           "rows": [["1", "2"]]}
    path.write_text(json.dumps(rec) + "\n")
    collection, report = ingest_tables(path, "jsonl")
    assert collection.tables["x"].rows[0] == ["1", "2", ""]
    assert report.padded == 1


def test_ingest_missing_source(tmp_path):
    with pytest.raises(CorpusError):
        ingest_tables(tmp_path / "nope.jsonl", "jsonl")


def test_ingest_empty_collection(tmp_path):
    path = tmp_path / "tables.jsonl"
    path.write_text("")
    with pytest.raises(CorpusError):
        ingest_tables(path, "jsonl")


def test_infer_numeric_column():
    t = make_table(headers=("n",), rows=[("1",), ("2",), ("3",)])
    infer_column_types(t)
    assert t.columns[0].inferred_type == "numeric"


def test_infer_numeric_at_threshold():
    cells = ["1", "x", "3", "4", "5", "6", "7", "8", "9", "10"]
    t = make_table(headers=("n",), rows=[(c,) for c in cells])
    infer_column_types(t)
    assert t.columns[0].inferred_type == "numeric"  # 9/10 = 90%


def test_infer_all_empty_is_text():
    t = make_table(headers=("n",), rows=[("",), ("",)])
    infer_column_types(t)
    assert t.columns[0].inferred_type == "text"


def test_cell_stats_simple():
    s = CellStats.from_token_counts([2, 2, 6, 6])
    assert s.q1 == 2 and s.q3 == 6 and s.upper_fence == 12


def test_cell_stats_constant():
    s = CellStats.from_token_counts([3, 3, 3])
    assert s.upper_fence == 3


def test_cell_stats_interpolated():
    s = CellStats.from_token_counts(list(range(1, 9)))
    assert s.q1 == pytest.approx(2.75)
    assert s.q3 == pytest.approx(6.25)
    assert s.upper_fence == pytest.approx(11.5)


def test_outlier_boundary():
    s = CellStats(q1=2, q3=6, upper_fence=12)
    assert is_outlier_cell(" ".join(["w"] * 13), s)
    assert not is_outlier_cell(" ".join(["w"] * 12), s)
    assert not is_outlier_cell("", s)


def test_duplicate_groups_same_schema_and_title():
    c = TableCollection(tables={
        "a": make_table("a", "Same Title", ("x", "y")),
        "b": make_table("b", "same  title", ("X", "Y")),
    })
    groups = schema_duplicate_groups(c)
    assert groups == [["a", "b"]]


def test_duplicate_groups_distinct():
    c = TableCollection(tables={
        "a": make_table("a", "T1", ("x",)),
        "b": make_table("b", "T2", ("y",)),
    })
    assert sorted(schema_duplicate_groups(c)) == [["a"], ["b"]]


def test_duplicate_groups_title_matters():
    c = TableCollection(tables={
        "a": make_table("a", "One", ("x", "y")),
        "b": make_table("b", "Two", ("x", "y")),
    })
    assert sorted(schema_duplicate_groups(c)) == [["a"], ["b"]]


@given(st.lists(st.tuples(st.sampled_from(["T1", "T2"]), st.sampled_from([("a",), ("a", "b")])),
                min_size=1, max_size=8))
@settings(max_examples=50, deadline=None)
def test_duplicate_groups_partition(specs):
    c = TableCollection(tables={
        f"t{i}": make_table(f"t{i}", title, headers, rows=[("1",) * len(headers)])
        for i, (title, headers) in enumerate(specs)
    })
    groups = schema_duplicate_groups(c)
    flat = [tid for g in groups for tid in g]
    assert sorted(flat) == sorted(c.tables)
    assert len(flat) == len(set(flat))


@given(st.lists(st.integers(min_value=0, max_value=20), min_size=1, max_size=30),
       st.integers(min_value=21, max_value=60))
@settings(max_examples=50, deadline=None)
def test_q3_monotone_under_longer_cell(counts, longer):
    base = CellStats.from_token_counts(counts)
    extended = CellStats.from_token_counts(counts + [longer])
    assert extended.q3 >= base.q3 - 1e-9


def test_fence_can_drop_when_q1_rises_faster():
    # the fence itself is not monotone under interpolated quantiles: a longer
    # cell can raise Q1 faster than Q3 and compress the IQR
    base = CellStats.from_token_counts([0, 27, 28])
    extended = CellStats.from_token_counts([0, 27, 28, 41])
    assert extended.upper_fence < base.upper_fence


def test_serialization_deterministic(tmp_path):
    t = make_table()
    c = prepare_collection(TableCollection(tables={"t1": t}))
    p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    serialize_collection(c, p1)
    serialize_collection(c, p2)
    assert p1.read_bytes() == p2.read_bytes()
    loaded = load_collection(p1)
    assert loaded.tables["t1"].rows == t.rows
    assert loaded.stats["t1"].upper_fence == c.stats["t1"].upper_fence
