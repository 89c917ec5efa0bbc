import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from tablesearch.corpus import Column, Table, TableCollection, prepare_collection, schema_duplicate_groups
from tablesearch.questions import (QuestionRecord, TranslatorConfig, TranslatorError,
                                   assign_ground_truth, build_question_records,
                                   external_translate, load_question_records,
                                   save_question_records, template_translate)
from tablesearch.sqlgen import TITLE, SqlQuery


def make_table():
    return Table(id="t", title="Chicago Public Libraries",
                 columns=[Column("Name"), Column("City"), Column("Status")],
                 rows=[["Albany Park", "Chicago", "open"]])


def test_template_simple():
    q = SqlQuery(table_id="t", sel_col=1, agg_op=None,
                 conditions=[(0, "EQ", "Albany Park")], use_title=False)
    assert template_translate(q, make_table()) == (
        "what is the city of the one whose name is Albany Park?")


def test_template_count():
    q = SqlQuery(table_id="t", sel_col=0, agg_op="COUNT",
                 conditions=[(2, "EQ", "open")], use_title=False)
    out = template_translate(q, make_table())
    assert "number" in out and "open" in out


def test_template_deterministic():
    q = SqlQuery(table_id="t", sel_col=1, agg_op=None,
                 conditions=[(0, "EQ", "Albany Park")], use_title=False)
    assert template_translate(q, make_table(), seed=5) == template_translate(q, make_table(), seed=5)


def test_template_title_and_comparison():
    q = SqlQuery(table_id="t", sel_col=0, agg_op=None,
                 conditions=[(1, "LT", "Chicago"), (TITLE, "EQ", "Chicago Public Libraries")],
                 use_title=True)
    out = template_translate(q, make_table())
    assert "less than Chicago" in out
    assert out.endswith("in Chicago Public Libraries?")


def test_template_content_preserved():
    q = SqlQuery(table_id="t", sel_col=0, agg_op=None,
                 conditions=[(1, "EQ", "Chicago"), (2, "GT", "open")], use_title=False)
    out = template_translate(q, make_table())
    for _, _, value in q.conditions:
        assert value in out


class StubTranslator(BaseHTTPRequestHandler):
    fail_substring = None

    def do_POST(self):
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        sqls = body["sqls"]
        if self.fail_substring and any(self.fail_substring in s for s in sqls):
            self.send_response(500)
            self.end_headers()
            return
        payload = json.dumps({"questions": [f"Q<{s}>" for s in sqls]}).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.end_headers()
        self.wfile.write(payload)

    def log_message(self, *args):
        pass


@pytest.fixture
def stub_server():
    server = HTTPServer(("127.0.0.1", 0), StubTranslator)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_port}"
    server.shutdown()


def _cfg(endpoint):
    return TranslatorConfig(endpoint=endpoint, retries=2, backoff=0.01)


def test_external_empty_batch(stub_server):
    assert external_translate([], _cfg(stub_server)) == ([], [])


def test_external_healthy_batch(stub_server):
    StubTranslator.fail_substring = None
    qs, prov = external_translate(["a", "b", "c"], _cfg(stub_server))
    assert qs == ["Q<a>", "Q<b>", "Q<c>"]
    assert prov == ["external"] * 3


def test_external_per_item_fallback(stub_server):
    StubTranslator.fail_substring = "BAD"
    try:
        qs, prov = external_translate(
            ["a", "BAD", "c"], _cfg(stub_server),
            fallback=lambda i: f"template-{i}")
    finally:
        StubTranslator.fail_substring = None
    assert qs == ["Q<a>", "template-1", "Q<c>"]
    assert prov == ["external", "template", "external"]


def test_external_unreachable():
    with pytest.raises(TranslatorError):
        external_translate(["x"], TranslatorConfig(endpoint="http://127.0.0.1:9", retries=2, backoff=0.01))


def _dup_collection():
    tables = {
        "a": Table(id="a", title="Same", columns=[Column("x")], rows=[["1"]]),
        "b": Table(id="b", title="Same", columns=[Column("x")], rows=[["2"]]),
        "c": Table(id="c", title="Other", columns=[Column("y")], rows=[["3"]]),
    }
    return prepare_collection(TableCollection(tables=tables))


def test_ground_truth_singleton():
    groups = schema_duplicate_groups(_dup_collection())
    q = SqlQuery(table_id="c", sel_col=0, agg_op=None, conditions=[], use_title=False)
    assert assign_ground_truth(q, groups) == ["c"]


def test_ground_truth_duplicates():
    groups = schema_duplicate_groups(_dup_collection())
    q = SqlQuery(table_id="a", sel_col=0, agg_op=None, conditions=[], use_title=False)
    assert sorted(assign_ground_truth(q, groups)) == ["a", "b"]


def test_ground_truth_closure():
    groups = schema_duplicate_groups(_dup_collection())
    qa = SqlQuery(table_id="a", sel_col=0, agg_op=None, conditions=[], use_title=False)
    qb = SqlQuery(table_id="b", sel_col=0, agg_op=None, conditions=[], use_title=False)
    assert sorted(assign_ground_truth(qa, groups)) == sorted(assign_ground_truth(qb, groups))


def test_build_and_roundtrip_records(tmp_path):
    c = _dup_collection()
    groups = schema_duplicate_groups(c)
    queries = [SqlQuery(table_id="a", sel_col=0, agg_op=None,
                        conditions=[(0, "EQ", "1")], use_title=False)]
    records = build_question_records(queries, c, groups)
    assert records[0].question
    assert sorted(records[0].ground_truth_table_ids) == ["a", "b"]
    path = tmp_path / "questions.jsonl"
    save_question_records(records, path)
    loaded = load_question_records(path)
    assert loaded == records
