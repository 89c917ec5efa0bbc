"""HTTP service exposing the query path over built artifacts."""

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from .pipeline import Artifacts, PipelineConfig, PipelineError, online_query


class QueryRequest(BaseModel):
    question: str = Field(min_length=1)
    k: int = Field(default=5, ge=1, le=100)


def create_app(cfg: PipelineConfig, artifacts: Artifacts | None = None) -> FastAPI:
    """Build the app; if `artifacts` is None they are loaded lazily so the
    server can come up before an offline build finishes (readiness via 503)."""
    app = FastAPI(title="tablesearch")
    state = {"artifacts": artifacts}

    def get_artifacts() -> Artifacts:
        if state["artifacts"] is None:
            try:
                state["artifacts"] = Artifacts(cfg)
            except PipelineError as exc:
                raise HTTPException(status_code=503, detail=str(exc))
        return state["artifacts"]

    @app.get("/health")
    def health():
        try:
            get_artifacts()
        except HTTPException:
            return {"status": "starting", "ready": False}
        return {"status": "ok", "ready": True}

    @app.post("/query")
    def query(req: QueryRequest):
        art = get_artifacts()
        if not req.question.strip():
            raise HTTPException(status_code=400, detail="question must be non-empty")
        results = online_query(art, req.question, k=req.k)
        return {"results": [
            {"table_id": r.table_id, "title": r.title, "score": r.score,
             "triples": [{"text": t["text"], "score": t["score"]} for t in r.triples]}
            for r in results
        ]}

    @app.get("/tables/{table_id}")
    def table(table_id: str):
        art = get_artifacts()
        t = art.collection.tables.get(table_id)
        if t is None:
            raise HTTPException(status_code=404, detail=f"no such table: {table_id}")
        return {
            "table_id": t.id, "title": t.title,
            "columns": [{"name": c.name, "inferred_type": c.inferred_type} for c in t.columns],
            "rows": t.rows,
        }

    @app.get("/stats")
    def stats():
        art = get_artifacts()
        return {
            "n_tables": len(art.collection.tables),
            "n_triples": len(art.store),
            "index_kind": cfg.index.kind,
            "encoder_dim": cfg.encoder.dim,
            "trainer": art.trainer,
        }

    return app


def serve(cfg: PipelineConfig, host: str = "127.0.0.1", port: int = 8000) -> None:
    import uvicorn
    uvicorn.run(create_app(cfg), host=host, port=port)
