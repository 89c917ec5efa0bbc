"""Offline build pipeline, online query path, evaluation and timing reports."""

import hashlib
import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import bayes as bayes_mod
from . import relevance as rel_mod
from .corpus import TableCollection, ingest_tables, load_collection, prepare_collection, \
    schema_duplicate_groups, serialize_collection
from .encoders import EncoderSpec, encode_batch, encode_question
from .indexes import SparseIndex, build_exact, build_ivf, load_index, save_index
from .questions import QuestionRecord, TranslatorConfig, build_question_records, \
    load_question_records, save_question_records
from .retrieval import RetrievalParams, two_round_retrieve
from .sqlgen import GenConfig, GenerationExhausted, SqlDict, generate_sqls
from .trainset import augment, collect_example, load_datasets, partition_examples, save_datasets
from .triples import TripleStore, build_collection_triples, load_triples, retrieval_text, save_triples

OFFLINE_STAGES = ["prepare", "triples", "encode", "index", "gen-sql", "gen-questions",
                  "collect", "train"]


class PipelineError(Exception):
    pass


@dataclass
class IndexConfig:
    kind: str = "dense-exact"  # dense-exact | dense-ivf | sparse-bm25
    n_clusters: int = 16
    nprobe: int = 4
    seed: int = 0


@dataclass
class DatasetConfig:
    count: int = 2
    size: int = 200


@dataclass
class RelevanceSettings:
    proj_dim: int = 128
    lambda_div: float = 0.1
    learning_rate: float = 0.05
    max_epochs: int = 30


@dataclass
class BayesSettings:
    n_test_samples: int = 6
    epoch_patience: int = 1
    dataset_patience: int = 1
    max_epochs: int = 30


@dataclass
class PipelineConfig:
    corpus_path: str = ""
    corpus_format: str = "jsonl"
    output_dir: str = "artifacts"
    seed: int = 0
    trainer: str = "bayesian"  # bayesian | simple
    encoder: EncoderSpec = field(default_factory=EncoderSpec)
    index: IndexConfig = field(default_factory=IndexConfig)
    retrieval: RetrievalParams = field(default_factory=lambda: RetrievalParams(k_u=20, k_t=5, max_try_ku=200, m=3))
    gen: GenConfig = field(default_factory=GenConfig)
    translator: TranslatorConfig = field(default_factory=TranslatorConfig)
    datasets: DatasetConfig = field(default_factory=DatasetConfig)
    relevance: RelevanceSettings = field(default_factory=RelevanceSettings)
    bayes: BayesSettings = field(default_factory=BayesSettings)

    @classmethod
    def from_dict(cls, raw: dict) -> "PipelineConfig":
        cfg = cls()
        for key, value in raw.items():
            if not hasattr(cfg, key):
                raise PipelineError(f"unknown config key: {key}")
            current = getattr(cfg, key)
            if hasattr(current, "__dataclass_fields__") and isinstance(value, dict):
                setattr(cfg, key, type(current)(**value))
            else:
                setattr(cfg, key, value)
        return cfg

    @classmethod
    def from_file(cls, path: str | Path) -> "PipelineConfig":
        raw = yaml.safe_load(Path(path).read_text()) or {}
        return cls.from_dict(raw)

    def to_dict(self) -> dict:
        return asdict(self)

    def relevance_config(self) -> rel_mod.RelevanceConfig:
        return rel_mod.RelevanceConfig(
            feature_dim=4 * self.encoder.dim,
            proj_dim=self.relevance.proj_dim,
            lambda_div=self.relevance.lambda_div,
            learning_rate=self.relevance.learning_rate,
            max_epochs=self.relevance.max_epochs,
        )

    def bayes_config(self) -> bayes_mod.BayesConfig:
        return bayes_mod.BayesConfig(
            n_test_samples=self.bayes.n_test_samples,
            epoch_patience=self.bayes.epoch_patience,
            dataset_patience=self.bayes.dataset_patience,
            max_epochs=self.bayes.max_epochs,
            seed=self.seed,
        )


def _hash(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, default=str).encode()).hexdigest()


class Timings:
    """Wall-time per pipeline step, with optional unit counts."""

    def __init__(self):
        self.entries: dict[str, dict] = {}

    def record(self, step: str, seconds: float, count: int | None = None):
        self.entries[step] = {"seconds": seconds}
        if count is not None:
            self.entries[step]["count"] = count
            self.entries[step]["per_unit"] = seconds / count if count else 0.0

    def merge(self, other: "Timings"):
        self.entries.update(other.entries)

    def to_dict(self) -> dict:
        return dict(self.entries)


class _StageRunner:
    def __init__(self, out: Path, timings: Timings):
        self.out = out
        self.timings = timings
        self.prev_hash = ""

    def run(self, name: str, subdir: str, config_part: dict, fn, count_fn=None) -> bool:
        """Run a stage unless its manifest matches; returns True if executed."""
        stage_dir = self.out / subdir
        stage_dir.mkdir(parents=True, exist_ok=True)
        manifest_path = stage_dir / f"stage_{name}.json"
        chain = _hash({"stage": name, "config": config_part, "prev": self.prev_hash})
        if manifest_path.exists():
            manifest = json.loads(manifest_path.read_text())
            if manifest.get("hash") == chain:
                self.prev_hash = chain
                return False
        start = time.perf_counter()
        try:
            result = fn(stage_dir)
        except Exception as exc:
            raise PipelineError(f"stage '{name}' failed: {exc}") from exc
        elapsed = time.perf_counter() - start
        count = count_fn(result) if count_fn else None
        self.timings.record(name, elapsed, count)
        manifest_path.write_text(json.dumps({"hash": chain, "stage": name,
                                             "seconds": elapsed}, indent=2))
        self.prev_hash = chain
        return True


def _encoded_vectors_path(out: Path) -> Path:
    return out / "triples" / "vectors.f32"


def offline_build(cfg: PipelineConfig, until: str = "train") -> Timings:
    """Run offline stages in order up to `until`; stages already built are skipped."""
    if until not in OFFLINE_STAGES:
        raise PipelineError(f"unknown stage: {until}")
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    timings = Timings()
    runner = _StageRunner(out, timings)
    last = OFFLINE_STAGES.index(until)
    state: dict = {}

    def want(stage):
        return OFFLINE_STAGES.index(stage) <= last

    # --- prepare ---------------------------------------------------------
    def prepare(stage_dir):
        collection, report = ingest_tables(cfg.corpus_path, cfg.corpus_format)
        prepare_collection(collection)
        serialize_collection(collection, stage_dir / "collection.jsonl")
        (stage_dir / "ingest_report.json").write_text(json.dumps(asdict(report)))
        return collection

    if want("prepare"):
        runner.run("prepare_corpus", "corpus",
                   {"path": cfg.corpus_path, "format": cfg.corpus_format}, prepare)
        state["collection"] = load_collection(out / "corpus" / "collection.jsonl")
    if last == OFFLINE_STAGES.index("prepare"):
        return timings
    collection: TableCollection = state["collection"]

    # --- triples ---------------------------------------------------------
    def build_triples(stage_dir):
        store = build_collection_triples(collection)
        save_triples(store, stage_dir / "triples.bin", sidecar=stage_dir / "triples.jsonl")
        return store

    runner.run("triple_decomposition", "triples", {}, build_triples)
    store = load_triples(out / "triples" / "triples.bin", collection)
    if last == OFFLINE_STAGES.index("triples"):
        return timings

    # --- encode ----------------------------------------------------------
    def encode(stage_dir):
        texts = [retrieval_text(tr, collection.tables[tr.table_id]) for tr in store]
        vectors = encode_batch(texts, cfg.encoder)
        vectors.astype("<f4").tofile(stage_dir / "vectors.f32")
        np.asarray([tr.triple_id for tr in store], dtype="<u8").tofile(stage_dir / "ids.u64")
        return vectors

    runner.run("encoding_tables", "triples", {"encoder": asdict(cfg.encoder)},
               encode, count_fn=lambda v: len(store))
    if last == OFFLINE_STAGES.index("encode"):
        return timings

    # --- index -----------------------------------------------------------
    def build_index(stage_dir):
        vectors = np.fromfile(_encoded_vectors_path(out), dtype="<f4").reshape(len(store), cfg.encoder.dim)
        ids = np.fromfile(out / "triples" / "ids.u64", dtype="<u8")
        if cfg.index.kind == "dense-exact":
            index = build_exact(vectors, ids)
        elif cfg.index.kind == "dense-ivf":
            index = build_ivf(vectors, ids, cfg.index.n_clusters,
                              seed=cfg.index.seed, nprobe=cfg.index.nprobe)
        elif cfg.index.kind == "sparse-bm25":
            texts = [retrieval_text(tr, collection.tables[tr.table_id]) for tr in store]
            index = SparseIndex.build(texts, [tr.triple_id for tr in store])
        else:
            raise PipelineError(f"unknown index kind: {cfg.index.kind}")
        save_index(index, stage_dir)
        return index

    runner.run("indexing_vectors", "index", {"index": asdict(cfg.index)},
               build_index, count_fn=lambda ix: len(store))
    if last == OFFLINE_STAGES.index("index"):
        return timings

    index = load_index(out / "index", table_of=store.table_of)
    retrieve = lambda q: two_round_retrieve(q, cfg.encoder, index, cfg.retrieval)

    # --- gen-sql / gen-questions / collect -------------------------------
    # Question generation is driven by the collector (it asks for more
    # batches until the datasets are filled), so these three stages share
    # one unit of work; the per-stage jsonl artifacts are still written.
    def generate_training_data(stage_dir):
        groups = schema_duplicate_groups(collection)
        needed = cfg.datasets.count * cfg.datasets.size
        sql_dict = SqlDict()
        accepted = []
        records: list[QuestionRecord] = []
        sql_seconds = 0.0
        question_seconds = 0.0
        collect_seconds = 0.0
        batch_index = 0
        gen_cfg = GenConfig(batch_size=cfg.gen.batch_size, max_cond_cols=cfg.gen.max_cond_cols,
                            seed=cfg.gen.seed, agg_probability=cfg.gen.agg_probability)
        while len(accepted) < needed:
            if batch_index > 50:
                raise PipelineError(
                    f"collector could not fill {needed} examples "
                    f"(accepted {len(accepted)} after {batch_index} batches)")
            gen_cfg.seed = cfg.gen.seed + batch_index
            t0 = time.perf_counter()
            try:
                sqls = generate_sqls(collection, gen_cfg, sql_dict)
            except GenerationExhausted as exc:
                sqls = exc.partial
                if not sqls:
                    raise
            sql_seconds += time.perf_counter() - t0
            t0 = time.perf_counter()
            batch_records = build_question_records(
                sqls, collection, groups, seed=cfg.seed,
                translator=cfg.translator if cfg.translator.endpoint else None,
                id_offset=len(records))
            question_seconds += time.perf_counter() - t0
            records.extend(batch_records)
            t0 = time.perf_counter()
            for rec in batch_records:
                example = collect_example(rec, retrieve(rec.question))
                if example is not None:
                    accepted.append(example)
                if len(accepted) >= needed:
                    break
            collect_seconds += time.perf_counter() - t0
            batch_index += 1
        sql_dict.save(stage_dir / "sql_dict.txt")
        save_question_records(records, stage_dir / "questions.jsonl")
        datasets = partition_examples(accepted, cfg.datasets.count, cfg.datasets.size, cfg.seed)
        save_datasets(datasets, out / "datasets", manifest_extra={
            "retrieval": asdict(cfg.retrieval), "encoder": asdict(cfg.encoder),
            "config_hash": _hash(cfg.to_dict()),
        })
        timings.record("sql_generation", sql_seconds, len(records))
        timings.record("question_generation", question_seconds, len(records))
        timings.record("collect_training_data", collect_seconds, len(records))
        return datasets

    data_cfg = {"gen": asdict(cfg.gen), "datasets": asdict(cfg.datasets),
                "retrieval": asdict(cfg.retrieval), "translator": cfg.translator.endpoint}
    runner.run("training_data", "questions", data_cfg, generate_training_data)
    if last < OFFLINE_STAGES.index("train"):
        return timings

    # --- train -----------------------------------------------------------
    def train(stage_dir):
        datasets = load_datasets(out / "datasets")
        vectors = np.fromfile(_encoded_vectors_path(out), dtype="<f4").reshape(len(store), cfg.encoder.dim).astype(np.float64)
        ids = np.fromfile(out / "triples" / "ids.u64", dtype="<u8")
        vec_index = {int(i): row for row, i in enumerate(ids)}
        vec_of = lambda tid: vectors[vec_index[tid]]
        rel_cfg = cfg.relevance_config()

        def featurize_split(examples, augmented: bool):
            out_examples = []
            for e in examples:
                q_vec = encode_question(e.question, cfg.encoder)
                variants = augment(e) if augmented else [e]
                for v in variants:
                    out_examples.append(rel_mod.featurize(v, q_vec, vec_of))
            return out_examples

        pairs = [(featurize_split(ds.train, augmented=True),
                  featurize_split(ds.validation, augmented=False)) for ds in datasets]
        meta = {"trainer": cfg.trainer, "seed": cfg.seed,
                "dataset_hash": _hash([[e.question_id for e in ds.train] for ds in datasets])}
        if cfg.trainer == "bayesian":
            snapshot, reports = bayes_mod.incremental_loop(pairs, rel_cfg, cfg.bayes_config())
            bayes_mod.save_posterior(snapshot, rel_cfg, stage_dir, meta=meta)
            (stage_dir / "training_report.json").write_text(json.dumps(
                [asdict(r) for r in reports], indent=2))
        elif cfg.trainer == "simple":
            params, histories, best = rel_mod.simple_incremental_loop(
                pairs, rel_cfg, dataset_patience=cfg.bayes.dataset_patience, seed=cfg.seed)
            rel_mod.save_checkpoint(params, rel_cfg, stage_dir, meta=meta | {"best_eval": best})
            (stage_dir / "training_report.json").write_text(json.dumps(
                [asdict(h) for h in histories], indent=2))
        else:
            raise PipelineError(f"unknown trainer: {cfg.trainer}")
        return None

    train_cfg = {"trainer": cfg.trainer, "relevance": asdict(cfg.relevance),
                 "bayes": asdict(cfg.bayes), "seed": cfg.seed}
    runner.run("training_relevance_model", "checkpoints", train_cfg, train)

    report_dir = out / "reports"
    report_dir.mkdir(exist_ok=True)
    existing = {}
    timing_path = report_dir / "offline_timings.json"
    if timing_path.exists():
        existing = json.loads(timing_path.read_text())
    existing.update(timings.to_dict())
    timing_path.write_text(json.dumps(existing, indent=2, sort_keys=True))
    return timings


@dataclass
class QueryResult:
    table_id: str
    title: str
    score: float
    triples: list[dict]


class Artifacts:
    """Loaded, immutable view of a completed offline build."""

    def __init__(self, cfg: PipelineConfig):
        out = Path(cfg.output_dir)
        required = [out / "corpus" / "collection.jsonl", out / "triples" / "triples.bin",
                    out / "index" / "manifest.json", out / "checkpoints" / "manifest.json"]
        missing = [str(p) for p in required if not p.exists()]
        if missing:
            raise PipelineError(f"artifacts not ready, missing: {missing}")
        self.cfg = cfg
        self.collection = load_collection(out / "corpus" / "collection.jsonl")
        self.store = load_triples(out / "triples" / "triples.bin", self.collection)
        self.index = load_index(out / "index", table_of=self.store.table_of)
        self.rel_cfg = cfg.relevance_config()
        vectors = np.fromfile(_encoded_vectors_path(out), dtype="<f4").reshape(
            len(self.store), cfg.encoder.dim).astype(np.float64)
        ids = np.fromfile(out / "triples" / "ids.u64", dtype="<u8")
        self._vec_index = {int(i): row for row, i in enumerate(ids)}
        self._vectors = vectors
        manifest = json.loads((out / "checkpoints" / "manifest.json").read_text())
        self.trainer = manifest.get("kind", "mle")
        if self.trainer == "bayes":
            self.posterior = bayes_mod.load_posterior(out / "checkpoints")
            self.model = self.posterior.mean_model(self.rel_cfg)
        else:
            self.posterior = None
            self.model = rel_mod.load_checkpoint(out / "checkpoints", self.rel_cfg)

    def vec_of(self, triple_id: int) -> np.ndarray:
        return self._vectors[self._vec_index[triple_id]]

    def retrieve(self, question: str):
        return two_round_retrieve(question, self.cfg.encoder, self.index, self.cfg.retrieval)

    def rank(self, question: str, retrieval) -> tuple[list[str], dict]:
        """Second-stage ranking; returns (ordered table ids, per-triple probabilities)."""
        if not retrieval:
            return [], {}
        q_vec = encode_question(question, self.cfg.encoder)
        groups = {}
        for r in retrieval:
            groups.setdefault(r.table_id, []).append(r.triple_id)
        example = rel_mod.FeaturizedExample(question_id=-1, groups=[
            (tid, np.stack([rel_mod.extract_features(q_vec, self.vec_of(t)) for t in triples]), 0)
            for tid, triples in sorted(groups.items())
        ])
        if self.posterior is not None:
            ranking, probs = bayes_mod.predict_test(
                self.posterior.params, example, self.rel_cfg,
                self.cfg.bayes_config(), seed=self.cfg.seed)
        else:
            fwd = rel_mod.forward(example, self.model)
            probs = {tid: fwd.probabilities[i] for i, (tid, _, _) in enumerate(example.groups)}
            ranking = rel_mod.rank_tables(probs)
        triple_ids = {tid: groups[tid] for tid in groups}
        return ranking, {tid: list(zip(triple_ids[tid], probs[tid])) for tid in probs}


def online_query(artifacts: Artifacts, question: str, k: int = 5) -> list[QueryResult]:
    if not question.strip():
        return []
    retrieval = artifacts.retrieve(question)
    ranking, per_table = artifacts.rank(question, retrieval)
    results = []
    for tid in ranking[:k]:
        scored = sorted(per_table[tid], key=lambda x: -x[1])
        best_prob = scored[0][1] if scored else 0.0
        triples = [{
            "triple_id": int(trid),
            "text": retrieval_text(artifacts.store.get(trid), artifacts.collection.tables[tid]),
            "score": float(p),
        } for trid, p in scored[:3]]
        results.append(QueryResult(table_id=tid, title=artifacts.collection.tables[tid].title,
                                   score=float(best_prob), triples=triples))
    return results


@dataclass
class EvalReport:
    n_questions: int
    p_at: dict[int, float]
    p_max: float
    per_question: list[dict]
    timings: dict

    def to_dict(self) -> dict:
        return {"n_questions": self.n_questions,
                "p_at": {str(k): v for k, v in sorted(self.p_at.items())},
                "p_max": self.p_max,
                "per_question": self.per_question}


def evaluate(artifacts: Artifacts, records: list[QuestionRecord],
             k_list: tuple[int, ...] = (1, 5)) -> EvalReport:
    hits = {k: 0 for k in k_list}
    max_hits = 0
    per_question = []
    first_total = 0.0
    second_total = 0.0
    for rec in records:
        gt = set(rec.ground_truth_table_ids)
        t0 = time.perf_counter()
        retrieval = artifacts.retrieve(rec.question)
        t1 = time.perf_counter()
        ranking, _ = artifacts.rank(rec.question, retrieval)
        t2 = time.perf_counter()
        first_total += t1 - t0
        second_total += t2 - t1
        first_tables = {r.table_id for r in retrieval}
        if first_tables & gt:
            max_hits += 1
        for k in k_list:
            if set(ranking[:k]) & gt:
                hits[k] += 1
        per_question.append({"question_id": rec.question_id,
                             "top": ranking[:max(k_list)],
                             "ground_truth": sorted(gt)})
    n = len(records)
    timings = {
        "first_stage_per_question": first_total / n if n else 0.0,
        "second_stage_per_question": second_total / n if n else 0.0,
        "total_per_question": (first_total + second_total) / n if n else 0.0,
    }
    return EvalReport(
        n_questions=n,
        p_at={k: hits[k] / n if n else 0.0 for k in k_list},
        p_max=max_hits / n if n else 0.0,
        per_question=per_question,
        timings=timings,
    )


OFFLINE_TIMING_STEPS = ["encoding_tables", "indexing_vectors", "sql_generation",
                        "question_generation", "collect_training_data",
                        "training_relevance_model"]
ONLINE_TIMING_STEPS = ["first_stage_per_question", "second_stage_per_question",
                       "total_per_question"]


def timing_report(cfg: PipelineConfig, eval_report: EvalReport | None = None) -> dict:
    """Offline step durations plus online per-question timings, one row per category."""
    out = Path(cfg.output_dir)
    offline = {}
    timing_path = out / "reports" / "offline_timings.json"
    if timing_path.exists():
        offline = json.loads(timing_path.read_text())
    report = {"offline": {step: offline.get(step, {}) for step in OFFLINE_TIMING_STEPS},
              "online": {}}
    if eval_report is not None:
        report["online"] = {step: eval_report.timings[step] for step in ONLINE_TIMING_STEPS}
    return report


def save_eval_report(report: EvalReport, cfg: PipelineConfig, name: str = "eval") -> Path:
    out = Path(cfg.output_dir) / "reports"
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{name}.json"
    path.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    (out / f"{name}_timings.json").write_text(json.dumps(report.timings, indent=2, sort_keys=True))
    return path
