"""Command-line interface for the offline build stages and the online query path."""

import json

import click

from .pipeline import Artifacts, PipelineConfig, offline_build, online_query, \
    evaluate, save_eval_report, timing_report
from .questions import load_question_records

def _load_config(config_path: str, seed: int | None) -> PipelineConfig:
    cfg = PipelineConfig.from_file(config_path)
    if seed is not None:
        cfg.seed = seed
    return cfg


def _stage_command(verb: str, until: str, help_text: str):
    @main.command(name=verb, help=help_text)
    @click.option("--config", "config_path", required=True, type=click.Path(exists=True))
    @click.option("--seed", type=int, default=None, help="Override the config seed.")
    def _cmd(config_path, seed):
        cfg = _load_config(config_path, seed)
        timings = offline_build(cfg, until=until)
        for step, entry in timings.to_dict().items():
            click.echo(f"{step}: {entry['seconds']:.3f}s")
        if not timings.to_dict():
            click.echo("up to date, nothing to do")
    return _cmd


@click.group()
def main():
    """Self-supervised table discovery: build, evaluate and serve."""


_stage_command("prepare", "prepare", "Ingest and normalize the table corpus.")
_stage_command("triples", "triples", "Decompose table rows into triples.")
_stage_command("encode", "encode", "Encode triple passages into vectors.")
_stage_command("index", "index", "Build the first-stage retrieval index.")
_stage_command("gen-sql", "gen-sql", "Sample synthetic SQL queries.")
_stage_command("gen-questions", "gen-questions", "Translate SQLs into questions.")
_stage_command("collect", "collect", "Collect labeled training examples.")
_stage_command("train", "train", "Train the relevance ranker incrementally.")


@main.command(help="Score held-out questions and report P@1 / P@5 / P@Max.")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--questions", "questions_path", required=True, type=click.Path(exists=True),
              help="jsonl of question records with ground-truth table ids.")
@click.option("--seed", type=int, default=None)
@click.option("--name", default="eval", help="Report name under <output_dir>/reports/.")
def eval(config_path, questions_path, seed, name):
    cfg = _load_config(config_path, seed)
    artifacts = Artifacts(cfg)
    records = load_question_records(questions_path)
    report = evaluate(artifacts, records)
    path = save_eval_report(report, cfg, name=name)
    click.echo(f"questions: {report.n_questions}")
    for k in sorted(report.p_at):
        click.echo(f"P@{k}: {report.p_at[k]:.4f}")
    click.echo(f"P@Max: {report.p_max:.4f}")
    click.echo(f"report: {path}")
    click.echo(json.dumps(timing_report(cfg, report)["online"], indent=2))


@main.command(help="Answer a single question from the command line.")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--seed", type=int, default=None)
@click.option("-k", type=int, default=5)
@click.argument("question")
def query(config_path, seed, k, question):
    cfg = _load_config(config_path, seed)
    artifacts = Artifacts(cfg)
    for rank, r in enumerate(online_query(artifacts, question, k=k), start=1):
        click.echo(f"{rank}. {r.table_id}  {r.title}  (score {r.score:.4f})")
        for t in r.triples:
            click.echo(f"     {t['score']:.4f}  {t['text']}")


@main.command(help="Serve the query API over HTTP.")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--seed", type=int, default=None)
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8000)
def serve(config_path, seed, host, port):
    from .server import serve as run_server
    cfg = _load_config(config_path, seed)
    run_server(cfg, host=host, port=port)


if __name__ == "__main__":
    main()
