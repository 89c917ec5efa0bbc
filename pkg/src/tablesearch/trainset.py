"""Labeled training examples from first-stage retrieval, with augmentation and chunking."""

import json
import random
from dataclasses import dataclass, field, replace
from pathlib import Path

from .indexes import RetrievalResult
from .questions import QuestionRecord


class DatasetShortfall(Exception):
    def __init__(self, needed: int, got: int):
        super().__init__(f"needed {needed} accepted questions, got {got} ({needed - got} missing)")
        self.needed = needed
        self.got = got


@dataclass
class LabeledGroup:
    table_id: str
    triple_ids: list[int]
    scores: list[float]
    label: int  # 1 = positive (ground-truth table), 0 = negative


@dataclass
class TrainingExample:
    question_id: int
    question: str
    groups: list[LabeledGroup]
    augmented: bool = False

    @property
    def n_triples(self) -> int:
        return sum(len(g.triple_ids) for g in self.groups)


@dataclass
class IncrementalDataset:
    index: int
    train: list[TrainingExample]
    validation: list[TrainingExample]

    @property
    def size(self) -> int:
        return len(self.train) + len(self.validation)


def collect_example(q: QuestionRecord, retrieval: list[RetrievalResult]) -> TrainingExample | None:
    """Group retrieved triples by table and label by ground truth.

    Returns None (skip) when retrieval is empty or all groups share one label.
    """
    if not retrieval:
        return None
    gt = set(q.ground_truth_table_ids)
    groups: dict[str, LabeledGroup] = {}
    for r in retrieval:
        g = groups.get(r.table_id)
        if g is None:
            g = groups[r.table_id] = LabeledGroup(
                table_id=r.table_id, triple_ids=[], scores=[],
                label=1 if r.table_id in gt else 0,
            )
        g.triple_ids.append(r.triple_id)
        g.scores.append(r.score)
    labels = {g.label for g in groups.values()}
    if labels != {0, 1}:
        return None
    return TrainingExample(question_id=q.question_id, question=q.question,
                           groups=sorted(groups.values(), key=lambda g: g.table_id))


def augment(e: TrainingExample) -> list[TrainingExample]:
    """The example plus one singleton variant per triple.

    A variant keeps every other table's group intact and restricts the
    chosen triple's own table to just that triple, so each variant stays a
    valid ranking problem with both labels present.
    """
    out = [e]
    for gi, g in enumerate(e.groups):
        for ti in range(len(g.triple_ids)):
            groups = [
                replace(og, triple_ids=list(og.triple_ids), scores=list(og.scores))
                if i != gi else
                LabeledGroup(table_id=g.table_id, triple_ids=[g.triple_ids[ti]],
                             scores=[g.scores[ti]], label=g.label)
                for i, og in enumerate(e.groups)
            ]
            out.append(TrainingExample(question_id=e.question_id, question=e.question,
                                       groups=groups, augmented=True))
    return out


def build_incremental_datasets(records: list[QuestionRecord], retrieve, count: int,
                               size: int, seed: int = 0) -> list[IncrementalDataset]:
    """Fill `count` disjoint datasets of `size` questions with accepted examples.

    `retrieve` maps a question string to first-stage RetrievalResults. Each
    dataset gets a seeded 90/10 train/validation split.
    """
    needed = count * size
    accepted: list[TrainingExample] = []
    for rec in records:
        if len(accepted) >= needed:
            break
        example = collect_example(rec, retrieve(rec.question))
        if example is not None:
            accepted.append(example)
    return partition_examples(accepted, count, size, seed)


def partition_examples(accepted: list[TrainingExample], count: int, size: int,
                       seed: int = 0) -> list[IncrementalDataset]:
    """Partition accepted examples into `count` datasets with 90/10 splits."""
    if len(accepted) < count * size:
        raise DatasetShortfall(count * size, len(accepted))
    datasets = []
    rng = random.Random(seed)
    for d in range(count):
        chunk = accepted[d * size:(d + 1) * size]
        order = list(range(size))
        rng.shuffle(order)
        n_val = max(1, size // 10)
        val_ix = set(order[:n_val])
        datasets.append(IncrementalDataset(
            index=d,
            train=[chunk[i] for i in range(size) if i not in val_ix],
            validation=[chunk[i] for i in range(size) if i in val_ix],
        ))
    return datasets


def _example_dict(e: TrainingExample) -> dict:
    return {
        "question_id": e.question_id, "question": e.question, "augmented": e.augmented,
        "groups": [
            {"table_id": g.table_id, "triple_ids": g.triple_ids, "scores": g.scores, "label": g.label}
            for g in e.groups
        ],
    }


def _example_from_dict(rec: dict) -> TrainingExample:
    return TrainingExample(
        question_id=rec["question_id"], question=rec["question"],
        augmented=rec.get("augmented", False),
        groups=[LabeledGroup(table_id=g["table_id"], triple_ids=g["triple_ids"],
                             scores=g["scores"], label=g["label"]) for g in rec["groups"]],
    )


def save_datasets(datasets: list[IncrementalDataset], directory: str | Path,
                  manifest_extra: dict | None = None) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for ds in datasets:
        with (directory / f"dataset_{ds.index}.jsonl").open("w") as fh:
            for split, examples in (("train", ds.train), ("validation", ds.validation)):
                for e in examples:
                    rec = _example_dict(e)
                    rec["split"] = split
                    fh.write(json.dumps(rec) + "\n")
    manifest = {"count": len(datasets), "sizes": [ds.size for ds in datasets]}
    manifest.update(manifest_extra or {})
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))


def load_datasets(directory: str | Path) -> list[IncrementalDataset]:
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    datasets = []
    for d in range(manifest["count"]):
        train, validation = [], []
        with (directory / f"dataset_{d}.jsonl").open() as fh:
            for line in fh:
                rec = json.loads(line)
                (train if rec["split"] == "train" else validation).append(_example_from_dict(rec))
        datasets.append(IncrementalDataset(index=d, train=train, validation=validation))
    return datasets
