"""Augmented dataset construction and fine-tune export.

Original multi-relation documents are split so each gold triplet gets its
own single-relation record over the full document text. Accepted synthetic
summaries join as additional records for their triplet, and the per-document
unions are concatenated corpus-wide into one training set. Export turns
those records into instruction rows plus sampled negative pairs, with a
sidecar describing the adapter hyperparameters for the fine-tune job.
"""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .corpus import Corpus, enumerate_candidate_pairs
from .infer import build_instruction, build_task_input
from .iors import DEFAULT_BETA, SyntheticRecord
from .model import TrainingSample

PROVENANCE_ORIGINAL = "original"
PROVENANCE_SYNTHETIC = "synthetic"

BASE_MODEL_ID = "LLaMA2-7B-Chat"
DEFAULT_LEARNING_RATE = 2e-4
DEFAULT_LORA_DROPOUT = 0.1


@dataclass(frozen=True)
class AugmentedRecord:
    """One single-relation training record: a text plus exactly one triplet."""

    doc_id: str
    head_id: str
    tail_id: str
    relation: str
    text: str
    provenance: str

    def __post_init__(self) -> None:
        if self.provenance not in (PROVENANCE_ORIGINAL, PROVENANCE_SYNTHETIC):
            raise ValueError(f"unknown provenance: {self.provenance!r}")


def split_sample(sample: TrainingSample) -> list[AugmentedRecord]:
    """One record per gold triplet, each over the full document text."""
    doc = sample.document
    ordered = sorted(sample.triplets, key=lambda t: (t.head_id, t.tail_id, t.relation))
    return [
        AugmentedRecord(doc.doc_id, t.head_id, t.tail_id, t.relation,
                        doc.text, PROVENANCE_ORIGINAL)
        for t in ordered
    ]


def merge_sample(original: Sequence[AugmentedRecord],
                 synthetic: Sequence[AugmentedRecord]) -> list[AugmentedRecord]:
    """Union of a document's split records and its synthetic records."""
    doc_ids = {r.doc_id for r in original} | {r.doc_id for r in synthetic}
    if len(doc_ids) > 1:
        raise ValueError(f"records from multiple documents: {sorted(doc_ids)}")
    return list(original) + list(synthetic)


def build_dataset(corpus: Corpus,
                  synthetic: Sequence[SyntheticRecord]) -> tuple[AugmentedRecord, ...]:
    """Assemble the corpus-wide augmented dataset.

    Documents contribute in corpus order: first the split originals, then
    that document's accepted summaries in canonical triplet order.
    Synthetic records must reference a known document and entities, and
    their relation must belong to the corpus schema.
    """
    by_doc: dict[str, list[SyntheticRecord]] = {}
    known_docs = {s.document.doc_id for s in corpus.samples}
    for record in synthetic:
        if record.doc_id not in known_docs:
            raise ValueError(f"synthetic record for unknown document {record.doc_id!r}")
        if record.relation not in corpus.schema.labels:
            raise ValueError(f"synthetic record with unknown relation {record.relation!r}")
        by_doc.setdefault(record.doc_id, []).append(record)

    out: list[AugmentedRecord] = []
    for sample in corpus.samples:
        doc_id = sample.document.doc_id
        extras = sorted(by_doc.get(doc_id, ()),
                        key=lambda r: (r.head_id, r.tail_id, r.relation))
        for record in extras:
            for entity_id in (record.head_id, record.tail_id):
                if not sample.has_entity(entity_id):
                    raise ValueError(
                        f"synthetic record for {doc_id!r} references unknown "
                        f"entity {entity_id!r}")
        converted = [
            AugmentedRecord(r.doc_id, r.head_id, r.tail_id, r.relation,
                            r.summary, PROVENANCE_SYNTHETIC)
            for r in extras
        ]
        out.extend(merge_sample(split_sample(sample), converted))
    return tuple(out)


def save_dataset(records: Iterable[AugmentedRecord]) -> str:
    lines = [
        json.dumps({
            "doc_id": r.doc_id, "head_id": r.head_id, "tail_id": r.tail_id,
            "relation": r.relation, "text": r.text, "provenance": r.provenance,
        }, sort_keys=True, ensure_ascii=False)
        for r in records
    ]
    return "\n".join(lines) + ("\n" if lines else "")


def load_dataset(text: str) -> tuple[AugmentedRecord, ...]:
    records = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
            records.append(AugmentedRecord(
                row["doc_id"], row["head_id"], row["tail_id"],
                row["relation"], row["text"], row["provenance"]))
        except (ValueError, KeyError, TypeError) as exc:
            raise ValueError(f"line {line_no}: bad dataset record: {exc}")
    return tuple(records)


@dataclass(frozen=True)
class FinetunePreset:
    """Adapter hyperparameters for one benchmark configuration."""

    name: str
    lora_rank: int
    lora_alpha: int
    learning_rate: float = DEFAULT_LEARNING_RATE
    lora_dropout: float = DEFAULT_LORA_DROPOUT
    base_model_id: str = BASE_MODEL_ID


PRESETS: Mapping[str, FinetunePreset] = {
    "cdr": FinetunePreset("cdr", lora_rank=16, lora_alpha=32),
    "gda": FinetunePreset("gda", lora_rank=64, lora_alpha=16),
    "biored": FinetunePreset("biored", lora_rank=64, lora_alpha=16),
}


def preset_for(name: str) -> FinetunePreset:
    try:
        return PRESETS[name.lower()]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")


@dataclass(frozen=True)
class FinetuneExport:
    rows: tuple[dict, ...]
    sidecar: dict


def _negative_pool(corpus: Corpus) -> list[tuple[str, str, str]]:
    pool = []
    for sample in corpus.samples:
        for head_id, tail_id, label in enumerate_candidate_pairs(sample, corpus.schema):
            if label == corpus.schema.none_label:
                pool.append((sample.document.doc_id, head_id, tail_id))
    return sorted(pool)


def export_finetune(corpus: Corpus, records: Sequence[AugmentedRecord],
                    preset: FinetunePreset, *, iors_beta: int = DEFAULT_BETA,
                    negative_ratio: float = 1.0, seed: int = 0,
                    instruction_template: str | None = None) -> FinetuneExport:
    """Render instruction rows for adapter training plus a settings sidecar.

    Positive rows come from the augmented records. Negatives are drawn
    without replacement from the corpus's unrelated candidate pairs, at
    ``negative_ratio`` times the positive count (capped by pool size), with
    a seeded generator so exports reproduce exactly.
    """
    if negative_ratio < 0:
        raise ValueError("negative_ratio must be >= 0")
    samples = {s.document.doc_id: s for s in corpus.samples}
    instruction = build_instruction(corpus.schema, instruction_template)

    keyed_rows: list[tuple[tuple, dict]] = []
    for record in records:
        sample = samples.get(record.doc_id)
        if sample is None:
            raise ValueError(f"record for unknown document {record.doc_id!r}")
        row = {
            "instruction": instruction,
            "input": build_task_input(
                record.text,
                sample.entity(record.head_id).canonical_name,
                sample.entity(record.tail_id).canonical_name),
            "output": record.relation,
        }
        keyed_rows.append(
            ((record.doc_id, record.provenance, record.head_id, record.tail_id), row))

    counts = {
        PROVENANCE_ORIGINAL: sum(1 for r in records if r.provenance == PROVENANCE_ORIGINAL),
        PROVENANCE_SYNTHETIC: sum(1 for r in records if r.provenance == PROVENANCE_SYNTHETIC),
    }
    pool = _negative_pool(corpus)
    want = min(len(pool), round(negative_ratio * len(records)))
    chosen = random.Random(seed).sample(pool, want) if want else []
    for doc_id, head_id, tail_id in chosen:
        sample = samples[doc_id]
        row = {
            "instruction": instruction,
            "input": build_task_input(
                sample.document.text,
                sample.entity(head_id).canonical_name,
                sample.entity(tail_id).canonical_name),
            "output": corpus.schema.none_label,
        }
        keyed_rows.append(((doc_id, "negative", head_id, tail_id), row))
    counts["negative"] = len(chosen)

    keyed_rows.sort(key=lambda pair: pair[0])
    rows = tuple(row for _, row in keyed_rows)
    sidecar = {
        "preset": preset.name,
        "base_model_id": preset.base_model_id,
        "lora_rank": preset.lora_rank,
        "lora_alpha": preset.lora_alpha,
        "learning_rate": preset.learning_rate,
        "lora_dropout": preset.lora_dropout,
        "iors_beta": iors_beta,
        "negative_ratio": negative_ratio,
        "seed": seed,
        "row_counts": {**counts, "total": len(rows)},
        "dataset_fingerprint": fingerprint_rows(rows),
    }
    return FinetuneExport(rows, sidecar)


def save_finetune_rows(rows: Iterable[dict]) -> str:
    lines = [json.dumps(row, sort_keys=True, ensure_ascii=False) for row in rows]
    return "\n".join(lines) + ("\n" if lines else "")


def fingerprint_rows(rows: Iterable[dict]) -> str:
    return hashlib.sha256(save_finetune_rows(rows).encode("utf-8")).hexdigest()
