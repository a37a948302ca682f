"""Relation inference over candidate entity pairs.

For each candidate pair the prompt carries the instruction (with the label
inventory), the source document, any retrieved KB snippets for the pair's
concepts, and the two entity names. The model's raw reply is mapped back
onto a schema label; replies that name no label at all fall back to the
negative label and are flagged rather than dropped.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

from .corpus import Corpus, enumerate_candidate_pairs
from .iors import normalize_relation_label
from .kb import CuiIndex, RetrievedSnippet, retrieve
from .llm import LlmGateway, user_exchange
from .model import Entity, RelationSchema, TrainingSample
from .templating import load_default, render, require_placeholders

RAG_MODES = ("cui", "chunks", "off")


@dataclass(frozen=True)
class InferenceConfig:
    """How prompts are built and retrieval is wired for prediction.

    ``rag_mode`` selects full concept-scoped retrieval ("cui"), similarity
    over all chunks with no concept scoping ("chunks"), or no retrieval at
    all ("off").
    """

    instruction: str | None = None
    k: int = 5
    rag_mode: str = "cui"
    temperature: float = 0.0
    max_tokens: int = 64
    model_id: str = "default"

    def __post_init__(self) -> None:
        if self.rag_mode not in RAG_MODES:
            raise ValueError(f"rag_mode must be one of {RAG_MODES}")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.instruction is None:
            object.__setattr__(self, "instruction",
                               load_default("inference_instruction"))
        require_placeholders(self.instruction, ("labels",))


def build_instruction(schema: RelationSchema, template: str | None = None) -> str:
    template = template if template is not None else load_default("inference_instruction")
    require_placeholders(template, ("labels",))
    return render(template, labels=", ".join(schema.labels)).strip()


def build_task_input(text: str, head_name: str, tail_name: str,
                     snippets: Sequence[RetrievedSnippet] = ()) -> str:
    """The input half of a prompt: document, optional snippets, entities."""
    parts = ["Document:\n" + text]
    if snippets:
        lines = [
            f"[{i}] ({s.source}, {s.cui}) {s.text}"
            for i, s in enumerate(snippets, start=1)
        ]
        parts.append("Relevant snippets:\n" + "\n".join(lines))
    parts.append(f"Head entity: {head_name}\nTail entity: {tail_name}")
    return "\n\n".join(parts)


def assemble_prompt(instruction: str, text: str, head_name: str, tail_name: str,
                    snippets: Sequence[RetrievedSnippet] = ()) -> str:
    return instruction + "\n\n" + build_task_input(text, head_name, tail_name, snippets)


def pair_query_text(schema: RelationSchema, head: Entity, tail: Entity) -> str:
    return f"{head.canonical_name} {tail.canonical_name} {' '.join(schema.labels)}"


def parse_relation_output(raw: str, schema: RelationSchema) -> tuple[str, bool]:
    """Map a raw model reply onto a label.

    Exact (normalized) matches win. Otherwise the earliest whole-word
    occurrence of any label or alias in the reply is used, preferring the
    longest match at the same position. If nothing matches, the negative
    label is returned with the unparseable flag set.
    """
    exact = normalize_relation_label(raw, schema)
    if exact is not None:
        return exact, False
    surface_to_label = {label: label for label in schema.labels}
    surface_to_label.update(schema.aliases)
    best: tuple[int, int, str] | None = None
    for surface, label in surface_to_label.items():
        pattern = re.compile(rf"\b{re.escape(surface)}\b", re.IGNORECASE)
        match = pattern.search(raw)
        if match is None:
            continue
        key = (match.start(), -len(surface))
        if best is None or key < (best[0], best[1]):
            best = (key[0], key[1], label)
    if best is not None:
        return best[2], False
    return schema.none_label, True


@dataclass(frozen=True)
class PredictionRecord:
    doc_id: str
    head_id: str
    tail_id: str
    label: str
    raw_output: str
    snippets_used: tuple[str, ...]
    unparseable: bool


def retrieve_for_pair(gateway: LlmGateway, index: CuiIndex | None,
                      schema: RelationSchema, head: Entity, tail: Entity,
                      config: InferenceConfig) -> list[RetrievedSnippet]:
    if config.rag_mode == "off" or index is None:
        return []
    query_vec = gateway.embed_one(pair_query_text(schema, head, tail))
    return retrieve(index, query_vec, head, tail, k=config.k,
                    cui_scoped=config.rag_mode == "cui")


def predict_pair(gateway: LlmGateway, index: CuiIndex | None,
                 sample: TrainingSample, head_id: str, tail_id: str,
                 schema: RelationSchema,
                 config: InferenceConfig | None = None) -> PredictionRecord:
    config = config if config is not None else InferenceConfig()
    head = sample.entity(head_id)
    tail = sample.entity(tail_id)
    snippets = retrieve_for_pair(gateway, index, schema, head, tail, config)
    prompt = assemble_prompt(
        build_instruction(schema, config.instruction), sample.document.text,
        head.canonical_name, tail.canonical_name, snippets)
    raw = gateway.chat(user_exchange(
        prompt, temperature=config.temperature,
        model_id=config.model_id, max_tokens=config.max_tokens))
    label, unparseable = parse_relation_output(raw, schema)
    return PredictionRecord(
        sample.document.doc_id, head_id, tail_id, label, raw,
        tuple(s.chunk_id for s in snippets), unparseable)


def predict_corpus(gateway: LlmGateway, index: CuiIndex | None, corpus: Corpus,
                   config: InferenceConfig | None = None,
                   on_progress: Callable[[str, int, int], None] | None = None,
                   ) -> list[PredictionRecord]:
    """Predict a label for every candidate pair, in canonical order.

    The request stream is a pure function of corpus, index, and config,
    so reruns replay through the gateway cache and an interrupted run
    resumes where it stopped.
    """
    config = config if config is not None else InferenceConfig()
    jobs = [
        (sample, head_id, tail_id)
        for sample in corpus.samples
        for head_id, tail_id, _ in enumerate_candidate_pairs(sample, corpus.schema)
    ]
    predictions: list[PredictionRecord] = []
    for i, (sample, head_id, tail_id) in enumerate(jobs, start=1):
        if on_progress is not None:
            on_progress(sample.document.doc_id, i, len(jobs))
        predictions.append(predict_pair(
            gateway, index, sample, head_id, tail_id, corpus.schema, config))
    return predictions


def save_predictions(predictions: Iterable[PredictionRecord]) -> str:
    lines = [
        json.dumps({
            "doc_id": p.doc_id, "head_id": p.head_id, "tail_id": p.tail_id,
            "label": p.label, "raw_output": p.raw_output,
            "snippets_used": list(p.snippets_used), "unparseable": p.unparseable,
        }, sort_keys=True, ensure_ascii=False)
        for p in predictions
    ]
    return "\n".join(lines) + ("\n" if lines else "")


def load_predictions(text: str) -> tuple[PredictionRecord, ...]:
    records = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
            records.append(PredictionRecord(
                row["doc_id"], row["head_id"], row["tail_id"], row["label"],
                row["raw_output"], tuple(row["snippets_used"]),
                bool(row["unparseable"])))
        except (ValueError, KeyError, TypeError) as exc:
            raise ValueError(f"line {line_no}: bad prediction record: {exc}")
    return tuple(records)
