"""Iterative re-summarization: turning gold triplets into synthetic summaries.

For every positive triplet we ask the chat model for a document summary
focused on that relation, then ask it (from the summary alone) which
relation holds. If the confirmed relation matches the gold one the summary
is kept; otherwise it is fed back as a "previous unsatisfactory summary"
and we try again, up to a bounded number of rounds. Triplets that never
confirm are discarded rather than kept as noisy data.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import json

from .corpus import Corpus
from .llm import LlmGateway, TransportError, user_exchange
from .model import Document, Entity, RelationSchema, TrainingSample, Triplet
from .templating import load_default, render, require_placeholders

DEFAULT_BETA = 3
DEFAULT_MAX_SUMMARY_CHARS = 4000
SUMMARY_TEMPERATURE = 0.7
CONFIRMATION_TEMPERATURE = 0.0

_TERMINAL_PUNCT = ".!?,;:\"'`"


@dataclass(frozen=True)
class IorsConfig:
    """Knobs for the synthesis loop.

    ``beta`` bounds the number of summary rounds per triplet. The two
    instruction templates may be replaced wholesale; the summary template
    must keep the head/tail/relation slots and the confirmation template
    the head/tail/labels slots. The confirmation template deliberately has
    no relation slot by default, so the checking step stays blind to the
    gold answer.
    """

    beta: int = DEFAULT_BETA
    summary_instruction: str | None = None
    confirmation_instruction: str | None = None
    max_summary_chars: int = DEFAULT_MAX_SUMMARY_CHARS
    summary_temperature: float = SUMMARY_TEMPERATURE
    confirmation_temperature: float = CONFIRMATION_TEMPERATURE
    model_id: str = "default"

    def __post_init__(self) -> None:
        if self.beta < 1:
            raise ValueError("beta must be >= 1")
        if self.max_summary_chars < 1:
            raise ValueError("max_summary_chars must be >= 1")
        if self.summary_instruction is None:
            object.__setattr__(self, "summary_instruction",
                               load_default("summary_instruction"))
        if self.confirmation_instruction is None:
            object.__setattr__(self, "confirmation_instruction",
                               load_default("confirmation_instruction"))
        require_placeholders(self.summary_instruction, ("head", "tail", "relation"))
        require_placeholders(self.confirmation_instruction, ("head", "tail", "labels"))


def build_summary_prompt(document: Document, head: Entity, tail: Entity,
                         relation: str, config: IorsConfig,
                         previous_summaries: Sequence[str] = ()) -> str:
    parts = [
        render(config.summary_instruction,
               head=head.canonical_name, tail=tail.canonical_name, relation=relation).strip(),
        "Document:\n" + document.text,
    ]
    if previous_summaries:
        numbered = "\n".join(
            f"{i}. {summary}" for i, summary in enumerate(previous_summaries, start=1)
        )
        parts.append("Previous unsatisfactory summaries:\n" + numbered)
    return "\n\n".join(parts)


def build_confirmation_prompt(summary: str, head: Entity, tail: Entity,
                              schema: RelationSchema, config: IorsConfig) -> str:
    instruction = render(config.confirmation_instruction,
                         head=head.canonical_name, tail=tail.canonical_name,
                         labels=", ".join(schema.labels)).strip()
    return instruction + "\n\nSummary:\n" + summary


def normalize_relation_label(raw: str, schema: RelationSchema) -> str | None:
    """Map a model reply onto a schema label, or None if it is not one."""
    text = raw.strip().strip(_TERMINAL_PUNCT).strip()
    folded = text.casefold()
    for label in schema.labels:
        if folded == label.casefold():
            return label
    for alias, label in schema.aliases.items():
        if folded == alias.casefold():
            return label
    return None


@dataclass(frozen=True)
class SynthesisResult:
    """Outcome of the loop for a single triplet."""

    accepted: bool
    summary: str | None
    iterations_used: int
    failures: tuple[str, ...]
    summary_calls: int
    confirmation_calls: int


def generate_synthetic(gateway: LlmGateway, document: Document, head: Entity,
                       tail: Entity, relation: str, schema: RelationSchema,
                       config: IorsConfig | None = None) -> SynthesisResult:
    """Run the re-summarization loop for one triplet.

    Each round costs one summary call and, unless the summary is empty or
    over the length cap, one confirmation call. A round whose confirmed
    relation matches ``relation`` ends the loop; otherwise its summary
    joins the failure list shown to the next round.
    """
    config = config if config is not None else IorsConfig()
    if relation not in schema.labels:
        raise ValueError(f"unknown relation label: {relation!r}")
    failures: list[str] = []
    summary_calls = 0
    confirmation_calls = 0
    for iteration in range(config.beta):
        prompt = build_summary_prompt(document, head, tail, relation, config, failures)
        summary = gateway.chat(user_exchange(
            prompt, temperature=config.summary_temperature,
            model_id=config.model_id)).strip()
        summary_calls += 1
        if not summary or len(summary) > config.max_summary_chars:
            failures.append(summary)
            continue
        check = build_confirmation_prompt(summary, head, tail, schema, config)
        reply = gateway.chat(user_exchange(
            check, temperature=config.confirmation_temperature,
            model_id=config.model_id))
        confirmation_calls += 1
        if normalize_relation_label(reply, schema) == relation:
            return SynthesisResult(True, summary, iteration + 1, tuple(failures),
                                   summary_calls, confirmation_calls)
        failures.append(summary)
    return SynthesisResult(False, None, config.beta, tuple(failures),
                           summary_calls, confirmation_calls)


@dataclass(frozen=True)
class SyntheticRecord:
    """An accepted summary, tied back to its source document and triplet."""

    doc_id: str
    head_id: str
    tail_id: str
    relation: str
    summary: str


@dataclass(frozen=True)
class DiscardedSynthesis:
    doc_id: str
    head_id: str
    tail_id: str
    relation: str
    failures: tuple[str, ...]


@dataclass(frozen=True)
class SynthesisReport:
    records: tuple[SyntheticRecord, ...]
    discarded: tuple[DiscardedSynthesis, ...]
    errors: tuple[str, ...]
    summary_calls: int
    confirmation_calls: int

    @property
    def accepted_count(self) -> int:
        return len(self.records)

    @property
    def discarded_count(self) -> int:
        return len(self.discarded)


def positive_triplets(sample: TrainingSample, schema: RelationSchema) -> list[Triplet]:
    """Gold triplets with a positive label, in canonical pair order."""
    kept = [t for t in sample.triplets if t.relation != schema.none_label]
    return sorted(kept, key=lambda t: (t.head_id, t.tail_id, t.relation))


def run_corpus_synthesis(gateway: LlmGateway, corpus: Corpus,
                         config: IorsConfig | None = None,
                         on_progress: Callable[[str, int, int], None] | None = None,
                         ) -> SynthesisReport:
    """Synthesize summaries for every positive triplet of every document.

    Documents are processed in corpus order and triplets in canonical
    order, so two runs over the same corpus issue identical requests.
    Transport failures that survive the gateway's retries skip just the
    affected triplet and are reported, not raised.
    """
    config = config if config is not None else IorsConfig()
    records: list[SyntheticRecord] = []
    discarded: list[DiscardedSynthesis] = []
    errors: list[str] = []
    summary_calls = 0
    confirmation_calls = 0
    total = sum(len(positive_triplets(s, corpus.schema)) for s in corpus.samples)
    done = 0
    for sample in corpus.samples:
        doc_id = sample.document.doc_id
        for triplet in positive_triplets(sample, corpus.schema):
            done += 1
            if on_progress is not None:
                on_progress(doc_id, done, total)
            try:
                result = generate_synthetic(
                    gateway, sample.document, sample.entity(triplet.head_id),
                    sample.entity(triplet.tail_id), triplet.relation,
                    corpus.schema, config)
            except TransportError as exc:
                errors.append(f"{doc_id}/{triplet.head_id}/{triplet.tail_id}: {exc}")
                continue
            summary_calls += result.summary_calls
            confirmation_calls += result.confirmation_calls
            if result.accepted:
                assert result.summary is not None
                records.append(SyntheticRecord(
                    doc_id, triplet.head_id, triplet.tail_id,
                    triplet.relation, result.summary))
            else:
                discarded.append(DiscardedSynthesis(
                    doc_id, triplet.head_id, triplet.tail_id,
                    triplet.relation, result.failures))
    return SynthesisReport(tuple(records), tuple(discarded), tuple(errors),
                           summary_calls, confirmation_calls)


def save_synthetic(records: Iterable[SyntheticRecord]) -> str:
    lines = [
        json.dumps({
            "doc_id": r.doc_id, "head_id": r.head_id, "tail_id": r.tail_id,
            "relation": r.relation, "summary": r.summary,
        }, sort_keys=True, ensure_ascii=False)
        for r in records
    ]
    return "\n".join(lines) + ("\n" if lines else "")


def load_synthetic(text: str) -> tuple[SyntheticRecord, ...]:
    records = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
            records.append(SyntheticRecord(
                row["doc_id"], row["head_id"], row["tail_id"],
                row["relation"], row["summary"]))
        except (ValueError, KeyError, TypeError) as exc:
            raise ValueError(f"line {line_no}: bad synthetic record: {exc}")
    return tuple(records)
