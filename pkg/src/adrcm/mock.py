"""Fully offline end-to-end pipeline over the packaged toy corpus.

The mock run wires every stage together with a scripted chat backend and
the hashing embedder. Replies are a pure function of request content: the
script is compiled up front by walking the exact prompts the pipeline will
issue and keying canned replies by request hash. Reruns therefore produce
byte-identical artifacts, and an interrupted run resumes through the
gateway's reply cache.
"""

from __future__ import annotations

import hashlib
import json
import os
from importlib import resources

from .corpus import Corpus, builtin_schema, enumerate_candidate_pairs, parse_cui_map, parse_pubtator, save_corpus
from .dataset import build_dataset, export_finetune, preset_for, save_dataset, save_finetune_rows
from .evaluate import compute_report, render_report, save_report
from .files import atomic_write_text
from .infer import (
    InferenceConfig,
    assemble_prompt,
    build_instruction,
    pair_query_text,
    predict_corpus,
    save_predictions,
)
from .iors import (
    IorsConfig,
    build_confirmation_prompt,
    build_summary_prompt,
    positive_triplets,
    run_corpus_synthesis,
    save_synthetic,
)
from .kb import ChunkParams, CuiIndex, build_index, load_kb, retrieve, save_index
from .llm import HashingEmbedder, LlmGateway, RetryPolicy, ScriptedBackend, exchange_key, user_exchange

TOY_CHUNK_PARAMS = ChunkParams(size=48, overlap=8, min_tail=8)

_CONFIRM_REJECT = "These could be unrelated."
_UNPARSEABLE_REPLY = "The text does not make this clear."


def load_toy_assets() -> tuple[str, dict[str, str], str]:
    """The packaged toy inputs: PubTator text, CUI map, KB snapshot text."""
    root = resources.files("adrcm.data.toy")
    pubtator = root.joinpath("toy_corpus.pubtator").read_text(encoding="utf-8")
    cui_map = parse_cui_map(root.joinpath("toy_cui_map.tsv").read_text(encoding="utf-8"))
    kb_text = root.joinpath("toy_kb.jsonl").read_text(encoding="utf-8")
    return pubtator, cui_map, kb_text


def _digest(*parts: str) -> int:
    blob = "|".join(parts).encode("utf-8")
    return int.from_bytes(hashlib.sha256(blob).digest()[:8], "big")


def _summary_reply(doc_id: str, head: str, tail: str, relation: str, round_no: int) -> str:
    return (f"In document {doc_id}, {head} is reported to stand in the "
            f"{relation} relation to {tail} (draft {round_no}).")


def _styled_label(label: str, style: int) -> str:
    if style == 0:
        return label
    if style == 1:
        return f"The relation is {label}."
    return label.lower() + "."


def _confirm_reply(schema, label: str, style: int) -> str:
    # Confirmation matching is exact-normalize only, so every variant here
    # must normalize back to the label on its own.
    if style == 1:
        return label.lower() + "."
    if style == 2:
        for alias, target in sorted(schema.aliases.items()):
            if target == label:
                return alias
    return label


def build_mock_script(corpus: Corpus, index: CuiIndex | None,
                      iors_config: IorsConfig,
                      infer_config: InferenceConfig) -> dict[str, str]:
    """Compile request-hash -> reply for every chat call the pipeline makes.

    Synthesis: each positive triplet fails a content-derived number of
    rounds (possibly all of them) before the confirmation accepts.
    Inference: most pairs answer with the gold label in varied phrasings;
    a slice answer wrongly and a slice are deliberately unparseable.
    """
    schema = corpus.schema
    script: dict[str, str] = {}
    embedder = HashingEmbedder()

    for sample in corpus.samples:
        doc = sample.document
        for triplet in positive_triplets(sample, schema):
            head = sample.entity(triplet.head_id)
            tail = sample.entity(triplet.tail_id)
            fail_rounds = _digest("synth", doc.doc_id, triplet.head_id,
                                  triplet.tail_id) % 4
            failures: list[str] = []
            for round_no in range(iors_config.beta):
                prompt = build_summary_prompt(doc, head, tail, triplet.relation,
                                              iors_config, failures)
                summary = _summary_reply(doc.doc_id, head.canonical_name,
                                         tail.canonical_name, triplet.relation,
                                         round_no + 1)
                script.setdefault(exchange_key(user_exchange(
                    prompt, temperature=iors_config.summary_temperature,
                    model_id=iors_config.model_id)), summary)
                check = build_confirmation_prompt(summary, head, tail, schema,
                                                  iors_config)
                accepted = round_no >= fail_rounds
                reply = _confirm_reply(schema, triplet.relation, round_no % 3) \
                    if accepted else _CONFIRM_REJECT
                script.setdefault(exchange_key(user_exchange(
                    check, temperature=iors_config.confirmation_temperature,
                    model_id=iors_config.model_id)), reply)
                if accepted:
                    break
                failures.append(summary)

    instruction = build_instruction(schema, infer_config.instruction)
    positives = schema.positive_labels
    for sample in corpus.samples:
        doc = sample.document
        for head_id, tail_id, gold in enumerate_candidate_pairs(sample, schema):
            head = sample.entity(head_id)
            tail = sample.entity(tail_id)
            if infer_config.rag_mode == "off" or index is None:
                snippets = []
            else:
                query_vec = embedder.embed_one(pair_query_text(schema, head, tail))
                snippets = retrieve(index, query_vec, head, tail,
                                    k=infer_config.k,
                                    cui_scoped=infer_config.rag_mode == "cui")
            prompt = assemble_prompt(instruction, doc.text, head.canonical_name,
                                     tail.canonical_name, snippets)
            roll = _digest("infer", doc.doc_id, head_id, tail_id)
            if roll % 10 == 9:
                reply = _UNPARSEABLE_REPLY
            elif roll % 10 in (7, 8):
                if gold == schema.none_label:
                    reply = positives[roll % len(positives)]
                else:
                    reply = schema.none_label
            else:
                reply = _styled_label(gold, (roll // 10) % 3)
            script.setdefault(exchange_key(user_exchange(
                prompt, temperature=infer_config.temperature,
                model_id=infer_config.model_id,
                max_tokens=infer_config.max_tokens)), reply)
    return script


def run_e2e_mock(workdir: str, *, beta: int = 3, k: int = 5,
                 rag_mode: str = "cui", seed: int = 0) -> dict[str, str]:
    """Run ingest, synthesis, dataset build, indexing, inference, and eval.

    Returns a name -> path map of the artifacts written under ``workdir``.
    Every stage recomputes deterministically; only chat replies go through
    the on-disk cache, which is what makes interrupted runs resumable.
    """
    os.makedirs(workdir, exist_ok=True)
    paths = {name: os.path.join(workdir, name) for name in (
        "corpus.jsonl", "mock_script.json", "synthetic.jsonl",
        "synth_report.json", "dataset.jsonl", "finetune.jsonl",
        "finetune_meta.json", "index.jsonl", "predictions.jsonl",
        "report.json",
    )}

    pubtator, cui_map, kb_text = load_toy_assets()
    schema = builtin_schema("cdr")
    corpus = parse_pubtator(pubtator, schema, cui_map=cui_map, dataset_tag="CDR")
    atomic_write_text(paths["corpus.jsonl"], save_corpus(corpus))

    index = build_index(load_kb(kb_text), HashingEmbedder(), params=TOY_CHUNK_PARAMS)
    atomic_write_text(paths["index.jsonl"], save_index(index))

    iors_config = IorsConfig(beta=beta)
    infer_config = InferenceConfig(k=k, rag_mode=rag_mode)
    script = build_mock_script(corpus, index if rag_mode != "off" else None,
                               iors_config, infer_config)
    atomic_write_text(paths["mock_script.json"],
                      json.dumps({"by_hash": script}, sort_keys=True, indent=2) + "\n")

    gateway = LlmGateway(
        ScriptedBackend(script), HashingEmbedder(),
        cache_dir=os.path.join(workdir, "cache"),
        retry=RetryPolicy(max_attempts=1, backoff_base=0.0),
        max_in_flight=1,
    )

    synthesis = run_corpus_synthesis(gateway, corpus, iors_config)
    atomic_write_text(paths["synthetic.jsonl"], save_synthetic(synthesis.records))
    atomic_write_text(paths["synth_report.json"], json.dumps({
        "accepted": synthesis.accepted_count,
        "discarded": synthesis.discarded_count,
        "discarded_pairs": [
            {"doc_id": d.doc_id, "head_id": d.head_id, "tail_id": d.tail_id,
             "relation": d.relation}
            for d in synthesis.discarded
        ],
        "errors": list(synthesis.errors),
        "summary_calls": synthesis.summary_calls,
        "confirmation_calls": synthesis.confirmation_calls,
    }, sort_keys=True, indent=2) + "\n")

    records = build_dataset(corpus, synthesis.records)
    atomic_write_text(paths["dataset.jsonl"], save_dataset(records))
    export = export_finetune(corpus, records, preset_for("cdr"),
                             iors_beta=beta, seed=seed)
    atomic_write_text(paths["finetune.jsonl"], save_finetune_rows(export.rows))
    atomic_write_text(paths["finetune_meta.json"],
                      json.dumps(export.sidecar, sort_keys=True, indent=2) + "\n")

    predictions = predict_corpus(gateway, index if rag_mode != "off" else None,
                                 corpus, infer_config)
    atomic_write_text(paths["predictions.jsonl"], save_predictions(predictions))

    report = compute_report(corpus, predictions)
    atomic_write_text(paths["report.json"], save_report(report))
    return paths


def describe_run(paths: dict[str, str]) -> str:
    with open(paths["report.json"], encoding="utf-8") as fh:
        report = json.load(fh)
    lines = ["artifacts:"]
    lines.extend(f"  {name}: {path}" for name, path in sorted(paths.items()))
    micro = report["micro"]
    lines.append(
        f"micro P/R/F1: {micro['precision']:.4f}/{micro['recall']:.4f}/{micro['f1']:.4f}"
    )
    return "\n".join(lines)
