"""Shared fixtures: sample builders and the packaged toy pipeline pieces."""

from __future__ import annotations

import pytest

from adrcm.corpus import builtin_schema, parse_pubtator
from adrcm.kb import build_index, load_kb
from adrcm.llm import HashingEmbedder
from adrcm.mock import TOY_CHUNK_PARAMS, load_toy_assets
from adrcm.model import Document, Entity, Mention, TrainingSample, Triplet


def make_sample(doc_id: str, sentences: list[str],
                entities: list[tuple[str, str, list[tuple[int, str]]]],
                triplets: list[tuple[str, str, str]] = (),
                dataset_tag: str = "CDR") -> TrainingSample:
    """Build a consistent sample from sentence strings and mention specs.

    Each entity is (entity_id, etype, [(sentence_index, surface), ...]);
    the surface must occur inside that sentence. Offsets and sentence
    ranges are computed here so tests never hand-maintain them.
    """
    text = " ".join(sentences)
    ranges: list[tuple[int, int]] = []
    pos = 0
    for i, sentence in enumerate(sentences):
        end = pos + len(sentence)
        if i + 1 < len(sentences):
            end += 1
        ranges.append((pos, end))
        pos = end
    built = []
    for entity_id, etype, mentions in entities:
        ms = []
        for sent_idx, surface in mentions:
            start, end = ranges[sent_idx]
            at = text.find(surface, start, end)
            if at < 0:
                raise AssertionError(f"{surface!r} not in sentence {sent_idx}")
            ms.append(Mention(surface, sent_idx, (at, at + len(surface))))
        built.append(Entity(entity_id, etype, ms[0].surface, tuple(ms)))
    title = sentences[0]
    body = " ".join(sentences[1:])
    doc = Document(doc_id, title, body, tuple(ranges), dataset_tag)
    return TrainingSample(doc, tuple(built),
                          tuple(Triplet(h, t, r) for h, t, r in triplets))


@pytest.fixture(scope="session")
def cdr_schema():
    return builtin_schema("cdr")


@pytest.fixture(scope="session")
def toy_corpus(cdr_schema):
    pubtator, cui_map, _ = load_toy_assets()
    return parse_pubtator(pubtator, cdr_schema, cui_map=cui_map, dataset_tag="CDR")


@pytest.fixture(scope="session")
def toy_kb_docs():
    _, _, kb_text = load_toy_assets()
    return load_kb(kb_text)


@pytest.fixture(scope="session")
def toy_index(toy_kb_docs):
    return build_index(toy_kb_docs, HashingEmbedder(), params=TOY_CHUNK_PARAMS)
