"""Knowledge-base snapshot index: CUI-scoped chunk retrieval.

A KB snapshot is a JSONL file of short concept articles, each tied to a
CUI. Articles are chunked with token-window overlap, chunks are embedded,
and everything is kept in a two-layer index: concept (CUI) to article, and
article to chunks. At query time retrieval is scoped to the CUIs of the
two entities in question, so snippets about unrelated concepts never make
it into the prompt. Articles can also be reached by exact title match as
a fallback for entities without a CUI.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .model import CUI_PATTERN, Entity

_TOKEN = re.compile(r"\S+")

DEFAULT_CHUNK_SIZE = 256
DEFAULT_CHUNK_OVERLAP = 32
MIN_TAIL_TOKENS = 16


@dataclass(frozen=True)
class KbDocument:
    """One KB article about a single concept."""

    cui: str
    source: str
    title: str
    text: str

    def __post_init__(self) -> None:
        if not CUI_PATTERN.fullmatch(self.cui):
            raise ValueError(f"bad CUI: {self.cui!r}")
        for name in ("source", "title", "text"):
            if not getattr(self, name).strip():
                raise ValueError(f"KB document field {name!r} is empty")

    @property
    def doc_id(self) -> str:
        return f"{self.cui}|{self.source}|{self.title}"


def load_kb(text: str) -> tuple[KbDocument, ...]:
    """Parse a KB snapshot JSONL string; duplicate articles are an error."""
    docs: list[KbDocument] = []
    seen: set[str] = set()
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
            doc = KbDocument(row["cui"], row["source"], row["title"], row["text"])
        except (ValueError, KeyError, TypeError) as exc:
            raise ValueError(f"line {line_no}: bad KB record: {exc}")
        if doc.doc_id in seen:
            raise ValueError(f"line {line_no}: duplicate KB article {doc.doc_id!r}")
        seen.add(doc.doc_id)
        docs.append(doc)
    return tuple(docs)


def save_kb(docs: Iterable[KbDocument]) -> str:
    lines = [
        json.dumps({"cui": d.cui, "source": d.source, "title": d.title, "text": d.text},
                   sort_keys=True, ensure_ascii=False)
        for d in docs
    ]
    return "\n".join(lines) + ("\n" if lines else "")


@dataclass(frozen=True)
class ChunkParams:
    size: int = DEFAULT_CHUNK_SIZE
    overlap: int = DEFAULT_CHUNK_OVERLAP
    min_tail: int = MIN_TAIL_TOKENS

    def __post_init__(self) -> None:
        if self.size < 1:
            raise ValueError("chunk size must be >= 1")
        if not 0 <= self.overlap < self.size:
            raise ValueError("overlap must satisfy 0 <= overlap < size")
        if self.min_tail < 1:
            raise ValueError("min_tail must be >= 1")


def chunk_text(text: str, params: ChunkParams | None = None) -> list[str]:
    """Split text into overlapping windows of whitespace tokens.

    Windows advance by ``size - overlap`` tokens. A final window shorter
    than ``min_tail`` tokens is merged into the previous one instead of
    standing alone. Each chunk is the original substring from its first
    to its last token, so no characters are invented or lost inside it.
    """
    params = params if params is not None else ChunkParams()
    spans = [m.span() for m in _TOKEN.finditer(text)]
    if not spans:
        return []
    n = len(spans)
    stride = params.size - params.overlap
    starts = [0]
    while starts[-1] + params.size < n:
        starts.append(starts[-1] + stride)
    windows = [(s, min(s + params.size, n)) for s in starts]
    if len(windows) >= 2 and windows[-1][1] - windows[-1][0] < params.min_tail:
        last = windows.pop()
        prev = windows.pop()
        windows.append((prev[0], last[1]))
    return [text[spans[s][0]:spans[e - 1][1]] for s, e in windows]


@dataclass(frozen=True)
class Chunk:
    chunk_id: str
    doc_id: str
    cui: str
    source: str
    title: str
    text: str
    vector: np.ndarray = field(repr=False, compare=False)


@dataclass
class CuiIndex:
    """Two-layer retrieval index: CUI to articles, article to chunks."""

    dimension: int
    params: ChunkParams
    documents: dict[str, KbDocument]
    chunks: dict[str, Chunk]
    doc_chunks: dict[str, tuple[str, ...]]
    by_cui: dict[str, tuple[str, ...]]
    by_title: dict[str, tuple[str, ...]]
    fingerprint: str

    def __len__(self) -> int:
        return len(self.chunks)


def _index_fingerprint(dimension: int, params: ChunkParams,
                       chunks: Sequence[Chunk]) -> str:
    digest = hashlib.sha256()
    digest.update(f"{dimension}|{params.size}|{params.overlap}|{params.min_tail}".encode())
    for chunk in sorted(chunks, key=lambda c: c.chunk_id):
        digest.update(chunk.chunk_id.encode("utf-8"))
        digest.update(chunk.text.encode("utf-8"))
    return digest.hexdigest()


def build_index(docs: Sequence[KbDocument], gateway, *,
                params: ChunkParams | None = None) -> CuiIndex:
    """Chunk and embed KB articles into a fresh index.

    ``gateway`` only needs an ``embed_batch`` method. Articles are
    processed in doc_id order so the result is reproducible for a given
    embedder.
    """
    params = params if params is not None else ChunkParams()
    ordered = sorted(docs, key=lambda d: d.doc_id)
    ids = [d.doc_id for d in ordered]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate KB article ids")

    documents: dict[str, KbDocument] = {}
    texts: list[str] = []
    pending: list[tuple[str, str]] = []
    for doc in ordered:
        documents[doc.doc_id] = doc
        for i, piece in enumerate(chunk_text(doc.text, params)):
            pending.append((doc.doc_id, f"{doc.doc_id}#{i:04d}"))
            texts.append(piece)
    if not texts:
        raise ValueError("KB snapshot produced no chunks")
    vectors = gateway.embed_batch(texts)
    dimension = int(vectors[0].shape[0])

    chunks: dict[str, Chunk] = {}
    doc_chunks: dict[str, list[str]] = {d: [] for d in documents}
    for (doc_id, chunk_id), text, vec in zip(pending, texts, vectors):
        doc = documents[doc_id]
        chunks[chunk_id] = Chunk(chunk_id, doc_id, doc.cui, doc.source,
                                 doc.title, text, vec)
        doc_chunks[doc_id].append(chunk_id)

    by_cui: dict[str, list[str]] = {}
    by_title: dict[str, list[str]] = {}
    for doc_id, doc in documents.items():
        by_cui.setdefault(doc.cui, []).append(doc_id)
        by_title.setdefault(doc.title.casefold(), []).append(doc_id)

    return CuiIndex(
        dimension=dimension,
        params=params,
        documents=documents,
        chunks=chunks,
        doc_chunks={k: tuple(sorted(v)) for k, v in doc_chunks.items()},
        by_cui={k: tuple(sorted(v)) for k, v in sorted(by_cui.items())},
        by_title={k: tuple(sorted(v)) for k, v in sorted(by_title.items())},
        fingerprint=_index_fingerprint(dimension, params, list(chunks.values())),
    )


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    norm_a = float(np.linalg.norm(a))
    norm_b = float(np.linalg.norm(b))
    if norm_a == 0.0 or norm_b == 0.0:
        raise ValueError("cosine undefined for zero vector")
    return float(np.dot(a, b) / (norm_a * norm_b))


@dataclass(frozen=True)
class RetrievedSnippet:
    chunk_id: str
    doc_id: str
    cui: str
    source: str
    title: str
    text: str
    score: float


def _scope_doc_ids(index: CuiIndex, entity: Entity) -> list[str]:
    if entity.cui is not None:
        return list(index.by_cui.get(entity.cui, ()))
    return list(index.by_title.get(entity.canonical_name.casefold(), ()))


def candidate_chunk_ids(index: CuiIndex, head: Entity, tail: Entity, *,
                        cui_scoped: bool = True) -> list[str]:
    """Chunk ids eligible for a pair query, sorted for determinism."""
    if not cui_scoped:
        return sorted(index.chunks)
    doc_ids: set[str] = set()
    for entity in (head, tail):
        doc_ids.update(_scope_doc_ids(index, entity))
    out: set[str] = set()
    for doc_id in doc_ids:
        out.update(index.doc_chunks[doc_id])
    return sorted(out)


def retrieve(index: CuiIndex, query_vec: np.ndarray, head: Entity, tail: Entity,
             *, k: int = 5, cui_scoped: bool = True) -> list[RetrievedSnippet]:
    """Rank eligible chunks by cosine similarity to the query vector.

    Ties are broken by chunk id so results are stable. An empty scope
    (no article for either entity) yields an empty list rather than
    falling back to the whole index.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    scored = []
    for chunk_id in candidate_chunk_ids(index, head, tail, cui_scoped=cui_scoped):
        chunk = index.chunks[chunk_id]
        scored.append((cosine(query_vec, chunk.vector), chunk))
    scored.sort(key=lambda pair: (-pair[0], pair[1].chunk_id))
    return [
        RetrievedSnippet(c.chunk_id, c.doc_id, c.cui, c.source, c.title, c.text, score)
        for score, c in scored[:k]
    ]


def save_index(index: CuiIndex) -> str:
    """Serialize an index to a single JSONL string."""
    lines = [json.dumps({
        "kind": "header",
        "dimension": index.dimension,
        "params": {"size": index.params.size, "overlap": index.params.overlap,
                   "min_tail": index.params.min_tail},
        "fingerprint": index.fingerprint,
    }, sort_keys=True)]
    for doc_id in sorted(index.documents):
        doc = index.documents[doc_id]
        lines.append(json.dumps({
            "kind": "doc", "cui": doc.cui, "source": doc.source,
            "title": doc.title, "text": doc.text,
        }, sort_keys=True, ensure_ascii=False))
    for chunk_id in sorted(index.chunks):
        chunk = index.chunks[chunk_id]
        lines.append(json.dumps({
            "kind": "chunk", "chunk_id": chunk.chunk_id, "doc_id": chunk.doc_id,
            "text": chunk.text, "vector": [float(x) for x in chunk.vector],
        }, sort_keys=True, ensure_ascii=False))
    return "\n".join(lines) + "\n"


def load_index(text: str) -> CuiIndex:
    lines = [line for line in text.splitlines() if line.strip()]
    if not lines:
        raise ValueError("empty index file")
    header = json.loads(lines[0])
    if header.get("kind") != "header":
        raise ValueError("index file must start with a header record")
    params = ChunkParams(**header["params"])
    dimension = int(header["dimension"])

    documents: dict[str, KbDocument] = {}
    chunks: dict[str, Chunk] = {}
    doc_chunks: dict[str, list[str]] = {}
    for line_no, line in enumerate(lines[1:], start=2):
        row = json.loads(line)
        kind = row.get("kind")
        if kind == "doc":
            doc = KbDocument(row["cui"], row["source"], row["title"], row["text"])
            if doc.doc_id in documents:
                raise ValueError(f"line {line_no}: duplicate article {doc.doc_id!r}")
            documents[doc.doc_id] = doc
            doc_chunks[doc.doc_id] = []
        elif kind == "chunk":
            doc = documents.get(row["doc_id"])
            if doc is None:
                raise ValueError(f"line {line_no}: chunk references unknown article")
            vec = np.asarray(row["vector"], dtype=np.float64)
            if vec.shape != (dimension,):
                raise ValueError(f"line {line_no}: expected {dimension}-dim vector")
            chunk = Chunk(row["chunk_id"], doc.doc_id, doc.cui, doc.source,
                          doc.title, row["text"], vec)
            if chunk.chunk_id in chunks:
                raise ValueError(f"line {line_no}: duplicate chunk {chunk.chunk_id!r}")
            chunks[chunk.chunk_id] = chunk
            doc_chunks[doc.doc_id].append(chunk.chunk_id)
        else:
            raise ValueError(f"line {line_no}: unknown record kind {kind!r}")

    by_cui: dict[str, list[str]] = {}
    by_title: dict[str, list[str]] = {}
    for doc_id, doc in documents.items():
        by_cui.setdefault(doc.cui, []).append(doc_id)
        by_title.setdefault(doc.title.casefold(), []).append(doc_id)

    index = CuiIndex(
        dimension=dimension,
        params=params,
        documents=documents,
        chunks=chunks,
        doc_chunks={k: tuple(sorted(v)) for k, v in doc_chunks.items()},
        by_cui={k: tuple(sorted(v)) for k, v in sorted(by_cui.items())},
        by_title={k: tuple(sorted(v)) for k, v in sorted(by_title.items())},
        fingerprint=header["fingerprint"],
    )
    expected = _index_fingerprint(dimension, params, list(chunks.values()))
    if expected != index.fingerprint:
        raise ValueError("index fingerprint does not match its contents")
    return index
