"""Corpus I/O: PubTator parsing, a normalized JSONL corpus format, candidate
pair enumeration, and sentence segmentation.

PubTator grammar accepted here:

    PMID|t|<title>
    PMID|a|<abstract>
    PMID<TAB>start<TAB>end<TAB>surface<TAB>type<TAB>identifier      (mention)
    PMID<TAB>label<TAB>id1<TAB>id2                                  (relation)

Blocks are separated by blank lines. Mention offsets address the
concatenation ``title + " " + abstract``.

The normalized corpus format is line-delimited JSON: a header object
carrying the schema name, label list, and dataset tag, followed by one
object per sample with the fields doc_id, title, body, sentences, entities,
triplets. Negative (no-relation) pairs are never stored; they are
materialized by :func:`enumerate_candidate_pairs`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources

from .model import (
    CUI_PATTERN,
    DATASET_TAGS,
    Document,
    Entity,
    Mention,
    RelationSchema,
    TrainingSample,
    Triplet,
    validate_sample,
)


class ParseError(ValueError):
    """Raised for malformed corpus files; carries a 1-based line number."""

    def __init__(self, message: str, line_no: int | None = None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


class SchemaMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class Corpus:
    """A relation schema plus the samples annotated under it.

    ``violations`` collects per-line anomalies tolerated during parsing
    (dropped relations, conflicting duplicates). It is diagnostic only and
    is not serialized.
    """

    schema: RelationSchema
    samples: tuple[TrainingSample, ...]
    violations: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self):
        ids = [s.document.doc_id for s in self.samples]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise ValueError(f"duplicate doc_ids in corpus: {dupes}")


# PubTator entity-type strings, normalized case-insensitively.
ETYPE_MAP = {
    "chemical": "chemical",
    "chemicalentity": "chemical",
    "disease": "disease",
    "diseaseorphenotypicfeature": "disease",
    "gene": "gene",
    "geneorgeneproduct": "gene",
    "sequencevariant": "variant",
    "variant": "variant",
    "mutation": "variant",
    "species": "species",
    "organismtaxon": "species",
    "cellline": "cell_line",
}

_UNLINKED_IDS = {"", "-1"}


def segment_sentences(text: str) -> list[tuple[int, int]]:
    """Split text into half-open sentence ranges.

    A sentence ends after '.', '!' or '?' followed by whitespace or
    end-of-text; trailing whitespace belongs to the sentence it follows, so
    the ranges concatenate back to the input exactly. A trailing segment
    without a terminator is its own sentence.
    """
    ranges: list[tuple[int, int]] = []
    n = len(text)
    start = 0
    i = 0
    while i < n:
        if text[i] in ".!?":
            j = i + 1
            if j >= n or text[j].isspace():
                while j < n and text[j].isspace():
                    j += 1
                ranges.append((start, j))
                start = j
                i = j
                continue
        i += 1
    if start < n:
        ranges.append((start, n))
    return ranges


def _fit_sentences_to_mentions(
    ranges: list[tuple[int, int]], spans: list[tuple[int, int]]
) -> list[tuple[int, int]]:
    # The terminator rule has no abbreviation dictionary, so a mention such
    # as "E. coli" can straddle a boundary; merge ranges until every span
    # fits inside one sentence.
    ranges = list(ranges)
    for m_start, m_end in sorted(spans):
        idx = next(
            (k for k, (s, e) in enumerate(ranges) if s <= m_start < e), None
        )
        if idx is None:
            continue
        while m_end > ranges[idx][1] and idx + 1 < len(ranges):
            ranges[idx] = (ranges[idx][0], ranges[idx + 1][1])
            del ranges[idx + 1]
    return ranges


def _sentence_index(ranges: list[tuple[int, int]], pos: int) -> int:
    for k, (s, e) in enumerate(ranges):
        if s <= pos < e:
            return k
    raise ValueError(f"position {pos} outside all sentences")


def parse_pubtator(
    content: str,
    schema: RelationSchema,
    cui_map: dict[str, str] | None = None,
    dataset_tag: str | None = None,
) -> Corpus:
    """Parse PubTator-formatted text into a normalized corpus.

    Mentions are grouped into entities by their dataset identifier; unlinked
    mentions (identifier ``-1`` or empty) are dropped. Relation lines whose
    identifiers never appear in mention lines become violation entries on
    the returned corpus rather than crashes. Structural problems (wrong
    field counts, offset/surface mismatches, unknown relation tags) raise
    :class:`ParseError` with the offending line number.
    """
    if dataset_tag is None:
        dataset_tag = {"cdr": "CDR", "gda": "GDA", "biored": "BioRED"}.get(
            schema.name, "custom"
        )
    cui_map = cui_map or {}

    samples: list[TrainingSample] = []
    violations: list[str] = []

    lines = content.split("\n")
    block: list[tuple[int, str]] = []
    for line_no, raw in enumerate(lines + [""], start=1):
        if raw.strip():
            block.append((line_no, raw))
            continue
        if block:
            samples.append(
                _parse_block(block, schema, cui_map, dataset_tag, violations)
            )
            block = []

    corpus = Corpus(schema=schema, samples=tuple(samples), violations=tuple(violations))
    for sample in corpus.samples:
        issues = validate_sample(sample, schema)
        if issues:
            raise ParseError(
                f"doc {sample.document.doc_id}: parsed sample violates invariants: "
                + "; ".join(issues)
            )
    return corpus


def _parse_block(
    block: list[tuple[int, str]],
    schema: RelationSchema,
    cui_map: dict[str, str],
    dataset_tag: str,
    violations: list[str],
) -> TrainingSample:
    line_no, first = block[0]
    if first.count("|") < 2:
        raise ParseError("expected 'PMID|t|<title>' line", line_no)
    pmid, tag, title = first.split("|", 2)
    if tag != "t" or not pmid:
        raise ParseError("expected 'PMID|t|<title>' line", line_no)

    body = ""
    rest = block[1:]
    if rest and f"{pmid}|a|" == rest[0][1][: len(pmid) + 3]:
        body = rest[0][1][len(pmid) + 3 :]
        rest = rest[1:]

    text = title + " " + body if body else title
    mention_rows: list[tuple[int, int, int, str, str, str]] = []
    relation_rows: list[tuple[int, str, str, str]] = []

    for ln, raw in rest:
        fields = raw.split("\t")
        if fields[0] != pmid:
            raise ParseError(f"annotation PMID {fields[0]!r} does not match block {pmid!r}", ln)
        if len(fields) == 6:
            _, start_s, end_s, surface, etype_s, identifier = fields
            try:
                start, end = int(start_s), int(end_s)
            except ValueError:
                raise ParseError(f"non-integer offsets ({start_s!r}, {end_s!r})", ln)
            if not (0 <= start < end <= len(text)):
                raise ParseError(f"mention span ({start}, {end}) outside document", ln)
            if text[start:end] != surface:
                raise ParseError(
                    f"mention span ({start}, {end}) reads {text[start:end]!r}, "
                    f"annotation says {surface!r}",
                    ln,
                )
            etype = ETYPE_MAP.get(etype_s.lower())
            if etype is None:
                raise ParseError(f"unknown entity type {etype_s!r}", ln)
            mention_rows.append((start, end, ln, surface, etype, identifier))
        elif len(fields) == 4:
            _, tag, id1, id2 = fields
            label = tag if tag in schema.labels else schema.aliases.get(tag.lower())
            if label is None:
                raise ParseError(f"unknown relation tag {tag!r}", ln)
            relation_rows.append((ln, label, id1, id2))
        else:
            raise ParseError(
                f"malformed line: expected 6 fields (mention) or 4 (relation), got {len(fields)}",
                ln,
            )

    sentences = _fit_sentences_to_mentions(
        segment_sentences(text), [(s, e) for s, e, *_ in mention_rows]
    )

    by_id: dict[str, list[tuple[int, int, str, str]]] = {}
    for start, end, ln, surface, etype, identifier in sorted(mention_rows):
        if identifier in _UNLINKED_IDS:
            continue
        by_id.setdefault(identifier, []).append((start, end, surface, etype))

    entities = []
    for identifier, rows in sorted(by_id.items()):
        etypes = {etype for *_, etype in rows}
        if len(etypes) > 1:
            violations.append(
                f"doc {pmid}: entity {identifier!r} annotated with multiple types "
                f"{sorted(etypes)}; keeping {rows[0][3]!r}"
            )
        entities.append(
            Entity(
                entity_id=identifier,
                etype=rows[0][3],
                canonical_name=rows[0][2],
                cui=cui_map.get(identifier),
                mentions=tuple(
                    Mention(
                        surface=surface,
                        sentence_index=_sentence_index(sentences, start),
                        char_range=(start, end),
                    )
                    for start, end, surface, _ in rows
                ),
            )
        )

    known = {e.entity_id for e in entities}
    triplets: list[Triplet] = []
    seen: dict[tuple[str, str], str] = {}
    for ln, label, id1, id2 in relation_rows:
        missing = [i for i in (id1, id2) if i not in known]
        if missing:
            violations.append(
                f"doc {pmid}: relation ({id1}, {id2}) references identifiers absent "
                f"from mention lines: {missing}; dropped"
            )
            continue
        if id1 == id2:
            violations.append(f"doc {pmid}: self-relation on {id1!r}; dropped")
            continue
        prev = seen.get((id1, id2))
        if prev is not None:
            if prev != label:
                violations.append(
                    f"doc {pmid}: conflicting labels for pair ({id1}, {id2}): "
                    f"{prev!r} kept, {label!r} dropped"
                )
            continue
        seen[(id1, id2)] = label
        triplets.append(Triplet(head_id=id1, tail_id=id2, relation=label))

    return TrainingSample(
        document=Document(
            doc_id=pmid,
            title=title,
            body=body,
            sentences=tuple(sentences),
            dataset_tag=dataset_tag,
        ),
        entities=tuple(entities),
        triplets=tuple(triplets),
    )


def save_corpus(corpus: Corpus) -> str:
    """Serialize a corpus to the normalized line-delimited format."""
    tag = (
        corpus.samples[0].document.dataset_tag
        if corpus.samples
        else {"cdr": "CDR", "gda": "GDA", "biored": "BioRED"}.get(
            corpus.schema.name, "custom"
        )
    )
    out = [
        json.dumps(
            {
                "schema": corpus.schema.name,
                "labels": list(corpus.schema.labels),
                "none_label": corpus.schema.none_label,
                "dataset_tag": tag,
            },
            sort_keys=True,
        )
    ]
    for sample in corpus.samples:
        out.append(
            json.dumps(
                {
                    "doc_id": sample.document.doc_id,
                    "title": sample.document.title,
                    "body": sample.document.body,
                    "sentences": [list(r) for r in sample.document.sentences],
                    "entities": [
                        {
                            "entity_id": e.entity_id,
                            "cui": e.cui,
                            "etype": e.etype,
                            "canonical_name": e.canonical_name,
                            "mentions": [
                                {
                                    "surface": m.surface,
                                    "sentence_index": m.sentence_index,
                                    "char_range": list(m.char_range),
                                }
                                for m in e.mentions
                            ],
                        }
                        for e in sample.entities
                    ],
                    "triplets": [
                        {"head_id": t.head_id, "tail_id": t.tail_id, "relation": t.relation}
                        for t in sample.triplets
                    ],
                },
                sort_keys=True,
            )
        )
    return "\n".join(out) + "\n"


def load_corpus(text: str, schema: RelationSchema | None = None) -> Corpus:
    """Load a corpus saved by :func:`save_corpus`.

    When ``schema`` is given, the file header must agree with it; otherwise
    the schema is resolved from the built-in registry by header name.
    """
    lines = [l for l in text.split("\n") if l.strip()]
    if not lines:
        raise ParseError("empty corpus file")
    header = json.loads(lines[0])
    for key in ("schema", "labels", "none_label", "dataset_tag"):
        if key not in header:
            raise ParseError(f"corpus header missing field {key!r}", 1)
    if header["dataset_tag"] not in DATASET_TAGS:
        raise ParseError(f"unknown dataset_tag {header['dataset_tag']!r}", 1)
    if schema is None:
        schema = builtin_schema(header["schema"])
    if header["schema"] != schema.name or list(schema.labels) != header["labels"]:
        raise SchemaMismatchError(
            f"corpus header declares schema {header['schema']!r} with labels "
            f"{header['labels']}, expected {schema.name!r} with {list(schema.labels)}"
        )

    samples = []
    for line_no, line in enumerate(lines[1:], start=2):
        try:
            obj = json.loads(line)
            samples.append(_sample_from_json(obj, header["dataset_tag"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"bad sample record: {exc}", line_no)
    return Corpus(schema=schema, samples=tuple(samples))


def _sample_from_json(obj: dict, dataset_tag: str) -> TrainingSample:
    return TrainingSample(
        document=Document(
            doc_id=obj["doc_id"],
            title=obj["title"],
            body=obj["body"],
            sentences=tuple(tuple(r) for r in obj["sentences"]),
            dataset_tag=dataset_tag,
        ),
        entities=tuple(
            Entity(
                entity_id=e["entity_id"],
                cui=e.get("cui"),
                etype=e["etype"],
                canonical_name=e["canonical_name"],
                mentions=tuple(
                    Mention(
                        surface=m["surface"],
                        sentence_index=m["sentence_index"],
                        char_range=tuple(m["char_range"]),
                    )
                    for m in e["mentions"]
                ),
            )
            for e in obj["entities"]
        ),
        triplets=tuple(
            Triplet(head_id=t["head_id"], tail_id=t["tail_id"], relation=t["relation"])
            for t in obj["triplets"]
        ),
    )


def enumerate_candidate_pairs(
    sample: TrainingSample, schema: RelationSchema
) -> list[tuple[str, str, str]]:
    """All ordered entity pairs with admissible types, with gold labels.

    Pairs carrying an annotated triplet get its label; every other pair gets
    the schema's none label. Output is sorted by (head_id, tail_id).
    """
    gold = {(t.head_id, t.tail_id): t.relation for t in sample.triplets}
    pairs = []
    for head in sample.entities:
        for tail in sample.entities:
            if head.entity_id == tail.entity_id:
                continue
            if (head.etype, tail.etype) not in schema.allowed_type_pairs:
                continue
            label = gold.get((head.entity_id, tail.entity_id), schema.none_label)
            pairs.append((head.entity_id, tail.entity_id, label))
    pairs.sort(key=lambda p: (p[0], p[1]))
    return pairs


def parse_cui_map(text: str) -> dict[str, str]:
    """Parse a two-column TSV mapping entity identifiers to CUIs."""
    mapping: dict[str, str] = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 2:
            raise ParseError("expected 'identifier<TAB>CUI'", line_no)
        identifier, cui = fields[0].strip(), fields[1].strip()
        if not identifier or not CUI_PATTERN.fullmatch(cui):
            raise ParseError(f"bad CUI mapping {identifier!r} -> {cui!r}", line_no)
        if identifier in mapping and mapping[identifier] != cui:
            raise ParseError(f"conflicting CUIs for {identifier!r}", line_no)
        mapping[identifier] = cui
    return mapping


def schema_from_dict(obj: dict) -> RelationSchema:
    return RelationSchema(
        name=obj["name"],
        labels=tuple(obj["labels"]),
        none_label=obj["none_label"],
        allowed_type_pairs=frozenset(tuple(p) for p in obj["allowed_type_pairs"]),
        aliases=dict(obj.get("aliases", {})),
    )


def schema_from_file(path: str) -> RelationSchema:
    with open(path, encoding="utf-8") as f:
        return schema_from_dict(json.load(f))


def builtin_schema(name: str) -> RelationSchema:
    """Load one of the shipped schema configurations: cdr, gda, or biored."""
    ref = resources.files("adrcm.data.schemas").joinpath(f"{name}.json")
    if not ref.is_file():
        raise KeyError(f"no built-in schema named {name!r}")
    return schema_from_dict(json.loads(ref.read_text(encoding="utf-8")))
