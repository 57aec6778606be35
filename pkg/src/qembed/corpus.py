"""Corpus ingestion, exact deduplication, instruction-pair preprocessing and held-out splits."""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

logger = logging.getLogger(__name__)


class CorpusError(ValueError):
    """Raised on malformed corpus inputs (bad format, duplicate ids, bad fractions)."""


@dataclass(frozen=True)
class Document:
    id: str
    text: str
    source: str | None = None


@dataclass
class Corpus:
    documents: list[Document]
    dedup_applied: bool = False
    skipped_records: int = 0  # malformed input lines dropped during ingestion

    def __len__(self) -> int:
        return len(self.documents)

    def __iter__(self):
        return iter(self.documents)

    def ids(self) -> list[str]:
        return [d.id for d in self.documents]

    def texts(self) -> list[str]:
        return [d.text for d in self.documents]

    def text_by_id(self) -> dict[str, str]:
        return {d.id: d.text for d in self.documents}

    def get(self, doc_id: str) -> Document:
        for d in self.documents:
            if d.id == doc_id:
                return d
        raise KeyError(doc_id)


@dataclass(frozen=True)
class Split:
    train_ids: frozenset[str]
    heldout_ids: frozenset[str]
    seed: int


def content_id(text: str) -> str:
    """Stable id for a document: truncated SHA-256 of its text bytes."""
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


def _assign_id(text: str, taken: set[str]) -> str:
    # Identical texts may coexist before dedup; suffix repeats to keep ids unique.
    base = content_id(text)
    candidate = base
    k = 1
    while candidate in taken:
        candidate = f"{base}-{k}"
        k += 1
    return candidate


def ingest(path: str | Path, format: str = "plain-lines") -> Corpus:
    """Read a corpus file, one document per non-empty line (or json-lines record).

    Blank and whitespace-only lines are dropped. Ids default to a content hash;
    json-lines records may carry explicit ``id`` and ``source`` fields. Explicit
    duplicate ids are an error, malformed records are skipped with a warning.
    """
    path = Path(path)
    if format not in ("plain-lines", "json-lines"):
        raise CorpusError(f"unknown corpus format: {format!r}")
    try:
        raw = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise CorpusError(f"cannot read corpus file {path}: {exc}") from exc

    documents: list[Document] = []
    taken: set[str] = set()
    skipped = 0
    for lineno, line in enumerate(raw.splitlines(), start=1):
        if not line.strip():
            continue
        if format == "plain-lines":
            text, explicit_id, source = line, None, None
        else:
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                logger.warning("%s:%d: skipping malformed json record (%s)", path, lineno, exc.msg)
                skipped += 1
                continue
            if not isinstance(record, dict) or "text" not in record:
                logger.warning("%s:%d: skipping record without a text field", path, lineno)
                skipped += 1
                continue
            text = str(record["text"])
            explicit_id = record.get("id")
            source = record.get("source")
        if not text.strip():
            continue
        if explicit_id is not None:
            explicit_id = str(explicit_id)
            if explicit_id in taken:
                raise CorpusError(f"duplicate document id {explicit_id!r} at {path}:{lineno}")
            doc_id = explicit_id
        else:
            doc_id = _assign_id(text, taken)
        taken.add(doc_id)
        documents.append(Document(id=doc_id, text=text, source=source))
    return Corpus(documents=documents, dedup_applied=False, skipped_records=skipped)


def exact_dedup(corpus: Corpus) -> Corpus:
    """Drop later byte-identical texts, keeping first occurrences in order."""
    seen: set[str] = set()
    kept = []
    for doc in corpus.documents:
        if doc.text in seen:
            continue
        seen.add(doc.text)
        kept.append(doc)
    return replace(corpus, documents=kept, dedup_applied=True)


def medi2_preprocess(directory: str | Path, delimiter: str = "|") -> Corpus:
    """Build a training corpus from a directory of instruction-pair json-lines files.

    Files whose name starts with ``task`` are skipped. From every remaining record
    the positive and negative instance texts are collected, each instance being
    ``<instruction><delimiter><content>``; the instruction prefix is stripped.
    Records with a delimiter-less instance are skipped with a warning. The merged
    texts are exactly deduplicated.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise CorpusError(f"not a directory: {directory}")

    texts: list[str] = []
    skipped = 0
    for file in sorted(directory.iterdir()):
        if not file.name.endswith(".jsonl") or file.name.startswith("task"):
            continue
        for lineno, line in enumerate(file.read_text(encoding="utf-8").splitlines(), start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError:
                logger.warning("%s:%d: skipping malformed record", file, lineno)
                skipped += 1
                continue
            instances = list(record.get("pos", [])) + list(record.get("neg", []))
            stripped = []
            ok = True
            for instance in instances:
                instance = str(instance)
                if delimiter not in instance:
                    logger.warning("%s:%d: instance without delimiter %r, record skipped",
                                   file, lineno, delimiter)
                    skipped += 1
                    ok = False
                    break
                stripped.append(instance.split(delimiter, 1)[1].strip())
            if ok:
                texts.extend(t for t in stripped if t)

    taken: set[str] = set()
    documents = []
    for text in texts:
        doc_id = _assign_id(text, taken)
        taken.add(doc_id)
        documents.append(Document(id=doc_id, text=text))
    return exact_dedup(Corpus(documents=documents, skipped_records=skipped))


def split_heldout(corpus: Corpus, fraction: float, seed: int) -> Split:
    """Partition document ids into train/held-out sets by seeded hash order.

    Deterministic for a fixed seed; the held-out count is round(n * fraction),
    always within one document of the requested ratio.
    """
    if not 0.0 < fraction < 1.0:
        raise CorpusError(f"held-out fraction must be in (0, 1), got {fraction}")
    if len(corpus) == 0:
        raise CorpusError("cannot split an empty corpus")

    def rank(doc_id: str) -> str:
        return hashlib.sha256(f"{seed}:{doc_id}".encode("utf-8")).hexdigest()

    ordered = sorted(corpus.ids(), key=lambda i: (rank(i), i))
    n_heldout = round(len(ordered) * fraction)
    heldout = frozenset(ordered[:n_heldout])
    train = frozenset(ordered[n_heldout:])
    return Split(train_ids=train, heldout_ids=heldout, seed=seed)


def save_corpus(corpus: Corpus, path: str | Path) -> None:
    """Write a corpus as json-lines {id, text, source} records."""
    with open(path, "w", encoding="utf-8") as fh:
        for doc in corpus.documents:
            record: dict = {"id": doc.id, "text": doc.text}
            if doc.source is not None:
                record["source"] = doc.source
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


def load_corpus(path: str | Path) -> Corpus:
    corpus = ingest(path, format="json-lines")
    if corpus.skipped_records:
        raise CorpusError(f"stored corpus {path} has malformed records")
    return corpus
