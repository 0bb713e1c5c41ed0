"""Load, validate, filter, and deterministically sample a literature corpus.

Input follows CORD-19 metadata conventions: CSV with header columns
cord_uid, title, abstract, source (extra columns ignored) or JSONL objects
with the same keys. Records missing any of doc id, title, or abstract are
skipped and counted, never stored.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

from .errors import IngestError, SampleError
from .rng import SplitMix64

logger = logging.getLogger(__name__)

CSV_COLUMNS = ("cord_uid", "title", "abstract")


def count_words(text: str) -> int:
    """Number of maximal whitespace-delimited tokens; no punctuation stripping."""
    return len(text.split())


@dataclass(frozen=True)
class Document:
    doc_id: str
    title: str
    abstract: str
    source_tag: str = ""
    word_count: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "word_count", count_words(self.abstract))


@dataclass
class IngestStats:
    ingested: int = 0
    skipped: int = 0
    skip_reasons: dict[str, int] = field(default_factory=dict)

    def skip(self, reason: str) -> None:
        self.skipped += 1
        self.skip_reasons[reason] = self.skip_reasons.get(reason, 0) + 1

    def to_dict(self) -> dict:
        return {
            "ingested": self.ingested,
            "skipped": self.skipped,
            "skip_reasons": dict(sorted(self.skip_reasons.items())),
        }


class Corpus:
    """Immutable-after-ingest document store; safe for concurrent readers."""

    def __init__(self, documents: Iterable[Document] = ()):
        self._documents: list[Document] = []
        self._by_id: dict[str, Document] = {}
        for doc in documents:
            self.add(doc)

    def add(self, doc: Document) -> bool:
        """Store doc unless its id is already present (first-wins)."""
        if doc.doc_id in self._by_id:
            return False
        self._by_id[doc.doc_id] = doc
        self._documents.append(doc)
        return True

    @property
    def documents(self) -> tuple[Document, ...]:
        return tuple(self._documents)

    def get(self, doc_id: str) -> Document | None:
        return self._by_id.get(doc_id)

    def __len__(self) -> int:
        return len(self._documents)

    def eligible(self, min_words: int = 0, max_words: int | None = None) -> list[Document]:
        """Documents usable for task generation, within the word window."""
        hi = max_words if max_words is not None else float("inf")
        return [
            d
            for d in self._documents
            if d.title and d.abstract and min_words <= d.word_count <= hi
        ]


def _validate_record(doc_id: str, title: str, abstract: str) -> str | None:
    """First failing reason, checked in a fixed order, or None if valid."""
    if not doc_id:
        return "empty_doc_id"
    if not title:
        return "empty_title"
    if not abstract:
        return "empty_abstract"
    return None


def _iter_csv(path: Path) -> Iterator[tuple[str, str, str, str] | None]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        fields = reader.fieldnames or []
        missing = [c for c in CSV_COLUMNS if c not in fields]
        if missing:
            raise IngestError(f"{path}: missing required CSV columns: {', '.join(missing)}")
        for row in reader:
            yield (
                (row.get("cord_uid") or "").strip(),
                (row.get("title") or "").strip(),
                (row.get("abstract") or "").strip(),
                (row.get("source") or "").strip(),
            )


def _iter_jsonl(path: Path) -> Iterator[tuple[str, str, str, str] | None]:
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue  # blank lines are not records
            try:
                obj = json.loads(line)
            except json.JSONDecodeError:
                yield None
                continue
            if not isinstance(obj, dict):
                yield None
                continue
            yield (
                str(obj.get("cord_uid") or "").strip(),
                str(obj.get("title") or "").strip(),
                str(obj.get("abstract") or "").strip(),
                str(obj.get("source") or "").strip(),
            )


def ingest_corpus(path: str | Path, format: str) -> tuple[Corpus, IngestStats]:
    """Read a corpus file; malformed rows are skipped and counted, never fatal.

    Duplicate doc ids keep the first occurrence. Returns the corpus handle
    and the ingestion stats (ingested + skipped == records read).
    """
    path = Path(path)
    if not path.is_file():
        raise IngestError(f"corpus file not found: {path}")
    if format == "csv":
        records = _iter_csv(path)
    elif format == "jsonl":
        records = _iter_jsonl(path)
    else:
        raise IngestError(f"unknown corpus format: {format!r} (expected csv or jsonl)")

    corpus = Corpus()
    stats = IngestStats()
    for rec in records:
        if rec is None:
            stats.skip("invalid_json")
            continue
        doc_id, title, abstract, source = rec
        reason = _validate_record(doc_id, title, abstract)
        if reason is not None:
            stats.skip(reason)
            continue
        if not corpus.add(Document(doc_id, title, abstract, source)):
            stats.skip("duplicate_doc_id")
            continue
        stats.ingested += 1
    logger.info("ingested %d documents from %s (%d skipped)", stats.ingested, path, stats.skipped)
    return corpus, stats


def sample_abstracts(
    corpus: Corpus,
    n: int,
    seed: int,
    min_words: int = 0,
    max_words: int | None = None,
) -> list[Document]:
    """Sample n distinct documents without replacement, deterministic per seed.

    Only documents whose abstract word count falls inside [min_words, max_words]
    are eligible. The returned order is the draw order and reproduces exactly
    for a fixed seed.
    """
    if n < 0:
        raise SampleError(f"sample size must be non-negative, got {n}")
    pool = corpus.eligible(min_words, max_words)
    if n > len(pool):
        raise SampleError(
            f"requested {n} abstracts but only {len(pool)} documents are eligible "
            f"within the [{min_words}, {max_words if max_words is not None else 'inf'}] word window"
        )
    return SplitMix64(seed).sample(pool, n)


def save_corpus(corpus: Corpus, path: str | Path) -> int:
    """Write the normalized corpus store (one JSON document per line)."""
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        for doc in corpus.documents:
            fh.write(
                json.dumps(
                    {
                        "cord_uid": doc.doc_id,
                        "title": doc.title,
                        "abstract": doc.abstract,
                        "source": doc.source_tag,
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )
    return len(corpus)


def load_corpus(path: str | Path) -> Corpus:
    """Load a corpus store written by save_corpus (strict: skips nothing)."""
    corpus, stats = ingest_corpus(path, "jsonl")
    if stats.skipped:
        raise IngestError(f"{path}: corpus store is corrupt ({stats.skipped} bad records)")
    return corpus
