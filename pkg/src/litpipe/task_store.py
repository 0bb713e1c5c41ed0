"""Instruction triplets, mined datasets, dedup, and the training JSONL format.

The training file format is one JSON object per line with exactly the keys
instruction / input / output (the Alpaca-style convention); origin metadata
is internal and never serialized.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .corpus_ingest import Corpus
from .errors import DatasetError, JsonlFormatError, SampleError
from .rng import SplitMix64

ORIGINS = ("seed_handwritten", "synthetic", "mined")
MINE_INSTRUCTION = "Summarize this abstract"


@dataclass(frozen=True)
class InstructionTriplet:
    instruction: str
    input: str
    output: str
    origin: str
    source_doc_id: str | None = None

    def __post_init__(self):
        if not self.instruction:
            raise ValueError("triplet instruction must be non-empty")
        if not self.output:
            raise ValueError("triplet output must be non-empty")
        if self.origin not in ORIGINS:
            raise ValueError(f"unknown origin {self.origin!r}")
        if self.origin == "mined":
            if not self.source_doc_id:
                raise ValueError("mined triplets must carry a source_doc_id")
            if self.instruction != MINE_INSTRUCTION:
                raise ValueError(f"mined triplets use the constant instruction {MINE_INSTRUCTION!r}")

    def content(self) -> tuple[str, str, str]:
        """The three serialized fields, for content-level comparisons."""
        return (self.instruction, self.input, self.output)


@dataclass(frozen=True)
class SourceRef:
    name: str
    count: int


@dataclass(frozen=True)
class Dataset:
    name: str
    triplets: tuple[InstructionTriplet, ...]
    created_from: tuple[SourceRef, ...]

    def __len__(self) -> int:
        return len(self.triplets)


@dataclass(frozen=True)
class UniquenessStats:
    unique_instructions: int
    unique_inputs: int
    total: int


def mine_abstract_triplets(corpus: Corpus, n: int, seed: int) -> list[InstructionTriplet]:
    """Mine n real-abstract triplets: input=abstract, output=the true title.

    Documents with an empty title or abstract are excluded from the pool
    before sampling; the error message reports how many were excluded.
    Deterministic per seed.
    """
    if n < 0:
        raise SampleError(f"mining count must be non-negative, got {n}")
    eligible = [d for d in corpus.documents if d.title and d.abstract]
    excluded = len(corpus) - len(eligible)
    if n > len(eligible):
        raise SampleError(
            f"requested {n} mined triplets but only {len(eligible)} documents are eligible"
            + (f" ({excluded} skipped for missing title/abstract)" if excluded else "")
        )
    docs = SplitMix64(seed).sample(eligible, n)
    return [
        InstructionTriplet(
            instruction=MINE_INSTRUCTION,
            input=d.abstract,
            output=d.title,
            origin="mined",
            source_doc_id=d.doc_id,
        )
        for d in docs
    ]


def assemble_dataset(
    name: str, sources: Sequence[tuple[str, Sequence[InstructionTriplet]]]
) -> Dataset:
    """Concatenate named sources in order into an immutable Dataset."""
    if not sources or all(len(triplets) == 0 for _, triplets in sources):
        raise DatasetError("assemble_dataset requires at least one non-empty source")
    merged: list[InstructionTriplet] = []
    refs: list[SourceRef] = []
    for source_name, triplets in sources:
        merged.extend(triplets)
        refs.append(SourceRef(source_name, len(triplets)))
    return Dataset(name=name, triplets=tuple(merged), created_from=tuple(refs))


def instruction_tokens(text: str) -> frozenset[str]:
    return frozenset(text.lower().split())


def token_overlap(a: str, b: str) -> float:
    """Jaccard similarity of lowercased whitespace tokens; 1.0 for two empties."""
    ta, tb = instruction_tokens(a), instruction_tokens(b)
    union = ta | tb
    if not union:
        return 1.0
    return len(ta & tb) / len(union)


def dedup_triplets(
    triplets: Sequence[InstructionTriplet], threshold: float
) -> tuple[list[InstructionTriplet], list[InstructionTriplet]]:
    """Drop triplets whose instruction overlaps an earlier kept one at >= threshold.

    Earlier items always win. Returns (kept, dropped).
    """
    if not 0.0 <= threshold <= 1.0:
        raise DatasetError(f"dedup threshold must lie in [0, 1], got {threshold}")
    kept: list[InstructionTriplet] = []
    kept_tokens: list[frozenset[str]] = []
    dropped: list[InstructionTriplet] = []
    for t in triplets:
        tokens = instruction_tokens(t.instruction)
        duplicate = False
        for other in kept_tokens:
            union = tokens | other
            sim = 1.0 if not union else len(tokens & other) / len(union)
            if sim >= threshold:
                duplicate = True
                break
        if duplicate:
            dropped.append(t)
        else:
            kept.append(t)
            kept_tokens.append(tokens)
    return kept, dropped


def triplet_training_line(t: InstructionTriplet) -> str:
    """Canonical single-line serialization with exactly the three training keys."""
    return json.dumps(
        {"instruction": t.instruction, "input": t.input, "output": t.output},
        ensure_ascii=False,
    )


def export_jsonl(dataset: Dataset | Sequence[InstructionTriplet], path: str | Path) -> int:
    """Write the training JSONL file; returns the number of lines written."""
    triplets = dataset.triplets if isinstance(dataset, Dataset) else tuple(dataset)
    path = Path(path)
    try:
        with open(path, "w", encoding="utf-8") as fh:
            for t in triplets:
                fh.write(triplet_training_line(t) + "\n")
    except OSError as exc:
        raise DatasetError(f"cannot write dataset to {path}: {exc}") from exc
    return len(triplets)


def import_jsonl(path: str | Path, origin: str) -> list[InstructionTriplet]:
    """Read a training JSONL file back into triplets with the stated origin.

    Any malformed line (bad JSON, missing/empty required field) raises a
    JsonlFormatError carrying the 1-based line number.
    """
    if origin not in ORIGINS:
        raise DatasetError(f"unknown origin {origin!r}")
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"dataset file not found: {path}")
    triplets: list[InstructionTriplet] = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped:
                raise JsonlFormatError(path, line_no, "empty line")
            try:
                obj = json.loads(stripped)
            except json.JSONDecodeError as exc:
                raise JsonlFormatError(path, line_no, f"invalid JSON ({exc.msg})") from exc
            if not isinstance(obj, dict):
                raise JsonlFormatError(path, line_no, "line is not a JSON object")
            for key in ("instruction", "input", "output"):
                if key not in obj:
                    raise JsonlFormatError(path, line_no, f"missing key {key!r}")
                if not isinstance(obj[key], str):
                    raise JsonlFormatError(path, line_no, f"key {key!r} must be a string")
            if not obj["instruction"]:
                raise JsonlFormatError(path, line_no, "empty instruction")
            if not obj["output"]:
                raise JsonlFormatError(path, line_no, "empty output")
            triplets.append(
                InstructionTriplet(
                    instruction=obj["instruction"],
                    input=obj["input"],
                    output=obj["output"],
                    origin=origin,
                )
            )
    return triplets


def uniqueness_stats(dataset: Dataset | Sequence[InstructionTriplet]) -> UniquenessStats:
    """Distinct instruction/input counts by exact string equality after trim."""
    triplets = dataset.triplets if isinstance(dataset, Dataset) else tuple(dataset)
    instructions = {t.instruction.strip() for t in triplets}
    inputs = {t.input.strip() for t in triplets}
    if not triplets:
        return UniquenessStats(0, 0, 0)
    return UniquenessStats(len(instructions), len(inputs), len(triplets))


def dataset_digest(dataset: Dataset | Sequence[InstructionTriplet]) -> str:
    """SHA-256 over the exported JSONL bytes; stable content identifier."""
    triplets = dataset.triplets if isinstance(dataset, Dataset) else tuple(dataset)
    h = hashlib.sha256()
    for t in triplets:
        h.update((triplet_training_line(t) + "\n").encode("utf-8"))
    return h.hexdigest()


def write_dataset_manifest(dataset: Dataset, path: str | Path) -> dict:
    """Write the dataset manifest JSON (name, sources, counts, content digest)."""
    manifest = {
        "name": dataset.name,
        "sources": [{"name": r.name, "count": r.count} for r in dataset.created_from],
        "total": len(dataset),
        "sha256": dataset_digest(dataset),
    }
    Path(path).write_text(json.dumps(manifest, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    return manifest
