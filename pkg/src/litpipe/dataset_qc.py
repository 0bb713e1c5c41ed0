"""Dataset quality-control analytics.

Instruction diversity is measured through a deterministic verb-subject
heuristic (the original analysis was done by hand; we trade fidelity to an
unstated manual process for reproducibility). Input completeness and study
design use editable cue lists shipped as a versioned data file, so the rules
can be inspected and tuned without touching code.
"""

from __future__ import annotations

import csv
import json
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .corpus_ingest import count_words
from .errors import QCError
from .rng import SplitMix64
from .task_store import Dataset, uniqueness_stats

FACETS = ("background", "methodology", "results", "conclusions")
DETERMINERS = frozenset({"the", "a", "an", "this", "these", "any"})
OTHER_DESIGN = "other"

_VERB_RE = re.compile(r"^[A-Za-z][A-Za-z'-]*$")
_TRAILING_PUNCT = ".,:;!?\"')"

LENGTH_BUCKET_WIDTH = 25
LENGTH_BUCKET_MAX = 500


@dataclass(frozen=True)
class QCRules:
    version: int
    facet_cues: dict[str, tuple[str, ...]]
    study_designs: tuple[tuple[str, tuple[str, ...]], ...]


def load_qc_rules(path: str | Path | None = None) -> QCRules:
    """Load cue lists from a rules file; defaults to the packaged version."""
    if path is None:
        raw = resources.files("litpipe.data").joinpath("qc_rules.json").read_text("utf-8")
    else:
        raw = Path(path).read_text("utf-8")
    try:
        obj = json.loads(raw)
        facets = {name: tuple(cues) for name, cues in obj["facets"].items()}
        designs = tuple((label, tuple(cues)) for label, cues in obj["study_designs"])
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise QCError(f"invalid QC rules file: {exc}") from exc
    missing = [f for f in FACETS if f not in facets]
    if missing:
        raise QCError(f"QC rules missing facets: {', '.join(missing)}")
    return QCRules(version=int(obj.get("version", 0)), facet_cues=facets, study_designs=designs)


_DEFAULT_RULES: QCRules | None = None


def default_rules() -> QCRules:
    global _DEFAULT_RULES
    if _DEFAULT_RULES is None:
        _DEFAULT_RULES = load_qc_rules()
    return _DEFAULT_RULES


def extract_verb_subject(instruction: str) -> tuple[str, str] | None:
    """Heuristic imperative parse: (first word, following noun phrase).

    The verb is the lowercased first token when it is a plain word; the
    subject is whatever follows after stripping leading determiners and
    trailing punctuation, lowercased. Returns None when either part is
    missing.
    """
    tokens = instruction.split()
    if not tokens:
        return None
    head = tokens[0].rstrip(_TRAILING_PUNCT)
    if not _VERB_RE.match(head):
        return None
    rest = tokens[1:]
    while rest and rest[0].lower().rstrip(_TRAILING_PUNCT) in DETERMINERS:
        rest = rest[1:]
    subject = " ".join(rest).strip().rstrip(_TRAILING_PUNCT).strip().lower()
    if not subject:
        return None
    return (head.lower(), subject)


def classify_completeness(input_text: str, rules: QCRules | None = None) -> tuple[str, set[str]]:
    """Detect abstract facets; complete iff all four are present.

    Detection is case-insensitive substring matching against the cue lists,
    which makes the verdict monotone under appended text.
    """
    rules = rules or default_rules()
    lower = input_text.lower()
    facets = {
        facet
        for facet in FACETS
        if any(cue in lower for cue in rules.facet_cues[facet])
    }
    verdict = "complete" if len(facets) == len(FACETS) else "incomplete"
    return verdict, facets


def classify_study_design(input_text: str, rules: QCRules | None = None) -> str:
    """First-match classification over the ordered design taxonomy; default 'other'."""
    rules = rules or default_rules()
    lower = input_text.lower()
    for label, cues in rules.study_designs:
        if any(cue in lower for cue in cues):
            return label
    return OTHER_DESIGN


def length_bucket(word_count: int) -> str:
    if word_count >= LENGTH_BUCKET_MAX:
        return f"{LENGTH_BUCKET_MAX}+"
    lo = (word_count // LENGTH_BUCKET_WIDTH) * LENGTH_BUCKET_WIDTH
    return f"{lo}-{lo + LENGTH_BUCKET_WIDTH - 1}"


def _all_length_buckets() -> list[str]:
    buckets = [
        f"{lo}-{lo + LENGTH_BUCKET_WIDTH - 1}"
        for lo in range(0, LENGTH_BUCKET_MAX, LENGTH_BUCKET_WIDTH)
    ]
    buckets.append(f"{LENGTH_BUCKET_MAX}+")
    return buckets


@dataclass
class QCReport:
    total: int
    unique_instructions: int
    unique_inputs: int
    verb_subject_pairs: list[tuple[str, str, int]]
    unique_pair_count: int
    sample_size: int
    completeness: dict[str, int]
    facet_histogram: dict[str, int]
    study_design_histogram: dict[str, int]
    length_histogram: dict[str, int]
    rules_version: int = 0
    seed: int = 0

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "unique_instructions": self.unique_instructions,
            "unique_inputs": self.unique_inputs,
            "unique_pair_count": self.unique_pair_count,
            "verb_subject_pairs": [
                {"verb": v, "subject": s, "count": c} for v, s, c in self.verb_subject_pairs
            ],
            "sample_size": self.sample_size,
            "completeness": self.completeness,
            "facet_histogram": self.facet_histogram,
            "study_design_histogram": self.study_design_histogram,
            "length_histogram": self.length_histogram,
            "rules_version": self.rules_version,
            "seed": self.seed,
        }


def qc_report(
    dataset: Dataset,
    sample_n: int,
    seed: int,
    rules: QCRules | None = None,
) -> QCReport:
    """Full QC report: uniqueness and verb-subject pairs over the whole dataset,
    completeness and study design over a seeded sample of sample_n inputs.
    Bit-reproducible for a fixed dataset, seed, and rules file.
    """
    rules = rules or default_rules()
    if len(dataset) == 0:
        raise QCError("qc_report requires a non-empty dataset")
    if not 0 <= sample_n <= len(dataset):
        raise QCError(f"sample_n must lie in [0, {len(dataset)}], got {sample_n}")

    uniq = uniqueness_stats(dataset)

    pair_counts: dict[tuple[str, str], int] = {}
    for t in dataset.triplets:
        pair = extract_verb_subject(t.instruction)
        if pair is not None:
            pair_counts[pair] = pair_counts.get(pair, 0) + 1
    ordered_pairs = sorted(pair_counts.items(), key=lambda kv: (-kv[1], kv[0]))

    rng = SplitMix64(seed)
    sampled = rng.sample(range(len(dataset)), sample_n)
    completeness = {"complete": 0, "incomplete": 0}
    facet_histogram = {f: 0 for f in FACETS}
    design_histogram = {label: 0 for label, _ in rules.study_designs}
    design_histogram[OTHER_DESIGN] = 0
    for idx in sampled:
        text = dataset.triplets[idx].input
        verdict, facets = classify_completeness(text, rules)
        completeness[verdict] += 1
        for f in facets:
            facet_histogram[f] += 1
        design_histogram[classify_study_design(text, rules)] += 1

    length_histogram = {b: 0 for b in _all_length_buckets()}
    for t in dataset.triplets:
        length_histogram[length_bucket(count_words(t.input))] += 1

    return QCReport(
        total=uniq.total,
        unique_instructions=uniq.unique_instructions,
        unique_inputs=uniq.unique_inputs,
        verb_subject_pairs=[(v, s, c) for (v, s), c in ordered_pairs],
        unique_pair_count=len(pair_counts),
        sample_size=sample_n,
        completeness=completeness,
        facet_histogram=facet_histogram,
        study_design_histogram=design_histogram,
        length_histogram=length_histogram,
        rules_version=rules.version,
        seed=seed,
    )


def write_plot_csv(report: QCReport, path: str | Path) -> None:
    """Flat (kind, key, count) CSV for external charting of the histograms."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["kind", "key", "count"])
        for verb, subject, count in report.verb_subject_pairs:
            writer.writerow(["verb_subject_pair", f"{verb} {subject}", count])
        for facet, count in report.facet_histogram.items():
            writer.writerow(["facet", facet, count])
        for label, count in report.study_design_histogram.items():
            writer.writerow(["study_design", label, count])
        for bucket, count in report.length_histogram.items():
            writer.writerow(["length_bucket", bucket, count])
