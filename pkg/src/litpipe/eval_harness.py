"""Blinded comparative evaluation: sessions, judgments, aggregation.

Each case gets its own uniformly random label permutation drawn from the
session seed; model identities stay server-side until the session is marked
complete. Rankings use competition semantics (a tie group of size m at rank r
pushes the next group to rank r+m) and grades are the categorical
Fail/Pass/Excellent scale. Aggregation is computed with exact rational
arithmetic internally so independent recomputations match bit-for-bit.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

from .chat_backend import ChatBackend, ChatBackendConfig, as_backend
from .errors import BackendError, JudgeReplyError, JudgmentError, SessionError
from .inference import PromptCase, ResponseMatrix
from .rng import SplitMix64

LABEL_ALPHABET = "ABCDEFGHIJKLMNOPQRSTUVWXYZ"
GRADES = ("Fail", "Pass", "Excellent")

STATUS_OPEN = "open"
STATUS_COMPLETE = "complete"


def labels_for(k: int) -> list[str]:
    if not 1 <= k <= len(LABEL_ALPHABET):
        raise SessionError(f"label count must lie in [1, {len(LABEL_ALPHABET)}], got {k}")
    return list(LABEL_ALPHABET[:k])


@dataclass(frozen=True)
class BlindedCase:
    case_id: str
    instruction: str
    input: str
    labeled_responses: tuple[tuple[str, str], ...]  # (label, text), label order


@dataclass(frozen=True)
class Judgment:
    evaluator_id: str
    evaluator_kind: str  # "human" | "llm"
    case_id: str
    ranks: dict[str, int]
    grades: dict[str, str]


@dataclass
class EvaluationSession:
    session_id: str
    case_ids: list[str]
    model_ids: list[str]
    blind_seed: int
    cases: dict[str, PromptCase]
    blinded: dict[str, BlindedCase]
    label_to_model: dict[str, dict[str, str]]
    reference_model: str | None = None
    status: str = STATUS_OPEN
    judgments: dict[tuple[str, str], Judgment] = field(default_factory=dict)

    @property
    def k(self) -> int:
        return len(self.model_ids)

    @property
    def labels(self) -> list[str]:
        return labels_for(self.k)

    def evaluators(self) -> list[str]:
        return sorted({ev for ev, _ in self.judgments})

    def judged_cases(self, evaluator_id: str) -> set[str]:
        return {case for ev, case in self.judgments if ev == evaluator_id}

    def next_unjudged(self, evaluator_id: str) -> BlindedCase | None:
        for case_id in self.case_ids:
            if (evaluator_id, case_id) not in self.judgments:
                return self.blinded[case_id]
        return None


def blind_case(
    case: PromptCase, responses: Mapping[str, str], rng: SplitMix64
) -> tuple[BlindedCase, dict[str, str]]:
    """Assign labels by a uniformly random permutation of the models.

    Returns the identity-free blinded case plus the label->model mapping for
    the caller to store server-side.
    """
    model_ids = sorted(responses)
    for model_id in model_ids:
        if not responses[model_id]:
            raise SessionError(f"missing response text for model {model_id!r}")
    labels = labels_for(len(model_ids))
    permuted = rng.shuffled(model_ids)
    mapping = dict(zip(labels, permuted))
    blinded = BlindedCase(
        case_id=case.case_id,
        instruction=case.instruction,
        input=case.input,
        labeled_responses=tuple((label, responses[mapping[label]]) for label in labels),
    )
    return blinded, mapping


def _derive_session_id(blind_seed: int, case_ids: Sequence[str], model_ids: Sequence[str]) -> str:
    payload = json.dumps([blind_seed, list(case_ids), sorted(model_ids)])
    return "sess-" + hashlib.sha256(payload.encode("utf-8")).hexdigest()[:12]


def create_session(
    cases: Sequence[PromptCase],
    matrix: ResponseMatrix,
    model_ids: Sequence[str],
    blind_seed: int,
    *,
    session_id: str | None = None,
    reference_model: str | None = None,
) -> EvaluationSession:
    """Blind every case with a per-case permutation drawn from the seed.

    The matrix must be complete over cases x model_ids; missing cells are
    listed in the error. Identical inputs and seed reproduce identical
    permutation tables.
    """
    if not cases:
        raise SessionError("create_session requires at least one case")
    model_ids = list(model_ids)
    if len(set(model_ids)) != len(model_ids) or not model_ids:
        raise SessionError("model_ids must be non-empty and unique")
    if reference_model is not None and reference_model not in model_ids:
        raise SessionError(f"reference model {reference_model!r} is not in the session")
    missing = [
        (case.case_id, m) for case in cases for m in model_ids if (case.case_id, m) not in matrix
    ]
    if missing:
        cells = ", ".join(f"({c}, {m})" for c, m in missing[:10])
        more = "" if len(missing) <= 10 else f" and {len(missing) - 10} more"
        raise SessionError(f"response matrix is incomplete; missing cells: {cells}{more}")

    rng = SplitMix64(blind_seed)
    blinded: dict[str, BlindedCase] = {}
    label_to_model: dict[str, dict[str, str]] = {}
    for case in cases:
        responses = {m: matrix.get(case.case_id, m).text for m in model_ids}
        bc, mapping = blind_case(case, responses, rng)
        blinded[case.case_id] = bc
        label_to_model[case.case_id] = mapping

    case_ids = [c.case_id for c in cases]
    return EvaluationSession(
        session_id=session_id or _derive_session_id(blind_seed, case_ids, model_ids),
        case_ids=case_ids,
        model_ids=model_ids,
        blind_seed=blind_seed,
        cases={c.case_id: c for c in cases},
        blinded=blinded,
        label_to_model=label_to_model,
        reference_model=reference_model,
    )


def validate_competition_ranks(ranks: Mapping[str, int], labels: Sequence[str]) -> None:
    """Reject any rank map that is not a valid competition ranking.

    Grouping the sorted ranks, the first tie group of size m1 must sit at
    rank 1, the next at 1+m1, and so on; ranks outside [1, k] or missing
    labels are rejected.
    """
    k = len(labels)
    label_set = set(labels)
    if set(ranks) != label_set:
        unknown = sorted(set(ranks) - label_set)
        missing = sorted(label_set - set(ranks))
        parts = []
        if unknown:
            parts.append(f"unknown labels: {', '.join(unknown)}")
        if missing:
            parts.append(f"missing labels: {', '.join(missing)}")
        raise JudgmentError("; ".join(parts))
    for label, rank in ranks.items():
        if not isinstance(rank, int) or isinstance(rank, bool):
            raise JudgmentError(f"rank for label {label} must be an integer, got {rank!r}")
        if not 1 <= rank <= k:
            raise JudgmentError(f"rank for label {label} must lie in [1, {k}], got {rank}")
    ordered = sorted(ranks.values())
    expected = 1
    i = 0
    while i < k:
        value = ordered[i]
        if value != expected:
            raise JudgmentError(
                f"invalid tie structure: rank {value} found where rank {expected} was required "
                f"(sorted ranks {ordered})"
            )
        group = ordered.count(value)
        expected += group
        i += group


def validate_grades(grades: Mapping[str, str], labels: Sequence[str]) -> None:
    label_set = set(labels)
    if set(grades) != label_set:
        missing = sorted(label_set - set(grades))
        unknown = sorted(set(grades) - label_set)
        parts = []
        if unknown:
            parts.append(f"unknown labels: {', '.join(unknown)}")
        if missing:
            parts.append(f"missing grades for labels: {', '.join(missing)}")
        raise JudgmentError("; ".join(parts))
    for label, grade in grades.items():
        if grade not in GRADES:
            raise JudgmentError(
                f"grade for label {label} must be one of {', '.join(GRADES)}, got {grade!r}"
            )


def record_judgment(
    session: EvaluationSession,
    evaluator_id: str,
    case_id: str,
    ranks: Mapping[str, int],
    grades: Mapping[str, str],
    evaluator_kind: str = "human",
) -> Judgment:
    """Validate and store one judgment; resubmission replaces atomically."""
    if session.status != STATUS_OPEN:
        raise SessionError(f"session {session.session_id} is complete; judgments are closed")
    if not evaluator_id:
        raise JudgmentError("evaluator_id must be non-empty")
    if case_id not in session.cases:
        raise SessionError(f"case {case_id!r} does not belong to session {session.session_id}")
    if evaluator_kind not in ("human", "llm"):
        raise JudgmentError(f"evaluator_kind must be human or llm, got {evaluator_kind!r}")
    labels = session.labels
    validate_competition_ranks(ranks, labels)
    validate_grades(grades, labels)
    judgment = Judgment(
        evaluator_id=evaluator_id,
        evaluator_kind=evaluator_kind,
        case_id=case_id,
        ranks={label: int(ranks[label]) for label in labels},
        grades={label: grades[label] for label in labels},
    )
    session.judgments[(evaluator_id, case_id)] = judgment
    return judgment


def complete_session(session: EvaluationSession) -> None:
    session.status = STATUS_COMPLETE


def unblind(session: EvaluationSession) -> dict[str, dict[str, str]]:
    """Reveal the stored per-case label->model permutations (complete sessions only)."""
    if session.status != STATUS_COMPLETE:
        raise SessionError(
            f"session {session.session_id} is still open; unblinding requires completion"
        )
    return {case_id: dict(mapping) for case_id, mapping in session.label_to_model.items()}


def _coverage_gaps(session: EvaluationSession) -> list[tuple[str, str]]:
    evaluators = session.evaluators()
    return [
        (ev, case_id)
        for ev in evaluators
        for case_id in session.case_ids
        if (ev, case_id) not in session.judgments
    ]


def _resolve_weights(
    evaluators: Sequence[str], weights: Mapping[str, float] | None
) -> dict[str, Fraction]:
    if weights is None:
        return {ev: Fraction(1) for ev in evaluators}
    missing = [ev for ev in evaluators if ev not in weights]
    if missing:
        raise SessionError(f"weights missing for evaluators: {', '.join(missing)}")
    resolved = {}
    for ev in evaluators:
        w = Fraction(weights[ev]).limit_denominator(10**9)
        if w <= 0:
            raise SessionError(f"weight for evaluator {ev!r} must be positive")
        resolved[ev] = w
    return resolved


@dataclass
class HeadToHead:
    candidate: str
    reference: str
    wins: int
    ties: int
    losses: int
    preferred_or_tied_pct: float

    def to_dict(self) -> dict:
        return {
            "candidate": self.candidate,
            "reference": self.reference,
            "wins": self.wins,
            "ties": self.ties,
            "losses": self.losses,
            "preferred_or_tied_pct": self.preferred_or_tied_pct,
        }


@dataclass
class AggregateReport:
    session_id: str
    n_cases: int
    evaluators: list[str]
    weights: dict[str, float]
    per_model: dict[str, dict]
    head_to_head: dict[str, dict]

    def to_dict(self) -> dict:
        return {
            "session_id": self.session_id,
            "n_cases": self.n_cases,
            "evaluators": self.evaluators,
            "weights": self.weights,
            "per_model": self.per_model,
            "head_to_head": self.head_to_head,
        }


def _model_rank_grade(
    session: EvaluationSession, judgment: Judgment
) -> dict[str, tuple[int, str]]:
    """Unblind one judgment into model -> (rank, grade)."""
    mapping = session.label_to_model[judgment.case_id]
    return {
        mapping[label]: (judgment.ranks[label], judgment.grades[label])
        for label in session.labels
    }


def _consensus_rank(
    session: EvaluationSession,
    case_id: str,
    model_id: str,
    weights: dict[str, Fraction],
) -> Fraction:
    total = Fraction(0)
    weight_sum = Fraction(0)
    for ev, w in weights.items():
        judgment = session.judgments[(ev, case_id)]
        by_model = _model_rank_grade(session, judgment)
        total += w * by_model[model_id][0]
        weight_sum += w
    return total / weight_sum


def head_to_head(
    session: EvaluationSession,
    candidate: str,
    reference: str,
    weights: Mapping[str, float] | None = None,
) -> HeadToHead:
    """Per-case consensus-rank comparison of candidate vs reference.

    A case is a win when the candidate's weighted mean rank is strictly
    lower (better), a tie on exact equality. preferred_or_tied_pct is a
    percentage of cases.
    """
    for model_id in (candidate, reference):
        if model_id not in session.model_ids:
            raise SessionError(f"model {model_id!r} is not part of session {session.session_id}")
    gaps = _coverage_gaps(session)
    if gaps:
        listing = ", ".join(f"({ev}, {case})" for ev, case in gaps[:10])
        raise SessionError(f"missing judgments: {listing}")
    if not session.evaluators():
        raise SessionError("no judgments recorded")
    resolved = _resolve_weights(session.evaluators(), weights)
    wins = ties = losses = 0
    for case_id in session.case_ids:
        cand = _consensus_rank(session, case_id, candidate, resolved)
        ref = _consensus_rank(session, case_id, reference, resolved)
        if cand < ref:
            wins += 1
        elif cand == ref:
            ties += 1
        else:
            losses += 1
    pct = float(Fraction(wins + ties, len(session.case_ids)) * 100)
    return HeadToHead(candidate, reference, wins, ties, losses, pct)


def aggregate_report(
    session: EvaluationSession,
    weights: Mapping[str, float] | None = None,
    reference_model: str | None = None,
) -> AggregateReport:
    """Weighted per-model grade-count averages and mean ranks, plus head-to-head
    of every other model against the reference when one is designated.

    Requires every registered evaluator to have judged every case; gaps are
    listed in the error. Weights default to equal; scaling all weights by a
    constant does not change the report.
    """
    evaluators = session.evaluators()
    if not evaluators:
        raise SessionError("no judgments recorded; nothing to aggregate")
    gaps = _coverage_gaps(session)
    if gaps:
        listing = ", ".join(f"({ev}, {case})" for ev, case in gaps[:10])
        more = "" if len(gaps) <= 10 else f" and {len(gaps) - 10} more"
        raise SessionError(f"missing judgments: {listing}{more}")
    resolved = _resolve_weights(evaluators, weights)
    weight_sum = sum(resolved.values(), Fraction(0))

    grade_counts: dict[str, dict[str, Fraction]] = {
        m: {g: Fraction(0) for g in GRADES} for m in session.model_ids
    }
    rank_totals: dict[str, Fraction] = {m: Fraction(0) for m in session.model_ids}
    for ev in evaluators:
        w = resolved[ev]
        for case_id in session.case_ids:
            judgment = session.judgments[(ev, case_id)]
            for model_id, (rank, grade) in _model_rank_grade(session, judgment).items():
                grade_counts[model_id][grade] += w
                rank_totals[model_id] += w * rank

    n_cases = len(session.case_ids)
    per_model = {
        m: {
            "grade_counts": {
                g: float(grade_counts[m][g] / weight_sum) for g in GRADES
            },
            "mean_rank": float(rank_totals[m] / (weight_sum * n_cases)),
        }
        for m in session.model_ids
    }

    reference = reference_model or session.reference_model
    h2h: dict[str, dict] = {}
    if reference is not None:
        if reference not in session.model_ids:
            raise SessionError(f"reference model {reference!r} is not part of the session")
        for m in session.model_ids:
            if m != reference:
                h2h[m] = head_to_head(session, m, reference, weights).to_dict()

    return AggregateReport(
        session_id=session.session_id,
        n_cases=n_cases,
        evaluators=list(evaluators),
        weights={ev: float(resolved[ev]) for ev in evaluators},
        per_model=per_model,
        head_to_head=h2h,
    )


# --- LLM judge -------------------------------------------------------------

JUDGE_REPLY_SCHEMA = '{"ranks": {"A": 1, "B": 2}, "grades": {"A": "Pass", "B": "Fail"}}'

_JSON_FENCE_RE = re.compile(r"```(?:json)?\s*\n(.*?)\n\s*```", re.DOTALL)


def build_judge_prompt(blinded_case: BlindedCase, rubric: str) -> str:
    labels = [label for label, _ in blinded_case.labeled_responses]
    blocks = "\n\n".join(
        f"### Response {label}:\n{text}" for label, text in blinded_case.labeled_responses
    )
    return (
        "You are evaluating anonymous model responses to the same task.\n"
        "\n"
        f"{rubric.strip()}\n"
        "\n"
        "### Task Instruction:\n"
        f"{blinded_case.instruction}\n"
        "\n"
        "### Task Input:\n"
        f"{blinded_case.input if blinded_case.input else '(none)'}\n"
        "\n"
        f"{blocks}\n"
        "\n"
        "Reply with a single JSON object and nothing else, shaped like\n"
        f"{JUDGE_REPLY_SCHEMA}\n"
        f'- "ranks": an integer rank per label ({", ".join(labels)}); 1 is best; ties are '
        "allowed using competition ranking (a tie group of size m at rank r pushes the next "
        "group to rank r+m).\n"
        f'- "grades": one of "Fail", "Pass", or "Excellent" per label.'
    )


def _extract_judge_json(text: str) -> dict | None:
    fence = _JSON_FENCE_RE.search(text)
    if fence:
        text = fence.group(1)
    start, end = text.find("{"), text.rfind("}")
    if start == -1 or end <= start:
        return None
    try:
        obj = json.loads(text[start : end + 1])
    except json.JSONDecodeError:
        return None
    return obj if isinstance(obj, dict) else None


def _parse_judge_reply(text: str, labels: Sequence[str]) -> tuple[dict[str, int], dict[str, str]]:
    obj = _extract_judge_json(text)
    if obj is None:
        raise JudgmentError("reply contains no JSON object")
    ranks_raw = obj.get("ranks")
    grades_raw = obj.get("grades")
    if not isinstance(ranks_raw, dict) or not isinstance(grades_raw, dict):
        raise JudgmentError('reply JSON must contain "ranks" and "grades" objects')
    ranks: dict[str, int] = {}
    for label, value in ranks_raw.items():
        if isinstance(value, bool) or not isinstance(value, int):
            raise JudgmentError(f"rank for {label} is not an integer")
        ranks[str(label)] = value
    grades = {str(label): str(value) for label, value in grades_raw.items()}
    validate_competition_ranks(ranks, labels)
    validate_grades(grades, labels)
    return ranks, grades


def llm_judge(
    session: EvaluationSession,
    blinded_case: BlindedCase,
    backend: ChatBackend | ChatBackendConfig,
    rubric: str,
    evaluator_id: str = "llm-judge",
) -> Judgment:
    """Run the LLM judge on one blinded case and return the parsed Judgment.

    A reply that fails to parse or validate triggers exactly one reprompt
    with a format reminder; a second failure raises with the raw reply
    attached. The judgment is returned, not recorded; callers decide.
    """
    client = as_backend(backend)
    labels = [label for label, _ in blinded_case.labeled_responses]
    prompt = build_judge_prompt(blinded_case, rubric)
    messages = [{"role": "user", "content": prompt}]
    try:
        reply = client.complete(messages)
    except BackendError as exc:
        raise JudgeReplyError(f"judge backend failed: {exc}", raw_reply="") from exc
    try:
        ranks, grades = _parse_judge_reply(reply, labels)
    except JudgmentError as first_error:
        retry_messages = messages + [
            {"role": "assistant", "content": reply},
            {
                "role": "user",
                "content": (
                    f"Your previous reply could not be used ({first_error}). "
                    "Reply again with ONLY the JSON object, exactly shaped like\n"
                    + JUDGE_REPLY_SCHEMA
                ),
            },
        ]
        try:
            reply2 = client.complete(retry_messages)
        except BackendError as exc:
            raise JudgeReplyError(f"judge backend failed on reprompt: {exc}", raw_reply=reply) from exc
        try:
            ranks, grades = _parse_judge_reply(reply2, labels)
        except JudgmentError as second_error:
            raise JudgeReplyError(
                f"judge reply unparseable after reprompt: {second_error}", raw_reply=reply2
            ) from second_error
    return Judgment(
        evaluator_id=evaluator_id,
        evaluator_kind="llm",
        case_id=blinded_case.case_id,
        ranks=ranks,
        grades=grades,
    )
