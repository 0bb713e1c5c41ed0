"""Prompt rendering and the case-by-model response matrix.

Candidate models receive the instruction-tuning prompt template they were
trained with; the reference chat model receives its system preamble plus the
raw instruction and input. Decoding parameters are transmitted verbatim;
beams and top_k are nonstandard for the chat wire format and may be ignored
by backends that lack them (a warning is logged once per model).
"""

from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from threading import Lock
from typing import Sequence

from .chat_backend import ChatBackendConfig, as_backend
from .errors import BackendError, GenerationError, LitpipeError

logger = logging.getLogger(__name__)

# System preamble sent to the reference chat model before each test prompt.
REFERENCE_PREAMBLE = (
    "Please respond to these instructions with a given input in a few sentences; "
    "assume that each question is independent of each other and answer each one "
    "individually."
)

_warned_models: set[str] = set()


@dataclass(frozen=True)
class InferenceConfig:
    temperature: float = 0.1
    top_p: float = 0.75
    top_k: int = 40
    beams: int = 4
    max_tokens: int = 128

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if not 0 < self.top_p <= 1:
            raise ValueError("top_p must lie in (0, 1]")
        if self.beams < 1:
            raise ValueError("beams must be >= 1")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")

    def to_params(self) -> dict:
        return {
            "temperature": self.temperature,
            "top_p": self.top_p,
            "top_k": self.top_k,
            "beams": self.beams,
            "max_tokens": self.max_tokens,
        }


@dataclass(frozen=True)
class PromptCase:
    case_id: str
    instruction: str
    input: str = ""

    def __post_init__(self):
        if not self.instruction:
            raise ValueError("case instruction must be non-empty")


@dataclass(frozen=True)
class ModelResponse:
    case_id: str
    model_id: str
    text: str
    latency: float
    config_used: InferenceConfig


@dataclass(frozen=True)
class ModelEndpoint:
    model_id: str
    backend: object  # ChatBackend or ChatBackendConfig
    role: str = "candidate"

    def __post_init__(self):
        if self.role not in ("candidate", "reference"):
            raise ValueError(f"role must be candidate or reference, got {self.role!r}")


PROMPT_WITH_INPUT = (
    "Below is an instruction that describes a task, paired with an input that provides "
    "further context. Write a response that appropriately completes the request.\n"
    "\n"
    "### Instruction:\n{instruction}\n"
    "\n"
    "### Input:\n{input}\n"
    "\n"
    "### Response:\n"
)

PROMPT_NO_INPUT = (
    "Below is an instruction that describes a task. Write a response that appropriately "
    "completes the request.\n"
    "\n"
    "### Instruction:\n{instruction}\n"
    "\n"
    "### Response:\n"
)


def render_prompt(case: PromptCase) -> str:
    """Instruction-tuning prompt; the input block is omitted for empty inputs."""
    if case.input:
        return PROMPT_WITH_INPUT.format(instruction=case.instruction, input=case.input)
    return PROMPT_NO_INPUT.format(instruction=case.instruction)


def reference_model_preamble() -> str:
    """System preamble used for the reference chat model."""
    return REFERENCE_PREAMBLE


def _messages_for(case: PromptCase, role: str) -> list[dict]:
    if role == "reference":
        content = case.instruction if not case.input else f"{case.instruction}\n\n{case.input}"
        return [
            {"role": "system", "content": reference_model_preamble()},
            {"role": "user", "content": content},
        ]
    return [{"role": "user", "content": render_prompt(case)}]


def generate_response(
    case: PromptCase,
    endpoint: ModelEndpoint | ChatBackendConfig,
    config: InferenceConfig | None = None,
) -> ModelResponse:
    """Generate one response cell; raises GenerationError naming (case, model)."""
    if isinstance(endpoint, ChatBackendConfig):
        endpoint = ModelEndpoint(model_id=endpoint.model_name, backend=endpoint, role="candidate")
    config = config or InferenceConfig()
    if endpoint.model_id not in _warned_models:
        _warned_models.add(endpoint.model_id)
        logger.warning(
            "model %s: beams/top_k are nonstandard chat parameters and may be ignored by the backend",
            endpoint.model_id,
        )
    client = as_backend(endpoint.backend)
    messages = _messages_for(case, endpoint.role)
    started = time.perf_counter()
    try:
        text = client.complete(messages, **config.to_params())
    except BackendError as exc:
        raise GenerationError(case.case_id, endpoint.model_id, str(exc)) from exc
    latency = time.perf_counter() - started
    if not text:
        raise GenerationError(case.case_id, endpoint.model_id, "backend returned empty text")
    return ModelResponse(
        case_id=case.case_id,
        model_id=endpoint.model_id,
        text=text,
        latency=latency,
        config_used=config,
    )


class ResponseMatrix:
    """Keyed (case_id, model_id) -> ModelResponse store with explicit holes."""

    def __init__(self, case_ids: Sequence[str], model_ids: Sequence[str]):
        if len(set(case_ids)) != len(case_ids):
            raise LitpipeError("duplicate case ids in matrix declaration")
        self.case_ids = list(case_ids)
        self.model_ids = list(model_ids)
        self._cells: dict[tuple[str, str], ModelResponse] = {}
        self.holes: dict[tuple[str, str], str] = {}
        self._lock = Lock()

    def put(self, response: ModelResponse) -> None:
        with self._lock:
            self._cells[(response.case_id, response.model_id)] = response
            self.holes.pop((response.case_id, response.model_id), None)

    def put_hole(self, case_id: str, model_id: str, reason: str) -> None:
        with self._lock:
            self.holes[(case_id, model_id)] = reason

    def get(self, case_id: str, model_id: str) -> ModelResponse | None:
        return self._cells.get((case_id, model_id))

    def __contains__(self, key: tuple[str, str]) -> bool:
        return key in self._cells

    def missing_cells(self) -> list[tuple[str, str]]:
        return [
            (c, m)
            for c in self.case_ids
            for m in self.model_ids
            if (c, m) not in self._cells
        ]

    def is_complete(self) -> bool:
        return not self.missing_cells()

    def responses(self) -> list[ModelResponse]:
        return [
            self._cells[(c, m)]
            for c in self.case_ids
            for m in self.model_ids
            if (c, m) in self._cells
        ]


def batch_generate(
    cases: Sequence[PromptCase],
    models: Sequence[ModelEndpoint],
    config: InferenceConfig | None = None,
    parallelism: int = 4,
) -> ResponseMatrix:
    """Attempt every (case, model) cell; failures become holes, never aborts.

    Insertion is keyed, so the resulting matrix is identical whatever order
    the individual generations complete in.
    """
    if not cases:
        raise LitpipeError("batch_generate requires at least one case")
    if not models:
        raise LitpipeError("batch_generate requires at least one model")
    config = config or InferenceConfig()
    matrix = ResponseMatrix([c.case_id for c in cases], [m.model_id for m in models])

    jobs = [(case, model) for case in cases for model in models]

    def run(job: tuple[PromptCase, ModelEndpoint]) -> None:
        case, model = job
        try:
            matrix.put(generate_response(case, model, config))
        except GenerationError as exc:
            matrix.put_hole(case.case_id, model.model_id, str(exc))

    if parallelism <= 1:
        for job in jobs:
            run(job)
    else:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            list(pool.map(run, jobs))
    return matrix


def save_matrix(matrix: ResponseMatrix, jsonl_path: str | Path) -> tuple[Path, Path]:
    """Persist responses as JSONL plus a manifest of declared cases/models/holes."""
    jsonl_path = Path(jsonl_path)
    with open(jsonl_path, "w", encoding="utf-8") as fh:
        for r in matrix.responses():
            fh.write(
                json.dumps(
                    {
                        "case_id": r.case_id,
                        "model_id": r.model_id,
                        "text": r.text,
                        "latency": r.latency,
                        "config": r.config_used.to_params(),
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )
    manifest_path = jsonl_path.with_suffix(jsonl_path.suffix + ".manifest.json")
    manifest = {
        "cases": matrix.case_ids,
        "models": matrix.model_ids,
        "holes": [
            {"case_id": c, "model_id": m, "error": err} for (c, m), err in sorted(matrix.holes.items())
        ],
    }
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return jsonl_path, manifest_path


def load_matrix(jsonl_path: str | Path) -> ResponseMatrix:
    """Load a matrix written by save_matrix (manifest preferred for declarations)."""
    jsonl_path = Path(jsonl_path)
    if not jsonl_path.is_file():
        raise LitpipeError(f"matrix file not found: {jsonl_path}")
    rows = []
    with open(jsonl_path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                rows.append(json.loads(line))
    manifest_path = jsonl_path.with_suffix(jsonl_path.suffix + ".manifest.json")
    if manifest_path.is_file():
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        case_ids, model_ids = manifest["cases"], manifest["models"]
    else:
        case_ids = list(dict.fromkeys(r["case_id"] for r in rows))
        model_ids = list(dict.fromkeys(r["model_id"] for r in rows))
    matrix = ResponseMatrix(case_ids, model_ids)
    for r in rows:
        matrix.put(
            ModelResponse(
                case_id=r["case_id"],
                model_id=r["model_id"],
                text=r["text"],
                latency=float(r.get("latency", 0.0)),
                config_used=InferenceConfig(**r.get("config", {})),
            )
        )
    return matrix
