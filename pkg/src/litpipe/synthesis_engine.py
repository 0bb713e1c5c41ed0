"""Self-instruct synthesis loop: directed prompt, completion parsing, filters.

The loop samples in-context seed tasks, asks the chat backend for new task
blocks, parses them, and keeps only tasks whose input word count falls inside
the configured window and whose instruction is not a near-duplicate of an
already accepted one. Every rejection is recorded with a reason; the run stops
at the target or when the request budget runs out.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .chat_backend import ChatBackend, ChatBackendConfig, as_backend, backend_parallelism
from .corpus_ingest import Document, count_words
from .errors import BackendError, SynthesisError
from .rng import SplitMix64
from .task_store import InstructionTriplet

logger = logging.getLogger(__name__)

INSTRUCTION_HEADER = "### Instruction:"
INPUT_HEADER = "### Input:"
OUTPUT_HEADER = "### Output:"

DEFAULT_DEDUP_THRESHOLD = 0.7
DEFAULT_SEEDS_PER_REQUEST = 3
DEFAULT_TASKS_PER_REQUEST = 5


@dataclass
class SynthesisRun:
    rng_seed: int
    n_target: int
    accepted: list[InstructionTriplet] = field(default_factory=list)
    rejected: list[tuple[str, str]] = field(default_factory=list)
    request_count: int = 0
    budget_exhausted: bool = False


@dataclass
class SeedGenerationFailure:
    index: int
    instruction: str
    doc_id: str
    reason: str


def format_task_block(index: int, instruction: str, input_text: str, output: str) -> str:
    return (
        f"## Task {index}\n"
        f"{INSTRUCTION_HEADER}\n{instruction}\n"
        f"{INPUT_HEADER}\n{input_text}\n"
        f"{OUTPUT_HEADER}\n{output}"
    )


def build_directed_prompt(
    seed_examples: list[InstructionTriplet],
    n_requested: int,
    window: tuple[int, int],
) -> str:
    """Directed prompt steering synthesis toward biomedical tasks.

    Embeds every seed example as a numbered block in the same three-header
    format the parser expects, so the completion format is demonstrated
    in-context. Byte-deterministic for fixed arguments.
    """
    if not seed_examples:
        raise SynthesisError("build_directed_prompt requires at least one seed example")
    if n_requested < 1:
        raise SynthesisError(f"n_requested must be >= 1, got {n_requested}")
    lo, hi = window
    blocks = "\n\n".join(
        format_task_block(i + 1, t.instruction, t.input, t.output)
        for i, t in enumerate(seed_examples)
    )
    k = len(seed_examples)
    return (
        "You are generating training tasks for a biomedical research assistant.\n"
        f"Come up with {n_requested} new, diverse task instructions grounded in biomedical "
        "research literature (for example: epidemiology, virology, clinical trials, "
        "public health interventions, molecular biology).\n"
        "\n"
        "Requirements:\n"
        "1. Every task must concern biomedical research topics.\n"
        f"2. Every task must include an input formatted as a {lo}-{hi} word abstract of a "
        "plausible research paper.\n"
        "3. Instructions must be diverse; do not repeat or closely paraphrase an earlier "
        "instruction.\n"
        '4. Use exactly the format of the examples: each task starts with "## Task N" '
        f'followed by "{INSTRUCTION_HEADER}", "{INPUT_HEADER}", and "{OUTPUT_HEADER}" sections.\n'
        "\n"
        f"Here are {k} example tasks:\n"
        "\n"
        f"{blocks}\n"
        "\n"
        f"Now write {n_requested} new tasks, numbered from {k + 1}."
    )


def parse_generated_tasks(raw: str) -> tuple[list[InstructionTriplet], list[tuple[str, str]]]:
    """Parse completion text into task triplets plus per-block rejects.

    Blocks start at an "### Instruction:" header; "## Task N" lines act as
    separators. A block missing a section, or with an empty instruction or
    output, is rejected with a reason; rejects are data, not failures.
    """
    triplets: list[InstructionTriplet] = []
    rejects: list[tuple[str, str]] = []

    lines = raw.splitlines()
    blocks: list[list[str]] = []
    current: list[str] | None = None
    for line in lines:
        stripped = line.strip()
        if stripped.startswith(INSTRUCTION_HEADER):
            current = [line]
            blocks.append(current)
        elif stripped.startswith("## Task"):
            current = None
        elif current is not None:
            current.append(line)

    for block_lines in blocks:
        fragment = "\n".join(block_lines).strip()
        sections: dict[str, list[str]] = {"instruction": [], "input": [], "output": []}
        active: str | None = None
        seen: set[str] = set()
        for line in block_lines:
            stripped = line.strip()
            matched = None
            for header, name in (
                (INSTRUCTION_HEADER, "instruction"),
                (INPUT_HEADER, "input"),
                (OUTPUT_HEADER, "output"),
            ):
                if stripped.startswith(header):
                    matched = name
                    seen.add(name)
                    remainder = stripped[len(header):].strip()
                    if remainder:
                        sections[name].append(remainder)
                    break
            if matched is not None:
                active = matched
            elif active is not None:
                sections[active].append(line)

        if "input" not in seen:
            rejects.append((fragment, "missing_input"))
            continue
        if "output" not in seen:
            rejects.append((fragment, "missing_output"))
            continue
        instruction = "\n".join(sections["instruction"]).strip()
        input_text = "\n".join(sections["input"]).strip()
        output = "\n".join(sections["output"]).strip()
        if not instruction:
            rejects.append((fragment, "empty_instruction"))
            continue
        if not output:
            rejects.append((fragment, "empty_output"))
            continue
        triplets.append(
            InstructionTriplet(instruction=instruction, input=input_text, output=output, origin="synthetic")
        )
    return triplets, rejects


def generate_seed_outputs(
    pairs: list[tuple[str, Document]],
    backend: ChatBackend | ChatBackendConfig,
) -> tuple[list[InstructionTriplet], list[SeedGenerationFailure]]:
    """Generate one output per (instruction, abstract) pair via the backend.

    Items that fail after the backend's retries are reported in the failure
    list alongside the partial results, never silently dropped.
    """
    if not pairs:
        raise SynthesisError("generate_seed_outputs requires at least one pair")
    for i, (instruction, _) in enumerate(pairs):
        if not instruction:
            raise SynthesisError(f"pair {i} has an empty instruction")
    client = as_backend(backend)
    workers = backend_parallelism(backend)

    def run_one(pair: tuple[str, Document]) -> str:
        instruction, doc = pair
        messages = [{"role": "user", "content": f"{instruction}\n\n{doc.abstract}"}]
        return client.complete(messages)

    outputs: list[str | Exception] = [None] * len(pairs)  # type: ignore[list-item]
    if workers == 1:
        for i, pair in enumerate(pairs):
            try:
                outputs[i] = run_one(pair)
            except BackendError as exc:
                outputs[i] = exc
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(run_one, pair) for pair in pairs]
            for i, fut in enumerate(futures):
                try:
                    outputs[i] = fut.result()
                except BackendError as exc:
                    outputs[i] = exc

    triplets: list[InstructionTriplet] = []
    failures: list[SeedGenerationFailure] = []
    for i, ((instruction, doc), result) in enumerate(zip(pairs, outputs)):
        if isinstance(result, Exception):
            failures.append(SeedGenerationFailure(i, instruction, doc.doc_id, str(result)))
            continue
        text = result.strip()
        if not text:
            failures.append(SeedGenerationFailure(i, instruction, doc.doc_id, "empty_completion"))
            continue
        triplets.append(
            InstructionTriplet(
                instruction=instruction,
                input=doc.abstract,
                output=text,
                origin="seed_handwritten",
                source_doc_id=doc.doc_id,
            )
        )
    return triplets, failures


def synthesize_batch(
    seed_pool: list[InstructionTriplet],
    n_target: int,
    backend: ChatBackend | ChatBackendConfig,
    rng_seed: int,
    window: tuple[int, int],
    *,
    dedup_threshold: float = DEFAULT_DEDUP_THRESHOLD,
    seeds_per_request: int = DEFAULT_SEEDS_PER_REQUEST,
    tasks_per_request: int = DEFAULT_TASKS_PER_REQUEST,
    max_requests: int | None = None,
) -> SynthesisRun:
    """Run the synthesis loop until n_target accepted tasks or budget exhaustion.

    In-context seeds are drawn from the run RNG before dispatch and results
    are processed in request order, so with the deterministic mock the run is
    bit-identical regardless of completion arrival order. Rejections carry
    one of the reasons parse_failure, length_out_of_window, near_duplicate,
    or backend_error.
    """
    if not seed_pool:
        raise SynthesisError("synthesize_batch requires a non-empty seed pool")
    if n_target < 1:
        raise SynthesisError(f"n_target must be >= 1, got {n_target}")
    lo, hi = window
    if lo < 0 or hi < lo:
        raise SynthesisError(f"invalid word window {window}")
    if max_requests is None:
        max_requests = max(16, 4 * ((n_target + tasks_per_request - 1) // tasks_per_request))

    client = as_backend(backend)
    workers = backend_parallelism(backend)
    rng = SplitMix64(rng_seed)
    run = SynthesisRun(rng_seed=rng_seed, n_target=n_target)
    accepted_tokens: list[frozenset[str]] = []
    # Accepted tasks join the in-context pool, as in the self-instruct
    # bootstrap; this also keeps prompts varying for deterministic backends.
    pool = list(seed_pool)

    while len(run.accepted) < n_target and run.request_count < max_requests:
        wave = min(workers, max_requests - run.request_count)
        prompts = []
        for _ in range(wave):
            seeds = rng.sample(pool, min(seeds_per_request, len(pool)))
            prompts.append(build_directed_prompt(seeds, tasks_per_request, window))
        run.request_count += wave

        messages_batch = [[{"role": "user", "content": p}] for p in prompts]
        if wave == 1:
            results = [_call(client, messages_batch[0])]
        else:
            with ThreadPoolExecutor(max_workers=wave) as executor:
                futures = [executor.submit(_call, client, m) for m in messages_batch]
                results = [f.result() for f in futures]

        for result in results:  # request order, not completion order
            if len(run.accepted) >= n_target:
                break
            if isinstance(result, Exception):
                run.rejected.append((str(result), "backend_error"))
                continue
            triplets, parse_rejects = parse_generated_tasks(result)
            for fragment, _reason in parse_rejects:
                run.rejected.append((fragment, "parse_failure"))
            for t in triplets:
                if len(run.accepted) >= n_target:
                    break
                block = format_task_block(0, t.instruction, t.input, t.output)
                wc = count_words(t.input)
                if not lo <= wc <= hi:
                    run.rejected.append((block, "length_out_of_window"))
                    continue
                tokens = frozenset(t.instruction.lower().split())
                duplicate = False
                for other in accepted_tokens:
                    union = tokens | other
                    sim = 1.0 if not union else len(tokens & other) / len(union)
                    if sim >= dedup_threshold:
                        duplicate = True
                        break
                if duplicate:
                    run.rejected.append((block, "near_duplicate"))
                    continue
                run.accepted.append(t)
                accepted_tokens.append(tokens)
                pool.append(t)

    run.budget_exhausted = len(run.accepted) < n_target
    if run.budget_exhausted:
        logger.warning(
            "synthesis budget exhausted: %d/%d accepted after %d requests",
            len(run.accepted), n_target, run.request_count,
        )
    return run


def _call(client: ChatBackend, messages: list[dict]):
    try:
        return client.complete(messages)
    except BackendError as exc:
        return exc
