import pytest

from litpipe.chat_backend import ChatBackendConfig
from litpipe.corpus_ingest import Document, count_words
from litpipe.errors import BackendError, SynthesisError
from litpipe.mock_backend import DeterministicMockChat
from litpipe.synthesis_engine import (
    build_directed_prompt,
    generate_seed_outputs,
    parse_generated_tasks,
    synthesize_batch,
)
from litpipe.task_store import InstructionTriplet, token_overlap

from conftest import make_abstract


def seed_pool(n=3):
    texts = [
        "Summarize this abstract",
        "Identify the study design",
        "List the key findings",
        "Evaluate the quality of the evidence",
        "Extract the sample population",
    ]
    return [
        InstructionTriplet(texts[i % len(texts)], make_abstract(260 + i), f"Output {i}", "seed_handwritten")
        for i in range(n)
    ]


class EchoBackend:
    def __init__(self, text="canned reply"):
        self.text = text

    def complete(self, messages, **params):
        return self.text


class FaultAtIndex:
    """Fails permanently for one request index, succeeds elsewhere."""

    def __init__(self, fail_index, text="ok output"):
        self.fail_index = fail_index
        self.calls = 0
        self.text = text

    def complete(self, messages, **params):
        idx = self.calls
        self.calls += 1
        if idx == self.fail_index:
            raise BackendError("injected permanent failure")
        return self.text


# --- directed prompt ---------------------------------------------------------


def test_prompt_embeds_seeds_and_window():
    seeds = seed_pool(3)
    prompt = build_directed_prompt(seeds, 5, (250, 300))
    assert "250-300 word" in prompt
    for t in seeds:
        assert t.instruction in prompt
        assert t.input in prompt
        assert t.output in prompt


def test_prompt_deterministic():
    seeds = seed_pool(3)
    assert build_directed_prompt(seeds, 5, (250, 300)) == build_directed_prompt(seeds, 5, (250, 300))


def test_prompt_rejects_empty_seeds():
    with pytest.raises(SynthesisError):
        build_directed_prompt([], 5, (250, 300))


# --- parsing ---------------------------------------------------------------


WELL_FORMED = """## Task 1
### Instruction:
Describe the viral entry mechanism
### Input:
some abstract text
### Output:
It binds the receptor.

## Task 2
### Instruction:
List the symptoms discussed
### Input:
another abstract body
### Output:
Fever and cough."""


def test_parse_two_blocks():
    triplets, rejects = parse_generated_tasks(WELL_FORMED)
    assert len(triplets) == 2
    assert rejects == []
    assert triplets[0].instruction == "Describe the viral entry mechanism"
    assert triplets[0].input == "some abstract text"
    assert triplets[0].output == "It binds the receptor."
    assert triplets[1].output == "Fever and cough."


def test_parse_empty_string():
    assert parse_generated_tasks("") == ([], [])


def test_parse_missing_output_rejected():
    raw = "### Instruction:\nDo something useful\n### Input:\nbody text\n"
    triplets, rejects = parse_generated_tasks(raw)
    assert triplets == []
    assert len(rejects) == 1
    assert rejects[0][1] == "missing_output"


def test_parse_missing_input_rejected():
    raw = "### Instruction:\nDo something\n### Output:\nresult\n"
    triplets, rejects = parse_generated_tasks(raw)
    assert triplets == []
    assert rejects[0][1] == "missing_input"


def test_parse_mixed_good_and_bad():
    raw = WELL_FORMED + "\n\n## Task 3\n### Instruction:\nBroken block\n### Input:\nonly input\n"
    triplets, rejects = parse_generated_tasks(raw)
    assert len(triplets) == 2
    assert len(rejects) == 1


def test_parse_inline_header_content():
    raw = "### Instruction: Summarize it\n### Input: the text\n### Output: done\n"
    triplets, rejects = parse_generated_tasks(raw)
    assert len(triplets) == 1
    assert triplets[0].instruction == "Summarize it"


# --- seed outputs ------------------------------------------------------------


def docs(n):
    return [Document(f"d{i}", f"Title {i}", make_abstract(30, stem=f"s{i}"), "") for i in range(n)]


def test_seed_outputs_echo_mock():
    pairs = [("Summarize this abstract", d) for d in docs(4)]
    triplets, failures = generate_seed_outputs(pairs, EchoBackend("the canned string"))
    assert failures == []
    assert len(triplets) == 4
    assert all(t.output == "the canned string" for t in triplets)
    assert all(t.origin == "seed_handwritten" for t in triplets)
    assert triplets[0].input == pairs[0][1].abstract


def test_seed_outputs_175_pairs():
    pairs = [("Summarize this abstract", d) for d in docs(175)]
    triplets, failures = generate_seed_outputs(pairs, DeterministicMockChat())
    assert len(triplets) == 175
    assert failures == []


def test_seed_outputs_fault_injection():
    pairs = [("Summarize this abstract", d) for d in docs(5)]
    backend = FaultAtIndex(fail_index=2)
    triplets, failures = generate_seed_outputs(pairs, backend)
    assert len(triplets) == 4
    assert len(failures) == 1
    assert failures[0].index == 2
    assert failures[0].doc_id == "d2"


def test_seed_outputs_empty_pairs_error():
    with pytest.raises(SynthesisError):
        generate_seed_outputs([], EchoBackend())


# --- synthesis loop ----------------------------------------------------------


def test_synthesize_reaches_target_deterministically():
    run1 = synthesize_batch(seed_pool(), 50, DeterministicMockChat(), 42, (250, 300))
    run2 = synthesize_batch(seed_pool(), 50, DeterministicMockChat(), 42, (250, 300))
    assert len(run1.accepted) == 50
    assert not run1.budget_exhausted
    assert run1.accepted == run2.accepted
    assert run1.rejected == run2.rejected
    assert run1.request_count == run2.request_count


def test_synthesize_window_invariant():
    run = synthesize_batch(seed_pool(), 40, DeterministicMockChat(), 7, (250, 300))
    assert all(250 <= count_words(t.input) <= 300 for t in run.accepted)


def test_synthesize_no_near_duplicates_above_threshold():
    run = synthesize_batch(seed_pool(), 40, DeterministicMockChat(), 9, (250, 300), dedup_threshold=0.7)
    accepted = run.accepted
    for i in range(len(accepted)):
        for j in range(i + 1, len(accepted)):
            assert token_overlap(accepted[i].instruction, accepted[j].instruction) < 0.7


def test_synthesize_malformed_blocks_keep_run_alive():
    class MalformedBackend:
        def complete(self, messages, **params):
            return "### Instruction:\nBroken task\n### Input:\nno output section\n"

    run = synthesize_batch(seed_pool(), 5, MalformedBackend(), 1, (250, 300), max_requests=6)
    assert run.budget_exhausted
    assert run.accepted == []
    assert run.request_count == 6
    assert all(reason == "parse_failure" for _, reason in run.rejected)
    assert len(run.rejected) == 6


def test_synthesize_length_out_of_window():
    short_input = make_abstract(120)

    class ShortBackend:
        def complete(self, messages, **params):
            return f"### Instruction:\nDescribe the outcome\n### Input:\n{short_input}\n### Output:\nDone\n"

    run = synthesize_batch(seed_pool(), 3, ShortBackend(), 1, (250, 300), max_requests=4)
    assert run.accepted == []
    assert run.budget_exhausted
    assert {reason for _, reason in run.rejected} == {"length_out_of_window"}
    assert len(run.rejected) == 4


def test_synthesize_budget_exhaustion_flag():
    run = synthesize_batch(seed_pool(), 1000, DeterministicMockChat(), 3, (250, 300), max_requests=5)
    assert run.budget_exhausted
    assert run.request_count == 5
    assert len(run.accepted) <= 1000


def test_synthesize_request_count_within_budget():
    run = synthesize_batch(seed_pool(), 30, DeterministicMockChat(), 3, (250, 300), max_requests=100)
    assert run.request_count <= 100


def test_synthesize_full_1097_target():
    run = synthesize_batch(seed_pool(), 1097, DeterministicMockChat(), 7, (250, 300))
    assert len(run.accepted) == 1097
    assert not run.budget_exhausted


def test_synthesize_backend_errors_recorded():
    good_block = (
        "### Instruction:\nDescribe the trial outcome measures\n"
        f"### Input:\n{make_abstract(260)}\n### Output:\nPrimary endpoints were met.\n"
    )
    backend = FaultAtIndex(fail_index=0, text=good_block)
    run = synthesize_batch(seed_pool(), 1, backend, 1, (250, 300), max_requests=4)
    assert len(run.accepted) == 1
    assert any(reason == "backend_error" for _, reason in run.rejected)


def test_synthesize_parallel_backend_matches_serial():
    class ParallelMock(DeterministicMockChat):
        parallelism = 4

    serial = synthesize_batch(seed_pool(), 30, DeterministicMockChat(), 5, (250, 300))
    parallel = synthesize_batch(seed_pool(), 30, ParallelMock(), 5, (250, 300))
    # Wave sizing differs, but the accepted prefix is drawn from the same
    # deterministic prompt stream, so the accepted sets coincide per request
    # order. We assert the core reproducibility contract on the parallel run.
    parallel2 = synthesize_batch(seed_pool(), 30, ParallelMock(), 5, (250, 300))
    assert parallel.accepted == parallel2.accepted
    assert parallel.request_count == parallel2.request_count
    assert len(serial.accepted) == len(parallel.accepted) == 30


def test_backend_config_validation():
    with pytest.raises(ValueError):
        ChatBackendConfig(base_url="http://x", model_name="m", timeout=0)
    with pytest.raises(ValueError):
        ChatBackendConfig(base_url="http://x", model_name="m", max_retries=-1)
    with pytest.raises(ValueError):
        ChatBackendConfig(base_url="http://x", model_name="m", parallelism=0)
