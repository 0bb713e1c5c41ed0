import pytest

from litpipe.errors import BackendError, GenerationError
from litpipe.inference import (
    InferenceConfig,
    ModelEndpoint,
    PromptCase,
    ResponseMatrix,
    batch_generate,
    generate_response,
    load_matrix,
    reference_model_preamble,
    render_prompt,
    save_matrix,
)
from litpipe.mock_backend import DeterministicMockChat


class RecordingBackend:
    def __init__(self, text="generated text"):
        self.text = text
        self.calls = []

    def complete(self, messages, **params):
        self.calls.append((messages, params))
        return self.text


class AlwaysFails:
    def complete(self, messages, **params):
        raise BackendError("endpoint down after retries")


def test_inference_defaults_quintuple():
    config = InferenceConfig()
    assert (config.temperature, config.top_p, config.top_k, config.beams, config.max_tokens) == (
        0.1, 0.75, 40, 4, 128,
    )


def test_inference_config_validation():
    with pytest.raises(ValueError):
        InferenceConfig(temperature=-0.1)
    with pytest.raises(ValueError):
        InferenceConfig(top_p=0.0)
    with pytest.raises(ValueError):
        InferenceConfig(beams=0)
    with pytest.raises(ValueError):
        InferenceConfig(max_tokens=0)


def test_render_prompt_with_input():
    case = PromptCase("c1", "Summarize this abstract", "the abstract body")
    text = render_prompt(case)
    assert "### Instruction:" in text
    assert "### Input:" in text
    assert text.endswith("### Response:\n")


def test_render_prompt_without_input():
    case = PromptCase("c1", "Name three viruses")
    text = render_prompt(case)
    assert "### Instruction:" in text
    assert "### Input:" not in text


def test_render_prompt_exact_fixture():
    case = PromptCase("c1", "Summarize this abstract", "Body text here.")
    expected = (
        "Below is an instruction that describes a task, paired with an input that provides "
        "further context. Write a response that appropriately completes the request.\n"
        "\n"
        "### Instruction:\nSummarize this abstract\n"
        "\n"
        "### Input:\nBody text here.\n"
        "\n"
        "### Response:\n"
    )
    assert render_prompt(case) == expected


def test_render_prompt_pure():
    case = PromptCase("c1", "Summarize this abstract", "x")
    assert render_prompt(case) == render_prompt(case)


def test_reference_preamble_exact():
    expected = (
        "Please respond to these instructions with a given input in a few sentences; "
        "assume that each question is independent of each other and answer each one "
        "individually."
    )
    assert reference_model_preamble() == expected
    assert reference_model_preamble() == reference_model_preamble()


def test_generate_response_transmits_default_params():
    backend = RecordingBackend()
    endpoint = ModelEndpoint("m1", backend, role="candidate")
    case = PromptCase("c1", "Summarize this abstract", "text")
    response = generate_response(case, endpoint)
    _, params = backend.calls[0]
    assert params == {"temperature": 0.1, "top_p": 0.75, "top_k": 40, "beams": 4, "max_tokens": 128}
    assert response.config_used == InferenceConfig()
    assert response.model_id == "m1"
    assert response.case_id == "c1"
    assert response.latency >= 0


def test_generate_response_candidate_uses_rendered_prompt():
    backend = RecordingBackend()
    case = PromptCase("c1", "Summarize this abstract", "text body")
    generate_response(case, ModelEndpoint("m1", backend, role="candidate"))
    messages, _ = backend.calls[0]
    assert len(messages) == 1
    assert messages[0]["role"] == "user"
    assert messages[0]["content"] == render_prompt(case)


def test_generate_response_reference_uses_preamble():
    backend = RecordingBackend()
    case = PromptCase("c1", "Summarize this abstract", "text body")
    generate_response(case, ModelEndpoint("ref", backend, role="reference"))
    messages, _ = backend.calls[0]
    assert messages[0] == {"role": "system", "content": reference_model_preamble()}
    assert messages[1]["content"] == "Summarize this abstract\n\ntext body"


def test_generate_response_mock_deterministic():
    endpoint = ModelEndpoint("m1", DeterministicMockChat(salt="m1"))
    case = PromptCase("c1", "Summarize this abstract", "text")
    assert generate_response(case, endpoint).text == generate_response(case, endpoint).text


def test_generate_response_failure_names_case_and_model():
    endpoint = ModelEndpoint("broken-model", AlwaysFails())
    case = PromptCase("case-7", "Summarize this abstract", "x")
    with pytest.raises(GenerationError) as exc_info:
        generate_response(case, endpoint)
    assert exc_info.value.case_id == "case-7"
    assert exc_info.value.model_id == "broken-model"


def test_nonstandard_params_warned_once_per_model(caplog):
    import litpipe.inference as inference_mod

    inference_mod._warned_models.discard("warn-model")
    endpoint = ModelEndpoint("warn-model", RecordingBackend())
    case = PromptCase("c1", "Summarize this abstract", "x")
    with caplog.at_level("WARNING", logger="litpipe.inference"):
        generate_response(case, endpoint)
        generate_response(case, endpoint)
    warnings = [r for r in caplog.records if "beams" in r.message]
    assert len(warnings) == 1


def cases(n):
    return [PromptCase(f"c{i}", f"Summarize item number {i}", f"input {i}") for i in range(n)]


def models(k):
    return [ModelEndpoint(f"m{j}", DeterministicMockChat(salt=f"m{j}")) for j in range(k)]


def test_batch_generate_26x4_complete():
    matrix = batch_generate(cases(26), models(4), parallelism=4)
    assert matrix.is_complete()
    assert len(matrix.responses()) == 104
    assert matrix.holes == {}


def test_batch_generate_single_hole():
    endpoints = models(3) + [ModelEndpoint("bad", AlwaysFails())]
    matrix = batch_generate(cases(4), endpoints, parallelism=2)
    assert not matrix.is_complete()
    assert set(matrix.missing_cells()) == {(f"c{i}", "bad") for i in range(4)}


def test_batch_generate_order_independent():
    sequential = batch_generate(cases(6), models(3), parallelism=1)
    parallel = batch_generate(cases(6), models(3), parallelism=8)
    assert {
        key: r.text for key, r in zip(
            [(c, m) for c in sequential.case_ids for m in sequential.model_ids],
            sequential.responses(),
        )
    } == {
        key: r.text for key, r in zip(
            [(c, m) for c in parallel.case_ids for m in parallel.model_ids],
            parallel.responses(),
        )
    }


def test_matrix_save_load_round_trip(tmp_path):
    matrix = batch_generate(cases(3), models(2), parallelism=1)
    jsonl_path, manifest_path = save_matrix(matrix, tmp_path / "matrix.jsonl")
    assert jsonl_path.is_file() and manifest_path.is_file()
    loaded = load_matrix(jsonl_path)
    assert loaded.case_ids == matrix.case_ids
    assert loaded.model_ids == matrix.model_ids
    for c in matrix.case_ids:
        for m in matrix.model_ids:
            assert loaded.get(c, m).text == matrix.get(c, m).text
    assert loaded.is_complete()


def test_matrix_completeness_decidable():
    matrix = ResponseMatrix(["c1", "c2"], ["m1"])
    assert matrix.missing_cells() == [("c1", "m1"), ("c2", "m1")]
    assert not matrix.is_complete()
