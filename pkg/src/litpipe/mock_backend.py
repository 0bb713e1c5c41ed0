"""Deterministic offline chat backend for tests and network-free pipeline runs.

The completion is a pure function of a digest of the request messages (plus an
optional salt, so several mock "models" can disagree). The mock recognizes the
package's own prompt shapes: task-generation prompts get well-formed task
blocks honoring the requested word window, judge prompts get a valid JSON
ranking, and anything else gets a short digest-derived sentence.
"""

from __future__ import annotations

import hashlib
import json
import re

from fastapi import Request

from .rng import SplitMix64

_WINDOW_RE = re.compile(r"a (\d+)-(\d+) word abstract")
_N_TASKS_RE = re.compile(r"write (\d+) new tasks")
_LABEL_RE = re.compile(r"^### Response ([A-Z]):", re.MULTILINE)
_JUDGE_MARKER = '"ranks"'

_VERBS = (
    "Describe", "Identify", "Extract", "Evaluate", "List", "Determine",
    "Assess", "Compare", "Explain", "Classify",
)

_NOUNS = (
    "antibody", "cohort", "transmission", "vaccine", "mutation", "symptom",
    "biomarker", "pathway", "receptor", "genome", "protein", "variant",
    "outbreak", "therapy", "dosage", "immunity", "infection", "lesion",
    "prognosis", "serology", "titer", "viremia", "comorbidity", "sequela",
    "spike", "strain", "cytokine", "antigen", "placebo", "assay", "triage",
)

_FILLER = (
    "patients", "study", "viral", "clinical", "reported", "observed", "sample",
    "levels", "increased", "decreased", "significant", "respiratory", "acute",
    "analysis", "hospital", "outcomes", "baseline", "treatment", "control",
    "group", "measured", "exposure", "severity", "response", "markers",
    "population", "incidence", "mortality", "recovery", "ventilation",
    "protocol", "screening",
)


def _digest_rng(messages: list[dict], salt: str) -> tuple[SplitMix64, str]:
    payload = json.dumps({"salt": salt, "messages": messages}, sort_keys=True, ensure_ascii=False)
    digest = hashlib.sha256(payload.encode("utf-8")).hexdigest()
    return SplitMix64(int(digest[:16], 16)), digest


def _prompt_text(messages: list[dict]) -> str:
    return "\n".join(str(m.get("content", "")) for m in messages)


class DeterministicMockChat:
    """Offline stand-in for an OpenAI-compatible chat backend."""

    parallelism = 1

    def __init__(self, salt: str = ""):
        self.salt = salt
        self.request_count = 0

    def complete(self, messages: list[dict], **params) -> str:
        self.request_count += 1
        rng, digest = _digest_rng(messages, self.salt)
        text = _prompt_text(messages)
        labels = _LABEL_RE.findall(text)
        if labels and _JUDGE_MARKER in text:
            return self._judge_reply(labels, rng)
        if "new tasks" in text and _WINDOW_RE.search(text):
            return self._task_blocks(text, rng)
        return self._generic_reply(rng, digest)

    def _generic_reply(self, rng: SplitMix64, digest: str) -> str:
        words = " ".join(rng.choice(_FILLER) for _ in range(8))
        return f"Mock completion {digest[:12]}: the {words}."

    def _task_blocks(self, prompt: str, rng: SplitMix64) -> str:
        window = _WINDOW_RE.search(prompt)
        lo, hi = int(window.group(1)), int(window.group(2))
        n_match = _N_TASKS_RE.search(prompt)
        n = int(n_match.group(1)) if n_match else 3
        blocks = []
        for i in range(n):
            tag = format(rng.next_u64() & 0xFFFFFF, "06x")
            instruction = (
                f"{rng.choice(_VERBS)} the {rng.choice(_NOUNS)} {rng.choice(_NOUNS)} "
                f"findings reported in abstract {tag}"
            )
            n_words = lo + rng.randbelow(max(1, hi - lo + 1))
            abstract = " ".join(rng.choice(_FILLER) for _ in range(n_words))
            output = f"Finding {tag}: the {rng.choice(_NOUNS)} association was {rng.choice(_FILLER)}."
            blocks.append(
                f"## Task {i + 1}\n"
                f"### Instruction:\n{instruction}\n"
                f"### Input:\n{abstract}\n"
                f"### Output:\n{output}"
            )
        return "\n\n".join(blocks)

    def _judge_reply(self, labels: list[str], rng: SplitMix64) -> str:
        order = rng.shuffled(labels)
        ranks: dict[str, int] = {}
        next_rank = 1
        i = 0
        while i < len(order):
            group = 1
            if i + 1 < len(order) and rng.randbelow(4) == 0:
                group = 2  # occasional two-way tie
            for label in order[i : i + group]:
                ranks[label] = next_rank
            next_rank += group
            i += group
        grades = {label: ("Fail", "Pass", "Excellent")[rng.randbelow(3)] for label in labels}
        return json.dumps(
            {"ranks": {k: ranks[k] for k in sorted(ranks)}, "grades": {k: grades[k] for k in sorted(grades)}}
        )


def create_mock_app(salt: str = ""):
    """FastAPI app serving the mock over the OpenAI-compatible wire format."""
    from fastapi import FastAPI

    app = FastAPI(title="litpipe mock chat backend")

    @app.post("/chat/completions")
    async def chat_completions(request: Request):
        body = await request.json()
        messages = body.get("messages", [])
        model = str(body.get("model", "mock"))
        mock = DeterministicMockChat(salt=f"{salt}:{model}")
        text = mock.complete(messages)
        return {
            "id": "mock-" + hashlib.sha256(text.encode()).hexdigest()[:12],
            "object": "chat.completion",
            "model": model,
            "choices": [
                {
                    "index": 0,
                    "message": {"role": "assistant", "content": text},
                    "finish_reason": "stop",
                }
            ],
        }

    return app
