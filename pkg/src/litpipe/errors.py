"""Exception types shared across the pipeline.

Everything operational derives from LitpipeError so the CLI can map any
expected failure to exit code 1; usage errors stay with argparse (exit 2).
"""


class LitpipeError(Exception):
    """Base class for operational errors."""


class IngestError(LitpipeError):
    pass


class SampleError(LitpipeError):
    pass


class DatasetError(LitpipeError):
    pass


class JsonlFormatError(DatasetError):
    """A malformed JSONL line; carries the 1-based line number."""

    def __init__(self, path, line_no: int, message: str):
        self.path = str(path)
        self.line_no = line_no
        super().__init__(f"{path}: line {line_no}: {message}")


class BackendError(LitpipeError):
    pass


class SynthesisError(LitpipeError):
    pass


class QCError(LitpipeError):
    pass


class ManifestError(LitpipeError):
    pass


class TrainerLogError(LitpipeError):
    def __init__(self, message: str, line_no: int | None = None):
        self.line_no = line_no
        super().__init__(message if line_no is None else f"line {line_no}: {message}")


class GenerationError(LitpipeError):
    """A (case, model) cell failed permanently."""

    def __init__(self, case_id: str, model_id: str, message: str):
        self.case_id = case_id
        self.model_id = model_id
        super().__init__(f"generation failed for case={case_id!r} model={model_id!r}: {message}")


class SessionError(LitpipeError):
    pass


class JudgmentError(SessionError):
    """An invalid rank/grade submission."""


class JudgeReplyError(LitpipeError):
    """The LLM judge reply stayed unparseable after the reprompt."""

    def __init__(self, message: str, raw_reply: str):
        self.raw_reply = raw_reply
        super().__init__(message)
