"""Training manifests for the three fine-tuning recipes and loss-log analysis.

The trainer itself is external; this module emits the exact recipe values as
a flat key=value manifest any trainer wrapper can consume, and parses the
trainer's loss CSV back for convergence checks.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .errors import ManifestError, TrainerLogError

DEFAULT_BASE_MODEL = "llama-7b"
DEFAULT_PATIENCE = 3

TRAINER_LOG_HEADER = "step,epoch,train_loss,eval_loss"


@dataclass(frozen=True)
class RecipeSpec:
    total_instructions: int
    epochs: int
    learning_rate: float
    batch_size: int
    eval_size: int


# eval_size is the held-out example count reserved from the training set.
RECIPES: dict[str, RecipeSpec] = {
    "alpaca_plus_syncovid": RecipeSpec(53097, 3, 3e-4, 128, 2000),
    "syncovid_only": RecipeSpec(1097, 30, 1e-5, 16, 100),
    "syncovid_plus_abstracts": RecipeSpec(2194, 30, 1e-5, 16, 100),
}


@dataclass(frozen=True)
class TrainingManifest:
    recipe_id: str
    base_model: str
    dataset_refs: tuple[tuple[str, int], ...]
    total_instructions: int
    epochs: int
    learning_rate: float
    batch_size: int
    eval_size: int


def make_training_manifest(
    recipe_id: str,
    dataset_refs: Sequence[tuple[str, int]],
    base_model: str = DEFAULT_BASE_MODEL,
) -> TrainingManifest:
    """Build the manifest for one of the three recipes.

    The dataset reference counts must sum to the recipe's expected total;
    a mismatch is an error naming both numbers.
    """
    if recipe_id not in RECIPES:
        raise ManifestError(
            f"unknown recipe {recipe_id!r}; expected one of {', '.join(sorted(RECIPES))}"
        )
    spec = RECIPES[recipe_id]
    refs = tuple((str(name), int(count)) for name, count in dataset_refs)
    if not refs:
        raise ManifestError("at least one dataset reference is required")
    for name, count in refs:
        if count <= 0:
            raise ManifestError(f"dataset ref {name!r} has non-positive count {count}")
    actual = sum(count for _, count in refs)
    if actual != spec.total_instructions:
        raise ManifestError(
            f"recipe {recipe_id!r} expects {spec.total_instructions} total instructions, "
            f"got {actual}"
        )
    return TrainingManifest(
        recipe_id=recipe_id,
        base_model=base_model,
        dataset_refs=refs,
        total_instructions=spec.total_instructions,
        epochs=spec.epochs,
        learning_rate=spec.learning_rate,
        batch_size=spec.batch_size,
        eval_size=spec.eval_size,
    )


def format_manifest(manifest: TrainingManifest) -> str:
    """Flat key=value serialization, fixed key order, one key per line."""
    refs = ",".join(f"{name}:{count}" for name, count in manifest.dataset_refs)
    lines = [
        f"recipe={manifest.recipe_id}",
        f"base_model={manifest.base_model}",
        f"total_instructions={manifest.total_instructions}",
        f"epochs={manifest.epochs}",
        f"learning_rate={manifest.learning_rate!r}",
        f"batch_size={manifest.batch_size}",
        f"eval_size={manifest.eval_size}",
        f"dataset_refs={refs}",
    ]
    return "\n".join(lines) + "\n"


def write_manifest(manifest: TrainingManifest, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(format_manifest(manifest), encoding="utf-8")
    return path


def parse_manifest(text: str) -> TrainingManifest:
    """Inverse of format_manifest; used for round-trip validation."""
    values: dict[str, str] = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        if "=" not in line:
            raise ManifestError(f"manifest line {line_no} is not key=value: {line!r}")
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()
    try:
        refs = tuple(
            (part.rsplit(":", 1)[0], int(part.rsplit(":", 1)[1]))
            for part in values["dataset_refs"].split(",")
            if part
        )
        return TrainingManifest(
            recipe_id=values["recipe"],
            base_model=values["base_model"],
            dataset_refs=refs,
            total_instructions=int(values["total_instructions"]),
            epochs=int(values["epochs"]),
            learning_rate=float(values["learning_rate"]),
            batch_size=int(values["batch_size"]),
            eval_size=int(values["eval_size"]),
        )
    except (KeyError, ValueError, IndexError) as exc:
        raise ManifestError(f"invalid manifest: {exc}") from exc


@dataclass(frozen=True)
class LossRecord:
    step: int
    epoch: float
    train_loss: float
    eval_loss: float | None


@dataclass(frozen=True)
class LossCurve:
    records: tuple[LossRecord, ...]

    def eval_points(self) -> list[LossRecord]:
        return [r for r in self.records if r.eval_loss is not None]


def _parse_loss(value: str, name: str, line_no: int) -> float:
    try:
        loss = float(value)
    except ValueError:
        raise TrainerLogError(f"unparseable {name} {value!r}", line_no) from None
    if loss != loss or loss in (float("inf"), float("-inf")) or loss < 0:
        raise TrainerLogError(f"{name} must be finite and non-negative, got {value!r}", line_no)
    return loss


def parse_trainer_log(path: str | Path) -> LossCurve:
    """Parse the step,epoch,train_loss,eval_loss CSV (eval_loss may be blank).

    An optional header line is tolerated. Steps must strictly increase;
    any invalid line aborts with its line number.
    """
    path = Path(path)
    if not path.is_file():
        raise TrainerLogError(f"trainer log not found: {path}")
    lines = path.read_text(encoding="utf-8").splitlines()
    records: list[LossRecord] = []
    prev_step: int | None = None
    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        if line_no == 1 and line.strip() == TRAINER_LOG_HEADER:
            continue
        parts = line.split(",")
        if len(parts) != 4:
            raise TrainerLogError(f"expected 4 comma-separated fields, got {len(parts)}", line_no)
        raw_step, raw_epoch, raw_train, raw_eval = (p.strip() for p in parts)
        try:
            step = int(raw_step)
        except ValueError:
            raise TrainerLogError(f"unparseable step {raw_step!r}", line_no) from None
        if prev_step is not None and step <= prev_step:
            raise TrainerLogError(
                f"step {step} does not increase over previous step {prev_step}", line_no
            )
        prev_step = step
        try:
            epoch = float(raw_epoch)
        except ValueError:
            raise TrainerLogError(f"unparseable epoch {raw_epoch!r}", line_no) from None
        train_loss = _parse_loss(raw_train, "train_loss", line_no)
        eval_loss = _parse_loss(raw_eval, "eval_loss", line_no) if raw_eval else None
        records.append(LossRecord(step, epoch, train_loss, eval_loss))
    if not records:
        raise TrainerLogError(f"trainer log {path} contains no records")
    return LossCurve(tuple(records))


def write_trainer_log(curve: LossCurve, path: str | Path) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(TRAINER_LOG_HEADER + "\n")
        for r in curve.records:
            eval_part = "" if r.eval_loss is None else repr(r.eval_loss)
            fh.write(f"{r.step},{r.epoch!r},{r.train_loss!r},{eval_part}\n")
    return path


@dataclass(frozen=True)
class OverfitVerdict:
    status: str  # "ok" | "overfit"
    first_step: int | None = None

    @property
    def is_overfit(self) -> bool:
        return self.status == "overfit"


def detect_overfit(curve: LossCurve, patience: int = DEFAULT_PATIENCE) -> OverfitVerdict:
    """Flag sustained eval-loss rises under non-increasing train loss.

    An eval point "rises" when its eval_loss strictly exceeds the previous
    eval point's while train_loss does not increase over the same pair.
    The curve is overfit when `patience` consecutive eval points rise;
    first_step is the step of the first rising point of the earliest such
    run. The rule uses ordering only, so it is scale-invariant.
    """
    if patience < 1:
        raise TrainerLogError(f"patience must be >= 1, got {patience}")
    points = curve.eval_points()
    if not points:
        raise TrainerLogError("curve has no eval points")
    consecutive = 0
    run_start: int | None = None
    for prev, cur in zip(points, points[1:]):
        rising = cur.eval_loss > prev.eval_loss and cur.train_loss <= prev.train_loss
        if rising:
            if consecutive == 0:
                run_start = cur.step
            consecutive += 1
            if consecutive >= patience:
                return OverfitVerdict("overfit", run_start)
        else:
            consecutive = 0
            run_start = None
    return OverfitVerdict("ok")
