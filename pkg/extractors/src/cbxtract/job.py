"""Extraction job description, loadable from a YAML file."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import yaml

DEFAULT_PROMPT_TEMPLATE = "a photo of a {}"
DEFAULT_CONCEPT_PROMPT = (
    "Can you give distinct attributes for {}. "
    "Give the output separated by a comma in the line."
)


@dataclass(frozen=True)
class ExtractionJob:
    classes: tuple[str, ...]
    out_dir: str
    dataset: str | None = None
    encoder: str = "color"  # "color", "http(s)://..." or "clip:<checkpoint-path>"
    vlm: str | None = None  # "http(s)://..." completion endpoint for concept generation
    prompt_template: str = DEFAULT_PROMPT_TEMPLATE
    concept_prompt: str = DEFAULT_CONCEPT_PROMPT
    batch_size: int = 32
    workers: int = 4
    retries: int = 3
    backoff: float = 0.5

    def __post_init__(self):
        if not self.classes:
            raise ValueError("job needs at least one class name")
        if self.batch_size < 1 or self.workers < 1:
            raise ValueError("batch_size and workers must be >= 1")

    @classmethod
    def from_yaml(cls, path) -> "ExtractionJob":
        raw = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
        if not isinstance(raw, dict):
            raise ValueError(f"{path}: job file must be a YAML mapping")
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"{path}: unknown job keys {sorted(unknown)}")
        raw["classes"] = tuple(raw.get("classes", ()))
        return cls(**raw)

    @property
    def out_path(self) -> Path:
        p = Path(self.out_dir)
        p.mkdir(parents=True, exist_ok=True)
        return p
