"""Concept bottleneck construction.

Takes per-class concept catalogs (cleaned LLM output), keeps the attributes
that are unique to a single class, and assembles the bottleneck embedding
matrix from supplied per-concept vectors. Concept strings are canonicalized
(lowercased, trimmed, trailing punctuation dropped) when a catalog is built,
so uniqueness tests and embedding lookups all operate on the same form.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmptyCatalog, InvalidK, InvalidSpec, MissingConceptEmbedding
from .tensor_io import EmbeddingMatrix

log = logging.getLogger(__name__)

_TRAILING_PUNCT = ".,;:!?)]}\"'`"

DEFAULT_CONCEPTS_PER_CLASS = 5


def canonicalize(s: str) -> str:
    """Collapse LLM formatting noise: trim, lowercase, drop trailing punctuation."""
    return s.strip().lower().rstrip(_TRAILING_PUNCT).strip()


@dataclass(frozen=True)
class ConceptCatalog:
    """Per-class concept strings, canonicalized and deduplicated within each class."""

    classes: tuple[str, ...]
    per_class_concepts: tuple[tuple[str, ...], ...]

    def __post_init__(self):
        classes = tuple(canonicalize(c) for c in self.classes)
        if len(classes) == 0:
            raise EmptyCatalog("catalog has no classes")
        if any(not c for c in classes):
            raise InvalidSpec("catalog contains an empty class name")
        if len(set(classes)) != len(classes):
            raise InvalidSpec("class names are not unique after canonicalization")
        cleaned = []
        for concepts in self.per_class_concepts:
            seen = set()
            kept = []
            for c in concepts:
                c = canonicalize(c)
                if c and c not in seen:
                    seen.add(c)
                    kept.append(c)
            cleaned.append(tuple(kept))
        if len(cleaned) != len(classes):
            raise InvalidSpec("one concept list required per class")
        object.__setattr__(self, "classes", classes)
        object.__setattr__(self, "per_class_concepts", tuple(cleaned))

    @classmethod
    def from_mapping(cls, mapping: dict) -> "ConceptCatalog":
        """Build from ``{class_name: [concept strings]}`` preserving key order."""
        return cls(
            classes=tuple(mapping.keys()),
            per_class_concepts=tuple(tuple(v) for v in mapping.values()),
        )

    @classmethod
    def from_json_file(cls, path) -> "ConceptCatalog":
        mapping = json.loads(Path(path).read_text(encoding="utf-8"))
        if not isinstance(mapping, dict):
            raise InvalidSpec(f"{path}: catalog must be a JSON object of class -> concepts")
        return cls.from_mapping(mapping)


@dataclass(frozen=True)
class Bottleneck:
    """Selected concepts per class; first entry of each list is the class name."""

    classes: tuple[str, ...]
    selected: tuple[tuple[str, ...], ...]
    k: int
    ec: EmbeddingMatrix | None = None
    warnings: tuple[str, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if len(self.selected) != len(self.classes):
            raise InvalidSpec("one selection group required per class")
        flat = self.flattened()
        if len(set(flat)) != len(flat):
            raise InvalidSpec("a selected concept appears under two classes")
        for cls_name, group in zip(self.classes, self.selected):
            if not group or group[0] != cls_name:
                raise InvalidSpec(f"selection for {cls_name!r} must start with the class name")
            if len(group) > self.k:
                raise InvalidSpec(f"selection for {cls_name!r} exceeds k={self.k}")
        if self.ec is not None and self.ec.rows != len(flat):
            raise InvalidSpec(
                f"bottleneck matrix has {self.ec.rows} rows for {len(flat)} concepts"
            )

    def flattened(self) -> list[str]:
        """All selected concepts in class order; matches the row order of ``ec``."""
        return [c for group in self.selected for c in group]

    @property
    def size(self) -> int:
        return len(self.flattened())

    def to_json(self) -> str:
        return json.dumps(
            {
                "k": self.k,
                "classes": list(self.classes),
                "selected": [list(g) for g in self.selected],
                "warnings": list(self.warnings),
            },
            sort_keys=True,
            ensure_ascii=False,
        )

    @classmethod
    def from_json_file(cls, path, ec: EmbeddingMatrix | None = None) -> "Bottleneck":
        rec = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(
            classes=tuple(rec["classes"]),
            selected=tuple(tuple(g) for g in rec["selected"]),
            k=int(rec["k"]),
            ec=ec,
            warnings=tuple(rec.get("warnings", ())),
        )


def select_discriminative(catalog: ConceptCatalog, k: int = DEFAULT_CONCEPTS_PER_CLASS) -> Bottleneck:
    """Pick up to k concepts per class: the class name plus its first k-1 unique attributes.

    An attribute counts as unique when it occurs in exactly one class's
    concept list and does not collide with any class name (a collision would
    put the same string under two classes in the flattened bottleneck).
    Classes without enough unique attributes get a shorter list and a warning.
    """
    if k < 1:
        raise InvalidK(f"k must be >= 1, got {k}")

    class_names = set(catalog.classes)
    occurrences: dict[str, int] = {}
    for concepts in catalog.per_class_concepts:
        for c in concepts:
            occurrences[c] = occurrences.get(c, 0) + 1

    selected = []
    warnings = []
    for cls_name, concepts in zip(catalog.classes, catalog.per_class_concepts):
        group = [cls_name]
        for c in concepts:
            if len(group) >= k:
                break
            if occurrences[c] == 1 and c not in class_names:
                group.append(c)
        if len(group) < k:
            msg = (
                f"class {cls_name!r}: only {len(group) - 1} unique attributes "
                f"available for k={k}"
            )
            warnings.append(msg)
            log.warning(msg)
        selected.append(tuple(group))

    return Bottleneck(
        classes=catalog.classes,
        selected=tuple(selected),
        k=k,
        warnings=tuple(warnings),
    )


def assemble_bottleneck(
    bottleneck: Bottleneck,
    concept_embeddings: dict,
    normalize: bool = True,
) -> Bottleneck:
    """Attach the bottleneck embedding matrix, rows in flattened selection order.

    ``concept_embeddings`` maps concept strings to d-vectors; keys are
    canonicalized before lookup. Rows are L2-normalized unless ``normalize``
    is off.
    """
    lookup = {canonicalize(k): np.asarray(v, dtype=np.float64) for k, v in concept_embeddings.items()}
    flat = bottleneck.flattened()
    missing = [c for c in flat if c not in lookup]
    if missing:
        raise MissingConceptEmbedding(missing)
    dims = {lookup[c].shape for c in flat}
    if len(dims) > 1 or any(len(s) != 1 for s in dims):
        raise InvalidSpec(f"concept embeddings disagree on dimension: {sorted(dims)}")

    rows = np.stack([lookup[c] for c in flat])
    if normalize:
        norms = np.linalg.norm(rows, axis=1, keepdims=True)
        if np.any(norms == 0):
            raise InvalidSpec("cannot normalize a zero concept embedding")
        rows = rows / norms
    ec = EmbeddingMatrix(rows.astype(np.float32), normalized=normalize)
    return Bottleneck(
        classes=bottleneck.classes,
        selected=bottleneck.selected,
        k=bottleneck.k,
        ec=ec,
        warnings=bottleneck.warnings,
    )
