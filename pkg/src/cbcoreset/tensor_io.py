"""On-disk formats and in-memory containers for embeddings, labels, scores and coresets.

Binary layouts (all little-endian, fixed regardless of host byte order):

* embeddings (``CBE1``): magic ``CBE1`` | u32 version=1 | u64 rows | u64 cols
  | u8 normalized flag | rows*cols float32, row-major.
* labels (``CBL1``): magic ``CBL1`` | u32 version=1 | u64 n | u32 num_classes
  | n * u32.

Score tables and coresets are line-delimited JSON so they stay greppable;
a coreset file carries one JSON metadata header line followed by one index
per line. Containers validate their invariants on construction and are
immutable afterwards, so they can be shared freely across threads.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    BadMagic,
    FormatError,
    InvalidSpec,
    NonFiniteValues,
    OutOfRangeLabel,
    TruncatedPayload,
    VersionMismatch,
)

EMBEDDING_MAGIC = b"CBE1"
LABEL_MAGIC = b"CBL1"
FORMAT_VERSION = 1

_EMB_HEADER = struct.Struct("<4sIQQB")
_LAB_HEADER = struct.Struct("<4sIQI")

NORM_TOL = 1e-5
AUM_MEAN_TOL = 1e-6


def _freeze(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class EmbeddingMatrix:
    """Dense float32 matrix of encoder outputs, one row per sample or concept."""

    data: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        a = np.ascontiguousarray(self.data, dtype=np.float32)
        if a.ndim != 2:
            raise InvalidSpec(f"embedding matrix must be 2-D, got shape {a.shape}")
        if not np.isfinite(a).all():
            raise NonFiniteValues("embedding matrix contains NaN or Inf")
        if self.normalized and a.shape[0] > 0:
            norms = np.linalg.norm(a.astype(np.float64), axis=1)
            if np.any(np.abs(norms - 1.0) > NORM_TOL):
                worst = float(np.max(np.abs(norms - 1.0)))
                raise InvalidSpec(
                    f"matrix flagged normalized but row norms deviate by up to {worst:.3g}"
                )
        object.__setattr__(self, "data", _freeze(a))

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    def __eq__(self, other):
        return (
            isinstance(other, EmbeddingMatrix)
            and self.normalized == other.normalized
            and self.data.shape == other.data.shape
            and np.array_equal(self.data, other.data)
        )


@dataclass(frozen=True)
class LabelVector:
    """Integer class ids in ``[0, num_classes)``."""

    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        a = np.ascontiguousarray(self.labels, dtype=np.uint32)
        if a.ndim != 1:
            raise InvalidSpec(f"labels must be 1-D, got shape {a.shape}")
        if self.num_classes < 1:
            raise InvalidSpec("num_classes must be >= 1")
        if a.size and int(a.max()) >= self.num_classes:
            raise OutOfRangeLabel(
                f"label {int(a.max())} >= num_classes {self.num_classes}"
            )
        object.__setattr__(self, "labels", _freeze(a))

    def __len__(self) -> int:
        return int(self.labels.size)

    def __eq__(self, other):
        return (
            isinstance(other, LabelVector)
            and self.num_classes == other.num_classes
            and np.array_equal(self.labels, other.labels)
        )


@dataclass(frozen=True)
class ScoreEntry:
    """Per-sample difficulty record."""

    index: int
    aum: float
    label: int | None = None
    pseudo_label: int | None = None
    margins: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.index < 0:
            raise InvalidSpec(f"negative sample index {self.index}")
        if not math.isfinite(self.aum):
            raise NonFiniteValues(f"non-finite aum for sample {self.index}")
        if self.margins is not None:
            object.__setattr__(self, "margins", tuple(float(m) for m in self.margins))
            if not self.margins:
                raise InvalidSpec(f"empty margin trajectory for sample {self.index}")
            mean = sum(self.margins) / len(self.margins)
            if abs(mean - self.aum) > AUM_MEAN_TOL:
                raise InvalidSpec(
                    f"sample {self.index}: aum {self.aum!r} != mean(margins) {mean!r}"
                )

    def to_json(self) -> str:
        return json.dumps(
            {
                "index": self.index,
                "label": self.label,
                "pseudo_label": self.pseudo_label,
                "aum": self.aum,
            },
            sort_keys=True,
        )


@dataclass(frozen=True)
class ScoreTable:
    """Full score table: one entry per sample, indices a permutation of 0..n-1."""

    entries: tuple[ScoreEntry, ...]

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        n = len(self.entries)
        seen = set()
        for e in self.entries:
            if e.index >= n:
                raise InvalidSpec(f"sample index {e.index} out of range for table of {n}")
            if e.index in seen:
                raise InvalidSpec(f"duplicate sample index {e.index}")
            seen.add(e.index)

    def __len__(self) -> int:
        return len(self.entries)

    def aums(self) -> np.ndarray:
        """AUM values ordered by sample index."""
        out = np.empty(len(self.entries), dtype=np.float64)
        for e in self.entries:
            out[e.index] = e.aum
        return out


@dataclass(frozen=True)
class Coreset:
    """Selected sample indices plus the provenance needed to reproduce them."""

    indices: tuple[int, ...]
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if any(i < 0 for i in idx):
            raise InvalidSpec("coreset contains a negative index")
        if len(set(idx)) != len(idx):
            raise InvalidSpec("coreset indices are not unique")
        if list(idx) != sorted(idx):
            raise InvalidSpec("coreset indices are not sorted")
        object.__setattr__(self, "indices", idx)

    def __len__(self) -> int:
        return len(self.indices)


# --- embeddings ---

def write_embeddings(path, m: EmbeddingMatrix) -> None:
    path = Path(path)
    header = _EMB_HEADER.pack(
        EMBEDDING_MAGIC, FORMAT_VERSION, m.rows, m.cols, 1 if m.normalized else 0
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(m.data.astype("<f4", copy=False).tobytes())


def read_embeddings(path) -> EmbeddingMatrix:
    raw = Path(path).read_bytes()
    if len(raw) < _EMB_HEADER.size:
        raise TruncatedPayload(f"{path}: file shorter than embedding header")
    magic, version, rows, cols, norm_flag = _EMB_HEADER.unpack_from(raw)
    if magic != EMBEDDING_MAGIC:
        raise BadMagic(f"{path}: expected magic {EMBEDDING_MAGIC!r}, found {magic!r}")
    if version != FORMAT_VERSION:
        raise VersionMismatch(f"{path}: unsupported embedding format version {version}")
    payload = raw[_EMB_HEADER.size:]
    expected = rows * cols * 4
    if len(payload) != expected:
        raise TruncatedPayload(
            f"{path}: header promises {expected} payload bytes, found {len(payload)}"
        )
    data = np.frombuffer(payload, dtype="<f4").reshape(rows, cols)
    if not np.isfinite(data).all():
        raise NonFiniteValues(f"{path}: embedding payload contains NaN or Inf")
    return EmbeddingMatrix(data=data, normalized=bool(norm_flag))


# --- labels ---

def write_labels(path, v: LabelVector) -> None:
    path = Path(path)
    header = _LAB_HEADER.pack(LABEL_MAGIC, FORMAT_VERSION, len(v), v.num_classes)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(v.labels.astype("<u4", copy=False).tobytes())


def read_labels(path) -> LabelVector:
    raw = Path(path).read_bytes()
    if len(raw) < _LAB_HEADER.size:
        raise TruncatedPayload(f"{path}: file shorter than label header")
    magic, version, n, num_classes = _LAB_HEADER.unpack_from(raw)
    if magic != LABEL_MAGIC:
        raise BadMagic(f"{path}: expected magic {LABEL_MAGIC!r}, found {magic!r}")
    if version != FORMAT_VERSION:
        raise VersionMismatch(f"{path}: unsupported label format version {version}")
    payload = raw[_LAB_HEADER.size:]
    if len(payload) != n * 4:
        raise TruncatedPayload(
            f"{path}: header promises {n * 4} payload bytes, found {len(payload)}"
        )
    labels = np.frombuffer(payload, dtype="<u4")
    return LabelVector(labels=labels, num_classes=num_classes)


# --- named embeddings (string-keyed rows, e.g. concept vectors) ---

def write_named_embeddings(matrix_path, names_path, names, m: EmbeddingMatrix) -> None:
    """Persist a string -> vector map as a CBE1 matrix plus a JSON name list."""
    names = list(names)
    if len(names) != m.rows:
        raise InvalidSpec(f"{len(names)} names for {m.rows} embedding rows")
    if len(set(names)) != len(names):
        raise InvalidSpec("embedding names are not unique")
    write_embeddings(matrix_path, m)
    Path(names_path).write_text(
        json.dumps(names, ensure_ascii=False, indent=0) + "\n", encoding="utf-8"
    )


def read_named_embeddings(matrix_path, names_path) -> tuple[list[str], EmbeddingMatrix]:
    m = read_embeddings(matrix_path)
    try:
        names = json.loads(Path(names_path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{names_path}: invalid JSON name list: {exc}") from exc
    if not isinstance(names, list) or not all(isinstance(s, str) for s in names):
        raise FormatError(f"{names_path}: expected a JSON array of strings")
    if len(names) != m.rows:
        raise TruncatedPayload(
            f"{names_path}: {len(names)} names for {m.rows} embedding rows"
        )
    if len(set(names)) != len(names):
        raise FormatError(f"{names_path}: embedding names are not unique")
    return names, m


# --- score tables ---

def write_scores(path, table: ScoreTable, margins_path=None) -> None:
    """Write a score table as JSONL; trajectories go to an optional JSONL side file.

    The side file keeps margins at full float64 precision (one
    ``{"index", "margins"}`` record per line, same order as the table) so
    the aum == mean(margins) identity survives a round trip in any
    likelihood mode.
    """
    with open(path, "w", encoding="utf-8") as fh:
        for e in table.entries:
            fh.write(e.to_json() + "\n")
    if margins_path is not None:
        with open(margins_path, "w", encoding="utf-8") as fh:
            for e in table.entries:
                if e.margins is None:
                    raise InvalidSpec("margins side file requested but table has no trajectories")
                fh.write(json.dumps({"index": e.index, "margins": list(e.margins)}) + "\n")


def _read_margin_rows(path) -> list[tuple[int, tuple[float, ...]]]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}:{lineno + 1}: invalid JSON: {exc}") from exc
            if not isinstance(rec, dict) or "index" not in rec or "margins" not in rec:
                raise FormatError(f"{path}:{lineno + 1}: margin record needs index and margins")
            rows.append((int(rec["index"]), tuple(float(m) for m in rec["margins"])))
    return rows


def read_scores(path, margins_path=None) -> ScoreTable:
    entries = []
    margins = _read_margin_rows(margins_path) if margins_path is not None else None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}:{lineno + 1}: invalid JSON: {exc}") from exc
            if not isinstance(rec, dict) or "index" not in rec or "aum" not in rec:
                raise FormatError(f"{path}:{lineno + 1}: score record needs index and aum")
            row = None
            if margins is not None:
                if len(entries) >= len(margins):
                    raise TruncatedPayload(
                        f"{margins_path}: fewer margin rows than score records"
                    )
                midx, row = margins[len(entries)]
                if midx != int(rec["index"]):
                    raise FormatError(
                        f"{margins_path}: margin row {len(entries)} is for sample "
                        f"{midx}, expected {rec['index']}"
                    )
            entries.append(
                ScoreEntry(
                    index=int(rec["index"]),
                    aum=float(rec["aum"]),
                    label=rec.get("label"),
                    pseudo_label=rec.get("pseudo_label"),
                    margins=row,
                )
            )
    if margins is not None and len(margins) != len(entries):
        raise TruncatedPayload(f"{margins_path}: more margin rows than score records")
    return ScoreTable(entries=tuple(entries))


# --- coresets ---

def write_coreset(path, coreset: Coreset) -> None:
    header = dict(coreset.meta)
    header["kind"] = "coreset"
    header["version"] = FORMAT_VERSION
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for i in coreset.indices:
            fh.write(f"{i}\n")


def read_coreset(path) -> Coreset:
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
        try:
            header = json.loads(first)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: invalid coreset header: {exc}") from exc
        if not isinstance(header, dict) or header.get("kind") != "coreset":
            raise BadMagic(f"{path}: missing coreset header line")
        if header.get("version") != FORMAT_VERSION:
            raise VersionMismatch(f"{path}: unsupported coreset version {header.get('version')}")
        indices = []
        for lineno, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            try:
                indices.append(int(line))
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno + 2}: bad index line {line!r}") from exc
    meta = {k: v for k, v in header.items() if k not in ("kind", "version")}
    return Coreset(indices=tuple(indices), meta=meta)


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
