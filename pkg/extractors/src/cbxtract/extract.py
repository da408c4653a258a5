"""The three extraction stages: visual embeddings, concept catalog, text embeddings.

A dataset is a directory of images, optionally organized one subdirectory
per class (in which case a CBL1 label file is emitted alongside the
embeddings). Row order always follows the sorted file listing and is
recorded in an index manifest, one JSON line per row.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
from PIL import Image

from .encoders import make_encoder
from .formats import atomic_write_text, write_catalog, write_cbe, write_cbl, write_name_list
from .job import ExtractionJob
from .vlm import HTTPVlmClient, generate_concept_catalog

log = logging.getLogger(__name__)

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".gif", ".webp"}

VISUAL_CBE = "visual.cbe"
VISUAL_INDEX = "visual_index.jsonl"
LABELS_CBL = "labels.cbl"
CATALOG_JSON = "catalog.json"
CATALOG_REPORT = "catalog_report.json"
CONCEPTS_CBE = "concepts.cbe"
CONCEPT_NAMES = "concepts.json"
PROMPTS_CBE = "prompts.cbe"


def list_images(dataset: Path) -> list[Path]:
    return sorted(p for p in dataset.rglob("*") if p.suffix.lower() in IMAGE_SUFFIXES)


def _load(path: Path):
    try:
        with Image.open(path) as img:
            return img.convert("RGB")
    except Exception as exc:
        log.warning("skipping unreadable image %s (%s)", path, exc)
        return None


def extract_visual_embeddings(job: ExtractionJob) -> dict:
    """Encode every readable image under the dataset root.

    Writes ``visual.cbe`` plus an index manifest; when every image sits in
    a subdirectory named after a known class, ``labels.cbl`` too. Returns a
    small summary dict (row count, skipped files, written paths).
    """
    if not job.dataset:
        raise ValueError("job has no dataset path")
    dataset = Path(job.dataset)
    encoder = make_encoder(job.encoder)
    paths = list_images(dataset)
    out = job.out_path

    rows, kept, skipped = [], [], []
    with ThreadPoolExecutor(max_workers=job.workers) as pool:
        for start in range(0, len(paths), job.batch_size):
            chunk = paths[start : start + job.batch_size]
            images = list(pool.map(_load, chunk))
            good = [(p, im) for p, im in zip(chunk, images) if im is not None]
            skipped.extend(str(p) for p, im in zip(chunk, images) if im is None)
            if good:
                rows.append(encoder.encode_images([im for _, im in good]))
                kept.extend(p for p, _ in good)

    matrix = np.vstack(rows) if rows else np.zeros((0, encoder.dim))
    write_cbe(out / VISUAL_CBE, matrix, normalized=True)

    class_of = {}
    for p in kept:
        parent = p.parent.name
        class_of[p] = parent if parent in job.classes else None
    index_lines = [
        json.dumps({"row": i, "path": str(p), "label": class_of[p]}, sort_keys=True)
        for i, p in enumerate(kept)
    ]
    atomic_write_text(out / VISUAL_INDEX, "\n".join(index_lines) + ("\n" if index_lines else ""))

    written = {"visual": out / VISUAL_CBE, "index": out / VISUAL_INDEX}
    if kept and all(class_of[p] is not None for p in kept):
        labels = [job.classes.index(class_of[p]) for p in kept]
        write_cbl(out / LABELS_CBL, labels, num_classes=len(job.classes))
        written["labels"] = out / LABELS_CBL

    return {"rows": len(kept), "skipped": skipped, "written": written}


def build_concept_catalog(job: ExtractionJob, client=None) -> dict:
    """Prompt the VLM per class and write the cleaned catalog JSON."""
    if client is None:
        if not job.vlm:
            raise ValueError("job has no vlm endpoint and no client was supplied")
        client = HTTPVlmClient(job.vlm)
    catalog, failed = generate_concept_catalog(job, client)
    out = job.out_path
    write_catalog(out / CATALOG_JSON, catalog)
    atomic_write_text(
        out / CATALOG_REPORT,
        json.dumps({"failed": failed, "classes": len(catalog)}, sort_keys=True) + "\n",
    )
    return {"catalog": out / CATALOG_JSON, "failed": failed}


def embed_concepts_and_prompts(job: ExtractionJob, catalog: dict) -> dict:
    """Embed every catalog concept (class names included) and the class prompts.

    Emits the concept string -> vector map as a CBE1 matrix with a JSON
    name-list sidecar, plus one prompt-embedding row per class.
    """
    encoder = make_encoder(job.encoder)
    names = []
    for cls_name in job.classes:
        for concept in [cls_name] + list(catalog.get(cls_name, [])):
            if concept not in names:
                names.append(concept)
    out = job.out_path
    write_cbe(out / CONCEPTS_CBE, encoder.encode_texts(names), normalized=True)
    write_name_list(out / CONCEPT_NAMES, names)

    prompts = [job.prompt_template.format(c) for c in job.classes]
    write_cbe(out / PROMPTS_CBE, encoder.encode_texts(prompts), normalized=True)
    return {
        "concepts": out / CONCEPTS_CBE,
        "concept_names": out / CONCEPT_NAMES,
        "prompts": out / PROMPTS_CBE,
    }
