"""Run extraction stages from a YAML job file."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .extract import (
    CATALOG_JSON,
    build_concept_catalog,
    embed_concepts_and_prompts,
    extract_visual_embeddings,
)
from .job import ExtractionJob


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="cbxtract", description="Emit coreset-toolkit input files from raw data"
    )
    parser.add_argument("job", help="YAML job file")
    parser.add_argument(
        "--stage",
        choices=["visual", "catalog", "concepts", "all"],
        default="all",
    )
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")

    job = ExtractionJob.from_yaml(args.job)
    if args.stage in ("visual", "all") and job.dataset:
        summary = extract_visual_embeddings(job)
        print(f"visual: {summary['rows']} rows, {len(summary['skipped'])} skipped")
    if args.stage in ("catalog", "all") and job.vlm:
        result = build_concept_catalog(job)
        print(f"catalog: {result['catalog']} (failed: {result['failed']})")
    if args.stage in ("concepts", "all"):
        catalog_path = job.out_path / CATALOG_JSON
        catalog = json.loads(Path(catalog_path).read_text()) if catalog_path.is_file() else {}
        written = embed_concepts_and_prompts(job, catalog)
        print(f"concepts: {written['concepts']}, prompts: {written['prompts']}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
