"""Extractors that produce the coreset toolkit's input files from raw data."""

from .encoders import ClipEncoder, ColorProfileEncoder, HTTPEncoder, make_encoder
from .extract import build_concept_catalog, embed_concepts_and_prompts, extract_visual_embeddings
from .job import ExtractionJob
from .vlm import HTTPVlmClient, StaticVlmClient, clean_attribute_response

__version__ = "0.1.0"

__all__ = [
    "ClipEncoder",
    "ColorProfileEncoder",
    "ExtractionJob",
    "HTTPEncoder",
    "HTTPVlmClient",
    "StaticVlmClient",
    "build_concept_catalog",
    "clean_attribute_response",
    "embed_concepts_and_prompts",
    "extract_visual_embeddings",
    "make_encoder",
    "__version__",
]
