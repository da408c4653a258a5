"""Concept-catalog generation from an instruction-tuned VLM.

Model responses are free-form and frequently messy (stray braces, numbered
lists, an explanation sentence before the actual keywords), so everything
goes through ``clean_attribute_response`` before it reaches a catalog.
Transient endpoint failures are retried with exponential backoff; a class
that keeps failing is recorded for manual entry instead of aborting the
whole run.
"""

from __future__ import annotations

import logging
import re
import time

import requests

log = logging.getLogger(__name__)

_ENUM_PREFIX = re.compile(r"^\s*(?:[-*•]|\d+[.)])\s*")
_STRIP_CHARS = " \t\"'`{}[]()"


def clean_attribute_response(text: str) -> list[str]:
    """Turn a raw completion into a deduplicated list of attribute strings."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        return []
    # prefer the first line that looks like a comma-separated list; models
    # often prepend an explanation sentence
    line = next((ln for ln in lines if ln.count(",") >= 2), None)
    if line is None:
        line = " ".join(lines)
    if ":" in line:
        line = line.rsplit(":", 1)[1]
    out, seen = [], set()
    for token in re.split(r"[,;]", line):
        token = _ENUM_PREFIX.sub("", token.strip())
        token = token.strip(_STRIP_CHARS).rstrip(".").strip().lower()
        if token and token not in seen:
            seen.add(token)
            out.append(token)
    return out


class HTTPVlmClient:
    """POSTs prompts to a completion endpoint: {"prompt": ...} -> {"text": ...}."""

    def __init__(self, base_url: str, timeout: float = 60.0):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout

    def complete(self, prompt: str) -> str:
        resp = requests.post(
            f"{self.base_url}/complete", json={"prompt": prompt}, timeout=self.timeout
        )
        resp.raise_for_status()
        return resp.json()["text"]


class StaticVlmClient:
    """Canned responses keyed by the class name found in the prompt; for tests
    and for replaying previously captured model output."""

    def __init__(self, responses: dict):
        self.responses = dict(responses)

    def complete(self, prompt: str) -> str:
        for key, text in self.responses.items():
            if key in prompt:
                return text
        raise KeyError(f"no canned response matches prompt {prompt!r}")


def generate_concept_catalog(job, client) -> tuple[dict, list[str]]:
    """Per-class attribute lists via the VLM; returns (catalog, failed classes).

    Failed classes appear in the catalog with an empty list so downstream
    stages still see them; they are also returned for manual follow-up.
    """
    catalog = {}
    failed = []
    for name in job.classes:
        prompt = job.concept_prompt.format(name)
        attrs = None
        for attempt in range(job.retries):
            try:
                attrs = clean_attribute_response(client.complete(prompt))
                break
            except Exception as exc:
                wait = job.backoff * (2 ** attempt)
                log.warning("concept generation for %r failed (%s); retry in %.1fs", name, exc, wait)
                if attempt + 1 < job.retries and wait > 0:
                    time.sleep(wait)
        if attrs is None:
            log.error("class %r needs manual concept entry", name)
            failed.append(name)
            catalog[name] = []
        else:
            catalog[name] = attrs
    return catalog, failed
