import pytest

from cbxtract.job import ExtractionJob
from cbxtract.vlm import StaticVlmClient, clean_attribute_response, generate_concept_catalog


def test_clean_plain_comma_list():
    assert clean_attribute_response("whiskers, long tail, pointed ears") == [
        "whiskers",
        "long tail",
        "pointed ears",
    ]


def test_clean_strips_explanation_and_braces():
    raw = (
        "Sure, here are some distinct attributes for a butterfly:\n"
        "{colorful wings}, [delicate antennae], slender body,, colorful wings."
    )
    assert clean_attribute_response(raw) == [
        "colorful wings",
        "delicate antennae",
        "slender body",
    ]


def test_clean_numbered_list():
    raw = "1. smooth scales, 2) forked tongue, - cold blooded"
    assert clean_attribute_response(raw) == ["smooth scales", "forked tongue", "cold blooded"]


def test_clean_empty_response():
    assert clean_attribute_response("   \n  ") == []


def job_for(classes, retries=3):
    return ExtractionJob(classes=tuple(classes), out_dir=".", retries=retries, backoff=0.0)


def test_catalog_generation_with_canned_responses():
    client = StaticVlmClient(
        {
            "cat": "whiskers, fur, meows",
            "dog": "Here you go: fur, barks, loyal",
        }
    )
    catalog, failed = generate_concept_catalog(job_for(["cat", "dog"]), client)
    assert catalog == {
        "cat": ["whiskers", "fur", "meows"],
        "dog": ["fur", "barks", "loyal"],
    }
    assert failed == []


class FlakyClient:
    def __init__(self, fail_times):
        self.fail_times = fail_times
        self.calls = 0

    def complete(self, prompt):
        self.calls += 1
        if self.calls <= self.fail_times:
            raise TimeoutError("simulated timeout")
        return "a, b, c"


def test_retry_recovers_from_transient_failures():
    client = FlakyClient(fail_times=2)
    catalog, failed = generate_concept_catalog(job_for(["cat"]), client)
    assert catalog == {"cat": ["a", "b", "c"]}
    assert failed == [] and client.calls == 3


def test_persistent_failure_flags_class_for_manual_entry():
    client = FlakyClient(fail_times=99)
    catalog, failed = generate_concept_catalog(job_for(["cat"], retries=2), client)
    assert failed == ["cat"]
    assert catalog == {"cat": []}
