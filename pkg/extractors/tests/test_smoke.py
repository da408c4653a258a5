"""End-to-end conformance: extractor outputs drive the core pipeline."""

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np
import pytest

from cbxtract.encoders import HTTPEncoder
from cbxtract.extract import (
    CATALOG_JSON,
    LABELS_CBL,
    PROMPTS_CBE,
    VISUAL_CBE,
    build_concept_catalog,
    embed_concepts_and_prompts,
    extract_visual_embeddings,
)
from cbxtract.job import ExtractionJob
from cbxtract.vlm import HTTPVlmClient, StaticVlmClient

from cbcoreset.bottleneck import ConceptCatalog
from cbcoreset.scorer import zero_shot_pseudo_labels
from cbcoreset.tensor_io import read_embeddings, read_labels


def test_pseudo_label_smoke_on_100_images(color_dataset, tmp_path):
    """The [pseudo-label] path: 100 images in, zero-shot agreement out."""
    root, classes, truth = color_dataset
    job = ExtractionJob(classes=tuple(classes), out_dir=str(tmp_path), dataset=str(root))

    extract_visual_embeddings(job)
    canned = StaticVlmClient({c: f"{c} glow, {c} shade, saturated {c}" for c in classes})
    build_concept_catalog(job, client=canned)
    catalog = json.loads((tmp_path / CATALOG_JSON).read_text())
    embed_concepts_and_prompts(job, catalog)

    # every artifact loads through the core toolkit's validating readers
    visual = read_embeddings(tmp_path / VISUAL_CBE)
    labels = read_labels(tmp_path / LABELS_CBL)
    prompts = read_embeddings(tmp_path / PROMPTS_CBE)
    ConceptCatalog.from_json_file(tmp_path / CATALOG_JSON)

    assert visual.rows == 100

    pseudo = zero_shot_pseudo_labels(visual, prompts)
    agreement = float(np.mean(pseudo.labels == labels.labels))
    chance = 1.0 / len(classes)
    assert agreement > chance + 0.25, f"agreement {agreement:.3f} barely above chance"


class _StubHandler(BaseHTTPRequestHandler):
    dim = 6

    def do_POST(self):
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        if self.path == "/encode_images":
            n = len(body["images"])
            payload = {"embeddings": [[1.0] + [0.0] * (self.dim - 1)] * n}
        elif self.path == "/encode_texts":
            payload = {"embeddings": [[0.0, 1.0] + [0.0] * (self.dim - 2)] * len(body["texts"])}
        elif self.path == "/complete":
            payload = {"text": "alpha, beta, gamma"}
        else:
            self.send_error(404)
            return
        data = json.dumps(payload).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):
        pass


@pytest.fixture()
def stub_server():
    server = ThreadingHTTPServer(("127.0.0.1", 0), _StubHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_address[1]}"
    server.shutdown()


def test_http_encoder_round_trip(stub_server, color_dataset):
    root, classes, truth = color_dataset
    enc = HTTPEncoder(stub_server)
    sample = sorted((root / "red").iterdir())[0]
    from PIL import Image

    with Image.open(sample) as img:
        vecs = enc.encode_images([img.convert("RGB")])
    assert vecs.shape == (1, 6) and vecs[0, 0] == 1.0
    texts = enc.encode_texts(["a photo of a red"])
    assert texts.shape == (1, 6) and texts[0, 1] == 1.0


def test_http_vlm_client(stub_server):
    client = HTTPVlmClient(stub_server)
    assert client.complete("Can you give distinct attributes for cat.") == "alpha, beta, gamma"
