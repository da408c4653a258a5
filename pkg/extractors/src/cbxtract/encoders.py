"""Image-text dual encoders behind a single interface.

Three backends, chosen by the job's ``encoder`` string:

* ``color``: a dependency-free encoder that maps images to a downsampled
  RGB grid and texts to the profile of a solid patch of any color word the
  text contains. Meant for offline tests and pipeline wiring; it is a real
  dual encoder, just a deliberately tiny one.
* ``http(s)://...``: remote inference endpoint (POST /encode_images with
  base64 payloads, POST /encode_texts).
* ``clip:<checkpoint-path>``: a CLIP checkpoint on local disk via
  ``transformers``; imported lazily so the core install stays light.
"""

from __future__ import annotations

import base64
import hashlib
import io
import re

import numpy as np
import requests
from PIL import Image, ImageColor

from .formats import l2_normalize

_GRID = 8  # color encoder resamples every image to GRID x GRID RGB


class ColorProfileEncoder:
    """Toy dual encoder keyed on color statistics; deterministic and offline."""

    id = "color"
    dim = _GRID * _GRID * 3

    def encode_images(self, images: list[Image.Image]) -> np.ndarray:
        rows = np.stack([self._profile(img) for img in images])
        return l2_normalize(rows)

    def encode_texts(self, texts: list[str]) -> np.ndarray:
        return l2_normalize(np.stack([self._text_profile(t) for t in texts]))

    def _profile(self, img: Image.Image) -> np.ndarray:
        small = img.convert("RGB").resize((_GRID, _GRID), Image.BILINEAR)
        return np.asarray(small, dtype=np.float64).reshape(-1) / 255.0

    def _text_profile(self, text: str) -> np.ndarray:
        for token in re.findall(r"[a-zA-Z]+", text.lower()):
            try:
                rgb = ImageColor.getrgb(token)
            except ValueError:
                continue
            return np.tile(np.asarray(rgb, dtype=np.float64) / 255.0, _GRID * _GRID)
        # no recognizable color word: stable pseudo-random direction per string
        digest = hashlib.md5(text.encode("utf-8")).digest()
        rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
        return rng.standard_normal(self.dim)


class HTTPEncoder:
    """Client for a remote dual-encoder inference service."""

    def __init__(self, base_url: str, timeout: float = 30.0):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self.id = f"http:{self.base_url}"

    def encode_images(self, images: list[Image.Image]) -> np.ndarray:
        payload = []
        for img in images:
            buf = io.BytesIO()
            img.convert("RGB").save(buf, format="PNG")
            payload.append(base64.b64encode(buf.getvalue()).decode("ascii"))
        return self._post("encode_images", {"images": payload})

    def encode_texts(self, texts: list[str]) -> np.ndarray:
        return self._post("encode_texts", {"texts": list(texts)})

    def _post(self, route: str, body: dict) -> np.ndarray:
        resp = requests.post(f"{self.base_url}/{route}", json=body, timeout=self.timeout)
        resp.raise_for_status()
        rows = np.asarray(resp.json()["embeddings"], dtype=np.float64)
        return l2_normalize(rows)


class ClipEncoder:
    """CLIP dual encoder loaded from a local checkpoint directory."""

    def __init__(self, checkpoint: str):
        try:
            import torch  # noqa: F401
            from transformers import CLIPModel, CLIPProcessor
        except ImportError as exc:
            raise RuntimeError(
                "clip encoder needs the optional [clip] dependencies installed"
            ) from exc
        self.id = f"clip:{checkpoint}"
        self.model = CLIPModel.from_pretrained(checkpoint)
        self.processor = CLIPProcessor.from_pretrained(checkpoint)
        self.model.eval()

    def encode_images(self, images: list[Image.Image]) -> np.ndarray:
        import torch

        inputs = self.processor(images=[i.convert("RGB") for i in images], return_tensors="pt")
        with torch.no_grad():
            feats = self.model.get_image_features(**inputs)
        return l2_normalize(feats.cpu().numpy().astype(np.float64))

    def encode_texts(self, texts: list[str]) -> np.ndarray:
        import torch

        inputs = self.processor(text=list(texts), return_tensors="pt", padding=True)
        with torch.no_grad():
            feats = self.model.get_text_features(**inputs)
        return l2_normalize(feats.cpu().numpy().astype(np.float64))


def make_encoder(spec: str):
    if spec == "color":
        return ColorProfileEncoder()
    if spec.startswith("http:") or spec.startswith("https:"):
        return HTTPEncoder(spec)
    if spec.startswith("clip:"):
        return ClipEncoder(spec.split(":", 1)[1])
    raise ValueError(f"unknown encoder spec {spec!r}")
