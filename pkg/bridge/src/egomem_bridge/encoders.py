"""Embedding encoders behind the two appearance channels and the text space.

Model identifiers select the backend:

    builtin:<dim>        deterministic image encoder (block-mean pyramid of
                         the crop projected through a seeded Gaussian matrix)
    builtin-text:<dim>   deterministic bag-of-token text encoder
    hf:<model-name>      transformers-backed encoder; loading may fail in
                         offline environments, which aborts the run

The builtin encoders are fully deterministic across runs and platforms and
emit unit-norm float vectors at the requested dimension, which is all the
episode contract requires; the engine never learns model names, only dims
and provenance strings.
"""

from __future__ import annotations

import zlib

import numpy as np

PATCH = 16  # block-mean grid resolution per image axis


class BridgeError(Exception):
    pass


def _seed_stream(*parts):
    return [zlib.crc32(str(p).encode("utf-8")) for p in parts]


def _projection(dim_in: int, dim_out: int, tag: str) -> np.ndarray:
    rng = np.random.default_rng(_seed_stream("egomem-bridge", tag,
                                             dim_in, dim_out))
    return rng.standard_normal((dim_out, dim_in)) / np.sqrt(dim_in)


def _normalize(vec: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(vec)
    if n == 0.0:
        out = np.zeros_like(vec)
        out[0] = 1.0
        return out
    return vec / n


def block_mean(image: np.ndarray, grid: int = PATCH) -> np.ndarray:
    """Deterministic grid x grid x channels block-mean downsample."""
    if image.ndim == 2:
        image = image[:, :, None]
    h, w, c = image.shape
    rows = np.linspace(0, h, grid + 1).astype(int)
    cols = np.linspace(0, w, grid + 1).astype(int)
    out = np.empty((grid, grid, c), dtype=np.float64)
    for i in range(grid):
        r0, r1 = rows[i], max(rows[i + 1], rows[i] + 1)
        for j in range(grid):
            c0, c1 = cols[j], max(cols[j + 1], cols[j] + 1)
            out[i, j] = image[min(r0, h - 1):min(r1, h),
                              min(c0, w - 1):min(c1, w)].reshape(-1, c).mean(axis=0)
    return out


class BuiltinImageEncoder:
    """Crop -> block-mean pyramid -> seeded Gaussian projection -> unit norm."""

    def __init__(self, dim: int, tag: str):
        self.dim = dim
        self._proj = _projection(PATCH * PATCH * 3, dim, f"img:{tag}")

    def encode(self, image: np.ndarray) -> np.ndarray:
        arr = np.asarray(image, dtype=np.float64)
        if arr.ndim == 2:
            arr = np.stack([arr] * 3, axis=-1)
        if arr.shape[-1] == 4:
            arr = arr[..., :3]
        feats = block_mean(arr / 255.0).ravel()
        return _normalize(self._proj @ feats)


class BuiltinTextEncoder:
    """Sum of per-token seeded Gaussian vectors, unit-normalized."""

    def __init__(self, dim: int, tag: str):
        self.dim = dim
        self.tag = tag

    def encode(self, text: str) -> np.ndarray:
        total = np.zeros(self.dim)
        for token in text.lower().split():
            rng = np.random.default_rng(
                _seed_stream("egomem-bridge", f"text:{self.tag}", token))
            total += rng.standard_normal(self.dim)
        return _normalize(total)


class HFImageEncoder:
    """CLIP-style image tower via transformers; loading needs model weights."""

    def __init__(self, model_name: str):
        try:
            import torch
            from transformers import CLIPModel, CLIPProcessor
            self._torch = torch
            self._model = CLIPModel.from_pretrained(model_name)
            self._proc = CLIPProcessor.from_pretrained(model_name)
            self._model.eval()
            self.dim = self._model.config.projection_dim
        except Exception as exc:
            raise BridgeError(f"cannot load image model {model_name!r}: {exc}")

    def encode(self, image: np.ndarray) -> np.ndarray:
        from PIL import Image
        pil = Image.fromarray(np.asarray(image, dtype=np.uint8))
        with self._torch.no_grad():
            inputs = self._proc(images=pil, return_tensors="pt")
            feats = self._model.get_image_features(**inputs)[0].numpy()
        return _normalize(feats.astype(np.float64))


class HFTextEncoder:
    def __init__(self, model_name: str):
        try:
            import torch
            from transformers import CLIPModel, CLIPProcessor
            self._torch = torch
            self._model = CLIPModel.from_pretrained(model_name)
            self._proc = CLIPProcessor.from_pretrained(model_name)
            self._model.eval()
            self.dim = self._model.config.projection_dim
        except Exception as exc:
            raise BridgeError(f"cannot load text model {model_name!r}: {exc}")

    def encode(self, text: str) -> np.ndarray:
        with self._torch.no_grad():
            inputs = self._proc(text=[text], return_tensors="pt", padding=True)
            feats = self._model.get_text_features(
                input_ids=inputs["input_ids"],
                attention_mask=inputs["attention_mask"])[0].numpy()
        return _normalize(feats.astype(np.float64))


def make_image_encoder(model_id: str, tag: str):
    if model_id.startswith("builtin:"):
        return BuiltinImageEncoder(int(model_id.split(":", 1)[1]), tag)
    if model_id.startswith("hf:"):
        return HFImageEncoder(model_id.split(":", 1)[1])
    raise BridgeError(f"unknown image model identifier {model_id!r}")


def make_text_encoder(model_id: str, tag: str = "text"):
    if model_id.startswith("builtin-text:"):
        return BuiltinTextEncoder(int(model_id.split(":", 1)[1]), tag)
    if model_id.startswith("hf:"):
        return HFTextEncoder(model_id.split(":", 1)[1])
    raise BridgeError(f"unknown text model identifier {model_id!r}")
