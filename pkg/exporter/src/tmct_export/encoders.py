"""Feature encoders producing unit-norm embeddings for compositions and
images.

Three backends share one interface:

* StubEncoder -- deterministic hash-seeded projections; no model weights,
  used for fixtures, tests, and plumbing verification.
* FinetunedEncoder -- the stub backbone wrapped with trained prompt/word
  tokens and a visual adapter (see finetune.py).
* ClipEncoder -- a real CLIP checkpoint via transformers; requires the
  optional [clip] dependencies and downloadable weights.

All three encode a composition from the prompt "a photo of <attribute>
<object>" and report the softmax temperature the engine should use.
"""

from __future__ import annotations

import hashlib
from pathlib import Path

import numpy as np
from PIL import Image

PROMPT_TOKENS = ("a", "photo", "of")
TOKEN_DIM = 96
PIXEL_SIDE = 16
PIXEL_DIM = PIXEL_SIDE * PIXEL_SIDE * 3


def _seed_from(text: str) -> int:
    return int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:8], "little")


def token_vector(token: str) -> np.ndarray:
    rng = np.random.default_rng(_seed_from(f"token:{token}"))
    return rng.normal(size=TOKEN_DIM)


def image_pixels(path: str | Path) -> np.ndarray:
    """Fixed preprocessing: RGB, 16x16 bilinear resize, [0,1] floats."""
    with Image.open(path) as img:
        arr = np.asarray(img.convert("RGB").resize((PIXEL_SIDE, PIXEL_SIDE),
                                                   Image.BILINEAR),
                         dtype=np.float64)
    return arr.reshape(-1) / 255.0


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def _unit_rows(m: np.ndarray) -> np.ndarray:
    return m / np.linalg.norm(m, axis=1, keepdims=True)


class StubEncoder:
    """Hash-seeded random projections standing in for a pretrained model.

    Deterministic in (model_id, inputs); text goes through the standard
    prompt, images through the fixed pixel preprocessing.
    """

    def __init__(self, model_id: str = "stub-projection-64", dim: int = 64,
                 temperature: float = 0.05):
        self.model_id = model_id
        self.dim = dim
        self.temperature = temperature
        rng = np.random.default_rng(_seed_from(f"model:{model_id}"))
        self.text_proj = rng.normal(size=(dim, TOKEN_DIM)) / np.sqrt(TOKEN_DIM)
        self.visual_proj = rng.normal(size=(dim, PIXEL_DIM)) / np.sqrt(PIXEL_DIM)

    def encode_texts(self, pairs: list[tuple[str, str]]) -> np.ndarray:
        rows = np.empty((len(pairs), self.dim))
        for i, (attr, obj) in enumerate(pairs):
            tokens = [token_vector(t) for t in (*PROMPT_TOKENS, attr, obj)]
            rows[i] = self.text_proj @ np.mean(tokens, axis=0)
        return _unit_rows(rows)

    def encode_image(self, path: str | Path) -> np.ndarray:
        return _unit(self.visual_proj @ image_pixels(path))


class FinetunedEncoder:
    """Stub backbone plus the trained prompt/word/adapter parameters from
    a finetune checkpoint."""

    def __init__(self, checkpoint_path: str | Path):
        from .finetune import load_checkpoint
        self.model, meta = load_checkpoint(checkpoint_path)
        self.model_id = meta["model_id"] + "+finetuned"
        self.dim = meta["dim"]
        self.temperature = meta["temperature"]
        self._attr_index = {a: i for i, a in enumerate(meta["attributes"])}
        self._obj_index = {o: i for i, o in enumerate(meta["objects"])}

    def encode_texts(self, pairs: list[tuple[str, str]]) -> np.ndarray:
        import torch
        idx = [(self._attr_index[a], self._obj_index[o]) for a, o in pairs]
        with torch.no_grad():
            return self.model.text_repr(idx).numpy().astype(np.float64)

    def encode_image(self, path: str | Path) -> np.ndarray:
        import torch
        pix = torch.from_numpy(image_pixels(path)[None, :])
        with torch.no_grad():
            return self.model.visual_repr(pix)[0].numpy().astype(np.float64)


class ClipEncoder:
    """Real CLIP weights through transformers; the temperature is the
    model's learned logit scale inverted."""

    def __init__(self, model_id: str = "openai/clip-vit-large-patch14"):
        try:
            import torch  # noqa: F401
            from transformers import CLIPModel, CLIPProcessor
        except ImportError as exc:
            raise RuntimeError(
                "ClipEncoder needs the [clip] extra (torch + transformers)") from exc
        self.model_id = model_id
        self.model = CLIPModel.from_pretrained(model_id)
        self.model.eval()
        self.processor = CLIPProcessor.from_pretrained(model_id)
        self.dim = int(self.model.config.projection_dim)
        self.temperature = float(1.0 / self.model.logit_scale.exp().item())

    def encode_texts(self, pairs: list[tuple[str, str]]) -> np.ndarray:
        import torch
        prompts = [f"a photo of {a} {o}" for a, o in pairs]
        inputs = self.processor(text=prompts, return_tensors="pt", padding=True)
        with torch.no_grad():
            emb = self.model.get_text_features(**inputs)
        emb = emb / emb.norm(dim=-1, keepdim=True)
        return emb.numpy().astype(np.float64)

    def encode_image(self, path: str | Path) -> np.ndarray:
        import torch
        with Image.open(path) as img:
            inputs = self.processor(images=img.convert("RGB"), return_tensors="pt")
        with torch.no_grad():
            emb = self.model.get_image_features(**inputs)[0]
        emb = emb / emb.norm()
        return emb.numpy().astype(np.float64)


def make_encoder(backend: str, model_id: str | None = None,
                 checkpoint: str | None = None):
    if checkpoint:
        return FinetunedEncoder(checkpoint)
    if backend == "stub":
        return StubEncoder(**({"model_id": model_id} if model_id else {}))
    if backend == "clip":
        return ClipEncoder(**({"model_id": model_id} if model_id else {}))
    raise ValueError(f"unknown encoder backend {backend!r}")
