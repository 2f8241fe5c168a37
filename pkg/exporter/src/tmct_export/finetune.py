"""Optional base-model fine-tuning on the seen training set.

The trainable pieces mirror the usual prompt-tuning-plus-adapter recipe:
learnable prompt tokens and per-primitive word embeddings on the text
side, a bottleneck adapter (up-projection of a ReLU'd down-projection,
residual) on the visual side, with the backbone projections frozen.
The objective is cross-entropy over the seen compositions of the
temperature-scaled cosine logits.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import SplitSpec
from .encoders import PIXEL_DIM, PROMPT_TOKENS, StubEncoder, \
    image_pixels, token_vector


@dataclass
class FinetuneJob:
    dataset_root: str
    checkpoint_out: str
    model_id: str = "stub-projection-64"
    epochs: int = 20
    batch_size: int = 128
    lr: float = 5e-4
    weight_decay: float = 1e-5
    scheduler_step: int = 5
    scheduler_gamma: float = 0.5
    prompt_dropout: float = 0.3
    adapter_dropout: float = 0.1
    adapter_dim: int = 64
    seed: int = 0


@dataclass
class EpochStats:
    epoch: int
    loss: float
    accuracy: float


def _torch():
    try:
        import torch
        return torch
    except ImportError as exc:
        raise RuntimeError("fine-tuning needs the [finetune] extra (torch)") from exc


def build_model(split: SplitSpec, job: FinetuneJob):
    torch = _torch()
    import torch.nn as nn

    stub = StubEncoder(model_id=job.model_id)

    class PromptAdapterModel(nn.Module):
        def __init__(self):
            super().__init__()
            self.register_buffer("text_proj",
                                 torch.tensor(stub.text_proj, dtype=torch.float64))
            self.register_buffer("visual_proj",
                                 torch.tensor(stub.visual_proj, dtype=torch.float64))
            self.prompt = nn.Parameter(torch.tensor(
                np.stack([token_vector(t) for t in PROMPT_TOKENS]),
                dtype=torch.float64))
            self.attr_words = nn.Parameter(torch.tensor(
                np.stack([token_vector(a) for a in split.attributes]),
                dtype=torch.float64))
            self.obj_words = nn.Parameter(torch.tensor(
                np.stack([token_vector(o) for o in split.objects]),
                dtype=torch.float64))
            self.down = nn.Linear(PIXEL_DIM, job.adapter_dim, dtype=torch.float64)
            self.up = nn.Linear(job.adapter_dim, PIXEL_DIM, dtype=torch.float64)
            # Zero-initialized up-projection: the adapter starts as a no-op
            # and training can only move away from the zero-shot baseline.
            nn.init.zeros_(self.up.weight)
            nn.init.zeros_(self.up.bias)
            self.prompt_drop = nn.Dropout(job.prompt_dropout)
            self.adapter_drop = nn.Dropout(job.adapter_dropout)

        def text_repr(self, pair_indices):
            toks = []
            for a_idx, o_idx in pair_indices:
                prompt = self.prompt_drop(self.prompt)
                stack = torch.cat([prompt,
                                   self.attr_words[a_idx][None, :],
                                   self.obj_words[o_idx][None, :]], dim=0)
                toks.append(stack.mean(dim=0))
            raw = torch.stack(toks) @ self.text_proj.T
            return raw / raw.norm(dim=-1, keepdim=True)

        def visual_repr(self, pixels):
            residual = self.up(self.adapter_drop(torch.relu(self.down(pixels))))
            raw = (pixels + residual) @ self.visual_proj.T
            return raw / raw.norm(dim=-1, keepdim=True)

    return PromptAdapterModel(), stub


def finetune_base(split: SplitSpec, job: FinetuneJob,
                  root: str | Path | None = None) -> list[EpochStats]:
    """Train on the seen pairs; returns the per-epoch loss/accuracy log
    and writes the checkpoint."""
    torch = _torch()
    root = Path(root if root is not None else job.dataset_root)
    model, stub = build_model(split, job)
    torch.manual_seed(job.seed)

    pair_to_idx = {p: i for i, p in enumerate(split.train_pairs)}
    pair_indices = split.pair_indices(split.train_pairs)
    pixels = []
    labels = []
    for rel, attr, obj in split.train_images:
        pixels.append(image_pixels(root / rel))
        labels.append(pair_to_idx[(attr, obj)])
    if not pixels:
        raise ValueError("no training images in the split")
    X = torch.tensor(np.stack(pixels), dtype=torch.float64)
    y = torch.tensor(labels, dtype=torch.long)

    opt = torch.optim.Adam(model.parameters(), lr=job.lr,
                           weight_decay=job.weight_decay)
    sched = torch.optim.lr_scheduler.StepLR(opt, step_size=job.scheduler_step,
                                            gamma=job.scheduler_gamma)
    tau = stub.temperature
    history = []
    order_rng = np.random.default_rng(job.seed)
    for epoch in range(job.epochs):
        model.train()
        order = order_rng.permutation(len(y))
        total_loss = 0.0
        hits = 0
        for start in range(0, len(order), job.batch_size):
            batch = torch.tensor(order[start:start + job.batch_size],
                                 dtype=torch.long)
            feats = model.visual_repr(X[batch])
            protos = model.text_repr(pair_indices)
            logits = feats @ protos.T / tau
            loss = torch.nn.functional.cross_entropy(logits, y[batch])
            opt.zero_grad()
            loss.backward()
            opt.step()
            total_loss += loss.item() * len(batch)
            hits += int((logits.argmax(dim=1) == y[batch]).sum())
        sched.step()
        history.append(EpochStats(epoch=epoch, loss=total_loss / len(y),
                                  accuracy=hits / len(y)))

    meta = {
        "model_id": job.model_id,
        "dim": stub.dim,
        "temperature": tau,
        "attributes": split.attributes,
        "objects": split.objects,
        "adapter_dim": job.adapter_dim,
        "prompt_dropout": job.prompt_dropout,
        "adapter_dropout": job.adapter_dropout,
        "epochs": job.epochs,
        "history": [vars(h) for h in history],
    }
    torch.save({"meta": meta, "state": model.state_dict()}, job.checkpoint_out)
    return history


def train_accuracy(model, split: SplitSpec, root: str | Path, tau: float,
                   limit: int | None = None) -> float:
    """Seen-composition accuracy of the current model on train images."""
    torch = _torch()
    model.eval()
    images = split.train_images[:limit] if limit else split.train_images
    pair_to_idx = {p: i for i, p in enumerate(split.train_pairs)}
    X = torch.tensor(np.stack([image_pixels(Path(root) / rel)
                               for rel, _, _ in images]), dtype=torch.float64)
    y = torch.tensor([pair_to_idx[(a, o)] for _, a, o in images],
                     dtype=torch.long)
    with torch.no_grad():
        feats = model.visual_repr(X)
        protos = model.text_repr(split.pair_indices(split.train_pairs))
        logits = feats @ protos.T / tau
        return float((logits.argmax(dim=1) == y).double().mean())


def load_checkpoint(path: str | Path):
    torch = _torch()
    blob = torch.load(path, weights_only=False)
    meta = blob["meta"]

    class _Split:
        attributes = meta["attributes"]
        objects = meta["objects"]

    job = FinetuneJob(dataset_root="", checkpoint_out="",
                      model_id=meta["model_id"],
                      adapter_dim=meta["adapter_dim"],
                      prompt_dropout=meta["prompt_dropout"],
                      adapter_dropout=meta["adapter_dropout"])
    model, _ = build_model(_Split, job)
    model.load_state_dict(blob["state"])
    model.eval()
    return model, meta
