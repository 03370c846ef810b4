"""Checkpoint container: configs, named parameter tensors, vocabulary, RNG state."""

from __future__ import annotations

import torch

from .data import DatasetError, Vocabulary
from .fusion import FusionConfig
from .model import ModelConfig, VisionReaderNet

CHECKPOINT_FORMAT = "visionreader-ckpt-v1"


def save_checkpoint(path, model: VisionReaderNet, vocab: Vocabulary, rng_state: dict | None = None, extra: dict | None = None) -> None:
    payload = {
        "format": CHECKPOINT_FORMAT,
        "model_config": model.config.to_dict(),
        "fusion_config": model.fusion_config.to_dict(),
        "dtype": str(model.fusion.token_embedding.weight.dtype).replace("torch.", ""),
        "params": {k: v.detach().cpu().clone() for k, v in model.state_dict().items()},
        "vocab": list(vocab.tokens),
        "rng_state": {"torch": (rng_state or {}).get("torch", torch.get_rng_state())},
        "extra": extra or {},
    }
    torch.save(payload, path)


def load_checkpoint(path) -> tuple[VisionReaderNet, Vocabulary, dict]:
    """Rebuild the model in eval mode; returns ``(model, vocab, payload)``."""
    payload = torch.load(path, map_location="cpu", weights_only=True)
    if not isinstance(payload, dict) or payload.get("format") != CHECKPOINT_FORMAT:
        raise DatasetError(f"{path}: not a {CHECKPOINT_FORMAT} checkpoint")
    vocab = Vocabulary(tuple(payload["vocab"]))
    mc = ModelConfig(**payload["model_config"])
    fc = FusionConfig(**payload["fusion_config"])
    model = VisionReaderNet(mc, fc, len(vocab)).to(getattr(torch, payload["dtype"]))
    model.load_state_dict(payload["params"])
    model.eval()
    return model, vocab, payload
