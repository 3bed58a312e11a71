"""Versioned checkpoint archive.

A checkpoint is a torch archive holding the codec config, every parameter
tensor under its canonical ``state_dict`` name, the training-stage tag, and
optional trainer state (optimizer, counters, loss log). ``param_digest``
gives a canonical byte-level fingerprint used by freeze checks and the
determinism tests.
"""

import hashlib
from dataclasses import asdict
from pathlib import Path

import torch

from .codec import CodecConfig, UnifiedCodec

FORMAT_VERSION = 1


def param_digest(named_tensors) -> str:
    """sha256 over (name, bytes) pairs in sorted-name order."""
    if hasattr(named_tensors, "state_dict"):
        named_tensors = named_tensors.state_dict()
    if isinstance(named_tensors, dict):
        items = sorted(named_tensors.items())
    else:
        items = sorted(named_tensors)
    h = hashlib.sha256()
    for name, t in items:
        h.update(name.encode())
        h.update(t.detach().cpu().contiguous().numpy().tobytes())
    return h.hexdigest()


def save_checkpoint(
    path,
    model: UnifiedCodec,
    stage_tag: str,
    optimizer: torch.optim.Optimizer | None = None,
    extra: dict | None = None,
) -> None:
    payload = {
        "format_version": FORMAT_VERSION,
        "config": asdict(model.config),
        "stage_tag": stage_tag,
        "params": model.state_dict(),
        "param_digest": param_digest(model),
    }
    if optimizer is not None:
        payload["optimizer"] = optimizer.state_dict()
    if extra:
        payload["extra"] = extra
    tmp = Path(str(path) + ".tmp")
    torch.save(payload, tmp)
    tmp.replace(path)


def load_checkpoint(path) -> tuple[UnifiedCodec, dict]:
    payload = torch.load(path, map_location="cpu", weights_only=False)
    if payload.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint format {payload.get('format_version')}")
    model = UnifiedCodec(CodecConfig(**payload["config"]))
    model.load_state_dict(payload["params"])
    return model, payload
