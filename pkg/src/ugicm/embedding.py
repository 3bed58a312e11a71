"""Embedding backbones for semantic supervision.

Backbones are looked up by name. ``tiny-test`` is a fixed-seed frozen
convnet that keeps the whole test suite self-contained; ``clip-vit-b32``
wraps the pretrained CLIP vision tower when its weights are available.
"""

import torch
import torch.nn.functional as F
from torch import nn


class EmbeddingModel(nn.Module):
    """Maps an image of any size to a unit-norm embedding, differentiably.

    Subclasses set ``resolution``, ``dim``, ``mean``/``std`` preprocessing
    constants and implement ``features`` on preprocessed input.
    """

    resolution: int
    dim: int
    mean: tuple[float, float, float]
    std: tuple[float, float, float]

    def preprocess(self, x: torch.Tensor) -> torch.Tensor:
        if x.dim() == 3:
            x = x[None]
        x = x.to(next(self.parameters()).dtype)
        x = F.interpolate(
            x, size=(self.resolution, self.resolution), mode="bilinear", align_corners=False
        )
        mean = torch.tensor(self.mean, dtype=x.dtype, device=x.device).view(1, 3, 1, 1)
        std = torch.tensor(self.std, dtype=x.dtype, device=x.device).view(1, 3, 1, 1)
        return (x - mean) / std

    def features(self, x: torch.Tensor) -> torch.Tensor:
        raise NotImplementedError

    def embed(self, x: torch.Tensor) -> torch.Tensor:
        squeeze = x.dim() == 3
        v = self.features(self.preprocess(x))
        v = F.normalize(v, dim=-1, eps=1e-12)
        return v[0] if squeeze else v

    def preprocess_spec(self) -> dict:
        return {
            "resolution": self.resolution,
            "resize": "bilinear",
            "mean": list(self.mean),
            "std": list(self.std),
        }


class TinyEmbeddingNet(EmbeddingModel):
    """Frozen 3-layer convnet, 64-d output. Weights come from a fixed seed so
    every run sees the same backbone."""

    resolution = 32
    dim = 64
    mean = (0.5, 0.5, 0.5)
    std = (0.5, 0.5, 0.5)

    def __init__(self, seed: int = 1234):
        super().__init__()
        gen = torch.Generator().manual_seed(seed)
        self.conv1 = nn.Conv2d(3, 32, 3, stride=2, padding=1)
        self.conv2 = nn.Conv2d(32, 64, 3, stride=2, padding=1)
        self.conv3 = nn.Conv2d(64, 64, 3, stride=2, padding=1)
        for conv in (self.conv1, self.conv2, self.conv3):
            nn.init.normal_(conv.weight, std=0.2, generator=gen)
            nn.init.normal_(conv.bias, std=0.05, generator=gen)
        for p in self.parameters():
            p.requires_grad_(False)

    def features(self, x: torch.Tensor) -> torch.Tensor:
        h = torch.tanh(self.conv1(x))
        h = torch.tanh(self.conv2(h))
        h = torch.tanh(self.conv3(h))
        return h.mean(dim=(2, 3))


class ClipVitB32(EmbeddingModel):
    """CLIP ViT-B/32 vision tower via `transformers`. Requires local weights."""

    resolution = 224
    dim = 512
    mean = (0.48145466, 0.4578275, 0.40821073)
    std = (0.26862954, 0.26130258, 0.27577711)

    def __init__(self):
        super().__init__()
        try:
            from transformers import CLIPVisionModelWithProjection
        except ImportError as exc:  # pragma: no cover
            raise RuntimeError("clip-vit-b32 backbone needs the `transformers` package") from exc
        try:
            self.tower = CLIPVisionModelWithProjection.from_pretrained(
                "openai/clip-vit-base-patch32"
            )
        except OSError as exc:
            raise RuntimeError(
                "clip-vit-b32 weights are not available locally; "
                "download openai/clip-vit-base-patch32 or use the tiny-test backbone"
            ) from exc
        for p in self.tower.parameters():
            p.requires_grad_(False)

    def features(self, x: torch.Tensor) -> torch.Tensor:
        return self.tower(pixel_values=x).image_embeds


REGISTRY = {
    "tiny-test": TinyEmbeddingNet,
    "clip-vit-b32": ClipVitB32,
}


def load_backbone(name: str) -> EmbeddingModel:
    try:
        factory = REGISTRY[name]
    except KeyError:
        raise KeyError(f"unknown embedding backbone {name!r}; known: {sorted(REGISTRY)}") from None
    model = factory()
    model.eval()
    return model


def embed(x: torch.Tensor, model: EmbeddingModel) -> torch.Tensor:
    return model.embed(x)


def cosine_similarity(u: torch.Tensor, v: torch.Tensor) -> torch.Tensor:
    return (u * v).sum(dim=-1)
