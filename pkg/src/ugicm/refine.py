"""Offline sign-gradient refinement of a decoded image.

Each step descends the embedding dissimilarity to the original by a fixed
step in sign-gradient direction, then projects back into an L-infinity ball
around the decoded image and into the valid pixel range.
"""

import copy
from dataclasses import dataclass

import torch

from .embedding import EmbeddingModel, cosine_similarity
from .errors import ShapeMismatchError


@dataclass
class RefinementConfig:
    steps: int = 10
    step_size: float = 1.0 / 255.0  # pixel units
    radius: float = 8.0 / 255.0  # L-infinity budget, pixel units
    seed: int = 0

    def __post_init__(self):
        if self.steps < 0 or self.radius < 0:
            raise ValueError("steps and radius must be non-negative")
        if self.steps > 0 and self.step_size <= 0:
            raise ValueError("step size must be positive")


def refine(
    x: torch.Tensor,
    xhat: torch.Tensor,
    model: EmbeddingModel,
    cfg: RefinementConfig,
) -> torch.Tensor:
    if x.shape != xhat.shape:
        raise ShapeMismatchError(f"shapes differ: {tuple(x.shape)} vs {tuple(xhat.shape)}")
    # Double precision throughout: the ball projection must hold to ~1e-9,
    # which single-precision add/clamp round-off would violate.
    model64 = copy.deepcopy(model).double()
    anchor = xhat.detach().double()
    with torch.no_grad():
        target = model64.embed(x.double()).detach()
    cur = anchor.clone()
    for _ in range(cfg.steps):
        cur.requires_grad_(True)
        loss = 1.0 - cosine_similarity(model64.embed(cur), target)
        (grad,) = torch.autograd.grad(loss.sum(), cur)
        with torch.no_grad():
            cur = cur - cfg.step_size * grad.sign()
            cur = anchor + (cur - anchor).clamp(-cfg.radius, cfg.radius)
            cur = cur.clamp(0.0, 1.0)
    return cur.detach()
