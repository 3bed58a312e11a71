"""Global / local / instance embedding-similarity loss.

Each term is 1 - cos(embed(a), embed(b)) over a matched pair of views:
the whole frame, one random crop, and the proposed instance boxes. Boxes
are found on the original image only and reused on the reconstruction, so
pairing is a bijection by construction.
"""

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from .embedding import EmbeddingModel, cosine_similarity
from .errors import CropOutOfBoundsError, ShapeMismatchError
from .segmenter import InstanceMaskSet, propose_instances


@dataclass
class CropSpec:
    top: int
    left: int
    height: int
    width: int


@dataclass
class MsClipConfig:
    crop_fraction: tuple[float, float] = (0.2, 0.5)
    k_max: int = 8
    weights: tuple[float, float, float] = (1.0, 1.0, 1.0)  # (global, local, instance)
    segmenter: str = "contrast-components"
    mask_background: bool = False  # zero out pixels outside the instance mask
    seed: int = 0

    def __post_init__(self):
        lo, hi = self.crop_fraction
        if not (0 < lo <= hi <= 1):
            raise ValueError("crop fractions must lie in (0, 1]")
        if any(w < 0 for w in self.weights):
            raise ValueError("term weights must be non-negative")


def _check_pair(x: torch.Tensor, xhat: torch.Tensor) -> None:
    if x.shape != xhat.shape:
        raise ShapeMismatchError(f"image pair shapes differ: {tuple(x.shape)} vs {tuple(xhat.shape)}")


def loss_global(x: torch.Tensor, xhat: torch.Tensor, model: EmbeddingModel) -> torch.Tensor:
    _check_pair(x, xhat)
    return 1.0 - cosine_similarity(model.embed(x), model.embed(xhat))


def _crop(x: torch.Tensor, spec: CropSpec) -> torch.Tensor:
    h, w = x.shape[-2:]
    if (
        spec.top < 0
        or spec.left < 0
        or spec.height < 1
        or spec.width < 1
        or spec.top + spec.height > h
        or spec.left + spec.width > w
    ):
        raise CropOutOfBoundsError(f"crop {spec} does not fit a {h}x{w} image")
    return x[..., spec.top : spec.top + spec.height, spec.left : spec.left + spec.width]


def loss_local(
    x: torch.Tensor, xhat: torch.Tensor, crop: CropSpec, model: EmbeddingModel
) -> torch.Tensor:
    _check_pair(x, xhat)
    return 1.0 - cosine_similarity(model.embed(_crop(x, crop)), model.embed(_crop(xhat, crop)))


def pad_to_square(patch: torch.Tensor) -> torch.Tensor:
    """Zero-pad a (3, h, w) patch to (3, s, s), centered; keeps aspect ratio
    for the backbone's square resize."""
    h, w = patch.shape[-2:]
    s = max(h, w)
    pt = (s - h) // 2
    pl = (s - w) // 2
    return F.pad(patch, (pl, s - w - pl, pt, s - h - pt))


def loss_instance(
    x: torch.Tensor,
    xhat: torch.Tensor,
    masks: InstanceMaskSet,
    model: EmbeddingModel,
    mask_background: bool = False,
) -> torch.Tensor:
    _check_pair(x, xhat)
    total = x.new_zeros(())
    for j, box in enumerate(masks.boxes):
        spec = CropSpec(box.top, box.left, box.height, box.width)
        a = _crop(x, spec)
        b = _crop(xhat, spec)
        if mask_background and masks.masks is not None:
            m = torch.from_numpy(masks.masks[j].astype(np.float32)).to(x.device, x.dtype)
            a = a * m
            b = b * m
        a = pad_to_square(a)
        b = pad_to_square(b)
        total = total + (1.0 - cosine_similarity(model.embed(a), model.embed(b)))
    return total


def draw_crop(shape, config: MsClipConfig, rng: np.random.Generator) -> CropSpec:
    h, w = shape[-2:]
    lo, hi = config.crop_fraction
    frac = rng.uniform(lo, hi)
    ch = max(1, int(round(frac * h)))
    cw = max(1, int(round(frac * w)))
    top = int(rng.integers(0, h - ch + 1))
    left = int(rng.integers(0, w - cw + 1))
    return CropSpec(top, left, ch, cw)


def loss_ms_clip(
    x: torch.Tensor,
    xhat: torch.Tensor,
    config: MsClipConfig,
    model: EmbeddingModel,
    seed: int | None = None,
    rng: np.random.Generator | None = None,
    instances: InstanceMaskSet | None = None,
) -> torch.Tensor:
    """Weighted sum of the three terms. One local crop is drawn per call from
    ``rng`` (or a generator seeded with ``seed``); instance proposals are
    computed on the original image only, or passed in by a caller-side cache."""
    _check_pair(x, xhat)
    w_glo, w_loc, w_ins = config.weights
    if rng is None:
        rng = np.random.default_rng(config.seed if seed is None else seed)
    total = x.new_zeros(())
    if w_glo:
        total = total + w_glo * loss_global(x, xhat, model)
    if w_loc:
        total = total + w_loc * loss_local(x, xhat, draw_crop(x.shape, config, rng), model)
    if w_ins:
        if instances is None:
            instances = propose_instances(x, k_max=config.k_max)
        total = total + w_ins * loss_instance(
            x, xhat, instances, model, mask_background=config.mask_background
        )
    return total
