"""Deterministic instance-proposal stand-in.

A pluggable interface replaces the external segmentation model: the default
proposer thresholds local contrast, extracts connected components, and keeps
the largest boxes. Real segmenters can be registered under a name.
"""

from dataclasses import dataclass, field

import numpy as np
import torch
from scipy import ndimage


@dataclass
class InstanceBox:
    top: int
    left: int
    height: int
    width: int

    @property
    def area(self) -> int:
        return self.height * self.width


@dataclass
class InstanceMaskSet:
    boxes: list[InstanceBox] = field(default_factory=list)
    masks: list[np.ndarray] | None = None  # boolean (h, w) per box, optional

    def __len__(self) -> int:
        return len(self.boxes)


def _to_gray(x: torch.Tensor) -> np.ndarray:
    arr = x.detach().cpu().numpy()
    return 0.299 * arr[0] + 0.587 * arr[1] + 0.114 * arr[2]


def propose_instances(
    x: torch.Tensor,
    k_max: int = 8,
    contrast_threshold: float = 0.15,
    min_area: int = 16,
) -> InstanceMaskSet:
    """Contrast-based connected-component proposals on a (3, H, W) image.

    Contrast is the absolute deviation from the frame median, which keeps
    component boxes tight around high-contrast objects (no blur halo).
    """
    gray = _to_gray(x)
    contrast = np.abs(gray - np.median(gray))
    labels, n = ndimage.label(contrast > contrast_threshold)
    if n == 0:
        return InstanceMaskSet()
    slices = ndimage.find_objects(labels)
    candidates = []
    for idx, sl in enumerate(slices):
        if sl is None:
            continue
        rows, cols = sl
        box = InstanceBox(rows.start, cols.start, rows.stop - rows.start, cols.stop - cols.start)
        if box.area < min_area:
            continue
        candidates.append((box, labels[sl] == idx + 1))
    # Largest first; ties broken by position for determinism.
    candidates.sort(key=lambda c: (-c[0].area, c[0].top, c[0].left))
    candidates = candidates[:k_max]
    return InstanceMaskSet(
        boxes=[c[0] for c in candidates],
        masks=[c[1] for c in candidates],
    )


SEGMENTERS = {"contrast-components": propose_instances}
