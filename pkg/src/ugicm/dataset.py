"""Dataset manifests and the synthetic toy-image generator.

Images are lossless 8-bit PNG throughout. A manifest pins file digests so a
training or evaluation run can detect silently changed inputs.
"""

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .errors import DigestMismatchError


@dataclass
class ManifestEntry:
    file: str
    height: int
    width: int
    sha256: str


@dataclass
class DatasetManifest:
    root: str
    images: list[ManifestEntry]
    splits: dict[str, list[str]] = field(default_factory=dict)
    seed: int = 0

    def files(self, split: str | None = None) -> list[Path]:
        root = Path(self.root)
        if split is None:
            return [root / e.file for e in self.images]
        return [root / f for f in self.splits.get(split, [])]


def _digest_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def build_manifest(
    root, split_ratios=(0.8, 0.1, 0.1), seed: int = 0
) -> DatasetManifest:
    """Scan ``root`` for PNGs and split them train/val/test, seeded."""
    root = Path(root)
    files = sorted(p.name for p in root.glob("*.png"))
    entries = []
    for name in files:
        with Image.open(root / name) as im:
            w, h = im.size
        entries.append(ManifestEntry(name, h, w, _digest_file(root / name)))
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(files))
    n_train = int(round(split_ratios[0] * len(files)))
    n_val = int(round(split_ratios[1] * len(files)))
    shuffled = [files[i] for i in order]
    splits = {
        "train": sorted(shuffled[:n_train]),
        "val": sorted(shuffled[n_train : n_train + n_val]),
        "test": sorted(shuffled[n_train + n_val :]),
    }
    return DatasetManifest(str(root), entries, splits, seed)


def save_manifest(manifest: DatasetManifest, path) -> None:
    Path(path).write_text(json.dumps(asdict(manifest), indent=2))


def load_manifest(path, verify: bool = True) -> DatasetManifest:
    raw = json.loads(Path(path).read_text())
    manifest = DatasetManifest(
        root=raw["root"],
        images=[ManifestEntry(**e) for e in raw["images"]],
        splits=raw["splits"],
        seed=raw.get("seed", 0),
    )
    if verify:
        root = Path(manifest.root)
        for entry in manifest.images:
            actual = _digest_file(root / entry.file)
            if actual != entry.sha256:
                raise DigestMismatchError(f"{entry.file}: digest changed since manifest was built")
    return manifest


def load_image(path) -> torch.Tensor:
    """PNG -> float tensor (3, H, W) in [0, 1]."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0
    return torch.from_numpy(arr).permute(2, 0, 1).contiguous()


def save_image(x: torch.Tensor, path) -> None:
    arr = (x.detach().clamp(0, 1).cpu().numpy() * 255.0).round().astype(np.uint8)
    Image.fromarray(arr.transpose(1, 2, 0)).save(path, format="PNG")


# -- synthetic toy images ---------------------------------------------------


def _render_toy_image(rng: np.random.Generator, size: int) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float32) / size
    img = np.zeros((size, size, 3), dtype=np.float32)
    base = rng.uniform(0.1, 0.9, size=3)
    tilt = rng.uniform(-0.4, 0.4, size=(2, 3))
    img += base[None, None, :] + yy[:, :, None] * tilt[0] + xx[:, :, None] * tilt[1]
    for _ in range(int(rng.integers(2, 7))):
        color = rng.uniform(0, 1, size=3)
        cy, cx = rng.uniform(0.1, 0.9, size=2) * size
        r = rng.uniform(0.06, 0.25) * size
        if rng.random() < 0.5:
            mask = (yy * size - cy) ** 2 + (xx * size - cx) ** 2 < r * r
        else:
            mask = (np.abs(yy * size - cy) < r) & (np.abs(xx * size - cx) < r * rng.uniform(0.5, 1.5))
        img[mask] = color
    img += rng.normal(0, 0.015, size=img.shape).astype(np.float32)
    return np.clip(img, 0.0, 1.0)


def generate_toy_dataset(out_dir, count: int, size: int = 96, seed: int = 0) -> list[Path]:
    """Deterministic synthetic shapes-and-gradients corpus."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for i in range(count):
        rng = np.random.default_rng([seed, i])
        arr = (_render_toy_image(rng, size) * 255.0).round().astype(np.uint8)
        path = out / f"toy_{i:05d}.png"
        Image.fromarray(arr).save(path, format="PNG")
        paths.append(path)
    return paths
