"""Shared fixtures: small codec instances and a tiny on-disk image corpus."""

import numpy as np
import pytest
import torch

from ugicm.codec import CodecConfig, UnifiedCodec
from ugicm.dataset import build_manifest, generate_toy_dataset, save_manifest
from ugicm.embedding import load_backbone


def make_model(n=16, m=24, lambda_=0.0067, seed=0, spice=0.0):
    """Small codec for fast tests. ``spice`` scales up the encoder output
    layer so latents carry real entropy instead of collapsing near zero."""
    torch.manual_seed(seed)
    model = UnifiedCodec(CodecConfig(n_channels=n, latent_channels=m, lambda_=lambda_))
    if spice:
        with torch.no_grad():
            model.g_a[-1].weight.mul_(spice)
            model.g_a[-1].bias.normal_(0.0, spice * 0.5)
    model.eval()
    return model


@pytest.fixture(scope="session")
def small_model():
    return make_model()


@pytest.fixture(scope="session")
def tiny_backbone():
    return load_backbone("tiny-test")


@pytest.fixture(scope="session")
def toy_corpus(tmp_path_factory):
    """24 synthetic 96x96 images with a manifest, shared across tests."""
    root = tmp_path_factory.mktemp("toycorpus")
    generate_toy_dataset(root, 24, size=96, seed=11)
    manifest = build_manifest(root, split_ratios=(0.75, 0.0, 0.25), seed=11)
    save_manifest(manifest, root / "manifest.json")
    return root


def random_image(shape=(3, 64, 64), seed=0, dtype=torch.float32):
    rng = np.random.default_rng(seed)
    return torch.from_numpy(rng.random(shape)).to(dtype)
