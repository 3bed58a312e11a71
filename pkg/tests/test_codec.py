"""Codec transforms, quantizer, conditional decoder, and rate model tests."""

import numpy as np
import pytest
import torch
from scipy.optimize import brentq
from scipy.special import ndtr

from conftest import make_model, random_image
from ugicm.codec import (
    BETA_HUMAN,
    BETA_MACHINE,
    CodecConfig,
    Pcdm,
    UnifiedCodec,
    pad_image,
    quantize,
    unpad_image,
)
from ugicm.errors import DepthMismatchError, DimensionMismatchError, ShapeMismatchError
from ugicm.pipeline import compress_tensor, decompress_tensor


# -- config -----------------------------------------------------------------


def test_config_validation():
    with pytest.raises(ValueError):
        CodecConfig(lambda_=0.0)
    with pytest.raises(ValueError):
        CodecConfig(lambda_=-1.0)
    with pytest.raises(ValueError):
        CodecConfig(stages=3)
    with pytest.raises(ValueError):
        CodecConfig(quantize_mode="stochastic")


def test_config_digest_distinguishes_configs():
    a = CodecConfig()
    b = CodecConfig(lambda_=0.013)
    assert a.digest() != b.digest()
    assert a.digest() == CodecConfig().digest()
    assert len(a.digest()) == 16


# -- encoder / padding ------------------------------------------------------


def test_encode_shape_256():
    model = make_model(n=8, m=192)
    x = random_image((3, 256, 256), seed=1)
    y = model.encode(x)
    assert tuple(y.shape) == (1, 192, 16, 16)


def test_encode_deterministic(small_model):
    x = random_image((3, 64, 64), seed=2)
    assert torch.equal(small_model.encode(x), small_model.encode(x))


def test_encode_rejects_unpadded(small_model):
    with pytest.raises(DimensionMismatchError):
        small_model.encode(random_image((3, 255, 255), seed=3))


def test_pad_unpad_roundtrip():
    x = random_image((3, 97, 130), seed=4)
    padded, orig = pad_image(x, factor=16)
    assert padded.shape[-2] % 16 == 0 and padded.shape[-1] % 16 == 0
    assert orig == (97, 130)
    assert torch.equal(unpad_image(padded, orig), x)


# -- quantizer --------------------------------------------------------------


def test_quantize_round_examples():
    y = torch.tensor([0.4, -1.6])
    assert torch.equal(quantize(y, "round"), torch.tensor([0.0, -2.0]))


def test_quantize_noise_bound_and_determinism():
    y = random_image((3, 10, 10), seed=5)
    a = quantize(y, "noise", seed=42)
    b = quantize(y, "noise", seed=42)
    c = quantize(y, "noise", seed=43)
    assert torch.equal(a, b)
    assert not torch.equal(a, c)
    assert float((a - y).abs().max()) <= 0.5


def test_quantize_unknown_mode():
    with pytest.raises(ValueError):
        quantize(torch.zeros(3), "stochastic")


# -- PCDM -------------------------------------------------------------------


def test_pcdm_zero_init_identity():
    p = Pcdm(12)
    f = random_image((1, 12, 5, 5), seed=6)
    assert torch.equal(p(f, BETA_HUMAN), f)
    assert torch.equal(p(f, BETA_MACHINE), f)


def test_pcdm_constant_bias():
    p = Pcdm(4)
    with torch.no_grad():
        # force f_beta = 0.25 for every channel at both beta values
        p.fc1.weight.zero_()
        p.fc1.bias.zero_()
        p.fc2.weight.zero_()
        p.fc2.bias.fill_(0.25)
        p.weight_map.fill_(1.0)
    f = random_image((1, 4, 3, 3), seed=7)
    out = p(f, BETA_MACHINE)
    assert torch.allclose(out, f + 0.25)


def test_pcdm_depth_mismatch():
    p = Pcdm(4)
    with pytest.raises(DepthMismatchError):
        p(random_image((1, 5, 3, 3), seed=8), BETA_HUMAN)


def test_pcdm_rejects_bad_beta():
    p = Pcdm(4)
    with pytest.raises(ValueError):
        p(random_image((1, 4, 3, 3), seed=9), 0.5)


# -- decoder ----------------------------------------------------------------


def test_decode_shape_and_range():
    model = make_model(n=8, m=192)
    y_hat = torch.round(random_image((1, 192, 16, 16), seed=10) * 4 - 2)
    with torch.no_grad():
        x = model.decode(y_hat, BETA_HUMAN)
    assert tuple(x.shape) == (1, 3, 256, 256)
    assert float(x.min()) >= 0.0 and float(x.max()) <= 1.0


def test_decode_init_beta_invariance(small_model):
    y_hat = torch.round(random_image((1, 24, 4, 4), seed=11) * 6 - 3)
    h = small_model.decode(y_hat, BETA_HUMAN)
    m = small_model.decode(y_hat, BETA_MACHINE)
    assert torch.equal(h, m)


def test_decode_latent_channel_check(small_model):
    with pytest.raises(ShapeMismatchError):
        small_model.decode(torch.zeros(1, 23, 4, 4), BETA_HUMAN)


def test_roundtrip_shape_contract(small_model):
    for h, w in [(64, 64), (96, 128), (80, 96)]:
        x = random_image((3, h, w), seed=h + w)
        y = small_model.encode(x)
        out = small_model.decode(torch.round(y), BETA_HUMAN)
        assert out.shape[-2:] == x.shape[-2:]


# -- rate model -------------------------------------------------------------


def test_rate_nonnegative(small_model):
    x = random_image((3, 64, 64), seed=12)
    y = small_model.encode(x)
    z = small_model.hyper_encode(y)
    bits = small_model.rate_estimate(torch.round(y), torch.round(z))
    assert float(bits.detach()) >= 0.0


def test_probability_half_is_one_bit(small_model):
    # sigma solving Phi(0.5/s) - Phi(-0.5/s) = 0.5: the central unit interval
    # then carries exactly half the mass, i.e. one bit.
    s = brentq(lambda s: ndtr(0.5 / s) - ndtr(-0.5 / s) - 0.5, 0.1, 5.0)
    y = torch.zeros(1, 1, 1, 1, dtype=torch.float64)
    p = small_model.conditional_likelihood(
        y, torch.zeros_like(y), torch.full_like(y, s)
    )
    assert abs(float(p) - 0.5) < 1e-12
    assert abs(float(-torch.log2(p)) - 1.0) < 1e-10


def test_rate_matches_elementwise_log_likelihood(small_model):
    x = random_image((3, 64, 64), seed=13)
    y_hat = torch.round(small_model.encode(x))
    z_hat = torch.round(small_model.hyper_encode(y_hat))
    bits = small_model.rate_estimate(y_hat, z_hat)
    means, scales = small_model.hyper_decode(z_hat, y_hat.shape[-2:])
    p_y = small_model.conditional_likelihood(y_hat, means, scales)
    p_z = small_model.factorized_likelihood(z_hat)
    expected = -(torch.log2(p_y).sum() + torch.log2(p_z).sum())
    assert torch.allclose(bits, expected, rtol=1e-6)


def test_rate_gradient_matches_finite_differences():
    """Noise-mode rate as a function of the encoder output, double precision,
    4x4x8 latent; autograd vs central differences."""
    model = make_model(n=8, m=8, seed=3).double()
    base = torch.from_numpy(np.random.default_rng(14).normal(0, 2, (1, 8, 4, 4)))

    def rate_of(y):
        y_hat = quantize(y, "noise", seed=77)
        z_hat = quantize(model.hyper_encode(y), "noise", seed=78)
        return model.rate_estimate(y_hat, z_hat)

    y = base.clone().requires_grad_(True)
    rate_of(y).backward()
    grad = y.grad.clone()

    rng = np.random.default_rng(15)
    eps = 1e-5
    for _ in range(12):
        c = int(rng.integers(0, 8))
        i = int(rng.integers(0, 4))
        j = int(rng.integers(0, 4))
        plus = base.detach().clone()
        plus[0, c, i, j] += eps
        minus = base.detach().clone()
        minus[0, c, i, j] -= eps
        with torch.no_grad():
            fd = (float(rate_of(plus)) - float(rate_of(minus))) / (2 * eps)
        ref = float(grad[0, c, i, j])
        denom = max(abs(ref), abs(fd), 1e-8)
        assert abs(fd - ref) / denom < 1e-3


def test_forward_training_path(small_model):
    x = random_image((3, 64, 64), seed=16)[None]
    x_hat, bits, y_hat, z_hat = small_model(x, BETA_MACHINE, noise_seed=5)
    assert x_hat.shape == x.shape
    assert float(bits.detach()) >= 0.0
    x_hat2, bits2, _, _ = small_model(x, BETA_MACHINE, noise_seed=5)
    assert torch.equal(x_hat, x_hat2) and torch.equal(bits, bits2)


# -- compress / decompress pipeline -----------------------------------------


def test_pipeline_latent_bit_exactness():
    model = make_model(n=16, m=24, seed=1, spice=4.0)
    for seed, shape in [(20, (3, 96, 96)), (21, (3, 70, 90))]:
        x = random_image(shape, seed=seed)
        data, stats = compress_tensor(model, x)
        x_p, _ = pad_image(x, factor=16)
        expected = torch.round(model.encode(x_p))
        for beta in (BETA_HUMAN, BETA_MACHINE):
            img, y_hat = decompress_tensor(model, data, beta)
            assert torch.equal(y_hat, expected)
            assert img.shape == x.shape
        assert stats["payload_bytes"] == len(data)
        assert stats["bpp_actual"] == pytest.approx(
            len(data) * 8 / (shape[1] * shape[2])
        )


def test_rate_estimate_tracks_actual_payload():
    """Estimated bits vs coded payload within 2% plus a fixed allowance on
    10 random inputs through a high-entropy model."""
    model = make_model(n=16, m=24, seed=2, spice=6.0)
    for seed in range(10):
        x = random_image((3, 96, 96), seed=100 + seed)
        data, stats = compress_tensor(model, x)
        actual_bits = len(data) * 8
        assert abs(stats["estimated_bits"] - actual_bits) <= (
            0.02 * actual_bits + 64 * 8
        )
