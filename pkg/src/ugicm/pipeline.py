"""Tensor-level compression pipeline: latents -> coding tables -> bitstream.

Coding tables are rebuilt on the decoder side from the hyper-latent, so the
payload stays a pure function of the image and checkpoint; the preference
condition never enters this path.
"""

import numpy as np
import torch
from scipy.special import ndtr

from . import codec
from .coder import quantize_pmf, range_decode, range_encode
from .coder.bitstream import Bitstream, StreamHeader, pack_bitstream, unpack_bitstream
from .errors import DigestMismatchError, NumericError

MAX_SUPPORT = 1 << 12  # sanity cap on the symbol support radius
_CHUNK = 1 << 16


def _support_radius(symbols: np.ndarray) -> int:
    radius = int(np.abs(symbols).max(initial=0)) + 1
    if radius > MAX_SUPPORT:
        raise NumericError(f"latent magnitude {radius} exceeds codable support {MAX_SUPPORT}")
    return radius


def _fold_edges(upper: np.ndarray, lower: np.ndarray) -> np.ndarray:
    """Interval masses for integer bins, with tail mass folded into the edges."""
    pmf = upper - lower
    pmf[..., 0] += lower[..., 0]
    pmf[..., -1] += 1.0 - upper[..., -1]
    return np.maximum(pmf, 0.0)


def _logistic_tables(loc: np.ndarray, scale: np.ndarray, radius: int) -> np.ndarray:
    """One quantized cdf per channel for the factorized hyper-prior."""
    k = np.arange(-radius, radius + 1, dtype=np.float64)
    z_up = (k[None, :] + 0.5 - loc[:, None]) / scale[:, None]
    z_lo = (k[None, :] - 0.5 - loc[:, None]) / scale[:, None]
    sig = lambda t: 1.0 / (1.0 + np.exp(-t))
    return quantize_pmf(_fold_edges(sig(z_up), sig(z_lo)))


def _gaussian_tables(means: np.ndarray, scales: np.ndarray, radius: int) -> np.ndarray:
    """One quantized cdf per latent element (chunked to bound memory)."""
    k = np.arange(-radius, radius + 1, dtype=np.float64)
    out = np.empty((means.size, k.size + 1), dtype=np.int32)
    flat_m = means.reshape(-1)
    flat_s = scales.reshape(-1)
    for start in range(0, flat_m.size, _CHUNK):
        m = flat_m[start : start + _CHUNK, None]
        s = flat_s[start : start + _CHUNK, None]
        upper = ndtr((k[None, :] + 0.5 - m) / s)
        lower = ndtr((k[None, :] - 0.5 - m) / s)
        out[start : start + _CHUNK] = quantize_pmf(_fold_edges(upper, lower))
    return out


def _channel_index(shape) -> np.ndarray:
    c, h, w = shape
    return np.repeat(np.arange(c, dtype=np.int32), h * w)


@torch.no_grad()
def compress_tensor(model: codec.UnifiedCodec, x: torch.Tensor) -> tuple[bytes, dict]:
    """Compress one (3, H, W) image; returns (container bytes, stats)."""
    if x.dim() != 3 or x.shape[0] != 3:
        raise ValueError("expected a single (3, H, W) image tensor")
    x_p, (oh, ow) = codec.pad_image(x, factor=codec.DOWN_FACTOR)
    y = model.encode(x_p)
    z = model.hyper_encode(y)
    y_hat = torch.round(y)
    z_hat = torch.round(z)
    est_bits = float(model.rate_estimate(y_hat, z_hat))

    z_syms = z_hat[0].numpy().astype(np.int64)
    z_radius = _support_radius(z_syms)
    loc = model.prior_loc.detach().double().numpy()
    scale = model.prior_scales().detach().double().numpy()
    z_tables = _logistic_tables(loc, scale, z_radius)
    z_bytes = range_encode(
        z_syms.reshape(-1) + z_radius, z_tables, _channel_index(z_syms.shape)
    )

    means, scales = model.hyper_decode(z_hat, y_hat.shape[-2:])
    y_syms = y_hat[0].numpy().astype(np.int64).reshape(-1)
    y_radius = _support_radius(y_syms)
    y_tables = _gaussian_tables(
        means[0].double().numpy(), scales[0].double().numpy(), y_radius
    )
    y_bytes = range_encode(
        y_syms + y_radius, y_tables, np.arange(y_syms.size, dtype=np.int32)
    )

    header = StreamHeader(
        orig_h=oh,
        orig_w=ow,
        padded_h=x_p.shape[-2],
        padded_w=x_p.shape[-1],
        config_digest=model.config.digest(),
        z_support=z_radius,
        y_support=y_radius,
    )
    data = pack_bitstream(header, [z_bytes, y_bytes])
    stats = {
        "estimated_bits": est_bits,
        "payload_bytes": len(data),
        "bpp_estimated": est_bits / (oh * ow),
        "bpp_actual": len(data) * 8 / (oh * ow),
    }
    return data, stats


@torch.no_grad()
def decompress_tensor(model: codec.UnifiedCodec, data: bytes, beta) -> tuple[torch.Tensor, torch.Tensor]:
    """Decode a container into (image, quantized latent) at the given preference."""
    stream: Bitstream = unpack_bitstream(data)
    hdr = stream.header
    if hdr.config_digest != model.config.digest():
        raise DigestMismatchError("bitstream was produced with a different codec config")
    yh, yw = hdr.padded_h // codec.DOWN_FACTOR, hdr.padded_w // codec.DOWN_FACTOR
    zh, zw = -(-yh // 4), -(-yw // 4)
    n = model.config.n_channels
    m = model.config.latent_channels

    loc = model.prior_loc.detach().double().numpy()
    scale = model.prior_scales().detach().double().numpy()
    z_tables = _logistic_tables(loc, scale, hdr.z_support)
    z_syms = range_decode(
        stream.segments[0], z_tables, _channel_index((n, zh, zw)), count=n * zh * zw
    )
    z_hat = torch.from_numpy(
        (z_syms.astype(np.int64) - hdr.z_support).reshape(1, n, zh, zw)
    ).to(next(model.parameters()).dtype)

    means, scales = model.hyper_decode(z_hat, (yh, yw))
    y_tables = _gaussian_tables(
        means[0].double().numpy(), scales[0].double().numpy(), hdr.y_support
    )
    count = m * yh * yw
    y_syms = range_decode(
        stream.segments[1], y_tables, np.arange(count, dtype=np.int32), count=count
    )
    y_hat = torch.from_numpy(
        (y_syms.astype(np.int64) - hdr.y_support).reshape(1, m, yh, yw)
    ).to(next(model.parameters()).dtype)

    x_hat = model.decode(y_hat, beta)
    return codec.unpad_image(x_hat[0], (hdr.orig_h, hdr.orig_w)), y_hat
