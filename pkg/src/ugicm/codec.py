"""Encoder, quantizer, hyperprior entropy model, and conditional decoder.

Image tensors are torch tensors shaped (3, H, W) or (B, 3, H, W) with values
in [0, 1]. The encoder downsamples by 16, the hyper-encoder by a further 4,
so the compression pipeline pads inputs to multiples of 64.
"""

import hashlib
import json
import math
from dataclasses import asdict, dataclass

import torch
import torch.nn.functional as F
from torch import nn

from .errors import DepthMismatchError, DimensionMismatchError, NumericError, ShapeMismatchError

DOWN_FACTOR = 16  # 4 stride-2 encoder stages
HYPER_FACTOR = 64  # 2 further stride-2 stages
SCALE_FLOOR = 1e-6
LIKELIHOOD_FLOOR = 2.0 ** -24
LOG2 = math.log(2.0)

BETA_HUMAN = 0.0
BETA_MACHINE = 1.0


def check_beta(beta) -> float:
    beta = float(beta)
    if beta not in (BETA_HUMAN, BETA_MACHINE):
        raise ValueError(f"preference condition must be 0 (human) or 1 (machine), got {beta}")
    return beta


@dataclass
class CodecConfig:
    n_channels: int = 128  # internal width N
    latent_channels: int = 192  # latent depth M
    stages: int = 4
    lambda_: float = 0.0067
    quantize_mode: str = "noise"

    def __post_init__(self):
        if self.lambda_ <= 0:
            raise ValueError("lambda must be positive")
        if self.stages != 4:
            raise ValueError("this codec is fixed at 4 stride-2 stages")
        if self.quantize_mode not in ("noise", "round"):
            raise ValueError(f"unknown quantize mode {self.quantize_mode!r}")

    def digest(self) -> bytes:
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.md5(blob).digest()


# Default 4-rate sweep; conventional hyperprior settings, not tuned.
LAMBDA_GRID = (0.0018, 0.0035, 0.0067, 0.013)


def pad_image(x: torch.Tensor, factor: int = HYPER_FACTOR):
    """Replicate-pad to a multiple of ``factor``; returns (padded, (orig_h, orig_w))."""
    h, w = x.shape[-2:]
    ph = (factor - h % factor) % factor
    pw = (factor - w % factor) % factor
    if ph == 0 and pw == 0:
        return x, (h, w)
    batched = x if x.dim() == 4 else x[None]
    out = F.pad(batched, (0, pw, 0, ph), mode="replicate")
    return (out if x.dim() == 4 else out[0]), (h, w)


def unpad_image(x: torch.Tensor, size) -> torch.Tensor:
    h, w = size
    return x[..., :h, :w]


def quantize(y: torch.Tensor, mode: str, seed: int | None = None) -> torch.Tensor:
    """Nearest-integer rounding, or seeded uniform noise in [-0.5, 0.5)."""
    if mode == "round":
        return torch.round(y)
    if mode == "noise":
        gen = torch.Generator(device="cpu")
        gen.manual_seed(0 if seed is None else int(seed))
        noise = torch.rand(y.shape, generator=gen, dtype=y.dtype) - 0.5
        return y + noise.to(y.device)
    raise ValueError(f"unknown quantize mode {mode!r}")


class Pcdm(nn.Module):
    """Preference-conditional bias: a 2-layer MLP maps the scalar condition to a
    per-channel feature, scaled by a learned per-channel weighting map and added
    to the decoder feature. The second MLP layer is zero-initialized so the
    decoder starts condition-agnostic."""

    def __init__(self, depth: int):
        super().__init__()
        self.depth = depth
        self.fc1 = nn.Linear(1, 2 * depth)
        self.fc2 = nn.Linear(2 * depth, depth)
        nn.init.zeros_(self.fc2.weight)
        nn.init.zeros_(self.fc2.bias)
        self.weight_map = nn.Parameter(torch.ones(depth))

    def forward(self, f_dec: torch.Tensor, beta) -> torch.Tensor:
        if f_dec.shape[-3] != self.depth:
            raise DepthMismatchError(
                f"feature depth {f_dec.shape[-3]} does not match module depth {self.depth}"
            )
        beta = check_beta(beta)
        b = torch.tensor([beta], dtype=f_dec.dtype, device=f_dec.device)
        f_beta = self.fc2(F.relu(self.fc1(b)))  # (d,)
        bias = (f_beta * self.weight_map).view(self.depth, 1, 1)
        return f_dec + bias


def pcdm_apply(f_dec: torch.Tensor, beta, pcdm: Pcdm) -> torch.Tensor:
    return pcdm(f_dec, beta)


def _conv(cin, cout, k=5, stride=2):
    return nn.Conv2d(cin, cout, k, stride=stride, padding=k // 2)


def _deconv(cin, cout, k=5, stride=2):
    return nn.ConvTranspose2d(cin, cout, k, stride=stride, padding=k // 2, output_padding=stride - 1)


class UnifiedCodec(nn.Module):
    """Hyperprior codec with a preference-conditional decoder.

    Parameter groups (for stage scheduling):
      encoder   -- analysis transform
      entropy   -- hyper-encoder, hyper-decoder, factorized-prior parameters
      decoder   -- synthesis transform and its conditional modules
    """

    def __init__(self, config: CodecConfig):
        super().__init__()
        self.config = config
        n, m = config.n_channels, config.latent_channels

        self.g_a = nn.Sequential(
            _conv(3, n), nn.LeakyReLU(inplace=True),
            _conv(n, n), nn.LeakyReLU(inplace=True),
            _conv(n, n), nn.LeakyReLU(inplace=True),
            _conv(n, m),
        )

        self.h_a = nn.Sequential(
            _conv(m, n, k=3, stride=1), nn.LeakyReLU(inplace=True),
            _conv(n, n), nn.LeakyReLU(inplace=True),
            _conv(n, n),
        )
        self.h_s = nn.Sequential(
            _deconv(n, n), nn.LeakyReLU(inplace=True),
            _deconv(n, n), nn.LeakyReLU(inplace=True),
            _conv(n, 2 * m, k=3, stride=1),
        )
        # Per-channel logistic prior on the hyper-latent.
        self.prior_loc = nn.Parameter(torch.zeros(n))
        self.prior_scale_param = nn.Parameter(torch.zeros(n))

        self.dec_blocks = nn.ModuleList([
            _deconv(m, n), _deconv(n, n), _deconv(n, n), _deconv(n, 3),
        ])
        self.pcdm = nn.ModuleList([Pcdm(n), Pcdm(n), Pcdm(n), Pcdm(3)])

    # -- parameter groups ---------------------------------------------------

    def encoder_parameters(self):
        return list(self.g_a.parameters())

    def entropy_parameters(self):
        return (
            list(self.h_a.parameters())
            + list(self.h_s.parameters())
            + [self.prior_loc, self.prior_scale_param]
        )

    def decoder_parameters(self):
        return list(self.dec_blocks.parameters()) + list(self.pcdm.parameters())

    # -- transforms ---------------------------------------------------------

    def encode(self, x: torch.Tensor) -> torch.Tensor:
        h, w = x.shape[-2:]
        if h % DOWN_FACTOR or w % DOWN_FACTOR:
            raise DimensionMismatchError(
                f"image size {h}x{w} not divisible by {DOWN_FACTOR}; pad first"
            )
        return self.g_a(x if x.dim() == 4 else x[None])

    def hyper_encode(self, y: torch.Tensor) -> torch.Tensor:
        # The two extra stride-2 stages need latent dims divisible by 4;
        # replicate-pad and crop the hyper-decoder output back (hyper_decode).
        h, w = y.shape[-2:]
        ph = (4 - h % 4) % 4
        pw = (4 - w % 4) % 4
        if ph or pw:
            y = F.pad(y, (0, pw, 0, ph), mode="replicate")
        return self.h_a(y)

    def hyper_decode(self, z_hat: torch.Tensor, latent_size=None):
        params = self.h_s(z_hat)
        if latent_size is not None:
            params = params[..., : latent_size[0], : latent_size[1]]
        means, raw_scales = params.chunk(2, dim=1)
        scales = F.softplus(raw_scales).clamp_min(SCALE_FLOOR)
        return means, scales

    def decode(self, y_hat: torch.Tensor, beta) -> torch.Tensor:
        beta = check_beta(beta)
        if y_hat.dim() == 3:
            y_hat = y_hat[None]
        if y_hat.shape[1] != self.config.latent_channels:
            raise ShapeMismatchError(
                f"latent has {y_hat.shape[1]} channels, codec expects {self.config.latent_channels}"
            )
        f = y_hat
        for i, block in enumerate(self.dec_blocks):
            f = block(f)
            f = self.pcdm[i](f, beta)  # condition enters before the nonlinearity
            if i < len(self.dec_blocks) - 1:
                f = F.leaky_relu(f)
        x = torch.sigmoid(f)
        return x.clamp(0.0, 1.0)

    # -- entropy model ------------------------------------------------------

    def prior_scales(self) -> torch.Tensor:
        return F.softplus(self.prior_scale_param).clamp_min(SCALE_FLOOR)

    def factorized_likelihood(self, z_hat: torch.Tensor) -> torch.Tensor:
        loc = self.prior_loc.view(1, -1, 1, 1)
        scale = self.prior_scales().view(1, -1, 1, 1)
        upper = torch.sigmoid((z_hat + 0.5 - loc) / scale)
        lower = torch.sigmoid((z_hat - 0.5 - loc) / scale)
        return (upper - lower).clamp_min(LIKELIHOOD_FLOOR)

    def conditional_likelihood(self, y_hat, means, scales) -> torch.Tensor:
        upper = torch.special.ndtr((y_hat + 0.5 - means) / scales)
        lower = torch.special.ndtr((y_hat - 0.5 - means) / scales)
        return (upper - lower).clamp_min(LIKELIHOOD_FLOOR)

    def rate_estimate(self, y_hat: torch.Tensor, z_hat: torch.Tensor) -> torch.Tensor:
        """Total -log2 likelihood (bits) of the latent pair under the model."""
        means, scales = self.hyper_decode(z_hat, y_hat.shape[-2:])
        p_y = self.conditional_likelihood(y_hat, means, scales)
        p_z = self.factorized_likelihood(z_hat)
        bits = -(torch.log(p_y).sum() + torch.log(p_z).sum()) / LOG2
        if not torch.isfinite(bits):
            raise NumericError("rate estimate is non-finite; entropy model is broken")
        return bits

    def forward(self, x: torch.Tensor, beta, noise_seed: int | None = None):
        """Training path: noise-relaxed latents; returns (x_hat, bits, y_hat, z_hat)."""
        y = self.encode(x)
        z = self.hyper_encode(y)
        mode = self.config.quantize_mode
        seed2 = None if noise_seed is None else noise_seed + 1
        y_hat = quantize(y, mode, noise_seed)
        z_hat = quantize(z, mode, seed2)
        bits = self.rate_estimate(y_hat, z_hat)
        x_hat = self.decode(y_hat, beta)
        return x_hat, bits, y_hat, z_hat


def encode(x: torch.Tensor, model: UnifiedCodec) -> torch.Tensor:
    return model.encode(x)


def decode(y_hat: torch.Tensor, beta, model: UnifiedCodec) -> torch.Tensor:
    return model.decode(y_hat, beta)


def rate_estimate(y_hat, z_hat, model: UnifiedCodec) -> torch.Tensor:
    return model.rate_estimate(y_hat, z_hat)
