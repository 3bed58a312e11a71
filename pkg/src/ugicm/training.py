"""Two-stage alternating training.

Stage 1 jointly trains encoder, entropy model, and decoder, alternating per
epoch between a human session (rate + pixel distortion at beta=0) and a
machine session (rate + pixel distortion + semantic loss at beta=1).
Stage 2 freezes encoder and entropy model and fine-tunes the decoder only:
pixel distortion at beta=0 for the first half of each epoch, semantic loss
at beta=1 for the second half.

All randomness is derived statelessly from (seed, stage, epoch), so resumed
runs and repeated runs reproduce the loss trajectory exactly.
"""

import csv
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch
import yaml

from .codec import BETA_HUMAN, BETA_MACHINE, CodecConfig, UnifiedCodec
from .dataset import load_image, load_manifest
from .embedding import load_backbone
from .errors import FrozenParameterError, NonFiniteLossError, UninitializedStageError
from .checkpoint import load_checkpoint, param_digest, save_checkpoint
from .metrics import distortion_mse
from .msclip import MsClipConfig, loss_ms_clip
from .segmenter import propose_instances


@dataclass
class TrainingSchedule:
    stage1_epochs: int = 200
    stage1_lr: float = 1e-4
    stage2_epochs: int = 10
    stage2_lr: float = 1e-5
    session_split: float = 0.5  # human fraction of stage-1 iterations
    batch_size: int = 8
    patch_size: int = 256
    hflip: bool = True
    seed: int = 0
    backbone: str = "tiny-test"
    interleave: bool = False  # alternate per iteration instead of per session block

    def __post_init__(self):
        if not (0.0 <= self.session_split <= 1.0):
            raise ValueError("session split must lie in [0, 1]")
        if self.stage1_epochs < 0 or self.stage2_epochs < 0:
            raise ValueError("epoch counts must be non-negative")
        if self.stage1_lr <= 0 or self.stage2_lr <= 0:
            raise ValueError("learning rates must be positive")


@dataclass
class TrainingConfig:
    codec: CodecConfig = field(default_factory=CodecConfig)
    schedule: TrainingSchedule = field(default_factory=TrainingSchedule)
    msclip: MsClipConfig = field(default_factory=MsClipConfig)
    manifest: str = ""
    out_dir: str = "runs/default"

    @classmethod
    def from_yaml(cls, path) -> "TrainingConfig":
        raw = yaml.safe_load(Path(path).read_text()) or {}
        known = {"codec", "schedule", "msclip", "manifest", "out_dir"}
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        def build(cls_, key):
            section = raw.get(key, {})
            if "weights" in section:
                section["weights"] = tuple(section["weights"])
            if "crop_fraction" in section:
                section["crop_fraction"] = tuple(section["crop_fraction"])
            return cls_(**section)
        return cls(
            codec=build(CodecConfig, "codec"),
            schedule=build(TrainingSchedule, "schedule"),
            msclip=build(MsClipConfig, "msclip"),
            manifest=raw.get("manifest", ""),
            out_dir=raw.get("out_dir", "runs/default"),
        )

    def to_yaml(self, path) -> None:
        Path(path).write_text(yaml.safe_dump(asdict(self), sort_keys=False))


def _check_finite(loss: torch.Tensor, context: str) -> None:
    if not torch.isfinite(loss):
        raise NonFiniteLossError(f"{context}: loss is {float(loss)}")


def _rd_loss(model, x, beta, noise_seed, msclip_term=None):
    x_hat, bits, _, _ = model(x, beta, noise_seed)
    npix = x.shape[0] * x.shape[-2] * x.shape[-1]
    bpp = bits / npix
    mse = distortion_mse(x, x_hat)
    # The semantic term rides in the same 8-bit units as the squared error;
    # scaling only one side of the sum would silently reweight it by 255^2.
    dist = mse if msclip_term is None else mse + (255.0 ** 2) * msclip_term(x_hat)
    loss = model.config.lambda_ * dist + bpp
    return loss, x_hat, bits, mse


def stage1_step_human(batch, model, optimizer, noise_seed: int = 0) -> dict:
    """One joint optimizer step on lambda * L2(x, decode(., beta_h)) + rate."""
    loss, _, bits, mse = _rd_loss(model, batch, BETA_HUMAN, noise_seed)
    _check_finite(loss, "stage1 human step")
    optimizer.zero_grad()
    loss.backward()
    optimizer.step()
    return {"loss": float(loss.detach()), "rate_bits": float(bits.detach()), "mse": float(mse.detach()), "msclip": None}


def stage1_step_machine(
    batch,
    model,
    optimizer,
    backbone,
    ms_cfg: MsClipConfig,
    rng: np.random.Generator,
    noise_seed: int = 0,
    instances=None,
) -> dict:
    """As the human step, but decoding at beta_m with the semantic loss added
    inside the lambda-weighted term."""

    ms_value = [0.0]

    def msclip_term(x_hat):
        total = batch.new_zeros(())
        for i in range(batch.shape[0]):
            inst = None if instances is None else instances[i]
            total = total + loss_ms_clip(
                batch[i], x_hat[i], ms_cfg, backbone, rng=rng, instances=inst
            )
        total = total / batch.shape[0]
        ms_value[0] = float(total.detach())
        return total

    loss, x_hat, bits, mse = _rd_loss(model, batch, BETA_MACHINE, noise_seed, msclip_term)
    _check_finite(loss, "stage1 machine step")
    optimizer.zero_grad()
    loss.backward()
    optimizer.step()
    return {"loss": float(loss.detach()), "rate_bits": float(bits.detach()), "mse": float(mse.detach()), "msclip": ms_value[0]}


class _EpochData:
    """Seed-determined batch stream over an in-memory image list."""

    def __init__(self, images, schedule: TrainingSchedule, stage: int, epoch: int):
        self.images = images
        self.schedule = schedule
        min_side = min(min(im.shape[-2:]) for im in images)
        self.patch = min(schedule.patch_size, min_side)
        self.full_frame = all(im.shape[-2:] == (self.patch, self.patch) for im in images)
        key = [schedule.seed, stage, epoch]
        self.order = np.random.default_rng(key + [0]).permutation(len(images))
        self.aug_rng = np.random.default_rng(key + [1])
        self.noise_rng = np.random.default_rng(key + [2])
        self.crop_rng = np.random.default_rng(key + [3])

    def n_batches(self) -> int:
        return max(1, len(self.images) // self.schedule.batch_size) if self.images else 0

    def batch(self, b: int):
        bs = self.schedule.batch_size
        idxs = self.order[b * bs : (b + 1) * bs]
        patches = []
        for i in idxs:
            im = self.images[i]
            h, w = im.shape[-2:]
            top = int(self.aug_rng.integers(0, h - self.patch + 1))
            left = int(self.aug_rng.integers(0, w - self.patch + 1))
            patch = im[:, top : top + self.patch, left : left + self.patch]
            if self.schedule.hflip and self.aug_rng.random() < 0.5:
                patch = torch.flip(patch, dims=[-1])
            patches.append(patch)
        return torch.stack(patches), [int(i) for i in idxs]

    def noise_seed(self) -> int:
        return int(self.noise_rng.integers(0, 2 ** 62))


class InstanceCache:
    """Per-image proposal cache, valid when training sees whole frames."""

    def __init__(self, ms_cfg: MsClipConfig, enabled: bool):
        self.ms_cfg = ms_cfg
        self.enabled = enabled
        self._cache = {}

    def get(self, x: torch.Tensor, image_index: int):
        if not self.enabled:
            return propose_instances(x, k_max=self.ms_cfg.k_max)
        if image_index not in self._cache:
            self._cache[image_index] = propose_instances(x, k_max=self.ms_cfg.k_max)
        return self._cache[image_index]


def frozen_digest(model: UnifiedCodec) -> str:
    named = [
        (n, p)
        for n, p in model.state_dict().items()
        if not (n.startswith("dec_blocks") or n.startswith("pcdm"))
    ]
    return param_digest(named)


def stage2_epoch(
    images,
    model: UnifiedCodec,
    optimizer,
    backbone,
    ms_cfg: MsClipConfig,
    schedule: TrainingSchedule,
    epoch: int,
    cache: InstanceCache | None = None,
) -> dict:
    """One frozen-backbone epoch: first half L2 at beta_h, second half the
    semantic loss at beta_m, decoder parameters only.

    ``optimizer`` is either a single optimizer shared by both sessions or a
    (human, machine) pair. The two sessions are separate minimization
    problems, so keeping their adaptive-moment state apart stops one
    objective's gradient history from rescaling the other's updates.
    """
    if isinstance(optimizer, (tuple, list)):
        opt_human, opt_machine = optimizer
    else:
        opt_human = opt_machine = optimizer
    before = frozen_digest(model)
    data = _EpochData(images, schedule, stage=2, epoch=epoch)
    if cache is None:
        cache = InstanceCache(ms_cfg, enabled=data.full_frame)
    nb = data.n_batches()
    n_human = (nb + 1) // 2  # iterations are half split; order is human then machine
    human_losses, machine_losses = [], []
    for b in range(nb):
        batch, idxs = data.batch(b)
        seed = data.noise_seed()
        if b < n_human:
            x_hat, _, _, _ = model(batch, BETA_HUMAN, seed)
            # Plain [0,1]-unit MSE: both sessions share one Adam state, so the
            # two pure losses must live on commensurate scales or the larger
            # one's gradient history drowns the other's updates.
            loss = torch.mean((batch - x_hat) ** 2)
            _check_finite(loss, "stage2 human session")
            human_losses.append(float(loss.detach()))
        else:
            x_hat, _, _, _ = model(batch, BETA_MACHINE, seed)
            loss = batch.new_zeros(())
            for i in range(batch.shape[0]):
                inst = cache.get(batch[i], idxs[i])
                loss = loss + loss_ms_clip(
                    batch[i], x_hat[i], ms_cfg, backbone, rng=data.crop_rng, instances=inst
                )
            loss = loss / batch.shape[0]
            _check_finite(loss, "stage2 machine session")
            machine_losses.append(float(loss.detach()))
        opt = opt_human if b < n_human else opt_machine
        opt.zero_grad()
        loss.backward()
        opt.step()
    if frozen_digest(model) != before:
        raise FrozenParameterError("encoder or entropy parameters changed during stage 2")
    return {
        "human_mean": float(np.mean(human_losses)) if human_losses else float("nan"),
        "machine_mean": float(np.mean(machine_losses)) if machine_losses else float("nan"),
    }


def _log_row(log_path: Path, row: dict) -> None:
    exists = log_path.exists()
    with log_path.open("a", newline="") as fh:
        writer = csv.DictWriter(
            fh, fieldnames=["stage", "epoch", "session", "rate_bits", "mse", "msclip", "loss"]
        )
        if not exists:
            writer.writeheader()
        writer.writerow(row)


def _mean(vals):
    vals = [v for v in vals if v is not None]
    return float(np.mean(vals)) if vals else float("nan")


def run_training(
    config: TrainingConfig,
    resume: bool = False,
    init_checkpoint=None,
    progress=None,
) -> Path:
    """Execute stage 1 then stage 2, checkpointing per epoch; returns the
    final checkpoint path."""
    sched = config.schedule
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    log_path = out / "train_log.csv"
    latest = out / "latest.pt"
    ms_cfg = config.msclip

    manifest = load_manifest(config.manifest)
    files = manifest.files("train") or manifest.files()
    images = [load_image(p) for p in files]
    if not images:
        raise ValueError("training manifest contains no images")
    backbone = load_backbone(sched.backbone)

    start_stage, start_epoch = 1, 0
    torch.manual_seed(sched.seed)
    model = UnifiedCodec(config.codec)
    optimizer = torch.optim.Adam(model.parameters(), lr=sched.stage1_lr)

    if resume and latest.exists():
        model, payload = load_checkpoint(latest)
        counters = payload["extra"]["counters"]
        start_stage = counters["stage"]
        start_epoch = counters["epoch"] + 1
        if start_stage == 1 and start_epoch >= sched.stage1_epochs:
            start_stage, start_epoch = 2, 0
        if start_stage == 1:
            optimizer = torch.optim.Adam(model.parameters(), lr=sched.stage1_lr)
            optimizer.load_state_dict(payload["optimizer"])
    elif init_checkpoint is not None:
        model, _ = load_checkpoint(init_checkpoint)
    elif sched.stage1_epochs == 0 and sched.stage2_epochs > 0:
        raise UninitializedStageError(
            "stage 2 would fine-tune a frozen untrained encoder; run stage 1 "
            "or supply an initial checkpoint"
        )

    def save(stage, epoch, opt, extra_state=None):
        extra = {"counters": {"stage": stage, "epoch": epoch}, "schedule": asdict(sched)}
        if extra_state:
            extra.update(extra_state)
        tag = f"stage{stage}"
        save_checkpoint(out / f"stage{stage}_epoch{epoch:04d}.pt", model, tag, opt, extra)
        save_checkpoint(latest, model, tag, opt, extra)

    # Stage 1: joint optimization, alternating sessions within each epoch.
    if start_stage == 1:
        for epoch in range(start_epoch, sched.stage1_epochs):
            data = _EpochData(images, sched, stage=1, epoch=epoch)
            cache = InstanceCache(ms_cfg, enabled=data.full_frame)
            nb = data.n_batches()
            n_human = int(round(sched.session_split * nb))
            stats = {"human": [], "machine": []}
            for b in range(nb):
                if sched.interleave:
                    is_human = (b % 2) == 0 if sched.session_split >= 0.5 else (b % 2) == 1
                else:
                    is_human = b < n_human
                batch, idxs = data.batch(b)
                seed = data.noise_seed()
                if is_human:
                    rec = stage1_step_human(batch, model, optimizer, seed)
                    stats["human"].append(rec)
                else:
                    inst = [cache.get(batch[i], idxs[i]) for i in range(batch.shape[0])]
                    rec = stage1_step_machine(
                        batch, model, optimizer, backbone, ms_cfg, data.crop_rng, seed, inst
                    )
                    stats["machine"].append(rec)
            for session in ("human", "machine"):
                recs = stats[session]
                if recs:
                    _log_row(log_path, {
                        "stage": 1, "epoch": epoch, "session": session,
                        "rate_bits": _mean([r["rate_bits"] for r in recs]),
                        "mse": _mean([r["mse"] for r in recs]),
                        "msclip": _mean([r["msclip"] for r in recs]),
                        "loss": _mean([r["loss"] for r in recs]),
                    })
            save(1, epoch, optimizer)
            if progress:
                progress(1, epoch)
        start_stage, start_epoch = 2, 0

    # Stage 2: decoder-only fine-tuning on frozen encoder and entropy model.
    if sched.stage2_epochs > 0:
        for p in model.encoder_parameters() + model.entropy_parameters():
            p.requires_grad_(False)
        opt2h = torch.optim.Adam(model.decoder_parameters(), lr=sched.stage2_lr)
        opt2m = torch.optim.Adam(model.decoder_parameters(), lr=sched.stage2_lr)
        if resume and latest.exists():
            payload = torch.load(latest, map_location="cpu", weights_only=False)
            if payload["stage_tag"] == "stage2" and "optimizer" in payload:
                opt2h.load_state_dict(payload["optimizer"])
            if payload["stage_tag"] == "stage2" and "optimizer_machine" in payload.get("extra", {}):
                opt2m.load_state_dict(payload["extra"]["optimizer_machine"])
        for epoch in range(start_epoch, sched.stage2_epochs):
            report = stage2_epoch(images, model, (opt2h, opt2m), backbone, ms_cfg, sched, epoch)
            _log_row(log_path, {
                "stage": 2, "epoch": epoch, "session": "human",
                # mse column stays in 8-bit units across stages; the optimized
                # stage-2 loss itself is the plain [0,1]-unit mean
                "rate_bits": float("nan"), "mse": report["human_mean"] * 255.0 ** 2,
                "msclip": float("nan"), "loss": report["human_mean"],
            })
            _log_row(log_path, {
                "stage": 2, "epoch": epoch, "session": "machine",
                "rate_bits": float("nan"), "mse": float("nan"),
                "msclip": report["machine_mean"], "loss": report["machine_mean"],
            })
            save(2, epoch, opt2h, {"optimizer_machine": opt2m.state_dict()})
            if progress:
                progress(2, epoch)

    final = out / "final.pt"
    save_checkpoint(final, model, "final", extra={"schedule": asdict(sched)})
    return final
