"""Acceptance suite: one criterion per test, one pass/fail line per criterion.

The preference-separation criterion trains a small codec on a synthetic
2,000-image corpus (30 + 5 epochs). The trained artifacts are cached under
``.cache/acceptance`` keyed by the training-config digest, so reruns reuse
them; delete the cache directory to force a retrain. Set
``UGICM_SKIP_TRAIN=1`` to skip the training-dependent criteria entirely.
"""

import hashlib
import json
import os
import shutil
import subprocess
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np
import pytest
import torch

from conftest import make_model, random_image
from ugicm.checkpoint import load_checkpoint, save_checkpoint
from ugicm.codec import (
    BETA_HUMAN,
    BETA_MACHINE,
    CodecConfig,
    pad_image,
)
from ugicm.dataset import build_manifest, generate_toy_dataset, load_image, save_manifest
from ugicm.embedding import TinyEmbeddingNet, cosine_similarity, load_backbone
from ugicm.msclip import MsClipConfig, loss_ms_clip
from ugicm.pipeline import compress_tensor, decompress_tensor
from ugicm.refine import RefinementConfig, refine
from ugicm.segmenter import propose_instances
from ugicm.training import TrainingConfig, TrainingSchedule, run_training, stage1_step_machine
from ugicm.evaluate import evaluate_model, write_report

REPO = Path(__file__).resolve().parent.parent
CACHE = REPO / ".cache" / "acceptance"
SKIP_TRAIN = bool(os.environ.get("UGICM_SKIP_TRAIN"))


@pytest.fixture
def report(capfd):
    """One pass/fail line per criterion, written past pytest's capture."""

    def _report(name: str, ok: bool, detail: str) -> None:
        line = f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}\n"
        with capfd.disabled():
            sys.stdout.write(line)
            sys.stdout.flush()
        assert ok, line

    return _report


# -- toy training job (shared, cached) --------------------------------------


def toy_training_config(data_dir: Path, out_dir: Path) -> TrainingConfig:
    return TrainingConfig(
        codec=CodecConfig(n_channels=64, latent_channels=96, lambda_=0.013),
        schedule=TrainingSchedule(
            stage1_epochs=30, stage1_lr=1e-4,
            stage2_epochs=5, stage2_lr=1e-5,
            batch_size=16, patch_size=96, hflip=True,
            seed=2024, backbone="tiny-test",
            # per-iteration alternation: session-block recency at this scale
            # otherwise leaves the epoch's final session co-adapted and
            # swamps the branch specialization being measured
            interleave=True,
        ),
        msclip=MsClipConfig(),
        manifest=str(data_dir / "manifest.json"),
        out_dir=str(out_dir),
    )


def config_key(cfg: TrainingConfig) -> str:
    blob = json.dumps(
        {
            "codec": asdict(cfg.codec),
            "schedule": asdict(cfg.schedule),
            "msclip": asdict(cfg.msclip),
            "corpus": {"count": 2100, "size": 96, "seed": 123},
        },
        sort_keys=True,
    )
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _prune_run_dir(out_dir: Path) -> None:
    for p in out_dir.glob("stage*_epoch*.pt"):
        p.unlink()
    latest = out_dir / "latest.pt"
    if latest.exists():
        latest.unlink()


def _toy_dataset(root: Path) -> Path:
    data = root / "data"
    if not (data / "manifest.json").exists():
        generate_toy_dataset(data, 2100, size=96, seed=123)
        # 2000 train / 100 held-out test images
        manifest = build_manifest(data, split_ratios=(2000 / 2100, 0.0, 100 / 2100), seed=123)
        save_manifest(manifest, data / "manifest.json")
    return data


@pytest.fixture(scope="session")
def toy_run():
    """Train (or load) the preference-separation model; returns a dict with
    the final checkpoint, a rerun digest, the corpus, and the wall time."""
    if SKIP_TRAIN:
        pytest.skip("UGICM_SKIP_TRAIN is set")
    probe = toy_training_config(Path("x"), Path("y"))
    root = CACHE / config_key(probe)
    root.mkdir(parents=True, exist_ok=True)
    data = _toy_dataset(root)
    run_a = root / "run_a"
    meta_path = root / "meta.json"
    if not (run_a / "final.pt").exists():
        t0 = time.time()
        final = run_training(toy_training_config(data, run_a), resume=True)
        wall_a = time.time() - t0
        _prune_run_dir(run_a)
        _, payload = load_checkpoint(final)
        # identical second run for the bit-determinism criterion
        run_b = root / "run_b"
        final_b = run_training(toy_training_config(data, run_b), resume=True)
        _, payload_b = load_checkpoint(final_b)
        meta = {
            "wall_seconds": wall_a,
            "digest_a": payload["param_digest"],
            "digest_b": payload_b["param_digest"],
            "log_a": (run_a / "train_log.csv").read_text(),
            "log_b": (run_b / "train_log.csv").read_text(),
        }
        meta_path.write_text(json.dumps(meta))
        shutil.rmtree(run_b)
    meta = json.loads(meta_path.read_text())
    return {
        "final": run_a / "final.pt",
        "data": data,
        "meta": meta,
    }


# -- primary criteria --------------------------------------------------------


def test_acceptance_lossless_roundtrip(report):
    """Decoded quantized latents bit-identical to direct quantization."""
    model = make_model(n=16, m=24, seed=1, spice=4.0)
    t0 = time.time()
    ok = True
    for seed in range(20):
        shape = (3, 96, 96) if seed % 2 else (3, 70, 90)
        x = random_image(shape, seed=300 + seed)
        data, _ = compress_tensor(model, x)
        x_p, _ = pad_image(x, factor=16)
        expected = torch.round(model.encode(x_p))
        for beta in (BETA_HUMAN, BETA_MACHINE):
            _, y_hat = decompress_tensor(model, data, beta)
            ok = ok and torch.equal(y_hat, expected)
    report(
        "lossless-roundtrip", ok,
        f"20 images, both preferences, bit-exact latents in {time.time() - t0:.1f}s",
    )


def test_acceptance_rate_model_fidelity(report):
    """Estimated bits within 2% + 64 bytes of the coded payload."""
    model = make_model(n=16, m=24, seed=2, spice=6.0)
    t0 = time.time()
    worst = 0.0
    ok = True
    for seed in range(20):
        x = random_image((3, 96, 96), seed=400 + seed)
        data, stats = compress_tensor(model, x)
        actual = len(data) * 8
        gap = abs(stats["estimated_bits"] - actual)
        allowance = 0.02 * actual + 64 * 8
        worst = max(worst, gap / allowance)
        ok = ok and gap <= allowance
    report(
        "rate-model-fidelity", ok,
        f"20 images, worst gap at {worst:.2f}x the allowance, {time.time() - t0:.1f}s",
    )


def test_acceptance_pcdm_init_identity(report):
    """Pre-training decodes are invariant to the preference condition."""
    model = make_model(n=16, m=24, seed=3)
    ok = True
    for seed in range(10):
        y_hat = torch.round(random_image((1, 24, 6, 6), seed=500 + seed) * 8 - 4)
        with torch.no_grad():
            h = model.decode(y_hat, BETA_HUMAN)
            m = model.decode(y_hat, BETA_MACHINE)
        ok = ok and torch.equal(h, m)
    report("pcdm-init-identity", ok, "10 latents, beta=0 and beta=1 bit-identical")


def test_acceptance_msclip_correctness(report):
    """Identity images give (near) zero loss; gradient matches differences."""
    t0 = time.time()
    backbone = TinyEmbeddingNet().double()
    cfg = MsClipConfig()
    worst_val = 0.0
    for seed in range(10):
        x = random_image((3, 64, 64), seed=600 + seed, dtype=torch.float64)
        worst_val = max(
            worst_val, float(loss_ms_clip(x, x.clone(), cfg, backbone, seed=seed))
        )
    ok = worst_val <= 1e-6

    rng = np.random.default_rng(601)
    x = torch.full((3, 32, 32), 0.2, dtype=torch.float64)
    x[:, 8:22, 6:26] = 0.85
    base = (x + torch.from_numpy(rng.uniform(-0.1, 0.1, x.shape))).clamp(0, 1)
    instances = propose_instances(x)

    def f(xhat):
        return loss_ms_clip(
            x, xhat, cfg, backbone, rng=np.random.default_rng(4), instances=instances
        )

    xhat = base.clone().requires_grad_(True)
    f(xhat).backward()
    grad = xhat.grad
    eps = 1e-6
    worst_rel = 0.0
    for _ in range(20):
        c, i, j = (int(rng.integers(0, s)) for s in base.shape)
        plus = base.clone(); plus[c, i, j] += eps
        minus = base.clone(); minus[c, i, j] -= eps
        fd = (float(f(plus)) - float(f(minus))) / (2 * eps)
        ref = float(grad[c, i, j])
        worst_rel = max(worst_rel, abs(fd - ref) / max(abs(ref), abs(fd), 1e-6))
    ok = ok and worst_rel <= 1e-3
    report(
        "msclip-correctness", ok,
        f"identity loss <= {worst_val:.2e}, grad rel err <= {worst_rel:.2e}, "
        f"{time.time() - t0:.1f}s",
    )


def test_acceptance_refinement(report):
    """L-inf ball holds on 100% of 50 decoded images; similarity improves on
    at least 90%."""
    t0 = time.time()
    backbone = load_backbone("tiny-test")
    model = make_model(n=16, m=24, seed=4, spice=4.0)
    cfg = RefinementConfig(steps=10, step_size=1 / 255, radius=8 / 255)
    held = 0
    improved = 0
    n = 50
    for seed in range(n):
        x = random_image((3, 64, 64), seed=700 + seed)
        data, _ = compress_tensor(model, x)
        xhat, _ = decompress_tensor(model, data, BETA_HUMAN)
        with torch.no_grad():
            ref_emb = backbone.embed(x)
            before = float(cosine_similarity(ref_emb, backbone.embed(xhat)))
        out = refine(x, xhat, backbone, cfg)
        if float((out - xhat.double()).abs().max()) <= 8 / 255 + 1e-9:
            held += 1
        with torch.no_grad():
            after = float(cosine_similarity(ref_emb, backbone.embed(out)))
        if after >= before:
            improved += 1
    ok = held == n and improved >= 0.9 * n
    report(
        "refinement", ok,
        f"L-inf held on {held}/{n}, similarity improved on {improved}/{n}, "
        f"{time.time() - t0:.1f}s",
    )


@pytest.mark.slow
def test_acceptance_preference_separation(toy_run, report):
    """Toy-trained model: machine decode wins on embedding similarity by at
    least half a standard error; human decode wins on PSNR."""
    model, _ = load_checkpoint(toy_run["final"])
    rep = evaluate_model(model, toy_run["data"] / "manifest.json", split="test")
    write_report(rep, CACHE / "toy_report.csv")
    n = len(rep.records)
    sims_m = np.array([r.sim_machine for r in rep.records])
    sims_h = np.array([r.sim_human for r in rep.records])
    diffs = sims_m - sims_h
    se = diffs.std(ddof=1) / np.sqrt(n)
    agg = rep.aggregates()
    sim_gap_ok = diffs.mean() >= 0.5 * se
    psnr_ok = agg["psnr_human"] > agg["psnr_machine"]

    # trained conditional modules now separate the branches
    y_hat = torch.round(random_image((1, 96, 6, 6), seed=800) * 6 - 3)
    with torch.no_grad():
        dec_h = model.decode(y_hat, BETA_HUMAN)
        dec_m = model.decode(y_hat, BETA_MACHINE)
    branches_differ = not torch.equal(dec_h, dec_m)

    ok = sim_gap_ok and psnr_ok and branches_differ and n == 100
    report(
        "preference-separation", ok,
        f"n={n}, mean sim gap {diffs.mean():.5f} vs 0.5*SE {0.5 * se:.5f}, "
        f"psnr_h {agg['psnr_human']:.2f} vs psnr_m {agg['psnr_machine']:.2f}, "
        f"branches differ: {branches_differ}, "
        f"train wall {toy_run['meta']['wall_seconds'] / 60:.1f} min",
    )


def test_acceptance_ablation_plumbing(report):
    """Single-scale and multi-scale configurations both run and produce
    distinct machine-session losses on a fixed batch."""
    t0 = time.time()
    backbone = load_backbone("tiny-test")
    batch = torch.stack(
        [random_image((3, 64, 64), seed=900 + i) for i in range(4)]
    )
    losses = {}
    for name, weights in [("single", (1.0, 0.0, 0.0)), ("multi", (1.0, 1.0, 1.0))]:
        model = make_model(n=16, m=24, seed=5)
        model.train()
        opt = torch.optim.Adam(model.parameters(), lr=1e-4)
        rec = stage1_step_machine(
            batch, model, opt, backbone,
            MsClipConfig(weights=weights), np.random.default_rng(6), 11,
        )
        losses[name] = rec["loss"]
    ok = losses["single"] != losses["multi"]
    report(
        "ablation-plumbing", ok,
        f"single {losses['single']:.4f} vs multi {losses['multi']:.4f}, "
        f"{time.time() - t0:.1f}s",
    )


@pytest.mark.slow
def test_acceptance_determinism(toy_run, tmp_path, toy_corpus, report):
    """Seeded reruns are bit-identical: the full toy training job, a short
    training job, compression, and evaluation."""
    meta = toy_run["meta"]
    full_ok = meta["digest_a"] == meta["digest_b"] and meta["log_a"] == meta["log_b"]

    cfg_kwargs = dict(
        codec=CodecConfig(n_channels=16, latent_channels=24),
        schedule=TrainingSchedule(
            stage1_epochs=2, stage2_epochs=1, batch_size=8, patch_size=96, seed=77
        ),
        msclip=MsClipConfig(),
        manifest=str(toy_corpus / "manifest.json"),
    )
    digests = []
    for tag in ("da", "db"):
        final = run_training(TrainingConfig(out_dir=str(tmp_path / tag), **cfg_kwargs))
        _, payload = load_checkpoint(final)
        digests.append(payload["param_digest"])
    short_ok = digests[0] == digests[1]

    model = make_model(n=16, m=24, seed=6, spice=4.0)
    x = random_image((3, 96, 96), seed=1000)
    stream_ok = compress_tensor(model, x)[0] == compress_tensor(model, x)[0]

    ckpt = tmp_path / "det.pt"
    save_checkpoint(ckpt, model, "final")
    eval_ok = evaluate_model(ckpt, toy_corpus) == evaluate_model(ckpt, toy_corpus)

    ok = full_ok and short_ok and stream_ok and eval_ok
    report(
        "determinism", ok,
        f"toy-job digests equal: {full_ok}, short-run digests equal: {short_ok}, "
        f"streams equal: {stream_ok}, reports equal: {eval_ok}",
    )


# -- secondary criterion -----------------------------------------------------


NATIVE_CODER = REPO / "ugic-coder" / "target" / "release" / "ugic-coder"


@pytest.mark.skipif(not NATIVE_CODER.exists(), reason="native coder binary not built")
def test_acceptance_native_coder_equivalence(report):
    """10^4 randomized (cdf, sequence) trials byte-identical between the
    native coder and the pure-Python fallback, all round-tripping."""
    from ugicm.coder import _rc_py, quantize_pmf

    t0 = time.time()
    rng = np.random.default_rng(424242)
    trials = []
    blobs = []
    expected = []
    for _ in range(10_000):
        alphabet = int(rng.integers(2, 64))
        n_tables = int(rng.integers(1, 4))
        length = int(rng.integers(0, 64))
        cdfs = quantize_pmf(rng.random((n_tables, alphabet)) ** 3 + 1e-9)
        index = rng.integers(0, n_tables, size=length).astype(np.int32)
        syms = rng.integers(0, alphabet, size=length).astype(np.int32)
        trials.append((syms, cdfs, index))
        expected.append(_rc_py.range_encode(syms, cdfs, index))

    # one batched subprocess call: little-endian binary trial list on stdin,
    # encoded payloads and decoded symbols back on stdout
    req = bytearray()
    req += np.int64(len(trials)).tobytes()
    for syms, cdfs, index in trials:
        req += np.int64(cdfs.shape[0]).tobytes()
        req += np.int64(cdfs.shape[1]).tobytes()
        req += np.int64(syms.size).tobytes()
        req += cdfs.astype("<i4").tobytes()
        req += index.astype("<i4").tobytes()
        req += syms.astype("<i4").tobytes()
    out = subprocess.run(
        [str(NATIVE_CODER), "batch"], input=bytes(req), capture_output=True, check=True
    )
    buf = out.stdout
    off = 0
    byte_identical = 0
    roundtrips = 0
    for (syms, cdfs, index), ref in zip(trials, expected):
        (blob_len,) = np.frombuffer(buf, "<i8", 1, off); off += 8
        blob = buf[off : off + int(blob_len)]; off += int(blob_len)
        decoded = np.frombuffer(buf, "<i4", syms.size, off); off += 4 * syms.size
        if blob == ref:
            byte_identical += 1
        if np.array_equal(decoded, syms):
            roundtrips += 1
    dt = time.time() - t0
    ok = byte_identical == 10_000 and roundtrips == 10_000 and dt < 120
    report(
        "native-coder-equivalence", ok,
        f"{byte_identical}/10000 byte-identical, {roundtrips}/10000 round-trips, "
        f"{dt:.1f}s",
    )
