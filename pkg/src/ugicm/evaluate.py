"""Rate-distortion evaluation and reporting."""

import csv
import subprocess
import tempfile
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import matplotlib
import torch

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .codec import BETA_HUMAN, BETA_MACHINE, UnifiedCodec
from .checkpoint import load_checkpoint, param_digest
from .dataset import DatasetManifest, build_manifest, load_image, save_image
from .embedding import cosine_similarity, load_backbone
from .metrics import psnr, structural_similarity
from .pipeline import compress_tensor, decompress_tensor


@dataclass
class RdRecord:
    file: str
    bpp_estimated: float
    bpp_actual: float
    psnr_human: float
    psnr_machine: float
    ssim_human: float
    ssim_machine: float
    sim_human: float
    sim_machine: float


@dataclass
class RdReport:
    lambda_: float
    checkpoint_digest: str
    backbone: str
    preprocess: dict = field(default_factory=dict)
    records: list[RdRecord] = field(default_factory=list)

    def aggregates(self) -> dict:
        if not self.records:
            return {}
        keys = [f.name for f in fields(RdRecord) if f.name != "file"]
        return {
            k: sum(getattr(r, k) for r in self.records) / len(self.records) for k in keys
        }


def _resolve_model(checkpoint) -> UnifiedCodec:
    if isinstance(checkpoint, UnifiedCodec):
        return checkpoint
    model, _ = load_checkpoint(checkpoint)
    model.eval()
    return model


def compress_file(image_path, checkpoint, out_path) -> dict:
    model = _resolve_model(checkpoint)
    x = load_image(image_path)
    data, stats = compress_tensor(model, x)
    Path(out_path).write_bytes(data)
    return stats


def decompress_file(bitstream_path, checkpoint, beta, out_path) -> torch.Tensor:
    model = _resolve_model(checkpoint)
    x_hat, _ = decompress_tensor(model, Path(bitstream_path).read_bytes(), beta)
    save_image(x_hat, out_path)
    return x_hat


def evaluate_model(
    checkpoint,
    manifest: DatasetManifest | str | Path,
    backbone: str = "tiny-test",
    split: str | None = "test",
) -> RdReport:
    """Compress and decode every image at both preferences; fill an RdReport.

    ``manifest`` may be a DatasetManifest, a manifest file, or an image
    directory.
    """
    model = _resolve_model(checkpoint)
    if isinstance(manifest, (str, Path)):
        p = Path(manifest)
        if p.is_dir():
            manifest = build_manifest(p, split_ratios=(0.0, 0.0, 1.0))
        else:
            from .dataset import load_manifest

            manifest = load_manifest(p)
    files = manifest.files(split)
    if split is not None and not files:
        files = manifest.files(None)
    emb = load_backbone(backbone)
    report = RdReport(
        lambda_=model.config.lambda_,
        checkpoint_digest=param_digest(model),
        backbone=backbone,
        preprocess=emb.preprocess_spec(),
    )
    for path in sorted(files, key=lambda p: p.name):
        x = load_image(path)
        data, stats = compress_tensor(model, x)
        xh, _ = decompress_tensor(model, data, BETA_HUMAN)
        xm, _ = decompress_tensor(model, data, BETA_MACHINE)
        with torch.no_grad():
            e_ref = emb.embed(x)
            sim_h = float(cosine_similarity(e_ref, emb.embed(xh)))
            sim_m = float(cosine_similarity(e_ref, emb.embed(xm)))
        report.records.append(
            RdRecord(
                file=path.name,
                bpp_estimated=stats["bpp_estimated"],
                bpp_actual=stats["bpp_actual"],
                psnr_human=psnr(x, xh),
                psnr_machine=psnr(x, xm),
                ssim_human=structural_similarity(x.numpy(), xh.numpy()),
                ssim_machine=structural_similarity(x.numpy(), xm.numpy()),
                sim_human=sim_h,
                sim_machine=sim_m,
            )
        )
    return report


def run_external_evaluator(command: list[str], checkpoint, manifest, beta, split="test") -> float:
    """Subprocess hook for downstream task models: decoded images are written
    to a temp dir, the command is run with that dir appended, and its last
    stdout line is parsed as the metric."""
    model = _resolve_model(checkpoint)
    if isinstance(manifest, (str, Path)):
        from .dataset import load_manifest

        manifest = load_manifest(manifest)
    with tempfile.TemporaryDirectory() as tmp:
        for path in sorted(manifest.files(split), key=lambda p: p.name):
            data, _ = compress_tensor(model, load_image(path))
            xh, _ = decompress_tensor(model, data, beta)
            save_image(xh, Path(tmp) / path.name)
        out = subprocess.run(
            list(command) + [tmp], capture_output=True, text=True, check=True
        )
        return float(out.stdout.strip().splitlines()[-1])


# -- report serialization ---------------------------------------------------


def write_report(report: RdReport, path) -> None:
    with Path(path).open("w", newline="") as fh:
        fh.write(f"# lambda={report.lambda_!r}\n")
        fh.write(f"# checkpoint_digest={report.checkpoint_digest}\n")
        fh.write(f"# backbone={report.backbone}\n")
        names = [f.name for f in fields(RdRecord)]
        writer = csv.DictWriter(fh, fieldnames=names)
        writer.writeheader()
        for rec in report.records:
            writer.writerow(asdict(rec))


def read_report(path) -> RdReport:
    meta = {}
    rows = []
    with Path(path).open() as fh:
        lines = [ln for ln in fh]
    body = []
    for ln in lines:
        if ln.startswith("# "):
            key, _, val = ln[2:].strip().partition("=")
            meta[key] = val
        else:
            body.append(ln)
    reader = csv.DictReader(body)
    for row in reader:
        rows.append(
            RdRecord(
                file=row["file"],
                **{k: float(v) for k, v in row.items() if k != "file"},
            )
        )
    return RdReport(
        lambda_=float(meta.get("lambda", "nan")),
        checkpoint_digest=meta.get("checkpoint_digest", ""),
        backbone=meta.get("backbone", ""),
        records=rows,
    )


PLOT_METRICS = [
    "psnr_human",
    "psnr_machine",
    "ssim_human",
    "ssim_machine",
    "sim_human",
    "sim_machine",
]


def plot_rd(reports: list[RdReport], out_dir) -> list[Path]:
    """One CSV of (lambda, bpp, value) rows and one curve image per metric."""
    if not reports:
        raise ValueError("at least one report is required")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ordered = sorted(reports, key=lambda r: r.lambda_)
    written = []
    for metric in PLOT_METRICS:
        rows = []
        for rep in ordered:
            agg = rep.aggregates()
            if not agg:
                continue
            rows.append((rep.lambda_, agg["bpp_actual"], agg[metric]))
        csv_path = out / f"rd_{metric}.csv"
        with csv_path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["lambda", "bpp", metric])
            writer.writerows([[repr(a), repr(b), repr(c)] for a, b, c in rows])
        fig, ax = plt.subplots(figsize=(5, 4))
        ax.plot([r[1] for r in rows], [r[2] for r in rows], "o-")
        ax.set_xlabel("bits per pixel")
        ax.set_ylabel(metric)
        ax.grid(True, alpha=0.3)
        fig.tight_layout()
        png_path = out / f"rd_{metric}.png"
        fig.savefig(png_path)
        plt.close(fig)
        written.extend([csv_path, png_path])
    return written
