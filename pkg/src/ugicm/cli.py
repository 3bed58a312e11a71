"""Command-line interface."""

import argparse
import sys
from pathlib import Path

from .errors import UgicError


def _cmd_train(args) -> int:
    from .training import TrainingConfig, run_training

    config = TrainingConfig.from_yaml(args.config)
    final = run_training(config, resume=args.resume, init_checkpoint=args.init_ckpt)
    print(f"final checkpoint: {final}")
    return 0


def _cmd_compress(args) -> int:
    from .evaluate import compress_file

    stats = compress_file(args.input, args.ckpt, args.output)
    print(
        f"{args.output}: {stats['payload_bytes']} bytes, "
        f"bpp={stats['bpp_actual']:.4f} (estimated {stats['bpp_estimated']:.4f})"
    )
    return 0


def _cmd_decompress(args) -> int:
    from .codec import BETA_HUMAN, BETA_MACHINE
    from .evaluate import decompress_file

    beta = BETA_HUMAN if args.preference == "human" else BETA_MACHINE
    decompress_file(args.input, args.ckpt, beta, args.output)
    print(f"wrote {args.output} ({args.preference} preference)")
    return 0


def _cmd_refine(args) -> int:
    import torch

    from .dataset import load_image, save_image
    from .embedding import cosine_similarity, load_backbone
    from .metrics import psnr
    from .refine import RefinementConfig, refine

    x = load_image(args.orig)
    xhat = load_image(args.recon)
    backbone = load_backbone(args.backbone)
    cfg = RefinementConfig(steps=args.steps, step_size=args.step_size, radius=args.delta)
    out = refine(x, xhat, backbone, cfg)
    save_image(out, args.output)
    with torch.no_grad():
        ref = backbone.embed(x)
        sim_before = float(cosine_similarity(ref, backbone.embed(xhat)))
        sim_after = float(cosine_similarity(ref, backbone.embed(out)))
    lines = [
        "file,sim_before,sim_after,psnr_before,psnr_after",
        f"{Path(args.recon).name},{sim_before!r},{sim_after!r},"
        f"{psnr(x, xhat)!r},{psnr(x, out)!r}",
    ]
    text = "\n".join(lines) + "\n"
    if args.csv:
        Path(args.csv).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def _cmd_eval(args) -> int:
    from .evaluate import evaluate_model, write_report

    report = evaluate_model(args.ckpt, args.data, backbone=args.backbone, split=args.split)
    write_report(report, args.report)
    agg = report.aggregates()
    if agg:
        print(
            f"{len(report.records)} images: bpp={agg['bpp_actual']:.4f} "
            f"psnr_h={agg['psnr_human']:.2f} psnr_m={agg['psnr_machine']:.2f} "
            f"sim_h={agg['sim_human']:.4f} sim_m={agg['sim_machine']:.4f}"
        )
    else:
        print("0 images: empty report")
    return 0


def _cmd_plot(args) -> int:
    from .evaluate import plot_rd, read_report

    reports = [read_report(p) for p in args.reports]
    written = plot_rd(reports, args.output)
    print(f"wrote {len(written)} files to {args.output}")
    return 0


def _cmd_toydata(args) -> int:
    from .dataset import build_manifest, generate_toy_dataset, save_manifest

    generate_toy_dataset(args.output, args.count, size=args.size, seed=args.seed)
    manifest = build_manifest(args.output, seed=args.seed)
    save_manifest(manifest, Path(args.output) / "manifest.json")
    print(f"wrote {args.count} images and manifest.json to {args.output}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ugicm",
        description="Unified conditional image codec: one bitstream, two decode preferences.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run the two-stage training schedule")
    p.add_argument("--config", required=True, help="YAML training config")
    p.add_argument("--resume", action="store_true", help="resume from the latest checkpoint")
    p.add_argument("--init-ckpt", default=None, help="checkpoint to start stage 2 from")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("compress", help="compress an image to a unified bitstream")
    p.add_argument("input")
    p.add_argument("--ckpt", required=True)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=_cmd_compress)

    p = sub.add_parser("decompress", help="decode a bitstream at a chosen preference")
    p.add_argument("input")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--preference", choices=["human", "machine"], default="human")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=_cmd_decompress)

    p = sub.add_parser("refine", help="sign-gradient similarity refinement of a reconstruction")
    p.add_argument("--orig", required=True)
    p.add_argument("--recon", required=True)
    p.add_argument("--delta", type=float, default=8 / 255, help="L-inf budget in [0,1] units")
    p.add_argument("--steps", type=int, default=10)
    p.add_argument("--step-size", type=float, default=1 / 255)
    p.add_argument("--backbone", default="tiny-test")
    p.add_argument("--csv", default=None, help="write the before/after CSV here instead of stdout")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=_cmd_refine)

    p = sub.add_parser("eval", help="rate-distortion evaluation over a dataset")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True, help="image directory or manifest file")
    p.add_argument("--report", required=True)
    p.add_argument("--backbone", default="tiny-test")
    p.add_argument("--split", default="test")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("plot", help="rate-distortion curves from eval reports")
    p.add_argument("--reports", nargs="+", required=True)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=_cmd_plot)

    p = sub.add_parser("toydata", help="generate the synthetic toy corpus")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("-n", "--count", type=int, default=100)
    p.add_argument("--size", type=int, default=96)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_toydata)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UgicError as exc:
        print(f"{exc.code}: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"file-not-found: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
