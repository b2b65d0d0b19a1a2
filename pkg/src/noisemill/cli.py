"""Command-line interface: dataset generation, manifest replay/inspection,
noise statistics, and the UNet forward verifier."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import degrade, scflow, statcheck
from .imgcore import load_png, save_png


def _cmd_generate(args) -> int:
    config = degrade.PipelineConfig()
    if args.config:
        config = degrade.PipelineConfig.from_json(Path(args.config).read_text())
    input_dir = args.input or config.input_dir
    if not input_dir:
        raise SystemExit("generate needs --input (or input_dir in the config)")
    pairs = args.pairs_per_image or config.pairs_per_image
    summary = degrade.generate_dataset(
        input_dir, args.output, seed=args.seed,
        pairs_per_image=pairs, config=config, workers=args.workers)
    print(json.dumps(summary, indent=2))
    return 0


def _cmd_replay(args) -> int:
    hq = load_png(args.hq)
    manifest = Path(args.manifest).read_text()
    sample = degrade.replay(hq, manifest)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    stem = Path(args.manifest).stem.replace("manifest_", "")
    save_png(sample.noisy, out / f"noisy_{stem}.png")
    save_png(sample.clean, out / f"clean_{stem}.png")
    print(f"replayed pair written to {out}")
    return 0


def _cmd_inspect(args) -> int:
    plan = degrade.plan_from_manifest(Path(args.manifest).read_text())
    print(f"source: {plan.source_id}  seed: {plan.master_seed}  "
          f"hq: {plan.source_size[0]}x{plan.source_size[1]}")
    if plan.prep_crop is not None:
        print(f"prep crop at {plan.prep_crop} from original {plan.original_size}")
    for j, st in enumerate(plan.stages):
        short = {k: (float(f"{v:.6g}") if isinstance(v, float) else v)
                 for k, v in st.params.items() if k != "covariance"}
        print(f"  [{j}] round {st.round} {st.kind.value:<9} {short}")
    return 0


def _cmd_stats(args) -> int:
    noisy = load_png(args.noisy)
    clean = load_png(args.clean)
    stats = statcheck.estimate_noise_stats(noisy, clean)
    doc = {
        "psnr_db": statcheck.psnr(noisy, clean),
        "ssim": statcheck.ssim(noisy, clean),
        "blockiness": statcheck.blockiness(noisy),
        "residual_mean": stats.mean.tolist(),
        "residual_covariance": stats.covariance.tolist(),
        "lag1_autocorr": list(stats.lag1_autocorr),
        "sample_count": stats.sample_count,
    }
    print(json.dumps(doc, indent=2))
    return 0


def _cmd_scflow(args) -> int:
    cfg = scflow.SCUNetConfig(weight_seed=args.seed)
    if args.params:
        print(f"parameter count: {scflow.parameter_count(cfg):,}")
        return 0
    if not (args.input and args.output):
        raise SystemExit("scflow needs --input and --output (or --params)")
    img = load_png(args.input)
    out = scflow.scunet_forward(img, cfg)
    save_png(out, args.output)
    print(f"forward pass written to {args.output}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="noisemill",
                                description="paired noisy/clean patch synthesis")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="degrade a directory of HQ images")
    g.add_argument("--input", default=None,
                   help="HQ directory (falls back to input_dir in --config)")
    g.add_argument("--output", required=True)
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--pairs-per-image", type=int, default=None)
    g.add_argument("--config", default=None)
    g.add_argument("--workers", type=int, default=1)
    g.set_defaults(func=_cmd_generate)

    r = sub.add_parser("replay", help="re-execute a manifest bit-identically")
    r.add_argument("--hq", required=True)
    r.add_argument("--manifest", required=True)
    r.add_argument("--output", required=True)
    r.set_defaults(func=_cmd_replay)

    i = sub.add_parser("inspect", help="pretty-print a manifest's plan")
    i.add_argument("--manifest", required=True)
    i.set_defaults(func=_cmd_inspect)

    s = sub.add_parser("stats", help="noise statistics of a noisy/clean pair")
    s.add_argument("--noisy", required=True)
    s.add_argument("--clean", required=True)
    s.set_defaults(func=_cmd_stats)

    f = sub.add_parser("scflow", help="seeded UNet forward pass / param count")
    f.add_argument("--input")
    f.add_argument("--output")
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--params", action="store_true")
    f.set_defaults(func=_cmd_scflow)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # surface a diagnostic, nonzero exit
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
