"""Command-line lifecycle: train, stylize, factorize, eval, serve.

Thin shell over the library: every behavior here is reachable through
library calls and produces bit-identical results. Exit codes: 0 success,
2 usage or configuration problem, 3 divergence during training.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import load_config
from .curriculum_trainer import (StageLossWeights, StageSchedule, TrainLogger,
                                 check_config_match, ensure_stage_at_least,
                                 load_checkpoint, pack_bundle, restore_bundle,
                                 run_curriculum, save_checkpoint,
                                 stage1_initialize, train_intrinsic,
                                 train_stage2, train_stage3)
from .errors import (CheckpointError, DatasetError, DecodeError,
                     DivergenceError, InsufficientSamplesError,
                     NumericalError, ValidationError)
from .evaluation import render_fid_table, run_fid_protocol
from .extrinsic_path import build_pipeline
from .generator_core import build_generator
from .image_pipeline import ingest_dataset, load_image, save_image
from .inference import load_pipeline, semantic_directions, stylize_image
from .latent_semantics import directions_to_json
from .losses import Discriminator

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DIVERGED = 3


def parse_weights(text: str):
    parts = [float(p) for p in text.split(",") if p.strip() != ""]
    if not parts:
        raise ValidationError(f"could not parse weights from {text!r}")
    return parts[0] if len(parts) == 1 else parts


def cmd_train(args) -> int:
    config = load_config(args.config)
    out_dir = Path(args.out_dir or config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    data = ingest_dataset(args.data or config.data_dir, config.resolution,
                          seed=config.seed)
    weights = StageLossWeights.from_run_config(config)

    if args.stage == "all":
        result = run_curriculum(config, data, out_dir=out_dir,
                                log_path=out_dir / "train_log.jsonl",
                                weights=weights)
        for stage, path in sorted(result.checkpoints.items()):
            print(f"stage {stage} checkpoint: {path}")
        return EXIT_OK

    stage = int(args.stage)
    logger = TrainLogger(out_dir / "train_log.jsonl")
    disc = Discriminator(config.discriminator_seed)

    if stage == 1:
        base = build_generator(config, role_tag="base")
        sched = StageSchedule.from_run_config(config, 1)
        transfer = train_intrinsic(base, data, sched, run_config=config,
                                   weights=weights, disc=disc, logger=logger,
                                   out_dir=out_dir)
        stage1_initialize(transfer)
        pipe = build_pipeline(config, role_tag="transfer")
        path = out_dir / "stage1.ckpt"
        save_checkpoint(pack_bundle(transfer, disc, stage=1,
                                    iteration=sched.iterations, config=config,
                                    pipe=pipe), path)
        print(f"stage 1 checkpoint: {path}")
        return EXIT_OK

    if not args.resume:
        raise ValidationError(f"--stage {stage} needs --resume <checkpoint>")
    bundle = load_checkpoint(args.resume)
    check_config_match(bundle, config, force=args.force)
    ensure_stage_at_least(bundle, stage - 1, f"stage-{stage} training")
    pipe = build_pipeline(config, role_tag="transfer")
    restore_bundle(bundle, pipe.gen, disc=disc, pipe=pipe)
    sched = StageSchedule.from_run_config(config, stage)

    if stage == 2:
        train_stage2(pipe, disc, sched, weights, config.seed + 2,
                     run_config=config, logger=logger, out_dir=out_dir)
    else:
        base = build_generator(config, role_tag="base")
        train_stage3(pipe, disc, data, sched, weights, run_config=config,
                     base=base, logger=logger, out_dir=out_dir)
    path = out_dir / f"stage{stage}.ckpt"
    save_checkpoint(pack_bundle(pipe.gen, disc, stage=stage,
                                iteration=sched.iterations, config=config,
                                pipe=pipe), path)
    print(f"stage {stage} checkpoint: {path}")
    return EXIT_OK


def cmd_stylize(args) -> int:
    config = load_config(args.config)
    pipe, _, _ = load_pipeline(args.checkpoint, config, force=args.force)
    img = load_image(args.input, config.resolution)
    out = stylize_image(pipe, img, parse_weights(args.weights),
                        sigma=args.sigma, direction_rank=args.rank,
                        gamma1=args.gamma1, gamma2=args.gamma2)
    save_image(out, args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_factorize(args) -> int:
    config = load_config(args.config)
    pipe, _, _ = load_pipeline(args.checkpoint, config, force=args.force)
    rows = directions_to_json(semantic_directions(pipe, args.top))
    text = json.dumps(rows, indent=2)
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote {args.out}")
    else:
        print(text)
    return EXIT_OK


def cmd_eval(args) -> int:
    config = load_config(args.config)
    pipe, _, _ = load_pipeline(args.checkpoint, config, force=args.force)
    style = ingest_dataset(args.style_dir, config.resolution, seed=config.seed)
    test = ingest_dataset(args.test_dir, config.resolution, seed=config.seed)
    report = run_fid_protocol(pipe, style, test, config=config)
    print(f"protocol: {report.metadata['protocol']}")
    for metric in sorted({r["metric_name"] for r in report.rows}):
        print()
        print(metric)
        print(render_fid_table(report, metric))
    if args.json:
        Path(args.json).write_text(report.to_json())
        print(f"\nwrote {args.json}")
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    config = load_config(args.config)
    pipe, _, ck_hash = load_pipeline(args.checkpoint, config, force=args.force)
    app = create_app(pipe, config, checkpoint_hash=ck_hash)
    try:
        uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    except OSError as exc:
        print(f"error: could not bind {args.host}:{args.port}: {exc}",
              file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fistnet",
        description="Dual-path facial style transfer: training, inference, "
                    "evaluation, and an HTTP service.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", default=None,
                       help="config JSON path (falls back to $FISTNET_CONFIG, "
                            "then built-in defaults)")
        p.add_argument("--force", action="store_true",
                       help="proceed past a checkpoint config-hash mismatch")

    p = sub.add_parser("train", help="run curriculum stages")
    common(p)
    p.add_argument("--stage", choices=["1", "2", "3", "all"], default="all")
    p.add_argument("--resume", default=None, help="checkpoint to start from")
    p.add_argument("--data", default=None, help="dataset directory override")
    p.add_argument("--out-dir", default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("stylize", help="stylize one image")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--weights", default="1",
                   help="scalar (broadcast to every layer) or comma list")
    p.add_argument("--sigma", type=float, default=0.0)
    p.add_argument("--rank", type=int, default=None,
                   help="semantic direction rank, 0 = principal")
    p.add_argument("--gamma1", type=float, default=None)
    p.add_argument("--gamma2", type=float, default=None)
    p.set_defaults(func=cmd_stylize)

    p = sub.add_parser("factorize", help="export semantic directions")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--top", type=int, default=1)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_factorize)

    p = sub.add_parser("eval", help="distribution-distance report")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--style-dir", required=True)
    p.add_argument("--test-dir", required=True)
    p.add_argument("--json", default=None, help="also write the report JSON")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("serve", help="run the HTTP inference service")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except DivergenceError as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        if exc.checkpoint_path:
            print(f"last checkpoint: {exc.checkpoint_path}", file=sys.stderr)
        return EXIT_DIVERGED
    except (ValidationError, DatasetError, DecodeError, CheckpointError,
            InsufficientSamplesError, NumericalError, FileNotFoundError,
            NotADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
