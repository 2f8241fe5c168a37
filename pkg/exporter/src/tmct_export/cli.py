"""Exporter entry point: build fixtures, export embedding files, and
optionally fine-tune the base model first."""

from __future__ import annotations

import argparse
import sys

from .dataset import load_split
from .encoders import make_encoder
from .export import ExportJob, run_export
from .fixture import FixtureConfig, generate_fixture


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tmct-export")
    sub = ap.add_subparsers(dest="command", required=True)

    fx = sub.add_parser("fixture", help="generate a synthetic dataset tree")
    fx.add_argument("--out", required=True)
    fx.add_argument("--seed", type=int, default=0)
    fx.add_argument("--attributes", type=int, default=16)
    fx.add_argument("--objects", type=int, default=12)
    fx.add_argument("--train-pairs", type=int, default=83)
    fx.add_argument("--test-seen", type=int, default=18)
    fx.add_argument("--test-unseen", type=int, default=18)
    fx.add_argument("--test-images", type=int, default=2914)
    fx.add_argument("--train-images-per-pair", type=int, default=6)

    ex = sub.add_parser("export", help="write bank and stream files")
    ex.add_argument("--dataset", required=True)
    ex.add_argument("--bank-out", required=True)
    ex.add_argument("--stream-out", required=True)
    ex.add_argument("--backend", choices=("stub", "clip"), default="stub")
    ex.add_argument("--model-id")
    ex.add_argument("--checkpoint", help="fine-tuned weights from 'finetune'")
    ex.add_argument("--open-world", action="store_true")
    ex.add_argument("--manifest-out")

    ft = sub.add_parser("finetune", help="train prompt/word/adapter weights")
    ft.add_argument("--dataset", required=True)
    ft.add_argument("--checkpoint-out", required=True)
    ft.add_argument("--model-id", default="stub-projection-64")
    ft.add_argument("--epochs", type=int, default=20)
    ft.add_argument("--batch-size", type=int, default=128)
    ft.add_argument("--lr", type=float, default=5e-4)
    ft.add_argument("--seed", type=int, default=0)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "fixture":
        cfg = FixtureConfig(num_attributes=args.attributes, num_objects=args.objects,
                            train_pairs=args.train_pairs, test_seen=args.test_seen,
                            test_unseen=args.test_unseen, test_images=args.test_images,
                            train_images_per_pair=args.train_images_per_pair,
                            seed=args.seed)
        summary = generate_fixture(args.out, cfg)
        print(" ".join(f"{k}={v}" for k, v in summary.items()))
        return 0
    if args.command == "export":
        job = ExportJob(dataset_root=args.dataset, bank_out=args.bank_out,
                        stream_out=args.stream_out, model_id=args.model_id,
                        backend=args.backend, checkpoint=args.checkpoint,
                        open_world=args.open_world, manifest_out=args.manifest_out)
        encoder = make_encoder(args.backend, model_id=args.model_id,
                               checkpoint=args.checkpoint)
        manifest = run_export(job, encoder)
        print(f"bank rows={manifest['prototype_rows']} "
              f"stream count={manifest['stream_count']} "
              f"skipped={len(manifest['skipped_images'])}")
        return 0
    if args.command == "finetune":
        from .finetune import FinetuneJob, finetune_base
        split = load_split(args.dataset)
        job = FinetuneJob(dataset_root=args.dataset,
                          checkpoint_out=args.checkpoint_out,
                          model_id=args.model_id, epochs=args.epochs,
                          batch_size=args.batch_size, lr=args.lr, seed=args.seed)
        history = finetune_base(split, job)
        for h in history:
            print(f"epoch {h.epoch}: loss {h.loss:.4f} acc {h.accuracy:.4f}")
        return 0
    return 2


if __name__ == "__main__":
    sys.exit(main())
