"""Command-line surface: dataset preparation, training, fixture export."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="edgeprof-trainer")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare-data", help="sample CAD meshes into PCF clouds")
    p.add_argument("--mesh-root", type=Path, default=None,
                   help="existing ModelNet40/ directory (downloads if omitted)")
    p.add_argument("--download-root", type=Path, default=Path("datasets"))
    p.add_argument("--sha256", default=None, help="expected archive checksum")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--points", type=int, default=1024)
    p.add_argument("--seed", type=int, default=42)

    p = sub.add_parser("synth-data", help="generate the procedural shape dataset")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--per-class-train", type=int, default=40)
    p.add_argument("--per-class-test", type=int, default=10)
    p.add_argument("--points", type=int, default=256)
    p.add_argument("--classes", type=int, default=10)
    p.add_argument("--seed", type=int, default=42)

    p = sub.add_parser("train", help="train and export ECW weights + metrics")
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--k", type=int, default=20)
    p.add_argument("--static-tail", type=int, default=0)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--points", type=int, default=1024)
    p.add_argument("--num-classes", type=int, default=40)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--device", default=None)

    p = sub.add_parser("export-fixtures", help="write engine cross-check fixtures")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--count", type=int, default=21)
    p.add_argument("--seed", type=int, default=42)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "prepare-data":
        from .data import download_modelnet40, prepare_dataset
        mesh_root = args.mesh_root
        if mesh_root is None:
            mesh_root = download_modelnet40(args.download_root,
                                            expected_sha256=args.sha256)
        manifest = prepare_dataset(mesh_root, args.out, points_per_cloud=args.points,
                                   seed=args.seed)
        print(f"prepared {len(manifest['train'])} train / {len(manifest['test'])} "
              f"test clouds in {args.out}")
    elif args.command == "synth-data":
        from .data import make_shape_dataset
        manifest = make_shape_dataset(args.out, per_class_train=args.per_class_train,
                                      per_class_test=args.per_class_test,
                                      points_per_cloud=args.points,
                                      num_classes=args.classes, seed=args.seed)
        print(f"generated {len(manifest['train'])} train / {len(manifest['test'])} "
              f"test clouds in {args.out}")
    elif args.command == "train":
        from .train import TrainConfig, train
        cfg = TrainConfig(epochs=args.epochs, k=args.k, static_tail=args.static_tail,
                          batch_size=args.batch_size, points_per_cloud=args.points,
                          num_classes=args.num_classes, seed=args.seed)
        metrics = train(cfg, args.dataset, args.out, device=args.device)
        print(f"test accuracy {metrics['test_accuracy']:.4f}")
    elif args.command == "export-fixtures":
        from .fixtures import export_fixtures
        manifest = export_fixtures(args.out, count=args.count, seed=args.seed)
        print(f"wrote {len(manifest['fixtures'])} fixtures to {args.out}")
    return 0


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
