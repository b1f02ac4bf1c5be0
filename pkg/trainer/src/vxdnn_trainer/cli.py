"""Train an occupancy model on a PLY corpus and export VXDN weights."""

from __future__ import annotations

import argparse
import sys

from .data import DatasetError
from .train import TrainingConfig, train_and_export


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="vxdnn-train", description=__doc__)
    parser.add_argument("--data-dir", action="append", required=True,
                        help="directory of .ply files (repeatable)")
    parser.add_argument("--export", required=True, help="output VXDN weight file")
    parser.add_argument("--block-side", type=int, default=64)
    parser.add_argument("--batch-size", type=int, default=8)
    parser.add_argument("--epochs", type=int, default=50)
    parser.add_argument("--learning-rate", type=float, default=0.001)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--test-fraction", type=float, default=0.1)
    args = parser.parse_args(argv)

    config = TrainingConfig(
        data_dirs=args.data_dir,
        block_side=args.block_side,
        batch_size=args.batch_size,
        epochs=args.epochs,
        learning_rate=args.learning_rate,
        seed=args.seed,
        test_fraction=args.test_fraction,
        export_path=args.export,
    )
    try:
        net, history, test_blocks = train_and_export(config)
    except DatasetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"trained {net.param_count()} parameters for {config.epochs} epochs "
          f"on blocks of side {config.block_side}")
    for i, bits in enumerate(history, 1):
        print(f"  epoch {i:3d}: {bits:.1f} bits/block")
    print(f"wrote {config.export_path} ({len(test_blocks)} held-out blocks)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
