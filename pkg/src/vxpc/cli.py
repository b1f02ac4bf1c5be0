"""Command-line front end: encode, decode, eval, synth.

Exit codes: 0 ok, 1 argument error, 2 I/O error, 3 format error.
``VXPC_SEED`` overrides the default RNG seed of ``synth``.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
import time

import numpy as np

from . import codec
from .errors import FormatError, GeometryError, PlyError, VxpcError
from .geometry import load_ply, save_ply, voxelize
from .neural import read_model
from .synth import SHAPES, synth_cloud

EXIT_OK, EXIT_ARGS, EXIT_IO, EXIT_FORMAT = 0, 1, 2, 3


class _ArgumentError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _ArgumentError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="vxpc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    enc = sub.add_parser("encode", help="compress a PLY point cloud")
    enc.add_argument("--input", required=True, help="input PLY file")
    enc.add_argument("--output", required=True, help="output container file")
    enc.add_argument("--depth", type=int, required=True, help="grid bit depth n (>= 6)")
    enc.add_argument("--max-level", type=int, default=4, choices=range(1, 6),
                     help="deepest partition level (1=block 64 only .. 5=down to 4)")
    enc.add_argument("--model", default="adaptive",
                     choices=sorted(codec.MODEL_NAMES.values()))
    enc.add_argument("--weights", help="VXDN weight file (required for voxeldnn)")
    enc.add_argument("--threads", type=int, default=1,
                     help="parallel workers across 64-blocks (default 1)")
    enc.add_argument("--csv", help="write the per-block report CSV here "
                                   "(default: <output>.report.csv)")

    dec = sub.add_parser("decode", help="decompress a container to PLY")
    dec.add_argument("--input", required=True, help="input container file")
    dec.add_argument("--output", required=True, help="output PLY file")
    dec.add_argument("--weights", help="VXDN weight file (required for voxeldnn)")

    ev = sub.add_parser("eval", help="sweep models and partition levels on one cloud")
    ev.add_argument("--input", required=True, help="input PLY file")
    ev.add_argument("--depth", type=int, required=True)
    ev.add_argument("--models", nargs="+", default=["uniform", "adaptive"],
                    choices=sorted(codec.MODEL_NAMES.values()))
    ev.add_argument("--max-levels", nargs="+", type=int, default=[1, 2, 3, 4])
    ev.add_argument("--weights", help="VXDN weight file (needed if voxeldnn listed)")
    ev.add_argument("--csv", help="write the sweep table here")

    sy = sub.add_parser("synth", help="generate a synthetic PLY cloud")
    sy.add_argument("--shape", required=True, choices=SHAPES)
    sy.add_argument("--depth", type=int, required=True)
    sy.add_argument("--points", type=int, required=True)
    sy.add_argument("--output", required=True)
    sy.add_argument("--seed", type=int, default=None,
                    help="RNG seed (default: $VXPC_SEED or 0)")
    return parser


def _load_model(name: str, weights_path: str | None):
    if name == "voxeldnn":
        if not weights_path:
            raise _ArgumentError("--weights is required with --model voxeldnn")
        return codec.make_model(name, read_model(weights_path))
    if weights_path and name != "voxeldnn":
        raise _ArgumentError(f"--weights is meaningless with --model {name}")
    return codec.make_model(name)


def _report_rows(report: codec.RunReport):
    rows = [
        {
            "scope": "block",
            "origin": "{}:{}:{}".format(*b.origin),
            "voxels": b.voxels,
            "flag_count": b.flag_count,
            "flag_bits": b.flag_bits,
            "payload_bits": b.payload_bits,
            "total_bits": b.flag_bits + 32 + b.payload_bits,
            "bpov": "",
        }
        for b in report.blocks
    ]
    rows.append(
        {
            "scope": "total",
            "origin": "",
            "voxels": report.voxels,
            "flag_count": sum(b.flag_count for b in report.blocks),
            "flag_bits": sum(b.flag_bits for b in report.blocks),
            "payload_bits": sum(b.payload_bits for b in report.blocks),
            "total_bits": report.total_bits,
            "bpov": f"{report.bpov:.6f}",
        }
    )
    return rows


def _write_csv(path: str, rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)


def _cmd_encode(args) -> int:
    model = _load_model(args.model, args.weights)
    if args.threads < 1:
        raise _ArgumentError("--threads must be >= 1")
    cloud = load_ply(args.input)
    data, report = codec.encode_point_cloud(
        cloud.points, args.depth, args.max_level, model, threads=args.threads
    )
    with open(args.output, "wb") as fh:
        fh.write(data)
    csv_path = args.csv or args.output + ".report.csv"
    _write_csv(csv_path, _report_rows(report))
    print(
        f"encoded {args.input}: depth={report.depth} maxLv={report.max_level} "
        f"model={report.model_name}"
    )
    print(
        f"  blocks={len(report.blocks)} voxels={report.voxels} "
        f"bytes={report.total_bits // 8} bpov={report.bpov:.4f} "
        f"time={report.wall_time:.2f}s"
    )
    print(f"  per-block report: {csv_path}")
    return EXIT_OK


def _cmd_decode(args) -> int:
    with open(args.input, "rb") as fh:
        data = fh.read()
    vox = codec.decode_point_cloud(data, weights=args.weights)
    save_ply(vox, args.output)
    print(f"decoded {args.input}: {len(vox)} voxels -> {args.output}")
    return EXIT_OK


def _cmd_eval(args) -> int:
    cloud = load_ply(args.input)
    vox = voxelize(cloud.points, args.depth)
    for lv in args.max_levels:
        if not 1 <= lv <= 5:
            raise _ArgumentError(f"max level {lv} outside [1, 5]")
    weights = read_model(args.weights) if args.weights else None
    if "voxeldnn" in args.models and weights is None:
        raise _ArgumentError("--weights is required when sweeping voxeldnn")
    rows = []
    header = f"{'model':10s} {'maxLv':>5s} {'bytes':>10s} {'bpov':>10s} {'time':>7s}"
    print(f"eval {args.input}: depth={args.depth} voxels={len(vox)}")
    print(header)
    for name in args.models:
        for lv in args.max_levels:
            model = codec.make_model(name, weights) if name == "voxeldnn" else codec.make_model(name)
            t0 = time.perf_counter()
            data, report = codec.encode_point_cloud(cloud.points, args.depth, lv, model)
            dt = time.perf_counter() - t0
            rows.append(
                {
                    "model": name,
                    "max_level": lv,
                    "voxels": report.voxels,
                    "total_bits": report.total_bits,
                    "bpov": f"{report.bpov:.6f}",
                    "seconds": f"{dt:.3f}",
                }
            )
            print(f"{name:10s} {lv:5d} {len(data):10d} {report.bpov:10.4f} {dt:7.2f}")
    if args.csv:
        _write_csv(args.csv, rows)
        print(f"wrote {args.csv}")
    return EXIT_OK


def _cmd_synth(args) -> int:
    seed = args.seed
    if seed is None:
        seed = int(os.environ.get("VXPC_SEED", "0"))
    if args.points < 1:
        raise _ArgumentError("--points must be >= 1")
    if args.depth < 6:
        raise _ArgumentError("--depth must be >= 6")
    pts = synth_cloud(args.shape, args.depth, args.points, seed)
    save_ply(pts, args.output)
    print(f"wrote {args.points} {args.shape} points (depth {args.depth}, seed {seed}) "
          f"to {args.output}")
    return EXIT_OK


_COMMANDS = {
    "encode": _cmd_encode,
    "decode": _cmd_decode,
    "eval": _cmd_eval,
    "synth": _cmd_synth,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except _ArgumentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ARGS
    except GeometryError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ARGS
    except (PlyError, FormatError) as exc:
        print(f"format error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except VxpcError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
