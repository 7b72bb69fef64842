"""Bridge CLI: extract episodes from real frames, or serve the wire protocol."""

from __future__ import annotations

import argparse
import json
import sys

from .encoders import BridgeError
from .extract import BridgeConfig, extract_episode
from .server import BridgeHandler, serve


def cmd_extract(args) -> int:
    config = BridgeConfig.load(args.config) if args.config else BridgeConfig()
    summary = extract_episode(
        frames_dir=args.frames, detections_file=args.detections,
        poses_file=args.poses, depth_dir=args.depth,
        sensor_file=args.sensor, out_dir=args.out, config=config,
        actions_file=args.actions)
    print(json.dumps(summary, sort_keys=True))
    return 0


def cmd_serve(args) -> int:
    config = BridgeConfig.load(args.config) if args.config else BridgeConfig()
    host, _, port = args.endpoint.rpartition(":")
    handler = BridgeHandler(args.frames, config, ctx_dim=args.ctx_dim)
    print(f"serving on {host or '127.0.0.1'}:{port}", file=sys.stderr)
    serve(handler, host or "127.0.0.1", int(port))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="egomem-bridge",
        description="Embedding extraction and live feature serving for "
                    "egomem episodes")
    sub = p.add_subparsers(dest="command", required=True)

    ep = sub.add_parser("extract", help="batch-extract an episode")
    ep.add_argument("--frames", required=True, help="directory of frame images")
    ep.add_argument("--detections", required=True, help="detections JSONL")
    ep.add_argument("--poses", required=True, help="poses JSONL")
    ep.add_argument("--depth", required=True, help="directory of depth .f32 blobs")
    ep.add_argument("--sensor", required=True,
                    help="sensor JSON: intrinsics, dims, up_axis")
    ep.add_argument("--out", required=True, help="episode output directory")
    ep.add_argument("--actions", default=None, help="action annotations JSONL")
    ep.add_argument("--config", default=None, help="bridge config JSON")
    ep.set_defaults(func=cmd_extract)

    sp = sub.add_parser("serve", help="answer wire-protocol requests")
    sp.add_argument("--frames", required=True, help="directory of frame images")
    sp.add_argument("--endpoint", default="127.0.0.1:7461")
    sp.add_argument("--ctx-dim", type=int, default=64)
    sp.add_argument("--config", default=None)
    sp.set_defaults(func=cmd_serve)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (BridgeError, FileNotFoundError, ValueError,
            json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
