"""Operator CLI: simulate, validate, ingest, query, eval, snapshot.

Exit codes: 0 success, 1 input error, 2 internal invariant violation.
All reports are JSON with the full engine config embedded for provenance.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import __version__
from .config import EngineConfig
from .errors import EgomemError, EmptyMemory, InvalidSpec, MalformedPredicate
from .pipeline import (evaluate_locate, evaluate_orders, evaluate_states,
                       ingest_episode)
from .retrieval import (query_structured, retrieve_by_appearance,
                        retrieve_by_environment, spatial_loc, temporal_loc)
from .store import (b64_to_vec, canonical_snapshot_bytes, load_snapshot,
                    save_snapshot, validate_episode)
from .synthetic import AnswerKey, generate, load_world_spec

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_INTERNAL = 2


def _emit(doc, report_out=None):
    text = json.dumps(doc, sort_keys=True, indent=1, default=str)
    print(text)
    if report_out:
        with open(report_out, "w", encoding="utf-8") as f:
            f.write(text + "\n")


def _load_config(args) -> EngineConfig:
    config = EngineConfig.load(args.config) if getattr(args, "config", None) \
        else EngineConfig()
    if getattr(args, "provider", None):
        config.provider = args.provider
    if getattr(args, "endpoint", None):
        config.endpoint = args.endpoint
    return config.validate()


def _provider_for(config: EngineConfig):
    if config.provider == "endpoint":
        from .protocol import WireProvider
        host, _, port = config.endpoint.rpartition(":")
        return WireProvider(host or "127.0.0.1", int(port))
    return None  # ingest builds the builtin synthetic provider itself


def cmd_simulate(args) -> int:
    spec = load_world_spec(args.spec)
    if args.seed is not None:
        spec.seed = args.seed
    key = generate(spec, args.out)
    _emit({"episode": args.out, "frames": len(spec.trajectory),
           "bodies": len(spec.bodies), "events": len(spec.events),
           "locate_queries": len(key.locate_queries),
           "provenance": key.provenance}, args.report_out)
    return EXIT_OK


def cmd_validate(args) -> int:
    violations = validate_episode(args.episode)
    _emit({"episode": args.episode,
           "violations": [v.to_dict() for v in violations],
           "ok": not violations}, args.report_out)
    return EXIT_OK if not violations else EXIT_INPUT


def cmd_ingest(args) -> int:
    config = _load_config(args)
    provider = _provider_for(config)
    memory = ingest_episode(args.episode, config, provider=provider)
    if not memory.check_mirror_consistency():
        print("internal error: relation mirror consistency violated",
              file=sys.stderr)
        return EXIT_INTERNAL
    save_snapshot(memory, args.snapshot_out)
    _emit({"episode": args.episode, "snapshot": args.snapshot_out,
           "entries": len(memory.entries),
           "report": memory.report.to_dict(),
           "config": config.to_dict()}, args.report_out)
    return EXIT_OK


def cmd_eval(args) -> int:
    memory = load_snapshot(args.snapshot)
    key = AnswerKey.load(args.answer_key)
    if args.task == "locate":
        result = evaluate_locate(memory, key, radius=args.success_radius)
    elif args.task == "orders":
        result = evaluate_orders(memory, key)
    else:
        result = evaluate_states(memory, key, radius=args.success_radius)
    result["config"] = memory.config.to_dict()
    _emit(result, args.report_out)
    return EXIT_OK


def _query_vector(args) -> np.ndarray:
    if args.vec_b64:
        return b64_to_vec(args.vec_b64, "<f4")
    if args.vec_file:
        return np.fromfile(args.vec_file, dtype="<f4").astype(np.float64)
    raise MalformedPredicate("similarity queries need --vec-b64 or --vec-file")


def cmd_query(args) -> int:
    memory = load_snapshot(args.snapshot)
    if args.sql:
        for row in query_structured(memory, args.sql):
            print(json.dumps(list(row)))
        return EXIT_OK
    q = _query_vector(args)
    cfg = memory.config
    if args.mode == "appearance":
        k = args.k or cfg.k_appearance
        rows = retrieve_by_appearance(memory, q, k=k,
                                      channel=cfg.appearance_channel)
        for oid, score in rows:
            e = memory.entries[oid]
            print(json.dumps({"object_id": oid, "category": e.category,
                              "score": score}))
    elif args.mode == "environment":
        k = args.k or cfg.k_appearance
        for oid, score in retrieve_by_environment(memory, q, k=k):
            e = memory.entries[oid]
            print(json.dumps({"object_id": oid, "category": e.category,
                              "score": score}))
    elif args.mode == "temporal":
        k = args.k or cfg.k_temporal
        for fid, score in temporal_loc(memory, q, k=k):
            print(json.dumps({"frame_id": fid, "score": score}))
    elif args.mode == "spatial":
        k = args.k or cfg.k_spatial
        for center, score in spatial_loc(memory, q, k=k,
                                         cutoff=cfg.cluster_cutoff):
            print(json.dumps({"position": [float(v) for v in center],
                              "score": score}))
    else:
        raise MalformedPredicate("one of --sql or --mode is required")
    return EXIT_OK


def cmd_snapshot(args) -> int:
    memory = load_snapshot(args.snapshot)
    if args.out:
        save_snapshot(memory, args.out)
    _emit({"snapshot": args.snapshot,
           "entries": len(memory.entries),
           "frames": len(memory.frames),
           "actions": len(memory.action_buffer),
           "visible_records": len(memory.visible_buffer),
           "config_hash": memory.config.config_hash(),
           "bytes": len(canonical_snapshot_bytes(memory))}, args.report_out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="egomem",
        description="Persistent 3D object memory engine for egocentric "
                    "RGB-D episode streams")
    p.add_argument("--version", action="version", version=f"egomem {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("simulate", help="render a synthetic episode from a world spec")
    sp.add_argument("--spec", required=True, help="world spec JSON file")
    sp.add_argument("--out", required=True, help="episode output directory")
    sp.add_argument("--seed", type=int, default=None, help="override the world spec seed")
    sp.add_argument("--report-out", default=None)
    sp.set_defaults(func=cmd_simulate)

    vp = sub.add_parser("validate", help="check an episode against the format contract")
    vp.add_argument("--episode", required=True)
    vp.add_argument("--report-out", default=None)
    vp.set_defaults(func=cmd_validate)

    ip = sub.add_parser("ingest", help="replay an episode into a memory snapshot")
    ip.add_argument("--episode", required=True)
    ip.add_argument("--snapshot-out", required=True)
    ip.add_argument("--config", default=None, help="engine config JSON")
    ip.add_argument("--provider", choices=["builtin-synthetic", "endpoint"],
                    default=None)
    ip.add_argument("--endpoint", default=None, help="host:port for endpoint provider")
    ip.add_argument("--report-out", default=None)
    ip.set_defaults(func=cmd_ingest)

    ep = sub.add_parser("eval", help="score a snapshot against an answer key")
    ep.add_argument("--snapshot", required=True)
    ep.add_argument("--answer-key", required=True)
    ep.add_argument("--task", choices=["locate", "orders", "states"], required=True)
    ep.add_argument("--success-radius", type=float, default=None)
    ep.add_argument("--report-out", default=None)
    ep.set_defaults(func=cmd_eval)

    qp = sub.add_parser("query", help="query a snapshot")
    qp.add_argument("--snapshot", required=True)
    qp.add_argument("--sql", default=None,
                    help="structured query over Objects / Objects_Frames")
    qp.add_argument("--mode", choices=["appearance", "environment",
                                       "temporal", "spatial"], default=None)
    qp.add_argument("--vec-b64", default=None, help="query vector, base64 float32 LE")
    qp.add_argument("--vec-file", default=None, help="query vector, raw float32 LE file")
    qp.add_argument("--k", type=int, default=None)
    qp.set_defaults(func=cmd_query)

    np_ = sub.add_parser("snapshot", help="inspect or canonically rewrite a snapshot")
    np_.add_argument("--snapshot", required=True)
    np_.add_argument("--out", default=None)
    np_.add_argument("--report-out", default=None)
    np_.set_defaults(func=cmd_snapshot)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (EgomemError, InvalidSpec, EmptyMemory, ValueError,
            FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # invariant violation / bug
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
