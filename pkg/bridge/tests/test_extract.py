"""Extraction tests: conformance against the engine's validator (invoked as
a subprocess -- the bridge only knows the external contract), determinism,
and error handling."""

import json
import os
import subprocess
import sys

import numpy as np
import pytest

from egomem_bridge.cli import main
from egomem_bridge.extract import BridgeConfig, extract_episode


def run_engine_validate(episode_dir):
    """The engine CLI is the authority on episode conformance."""
    proc = subprocess.run(
        [sys.executable, "-m", "egomem.cli", "validate",
         "--episode", episode_dir],
        capture_output=True, text=True)
    doc = json.loads(proc.stdout) if proc.stdout.strip() else {}
    return proc.returncode, doc


class TestExtract:
    def test_output_passes_engine_validation(self, fixture_inputs, tmp_path):
        out = str(tmp_path / "episode")
        summary = extract_episode(
            frames_dir=fixture_inputs["frames"],
            detections_file=fixture_inputs["detections"],
            poses_file=fixture_inputs["poses"],
            depth_dir=fixture_inputs["depth"],
            sensor_file=fixture_inputs["sensor"],
            out_dir=out)
        assert summary["frames"] == 5 and summary["detections"] == 10
        code, doc = run_engine_validate(out)
        assert code == 0, doc
        assert doc["violations"] == []

    def test_emitted_vectors_unit_norm(self, fixture_inputs, tmp_path):
        out = str(tmp_path / "episode")
        extract_episode(
            frames_dir=fixture_inputs["frames"],
            detections_file=fixture_inputs["detections"],
            poses_file=fixture_inputs["poses"],
            depth_dir=fixture_inputs["depth"],
            sensor_file=fixture_inputs["sensor"],
            out_dir=out)
        dims = json.load(open(os.path.join(out, "manifest.json")))["dims"]
        feats = np.fromfile(os.path.join(out, "features.bin"), dtype="<f4")
        with open(os.path.join(out, "frames.jsonl")) as f:
            for line in f:
                rec = json.loads(line)
                ctx = feats[rec["ctx_ref"]:rec["ctx_ref"] + dims["ctx"]]
                assert abs(np.linalg.norm(ctx) - 1.0) < 1e-4
                for d in rec["detections"]:
                    off = d["feat_ref"]
                    clip = feats[off:off + dims["clip"]]
                    dino = feats[off + dims["clip"]:
                                 off + dims["clip"] + dims["dino"]]
                    assert abs(np.linalg.norm(clip) - 1.0) < 1e-4
                    assert abs(np.linalg.norm(dino) - 1.0) < 1e-4

    def test_same_inputs_identical_blobs(self, fixture_inputs, tmp_path):
        outs = []
        for name in ("a", "b"):
            out = str(tmp_path / name)
            extract_episode(
                frames_dir=fixture_inputs["frames"],
                detections_file=fixture_inputs["detections"],
                poses_file=fixture_inputs["poses"],
                depth_dir=fixture_inputs["depth"],
                sensor_file=fixture_inputs["sensor"],
                out_dir=out)
            outs.append(out)
        for name in ("features.bin", "frames.jsonl", "manifest.json"):
            with open(os.path.join(outs[0], name), "rb") as fa, \
                 open(os.path.join(outs[1], name), "rb") as fb:
                assert fa.read() == fb.read(), name

    def test_cli_extract(self, fixture_inputs, tmp_path, capsys):
        out = str(tmp_path / "episode")
        code = main(["extract",
                     "--frames", fixture_inputs["frames"],
                     "--detections", fixture_inputs["detections"],
                     "--poses", fixture_inputs["poses"],
                     "--depth", fixture_inputs["depth"],
                     "--sensor", fixture_inputs["sensor"],
                     "--out", out])
        assert code == 0
        assert json.loads(capsys.readouterr().out)["frames"] == 5

    def test_model_load_failure_exits_nonzero(self, fixture_inputs, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"clip_model": "hf:no-such-model"}),
                       encoding="utf-8")
        code = main(["extract",
                     "--frames", fixture_inputs["frames"],
                     "--detections", fixture_inputs["detections"],
                     "--poses", fixture_inputs["poses"],
                     "--depth", fixture_inputs["depth"],
                     "--sensor", fixture_inputs["sensor"],
                     "--out", str(tmp_path / "episode"),
                     "--config", str(cfg)])
        assert code != 0

    def test_dim_mismatch_rejected(self, fixture_inputs, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"clip_model": "builtin:32"}),
                       encoding="utf-8")
        code = main(["extract",
                     "--frames", fixture_inputs["frames"],
                     "--detections", fixture_inputs["detections"],
                     "--poses", fixture_inputs["poses"],
                     "--depth", fixture_inputs["depth"],
                     "--sensor", fixture_inputs["sensor"],
                     "--out", str(tmp_path / "episode"),
                     "--config", str(cfg)])
        assert code != 0

    def test_ingestable_by_engine_via_endpoint_provider(self, fixture_inputs,
                                                        tmp_path):
        """Full round trip: bridge-extracted episode ingested by the engine,
        with the bridge also serving the probe over the wire."""
        import threading
        from egomem_bridge.server import BridgeHandler, serve
        out = str(tmp_path / "episode")
        extract_episode(
            frames_dir=fixture_inputs["frames"],
            detections_file=fixture_inputs["detections"],
            poses_file=fixture_inputs["poses"],
            depth_dir=fixture_inputs["depth"],
            sensor_file=fixture_inputs["sensor"],
            out_dir=out)
        handler = BridgeHandler(fixture_inputs["frames"], BridgeConfig(),
                                ctx_dim=32)
        ready = threading.Event()
        stop = threading.Event()
        thread = threading.Thread(
            target=serve, args=(handler, "127.0.0.1", 0, ready, stop),
            daemon=True)
        thread.start()
        assert ready.wait(timeout=5)
        port = ready.port
        snap = str(tmp_path / "snap.json")
        proc = subprocess.run(
            [sys.executable, "-m", "egomem.cli", "ingest",
             "--episode", out, "--snapshot-out", snap,
             "--provider", "endpoint", "--endpoint", f"127.0.0.1:{port}"],
            capture_output=True, text=True)
        stop.set()
        thread.join(timeout=5)
        assert proc.returncode == 0, proc.stderr
        assert os.path.exists(snap)
