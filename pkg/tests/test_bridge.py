"""Bridge client conformance against the stdio stub backend."""

import json
import shutil
import subprocess
from pathlib import Path

import numpy as np
import pytest

from flowdist import ImagePlane, RngStream, run_pipeline, synth_scene
from flowdist.bridge import BridgeClient, BridgeError, BridgeFlowEstimator
from flowdist.pipeline import PipelineConfig

from conftest import toy_config

BRIDGE_DIR = Path(__file__).resolve().parent.parent / "bridge"
SERVER_JS = BRIDGE_DIR / "dist" / "cli.js"

pytestmark = pytest.mark.skipif(
    shutil.which("node") is None or not SERVER_JS.exists(),
    reason="node or built bridge (bridge/dist/cli.js) not available",
)

STUB_CMD = ["node", str(SERVER_JS), "--backend", "stub"]


@pytest.fixture
def client():
    with BridgeClient(STUB_CMD) as c:
        yield c


def _image(seed=0, h=16, w=16):
    return synth_scene({"kind": "random-texture", "height": h, "width": w}, RngStream(seed, 0))


class TestStubConformance:
    def test_capabilities(self, client):
        caps = client.capabilities()
        assert caps == {"generate": True, "flow": True}

    def test_self_pair_flow_is_near_zero(self, client):
        img = _image()
        flow = client.flow(img, img)
        assert (flow.height, flow.width) == (16, 16)
        mean_mag = float(np.hypot(flow.u, flow.v).mean())
        assert mean_mag < 0.5

    def test_generate_echoes_count_frames(self, client):
        img = _image(1)
        frames = client.generate(img, count=3, delta=30.0, t_inv=250)
        assert len(frames) == 3
        for fr in frames:
            assert (fr.height, fr.width) == (16, 16)

    def test_unknown_op_raises(self, client):
        with pytest.raises(BridgeError, match="unsupported op"):
            client.request("train")

    def test_sequential_ids_over_many_requests(self, client):
        for _ in range(5):
            client.capabilities()  # raises on any id mismatch

    def test_malformed_line_yields_id_null_error(self):
        # Drive the raw protocol directly to check the id=null contract.
        proc = subprocess.Popen(
            STUB_CMD,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
        )
        try:
            proc.stdin.write("{broken\n")
            proc.stdin.flush()
            resp = json.loads(proc.stdout.readline())
            assert resp["ok"] is False
            assert resp["id"] is None
            assert resp["v"] == 1
        finally:
            proc.kill()
            proc.wait()

    def test_backend_error_propagates(self, client):
        a = _image(2, h=16, w=16)
        b = _image(3, h=8, w=8)
        with pytest.raises(BridgeError, match="dimensions differ"):
            client.flow(a, b)


class TestBridgeEstimator:
    def test_pipeline_with_bridge_estimator(self, scene32, tmp_path):
        cfg = PipelineConfig.from_dict(
            toy_config(
                scene32,
                tmp_path / "out",
                n_samples=2,
                estimator={"kind": "bridge", "command": STUB_CMD},
            )
        )
        report = run_pipeline(cfg)
        assert report.metrics.n_members == 2
        # The stub returns zero flow, so EPE equals the gt magnitude sqrt(5).
        assert report.metrics.epe_mean == pytest.approx(np.sqrt(5.0))

    def test_from_config_requires_command(self):
        with pytest.raises(Exception):
            BridgeFlowEstimator.from_config({"kind": "bridge"})


class TestClientRobustness:
    def test_empty_command_rejected(self):
        from flowdist.errors import InvalidArgumentError

        with pytest.raises(InvalidArgumentError):
            BridgeClient([])

    def test_server_exit_raises_bridge_error(self):
        client = BridgeClient(["node", "-e", "process.exit(0)"])
        with pytest.raises(BridgeError):
            client.capabilities()
        client.close()
