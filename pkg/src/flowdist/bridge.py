"""Client for the external model bridge process.

The bridge is a subprocess speaking one JSON object per line over
stdin/stdout. Every message carries a protocol version field "v": 1; requests
carry an integer id echoed by the matching response. Images cross the
boundary as base64 PNG, flows as base64 .flo bytes. Requests are strictly
sequential: one in flight at a time.
"""

from __future__ import annotations

import base64
import io
import json
import subprocess
from typing import Optional, Sequence

import numpy as np
from PIL import Image

from .errors import FlowDistError, InvalidArgumentError
from .estimation import FlowField
from .flowio import decode_flo
from .images import ImagePlane

__all__ = ["BridgeClient", "BridgeError", "BridgeFlowEstimator"]

PROTOCOL_VERSION = 1


class BridgeError(FlowDistError):
    """The bridge process returned an error or violated the protocol."""


def _png_b64(img: ImagePlane) -> str:
    arr = np.round(img.pixels * 255.0).astype(np.uint8)
    if arr.shape[2] == 1:
        im = Image.fromarray(arr[:, :, 0], mode="L")
    else:
        im = Image.fromarray(arr, mode="RGB")
    buf = io.BytesIO()
    im.save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def _b64_png_image(s: str) -> ImagePlane:
    with Image.open(io.BytesIO(base64.b64decode(s))) as im:
        if im.mode not in ("L", "RGB"):
            im = im.convert("RGB")
        arr = np.asarray(im, dtype=np.float64) / 255.0
    return ImagePlane(arr)


class BridgeClient:
    """Owns one bridge subprocess and serializes requests to it."""

    def __init__(self, command: Sequence[str]):
        if not command:
            raise InvalidArgumentError("bridge command must be nonempty")
        self._proc = subprocess.Popen(
            list(command),
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
            bufsize=1,
        )
        self._next_id = 1

    def request(self, op: str, payload: Optional[dict] = None) -> dict:
        """Send one request and return the response payload; raises on ok=false."""
        req_id = self._next_id
        self._next_id += 1
        msg = {"v": PROTOCOL_VERSION, "id": req_id, "op": op, "payload": payload or {}}
        try:
            self._proc.stdin.write(json.dumps(msg) + "\n")
            self._proc.stdin.flush()
            line = self._proc.stdout.readline()
        except (BrokenPipeError, OSError) as exc:
            raise BridgeError(f"bridge process pipe failure: {exc}") from exc
        if not line:
            raise BridgeError("bridge process closed its output stream")
        try:
            resp = json.loads(line)
        except json.JSONDecodeError as exc:
            raise BridgeError(f"bridge sent malformed JSON: {line!r}") from exc
        if resp.get("v") != PROTOCOL_VERSION:
            raise BridgeError(f"bridge protocol version mismatch: {resp.get('v')!r}")
        if resp.get("id") != req_id:
            raise BridgeError(f"bridge response id {resp.get('id')!r} != request id {req_id}")
        if not resp.get("ok"):
            raise BridgeError(f"bridge error for op {op!r}: {resp.get('error')}")
        return resp.get("payload", {})

    def capabilities(self) -> dict:
        return self.request("capabilities")

    def flow(self, x0: ImagePlane, x1: ImagePlane) -> FlowField:
        payload = self.request("flow", {"image0": _png_b64(x0), "image1": _png_b64(x1)})
        return decode_flo(base64.b64decode(payload["flo"]))

    def generate(
        self,
        image: ImagePlane,
        count: int,
        delta: float,
        t_inv: int,
        prompt_token: str = "scene",
        seed: int = 0,
    ) -> list[ImagePlane]:
        payload = self.request(
            "generate",
            {
                "image": _png_b64(image),
                "count": count,
                "delta": delta,
                "t_inv": t_inv,
                "prompt_token": prompt_token,
                "seed": seed,
            },
        )
        return [_b64_png_image(s) for s in payload["images"]]

    def close(self) -> None:
        if self._proc.poll() is None:
            try:
                self._proc.stdin.close()
            except OSError:
                pass
            try:
                self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self._proc.kill()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class BridgeFlowEstimator:
    """FlowEstimator backed by a bridge process hosting a real flow model."""

    def __init__(self, client: BridgeClient):
        self.client = client

    @staticmethod
    def from_config(cfg: dict) -> "BridgeFlowEstimator":
        command = cfg.get("command")
        if not command:
            raise InvalidArgumentError("bridge estimator config requires a command")
        return BridgeFlowEstimator(BridgeClient(command))

    def estimate(self, x0: ImagePlane, x1: ImagePlane) -> FlowField:
        return self.client.flow(x0, x1)
