"""Synthetic scenes, ground-truth warping, and the pluggable image<->latent codec.

Flow sign convention throughout: displacement in pixels from frame 1 to
frame 2, +u rightward, +v downward (Middlebury/KITTI convention). Warping is
backward with bilinear interpolation and border clamp, so (img, warp, flow)
forms a self-consistent oracle triple for the flow estimators.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

import numpy as np
from PIL import Image

from .core import LatentState, RngStream
from .errors import InvalidArgumentError

__all__ = [
    "ImagePlane",
    "LatentCodec",
    "IdentityCodec",
    "BlockAverageCodec",
    "synth_scene",
    "warp_image",
    "encode_latent",
    "decode_latent",
    "read_png",
    "write_png",
]


@dataclass(frozen=True)
class ImagePlane:
    """H x W x C pixel grid with values in [0, 1]; C is 1 or 3."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim == 2:
            px = px[:, :, None]
        if px.ndim != 3 or px.shape[2] not in (1, 3):
            raise InvalidArgumentError("pixels must be HxWxC with C in {1, 3}")
        if not np.all(np.isfinite(px)):
            raise InvalidArgumentError("pixels must be finite")
        if px.min() < 0.0 or px.max() > 1.0:
            raise InvalidArgumentError("pixels must lie in [0, 1]")
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]


class LatentCodec(Protocol):
    """Image <-> latent boundary (stands in for a VAE at desk scale)."""

    def encode(self, img: ImagePlane) -> LatentState: ...

    def decode(self, z: LatentState) -> ImagePlane: ...


class IdentityCodec:
    """Lossless flatten codec: decode(encode(x)) == x bit-exact."""

    def encode(self, img: ImagePlane) -> LatentState:
        px = img.pixels
        return LatentState(px.ravel(), px.shape, timestep_tag=0)

    def decode(self, z: LatentState) -> ImagePlane:
        if len(z.shape) != 3:
            raise InvalidArgumentError("identity codec expects an HxWxC latent shape")
        px = np.clip(z.data.reshape(z.shape), 0.0, 1.0)
        return ImagePlane(px)


class BlockAverageCodec:
    """Block-average downsampling encode with bilinear upsampling decode."""

    def __init__(self, k: int):
        if k < 1:
            raise InvalidArgumentError("downsampling factor k must be >= 1")
        self.k = k

    def encode(self, img: ImagePlane) -> LatentState:
        k = self.k
        if img.height % k or img.width % k:
            raise InvalidArgumentError(f"image dims must be multiples of k={k}")
        px = img.pixels
        h, w, c = px.shape
        small = px.reshape(h // k, k, w // k, k, c).mean(axis=(1, 3))
        return LatentState(small.ravel(), small.shape, timestep_tag=0)

    def decode(self, z: LatentState) -> ImagePlane:
        if len(z.shape) != 3:
            raise InvalidArgumentError("block-average codec expects an HxWxC latent shape")
        small = z.data.reshape(z.shape)
        h, w, c = small.shape
        k = self.k
        H, W = h * k, w * k
        # Bilinear sample of block centers.
        ys = (np.arange(H) + 0.5) / k - 0.5
        xs = (np.arange(W) + 0.5) / k - 0.5
        y0 = np.clip(np.floor(ys).astype(int), 0, h - 1)
        x0 = np.clip(np.floor(xs).astype(int), 0, w - 1)
        y1 = np.clip(y0 + 1, 0, h - 1)
        x1 = np.clip(x0 + 1, 0, w - 1)
        wy = np.clip(ys - y0, 0.0, 1.0)[:, None, None]
        wx = np.clip(xs - x0, 0.0, 1.0)[None, :, None]
        big = (
            small[np.ix_(y0, x0)] * (1 - wy) * (1 - wx)
            + small[np.ix_(y0, x1)] * (1 - wy) * wx
            + small[np.ix_(y1, x0)] * wy * (1 - wx)
            + small[np.ix_(y1, x1)] * wy * wx
        )
        return ImagePlane(np.clip(big, 0.0, 1.0))


def synth_scene(spec: dict | str, rng: RngStream) -> ImagePlane:
    """Deterministic synthetic test scene.

    spec is either a name or a dict with a "kind" key plus parameters:
      - {"kind": "gradient", "height": H, "width": W, "channels": C}
      - {"kind": "random-texture", ...}
      - {"kind": "textured-blocks", "count": n, "size": s, ...}
    """
    if isinstance(spec, str):
        spec = {"kind": spec}
    kind = spec.get("kind")
    h = int(spec.get("height", 32))
    w = int(spec.get("width", 32))
    c = int(spec.get("channels", 1))
    if h < 8 or w < 8:
        raise InvalidArgumentError("scene dims must be >= 8")
    if kind == "gradient":
        idx = np.arange(h * w, dtype=np.float64).reshape(h, w)
        px = (idx / (h * w - 1))[:, :, None] * np.ones((1, 1, c))
        return ImagePlane(px)
    if kind == "random-texture":
        px = rng.generator().random((h, w, c))
        return ImagePlane(px)
    if kind == "textured-blocks":
        count = int(spec.get("count", 3))
        size = int(spec.get("size", 4))
        if size < 1 or count < 1:
            raise InvalidArgumentError("count and size must be >= 1")
        gen = rng.generator()
        # Low-contrast textured background, high-contrast patches on top.
        px = 0.4 + 0.2 * gen.random((h, w, c))
        cells_y = h // size
        cells_x = w // size
        if count > cells_y * cells_x:
            raise InvalidArgumentError("too many blocks for the image size")
        cells = gen.choice(cells_y * cells_x, size=count, replace=False)
        for cell in cells:
            y = (int(cell) // cells_x) * size
            x = (int(cell) % cells_x) * size
            patch = gen.random((size, size, c))
            patch = np.where(patch > 0.5, 0.95 + 0.05 * patch, 0.05 * patch)
            px[y : y + size, x : x + size] = patch
        return ImagePlane(np.clip(px, 0.0, 1.0))
    raise InvalidArgumentError(f"unknown scene kind {kind!r}")


def _bilinear_sample(px: np.ndarray, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
    h, w, _ = px.shape
    ys = np.clip(ys, 0.0, h - 1.0)
    xs = np.clip(xs, 0.0, w - 1.0)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (ys - y0)[:, :, None]
    wx = (xs - x0)[:, :, None]
    return (
        px[y0, x0] * (1 - wy) * (1 - wx)
        + px[y0, x1] * (1 - wy) * wx
        + px[y1, x0] * wy * (1 - wx)
        + px[y1, x1] * wy * wx
    )


def warp_image(img: ImagePlane, flow) -> ImagePlane:
    """Backward warp: output(p) = bilinear sample of img at p - flow(p).

    With the frame1->frame2 flow convention, estimating flow between img and
    warp_image(img, V) recovers V. Out-of-bounds source coordinates clamp to
    the border; output is clipped to [0, 1].
    """
    if flow.u.shape != (img.height, img.width):
        raise InvalidArgumentError("flow dims must match image dims")
    yy, xx = np.mgrid[0 : img.height, 0 : img.width].astype(np.float64)
    out = _bilinear_sample(img.pixels, yy - flow.v, xx - flow.u)
    return ImagePlane(np.clip(out, 0.0, 1.0))


def encode_latent(img: ImagePlane, codec: LatentCodec) -> LatentState:
    return codec.encode(img)


def decode_latent(z: LatentState, codec: LatentCodec) -> ImagePlane:
    return codec.decode(z)


def read_png(path) -> ImagePlane:
    """8-bit PNG (grayscale or RGB) to an ImagePlane."""
    with Image.open(path) as im:
        if im.mode not in ("L", "RGB"):
            im = im.convert("RGB")
        arr = np.asarray(im, dtype=np.float64) / 255.0
    return ImagePlane(arr)


def write_png(img: ImagePlane, path) -> None:
    """ImagePlane to an 8-bit PNG (rounded, sRGB assumed)."""
    arr = np.round(img.pixels * 255.0).astype(np.uint8)
    if arr.shape[2] == 1:
        im = Image.fromarray(arr[:, :, 0], mode="L")
    else:
        im = Image.fromarray(arr, mode="RGB")
    im.save(path, format="PNG")
