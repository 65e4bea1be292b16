"""Bit-exact flow file codecs and deterministic visualizations.

Middlebury .flo: 4-byte float magic 202021.25, int32 width/height, then
row-major interleaved (u, v) float32, all little-endian; |value| > 1e9 marks
an invalid pixel (written as 1e10).

KITTI flow PNG: 16-bit 3-channel PNG with u = (ch1 - 2**15)/64,
v = (ch2 - 2**15)/64, ch3 in {0, 1} validity. The PNG container is encoded
and decoded here directly (deflate, filter 0 on encode, all standard filters
on decode) so the byte layout is fully pinned.
"""

from __future__ import annotations

import math
import struct
import zlib

import numpy as np

from .errors import FormatError, InvalidArgumentError, RangeError
from .estimation import FlowField
from .images import ImagePlane
from .metrics import PolarHistogram

__all__ = [
    "FLO_MAGIC",
    "FLO_SENTINEL",
    "decode_flo",
    "encode_flo",
    "decode_kitti_png",
    "encode_kitti_png",
    "flow_to_color",
    "render_polar_svg",
]

FLO_MAGIC = 202021.25
FLO_SENTINEL = 1e9  # |value| above this marks an invalid pixel
_FLO_FILL = 1e10

_PNG_SIG = b"\x89PNG\r\n\x1a\n"


# ---------------------------------------------------------------------------
# Middlebury .flo


def encode_flo(flow: FlowField) -> bytes:
    """Serialize a flow field; invalid pixels are written as the sentinel."""
    h, w = flow.height, flow.width
    body = np.empty((h, w, 2), dtype=np.float32)
    body[:, :, 0] = flow.u
    body[:, :, 1] = flow.v
    body[~flow.valid] = _FLO_FILL
    if not np.all(np.isfinite(body)):
        raise InvalidArgumentError("flow must be finite to encode")
    header = struct.pack("<fii", FLO_MAGIC, w, h)
    return header + body.astype("<f4").tobytes()


def decode_flo(data: bytes) -> FlowField:
    """Parse .flo bytes; sentinel pixels map to valid=False."""
    if len(data) < 12:
        raise FormatError(f"truncated header: {len(data)} bytes, need 12")
    magic, w, h = struct.unpack("<fii", data[:12])
    if magic != FLO_MAGIC:
        raise FormatError(f"bad magic: observed bytes {data[:4]!r}")
    if w <= 0 or h <= 0:
        raise FormatError(f"invalid dimensions {w}x{h}")
    expected = 12 + 8 * w * h
    if len(data) != expected:
        raise FormatError(f"body length mismatch: expected {expected} bytes, got {len(data)}")
    body = np.frombuffer(data[12:], dtype="<f4").reshape(h, w, 2).astype(np.float64)
    u, v = body[:, :, 0], body[:, :, 1]
    valid = (np.abs(u) <= FLO_SENTINEL) & (np.abs(v) <= FLO_SENTINEL) & np.isfinite(u) & np.isfinite(v)
    u = np.where(valid, u, 0.0)
    v = np.where(valid, v, 0.0)
    return FlowField(u, v, valid)


# ---------------------------------------------------------------------------
# Minimal 16-bit RGB PNG container


def _png_chunk(tag: bytes, payload: bytes) -> bytes:
    return (
        struct.pack(">I", len(payload))
        + tag
        + payload
        + struct.pack(">I", zlib.crc32(tag + payload) & 0xFFFFFFFF)
    )


def _encode_png16_rgb(arr: np.ndarray) -> bytes:
    """uint16 HxWx3 array to PNG bytes (bit depth 16, color type 2, filter 0)."""
    h, w, _ = arr.shape
    raw = arr.astype(">u2").tobytes()
    stride = w * 6
    scanlines = b"".join(
        b"\x00" + raw[y * stride : (y + 1) * stride] for y in range(h)
    )
    ihdr = struct.pack(">IIBBBBB", w, h, 16, 2, 0, 0, 0)
    return (
        _PNG_SIG
        + _png_chunk(b"IHDR", ihdr)
        + _png_chunk(b"IDAT", zlib.compress(scanlines, 9))
        + _png_chunk(b"IEND", b"")
    )


def _paeth(a: int, b: int, c: int) -> int:
    p = a + b - c
    pa, pb, pc = abs(p - a), abs(p - b), abs(p - c)
    if pa <= pb and pa <= pc:
        return a
    return b if pb <= pc else c


def _decode_png16_rgb(data: bytes) -> np.ndarray:
    """PNG bytes to a uint16 HxWx3 array; rejects anything but 16-bit RGB."""
    if len(data) < 8 or data[:8] != _PNG_SIG:
        raise FormatError("not a PNG: bad signature")
    pos = 8
    width = height = None
    idat = b""
    seen_iend = False
    while pos < len(data):
        if pos + 8 > len(data):
            raise FormatError("truncated chunk header")
        (length,) = struct.unpack(">I", data[pos : pos + 4])
        tag = data[pos + 4 : pos + 8]
        end = pos + 8 + length + 4
        if end > len(data):
            raise FormatError(f"truncated chunk {tag!r}")
        payload = data[pos + 8 : pos + 8 + length]
        crc = struct.unpack(">I", data[pos + 8 + length : end])[0]
        if crc != (zlib.crc32(tag + payload) & 0xFFFFFFFF):
            raise FormatError(f"CRC mismatch in chunk {tag!r}")
        if tag == b"IHDR":
            width, height, depth, ctype, comp, filt, ilace = struct.unpack(
                ">IIBBBBB", payload
            )
            if depth != 16:
                raise FormatError(f"need 16-bit channel depth, got {depth}")
            if ctype != 2:
                raise FormatError(f"need RGB color type 2, got {ctype}")
            if ilace != 0:
                raise FormatError("interlaced PNG not supported")
        elif tag == b"IDAT":
            idat += payload
        elif tag == b"IEND":
            seen_iend = True
            break
        pos = end
    if width is None:
        raise FormatError("missing IHDR")
    if not seen_iend:
        raise FormatError("missing IEND")
    try:
        raw = zlib.decompress(idat)
    except zlib.error as exc:
        raise FormatError(f"corrupt IDAT stream: {exc}") from exc
    stride = width * 6
    if len(raw) != height * (stride + 1):
        raise FormatError(
            f"decompressed size mismatch: expected {height * (stride + 1)}, got {len(raw)}"
        )
    out = np.zeros((height, stride), dtype=np.uint8)
    prev = np.zeros(stride, dtype=np.uint8)
    bpp = 6
    for y in range(height):
        line = raw[y * (stride + 1) : (y + 1) * (stride + 1)]
        ftype = line[0]
        cur = np.frombuffer(line[1:], dtype=np.uint8).copy()
        if ftype == 0:
            pass
        elif ftype == 1:
            for x in range(bpp, stride):
                cur[x] = (cur[x] + cur[x - bpp]) & 0xFF
        elif ftype == 2:
            cur = (cur.astype(np.int32) + prev).astype(np.uint8)
        elif ftype == 3:
            for x in range(stride):
                left = cur[x - bpp] if x >= bpp else 0
                cur[x] = (cur[x] + ((int(left) + int(prev[x])) >> 1)) & 0xFF
        elif ftype == 4:
            for x in range(stride):
                left = int(cur[x - bpp]) if x >= bpp else 0
                ul = int(prev[x - bpp]) if x >= bpp else 0
                cur[x] = (cur[x] + _paeth(left, int(prev[x]), ul)) & 0xFF
        else:
            raise FormatError(f"unknown scanline filter {ftype}")
        out[y] = cur
        prev = cur
    samples = out.reshape(height, width, 3, 2).astype(np.uint16)
    return (samples[:, :, :, 0] << 8) | samples[:, :, :, 1]


# ---------------------------------------------------------------------------
# KITTI flow PNG

_KITTI_LIMIT = (2**15 - 1) / 64.0


def encode_kitti_png(flow: FlowField) -> bytes:
    """Quantized 16-bit PNG encoding; out-of-range components are an error."""
    u = np.asarray(flow.u)
    v = np.asarray(flow.v)
    over = flow.valid & ((np.abs(u) > _KITTI_LIMIT) | (np.abs(v) > _KITTI_LIMIT))
    if over.any():
        y, x = np.argwhere(over)[0]
        raise RangeError(
            f"flow component out of KITTI range at pixel (y={y}, x={x}): "
            f"({u[y, x]}, {v[y, x]})"
        )
    arr = np.zeros((flow.height, flow.width, 3), dtype=np.uint16)
    qu = np.round(u * 64.0 + 2**15)
    qv = np.round(v * 64.0 + 2**15)
    arr[:, :, 0] = np.where(flow.valid, qu, 0).astype(np.uint16)
    arr[:, :, 1] = np.where(flow.valid, qv, 0).astype(np.uint16)
    arr[:, :, 2] = flow.valid.astype(np.uint16)
    return _encode_png16_rgb(arr)


def decode_kitti_png(data: bytes) -> FlowField:
    arr = _decode_png16_rgb(data)
    valid = arr[:, :, 2] != 0
    u = np.where(valid, (arr[:, :, 0].astype(np.float64) - 2**15) / 64.0, 0.0)
    v = np.where(valid, (arr[:, :, 1].astype(np.float64) - 2**15) / 64.0, 0.0)
    return FlowField(u, v, valid)


# ---------------------------------------------------------------------------
# Baker color wheel

_RY, _YG, _GC, _CB, _BM, _MR = 15, 6, 4, 11, 13, 6
_NCOLS = _RY + _YG + _GC + _CB + _BM + _MR  # 55


def _color_wheel() -> np.ndarray:
    wheel = np.zeros((_NCOLS, 3))
    col = 0
    wheel[col : col + _RY, 0] = 1.0
    wheel[col : col + _RY, 1] = np.arange(_RY) / _RY
    col += _RY
    wheel[col : col + _YG, 0] = 1.0 - np.arange(_YG) / _YG
    wheel[col : col + _YG, 1] = 1.0
    col += _YG
    wheel[col : col + _GC, 1] = 1.0
    wheel[col : col + _GC, 2] = np.arange(_GC) / _GC
    col += _GC
    wheel[col : col + _CB, 1] = 1.0 - np.arange(_CB) / _CB
    wheel[col : col + _CB, 2] = 1.0
    col += _CB
    wheel[col : col + _BM, 2] = 1.0
    wheel[col : col + _BM, 0] = np.arange(_BM) / _BM
    col += _BM
    wheel[col : col + _MR, 2] = 1.0 - np.arange(_MR) / _MR
    wheel[col : col + _MR, 0] = 1.0
    return wheel


_WHEEL = _color_wheel()


def flow_to_color(flow: FlowField, max_mag: float | None = None) -> ImagePlane:
    """Color-wheel rendering: hue from direction, saturation from magnitude.

    Zero flow renders white, invalid pixels black. max_mag defaults to the
    99th-percentile magnitude of valid pixels.
    """
    mag = np.hypot(flow.u, flow.v)
    if max_mag is None:
        vals = mag[flow.valid]
        max_mag = float(np.percentile(vals, 99)) if vals.size else 1.0
        if max_mag <= 0:
            max_mag = 1.0
    elif max_mag <= 0:
        raise InvalidArgumentError("max_mag must be positive")
    sat = np.clip(mag / max_mag, 0.0, 1.0)
    ang = np.arctan2(-flow.v, -flow.u) / np.pi  # in [-1, 1]
    fk = (ang + 1.0) / 2.0 * (_NCOLS - 1)
    k0 = np.floor(fk).astype(int) % _NCOLS
    k1 = (k0 + 1) % _NCOLS
    f = (fk - np.floor(fk))[:, :, None]
    col = _WHEEL[k0] * (1 - f) + _WHEEL[k1] * f
    out = 1.0 - sat[:, :, None] * (1.0 - col)
    out = np.where(flow.valid[:, :, None], out, 0.0)
    return ImagePlane(np.clip(out, 0.0, 1.0))


# ---------------------------------------------------------------------------
# Polar histogram SVG

_SVG_SIZE = 420
_SVG_MAX_R = 160

# Magnitude colormap stops, dark blue -> yellow (documented in README).
_MAG_STOPS = np.array(
    [
        [0.267, 0.005, 0.329],
        [0.229, 0.322, 0.546],
        [0.127, 0.566, 0.550],
        [0.369, 0.788, 0.383],
        [0.993, 0.906, 0.144],
    ]
)


def _magnitude_color(frac: float) -> str:
    x = min(max(frac, 0.0), 1.0) * (len(_MAG_STOPS) - 1)
    i = min(int(math.floor(x)), len(_MAG_STOPS) - 2)
    f = x - i
    rgb = _MAG_STOPS[i] * (1 - f) + _MAG_STOPS[i + 1] * f
    return "#%02x%02x%02x" % tuple(int(round(255 * c)) for c in rgb)


def render_polar_svg(h: PolarHistogram, out_path=None) -> str:
    """SVG polar plot: wedge length ~ count, fill color ~ mean magnitude.

    Returns the SVG text; writes it to out_path when given. Each wedge carries
    its sector index and radius in data attributes for inspection.
    """
    S = h.sectors
    cx = cy = _SVG_SIZE / 2
    max_count = max(int(h.counts.max()), 1)
    max_mag = max(float(h.mean_magnitude.max()), 1e-12)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_SVG_SIZE}" '
        f'height="{_SVG_SIZE}" viewBox="0 0 {_SVG_SIZE} {_SVG_SIZE}">',
        f'<circle cx="{cx}" cy="{cy}" r="{_SVG_MAX_R}" fill="none" stroke="#ccc"/>',
    ]
    for k in range(S):
        r = _SVG_MAX_R * int(h.counts[k]) / max_count
        a0 = 2 * math.pi * k / S
        a1 = 2 * math.pi * (k + 1) / S
        # SVG y axis points down; flow +v is down too, so angles map directly.
        x0, y0 = cx + r * math.cos(a0), cy + r * math.sin(a0)
        x1, y1 = cx + r * math.cos(a1), cy + r * math.sin(a1)
        color = _magnitude_color(float(h.mean_magnitude[k]) / max_mag)
        large = 1 if (a1 - a0) > math.pi else 0
        path = (
            f"M {cx:.3f} {cy:.3f} L {x0:.3f} {y0:.3f} "
            f"A {r:.3f} {r:.3f} 0 {large} 1 {x1:.3f} {y1:.3f} Z"
        )
        parts.append(
            f'<path d="{path}" fill="{color}" stroke="#333" stroke-width="0.5" '
            f'data-sector="{k}" data-radius="{r:.3f}" data-count="{int(h.counts[k])}"/>'
        )
    for label, ang in (("0°", 0.0), ("90°", 0.5), ("180°", 1.0), ("270°", 1.5)):
        lx = cx + (_SVG_MAX_R + 18) * math.cos(ang * math.pi)
        ly = cy + (_SVG_MAX_R + 18) * math.sin(ang * math.pi)
        parts.append(
            f'<text x="{lx:.1f}" y="{ly:.1f}" font-size="12" '
            f'text-anchor="middle" dominant-baseline="middle">{label}</text>'
        )
    # Magnitude colorbar.
    bar_x, bar_y, bar_w, bar_h = _SVG_SIZE - 30, 40, 14, _SVG_SIZE - 80
    steps = 32
    for i in range(steps):
        frac = 1.0 - i / (steps - 1)
        y = bar_y + i * bar_h / steps
        parts.append(
            f'<rect x="{bar_x}" y="{y:.2f}" width="{bar_w}" '
            f'height="{bar_h / steps + 0.5:.2f}" fill="{_magnitude_color(frac)}"/>'
        )
    parts.append(
        f'<text x="{bar_x - 4}" y="{bar_y + 4}" font-size="10" '
        f'text-anchor="end">{max_mag:.2f} px</text>'
    )
    parts.append(
        f'<text x="{bar_x - 4}" y="{bar_y + bar_h}" font-size="10" '
        f'text-anchor="end">0 px</text>'
    )
    parts.append("</svg>")
    svg = "\n".join(parts)
    if out_path is not None:
        try:
            with open(out_path, "w", encoding="utf-8") as fh:
                fh.write(svg)
        except OSError as exc:
            raise OSError(f"failed writing SVG to {out_path}: {exc}") from exc
    return svg
