#!/usr/bin/env python3
"""Flow file formats and visualization.

Writes a swirl flow to both supported on-disk formats, reads them back,
reports the codec error of each, and renders the color-coded flow image and
a polar histogram SVG.
"""

import argparse
from pathlib import Path

import numpy as np

from flowdist import (
    FlowField,
    decode_flo,
    decode_kitti_png,
    encode_flo,
    encode_kitti_png,
    flow_to_color,
    polar_histogram,
    render_polar_svg,
)
from flowdist.images import write_png


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="demo_out", help="output directory")
    args = parser.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    h = w = 64
    yy, xx = np.mgrid[0:h, 0:w]
    cx, cy = (w - 1) / 2, (h - 1) / 2
    flow = FlowField(-(yy - cy) * 0.1, (xx - cx) * 0.1)

    flo_bytes = encode_flo(flow)
    (out / "swirl.flo").write_bytes(flo_bytes)
    back = decode_flo(flo_bytes)
    print(f".flo      : {len(flo_bytes)} bytes, "
          f"max err {np.abs(back.u - flow.u).max():.2e} (float32 rounding)")

    png_bytes = encode_kitti_png(flow)
    (out / "swirl_kitti.png").write_bytes(png_bytes)
    back = decode_kitti_png(png_bytes)
    print(f"16-bit png: {len(png_bytes)} bytes, "
          f"max err {np.abs(back.u - flow.u).max():.2e} (1/128 px quantization)")

    write_png(flow_to_color(flow), out / "swirl_color.png")
    print(f"color viz : {out / 'swirl_color.png'}")

    svg = render_polar_svg(polar_histogram(flow, sectors=16))
    (out / "swirl_polar.svg").write_text(svg)
    print(f"polar svg : {out / 'swirl_polar.svg'}")


if __name__ == "__main__":
    main()
