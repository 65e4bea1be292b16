"""Dense flow fields and the block-matching estimator standing in for a
learned two-frame model.

Block matching is integer-only and bit-deterministic: for every pixel it
scans the search window for the displacement minimizing the mean patch cost
(border patches cropped to the frame), breaking ties by smallest ||(u,v)||^2
and then by row-major scan order of the window.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

from .errors import FlowDistError, InvalidArgumentError
from .images import ImagePlane

__all__ = [
    "FlowField",
    "FlowEstimator",
    "BlockMatchParams",
    "BlockMatchingEstimator",
    "block_matching_flow",
    "estimate_distribution",
]


@dataclass(frozen=True)
class FlowField:
    """Per-pixel (u, v) displacement grids with a validity mask."""

    u: np.ndarray
    v: np.ndarray
    valid: np.ndarray = None

    def __post_init__(self):
        u = np.asarray(self.u, dtype=np.float64)
        v = np.asarray(self.v, dtype=np.float64)
        if u.ndim != 2 or u.shape != v.shape:
            raise InvalidArgumentError("u and v must be equal-shaped 2-D grids")
        if self.valid is None:
            valid = np.ones(u.shape, dtype=bool)
        else:
            valid = np.asarray(self.valid, dtype=bool)
            if valid.shape != u.shape:
                raise InvalidArgumentError("valid mask dims must match u/v")
        if not (np.all(np.isfinite(u[valid])) and np.all(np.isfinite(v[valid]))):
            raise InvalidArgumentError("u and v must be finite wherever valid")
        for a in (u, v, valid):
            a.setflags(write=False)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "valid", valid)

    @property
    def height(self) -> int:
        return self.u.shape[0]

    @property
    def width(self) -> int:
        return self.u.shape[1]

    @staticmethod
    def constant(h: int, w: int, u: float, v: float) -> "FlowField":
        return FlowField(np.full((h, w), float(u)), np.full((h, w), float(v)))


class FlowEstimator(Protocol):
    """Two-frame dense flow interface; output dims equal input dims."""

    def estimate(self, x0: ImagePlane, x1: ImagePlane) -> FlowField: ...


@dataclass(frozen=True)
class BlockMatchParams:
    patch_radius: int = 3
    search_radius: int = 8
    cost: str = "SSD"

    def __post_init__(self):
        if self.patch_radius < 1 or self.search_radius < 1:
            raise InvalidArgumentError("radii must be >= 1")
        if self.cost not in ("SAD", "SSD"):
            raise InvalidArgumentError("cost must be SAD or SSD")


def block_matching_flow(x0: ImagePlane, x1: ImagePlane, p: BlockMatchParams) -> FlowField:
    """Integer-displacement block matching between x0 and x1."""
    if (x0.height, x0.width, x0.channels) != (x1.height, x1.width, x1.channels):
        raise InvalidArgumentError("image dims must match")
    if min(x0.height, x0.width) < 2 * p.patch_radius + 1:
        raise InvalidArgumentError("image smaller than one patch")
    h, w = x0.height, x0.width
    pr, sr = p.patch_radius, p.search_radius
    a = x0.pixels
    b = x1.pixels

    best_cost = np.full((h, w), np.inf)
    best_mag = np.full((h, w), np.inf)
    best_u = np.zeros((h, w))
    best_v = np.zeros((h, w))

    win = 2 * pr + 1
    kernel_ones = np.ones((win, win))

    def box_sum(img2d: np.ndarray) -> np.ndarray:
        # Sum over the (cropped) patch window centered at each pixel.
        padded = np.zeros((h + 2 * pr + 1, w + 2 * pr + 1))
        padded[1 + pr : 1 + pr + h, 1 + pr : 1 + pr + w] = img2d
        ii = padded.cumsum(axis=0).cumsum(axis=1)
        y0 = np.arange(h)[:, None]
        x0i = np.arange(w)[None, :]
        y1 = y0 + win
        x1i = x0i + win
        return ii[y1, x1i] - ii[y0, x1i] - ii[y1, x0i] + ii[y0, x0i]

    count_all = box_sum(np.ones((h, w)))

    for dy in range(-sr, sr + 1):
        for dx in range(-sr, sr + 1):
            # Region where the matched center stays in frame.
            ys0, ys1 = max(0, -dy), min(h, h - dy)
            xs0, xs1 = max(0, -dx), min(w, w - dx)
            if ys0 >= ys1 or xs0 >= xs1:
                continue
            diff = np.zeros((h, w))
            mask = np.zeros((h, w))
            d = a[ys0:ys1, xs0:xs1] - b[ys0 + dy : ys1 + dy, xs0 + dx : xs1 + dx]
            if p.cost == "SSD":
                diff[ys0:ys1, xs0:xs1] = np.sum(d * d, axis=2)
            else:
                diff[ys0:ys1, xs0:xs1] = np.sum(np.abs(d), axis=2)
            mask[ys0:ys1, xs0:xs1] = 1.0
            num = box_sum(diff)
            cnt = box_sum(mask)
            with np.errstate(invalid="ignore", divide="ignore"):
                cost = np.where(cnt > 0, num / np.maximum(cnt, 1e-300), np.inf)
            # Matched center must be in frame.
            center_ok = np.zeros((h, w), dtype=bool)
            center_ok[ys0:ys1, xs0:xs1] = True
            cost = np.where(center_ok, cost, np.inf)
            mag = float(dx * dx + dy * dy)
            better = (cost < best_cost) | ((cost == best_cost) & (mag < best_mag))
            best_u = np.where(better, float(dx), best_u)
            best_v = np.where(better, float(dy), best_v)
            best_mag = np.where(better, mag, best_mag)
            best_cost = np.where(better, cost, best_cost)

    del count_all, kernel_ones
    return FlowField(best_u, best_v)


@dataclass(frozen=True)
class BlockMatchingEstimator:
    params: BlockMatchParams = BlockMatchParams()

    def estimate(self, x0: ImagePlane, x1: ImagePlane) -> FlowField:
        return block_matching_flow(x0, x1, self.params)


def estimate_distribution(
    x0: ImagePlane, xs: Sequence[ImagePlane], est: FlowEstimator
):
    """Pair-wise flow for every generated frame, preserving order."""
    from .metrics import FlowDistribution

    if len(xs) < 1:
        raise InvalidArgumentError("need at least one generated frame")
    members = []
    for i, xi in enumerate(xs):
        try:
            members.append(est.estimate(x0, xi))
        except Exception as exc:
            raise FlowDistError(f"flow estimation failed on pair {i}: {exc}") from exc
    return FlowDistribution(members)
