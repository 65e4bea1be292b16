"""Accuracy and diversity metrics over flow fields and flow distributions.

Endpoint error, angular error, the 3px-and-5% outlier rule, normalized flow
entropy, polar histograms, and per-pixel best-member selection. Natural
logarithms are used throughout; the entropy normalizer makes the base
irrelevant.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import EmptyDomainError, InvalidArgumentError
from .estimation import FlowField

__all__ = [
    "FlowDistribution",
    "MetricReport",
    "EntropyConfig",
    "PolarHistogram",
    "epe_map",
    "epe_avg",
    "angular_error",
    "f1_outliers",
    "flow_entropy",
    "polar_histogram",
    "best_per_pixel",
]

MAG_EPS = 1e-6  # px; below this a direction is undefined


@dataclass(frozen=True)
class FlowDistribution:
    """Ordered collection of N same-sized flow fields from one source image."""

    members: tuple

    def __post_init__(self):
        members = tuple(self.members)
        if len(members) < 1:
            raise InvalidArgumentError("distribution needs at least one member")
        dims = {(m.height, m.width) for m in members}
        if len(dims) != 1:
            raise InvalidArgumentError("all members must share the same dims")
        object.__setattr__(self, "members", members)

    @property
    def n(self) -> int:
        return len(self.members)

    @property
    def source_dims(self) -> tuple[int, int]:
        m = self.members[0]
        return (m.height, m.width)


@dataclass(frozen=True)
class MetricReport:
    """Aggregated accuracy/diversity numbers for one distribution."""

    epe_mean: Optional[float]
    ae_mean_deg: Optional[float]
    f1_all_pct: Optional[float]
    f1_bg_pct: Optional[float]
    f1_fg_pct: Optional[float]
    entropy: float
    n_members: int
    pixels_evaluated: int = 0
    pixels_skipped: int = 0

    def to_json_dict(self) -> dict:
        return {
            "epe_mean": self.epe_mean,
            "ae_mean_deg": self.ae_mean_deg,
            "f1_all_pct": self.f1_all_pct,
            "f1_bg_pct": self.f1_bg_pct,
            "f1_fg_pct": self.f1_fg_pct,
            "entropy": self.entropy,
            "n_members": self.n_members,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=True)


@dataclass(frozen=True)
class EntropyConfig:
    grid_h: int = 16
    grid_w: int = 16
    range: Optional[float] = None  # symmetric clip bound R; data-driven when None

    def __post_init__(self):
        if self.grid_h < 1 or self.grid_w < 1 or self.grid_h * self.grid_w < 2:
            raise InvalidArgumentError("entropy grid needs at least 2 cells")


@dataclass(frozen=True)
class PolarHistogram:
    """Direction-binned pixel counts with per-sector mean magnitude."""

    sectors: int
    counts: np.ndarray
    mean_magnitude: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        mags = np.asarray(self.mean_magnitude, dtype=np.float64)
        if counts.size != self.sectors or mags.size != self.sectors:
            raise InvalidArgumentError("counts/mean_magnitude must have one entry per sector")
        counts.setflags(write=False)
        mags.setflags(write=False)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "mean_magnitude", mags)

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def _joint_valid(pred: FlowField, gt: FlowField) -> np.ndarray:
    if (pred.height, pred.width) != (gt.height, gt.width):
        raise InvalidArgumentError("pred and gt dims must match")
    return pred.valid & gt.valid


def epe_map(pred: FlowField, gt: FlowField) -> tuple[np.ndarray, float]:
    """Per-pixel endpoint error grid and its mean over jointly valid pixels."""
    valid = _joint_valid(pred, gt)
    if not valid.any():
        raise EmptyDomainError("no jointly valid pixels")
    grid = np.hypot(gt.u - pred.u, gt.v - pred.v)
    return grid, float(grid[valid].mean())


def epe_avg(dist: FlowDistribution, gt: FlowField) -> float:
    """Mean of per-member EPE means over the distribution."""
    return float(np.mean([epe_map(m, gt)[1] for m in dist.members]))


def angular_error(pred: FlowField, gt: FlowField) -> float:
    """Mean angular difference in degrees over magnitude-gated pixels."""
    valid = _joint_valid(pred, gt)
    mp = np.hypot(pred.u, pred.v)
    mg = np.hypot(gt.u, gt.v)
    gate = valid & (mp > MAG_EPS) & (mg > MAG_EPS)
    if not gate.any():
        raise EmptyDomainError("no pixel passes the magnitude gate")
    dot = pred.u[gate] * gt.u[gate] + pred.v[gate] * gt.v[gate]
    cos = np.clip(dot / (mp[gate] * mg[gate]), -1.0, 1.0)
    return float(np.degrees(np.arccos(cos)).mean())


def f1_outliers(
    pred: FlowField, gt: FlowField, fg_mask: Optional[np.ndarray] = None
) -> tuple[float, Optional[float], Optional[float]]:
    """(f1_all, f1_bg, f1_fg) outlier percentages.

    A pixel is an outlier iff its EPE exceeds 3 px AND 5% of the ground-truth
    magnitude. fg/bg splits are computed only when fg_mask is given.
    """
    valid = _joint_valid(pred, gt)
    if not valid.any():
        raise EmptyDomainError("no jointly valid pixels")
    epe = np.hypot(gt.u - pred.u, gt.v - pred.v)
    mg = np.hypot(gt.u, gt.v)
    outlier = (epe > 3.0) & (epe > 0.05 * mg)

    def pct(sel: np.ndarray) -> float:
        return 100.0 * float(outlier[sel].sum()) / float(sel.sum())

    f1_all = pct(valid)
    if fg_mask is None:
        return f1_all, None, None
    fg_mask = np.asarray(fg_mask, dtype=bool)
    if fg_mask.shape != valid.shape:
        raise InvalidArgumentError("fg_mask dims must match")
    fg = valid & fg_mask
    bg = valid & ~fg_mask
    f1_fg = pct(fg) if fg.any() else None
    f1_bg = pct(bg) if bg.any() else None
    return f1_all, f1_bg, f1_fg


def flow_entropy(dist: FlowDistribution, cfg: EntropyConfig = EntropyConfig()) -> float:
    """Normalized per-pixel entropy of binned flow vectors, averaged over pixels.

    Each pixel's N (u, v) vectors are binned into a grid_h x grid_w grid over
    [-R, R]^2 (components clipped to the range). The per-pixel Shannon entropy
    is divided by log(grid cells) and averaged over pixels valid in every
    member.
    """
    gh, gw = cfg.grid_h, cfg.grid_w
    if gh * gw < 2:
        raise InvalidArgumentError("entropy normalizer is zero for a 1-cell grid")
    us = np.stack([m.u for m in dist.members])  # N x H x W
    vs = np.stack([m.v for m in dist.members])
    valid = np.logical_and.reduce([m.valid for m in dist.members])
    if not valid.any():
        raise EmptyDomainError("no pixel valid across all members")
    if cfg.range is not None:
        R = float(cfg.range)
    else:
        R = float(max(np.abs(us).max(), np.abs(vs).max()))
    if R <= 0:
        R = 1.0  # all vectors identical at the origin; entropy is 0 regardless
    n = dist.n
    iu = np.clip(((np.clip(us, -R, R) + R) / (2 * R) * gw).astype(int), 0, gw - 1)
    iv = np.clip(((np.clip(vs, -R, R) + R) / (2 * R) * gh).astype(int), 0, gh - 1)
    cell = iv * gw + iu  # N x H x W
    h, w = valid.shape
    flat = cell.reshape(n, h * w)
    # Per-pixel histogram over grid cells.
    counts = np.zeros((h * w, gh * gw), dtype=np.int64)
    cols = np.arange(h * w)
    for k in range(n):
        np.add.at(counts, (cols, flat[k]), 1)
    p = counts / n
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * np.log(p), 0.0)
    ent = -terms.sum(axis=1) / np.log(gh * gw)
    ent = ent.reshape(h, w)
    return float(ent[valid].mean())


def polar_histogram(flow: FlowField, sectors: int = 16) -> PolarHistogram:
    """Direction histogram; sector k covers [2*pi*k/S, 2*pi*(k+1)/S)."""
    if sectors < 2:
        raise InvalidArgumentError("sectors must be >= 2")
    mag = np.hypot(flow.u, flow.v)
    sel = flow.valid & (mag >= MAG_EPS)
    counts = np.zeros(sectors, dtype=np.int64)
    mean_mag = np.zeros(sectors, dtype=np.float64)
    if sel.any():
        ang = np.mod(np.arctan2(flow.v[sel], flow.u[sel]), 2 * np.pi)
        idx = np.minimum((ang / (2 * np.pi) * sectors).astype(int), sectors - 1)
        np.add.at(counts, idx, 1)
        sums = np.zeros(sectors)
        np.add.at(sums, idx, mag[sel])
        nonzero = counts > 0
        mean_mag[nonzero] = sums[nonzero] / counts[nonzero]
    return PolarHistogram(sectors, counts, mean_mag)


def best_per_pixel(dist: FlowDistribution, gt: FlowField) -> FlowField:
    """Per pixel, the member vector minimizing EPE against gt (ties: lowest index)."""
    if dist.source_dims != (gt.height, gt.width):
        raise InvalidArgumentError("distribution and gt dims must match")
    us = np.stack([m.u for m in dist.members])
    vs = np.stack([m.v for m in dist.members])
    epe = np.hypot(gt.u[None] - us, gt.v[None] - vs)
    best = epe.argmin(axis=0)  # argmin takes the first minimum: lowest index
    h, w = gt.u.shape
    yy, xx = np.mgrid[0:h, 0:w]
    valid = np.logical_and.reduce([m.valid for m in dist.members])
    return FlowField(us[best, yy, xx], vs[best, yy, xx], valid)
