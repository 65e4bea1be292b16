"""Spherical nearby sampling of latent states.

A perturbation direction is drawn isotropically, projected onto the tangent
plane of the source latent, normalized, stepped by a fixed distance delta, and
the result is rescaled back onto the source latent's spherical shell. Because
the step is orthogonal to the radius, every sample for a fixed (||z0||, delta)
sits at the identical chord distance

    chord^2 = ||z0||^2 (r - 1)^2 + delta^2 r^2,   r = ||z0|| / sqrt(||z0||^2 + delta^2)

from the source.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .core import LatentState, RngStream, standard_normal_vector
from .errors import InvalidArgumentError, NumericFailureError

__all__ = [
    "NearbyConfig",
    "project_to_tangent",
    "perturb_on_shell",
    "sample_neighbors",
    "shell_chord",
]

_MAX_REDRAWS = 16


@dataclass(frozen=True)
class NearbyConfig:
    """Perturbation distance and sample count (paper defaults 30 and 500)."""

    delta: float = 30.0
    count: int = 500
    min_direction_norm: float = 1e-12

    def __post_init__(self):
        if self.delta < 0:
            raise InvalidArgumentError("delta must be >= 0")
        if self.count < 1:
            raise InvalidArgumentError("count must be >= 1")


def project_to_tangent(eta: np.ndarray, z0: LatentState) -> np.ndarray:
    """Remove the component of eta along z0: eta - z0 * <z0,eta>/||z0||^2."""
    nz2 = float(np.dot(z0.data, z0.data))
    if nz2 == 0.0:
        raise InvalidArgumentError("projection undefined for ||z0|| == 0")
    eta = np.asarray(eta, dtype=np.float64)
    return eta - z0.data * (float(np.dot(z0.data, eta)) / nz2)


def shell_chord(radius: float, delta: float) -> float:
    """Closed-form chord distance between z0 and its re-projected perturbation."""
    r = radius / math.sqrt(radius * radius + delta * delta)
    return math.sqrt(radius * radius * (r - 1.0) ** 2 + delta * delta * r * r)


def perturb_on_shell(
    z0: LatentState,
    delta: float,
    rng: RngStream,
    min_direction_norm: float = 1e-12,
    direction_hook: Optional[Callable[[], np.ndarray]] = None,
) -> LatentState:
    """One fixed-distance perturbation re-projected onto the shell of z0.

    ``direction_hook`` is a test hook supplying the unit tangent direction
    directly, bypassing the random draw.
    """
    if z0.dim < 2:
        raise InvalidArgumentError("tangent space is trivial for dim == 1")
    radius = z0.norm()
    if radius == 0.0:
        raise InvalidArgumentError("z0 must have nonzero norm")
    if delta < 0:
        raise InvalidArgumentError("delta must be >= 0")

    if direction_hook is not None:
        d = np.asarray(direction_hook(), dtype=np.float64)
    else:
        for attempt in range(_MAX_REDRAWS):
            eta = standard_normal_vector(rng, z0.dim)
            eta = project_to_tangent(eta, z0)
            n = float(np.linalg.norm(eta))
            if n >= min_direction_norm:
                d = eta / n
                break
        else:
            raise NumericFailureError(
                f"{_MAX_REDRAWS} consecutive degenerate direction draws"
            )

    stepped = z0.data + delta * d
    out = stepped * (radius / float(np.linalg.norm(stepped)))
    return z0.with_data(out, timestep_tag=z0.timestep_tag)


def sample_neighbors(z0: LatentState, cfg: NearbyConfig, rng_seed: int) -> list[LatentState]:
    """cfg.count independent shell perturbations; sample i uses stream_id=i."""
    out = []
    for i in range(cfg.count):
        rng = RngStream(rng_seed, stream_id=i)
        out.append(perturb_on_shell(z0, cfg.delta, rng, cfg.min_direction_norm))
    return out
