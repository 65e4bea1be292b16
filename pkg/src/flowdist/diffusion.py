"""DDIM forward sampling, deterministic inversion, conditioned reverse chains,
denoising loss, and conditioning inversion against a pluggable noise predictor.

The deterministic update used throughout is

    z_{t-1} = sqrt(ab_{t-1}) * (z_t - sqrt(1-ab_t) * eps_hat) / sqrt(ab_t)
              + sqrt(1-ab_{t-1}) * eps_hat

with ab_t the cumulative signal-retention coefficient. ``ddim_invert`` runs
the exact inverse of this map (fixed-point solve on the predictor input), so
invert -> reverse roundtrips to machine precision for well-behaved predictors.

``GaussianOraclePredictor`` is the closed-form stand-in for a pretrained
denoiser: for data z0 ~ N(mu, sigma2*I) and z_t = sqrt(ab)*z0 + sqrt(1-ab)*eps,
the posterior mean of z0 given z_t is

    m_hat = (sigma2*sqrt(ab)*z_t + (1-ab)*mu) / (sigma2*ab + (1-ab))

and the optimal noise prediction is eps_hat = (z_t - sqrt(ab)*m_hat)/sqrt(1-ab)
= sqrt(1-ab)*(z_t - sqrt(ab)*mu)/(sigma2*ab + 1-ab). Both forms are exercised
by the Monte Carlo tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Protocol, Sequence

import numpy as np

from .core import ConditioningVector, LatentState, NoiseSchedule, RngStream
from .errors import InvalidArgumentError, NumericFailureError

__all__ = [
    "NoisePredictor",
    "GaussianOraclePredictor",
    "InversionConfig",
    "build_schedule",
    "strided_timesteps",
    "forward_sample",
    "ddim_invert",
    "ddim_reverse_chain",
    "dpm_loss",
    "invert_conditioning",
]


class NoisePredictor(Protocol):
    """Behavioral interface for the parameterized noise predictor."""

    def predict(self, z: np.ndarray, e: ConditioningVector, t: int) -> np.ndarray:
        """Predicted noise for latent data z at timestep t; same dimension as z."""
        ...


@dataclass(frozen=True)
class GaussianOraclePredictor:
    """Analytic posterior-mean noise predictor for isotropic Gaussian data.

    ``mu`` is the data-distribution mean (scalar broadcasts), ``sigma2`` the
    isotropic data variance. When ``bias_target`` is set, the additive bias
    (e - bias_target) is added to the prediction, which makes the excess
    denoising loss exactly quadratic in e.
    """

    mu: np.ndarray
    sigma2: float
    bias_target: Optional[ConditioningVector] = None
    schedule: NoiseSchedule = None  # required; keyword for dataclass ordering

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mu, dtype=np.float64)).ravel()
        object.__setattr__(self, "mu", mu)
        if self.sigma2 < 0:
            raise InvalidArgumentError("sigma2 must be nonnegative")
        if self.schedule is None:
            raise InvalidArgumentError("schedule is required")

    def posterior_mean(self, z: np.ndarray, t: int) -> np.ndarray:
        ab = self.schedule.alpha_bar[t]
        if t == 0:
            return z.copy()
        denom = self.sigma2 * ab + (1.0 - ab)
        return (self.sigma2 * math.sqrt(ab) * z + (1.0 - ab) * self.mu) / denom

    def predict(self, z: np.ndarray, e: ConditioningVector, t: int) -> np.ndarray:
        ab = self.schedule.alpha_bar[t]
        if t == 0:
            out = np.zeros_like(z)
        else:
            denom = self.sigma2 * ab + (1.0 - ab)
            out = math.sqrt(1.0 - ab) * (z - math.sqrt(ab) * self.mu) / denom
        if self.bias_target is not None:
            # Embed (e - e*) into latent space by zero-padding, so the excess
            # denoising loss is exactly ||e - e*||^2.
            diff = e.data - self.bias_target.data
            if diff.size > z.size:
                raise InvalidArgumentError("conditioning dim exceeds latent dim")
            bias = np.zeros_like(out)
            bias[: diff.size] = diff
            out = out + bias
        return out


@dataclass(frozen=True)
class InversionConfig:
    """Settings for conditioning inversion (gradient descent on the DPM loss)."""

    steps: int
    learning_rate: float
    loss_samples: int = 32

    def __post_init__(self):
        if self.steps < 0:
            raise InvalidArgumentError("steps must be >= 0")
        if self.learning_rate <= 0:
            raise InvalidArgumentError("learning_rate must be positive")
        if self.loss_samples < 1:
            raise InvalidArgumentError("loss_samples must be >= 1")


def build_schedule(kind: str, T: int) -> NoiseSchedule:
    """Cumulative schedule over T steps.

    linear-beta: per-step betas linearly spaced in [1e-4, 0.02],
    alpha_bar[t] = prod_{s<=t} (1 - beta_s). cosine: squared-cosine profile
    (offset s=0.008) with per-step betas clipped to keep alpha_bar in (0, 1].
    """
    if T < 1:
        raise InvalidArgumentError("T must be >= 1")
    if kind == "linear-beta":
        betas = np.linspace(1e-4, 0.02, T)
    elif kind == "cosine":
        s = 0.008
        ts = np.arange(T + 1, dtype=np.float64)
        f = np.cos((ts / T + s) / (1 + s) * (np.pi / 2)) ** 2
        ab = f / f[0]
        betas = 1.0 - ab[1:] / ab[:-1]
        betas = np.clip(betas, 1e-8, 0.999)
    else:
        raise InvalidArgumentError(f"unknown schedule kind {kind!r}")
    alpha_bar = np.concatenate([[1.0], np.cumprod(1.0 - betas)])
    return NoiseSchedule(alpha_bar, kind)


def strided_timesteps(T: int, n_active: int) -> np.ndarray:
    """n_active+1 strictly increasing timesteps from 0 to T, uniform stride."""
    if n_active < 1 or n_active > T:
        raise InvalidArgumentError("need 1 <= n_active <= T")
    taus = np.unique(np.round(np.linspace(0, T, n_active + 1)).astype(int))
    return taus


def forward_sample(z0: LatentState, t: int, s: NoiseSchedule, rng: RngStream) -> LatentState:
    """Stochastic forward diffusion to timestep t.

    Returns sqrt(ab_t)*z0 + sqrt(1-ab_t)*eps with eps fresh from rng; the
    marginal is N(sqrt(ab_t)*z0, (1-ab_t)*I).
    """
    if t < 0 or t > s.T:
        raise InvalidArgumentError(f"t={t} outside schedule range [0, {s.T}]")
    if z0.timestep_tag not in (None, 0):
        raise InvalidArgumentError("z0 must be a clean latent (timestep 0 or untagged)")
    eps = rng.normal(z0.dim)
    ab = s.alpha_bar[t]
    data = math.sqrt(ab) * z0.data + math.sqrt(1.0 - ab) * eps
    return z0.with_data(data, timestep_tag=t)


def _check_finite(vec: np.ndarray, t: int, what: str) -> None:
    if not np.all(np.isfinite(vec)):
        raise NumericFailureError(f"{what} produced non-finite values at timestep {t}")


def _reverse_step(
    z: np.ndarray,
    eps_hat: np.ndarray,
    ab_t: float,
    ab_prev: float,
) -> np.ndarray:
    x0_hat = (z - math.sqrt(1.0 - ab_t) * eps_hat) / math.sqrt(ab_t)
    return math.sqrt(ab_prev) * x0_hat + math.sqrt(1.0 - ab_prev) * eps_hat


def _active_steps(s: NoiseSchedule, timesteps: Optional[Sequence[int]]) -> np.ndarray:
    if timesteps is None:
        return np.arange(s.T + 1)
    taus = np.asarray(timesteps, dtype=int)
    if taus[0] != 0 or np.any(np.diff(taus) <= 0) or taus[-1] > s.T:
        raise InvalidArgumentError("timesteps must be strictly increasing, start at 0, end <= T")
    return taus


def ddim_invert(
    z0: LatentState,
    e: ConditioningVector,
    s: NoiseSchedule,
    p: NoisePredictor,
    t_target: int,
    timesteps: Optional[Sequence[int]] = None,
    max_iter: int = 100,
    tol: float = 1e-13,
) -> LatentState:
    """Deterministic inversion of the reverse update up to t_target.

    Each step solves the reverse update for its noisier preimage by fixed-point
    iteration on the predictor input, so applying ddim_reverse_chain with the
    same predictor recovers z0 to near machine precision. Consumes no RNG.
    """
    if t_target == 0:
        return z0.with_data(z0.data.copy(), timestep_tag=0)
    if t_target < 0 or t_target > s.T:
        raise InvalidArgumentError(f"t_target={t_target} outside [1, {s.T}]")
    taus = _active_steps(s, timesteps)
    if t_target not in taus:
        raise InvalidArgumentError(f"t_target={t_target} not in the active timestep set")
    z = z0.data.copy()
    idx = int(np.searchsorted(taus, t_target))
    for j in range(1, idx + 1):
        t_prev, t = int(taus[j - 1]), int(taus[j])
        ab_t = float(s.alpha_bar[t])
        ab_prev = float(s.alpha_bar[t_prev])
        scale = math.sqrt(ab_t / ab_prev)
        # C is the net coefficient on eps_hat in the reverse update.
        C = math.sqrt(1.0 - ab_prev) - math.sqrt(ab_prev * (1.0 - ab_t) / ab_t)
        z_next = scale * z  # initial guess with eps_hat = 0
        for _ in range(max_iter):
            eps_hat = np.asarray(p.predict(z_next, e, t), dtype=np.float64)
            _check_finite(eps_hat, t, "predictor")
            z_new = scale * (z - C * eps_hat)
            delta = float(np.max(np.abs(z_new - z_next)))
            z_next = z_new
            if delta <= tol * (1.0 + float(np.max(np.abs(z_next)))):
                break
        z = z_next
    return z0.with_data(z, timestep_tag=t_target)


def ddim_reverse_chain(
    z_t: LatentState,
    e: ConditioningVector,
    s: NoiseSchedule,
    p: NoisePredictor,
    timesteps: Optional[Sequence[int]] = None,
) -> LatentState:
    """Deterministic reverse chain from z_t down to timestep 0."""
    t_start = z_t.timestep_tag
    if t_start is None or t_start < 1:
        raise InvalidArgumentError("z_t must carry a timestep tag >= 1")
    taus = _active_steps(s, timesteps)
    if t_start not in taus:
        raise InvalidArgumentError(f"timestep {t_start} not in the active timestep set")
    z = z_t.data.copy()
    idx = int(np.searchsorted(taus, t_start))
    for j in range(idx, 0, -1):
        t, t_prev = int(taus[j]), int(taus[j - 1])
        eps_hat = np.asarray(p.predict(z, e, t), dtype=np.float64)
        _check_finite(eps_hat, t, "predictor")
        z = _reverse_step(z, eps_hat, float(s.alpha_bar[t]), float(s.alpha_bar[t_prev]))
    return z_t.with_data(z, timestep_tag=0)


def dpm_loss(
    z0: LatentState,
    e: ConditioningVector,
    s: NoiseSchedule,
    p: NoisePredictor,
    rng: RngStream,
    n: int,
    noise_observer: Optional[Callable[[int, np.ndarray], None]] = None,
) -> float:
    """Monte Carlo estimate of E_{t,eps} ||eps - eps_hat(z_t, e, t)||^2.

    t is uniform in [1, T]; z_t is formed by the closed-form forward marginal.
    ``noise_observer`` is a test hook receiving each (t, eps) draw before the
    predictor is queried.
    """
    if n < 1:
        raise InvalidArgumentError("n must be >= 1")
    total = 0.0
    for _ in range(n):
        t = rng.uniform_int(1, s.T)
        eps = rng.normal(z0.dim)
        if noise_observer is not None:
            noise_observer(t, eps)
        ab = s.alpha_bar[t]
        z_t = math.sqrt(ab) * z0.data + math.sqrt(1.0 - ab) * eps
        eps_hat = np.asarray(p.predict(z_t, e, t), dtype=np.float64)
        _check_finite(eps_hat, t, "predictor")
        total += float(np.sum((eps - eps_hat) ** 2))
    return total / n


def invert_conditioning(
    z0: LatentState,
    e_init: ConditioningVector,
    cfg: InversionConfig,
    s: NoiseSchedule,
    p: NoisePredictor,
    rng: RngStream,
    loss_trace: Optional[list] = None,
) -> ConditioningVector:
    """Gradient descent on e minimizing the DPM loss.

    Gradients use central finite differences with step h = 1e-4*(1+|e_k|) and
    common random numbers: both sides of each difference replay the same rng
    substream. When ``loss_trace`` is given, the loss evaluated on a fixed
    validation substream is appended once per iteration (plus the initial
    value), so the trace is comparable across iterations.
    """
    e = e_init.data.copy()
    val_stream = rng.substream(0xFFFF)

    def val_loss(e_vec: np.ndarray) -> float:
        return dpm_loss(z0, ConditioningVector(e_vec), s, p, val_stream.clone(), cfg.loss_samples)

    if loss_trace is not None:
        loss_trace.append(val_loss(e))
    for it in range(cfg.steps):
        iter_stream = rng.substream(it)
        grad = np.zeros_like(e)
        for k in range(e.size):
            h = 1e-4 * (1.0 + abs(e[k]))
            ep, em = e.copy(), e.copy()
            ep[k] += h
            em[k] -= h
            lp = dpm_loss(z0, ConditioningVector(ep), s, p, iter_stream.clone(), cfg.loss_samples)
            lm = dpm_loss(z0, ConditioningVector(em), s, p, iter_stream.clone(), cfg.loss_samples)
            if not (math.isfinite(lp) and math.isfinite(lm)):
                raise NumericFailureError(f"non-finite loss at iteration {it}, coordinate {k}")
            grad[k] = (lp - lm) / (2.0 * h)
        e = e - cfg.learning_rate * grad
        if loss_trace is not None:
            loss_trace.append(val_loss(e))
    return ConditioningVector(e)
