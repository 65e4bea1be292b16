"""End-to-end orchestration: encode, condition, diffuse forward, sample the
shell, reverse-diffuse, decode, estimate pair flows, and aggregate metrics.

Configuration is a flat JSON document (see ``PipelineConfig.from_dict``). Runs
are deterministic for a fixed seed: the only randomness enters through
per-sample Philox streams, so adding samples never perturbs existing ones.
Timings are excluded from report.json (written to timings.json instead) so
repeated runs produce byte-identical reports.
"""

from __future__ import annotations

import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .core import ConditioningVector, LatentState, RngStream
from .diffusion import (
    GaussianOraclePredictor,
    InversionConfig,
    build_schedule,
    ddim_invert,
    ddim_reverse_chain,
    forward_sample,
    invert_conditioning,
    strided_timesteps,
)
from .errors import FlowDistError, InvalidArgumentError
from .estimation import (
    BlockMatchingEstimator,
    BlockMatchParams,
    FlowField,
    estimate_distribution,
)
from .flowio import decode_flo, decode_kitti_png, encode_flo, render_polar_svg
from .images import (
    BlockAverageCodec,
    IdentityCodec,
    ImagePlane,
    read_png,
    warp_image,
    write_png,
)
from .metrics import (
    EntropyConfig,
    FlowDistribution,
    MetricReport,
    PolarHistogram,
    angular_error,
    epe_avg,
    f1_outliers,
    flow_entropy,
    polar_histogram,
)
from .sampler import NearbyConfig, perturb_on_shell

__all__ = ["PipelineConfig", "PipelineReport", "run_pipeline", "run_ablation_grid"]

# Stream-id layout: sample i owns ids i*2**16 + phase; global phases use the
# reserved sample index 2**40.
_GLOBAL = 1 << 40
_PHASE_FORWARD = 1
_PHASE_CONDITIONING = 2
_PHASE_SAMPLING = 3


@dataclass(frozen=True)
class PipelineConfig:
    input_image: str
    codec: dict = field(default_factory=lambda: {"type": "identity"})
    schedule: dict = field(default_factory=lambda: {"kind": "linear-beta", "T": 1000})
    t_inv: int = 250
    forward_mode: str = "ddim-invert"
    delta: float = 30.0
    n_samples: int = 500
    conditioning: dict = field(default_factory=lambda: {"mode": "fixed", "vector": [0.0]})
    predictor: dict = field(
        default_factory=lambda: {"type": "gaussian-oracle", "mu": 0.0, "sigma2": 1.0}
    )
    estimator: dict = field(default_factory=lambda: {"type": "block-matching"})
    gt_flow: Optional[str] = None
    entropy: dict = field(default_factory=dict)
    seed: int = 0
    output_dir: str = "out"
    workers: Optional[int] = None

    def __post_init__(self):
        if self.n_samples < 1:
            raise InvalidArgumentError("n_samples must be >= 1")
        T = int(self.schedule.get("T", 1000))
        if self.t_inv < 1 or self.t_inv > T:
            raise InvalidArgumentError("need 1 <= t_inv <= T")
        if self.forward_mode not in ("ddim-invert", "stochastic"):
            raise InvalidArgumentError(f"unknown forward_mode {self.forward_mode!r}")
        if self.delta < 0:
            raise InvalidArgumentError("delta must be >= 0")

    @staticmethod
    def from_dict(d: dict) -> "PipelineConfig":
        known = {f for f in PipelineConfig.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise InvalidArgumentError(f"unknown config fields: {sorted(unknown)}")
        if "input_image" not in d:
            raise InvalidArgumentError("config requires input_image")
        return PipelineConfig(**d)

    @staticmethod
    def from_json_file(path) -> "PipelineConfig":
        with open(path, "r", encoding="utf-8") as fh:
            try:
                d = json.load(fh)
            except json.JSONDecodeError as exc:
                raise InvalidArgumentError(f"config is not valid JSON: {exc}") from exc
        return PipelineConfig.from_dict(d)

    def to_dict(self) -> dict:
        return {
            "input_image": self.input_image,
            "codec": self.codec,
            "schedule": self.schedule,
            "t_inv": self.t_inv,
            "forward_mode": self.forward_mode,
            "delta": self.delta,
            "n_samples": self.n_samples,
            "conditioning": self.conditioning,
            "predictor": self.predictor,
            "estimator": self.estimator,
            "gt_flow": self.gt_flow,
            "entropy": self.entropy,
            "seed": self.seed,
            "output_dir": self.output_dir,
            "workers": self.workers,
        }


@dataclass
class PipelineReport:
    metrics: MetricReport
    phase_times: dict
    manifest: dict
    config: dict
    seed: int

    def to_json_dict(self) -> dict:
        return {
            "metrics": self.metrics.to_json_dict(),
            "manifest": self.manifest,
            "config": self.config,
            "seed": self.seed,
        }


def _kind(cfg: dict, default: str) -> str:
    # Both "kind" and "type" are accepted as the discriminator key.
    return cfg.get("kind", cfg.get("type", default))


def _build_codec(cfg: dict):
    kind = _kind(cfg, "identity")
    if kind == "identity":
        return IdentityCodec()
    if kind == "block-average":
        return BlockAverageCodec(int(cfg.get("k", 2)))
    raise InvalidArgumentError(f"unknown codec type {kind!r}")


def _build_estimator(cfg: dict):
    kind = _kind(cfg, "block-matching")
    if kind == "block-matching":
        p = cfg.get("params", cfg)
        params = BlockMatchParams(
            patch_radius=int(p.get("patch_radius", 3)),
            search_radius=int(p.get("search_radius", 8)),
            cost=p.get("cost", "SSD"),
        )
        return BlockMatchingEstimator(params)
    if kind == "bridge":
        from .bridge import BridgeFlowEstimator

        return BridgeFlowEstimator.from_config(cfg)
    raise InvalidArgumentError(f"unknown estimator type {kind!r}")


def _build_predictor(cfg: dict, schedule, input_latent: LatentState):
    kind = _kind(cfg, "gaussian-oracle")
    if kind == "gaussian-oracle":
        mu = cfg.get("mu", 0.0)
        if mu == "input-latent":
            mu = input_latent.data
        return GaussianOraclePredictor(
            mu=np.asarray(mu, dtype=np.float64),
            sigma2=float(cfg.get("sigma2", 1.0)),
            schedule=schedule,
        )
    raise InvalidArgumentError(f"unknown predictor type {kind!r}")


def read_flow_file(path) -> FlowField:
    """Flow from .flo or KITTI 16-bit .png, by extension."""
    data = Path(path).read_bytes()
    if str(path).lower().endswith(".png"):
        return decode_kitti_png(data)
    return decode_flo(data)


def aggregate_polar(dist: FlowDistribution, sectors: int = 16) -> PolarHistogram:
    """Pool per-member polar histograms (counts summed, magnitudes count-weighted)."""
    counts = np.zeros(sectors, dtype=np.int64)
    sums = np.zeros(sectors)
    for m in dist.members:
        ph = polar_histogram(m, sectors)
        counts += ph.counts
        sums += ph.counts * ph.mean_magnitude
    mean_mag = np.where(counts > 0, sums / np.maximum(counts, 1), 0.0)
    return PolarHistogram(sectors, counts, mean_mag)


def _worker_count(cfg: PipelineConfig) -> int:
    env = os.environ.get("FLOWDIST_WORKERS")
    if env:
        return max(1, int(env))
    if cfg.workers:
        return max(1, int(cfg.workers))
    return 1


def run_pipeline(
    cfg: PipelineConfig,
    injected_flows: Optional[list[FlowField]] = None,
) -> PipelineReport:
    """Execute all phases and write artifacts under cfg.output_dir.

    ``injected_flows`` is a test hook: when given, the generative phases are
    bypassed and the second frames are produced by warping the input with the
    given fields, which validates the pair loop and aggregation wiring
    independently of the diffusion path.
    """
    times: dict[str, float] = {}
    t_wall = time.perf_counter()
    out_dir = Path(cfg.output_dir)
    (out_dir / "flows").mkdir(parents=True, exist_ok=True)
    (out_dir / "frames").mkdir(parents=True, exist_ok=True)

    def phase(name):
        return _PhaseTimer(name, times)

    # Phase 1: encode
    with phase("encode"):
        x0 = read_png(cfg.input_image)
        codec = _build_codec(cfg.codec)
        z0 = codec.encode(x0)
        schedule = build_schedule(
            cfg.schedule.get("kind", "linear-beta"), int(cfg.schedule.get("T", 1000))
        )
        predictor = _build_predictor(cfg.predictor, schedule, z0)
        taus = strided_timesteps(schedule.T, cfg.t_inv)
        t_top = int(taus[-1])

    # Phase 2: conditioning
    with phase("conditioning"):
        cond_cfg = cfg.conditioning
        mode = cond_cfg.get("mode", cond_cfg.get("kind", "fixed"))
        if mode == "fixed":
            e = ConditioningVector(np.asarray(cond_cfg.get("vector", [0.0]), dtype=np.float64))
        elif mode == "invert":
            e_init = ConditioningVector(
                np.asarray(cond_cfg.get("init", [0.0]), dtype=np.float64)
            )
            inv = InversionConfig(
                steps=int(cond_cfg.get("steps", 10)),
                learning_rate=float(cond_cfg.get("lr", 0.1)),
                loss_samples=int(cond_cfg.get("loss_samples", 8)),
            )
            rng = RngStream(cfg.seed, _GLOBAL + _PHASE_CONDITIONING)
            e = invert_conditioning(z0, e_init, inv, schedule, predictor, rng)
        else:
            raise InvalidArgumentError(f"unknown conditioning mode {mode!r}")

    if injected_flows is None:
        # Phase 3: forward
        with phase("forward"):
            if cfg.forward_mode == "ddim-invert":
                z_t = ddim_invert(z0, e, schedule, predictor, t_top, timesteps=taus)
            else:
                rng = RngStream(cfg.seed, _GLOBAL + _PHASE_FORWARD)
                z_t = forward_sample(z0, t_top, schedule, rng)

        # Phase 4: nearby sampling
        with phase("sampling"):
            nearby = NearbyConfig(delta=cfg.delta, count=cfg.n_samples)
            states = []
            for i in range(cfg.n_samples):
                rng_i = RngStream(cfg.seed, (i << 16) + _PHASE_SAMPLING)
                states.append(
                    perturb_on_shell(z_t, nearby.delta, rng_i, nearby.min_direction_norm)
                )

        # Phases 5+6: reverse chains and decode (parallel over samples)
        with phase("reverse-decode"):

            def reverse_one(args):
                i, z_i = args
                try:
                    z_out = ddim_reverse_chain(z_i, e, schedule, predictor, timesteps=taus)
                    return codec.decode(z_out)
                except Exception as exc:
                    raise FlowDistError(
                        f"phase reverse-decode failed on sample {i}: {exc}"
                    ) from exc

            nworkers = _worker_count(cfg)
            if nworkers > 1:
                with ThreadPoolExecutor(max_workers=nworkers) as pool:
                    frames = list(pool.map(reverse_one, enumerate(states)))
            else:
                frames = [reverse_one(a) for a in enumerate(states)]
    else:
        with phase("forward"):
            pass
        with phase("sampling"):
            pass
        with phase("reverse-decode"):
            if len(injected_flows) != cfg.n_samples:
                raise InvalidArgumentError("injected_flows must have n_samples entries")
            frames = [warp_image(x0, f) for f in injected_flows]

    # Phase 6b: write frames
    with phase("write-frames"):
        frame_paths = []
        for i, fr in enumerate(frames):
            p = out_dir / "frames" / f"frame_{i:04d}.png"
            write_png(fr, p)
            frame_paths.append(str(p))

    # Phase 6: flow estimation
    with phase("flow-estimation"):
        estimator = _build_estimator(cfg.estimator)
        dist = estimate_distribution(x0, frames, estimator)
        flow_paths = []
        for i, m in enumerate(dist.members):
            p = out_dir / "flows" / f"flow_{i:04d}.flo"
            p.write_bytes(encode_flo(m))
            flow_paths.append(str(p))

    # Phase 7: aggregation
    with phase("aggregation"):
        ent_cfg = EntropyConfig(
            grid_h=int(cfg.entropy.get("grid_h", 16)),
            grid_w=int(cfg.entropy.get("grid_w", 16)),
            range=cfg.entropy.get("range"),
        )
        entropy = flow_entropy(dist, ent_cfg)
        epe = ae = f1a = f1b = f1f = None
        if cfg.gt_flow is not None:
            gt = read_flow_file(cfg.gt_flow)
            epe = epe_avg(dist, gt)
            ae = _mean_or_none([_try_ae(m, gt) for m in dist.members])
            f1s = [f1_outliers(m, gt) for m in dist.members]
            f1a = float(np.mean([f[0] for f in f1s]))
        metrics = MetricReport(
            epe_mean=epe,
            ae_mean_deg=ae,
            f1_all_pct=f1a,
            f1_bg_pct=f1b,
            f1_fg_pct=f1f,
            entropy=entropy,
            n_members=dist.n,
        )
        polar = aggregate_polar(dist)
        polar_path = out_dir / "polar.svg"
        render_polar_svg(polar, polar_path)

    manifest = {
        "frames": frame_paths,
        "flows": flow_paths,
        "polar_svg": str(polar_path),
        "report": str(out_dir / "report.json"),
    }
    report = PipelineReport(
        metrics=metrics,
        phase_times=dict(times),
        manifest=manifest,
        config=cfg.to_dict(),
        seed=cfg.seed,
    )
    with open(out_dir / "report.json", "w", encoding="utf-8") as fh:
        json.dump(report.to_json_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    times["total"] = time.perf_counter() - t_wall
    with open(out_dir / "timings.json", "w", encoding="utf-8") as fh:
        json.dump(times, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return report


def _try_ae(member, gt) -> Optional[float]:
    from .errors import EmptyDomainError

    try:
        return angular_error(member, gt)
    except EmptyDomainError:
        return None


def _mean_or_none(vals) -> Optional[float]:
    vals = [v for v in vals if v is not None]
    return float(np.mean(vals)) if vals else None


class _PhaseTimer:
    def __init__(self, name, sink):
        self.name = name
        self.sink = sink

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        self.sink[self.name] = time.perf_counter() - self.t0
        return False


def run_ablation_grid(
    base: PipelineConfig,
    deltas: list[float],
    counts: list[int],
    seeds: Optional[list[int]] = None,
) -> dict:
    """One pipeline run per cell of delta x count x {inversion on, off}.

    Returns a JSON-ready table mirroring the ablation layout: per row the
    knob settings plus EPE mean, AE mean, and entropy. Per-cell failures are
    recorded in the row; remaining cells proceed.
    """
    if not deltas or not counts:
        raise InvalidArgumentError("deltas and counts must be nonempty")
    seeds = seeds if seeds is not None else [base.seed]
    rows = []
    for seed in seeds:
        for inversion_on in (True, False):
            for delta in deltas:
                for count in counts:
                    cell_dir = (
                        Path(base.output_dir)
                        / f"seed{seed}_inv{'on' if inversion_on else 'off'}"
                        f"_d{delta:g}_n{count}"
                    )
                    cond = dict(base.conditioning)
                    if inversion_on:
                        cond["mode"] = "invert"
                    else:
                        cond = {
                            "mode": "fixed",
                            "vector": cond.get("init", cond.get("vector", [0.0])),
                        }
                    row = {
                        "seed": int(seed),
                        "text_inversion": inversion_on,
                        "sample_distance": float(delta),
                        "sample_number": int(count),
                    }
                    try:
                        cfg = PipelineConfig(
                            **{
                                **base.to_dict(),
                                "delta": float(delta),
                                "n_samples": int(count),
                                "conditioning": cond,
                                "seed": int(seed),
                                "output_dir": str(cell_dir),
                            }
                        )
                        rep = run_pipeline(cfg)
                        row.update(
                            {
                                "epe_mean": rep.metrics.epe_mean,
                                "ae_mean_deg": rep.metrics.ae_mean_deg,
                                "entropy": rep.metrics.entropy,
                                "output_dir": str(cell_dir),
                            }
                        )
                    except Exception as exc:
                        row["error"] = str(exc)
                    rows.append(row)
    table = {"rows": rows}
    out = Path(base.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "ablation.json", "w", encoding="utf-8") as fh:
        json.dump(table, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return table
