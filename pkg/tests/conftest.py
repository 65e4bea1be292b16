"""Shared fixtures for the test suite."""

import numpy as np
import pytest

from flowdist import FlowField, RngStream, synth_scene
from flowdist.flowio import encode_flo
from flowdist.images import write_png


@pytest.fixture
def scene32(tmp_path):
    """A 32x32 textured-blocks scene on disk plus a constant ground truth flow."""
    rng = RngStream(123, 0)
    img = synth_scene(
        {"kind": "textured-blocks", "height": 32, "width": 32, "count": 5, "size": 6},
        rng,
    )
    img_path = tmp_path / "scene.png"
    write_png(img, img_path)
    gt = FlowField.constant(32, 32, 2.0, 1.0)
    gt_path = tmp_path / "gt.flo"
    gt_path.write_bytes(encode_flo(gt))
    return {"image": img, "image_path": img_path, "gt": gt, "gt_path": gt_path}


def toy_config(scene, out_dir, **overrides):
    """Reference toy-backend pipeline config used across pipeline tests."""
    cfg = {
        "input_image": str(scene["image_path"]),
        "codec": {"kind": "identity"},
        "schedule": {"kind": "linear-beta", "T": 200},
        "t_inv": 40,
        "forward_mode": "ddim-invert",
        "delta": 30.0,
        "n_samples": 8,
        "conditioning": {"mode": "fixed", "vector": [0.0]},
        "predictor": {"kind": "gaussian-oracle", "mu": "input-latent", "sigma2": 0.25},
        "estimator": {"kind": "block-matching", "params": {"patch_radius": 3, "search_radius": 6}},
        "gt_flow": str(scene["gt_path"]),
        "seed": 0,
        "output_dir": str(out_dir),
    }
    cfg.update(overrides)
    return cfg


def random_flow(rng: np.random.Generator, h: int, w: int, scale: float = 10.0) -> FlowField:
    u = rng.uniform(-scale, scale, (h, w))
    v = rng.uniform(-scale, scale, (h, w))
    valid = rng.random((h, w)) > 0.1
    return FlowField(u, v, valid)
