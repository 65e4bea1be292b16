"""End-to-end pipeline orchestration and the command-line interface."""

import json
import os
from pathlib import Path

import numpy as np
import pytest

from flowdist import FlowField, InvalidArgumentError, run_pipeline
from flowdist.cli import flow_main, pipeline_main, sample_main
from flowdist.flowio import encode_flo
from flowdist.pipeline import PipelineConfig, run_ablation_grid

from conftest import toy_config

INTERIOR_MARGIN = 9  # search_radius 6 + patch_radius 3


def make_config(scene, out_dir, **overrides) -> PipelineConfig:
    return PipelineConfig.from_dict(toy_config(scene, out_dir, **overrides))


class TestPipelineConfig:
    def test_n_samples_zero_rejected_before_any_work(self, scene32, tmp_path):
        with pytest.raises(InvalidArgumentError):
            make_config(scene32, tmp_path / "out", n_samples=0)

    def test_unknown_fields_rejected(self, scene32, tmp_path):
        cfg = toy_config(scene32, tmp_path / "out")
        cfg["typo_field"] = 1
        with pytest.raises(InvalidArgumentError):
            PipelineConfig.from_dict(cfg)

    def test_t_inv_beyond_T_rejected(self, scene32, tmp_path):
        with pytest.raises(InvalidArgumentError):
            make_config(scene32, tmp_path / "out", t_inv=500)

    def test_malformed_json_rejected(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text("{not json")
        with pytest.raises(InvalidArgumentError):
            PipelineConfig.from_json_file(path)


class TestRunPipeline:
    def test_smoke_contract(self, scene32, tmp_path):
        out = tmp_path / "out"
        cfg = make_config(scene32, out)
        report = run_pipeline(cfg)
        d = report.to_json_dict()
        assert d["metrics"]["n_members"] == 8
        assert set(d["metrics"]) == {
            "epe_mean",
            "ae_mean_deg",
            "f1_all_pct",
            "f1_bg_pct",
            "f1_fg_pct",
            "entropy",
            "n_members",
        }
        assert len(list((out / "flows").glob("*.flo"))) == 8
        assert len(list((out / "frames").glob("*.png"))) == 8
        assert (out / "polar.svg").exists()
        assert (out / "report.json").exists()
        for path in d["manifest"]["frames"] + d["manifest"]["flows"]:
            assert Path(path).exists()

    def test_byte_identical_reports_and_artifacts(self, scene32, tmp_path):
        a = make_config(scene32, tmp_path / "a")
        b = make_config(scene32, tmp_path / "b")
        run_pipeline(a)
        run_pipeline(b)

        def read_all(root):
            out = {}
            for p in sorted(Path(root).rglob("*")):
                if p.is_file() and p.name != "timings.json":
                    rel = p.relative_to(root)
                    data = p.read_bytes()
                    if p.name == "report.json":
                        # output_dir differs between the two runs by design
                        data = data.replace(str(root).encode(), b"ROOT")
                    out[rel] = data
            return out

        assert read_all(tmp_path / "a") == read_all(tmp_path / "b")

    def test_injected_warp_flows_give_exact_zero_epe(self, scene32, tmp_path):
        # Ground truth valid only on the interior the estimator can match.
        valid = np.zeros((32, 32), dtype=bool)
        m = INTERIOR_MARGIN
        valid[m:-m, m:-m] = True
        gt = FlowField(np.full((32, 32), 2.0), np.full((32, 32), 1.0), valid)
        gt_path = tmp_path / "gt_interior.flo"
        gt_path.write_bytes(encode_flo(gt))

        cfg = make_config(
            scene32, tmp_path / "out", gt_flow=str(gt_path), n_samples=3
        )
        injected = [FlowField.constant(32, 32, 2.0, 1.0) for _ in range(3)]
        report = run_pipeline(cfg, injected_flows=injected)
        assert report.metrics.epe_mean == 0.0

    def test_injected_flow_count_must_match(self, scene32, tmp_path):
        cfg = make_config(scene32, tmp_path / "out", n_samples=2)
        with pytest.raises(InvalidArgumentError):
            run_pipeline(cfg, injected_flows=[FlowField.constant(32, 32, 0, 0)])

    def test_worker_count_does_not_change_output(self, scene32, tmp_path, monkeypatch):
        monkeypatch.delenv("FLOWDIST_WORKERS", raising=False)
        serial = run_pipeline(make_config(scene32, tmp_path / "s"))
        monkeypatch.setenv("FLOWDIST_WORKERS", "4")
        parallel = run_pipeline(make_config(scene32, tmp_path / "p"))
        assert serial.metrics.to_json_dict() == parallel.metrics.to_json_dict()

    def test_phase_times_cover_total(self, scene32, tmp_path):
        out = tmp_path / "out"
        run_pipeline(make_config(scene32, out))
        times = json.loads((out / "timings.json").read_text())
        total = times.pop("total")
        assert all(v >= 0 for v in times.values())
        assert abs(sum(times.values()) - total) <= 0.1 * total

    def test_stochastic_forward_mode(self, scene32, tmp_path):
        cfg = make_config(scene32, tmp_path / "out", forward_mode="stochastic", n_samples=2)
        report = run_pipeline(cfg)
        assert report.metrics.n_members == 2


class TestAblationGrid:
    def test_single_cell_equals_run_pipeline(self, scene32, tmp_path):
        base = make_config(scene32, tmp_path / "grid", n_samples=4)
        table = run_ablation_grid(base, [30.0], [4])
        rows = table["rows"]
        assert len(rows) == 2  # inversion on and off
        solo = run_pipeline(make_config(scene32, tmp_path / "solo", n_samples=4))
        off_row = next(r for r in rows if not r["text_inversion"])
        assert off_row["epe_mean"] == solo.metrics.epe_mean
        assert off_row["entropy"] == solo.metrics.entropy

    def test_full_grid_has_eight_complete_rows(self, scene32, tmp_path):
        base = make_config(scene32, tmp_path / "grid")
        table = run_ablation_grid(base, [30.0, 50.0], [4, 8])
        rows = table["rows"]
        assert len(rows) == 8
        for row in rows:
            assert row["epe_mean"] is not None
            assert row["ae_mean_deg"] is not None
            assert row["entropy"] is not None
        assert (tmp_path / "grid" / "ablation.json").exists()

    def test_per_cell_failures_recorded(self, scene32, tmp_path):
        base = make_config(scene32, tmp_path / "grid", n_samples=2)
        table = run_ablation_grid(base, [30.0, -1.0], [2])
        ok = [r for r in table["rows"] if "error" in r]
        assert len(ok) == 2  # the delta=-1 cell fails under both inversion flags

    def test_empty_grid_rejected(self, scene32, tmp_path):
        base = make_config(scene32, tmp_path / "grid")
        with pytest.raises(InvalidArgumentError):
            run_ablation_grid(base, [], [8])


class TestCli:
    def _write_config(self, scene, tmp_path, **overrides):
        cfg = toy_config(scene, tmp_path / "out", n_samples=2, **overrides)
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(cfg))
        return path

    def test_pipeline_run_success(self, scene32, tmp_path, capsys):
        path = self._write_config(scene32, tmp_path)
        assert pipeline_main(["run", "--config", str(path)]) == 0
        out = json.loads(capsys.readouterr().out)
        assert "epe_mean" in out

    def test_pipeline_ablate_success(self, scene32, tmp_path, capsys):
        path = self._write_config(scene32, tmp_path)
        code = pipeline_main(
            ["ablate", "--config", str(path), "--deltas", "30", "--counts", "2"]
        )
        assert code == 0
        table = json.loads(capsys.readouterr().out)
        assert len(table["rows"]) == 2

    def test_config_error_exit_code(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{broken")
        assert pipeline_main(["run", "--config", str(bad)]) == 2

    def test_runtime_error_exit_code(self, scene32, tmp_path):
        path = self._write_config(scene32, tmp_path, input_image=str(tmp_path / "no.png"))
        assert pipeline_main(["run", "--config", str(path)]) == 3

    def test_flow_metrics(self, scene32, tmp_path, capsys):
        pred_dir = tmp_path / "pred"
        pred_dir.mkdir()
        (pred_dir / "a.flo").write_bytes(encode_flo(FlowField.constant(32, 32, 2.0, 1.0)))
        code = flow_main(
            ["metrics", "--pred", str(pred_dir), "--gt", str(scene32["gt_path"])]
        )
        assert code == 0
        rep = json.loads(capsys.readouterr().out)
        assert rep["epe_mean"] == 0.0
        assert rep["n_members"] == 1

    def test_flow_convert_roundtrip(self, scene32, tmp_path):
        flo_in = scene32["gt_path"]
        png = tmp_path / "gt.png"
        flo_out = tmp_path / "back.flo"
        assert flow_main(["convert", "--in", str(flo_in), "--out", str(png)]) == 0
        assert flow_main(["convert", "--in", str(png), "--out", str(flo_out)]) == 0
        from flowdist import decode_flo

        back = decode_flo(flo_out.read_bytes())
        np.testing.assert_allclose(back.u, 2.0, atol=1 / 128)
        np.testing.assert_allclose(back.v, 1.0, atol=1 / 128)

    def test_flow_viz_and_polar(self, scene32, tmp_path):
        color = tmp_path / "color.png"
        assert flow_main(["viz", "--in", str(scene32["gt_path"]), "--out", str(color)]) == 0
        assert color.exists()
        pred_dir = tmp_path / "pred"
        pred_dir.mkdir()
        (pred_dir / "a.flo").write_bytes(encode_flo(FlowField.constant(8, 8, 1.0, 0.0)))
        svg = tmp_path / "hist.svg"
        assert flow_main(["polar", "--in-dir", str(pred_dir), "--out", str(svg)]) == 0
        assert svg.read_text().startswith("<svg")

    def test_flow_runtime_error_exit_code(self, tmp_path):
        missing = tmp_path / "missing.flo"
        assert flow_main(["viz", "--in", str(missing), "--out", str(tmp_path / "x.png")]) == 3

    def test_sample_shell_diagnostics(self, capsys):
        code = sample_main(
            ["shell", "--dim", "64", "--delta", "5", "--count", "10", "--seed", "1"]
        )
        assert code == 0
        out = json.loads(capsys.readouterr().out)
        assert out["norm_max_rel_dev"] <= 1e-12
        assert out["chord_max_rel_dev"] <= 1e-9
