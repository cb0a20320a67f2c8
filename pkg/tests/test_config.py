"""Tests for pipeline configuration loading, validation and defaults."""

import json
from pathlib import Path

import pytest

from rlff import ConfigError, PipelineConfig

CALIBRATION = Path(__file__).parent / "data" / "calibration.json"


class TestDefaults:

    def test_default_values(self):
        cfg = PipelineConfig()
        assert cfg.min_views == 5
        assert cfg.ratio == 0.8
        assert cfg.abs_threshold is None
        assert cfg.r2_max == 0.65
        assert cfg.lambertian_eps == 0.05
        assert cfg.trim_worst == 0
        assert not cfg.symmetric_fit
        assert not cfg.root_descriptors

    def test_gates_track_calibrated_noise_floors(self):
        """Residual/asymmetry defaults are 3x the measured clean floors.

        tests/data/calibration.json is produced by
        scripts/calibrate_thresholds.py on the default synthetic camera at
        0.1 pixel observation noise; regenerate it if the camera or the
        estimator changes.
        """
        cal = json.loads(CALIBRATION.read_text())
        cfg = PipelineConfig()
        assert cfg.max_residual == pytest.approx(
            3.0 * cal["rms_floor_px"]["mean"], rel=0.02
        )
        assert cfg.max_asymmetry == pytest.approx(
            3.0 * cal["asymmetry_floor"]["mean"], rel=0.02
        )
        # classification margin: spurious depth gaps of clean spherical
        # features stay clearly below the Lambertian threshold
        assert cal["spurious_depth_gap"]["p99"] < cfg.lambertian_eps

    def test_calibration_confirms_noise_criteria(self):
        cal = json.loads(CALIBRATION.read_text())
        assert cal["depth_rel_error_median"] <= 0.05
        assert cal["hr_offset_win_rate"] >= 0.60


class TestValidation:

    def test_min_views_floor(self):
        with pytest.raises(ConfigError):
            PipelineConfig(min_views=3)

    def test_ratio_range(self):
        with pytest.raises(ConfigError):
            PipelineConfig(ratio=0.0)
        with pytest.raises(ConfigError):
            PipelineConfig(ratio=1.5)

    def test_r2_range(self):
        with pytest.raises(ConfigError):
            PipelineConfig(r2_max=0.0)

    def test_positive_gates(self):
        with pytest.raises(ConfigError):
            PipelineConfig(max_residual=0.0)
        with pytest.raises(ConfigError):
            PipelineConfig(max_asymmetry=-1.0)

    def test_negative_trim_rejected(self):
        with pytest.raises(ConfigError):
            PipelineConfig(trim_worst=-1)

    def test_abs_threshold_nullable(self):
        assert PipelineConfig(abs_threshold=None).abs_threshold is None
        assert PipelineConfig(abs_threshold=0.4).abs_threshold == 0.4
        with pytest.raises(ConfigError):
            PipelineConfig(abs_threshold=0.0)


class TestLoading:

    def test_from_dict_rejects_unknown_keys(self):
        with pytest.raises(ConfigError) as info:
            PipelineConfig.from_dict({"min_view": 6})
        assert "min_view" in str(info.value)

    def test_from_dict_applies_overrides(self):
        cfg = PipelineConfig.from_dict({"min_views": 7, "ratio": 0.7})
        assert cfg.min_views == 7
        assert cfg.ratio == 0.7
        assert cfg.r2_max == 0.65  # untouched default

    def test_toml_round_trip(self, tmp_path):
        path = tmp_path / "run.toml"
        path.write_text('min_views = 6\nlambertian_eps = 0.08\n')
        cfg = PipelineConfig.from_file(path)
        assert cfg.min_views == 6
        assert cfg.lambertian_eps == 0.08

    def test_json_round_trip(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text(json.dumps({"max_residual": 0.5}))
        assert PipelineConfig.from_file(path).max_residual == 0.5

    def test_malformed_file_rejected(self, tmp_path):
        path = tmp_path / "bad.toml"
        path.write_text("min_views = [unterminated")
        with pytest.raises(ConfigError):
            PipelineConfig.from_file(path)

    def test_to_dict_matches_fields(self):
        cfg = PipelineConfig()
        data = cfg.to_dict()
        assert set(data) == set(PipelineConfig.field_names())
        assert PipelineConfig.from_dict(data) == cfg

    def test_replace_keeps_immutability(self):
        cfg = PipelineConfig()
        other = cfg.replace(trim_worst=2)
        assert other.trim_worst == 2
        assert cfg.trim_worst == 0
