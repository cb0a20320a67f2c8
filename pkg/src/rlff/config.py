"""Pipeline configuration: thresholds for matching, gating and classification.

Loadable from TOML or JSON files with flat keys; unknown keys are rejected
so typos fail loudly instead of silently running with defaults.
"""

from __future__ import annotations

import dataclasses
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError

__all__ = ["PipelineConfig"]


@dataclass(frozen=True)
class PipelineConfig:
    """Thresholds and switches for matching, fitting and classification.

    Attributes:
        min_views: minimum observations per feature; >= 4 so the linear
            system stays overdetermined, default 5 for diversity slack.
        ratio: nearest/second-nearest descriptor distance ratio accepted
            during matching.
        abs_threshold: absolute descriptor-distance ceiling for matches;
            None disables the check (small-baseline grids rarely need it).
        root_descriptors: apply the square-root transform (element-wise sqrt
            of the L1-normalized vector) to ingested descriptors.
        r2_max: view-collinearity rejection threshold on R^2.
        max_residual: fit residual gate in units of the intrinsic pixel
            pitch. The default is 3x the noise floor measured by
            scripts/calibrate_thresholds.py at 0.1 pixel observation noise
            on the default synthetic camera (see tests/data/calibration.json).
        max_asymmetry: gate on the Frobenius asymmetry of the fitted slope
            matrix (dimensionless); default calibrated as above.
        trim_worst: number of worst-residual observations the fit may drop
            to recover from corrupted views; 0 disables trimming.
        lambertian_eps: relative depth gap below which a feature counts as
            Lambertian.
        symmetric_fit: constrain the slope matrix to be symmetric inside the
            least-squares fit instead of symmetrizing afterwards. Off by
            default: the two-step fit is the reference behavior and keeps
            the asymmetry diagnostic meaningful.
        descriptor_dim: expected descriptor length for ingested keypoints.
    """

    min_views: int = 5
    ratio: float = 0.8
    abs_threshold: float | None = None
    root_descriptors: bool = False
    r2_max: float = 0.65
    max_residual: float = 0.42
    max_asymmetry: float = 1.0e-3
    trim_worst: int = 0
    lambertian_eps: float = 0.05
    symmetric_fit: bool = False
    descriptor_dim: int = 128

    def __post_init__(self):
        if int(self.min_views) != self.min_views or self.min_views < 4:
            raise ConfigError(f"min_views must be an integer >= 4, got {self.min_views}")
        if not (0.0 < self.ratio <= 1.0):
            raise ConfigError(f"ratio must lie in (0, 1], got {self.ratio}")
        if self.abs_threshold is not None and not (
            math.isfinite(self.abs_threshold) and self.abs_threshold > 0
        ):
            raise ConfigError(
                f"abs_threshold must be positive or null, got {self.abs_threshold}"
            )
        if not (0.0 < self.r2_max <= 1.0):
            raise ConfigError(f"r2_max must lie in (0, 1], got {self.r2_max}")
        for name in ("max_residual", "max_asymmetry"):
            val = getattr(self, name)
            if not (math.isfinite(val) and val > 0):
                raise ConfigError(f"{name} must be positive, got {val}")
        if int(self.trim_worst) != self.trim_worst or self.trim_worst < 0:
            raise ConfigError(f"trim_worst must be an integer >= 0, got {self.trim_worst}")
        if not (math.isfinite(self.lambertian_eps) and self.lambertian_eps >= 0):
            raise ConfigError(f"lambertian_eps must be >= 0, got {self.lambertian_eps}")
        if not isinstance(self.root_descriptors, bool):
            raise ConfigError("root_descriptors must be a boolean")
        if not isinstance(self.symmetric_fit, bool):
            raise ConfigError("symmetric_fit must be a boolean")
        if int(self.descriptor_dim) != self.descriptor_dim or self.descriptor_dim < 1:
            raise ConfigError(
                f"descriptor_dim must be a positive integer, got {self.descriptor_dim}"
            )

    @classmethod
    def field_names(cls) -> tuple:
        return tuple(f.name for f in dataclasses.fields(cls))

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        unknown = sorted(set(data) - set(cls.field_names()))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**data)

    @classmethod
    def from_file(cls, path) -> "PipelineConfig":
        path = Path(path)
        try:
            if path.suffix.lower() == ".toml":
                with open(path, "rb") as fh:
                    data = tomllib.load(fh)
            else:
                data = json.loads(path.read_text())
        except (tomllib.TOMLDecodeError, json.JSONDecodeError) as exc:
            raise ConfigError(f"{path}: cannot parse config: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: config must be a table/object")
        return cls.from_dict(data)

    def replace(self, **kwargs) -> "PipelineConfig":
        return dataclasses.replace(self, **kwargs)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)
