"""Export characteristic points as 2D feature files for SfM tools.

Mono mode projects every characteristic point into the central view, so a
refracted feature becomes two ordinary 2D features (all depth information
is discarded). Stereo mode projects into two virtual views separated by a
baseline along s, which preserves each point's depth as disparity and
discards only the focal-line orientations.

Feature files are plain text: header ``N d``, then one line per feature
``x y scale orientation d_1 ... d_d`` with pixel coordinates of the target
view, written atomically. A sidecar JSON index maps feature ids to emitted
rows and front/back tags so external matchers can pair the points.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
import warnings
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError
from .estimator import CharacteristicPoints, FeatureClass
from .geometry import LFIntrinsics, Point3D, project_lambertian

__all__ = [
    "ExportConfig",
    "Feature2D",
    "ExportResult",
    "project_mono",
    "project_stereo",
    "assign_descriptors",
    "write_feature_file",
    "read_feature_file",
    "export_characteristic_points",
    "export_stats",
    "placeholder_descriptor",
]

_MODES = ("mono", "stereo")
_STRATEGIES = ("identical", "bias", "external-match")


@dataclass(frozen=True)
class ExportConfig:
    """How characteristic points are turned into 2D features.

    Attributes:
        mode: "mono" (central view) or "stereo" (two views along s).
        baseline: stereo baseline in meters; None picks the full s-extent
            of the view grid, mirroring the camera's own aperture.
        strategy: descriptor assignment for refracted pairs. "identical"
            (default, both points share the source descriptor, leaving
            outlier rejection to epipolar geometry), "bias" (the back
            point's descriptor is pushed away by a fixed invertible
            transform so the pair cannot match each other), or
            "external-match" (identical descriptors; consumers pair points
            via the sidecar front/back tags).
        bias: bias magnitude for the "bias" strategy; the transform is
            element-wise addition then renormalization to unit length.
        descriptor_dim: length of generated placeholder descriptors when a
            feature carries none.
    """

    mode: str = "mono"
    baseline: float | None = None
    strategy: str = "identical"
    bias: float = 1.0
    descriptor_dim: int = 128

    def __post_init__(self):
        if self.mode not in _MODES:
            raise ConfigError(f"mode must be one of {_MODES}, got {self.mode!r}")
        if self.strategy not in _STRATEGIES:
            raise ConfigError(
                f"descriptor strategy must be one of {_STRATEGIES}, got {self.strategy!r}"
            )
        if self.baseline is not None and not (
            math.isfinite(self.baseline) and self.baseline > 0
        ):
            raise ConfigError(f"stereo baseline must be positive, got {self.baseline}")
        if not (math.isfinite(self.bias) and self.bias != 0):
            raise ConfigError(f"bias must be finite and nonzero, got {self.bias}")
        if int(self.descriptor_dim) != self.descriptor_dim or self.descriptor_dim < 1:
            raise ConfigError(
                f"descriptor_dim must be a positive integer, got {self.descriptor_dim}"
            )

    def effective_baseline(self, intr: LFIntrinsics) -> float:
        if self.baseline is not None:
            return self.baseline
        return (intr.ni - 1) * intr.view_pitch


@dataclass(frozen=True)
class Feature2D:
    """One exported 2D feature: pixel position plus appearance metadata."""

    x: float
    y: float
    scale: float
    orientation: float
    descriptor: np.ndarray | None
    feature_id: int
    tag: str  # "single" | "front" | "back"

    def __post_init__(self):
        if self.descriptor is not None:
            desc = np.asarray(self.descriptor, dtype=float)
            desc = desc.copy()
            desc.setflags(write=False)
            object.__setattr__(self, "descriptor", desc)


@dataclass(frozen=True)
class ExportResult:
    paths: tuple
    index_path: str
    index: dict


def _tag_for(cp: CharacteristicPoints, which: int) -> str:
    if cp.feature_class is FeatureClass.LAMBERTIAN:
        return "single"
    return "front" if which == 0 else "back"


def _project_point(
    point: Point3D, cp: CharacteristicPoints, intr: LFIntrinsics,
    view_i: float, view_j: float, tag: str,
) -> Feature2D | None:
    if point.z <= 0:
        warnings.warn(
            f"feature {cp.feature_id}: characteristic point at z = {point.z} "
            "is behind the camera; skipped",
            RuntimeWarning,
            stacklevel=3,
        )
        return None
    s, t = intr.view_st(view_i, view_j)
    u, v = project_lambertian(point, float(s), float(t), intr.d)
    k, l = intr.pixel_for_view_ray(view_i, view_j, u, v)
    return Feature2D(
        x=float(k), y=float(l),
        scale=cp.scale, orientation=cp.orientation,
        descriptor=cp.descriptor, feature_id=cp.feature_id, tag=tag,
    )


def project_mono(cp: CharacteristicPoints, intr: LFIntrinsics) -> list:
    """Project characteristic points into the central view.

    One feature for Lambertian, two (front then back) for refracted.
    Points at or behind the camera are skipped with a warning.
    """
    intr.require_separable()
    ic, jc = intr.central_view
    out = []
    for which, point in enumerate(cp.points):
        feat = _project_point(point, cp, intr, ic, jc, _tag_for(cp, which))
        if feat is not None:
            out.append(feat)
    return out


def project_stereo(
    cp: CharacteristicPoints, intr: LFIntrinsics, baseline: float
) -> tuple[list, list]:
    """Project characteristic points into two virtual views along s.

    The views sit at s = -baseline/2 (left) and s = +baseline/2 (right),
    t = 0; a point at depth z then shows the ray-space disparity
    u_left - u_right = baseline * d / z, so depth survives the export.
    """
    if not (math.isfinite(baseline) and baseline > 0):
        raise ConfigError(f"stereo baseline must be positive, got {baseline}")
    intr.require_separable()
    # Fractional view indices whose (s, t) hit the requested stereo pair.
    st_block = intr.m[0:2, 0:2]
    offset = np.asarray(intr.view_st(0.0, 0.0), dtype=float)
    inv = np.linalg.inv(st_block)
    left_ij = inv @ (np.array([-baseline / 2.0, 0.0]) - offset)
    right_ij = inv @ (np.array([baseline / 2.0, 0.0]) - offset)
    left, right = [], []
    for which, point in enumerate(cp.points):
        tag = _tag_for(cp, which)
        lf = _project_point(point, cp, intr, left_ij[0], left_ij[1], tag)
        rf = _project_point(point, cp, intr, right_ij[0], right_ij[1], tag)
        if lf is not None and rf is not None:
            left.append(lf)
            right.append(rf)
    return left, right


def bias_descriptor(desc: np.ndarray, bias: float) -> np.ndarray:
    """Fixed invertible push: add ``bias`` to every element, renormalize.

    Separates realistic (sparse, unit-length) descriptors from their
    originals by roughly the inter-feature distance scale; a perfectly
    uniform descriptor is a fixed point and stays unseparated.
    """
    shifted = desc + bias
    norm = float(np.linalg.norm(shifted))
    if norm == 0.0:
        raise DataError("bias transform annihilated the descriptor")
    return shifted / norm


def assign_descriptors(cp: CharacteristicPoints, strategy: str, bias: float = 1.0) -> list:
    """Descriptors for the emitted points of one feature, in point order.

    Lambertian features emit one descriptor regardless of strategy.
    "identical" and "external-match" duplicate the source descriptor (the
    latter relies on sidecar tags for pairing); "bias" transforms the back
    point's copy so the pair cannot match each other.

    Raises:
        ConfigError: unknown strategy.
        DataError: the feature carries no source descriptor.
    """
    if strategy not in _STRATEGIES:
        raise ConfigError(
            f"descriptor strategy must be one of {_STRATEGIES}, got {strategy!r}"
        )
    if cp.descriptor is None:
        raise DataError(f"feature {cp.feature_id} has no source descriptor")
    desc = np.asarray(cp.descriptor, dtype=float)
    if cp.feature_class is FeatureClass.LAMBERTIAN:
        return [desc]
    if strategy == "bias":
        return [desc, bias_descriptor(desc, bias)]
    return [desc, desc]


def placeholder_descriptor(feature_id: int, dim: int = 128) -> np.ndarray:
    """Deterministic stand-in descriptor for features that carry none.

    Non-negative and unit-length like a typical gradient-histogram
    descriptor; seeded by the feature id so exports are reproducible.
    """
    rng = np.random.default_rng(np.random.SeedSequence([0x52EF, int(feature_id)]))
    desc = np.abs(rng.standard_normal(int(dim)))
    return desc / float(np.linalg.norm(desc))


def _format_feature_line(feat: Feature2D) -> str:
    head = [feat.x, feat.y, feat.scale, feat.orientation]
    vals = head + list(np.asarray(feat.descriptor, dtype=float))
    return " ".join(f"{v:.6f}" for v in vals)


def _atomic_write_text(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=str(path.parent), prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_feature_file(features: list, path, dim: int = 128) -> None:
    """Write features as text: ``N d`` header, one ``x y scale orientation
    d_1 ... d_d`` line per feature, values printed to 6 decimals.

    ``dim`` only matters for an empty list; otherwise the common descriptor
    length is used and mixed lengths are a format error. The write is
    atomic (temp file + rename).
    """
    path = Path(path)
    if features:
        lengths = {len(f.descriptor) if f.descriptor is not None else -1 for f in features}
        if -1 in lengths:
            raise DataError("cannot write features without descriptors")
        if len(lengths) != 1:
            raise DataError(f"mixed descriptor lengths {sorted(lengths)} in one file")
        dim = lengths.pop()
    lines = [f"{len(features)} {int(dim)}"]
    lines.extend(_format_feature_line(f) for f in features)
    _atomic_write_text(path, "\n".join(lines) + "\n")


def read_feature_file(path) -> list:
    """Parse a feature file back into Feature2D rows (tags default single)."""
    path = Path(path)
    lines = [ln for ln in path.read_text().splitlines() if ln.strip()]
    if not lines:
        raise DataError(f"{path}: missing header")
    parts = lines[0].split()
    if len(parts) != 2:
        raise DataError(f"{path}:1: expected header 'N d', got {lines[0]!r}")
    n, dim = int(parts[0]), int(parts[1])
    if len(lines) - 1 != n:
        raise DataError(f"{path}: header declares {n} features, found {len(lines) - 1}")
    out = []
    for row, ln in enumerate(lines[1:], start=2):
        vals = [float(x) for x in ln.split()]
        if len(vals) != 4 + dim:
            raise DataError(f"{path}:{row}: expected {4 + dim} values, got {len(vals)}")
        out.append(
            Feature2D(
                x=vals[0], y=vals[1], scale=vals[2], orientation=vals[3],
                descriptor=np.array(vals[4:]), feature_id=row - 2, tag="single",
            )
        )
    return out


def export_stats(cps: list) -> dict:
    """Feature statistics with pair normalization.

    A refracted feature emits two rows but is counted once, so ``features``
    is comparable with single-point detectors: rows are halved for pairs.
    """
    lambertian = sum(1 for cp in cps if cp.feature_class is FeatureClass.LAMBERTIAN)
    refracted = len(cps) - lambertian
    return {
        "rows": lambertian + 2 * refracted,
        "features": len(cps),
        "lambertian": lambertian,
        "refracted": refracted,
    }


def export_characteristic_points(
    cps: list,
    intr: LFIntrinsics,
    ecfg: ExportConfig,
    out_dir,
    frame: str,
) -> ExportResult:
    """Write feature files plus the sidecar index for one frame.

    Layout: ``mono/<frame>.txt`` or ``stereo/<frame>_L.txt`` and
    ``stereo/<frame>_R.txt`` under ``out_dir``, with
    ``<mode>/<frame>_index.json`` beside them. Features missing a
    descriptor get a deterministic placeholder.
    """
    out_dir = Path(out_dir)
    mode_dir = out_dir / ecfg.mode
    mode_dir.mkdir(parents=True, exist_ok=True)

    prepared = []
    for cp in cps:
        if cp.descriptor is None:
            cp = replace(
                cp, descriptor=placeholder_descriptor(cp.feature_id, ecfg.descriptor_dim)
            )
        prepared.append(cp)

    index_features = []
    counts = export_stats(prepared)

    def desc_for_tag(descs: list, tag: str):
        # Skipped points must not shift descriptor assignment, so align by
        # tag: front/single use the first slot, back uses the second.
        return descs[1] if tag == "back" else descs[0]

    if ecfg.mode == "mono":
        rows = []
        for cp in prepared:
            descs = assign_descriptors(cp, ecfg.strategy, ecfg.bias)
            feats = project_mono(cp, intr)
            entry_rows = {}
            for feat in feats:
                entry_rows[feat.tag] = len(rows)
                rows.append(replace(feat, descriptor=desc_for_tag(descs, feat.tag)))
            index_features.append(
                {"id": cp.feature_id, "class": cp.feature_class.value,
                 "tags": entry_rows}
            )
        path = mode_dir / f"{frame}.txt"
        write_feature_file(rows, path, dim=ecfg.descriptor_dim)
        paths = (str(path),)
        files = {"mono": path.name}
    else:
        baseline = ecfg.effective_baseline(intr)
        left_rows, right_rows = [], []
        for cp in prepared:
            descs = assign_descriptors(cp, ecfg.strategy, ecfg.bias)
            left, right = project_stereo(cp, intr, baseline)
            entry = {"id": cp.feature_id, "class": cp.feature_class.value,
                     "tags": {}}
            for feat_l, feat_r in zip(left, right):
                desc = desc_for_tag(descs, feat_l.tag)
                entry["tags"][feat_l.tag] = {
                    "left": len(left_rows), "right": len(right_rows)
                }
                left_rows.append(replace(feat_l, descriptor=desc))
                right_rows.append(replace(feat_r, descriptor=desc))
            index_features.append(entry)
        path_l = mode_dir / f"{frame}_L.txt"
        path_r = mode_dir / f"{frame}_R.txt"
        write_feature_file(left_rows, path_l, dim=ecfg.descriptor_dim)
        write_feature_file(right_rows, path_r, dim=ecfg.descriptor_dim)
        paths = (str(path_l), str(path_r))
        files = {"left": path_l.name, "right": path_r.name}

    index = {
        "frame": frame,
        "mode": ecfg.mode,
        "strategy": ecfg.strategy,
        "files": files,
        "counts": counts,
        "features": index_features,
    }
    if ecfg.mode == "stereo":
        index["baseline"] = ecfg.effective_baseline(intr)
    index_path = mode_dir / f"{frame}_index.json"
    _atomic_write_text(index_path, json.dumps(index, indent=2) + "\n")
    return ExportResult(paths=paths, index_path=str(index_path), index=index)
