"""Keypoint ingestion, cross-view matching, and batch feature extraction.

Keypoints come from any external 2D detector, one text file per view named
``view_<i>_<j>.txt``: a header line ``N d`` followed by N lines
``k l scale orientation d_1 ... d_d``. Matching is anchored at the central
view (star topology): each reference keypoint greedily takes its nearest
descriptor in every other view, subject to a Lowe ratio test and an
optional absolute distance ceiling.
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import PipelineConfig
from .errors import (
    BoundsError,
    DataError,
    FeatureRejected,
    InsufficientViewsError,
    KeypointFileError,
)
from .estimator import FitDiagnostics, Rlff, extract_rlff
from .geometry import LFIntrinsics
from .lens import ObservationSet

__all__ = [
    "Keypoint",
    "FeatureTrack",
    "PipelineResult",
    "RejectionRecord",
    "parse_keypoint_file",
    "ingest_keypoints",
    "match_across_views",
    "tracks_to_observations",
    "run_pipeline",
]

_VIEW_FILE_RE = re.compile(r"^view_(\d+)_(\d+)\.txt$")


@dataclass(frozen=True)
class Keypoint:
    """One detected 2D keypoint in one view, descriptor L2-normalized."""

    view: tuple
    k: float
    l: float
    scale: float
    orientation: float
    descriptor: np.ndarray

    def __post_init__(self):
        desc = np.asarray(self.descriptor, dtype=float)
        desc = desc.copy()
        desc.setflags(write=False)
        object.__setattr__(self, "descriptor", desc)
        object.__setattr__(self, "view", (int(self.view[0]), int(self.view[1])))


@dataclass(frozen=True)
class FeatureTrack:
    """One feature matched across views: at most one keypoint per view."""

    track_id: int
    keypoints: dict
    reference_view: tuple

    @property
    def reference(self) -> Keypoint:
        return self.keypoints[self.reference_view]

    def __len__(self) -> int:
        return len(self.keypoints)


@dataclass(frozen=True)
class RejectionRecord:
    track_id: int
    reason: str
    detail: str


@dataclass(frozen=True)
class PipelineResult:
    """Accepted (Rlff, FitDiagnostics, FeatureTrack) triples plus rejections."""

    accepted: tuple
    rejections: tuple


def _normalize(desc: np.ndarray, root: bool, path: str, line: int) -> np.ndarray:
    if root:
        l1 = float(np.sum(np.abs(desc)))
        if l1 == 0.0:
            raise KeypointFileError(path, line, "zero descriptor cannot be normalized")
        desc = np.sqrt(np.abs(desc) / l1)
    norm = float(np.linalg.norm(desc))
    if norm == 0.0:
        raise KeypointFileError(path, line, "zero descriptor cannot be normalized")
    return desc / norm


def parse_keypoint_file(path) -> list:
    """Parse one view file into raw (k, l, scale, orientation, descriptor) rows.

    An empty (or whitespace-only) file means zero keypoints. Otherwise the
    header ``N d`` must match the body exactly.
    """
    path = Path(path)
    rows = []
    with open(path, "r") as fh:
        lines = fh.read().splitlines()
    stripped = [(num, ln.strip()) for num, ln in enumerate(lines, start=1)]
    content = [(num, ln) for num, ln in stripped if ln]
    if not content:
        return rows
    head_num, head = content[0]
    parts = head.split()
    if len(parts) != 2:
        raise KeypointFileError(str(path), head_num, f"expected header 'N d', got {head!r}")
    try:
        n, dim = int(parts[0]), int(parts[1])
    except ValueError as exc:
        raise KeypointFileError(str(path), head_num, f"bad header {head!r}") from exc
    if n < 0 or dim < 1:
        raise KeypointFileError(str(path), head_num, f"bad header counts {head!r}")
    body = content[1:]
    if len(body) != n:
        raise KeypointFileError(
            str(path), head_num, f"header declares {n} keypoints, file has {len(body)}"
        )
    for num, ln in body:
        fields = ln.split()
        if len(fields) != 4 + dim:
            raise KeypointFileError(
                str(path), num,
                f"expected {4 + dim} fields (k l scale orientation + {dim} "
                f"descriptor values), got {len(fields)}",
            )
        try:
            vals = [float(x) for x in fields]
        except ValueError as exc:
            raise KeypointFileError(str(path), num, f"non-numeric field: {exc}") from exc
        desc = np.array(vals[4:], dtype=float)
        if not np.isfinite(vals[:4]).all() or not np.isfinite(desc).all():
            raise KeypointFileError(str(path), num, "non-finite value")
        rows.append((vals[0], vals[1], vals[2], vals[3], desc, num))
    return rows


def ingest_keypoints(path, grid, root_descriptors: bool = False) -> dict:
    """Load all ``view_<i>_<j>.txt`` files under a directory.

    Args:
        path: directory of per-view keypoint files.
        grid: (ni, nj) view-grid dimensions, or an LFIntrinsics.
        root_descriptors: apply the square-root transform (element-wise sqrt
            of the L1-normalized descriptor) before the final L2
            normalization.

    Returns:
        dict mapping (i, j) to a list of Keypoint in file order. Views
        without a file are absent. Descriptor length must agree across the
        whole dataset.
    """
    if isinstance(grid, LFIntrinsics):
        ni, nj = grid.ni, grid.nj
    else:
        ni, nj = int(grid[0]), int(grid[1])
    path = Path(path)
    if not path.is_dir():
        raise DataError(f"keypoint directory not found: {path}")
    per_view: dict = {}
    dim_seen = None
    for name in sorted(os.listdir(path)):
        match = _VIEW_FILE_RE.match(name)
        if not match:
            continue
        i, j = int(match.group(1)), int(match.group(2))
        if not (0 <= i < ni and 0 <= j < nj):
            raise BoundsError(
                f"{name}: view ({i}, {j}) outside the {ni}x{nj} grid"
            )
        kps = []
        for k, l, scale, orientation, desc, line in parse_keypoint_file(path / name):
            if dim_seen is None:
                dim_seen = len(desc)
            elif len(desc) != dim_seen:
                raise KeypointFileError(
                    str(path / name), line,
                    f"descriptor length {len(desc)} != {dim_seen} used elsewhere",
                )
            kps.append(
                Keypoint(
                    view=(i, j), k=k, l=l, scale=scale, orientation=orientation,
                    descriptor=_normalize(desc, root_descriptors, str(path / name), line),
                )
            )
        per_view[(i, j)] = kps
    return per_view


def _descriptor_matrix(kps: list) -> np.ndarray:
    return np.stack([kp.descriptor for kp in kps])


def _match_one_view(
    ref_desc: np.ndarray, cand: np.ndarray, ratio: float, abs_threshold
) -> int:
    """Index of the accepted candidate, or -1. Strict ratio: d1 < ratio * d2."""
    dists = np.linalg.norm(cand - ref_desc, axis=1)
    best = int(np.argmin(dists))
    d1 = float(dists[best])
    if abs_threshold is not None and d1 >= abs_threshold:
        return -1
    if len(dists) > 1:
        rest = np.delete(dists, best)
        d2 = float(rest.min())
        if not d1 < ratio * d2:
            return -1
    return best


def match_across_views(
    per_view: dict, cfg: PipelineConfig | None = None, reference: tuple | None = None
) -> list:
    """Star-topology matching anchored at the central (reference) view.

    Each reference keypoint claims at most its nearest descriptor per view,
    kept only when the Lowe ratio test (and optional absolute ceiling)
    passes. Tracks shorter than cfg.min_views are dropped. Track ids follow
    reference file order, so output is deterministic.
    """
    if cfg is None:
        cfg = PipelineConfig()
    if not per_view:
        return []
    if reference is None:
        ni = max(v[0] for v in per_view) + 1
        nj = max(v[1] for v in per_view) + 1
        reference = ((ni - 1) // 2, (nj - 1) // 2)
    ref_kps = per_view.get(tuple(reference), [])
    if not ref_kps:
        raise InsufficientViewsError(
            f"reference view {tuple(reference)} has no keypoints"
        )
    other_views = [v for v in sorted(per_view) if v != tuple(reference) and per_view[v]]
    cand_mats = {v: _descriptor_matrix(per_view[v]) for v in other_views}

    tracks = []
    for ref_idx, ref_kp in enumerate(ref_kps):
        found = {tuple(reference): ref_kp}
        for v in other_views:
            hit = _match_one_view(
                ref_kp.descriptor, cand_mats[v], cfg.ratio, cfg.abs_threshold
            )
            if hit >= 0:
                found[v] = per_view[v][hit]
        if len(found) >= cfg.min_views:
            tracks.append(
                FeatureTrack(
                    track_id=ref_idx, keypoints=found, reference_view=tuple(reference)
                )
            )
    return tracks


def tracks_to_observations(tracks: list, intr: LFIntrinsics) -> list:
    """Decode every track's keypoints to rays, one ObservationSet per track."""
    sets = []
    for track in tracks:
        views = sorted(track.keypoints)
        ijkl = np.array(
            [[i, j, track.keypoints[(i, j)].k, track.keypoints[(i, j)].l]
             for i, j in views],
            dtype=float,
        )
        rays = intr.decode_indices(ijkl)
        sets.append(
            ObservationSet(
                feature_id=track.track_id,
                views=ijkl[:, :2].astype(int),
                rays=rays,
                pixels=ijkl[:, 2:],
            )
        )
    return sets


def _n_threads() -> int:
    raw = os.environ.get("RLFF_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise DataError(f"RLFF_THREADS must be an integer, got {raw!r}")
    if n < 1:
        raise DataError(f"RLFF_THREADS must be >= 1, got {n}")
    return n


def run_pipeline(keypoint_dir, intr: LFIntrinsics, cfg: PipelineConfig | None = None) -> PipelineResult:
    """Ingest, match, and fit a whole capture.

    Never aborts on a single bad track: rejected tracks land in
    ``rejections`` with their gate's reason. Output order follows track id,
    so results are a pure function of (inputs, cfg). Extraction fans out
    over RLFF_THREADS worker threads when that variable is set above 1.
    """
    if cfg is None:
        cfg = PipelineConfig()
    per_view = ingest_keypoints(keypoint_dir, intr, root_descriptors=cfg.root_descriptors)
    reference = (int(intr.central_view[0]), int(intr.central_view[1]))
    tracks = match_across_views(per_view, cfg, reference=reference)
    obs_sets = tracks_to_observations(tracks, intr)

    def fit_one(pair):
        track, obs = pair
        try:
            rlff, diag = extract_rlff(obs, intr, cfg)
            return track, rlff, diag, None
        except FeatureRejected as exc:
            return track, None, None, exc

    items = list(zip(tracks, obs_sets))
    threads = _n_threads()
    if threads > 1 and len(items) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(fit_one, items))
    else:
        outcomes = [fit_one(item) for item in items]

    accepted = []
    rejections = []
    for track, rlff, diag, err in outcomes:
        if err is None:
            accepted.append((rlff, diag, track))
        else:
            rejections.append(
                RejectionRecord(
                    track_id=track.track_id,
                    reason=err.reason.value,
                    detail=err.detail,
                )
            )
    return PipelineResult(accepted=tuple(accepted), rejections=tuple(rejections))
