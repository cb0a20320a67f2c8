"""Two-plane light-field geometry.

A ray is parameterized by its intersection (s, t) with a reference plane at
z = 0 (the camera side) and by (u, v), its intersection with a parallel
plane at z = D expressed *relative* to (s, t). All coordinates are meters;
depth z grows toward the scene. A camera produces discrete samples indexed
(i, j, k, l): (i, j) selects the sub-image (view) and (k, l) the pixel
within it. A 5x5 homogeneous intrinsic matrix M maps [i, j, k, l, 1] to
[s, t, u, v, 1].

A Lambertian point P projects to the plane pair

    u = (-D / Pz) * (s - Px),   v = (-D / Pz) * (t - Py)

so its observations form a 2D plane in the 4D ray space with identical
slope -D / Pz in both epipolar dimensions.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import BehindCameraError, BoundsError, IntrinsicsError

__all__ = [
    "Ray4D",
    "DiscreteSample",
    "Point3D",
    "Line3D",
    "LFIntrinsics",
    "decode_sample",
    "project_lambertian",
    "slope_of_depth",
    "depth_of_slope",
    "make_intrinsics",
    "crop_views",
]


def _finite(*values: float) -> bool:
    return all(math.isfinite(v) for v in values)


@dataclass(frozen=True)
class Ray4D:
    """Continuous light-field sample [s, t, u, v], meters.

    ``s, t`` lie on the far reference plane; ``u, v`` are on the near plane
    at separation D, relative to (s, t).
    """

    s: float
    t: float
    u: float
    v: float

    def __post_init__(self):
        if not _finite(self.s, self.t, self.u, self.v):
            raise ValueError(f"ray components must be finite, got {self}")

    def as_array(self) -> np.ndarray:
        return np.array([self.s, self.t, self.u, self.v], dtype=float)


@dataclass(frozen=True)
class DiscreteSample:
    """Discrete sample index: view (i, j), pixel (k, l).

    View indices are integral; pixel positions may be sub-pixel (keypoint
    centroids land between pixels). Bounds are validated against a grid by
    the operations that consume samples.
    """

    i: int
    j: int
    k: float
    l: float

    def as_array(self) -> np.ndarray:
        return np.array([self.i, self.j, self.k, self.l], dtype=float)


@dataclass(frozen=True)
class Point3D:
    """Point in the camera frame; z measured from the s,t plane, meters."""

    x: float
    y: float
    z: float

    def __post_init__(self):
        if not _finite(self.x, self.y, self.z):
            raise ValueError(f"point components must be finite, got {self}")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)


@dataclass(frozen=True)
class Line3D:
    """Infinite 3D line through ``point`` along unit vector ``direction``."""

    point: np.ndarray
    direction: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.point, dtype=float).reshape(3)
        d = np.asarray(self.direction, dtype=float).reshape(3)
        n = float(np.linalg.norm(d))
        if not np.isfinite(p).all() or not np.isfinite(d).all() or n == 0.0:
            raise ValueError("line requires finite point and nonzero direction")
        d = d / n
        p.setflags(write=False)
        d.setflags(write=False)
        object.__setattr__(self, "point", p)
        object.__setattr__(self, "direction", d)


@dataclass(frozen=True)
class LFIntrinsics:
    """Linear intrinsics of a decoded light field.

    Attributes:
        m: 5x5 homogeneous matrix taking [i, j, k, l, 1] to [s, t, u, v, 1].
        d: separation between the two reference planes, meters, > 0.
        ni, nj: number of views along i and j.
        nk, nl: number of pixels per view along k and l.
    """

    m: np.ndarray
    d: float
    ni: int
    nj: int
    nk: int
    nl: int

    def __post_init__(self):
        m = np.asarray(self.m, dtype=float)
        if m.shape != (5, 5):
            raise IntrinsicsError(f"intrinsic matrix must be 5x5, got {m.shape}")
        if not np.isfinite(m).all():
            raise IntrinsicsError("intrinsic matrix must be finite")
        if not np.array_equal(m[4], [0.0, 0.0, 0.0, 0.0, 1.0]):
            raise IntrinsicsError("last intrinsic row must be [0, 0, 0, 0, 1]")
        if np.linalg.matrix_rank(m) < 5:
            raise IntrinsicsError("intrinsic matrix must be full rank")
        if not (math.isfinite(self.d) and self.d > 0):
            raise IntrinsicsError(f"plane separation must be positive, got {self.d}")
        for name, n in (("ni", self.ni), ("nj", self.nj), ("nk", self.nk), ("nl", self.nl)):
            if int(n) != n or n < 1:
                raise IntrinsicsError(f"grid dimension {name} must be a positive integer, got {n}")
        m = m.copy()
        m.setflags(write=False)
        object.__setattr__(self, "m", m)

    # -- bounds ------------------------------------------------------------

    def check_bounds(self, i, j, k, l) -> None:
        """Raise BoundsError unless 0 <= i < ni, ..., 0 <= l < nl (broadcast)."""
        i, j, k, l = (np.asarray(x) for x in (i, j, k, l))
        ok = (
            (i >= 0) & (i < self.ni)
            & (j >= 0) & (j < self.nj)
            & (k >= 0) & (k < self.nk)
            & (l >= 0) & (l < self.nl)
        )
        if not np.all(ok):
            bad = np.argwhere(~np.atleast_1d(ok))
            raise BoundsError(
                f"sample index outside {self.ni}x{self.nj}x{self.nk}x{self.nl} grid "
                f"(first offender at flat position {int(bad[0][0])})"
            )

    # -- decoding ----------------------------------------------------------

    def decode(self, n: DiscreteSample) -> Ray4D:
        """Decode one discrete sample to a ray. Bounds-checked."""
        self.check_bounds(n.i, n.j, n.k, n.l)
        s, t, u, v = (self.m @ np.array([n.i, n.j, n.k, n.l, 1.0]))[:4]
        return Ray4D(float(s), float(t), float(u), float(v))

    def decode_indices(self, ijkl: np.ndarray, check_bounds: bool = True) -> np.ndarray:
        """Decode an (N, 4) array of [i, j, k, l] rows to (N, 4) rays."""
        ijkl = np.asarray(ijkl, dtype=float)
        if ijkl.ndim != 2 or ijkl.shape[1] != 4:
            raise ValueError(f"expected (N, 4) indices, got {ijkl.shape}")
        if check_bounds:
            self.check_bounds(ijkl[:, 0], ijkl[:, 1], ijkl[:, 2], ijkl[:, 3])
        homog = np.column_stack([ijkl, np.ones(len(ijkl))])
        return (homog @ self.m.T)[:, :4]

    def view_st(self, i, j) -> tuple:
        """(s, t) position of view (i, j), taken at the view's center pixel."""
        kc = (self.nk - 1) / 2.0
        lc = (self.nl - 1) / 2.0
        i, j = np.asarray(i, dtype=float), np.asarray(j, dtype=float)
        ones = np.ones_like(i)
        vec = np.stack([i, j, kc * ones, lc * ones, ones])
        out = np.tensordot(self.m[:2], vec, axes=1)
        return out[0], out[1]

    def pixel_for_view_ray(self, i, j, u, v) -> tuple:
        """Invert the pixel block: (k, l) hit by relative (u, v) in view (i, j).

        Works for any intrinsics whose [u, v] rows depend invertibly on
        (k, l); view indices may be fractional (virtual views).
        """
        kl_block = self.m[2:4, 2:4]
        det = float(np.linalg.det(kl_block))
        if abs(det) < 1e-300:
            raise IntrinsicsError("pixel block of intrinsic matrix is singular")
        i, j, u, v = np.broadcast_arrays(
            *(np.asarray(x, dtype=float) for x in (i, j, u, v))
        )
        rhs_u = u - self.m[2, 0] * i - self.m[2, 1] * j - self.m[2, 4]
        rhs_v = v - self.m[3, 0] * i - self.m[3, 1] * j - self.m[3, 4]
        inv = np.linalg.inv(kl_block)
        k = inv[0, 0] * rhs_u + inv[0, 1] * rhs_v
        l = inv[1, 0] * rhs_u + inv[1, 1] * rhs_v
        return k, l

    # -- derived scalars ----------------------------------------------------

    @property
    def pixel_pitch(self) -> float:
        """Ray-space size of one pixel step: sqrt |det| of the (u,v)x(k,l) block."""
        return float(math.sqrt(abs(np.linalg.det(self.m[2:4, 2:4]))))

    @property
    def view_pitch(self) -> float:
        """Ray-space size of one view step: sqrt |det| of the (s,t)x(i,j) block."""
        return float(math.sqrt(abs(np.linalg.det(self.m[0:2, 0:2]))))

    @property
    def central_view(self) -> tuple:
        """Geometric center of the view grid (fractional for even grids)."""
        return (self.ni - 1) / 2.0, (self.nj - 1) / 2.0

    @property
    def n_views(self) -> int:
        return self.ni * self.nj

    def is_separable(self) -> bool:
        """True when view position depends on (i, j) only (no (k, l) leak)."""
        return bool(np.all(self.m[0:2, 2:4] == 0.0))

    def require_separable(self) -> None:
        if not self.is_separable():
            raise IntrinsicsError(
                "operation requires separable intrinsics: the (s, t) rows must "
                "not depend on pixel indices (k, l)"
            )

    # -- serialization -------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "M": [float(x) for x in self.m.reshape(-1)],
            "D": float(self.d),
            "Ni": self.ni,
            "Nj": self.nj,
            "Nk": self.nk,
            "Nl": self.nl,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "LFIntrinsics":
        try:
            m = np.asarray(data["M"], dtype=float).reshape(5, 5)
            return cls(
                m=m, d=float(data["D"]),
                ni=int(data["Ni"]), nj=int(data["Nj"]),
                nk=int(data["Nk"]), nl=int(data["Nl"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise IntrinsicsError(f"bad intrinsics record: {exc}") from exc

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def from_json(cls, path) -> "LFIntrinsics":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise IntrinsicsError(f"{path}: invalid JSON: {exc}") from exc
        return cls.from_dict(data)


def decode_sample(n: DiscreteSample, intr: LFIntrinsics) -> Ray4D:
    """Decode one discrete sample [i, j, k, l] to a continuous ray.

    Args:
        n: sample indices, within the grid of ``intr``.
        intr: light-field intrinsics.

    Returns:
        The ray M @ [i, j, k, l, 1] dropped to its (s, t, u, v) components.

    Raises:
        BoundsError: if the indices fall outside the grid.
    """
    return intr.decode(n)


def project_lambertian(p: Point3D, s, t, d: float):
    """Relative plane coordinates of a Lambertian point seen from (s, t).

    Args:
        p: scene point with p.z > 0.
        s, t: view position(s) on the far plane, meters; scalars or arrays.
        d: plane separation, meters, > 0.

    Returns:
        (u, v) with u = (-d / p.z) * (s - p.x) and v likewise in t, matching
        the input shape.

    Raises:
        BehindCameraError: p.z == 0 (projection singular) or p.z < 0.
    """
    if p.z == 0:
        raise BehindCameraError("projection is singular at depth z = 0")
    if p.z < 0:
        raise BehindCameraError(f"point lies behind the camera (z = {p.z})")
    if not (math.isfinite(d) and d > 0):
        raise ValueError(f"plane separation must be positive, got {d}")
    slope = -d / p.z
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    u = slope * (s - p.x)
    v = slope * (t - p.y)
    if u.ndim == 0:
        return float(u), float(v)
    return u, v


def slope_of_depth(pz: float, d: float) -> float:
    """Common epipolar slope -d / pz of a point at depth pz."""
    if pz == 0:
        raise BehindCameraError("slope is singular at depth 0")
    if not (math.isfinite(d) and d > 0):
        raise ValueError(f"plane separation must be positive, got {d}")
    return -d / pz


def depth_of_slope(slope: float, d: float) -> float:
    """Exact algebraic inverse of slope_of_depth."""
    if slope == 0:
        raise BehindCameraError("zero slope corresponds to depth at infinity")
    if not (math.isfinite(d) and d > 0):
        raise ValueError(f"plane separation must be positive, got {d}")
    return -d / slope


def make_intrinsics(
    n_views: tuple = (13, 13),
    n_pixels: tuple = (321, 321),
    view_pitch: float = 1e-3,
    pixel_pitch: float = 2e-4,
    d: float = 0.1,
) -> LFIntrinsics:
    """Centered separable intrinsics for a synthetic light-field camera.

    Views are spaced ``view_pitch`` apart in s and t with the grid center at
    (0, 0); pixels are spaced ``pixel_pitch`` apart in u and v with the view
    center pixel at (0, 0).
    """
    ni, nj = int(n_views[0]), int(n_views[1])
    nk, nl = int(n_pixels[0]), int(n_pixels[1])
    ci, cj = (ni - 1) / 2.0, (nj - 1) / 2.0
    ck, cl = (nk - 1) / 2.0, (nl - 1) / 2.0
    m = np.array([
        [view_pitch, 0.0, 0.0, 0.0, -view_pitch * ci],
        [0.0, view_pitch, 0.0, 0.0, -view_pitch * cj],
        [0.0, 0.0, pixel_pitch, 0.0, -pixel_pitch * ck],
        [0.0, 0.0, 0.0, pixel_pitch, -pixel_pitch * cl],
        [0.0, 0.0, 0.0, 0.0, 1.0],
    ])
    return LFIntrinsics(m=m, d=d, ni=ni, nj=nj, nk=nk, nl=nl)


def crop_views(intr: LFIntrinsics, margin: int) -> LFIntrinsics:
    """Drop ``margin`` border views on every side of the view grid.

    Retained views keep their physical (s, t) positions: new index i' maps to
    old index i' + margin, so the homogeneous column absorbs the shift.
    """
    if margin < 0:
        raise ValueError(f"margin must be non-negative, got {margin}")
    if margin == 0:
        return intr
    ni = intr.ni - 2 * margin
    nj = intr.nj - 2 * margin
    if ni < 1 or nj < 1:
        raise IntrinsicsError(
            f"cropping {margin} views per side empties the {intr.ni}x{intr.nj} grid"
        )
    m = intr.m.copy()
    m[:, 4] = m[:, 4] + margin * m[:, 0] + margin * m[:, 1]
    return LFIntrinsics(m=m, d=intr.d, ni=ni, nj=nj, nk=intr.nk, nl=intr.nl)
