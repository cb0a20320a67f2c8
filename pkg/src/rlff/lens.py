"""Forward model of a point imaged through a thin astigmatic lens.

A curved refractive object acts on a background point like an astigmatic
lens: instead of one focal point the transmitted pencil collapses to two
focal lines at depths pz1 and pz2, oriented along two axes in the s,t
plane. The relative plane coordinates of the pencil generalize the
Lambertian projection to

    [u, v]^T = H ([s, t]^T - [px, py]^T),    H = V S V^{-1},

with S = diag(-d / pz1, -d / pz2) and V = [V1, V2] holding the axes as
columns. For pz1 = pz2 this degenerates to the Lambertian case.

This module generates synthetic observation sets with known ground truth;
it is the reference model the estimator is tested against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError, DegenerateGeometryError
from .geometry import (
    DiscreteSample,
    LFIntrinsics,
    Line3D,
    Point3D,
    Ray4D,
)

__all__ = [
    "AstigmaticLensModel",
    "ObservationSet",
    "FocalLines",
    "h_from_model",
    "synth_observations",
    "focal_lines",
]

# Axes closer than ~0.0006 deg apart cannot form a meaningful lens basis.
_MIN_AXIS_SINE = 1e-8


def _axis(theta: float) -> np.ndarray:
    return np.array([math.cos(theta), math.sin(theta)])


@dataclass(frozen=True)
class AstigmaticLensModel:
    """Ground-truth astigmatic observation of a background point.

    Attributes:
        px, py: lateral position, meters.
        pz1, pz2: apparent depths of the two focal lines, meters, > 0.
        theta1, theta2: focal-axis angles, radians; stored modulo pi since
            an axis is unoriented. V1, V2 are the corresponding unit vectors.

    The axes must be linearly independent when pz1 != pz2; they may be
    non-orthogonal (a general astigmatic lens), though only orthogonal-axes
    models are recoverable by the symmetrizing estimator.
    """

    px: float
    py: float
    pz1: float
    pz2: float
    theta1: float
    theta2: float

    def __post_init__(self):
        vals = (self.px, self.py, self.pz1, self.pz2, self.theta1, self.theta2)
        if not all(math.isfinite(v) for v in vals):
            raise DataError(f"model parameters must be finite, got {vals}")
        if self.pz1 <= 0 or self.pz2 <= 0:
            raise DataError(
                f"focal depths must be positive, got pz1={self.pz1}, pz2={self.pz2}"
            )
        object.__setattr__(self, "theta1", self.theta1 % math.pi)
        object.__setattr__(self, "theta2", self.theta2 % math.pi)
        if self.pz1 != self.pz2:
            if abs(math.sin(self.theta1 - self.theta2)) < _MIN_AXIS_SINE:
                raise DegenerateGeometryError(
                    "focal axes are (nearly) parallel; distinct depths require "
                    "linearly independent axes"
                )

    @property
    def v1(self) -> np.ndarray:
        return _axis(self.theta1)

    @property
    def v2(self) -> np.ndarray:
        return _axis(self.theta2)

    @property
    def lateral(self) -> np.ndarray:
        return np.array([self.px, self.py])

    @property
    def is_spherical(self) -> bool:
        """True for equal focal depths (indistinguishable from Lambertian)."""
        return self.pz1 == self.pz2

    @classmethod
    def from_axes(
        cls, px: float, py: float, pz1: float, pz2: float,
        v1, v2,
    ) -> "AstigmaticLensModel":
        """Build a model from explicit axis vectors instead of angles."""
        v1 = np.asarray(v1, dtype=float)
        v2 = np.asarray(v2, dtype=float)
        for v in (v1, v2):
            if v.shape != (2,) or not np.isfinite(v).all() or np.linalg.norm(v) == 0:
                raise DataError("axes must be finite nonzero 2-vectors")
        return cls(
            px=px, py=py, pz1=pz1, pz2=pz2,
            theta1=math.atan2(v1[1], v1[0]) % math.pi,
            theta2=math.atan2(v2[1], v2[0]) % math.pi,
        )

    def to_dict(self) -> dict:
        return {
            "Px": self.px, "Py": self.py,
            "Pz1": self.pz1, "Pz2": self.pz2,
            "theta1": self.theta1, "theta2": self.theta2,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "AstigmaticLensModel":
        required = ("Px", "Py", "Pz1", "Pz2", "theta1", "theta2")
        missing = [k for k in required if k not in data]
        if missing:
            raise DataError(f"model record missing keys {missing}")
        unknown = [k for k in data if k not in required and k != "id"]
        if unknown:
            raise DataError(f"model record has unknown keys {unknown}")
        try:
            return cls(
                px=float(data["Px"]), py=float(data["Py"]),
                pz1=float(data["Pz1"]), pz2=float(data["Pz2"]),
                theta1=float(data["theta1"]), theta2=float(data["theta2"]),
            )
        except (TypeError, ValueError) as exc:
            raise DataError(f"bad model record: {exc}") from exc


@dataclass(frozen=True)
class ObservationSet:
    """Parallel observations of one feature across light-field views.

    Attributes:
        feature_id: identifier carried through fitting and export.
        views: (N, 2) int array of view indices (i, j), no duplicates.
        rays: (N, 4) float array of decoded rays [s, t, u, v].
        pixels: optional (N, 2) float array of sub-pixel positions (k, l),
            parallel to ``views``; None when observations were supplied
            directly in ray space.
    """

    feature_id: int
    views: np.ndarray
    rays: np.ndarray
    pixels: np.ndarray | None = None

    def __post_init__(self):
        views = np.asarray(self.views, dtype=int)
        rays = np.asarray(self.rays, dtype=float)
        if views.ndim != 2 or views.shape[1] != 2:
            raise DataError(f"views must be (N, 2), got {views.shape}")
        if rays.shape != (len(views), 4):
            raise DataError(
                f"rays must be ({len(views)}, 4) parallel to views, got {rays.shape}"
            )
        if len(views) < 1:
            raise DataError("observation set needs at least one observation")
        if not np.isfinite(rays).all():
            raise DataError("rays must be finite")
        if len(np.unique(views, axis=0)) != len(views):
            raise DataError("duplicate (i, j) view in observation set")
        views = views.copy()
        rays = rays.copy()
        views.setflags(write=False)
        rays.setflags(write=False)
        object.__setattr__(self, "views", views)
        object.__setattr__(self, "rays", rays)
        if self.pixels is not None:
            pixels = np.asarray(self.pixels, dtype=float)
            if pixels.shape != (len(views), 2):
                raise DataError(
                    f"pixels must be ({len(views)}, 2) parallel to views, "
                    f"got {pixels.shape}"
                )
            pixels = pixels.copy()
            pixels.setflags(write=False)
            object.__setattr__(self, "pixels", pixels)

    def __len__(self) -> int:
        return len(self.views)

    @property
    def n_obs(self) -> int:
        return len(self.views)

    def ray(self, idx: int) -> Ray4D:
        s, t, u, v = self.rays[idx]
        return Ray4D(float(s), float(t), float(u), float(v))

    def sample(self, idx: int) -> DiscreteSample:
        if self.pixels is None:
            raise DataError("observation set carries no pixel positions")
        i, j = self.views[idx]
        k, l = self.pixels[idx]
        return DiscreteSample(int(i), int(j), float(k), float(l))

    def subset(self, mask: np.ndarray) -> "ObservationSet":
        mask = np.asarray(mask, dtype=bool)
        return ObservationSet(
            feature_id=self.feature_id,
            views=self.views[mask],
            rays=self.rays[mask],
            pixels=None if self.pixels is None else self.pixels[mask],
        )

    @classmethod
    def from_items(
        cls, feature_id: int, samples: list, rays: list
    ) -> "ObservationSet":
        """Build from parallel lists of DiscreteSample and Ray4D."""
        if len(samples) != len(rays):
            raise DataError("samples and rays must be parallel lists")
        views = np.array([[n.i, n.j] for n in samples], dtype=int).reshape(-1, 2)
        pixels = np.array([[n.k, n.l] for n in samples], dtype=float).reshape(-1, 2)
        ray_arr = np.array([r.as_array() for r in rays], dtype=float).reshape(-1, 4)
        return cls(feature_id=feature_id, views=views, rays=ray_arr, pixels=pixels)


def h_from_model(m: AstigmaticLensModel, d: float) -> np.ndarray:
    """Ray-slope matrix H = V S V^{-1} of an astigmatic model.

    S = diag(-d / pz1, -d / pz2); V holds the focal axes V1, V2 as columns.
    H is symmetric whenever the axes are orthogonal.

    Raises:
        DegenerateGeometryError: the axes do not span the plane.
    """
    if not (math.isfinite(d) and d > 0):
        raise ValueError(f"plane separation must be positive, got {d}")
    vmat = np.column_stack([m.v1, m.v2])
    det = float(np.linalg.det(vmat))
    if abs(det) < _MIN_AXIS_SINE:
        raise DegenerateGeometryError("focal axes are (nearly) parallel")
    s = np.diag([-d / m.pz1, -d / m.pz2])
    return vmat @ s @ np.linalg.inv(vmat)


def synth_observations(
    m: AstigmaticLensModel,
    intr: LFIntrinsics,
    noise_sigma: float = 0.0,
    seed=None,
    feature_id: int = 0,
) -> ObservationSet:
    """Synthesize one observation per view of the grid.

    For each view's (s, t) the noiseless relative coordinates are
    [u, v]^T = H [s, t]^T + X with X = -H [px, py]^T. Gaussian noise of
    standard deviation ``noise_sigma`` (meters, ray space) is added to u and
    v only; pixel positions are derived from the noisy rays so stored
    samples and rays stay consistent.

    Args:
        m: ground-truth model.
        intr: separable light-field intrinsics (views must own their (s, t)).
        noise_sigma: ray-space noise std in meters, >= 0. Multiply a
            pixel-unit sigma by ``intr.pixel_pitch`` to convert.
        seed: int seed or np.random.Generator; ignored when noise_sigma == 0.
        feature_id: id stamped on the returned set.

    Returns:
        ObservationSet covering all ni * nj views, deterministic given seed.
    """
    if noise_sigma < 0 or not math.isfinite(noise_sigma):
        raise DataError(f"noise sigma must be finite and >= 0, got {noise_sigma}")
    intr.require_separable()
    h = h_from_model(m, intr.d)

    ii, jj = np.meshgrid(np.arange(intr.ni), np.arange(intr.nj), indexing="ij")
    ii = ii.reshape(-1)
    jj = jj.reshape(-1)
    s, t = intr.view_st(ii, jj)
    st = np.column_stack([s, t])

    uv = (st - m.lateral) @ h.T
    if noise_sigma > 0:
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        uv = uv + rng.normal(0.0, noise_sigma, size=uv.shape)

    k, l = intr.pixel_for_view_ray(ii, jj, uv[:, 0], uv[:, 1])
    return ObservationSet(
        feature_id=feature_id,
        views=np.column_stack([ii, jj]),
        rays=np.column_stack([st, uv]),
        pixels=np.column_stack([k, l]),
    )


@dataclass(frozen=True)
class FocalLines:
    """The two focal lines of an astigmatic pencil and its connecting segment.

    ``line1`` lies at depth pz1 and ``line2`` at pz2. Every ray of the
    noiseless pencil meets both lines. Note the pairing of directions: the
    pencil collapses at depth pz1 along the *other* axis V2 (the V1
    component of every ray's lateral offset vanishes there), so line1 runs
    along V2 and line2 along V1.

    The segment from c1 = (px, py, pz1) to c2 = (px, py, pz2) is the
    shortest connector of the two lines; its length is zero for a spherical
    (Lambertian-equivalent) model.
    """

    line1: Line3D
    line2: Line3D
    c1: Point3D
    c2: Point3D

    @property
    def interval_length(self) -> float:
        return abs(self.c2.z - self.c1.z)


def focal_lines(m: AstigmaticLensModel) -> FocalLines:
    """Focal lines and interval endpoints of a model (see FocalLines)."""
    c1 = Point3D(m.px, m.py, m.pz1)
    c2 = Point3D(m.px, m.py, m.pz2)
    dir1 = np.array([m.v2[0], m.v2[1], 0.0])
    dir2 = np.array([m.v1[0], m.v1[1], 0.0])
    return FocalLines(
        line1=Line3D(point=c1.as_array(), direction=dir1),
        line2=Line3D(point=c2.as_array(), direction=dir2),
        c1=c1,
        c2=c2,
    )
