"""Fitting the generalized point-plane model to light-field observations.

Each observation of a feature contributes two linear equations

    u = h1*s + h2*t + x1
    v = h3*s + h4*t + x2

in the six unknowns (h1..h4, x1, x2). The pipeline is:

  1. view_diversity      gate out near-collinear view sets (R-squared test),
  2. fit_linear_system   least squares for Hhat = [[h1,h2],[h3,h4]], Xhat,
  3. symmetrize          Hs = (Hhat + Hhat^T) / 2,
  4. decompose           eigendecomposition of Hs -> depths pz1 <= pz2 and
                         focal-axis angles theta1, theta2,
  5. recover_offsets     [px, py]^T = -HR^{-1} Xhat with HR = V S V^{-1},
                         which is less noise-sensitive than using Hhat,
  6. classify            Lambertian vs refracted by relative depth gap.

The result is the six-parameter feature [px, py, pz1, pz2, theta1, theta2]
plus diagnostics (fit residual, asymmetry of Hhat, view diversity).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .config import PipelineConfig
from .errors import (
    BehindCameraError,
    DataError,
    DegenerateGeometryError,
    FeatureRejected,
    InsufficientViewsError,
    OffsetUnrecoverableError,
    RejectionReason,
)
from .geometry import LFIntrinsics, Point3D
from .lens import ObservationSet

__all__ = [
    "FitMatrices",
    "Rlff",
    "FitDiagnostics",
    "FeatureClass",
    "CharacteristicPoints",
    "Decomposition",
    "view_diversity",
    "fit_linear_system",
    "symmetrize",
    "decompose",
    "reconstruct_hr",
    "recover_offsets",
    "asymmetry_residual",
    "extract_rlff",
    "classify",
    "interval_of_sturm",
]

# Relative eigenvalue gap below which the lens is treated as spherical and
# the (undefined) eigenbasis replaced by the identity.
_EIG_TIE_REL = 1e-9

# |det HR| below this times ||HR||^2 counts as singular (depth at infinity).
_SINGULAR_REL = 1e-12


@dataclass(frozen=True)
class FitMatrices:
    """Matrices produced while fitting one observation set.

    Attributes:
        hhat: (2, 2) unconstrained least-squares slope matrix.
        xhat: (2,) offset vector.
        hs: symmetric part (hhat + hhat^T) / 2, filled automatically.
        hr: eigendecomposition reconstruction V S V^{-1} of hs; None until
            the decomposition step has run.
    """

    hhat: np.ndarray
    xhat: np.ndarray
    hs: np.ndarray = None
    hr: np.ndarray | None = None

    def __post_init__(self):
        hhat = np.asarray(self.hhat, dtype=float)
        xhat = np.asarray(self.xhat, dtype=float).reshape(2)
        if hhat.shape != (2, 2) or not np.isfinite(hhat).all():
            raise DataError(f"hhat must be a finite 2x2 matrix, got {hhat!r}")
        if not np.isfinite(xhat).all():
            raise DataError(f"xhat must be finite, got {xhat!r}")
        hs = 0.5 * (hhat + hhat.T)
        if self.hs is not None and not np.array_equal(np.asarray(self.hs, float), hs):
            raise DataError("hs must equal (hhat + hhat^T) / 2")
        for arr in (hhat, xhat, hs):
            arr.setflags(write=False)
        object.__setattr__(self, "hhat", hhat)
        object.__setattr__(self, "xhat", xhat)
        object.__setattr__(self, "hs", hs)
        if self.hr is not None:
            hr = np.asarray(self.hr, dtype=float)
            if hr.shape != (2, 2) or not np.isfinite(hr).all():
                raise DataError("hr must be a finite 2x2 matrix")
            hr = hr.copy()
            hr.setflags(write=False)
            object.__setattr__(self, "hr", hr)


@dataclass(frozen=True)
class Rlff:
    """Estimated feature: lateral offsets, two depths, two axis angles.

    Invariants: pz1 <= pz2 (depth-sorted labels), theta in [0, pi).
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
            raise DataError(f"feature parameters must be finite, got {vals}")
        if self.pz1 > self.pz2:
            raise DataError(f"depths must satisfy pz1 <= pz2, got {self.pz1} > {self.pz2}")
        if self.pz1 <= 0:
            raise DataError(f"depths must be positive, got pz1 = {self.pz1}")
        for name in ("theta1", "theta2"):
            th = getattr(self, name)
            if not (0.0 <= th < math.pi):
                raise DataError(f"{name} must lie in [0, pi), got {th}")

    @property
    def interval_length(self) -> float:
        return self.pz2 - self.pz1

    @property
    def lateral(self) -> np.ndarray:
        return np.array([self.px, self.py])


@dataclass(frozen=True)
class FitDiagnostics:
    """Quality indicators for one fitted feature.

    Attributes:
        rms_residual: root-mean-square of the per-observation 2D residuals,
            meters in ray space.
        asymmetry: Frobenius norm of (hhat - hr); grows with noise and with
            violations of the orthogonal-axes model.
        r_squared: view-collinearity coefficient in [0, 1] (1 = collinear).
        n_views: observations used in the final fit.
        interval_length: pz2 - pz1, meters.
    """

    rms_residual: float
    asymmetry: float
    r_squared: float
    n_views: int
    interval_length: float

    def __post_init__(self):
        if self.rms_residual < 0 or self.asymmetry < 0:
            raise DataError("residuals cannot be negative")
        if not (0.0 <= self.r_squared <= 1.0):
            raise DataError(f"r_squared must lie in [0, 1], got {self.r_squared}")
        if self.n_views < 1:
            raise DataError("n_views must be positive")
        if self.interval_length < 0:
            raise DataError("interval length cannot be negative")


class FeatureClass(enum.Enum):
    LAMBERTIAN = "lambertian"
    REFRACTED = "refracted"


@dataclass(frozen=True)
class CharacteristicPoints:
    """The 3D points a feature exports: interval endpoints, or its midpoint.

    A refracted feature contributes both interval endpoints c1 (front) and
    c2 (back); a Lambertian feature collapses to the single midpoint, stored
    in both fields. ``descriptor``, ``scale`` and ``orientation`` carry
    appearance metadata from the source keypoint when available.
    """

    feature_class: FeatureClass
    c1: Point3D
    c2: Point3D
    feature_id: int = 0
    descriptor: np.ndarray | None = None
    scale: float = 1.0
    orientation: float = 0.0

    def __post_init__(self):
        if self.feature_class is FeatureClass.REFRACTED:
            if not self.c1.z < self.c2.z:
                raise DataError(
                    f"refracted points must satisfy c1.z < c2.z, got "
                    f"{self.c1.z} vs {self.c2.z}"
                )
        else:
            if self.c1 != self.c2:
                raise DataError("a Lambertian feature must carry one collapsed point")
        if self.descriptor is not None:
            desc = np.asarray(self.descriptor, dtype=float)
            if desc.ndim != 1 or not np.isfinite(desc).all():
                raise DataError("descriptor must be a finite 1D vector")
            desc = desc.copy()
            desc.setflags(write=False)
            object.__setattr__(self, "descriptor", desc)

    @property
    def points(self) -> list:
        """Distinct points to emit: [c1] when Lambertian, else [c1, c2]."""
        if self.feature_class is FeatureClass.LAMBERTIAN:
            return [self.c1]
        return [self.c1, self.c2]


@dataclass(frozen=True)
class Decomposition:
    """Eigendecomposition of the symmetrized slope matrix.

    ``v`` holds unit eigenvectors as columns (identity for a repeated
    eigenvalue), ``s`` the eigenvalues ordered so that column k corresponds
    to depth pzk; pz1 <= pz2.
    """

    v: np.ndarray
    s: np.ndarray
    pz1: float
    pz2: float
    theta1: float
    theta2: float


def view_diversity(obs: ObservationSet) -> float:
    """Collinearity coefficient of the observing views' (s, t) positions.

    Fits a total-least-squares line to the view positions and returns its
    coefficient of determination: with l1 >= l2 the eigenvalues of the
    (s, t) scatter covariance, R^2 = 1 - l2 / l1. Exactly 1 for collinear
    views (including vertical lines, which a plain regression of t on s
    cannot represent), 0 for direction-balanced sets such as the full grid.
    Callers reject features with R^2 above the configured threshold since
    near-collinear baselines cannot constrain the slope matrix.

    Raises:
        InsufficientViewsError: fewer than 3 observations.
    """
    if len(obs) < 3:
        raise InsufficientViewsError(
            f"view diversity needs >= 3 observations, got {len(obs)}"
        )
    st = obs.rays[:, :2]
    centered = st - st.mean(axis=0)
    cov = centered.T @ centered
    evals = np.linalg.eigvalsh(cov)
    largest = float(evals[1])
    smallest = max(float(evals[0]), 0.0)
    if largest <= 0.0:
        return 1.0
    return 1.0 - smallest / largest


def fit_linear_system(
    obs: ObservationSet, symmetric: bool = False
) -> tuple[FitMatrices, float]:
    """Least-squares fit of the slope matrix and offset to one feature.

    Solves min ||uv - Hhat @ st - Xhat||^2 over all observations via
    orthogonal decomposition of the stacked design matrix (np.linalg.lstsq).

    Args:
        obs: observation set with >= 4 observations, non-collinear views.
        symmetric: constrain h2 == h3 during the fit instead of
            symmetrizing afterwards. Off by default; the unconstrained fit
            is what the asymmetry diagnostic is defined against.

    Returns:
        (FitMatrices with hhat/xhat/hs, rms_residual) where rms_residual is
        sqrt(mean ||2D residual||^2) in meters.

    Raises:
        InsufficientViewsError: fewer than 4 observations.
        DegenerateGeometryError: rank-deficient design (collinear views).
    """
    n = len(obs)
    if n < 4:
        raise InsufficientViewsError(f"fit needs >= 4 observations, got {n}")
    st = obs.rays[:, :2]
    uv = obs.rays[:, 2:]

    if symmetric:
        # Stacked 2N x 5 system in (h1, h2, h4, x1, x2) with h3 = h2 shared.
        a = np.zeros((2 * n, 5))
        a[0::2, 0] = st[:, 0]
        a[0::2, 1] = st[:, 1]
        a[0::2, 3] = 1.0
        a[1::2, 1] = st[:, 0]
        a[1::2, 2] = st[:, 1]
        a[1::2, 4] = 1.0
        b = uv.reshape(-1)
        if np.linalg.matrix_rank(a) < 5:
            raise DegenerateGeometryError(
                "observation geometry does not constrain the symmetric model"
            )
        coef, *_ = np.linalg.lstsq(a, b, rcond=None)
        hhat = np.array([[coef[0], coef[1]], [coef[1], coef[2]]])
        xhat = coef[3:5]
    else:
        # u and v rows share the design [s, t, 1]; solve both at once.
        a = np.column_stack([st, np.ones(n)])
        if np.linalg.matrix_rank(a) < 3:
            raise DegenerateGeometryError(
                "collinear or repeated views: design matrix is rank deficient"
            )
        coef, *_ = np.linalg.lstsq(a, uv, rcond=None)
        hhat = coef[:2].T
        xhat = coef[2]

    residual = uv - (st @ hhat.T + xhat)
    rms = float(np.sqrt(np.mean(np.sum(residual**2, axis=1))))
    return FitMatrices(hhat=hhat, xhat=xhat), rms


def symmetrize(hhat: np.ndarray) -> np.ndarray:
    """Symmetric part (hhat + hhat^T) / 2; idempotent linear projection."""
    hhat = np.asarray(hhat, dtype=float)
    if hhat.shape != (2, 2):
        raise DataError(f"expected a 2x2 matrix, got shape {hhat.shape}")
    return 0.5 * (hhat + hhat.T)


def decompose(hs: np.ndarray, d: float) -> Decomposition:
    """Split a symmetric slope matrix into focal depths and axes.

    Eigenvalues s1 <= s2 < 0 map to depths pzk = -d / sk; after re-sorting
    by depth, pz1 <= pz2. Angles come from the eigenvector columns,
    normalized to [0, pi). A repeated eigenvalue (relative gap < 1e-9)
    leaves the eigenbasis undefined; the identity is used and both angles
    are 0.

    Raises:
        DataError: hs is not symmetric.
        BehindCameraError: an eigenvalue is non-negative (the apparent depth
            would lie at or behind the camera); callers treat the feature
            as an outlier.
    """
    hs = np.asarray(hs, dtype=float)
    if hs.shape != (2, 2) or not np.isfinite(hs).all():
        raise DataError(f"expected a finite 2x2 matrix, got {hs!r}")
    scale = float(np.abs(hs).max())
    if abs(hs[0, 1] - hs[1, 0]) > 1e-9 * max(scale, 1e-300):
        raise DataError("decompose requires a symmetric matrix; run symmetrize first")
    if not (math.isfinite(d) and d > 0):
        raise ValueError(f"plane separation must be positive, got {d}")

    evals, evecs = np.linalg.eigh(0.5 * (hs + hs.T))
    if evals[1] >= 0.0:
        raise BehindCameraError(
            f"slope eigenvalue {evals[1]} >= 0 puts a focal depth at or "
            "behind the camera"
        )
    # eigh returns ascending eigenvalues; the most negative slope is the
    # nearest depth, so this order is already depth-ascending.
    if abs(evals[0] - evals[1]) < _EIG_TIE_REL * abs(evals[0]):
        evecs = np.eye(2)
        thetas = [0.0, 0.0]
    else:
        thetas = [
            math.atan2(evecs[1, k], evecs[0, k]) % math.pi for k in (0, 1)
        ]
    depths = -d / evals
    order = np.argsort(depths, kind="stable")
    evals = evals[order]
    evecs = evecs[:, order]
    thetas = [thetas[order[0]], thetas[order[1]]]
    depths = depths[order]
    return Decomposition(
        v=evecs,
        s=evals,
        pz1=float(depths[0]),
        pz2=float(depths[1]),
        theta1=thetas[0],
        theta2=thetas[1],
    )


def reconstruct_hr(dec: Decomposition) -> np.ndarray:
    """Rebuild the slope matrix V S V^{-1} from its decomposition."""
    return dec.v @ np.diag(dec.s) @ np.linalg.inv(dec.v)


def recover_offsets(hr: np.ndarray, xhat: np.ndarray) -> tuple[float, float]:
    """Lateral position from the offset vector: [px, py]^T = -hr^{-1} xhat.

    Using the reconstructed hr rather than the raw fit hhat suppresses the
    skew-noise component and improves accuracy under observation noise.

    Raises:
        OffsetUnrecoverableError: hr is singular (an eigenvalue is ~0, i.e.
            a focal depth at infinity), leaving the offset unobservable.
    """
    hr = np.asarray(hr, dtype=float)
    xhat = np.asarray(xhat, dtype=float).reshape(2)
    det = float(np.linalg.det(hr))
    norm2 = float(np.sum(hr * hr))
    if abs(det) <= _SINGULAR_REL * max(norm2, 1e-300):
        raise OffsetUnrecoverableError(
            "slope matrix is singular: a focal depth lies at infinity"
        )
    try:
        p = np.linalg.solve(hr, -xhat)
    except np.linalg.LinAlgError as exc:
        raise OffsetUnrecoverableError(str(exc)) from exc
    return float(p[0]), float(p[1])


def asymmetry_residual(hhat: np.ndarray, hr: np.ndarray) -> float:
    """Frobenius norm of (hhat - hr), the outlier indicator.

    Zero for noiseless orthogonal-axes features; grows with observation
    noise and with content the symmetric model cannot represent.
    """
    hhat = np.asarray(hhat, dtype=float)
    hr = np.asarray(hr, dtype=float)
    return float(np.linalg.norm(hhat - hr, ord="fro"))


def classify(rlff: Rlff, eps_rel: float) -> FeatureClass:
    """Refracted iff the relative depth gap (pz2 - pz1) / pz1 exceeds eps_rel."""
    if eps_rel < 0:
        raise DataError(f"eps_rel must be >= 0, got {eps_rel}")
    gap = (rlff.pz2 - rlff.pz1) / rlff.pz1
    return FeatureClass.REFRACTED if gap > eps_rel else FeatureClass.LAMBERTIAN


def interval_of_sturm(
    rlff: Rlff,
    eps_rel: float = 0.05,
    feature_id: int = 0,
    descriptor: np.ndarray | None = None,
    scale: float = 1.0,
    orientation: float = 0.0,
) -> CharacteristicPoints:
    """Characteristic 3D points of a feature.

    Refracted features yield the interval endpoints c1 = (px, py, pz1) and
    c2 = (px, py, pz2); features classified Lambertian at ``eps_rel``
    collapse to the single depth midpoint.
    """
    cls_ = classify(rlff, eps_rel)
    if cls_ is FeatureClass.LAMBERTIAN:
        mid = Point3D(rlff.px, rlff.py, 0.5 * (rlff.pz1 + rlff.pz2))
        c1 = c2 = mid
    else:
        c1 = Point3D(rlff.px, rlff.py, rlff.pz1)
        c2 = Point3D(rlff.px, rlff.py, rlff.pz2)
    return CharacteristicPoints(
        feature_class=cls_,
        c1=c1,
        c2=c2,
        feature_id=feature_id,
        descriptor=descriptor,
        scale=scale,
        orientation=orientation,
    )


def _fit_with_trim(
    obs: ObservationSet, cfg: PipelineConfig, max_residual_m: float
) -> tuple[ObservationSet, FitMatrices, float]:
    """Fit, optionally dropping up to cfg.trim_worst worst observations."""
    fit, rms = fit_linear_system(obs, symmetric=cfg.symmetric_fit)
    trims_left = cfg.trim_worst
    floor = max(cfg.min_views, 4)
    while rms > max_residual_m and trims_left > 0 and len(obs) - 1 >= floor:
        residual = obs.rays[:, 2:] - (obs.rays[:, :2] @ fit.hhat.T + fit.xhat)
        worst = int(np.argmax(np.sum(residual**2, axis=1)))
        mask = np.ones(len(obs), dtype=bool)
        mask[worst] = False
        obs = obs.subset(mask)
        fit, rms = fit_linear_system(obs, symmetric=cfg.symmetric_fit)
        trims_left -= 1
    return obs, fit, rms


def extract_rlff(
    obs: ObservationSet, intr: LFIntrinsics, cfg: PipelineConfig | None = None
) -> tuple[Rlff, FitDiagnostics]:
    """Run the full estimation pipeline on one observation set.

    Gates, in order: minimum views and view diversity (reason "diversity"),
    fit residual against cfg.max_residual in pixel-pitch units (reason
    "residual", after the optional worst-view trim), slope-matrix asymmetry
    (reason "asymmetry"); degenerate design matrices, behind-camera depths
    and singular slope matrices reject with reason "geometry".

    Returns:
        (Rlff, FitDiagnostics) on success.

    Raises:
        FeatureRejected: the set failed a gate; ``reason`` states which.
    """
    if cfg is None:
        cfg = PipelineConfig()
    if len(obs) < cfg.min_views:
        raise FeatureRejected(
            RejectionReason.DIVERSITY,
            f"{len(obs)} observations < min_views = {cfg.min_views}",
        )
    try:
        r2 = view_diversity(obs)
    except InsufficientViewsError as exc:
        raise FeatureRejected(RejectionReason.DIVERSITY, str(exc)) from exc
    if r2 > cfg.r2_max:
        raise FeatureRejected(
            RejectionReason.DIVERSITY,
            f"view R^2 = {r2:.4f} > {cfg.r2_max} (near-collinear views)",
        )

    max_residual_m = cfg.max_residual * intr.pixel_pitch
    try:
        obs, fit, rms = _fit_with_trim(obs, cfg, max_residual_m)
    except (DegenerateGeometryError, InsufficientViewsError) as exc:
        raise FeatureRejected(RejectionReason.GEOMETRY, str(exc)) from exc

    if cfg.trim_worst > 0:
        # The trimmed subset may have lost its spread; re-check the gate.
        r2 = view_diversity(obs)
        if r2 > cfg.r2_max:
            raise FeatureRejected(
                RejectionReason.DIVERSITY,
                f"view R^2 = {r2:.4f} > {cfg.r2_max} after trimming",
            )
    if rms > max_residual_m:
        raise FeatureRejected(
            RejectionReason.RESIDUAL,
            f"rms residual {rms:.3e} m > {max_residual_m:.3e} m "
            f"({cfg.max_residual} pixel pitches)",
        )

    try:
        dec = decompose(fit.hs, intr.d)
    except BehindCameraError as exc:
        raise FeatureRejected(RejectionReason.GEOMETRY, str(exc)) from exc
    hr = reconstruct_hr(dec)
    asym = asymmetry_residual(fit.hhat, hr)
    if asym > cfg.max_asymmetry:
        raise FeatureRejected(
            RejectionReason.ASYMMETRY,
            f"asymmetry {asym:.3e} > {cfg.max_asymmetry:.3e}",
        )
    try:
        px, py = recover_offsets(hr, fit.xhat)
    except OffsetUnrecoverableError as exc:
        raise FeatureRejected(RejectionReason.GEOMETRY, str(exc)) from exc

    rlff = Rlff(
        px=px, py=py,
        pz1=dec.pz1, pz2=dec.pz2,
        theta1=dec.theta1, theta2=dec.theta2,
    )
    diag = FitDiagnostics(
        rms_residual=rms,
        asymmetry=asym,
        r_squared=r2,
        n_views=len(obs),
        interval_length=rlff.interval_length,
    )
    return rlff, diag
