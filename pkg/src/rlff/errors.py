"""Exception hierarchy shared across the package.

Everything raised on purpose derives from :class:`RlffError` so callers can
catch one base type at API boundaries. The CLI maps :class:`DataError`
subclasses to exit code 2; anything else is a bug and is allowed to surface.
"""

from __future__ import annotations

import enum


class RlffError(Exception):
    """Base class for all errors raised by this package."""


class DataError(RlffError):
    """Invalid or inconsistent input data (files, arrays, configs)."""


class IntrinsicsError(DataError):
    """Malformed light-field intrinsics (shape, singularity, bounds)."""


class BoundsError(DataError):
    """An index or coordinate falls outside the sampled light field."""


class KeypointFileError(DataError):
    """A keypoint file could not be parsed.

    Carries enough context to point the user at the offending line.
    """

    def __init__(self, path: str, line: int, message: str):
        self.path = str(path)
        self.line = line
        super().__init__(f"{path}:{line}: {message}")


class ConfigError(DataError):
    """Bad configuration value or unknown configuration key."""


class InsufficientViewsError(DataError):
    """Too few distinct views to perform the requested operation."""


class DegenerateGeometryError(RlffError):
    """The observation geometry does not constrain the model.

    Raised by the linear fit when the normal equations are rank deficient,
    for example when every observation comes from the same view.
    """


class BehindCameraError(RlffError):
    """A recovered depth is non-positive, i.e. not in front of the camera."""


class OffsetUnrecoverableError(RlffError):
    """The ray-slope matrix is singular, so lateral offsets are undefined.

    This is the depth-at-infinity limit: one of the eigenvalues of the
    slope matrix vanishes and the offset along that axis is unobservable.
    """


class RejectionReason(enum.Enum):
    """Why a candidate feature was dropped instead of fitted."""

    DIVERSITY = "diversity"
    RESIDUAL = "residual"
    ASYMMETRY = "asymmetry"
    GEOMETRY = "geometry"


class FeatureRejected(RlffError):
    """A candidate track failed one of the acceptance gates.

    Not a programming error: the pipeline catches this and records the
    track in its rejection report.
    """

    def __init__(self, reason: RejectionReason, detail: str = ""):
        self.reason = reason
        self.detail = detail
        msg = reason.value if not detail else f"{reason.value}: {detail}"
        super().__init__(msg)
