"""Pinhole camera model with two-term radial distortion.

Pixel coordinates follow the usual computer-vision convention: integer
coordinates land on pixel centres, u grows to the right, v grows downward.
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import BehindCameraError

MIN_DEPTH = 1e-12


@dataclass(frozen=True)
class Intrinsics:
    """Focal lengths and principal point in pixels; skew is fixed at zero."""

    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")

    @property
    def matrix(self) -> np.ndarray:
        return np.array([
            [self.fx, 0.0, self.cx],
            [0.0, self.fy, self.cy],
            [0.0, 0.0, 1.0],
        ])

    @property
    def inverse_matrix(self) -> np.ndarray:
        return np.array([
            [1.0 / self.fx, 0.0, -self.cx / self.fx],
            [0.0, 1.0 / self.fy, -self.cy / self.fy],
            [0.0, 0.0, 1.0],
        ])


@dataclass(frozen=True)
class Distortion:
    """Radial coefficients applied to normalized image coordinates."""

    k1: float = 0.0
    k2: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.k1) and np.isfinite(self.k2)):
            raise ValueError("distortion coefficients must be finite")


def distort_normalized(xy: np.ndarray, distortion: Distortion) -> np.ndarray:
    """Apply the radial polynomial to (N, 2) normalized coordinates."""
    xy = np.asarray(xy, dtype=float)
    rho2 = np.sum(xy * xy, axis=-1, keepdims=True)
    factor = 1.0 + distortion.k1 * rho2 + distortion.k2 * rho2 * rho2
    return xy * factor


def spherical_camera_pose(R_ep: np.ndarray, offset) -> tuple[np.ndarray, np.ndarray]:
    """World-to-camera (R, t) for a view under the fixed-centre rotation model.

    The camera-to-target rotation is ``R_ep``; the target origin sits at the
    fixed vector (offset.x, offset.y, -offset.r) in the rotated frame, so
    world points map through X_cam = R_ep^T (X - [x, y, -r]).
    """
    R_ep = np.asarray(R_ep, dtype=float)
    R = R_ep.T
    v = np.array([offset.x, offset.y, -offset.r])
    return R, -R @ v


def project_points(
    points: np.ndarray,
    R: np.ndarray,
    t: np.ndarray,
    intrinsics: Intrinsics,
    distortion: Distortion | None = None,
) -> np.ndarray:
    """Project world points (N, 3) to pixel coordinates (N, 2).

    Raises:
        BehindCameraError: any point with camera-frame depth <= 1e-12.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    cam = points @ np.asarray(R, dtype=float).T + np.asarray(t, dtype=float)
    z = cam[:, 2]
    if np.any(z <= MIN_DEPTH):
        bad = int(np.argmin(z))
        raise BehindCameraError(
            f"point {bad} has depth {z[bad]:.3e} (<= {MIN_DEPTH:.0e})"
        )
    xy = cam[:, :2] / z[:, None]
    if distortion is not None:
        xy = distort_normalized(xy, distortion)
    out = np.empty_like(xy)
    out[:, 0] = intrinsics.fx * xy[:, 0] + intrinsics.cx
    out[:, 1] = intrinsics.fy * xy[:, 1] + intrinsics.cy
    return out


def homography_for_pose(intrinsics: Intrinsics, R: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Plane-to-image homography K [r1 r2 t] for a Z=0 target plane.

    Normalized so H[2, 2] == 1 when that entry is well away from zero,
    otherwise to unit Frobenius norm.
    """
    R = np.asarray(R, dtype=float)
    H = intrinsics.matrix @ np.column_stack([R[:, 0], R[:, 1], np.asarray(t, dtype=float)])
    if abs(H[2, 2]) > 1e-12 * np.linalg.norm(H):
        return H / H[2, 2]
    return H / np.linalg.norm(H)
