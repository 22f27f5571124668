"""Plane-to-image homography estimation via normalized DLT.

Hartley normalization (translate each point set to its centroid, scale to
RMS distance sqrt(2)) is always applied; at the focal lengths this toolkit
targets, the unnormalized system is too ill-conditioned to trust.
"""

import numpy as np

from .exceptions import (
    DegenerateConfigurationError,
    InsufficientDataError,
    PointAtInfinityError,
)
from .validation import check_image_points, check_model_points, unpack_view

_COLLINEAR_RTOL = 1e-9
_RANK_TOL = 1e-12


def _normalizing_transform(pts: np.ndarray) -> np.ndarray:
    """Similarity transform mapping pts to zero centroid and RMS radius sqrt(2)."""
    centroid = pts.mean(axis=0)
    rms = np.sqrt(np.mean(np.sum((pts - centroid) ** 2, axis=1)))
    s = np.sqrt(2.0) / rms if rms > 1e-12 else 1.0
    return np.array([
        [s, 0.0, -s * centroid[0]],
        [0.0, s, -s * centroid[1]],
        [0.0, 0.0, 1.0],
    ])


def _is_collinear(pts: np.ndarray) -> bool:
    centered = pts - pts.mean(axis=0)
    sv = np.linalg.svd(centered, compute_uv=False)
    return sv[1] <= _COLLINEAR_RTOL * max(sv[0], 1e-300)


def estimate_homography(view) -> np.ndarray:
    """Estimate the 3x3 homography mapping target-plane (X, Y) to pixels.

    Args:
        view: one view's correspondences; either a (image_points, model_points)
            pair of arrays or a sequence of Correspondence objects.

    Returns:
        3x3 array, scaled so H[2, 2] == 1 (unit Frobenius norm if that entry
        vanishes).

    Raises:
        InsufficientDataError: fewer than 4 correspondences.
        DegenerateConfigurationError: all model or all image points collinear,
            or the solution is rank deficient.
    """
    image, model = unpack_view(view)
    if len(image) < 4:
        raise InsufficientDataError(f"homography needs >= 4 point pairs, got {len(image)}")
    model_xy = model[:, :2]
    if _is_collinear(model_xy):
        raise DegenerateConfigurationError("model points are collinear")
    if _is_collinear(image):
        raise DegenerateConfigurationError("image points are collinear")

    Tm = _normalizing_transform(model_xy)
    Ti = _normalizing_transform(image)
    mn = model_xy @ Tm[:2, :2].T + Tm[:2, 2]
    im = image @ Ti[:2, :2].T + Ti[:2, 2]

    n = len(image)
    A = np.zeros((2 * n, 9))
    X, Y = mn[:, 0], mn[:, 1]
    u, v = im[:, 0], im[:, 1]
    A[0::2, 0] = -X
    A[0::2, 1] = -Y
    A[0::2, 2] = -1.0
    A[0::2, 6] = u * X
    A[0::2, 7] = u * Y
    A[0::2, 8] = u
    A[1::2, 3] = -X
    A[1::2, 4] = -Y
    A[1::2, 5] = -1.0
    A[1::2, 6] = v * X
    A[1::2, 7] = v * Y
    A[1::2, 8] = v

    _, _, Vt = np.linalg.svd(A)
    Hn = Vt[-1].reshape(3, 3)
    H = np.linalg.inv(Ti) @ Hn @ Tm
    H = H / np.linalg.norm(H)
    if abs(np.linalg.det(H)) <= _RANK_TOL:
        raise DegenerateConfigurationError("estimated homography is rank deficient")
    if abs(H[2, 2]) > 1e-12:
        H = H / H[2, 2]
    return H


def apply_homography(H: np.ndarray, points) -> np.ndarray:
    """Map target-plane points (N, 2) or a single (2,) point through H.

    Raises:
        PointAtInfinityError: the homogeneous scale of any output is below 1e-15.
    """
    pts = np.asarray(points, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    if pts.shape[1] == 3:
        pts = check_model_points(pts)[:, :2]
    else:
        pts = check_image_points(pts, name="points")
    h = pts @ np.asarray(H, dtype=float)[:, :2].T + np.asarray(H, dtype=float)[:, 2]
    w = h[:, 2]
    if np.any(np.abs(w) < 1e-15):
        raise PointAtInfinityError("point maps to infinity (homogeneous scale < 1e-15)")
    out = h[:, :2] / w[:, None]
    return out[0] if single else out


def homography_to_list(H: np.ndarray) -> list[float]:
    """Row-major 9-element list for JSON serialization."""
    return [float(x) for x in np.asarray(H, dtype=float).reshape(9)]


def homography_from_list(values) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.shape != (9,):
        raise ValueError(f"expected 9 elements, got shape {arr.shape}")
    return arr.reshape(3, 3)
