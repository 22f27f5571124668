"""Closed-form calibration initialization under the fixed-centre rotation model.

A camera viewing a planar target through a collimator moves on a sphere:
every view shares one rotation centre, so the camera-to-target transform is
a per-view rotation plus one fixed offset (x, y, -r) expressed in the target
frame. This constrains each view's plane-to-image homography H twofold:

* H^T w H, with w = K^-T K^-1 the image of the absolute conic, has equal
  (1,1)/(2,2) entries and zero (1,2) entry. With zero skew w has five
  unknowns up to scale, so two linear equations per view and a minimum of
  two views determine it.
* H^-1 K K^T H^-T, normalized by its (3,3) entry, equals
  [[r^2 + x^2, xy, x], [xy, r^2 + y^2, y], [x, y, 1]], which reads off the
  shared offset once K is known.

The per-view rotation then follows from K^-1 H column-wise with an SVD
projection onto SO(3) and a positive-depth sign test.
"""

from dataclasses import dataclass, field

import numpy as np

from .camera import Intrinsics, homography_for_pose, spherical_camera_pose
from .exceptions import (
    DegenerateConfigurationError,
    InsufficientViewsError,
    InvalidConicError,
    InvalidGeometryError,
    OrientationError,
)
from .geometry import nearest_rotation, quaternion_from_rotation
from .homography import estimate_homography
from .validation import check_views

_DEGENERACY_RTOL = 1e-8
_OFFSET_SPREAD_WARN = 0.10


@dataclass(frozen=True)
class AbsoluteConic:
    """Symmetric 3x3 conic matrix, defined up to scale, with zero (0,1) entry."""

    matrix: np.ndarray
    singular_values: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def is_positive_definite(self) -> bool:
        """Leading principal minors after normalizing the sign of the (0,0) entry."""
        m = -self.matrix if self.matrix[0, 0] < 0 else self.matrix
        minors = (m[0, 0], np.linalg.det(m[:2, :2]), np.linalg.det(m))
        return all(d > 0 for d in minors)


@dataclass(frozen=True)
class SphericalOffset:
    """Shared rotation-centre offset: in-plane (x, y) and sphere radius r."""

    x: float
    y: float
    r: float

    def __post_init__(self):
        if not self.r > 0:
            raise ValueError(f"sphere radius must be positive, got {self.r}")

    @property
    def vector(self) -> np.ndarray:
        """The invariant translation (x, y, -r) in the target frame."""
        return np.array([self.x, self.y, -self.r])


@dataclass(frozen=True)
class SphericalExtrinsics:
    """Per-view camera-to-target rotations plus the shared offset."""

    rotations: list[np.ndarray]
    offset: SphericalOffset


@dataclass(frozen=True)
class OffsetDiagnostics:
    x_per_view: np.ndarray
    y_per_view: np.ndarray
    r_per_view: np.ndarray
    relative_spread: float
    spread_warning: bool


@dataclass(frozen=True)
class InitResult:
    intrinsics: Intrinsics
    extrinsics: SphericalExtrinsics
    homographies: list[np.ndarray]
    offset_diagnostics: OffsetDiagnostics
    scale_per_view: np.ndarray = field(default_factory=lambda: np.zeros(0))
    conic_singular_values: np.ndarray = field(default_factory=lambda: np.zeros(0))


def _conic_row(H: np.ndarray, i: int, j: int) -> np.ndarray:
    """Coefficients of h_i^T w h_j in the unknowns (w11, w22, w13, w23, w33)."""
    hi, hj = H[:, i], H[:, j]
    return np.array([
        hi[0] * hj[0],
        hi[1] * hj[1],
        hi[0] * hj[2] + hi[2] * hj[0],
        hi[1] * hj[2] + hi[2] * hj[1],
        hi[2] * hj[2],
    ])


def solve_absolute_conic(homographies) -> AbsoluteConic:
    """Recover the image of the absolute conic from per-view homographies.

    Each view contributes h1^T w h2 = 0 and h1^T w h1 - h2^T w h2 = 0; the
    stacked system is solved for its null vector by SVD.

    Raises:
        InsufficientViewsError: fewer than 2 homographies.
        DegenerateConfigurationError: the stacked system has rank < 4, e.g.
            when all views share one rotation.
        InvalidConicError: the null vector is not a positive definite conic.
    """
    Hs = [np.asarray(H, dtype=float) for H in homographies]
    if len(Hs) < 2:
        raise InsufficientViewsError(
            f"conic recovery requires a minimum of two images; got {len(Hs)}"
        )
    rows = []
    for H in Hs:
        Hn = H / np.linalg.norm(H)  # equalize per-view weighting
        rows.append(_conic_row(Hn, 0, 1))
        rows.append(_conic_row(Hn, 0, 0) - _conic_row(Hn, 1, 1))
    A = np.vstack(rows)
    _, sv, Vt = np.linalg.svd(A)
    # unique-up-to-scale solution needs rank 4 in 5 unknowns
    if sv[3] <= _DEGENERACY_RTOL * sv[0]:
        raise DegenerateConfigurationError(
            "conic system is rank deficient; the views do not provide "
            "independent rotations"
        )
    w11, w22, w13, w23, w33 = Vt[-1]
    if w11 < 0:
        w11, w22, w13, w23, w33 = -w11, -w22, -w13, -w23, -w33
    conic = AbsoluteConic(np.array([
        [w11, 0.0, w13],
        [0.0, w22, w23],
        [w13, w23, w33],
    ]), singular_values=sv)
    if not conic.is_positive_definite():
        raise InvalidConicError(
            "recovered conic is not positive definite; check the input "
            "homographies and motion diversity"
        )
    return conic


def intrinsics_from_conic(conic: AbsoluteConic) -> Intrinsics:
    """Closed-form zero-skew intrinsics from a positive definite conic."""
    if not conic.is_positive_definite():
        raise InvalidConicError("conic must be positive definite")
    w = -conic.matrix if conic.matrix[0, 0] < 0 else conic.matrix
    w11, w22, w13, w23, w33 = w[0, 0], w[1, 1], w[0, 2], w[1, 2], w[2, 2]
    cx = -w13 / w11
    cy = -w23 / w22
    s = w33 - w13 * w13 / w11 - w23 * w23 / w22
    if s <= 0 or w11 <= 0 or w22 <= 0:
        raise InvalidConicError("conic does not admit real focal lengths")
    return Intrinsics(
        fx=float(np.sqrt(s / w11)),
        fy=float(np.sqrt(s / w22)),
        cx=float(cx),
        cy=float(cy),
    )


def spherical_offset_from_views(
    homographies, intrinsics: Intrinsics
) -> tuple[SphericalOffset, OffsetDiagnostics]:
    """Recover the shared (x, y, r) offset given the intrinsics.

    Per view, A = H^-1 K K^T H^-T normalized by A[2, 2] exposes x and y in
    its last column and r^2 on the diagonal; r is averaged in the squared
    domain across views since r^2 is the directly observed quantity.

    Raises:
        InvalidGeometryError: any per-view r^2 estimate is non-positive.
    """
    K = intrinsics.matrix
    KKt = K @ K.T
    xs, ys, r2s = [], [], []
    for H in homographies:
        Hinv = np.linalg.inv(np.asarray(H, dtype=float))
        A = Hinv @ KKt @ Hinv.T
        A = A / A[2, 2]
        x_i = A[0, 2]
        y_i = A[1, 2]
        r2_i = 0.5 * ((A[0, 0] - x_i * x_i) + (A[1, 1] - y_i * y_i))
        if r2_i <= 0:
            raise InvalidGeometryError(
                f"view {len(xs)}: non-positive squared radius {r2_i:.3e}"
            )
        xs.append(x_i)
        ys.append(y_i)
        r2s.append(r2_i)
    xs, ys, r2s = np.array(xs), np.array(ys), np.array(r2s)
    r_per_view = np.sqrt(r2s)
    spread = float((r_per_view.max() - r_per_view.min()) / r_per_view.mean())
    diag = OffsetDiagnostics(
        x_per_view=xs,
        y_per_view=ys,
        r_per_view=r_per_view,
        relative_spread=spread,
        spread_warning=spread > _OFFSET_SPREAD_WARN,
    )
    offset = SphericalOffset(
        x=float(xs.mean()), y=float(ys.mean()), r=float(np.sqrt(r2s.mean()))
    )
    return offset, diag


def rotation_for_view(
    H: np.ndarray,
    intrinsics: Intrinsics,
    offset: SphericalOffset,
    model_points: np.ndarray | None = None,
) -> np.ndarray:
    """Per-view camera-to-target rotation from its homography.

    The first two rotation columns come from K^-1 H scaled by the mean of
    their norms; the third is their cross product; the result is projected
    onto SO(3). The overall homography sign is fixed by requiring positive
    depth for the model points (the point under the rotation centre when
    none are given).

    Raises:
        OrientationError: neither sign choice yields all-positive depths.
    """
    H = np.asarray(H, dtype=float)
    Kinv = intrinsics.inverse_matrix
    if model_points is None:
        probe = np.array([[offset.x, offset.y]])
    else:
        probe = np.atleast_2d(np.asarray(model_points, dtype=float))[:, :2]

    for sign in (1.0, -1.0):
        M = Kinv @ (sign * H)
        lam = 0.5 * (np.linalg.norm(M[:, 0]) + np.linalg.norm(M[:, 1]))
        r1 = M[:, 0] / lam
        r2 = M[:, 1] / lam
        R = nearest_rotation(np.column_stack([r1, r2, np.cross(r1, r2)]))
        t = M[:, 2] / lam
        depths = probe[:, 0] * R[2, 0] + probe[:, 1] * R[2, 1] + t[2]
        if np.all(depths > 0):
            # R maps target to camera; the stored convention is its inverse
            return R.T
    raise OrientationError(
        "no homography sign places all model points in front of the camera"
    )


def linear_initialize(views, model_points_per_view: list[np.ndarray] | None = None) -> InitResult:
    """Full linear pipeline: homographies, conic, intrinsics, offset, rotations.

    Args:
        views: per-view correspondences (pairs of arrays or Correspondence
            sequences) for two or more views.
        model_points_per_view: optional explicit model points for the
            positive-depth sign test; defaults to each view's own points.

    Returns:
        InitResult with intrinsics, per-view camera-to-target rotations, the
        shared offset, the estimated homographies, and diagnostics
        (per-view offset estimates, per-view homography scale, conic
        singular values).
    """
    pairs = check_views(views, min_views=2)
    homographies = [estimate_homography(pair) for pair in pairs]
    conic = solve_absolute_conic(homographies)
    intrinsics = intrinsics_from_conic(conic)
    offset, offset_diag = spherical_offset_from_views(homographies, intrinsics)

    if model_points_per_view is None:
        model_points_per_view = [model for _, model in pairs]
    rotations = [
        rotation_for_view(H, intrinsics, offset, model_points=pts)
        for H, pts in zip(homographies, model_points_per_view)
    ]

    # per-view homography scale, recoverable from the conic identity
    w = intrinsics.inverse_matrix.T @ intrinsics.inverse_matrix
    scales = np.array([
        float(np.sqrt(max((H.T @ w @ H)[0, 0], 0.0))) for H in homographies
    ])

    return InitResult(
        intrinsics=intrinsics,
        extrinsics=SphericalExtrinsics(rotations=rotations, offset=offset),
        homographies=[np.asarray(H, dtype=float) for H in homographies],
        offset_diagnostics=offset_diag,
        scale_per_view=scales,
        conic_singular_values=np.asarray(getattr(conic, "singular_values", np.zeros(0))),
    )


def init_result_to_dict(result: InitResult) -> dict:
    """JSON-ready representation of an initialization result."""
    return {
        "intrinsics": {
            "fx": result.intrinsics.fx,
            "fy": result.intrinsics.fy,
            "cx": result.intrinsics.cx,
            "cy": result.intrinsics.cy,
        },
        "offset": {
            "x": result.extrinsics.offset.x,
            "y": result.extrinsics.offset.y,
            "r": result.extrinsics.offset.r,
        },
        "rotations": [
            {
                "quaternion": quaternion_from_rotation(R).tolist(),
                "matrix": R.tolist(),
            }
            for R in result.extrinsics.rotations
        ],
        "homographies": [H.reshape(9).tolist() for H in result.homographies],
        "diagnostics": {
            "offset_x_per_view": result.offset_diagnostics.x_per_view.tolist(),
            "offset_y_per_view": result.offset_diagnostics.y_per_view.tolist(),
            "offset_r_per_view": result.offset_diagnostics.r_per_view.tolist(),
            "offset_relative_spread": result.offset_diagnostics.relative_spread,
            "offset_spread_warning": result.offset_diagnostics.spread_warning,
            "scale_per_view": result.scale_per_view.tolist(),
            "conic_singular_values": result.conic_singular_values.tolist(),
        },
    }


def spherical_homography(intrinsics: Intrinsics, R_ep: np.ndarray, offset: SphericalOffset) -> np.ndarray:
    """Forward model: homography of a view with rotation R_ep and shared offset."""
    R, t = spherical_camera_pose(R_ep, offset)
    return homography_for_pose(intrinsics, R, t)
