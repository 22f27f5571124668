"""Robust nonlinear refinement of all calibration parameters.

Minimizes the Huber-robustified reprojection error with a
Levenberg-Marquardt loop over an analytic, block-sparse Jacobian. Two
translation parameterizations are supported:

* ``spherical``: one shared (x, y, r) offset, per-view rotations only;
* ``free6dof``: an independent 6-DoF pose per view (the classic planar
  calibration setting, kept for baseline comparisons).

Rotations are updated through local axis-angle increments composed onto the
current rotation, so the Jacobian below is taken with respect to those
increments (see ``apply_step``); this avoids axis-angle singularities far
from the identity.
"""

from dataclasses import dataclass, replace

import numpy as np

from .camera import MIN_DEPTH, Distortion, Intrinsics, spherical_camera_pose
from .exceptions import (
    BehindCameraError,
    DivergenceError,
    InsufficientDataError,
    NonConvergenceError,
)
from .geometry import axis_angle_from_rotation, rotation_from_axis_angle
from .linear_init import InitResult, SphericalOffset
from .report import CalibrationReport
from .validation import check_views

MODES = ("spherical", "free6dof")


@dataclass(frozen=True)
class ParameterVector:
    """Complete calibration state for one optimization run.

    ``rvecs`` holds per-view axis-angle rotations: the camera-to-target
    rotation in spherical mode, the world-to-camera rotation in free mode.
    The translation block is the shared offset (spherical) or per-view
    translations (free); exactly one of the two is set.
    """

    intrinsics: Intrinsics
    distortion: Distortion
    rvecs: np.ndarray  # (M, 3)
    mode: str = "spherical"
    offset: SphericalOffset | None = None
    translations: np.ndarray | None = None  # (M, 3) in free mode

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        object.__setattr__(self, "rvecs", np.atleast_2d(np.asarray(self.rvecs, dtype=float)))
        if self.mode == "spherical" and self.offset is None:
            raise ValueError("spherical mode requires an offset")
        if self.mode == "free6dof":
            if self.translations is None:
                raise ValueError("free6dof mode requires per-view translations")
            object.__setattr__(
                self, "translations", np.atleast_2d(np.asarray(self.translations, dtype=float))
            )

    @property
    def n_views(self) -> int:
        return len(self.rvecs)

    @property
    def n_params(self) -> int:
        if self.mode == "spherical":
            return 6 + 3 + 3 * self.n_views
        return 6 + 6 * self.n_views

    def camera_pose(self, view: int) -> tuple[np.ndarray, np.ndarray]:
        """World-to-camera (R, t) of one view."""
        if self.mode == "spherical":
            R_ep = rotation_from_axis_angle(self.rvecs[view])
            return spherical_camera_pose(R_ep, self.offset)
        return rotation_from_axis_angle(self.rvecs[view]), self.translations[view].copy()

    @classmethod
    def from_init(cls, init: InitResult, mode: str = "spherical",
                  distortion: Distortion = Distortion()) -> "ParameterVector":
        """Seed from a linear initialization; distortion defaults to zero."""
        if mode == "spherical":
            rvecs = np.array([axis_angle_from_rotation(R) for R in init.extrinsics.rotations])
            return cls(
                intrinsics=init.intrinsics,
                distortion=distortion,
                rvecs=rvecs,
                mode=mode,
                offset=init.extrinsics.offset,
            )
        rvecs, ts = [], []
        for R_ep in init.extrinsics.rotations:
            R, t = spherical_camera_pose(R_ep, init.extrinsics.offset)
            rvecs.append(axis_angle_from_rotation(R))
            ts.append(t)
        return cls(
            intrinsics=init.intrinsics,
            distortion=distortion,
            rvecs=np.array(rvecs),
            mode=mode,
            translations=np.array(ts),
        )

    def _reference_scale(self) -> float:
        """Magnitude of the state, for the relative step-size test."""
        blocks = [
            [self.intrinsics.fx, self.intrinsics.fy, self.intrinsics.cx, self.intrinsics.cy],
            [self.distortion.k1, self.distortion.k2],
            self.rvecs.ravel(),
        ]
        if self.mode == "spherical":
            blocks.append([self.offset.x, self.offset.y, self.offset.r])
        else:
            blocks.append(self.translations.ravel())
        return float(np.linalg.norm(np.concatenate([np.asarray(b, dtype=float) for b in blocks])))


@dataclass(frozen=True)
class OptimizeOptions:
    max_iterations: int = 100
    ftol: float = 1e-10
    gtol: float = 1e-12
    xtol: float = 1e-12
    huber_delta: float | None = 1.0  # None disables robustification
    damping_scale: float = 1e-3
    damping_min: float = 1e-12
    damping_max: float = 1e8

    def __post_init__(self):
        if self.huber_delta is not None and not self.huber_delta > 0:
            raise ValueError("huber_delta must be positive (or None)")


def huber_loss(x, delta: float):
    """Quadratic below the threshold, linear above: x^2 if |x| <= delta,
    else 2*delta*|x| - delta^2. Accepts scalars or arrays."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    ax = np.abs(np.asarray(x, dtype=float))
    out = np.where(ax <= delta, ax * ax, 2.0 * delta * ax - delta * delta)
    return float(out) if np.isscalar(x) else out


def _robust_cost(norms: np.ndarray, delta: float | None) -> float:
    if delta is None:
        return float(np.sum(norms * norms))
    return float(np.sum(huber_loss(norms, delta)))


def _robust_weights(norms: np.ndarray, delta: float | None) -> np.ndarray:
    """IRLS weights w with d cost / d res = 2 w res: 1 inside, delta/|res| outside."""
    if delta is None:
        return np.ones_like(norms)
    w = np.ones_like(norms)
    big = norms > delta
    w[big] = delta / norms[big]
    return w


def project(params: ParameterVector, view: int, points: np.ndarray) -> np.ndarray:
    """Project model points (N, 2|3) of one view to pixels (N, 2)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[1] == 2:
        pts = np.column_stack([pts, np.zeros(len(pts))])
    R, t = params.camera_pose(view)
    return _pixels_from_camera(params, pts @ R.T + t)[0]


def _pixels_from_camera(params: ParameterVector, cam: np.ndarray):
    """Pixels plus the intermediates the Jacobian reuses."""
    z = cam[:, 2]
    if np.any(z <= MIN_DEPTH):
        bad = int(np.argmin(z))
        raise BehindCameraError(f"point {bad} has depth {z[bad]:.3e}")
    xn = cam[:, 0] / z
    yn = cam[:, 1] / z
    rho2 = xn * xn + yn * yn
    k1, k2 = params.distortion.k1, params.distortion.k2
    d = 1.0 + k1 * rho2 + k2 * rho2 * rho2
    K = params.intrinsics
    pix = np.column_stack([K.fx * d * xn + K.cx, K.fy * d * yn + K.cy])
    return pix, (z, xn, yn, rho2, d)


def _batch_skew(w: np.ndarray) -> np.ndarray:
    out = np.zeros((len(w), 3, 3))
    out[:, 0, 1] = -w[:, 2]
    out[:, 0, 2] = w[:, 1]
    out[:, 1, 0] = w[:, 2]
    out[:, 1, 2] = -w[:, 0]
    out[:, 2, 0] = -w[:, 1]
    out[:, 2, 1] = w[:, 0]
    return out


def _view_residual_jacobian(params: ParameterVector, view: int, image: np.ndarray, model: np.ndarray):
    """Residuals (2N,) and Jacobian blocks for one view.

    Returns (res, J_shared, J_pose): shared columns are
    [fx, fy, cx, cy, k1, k2] plus [x, y, r] in spherical mode; pose columns
    are the local rotation increment (plus translation in free mode).
    """
    R, t = params.camera_pose(view)
    cam = model @ R.T + t
    pix, (z, xn, yn, rho2, d) = _pixels_from_camera(params, cam)
    res = (pix - image).reshape(-1)

    n = len(model)
    K = params.intrinsics
    k1, k2 = params.distortion.k1, params.distortion.k2

    # d pixel / d (xn, yn): radial factor plus its gradient
    g = 2.0 * k1 + 4.0 * k2 * rho2
    A = np.empty((n, 2, 2))
    A[:, 0, 0] = K.fx * (d + xn * xn * g)
    A[:, 0, 1] = K.fx * xn * yn * g
    A[:, 1, 0] = K.fy * xn * yn * g
    A[:, 1, 1] = K.fy * (d + yn * yn * g)

    # d (xn, yn) / d cam
    B = np.zeros((n, 2, 3))
    B[:, 0, 0] = 1.0 / z
    B[:, 0, 2] = -xn / z
    B[:, 1, 1] = 1.0 / z
    B[:, 1, 2] = -yn / z
    AB = A @ B  # (n, 2, 3)

    n_shared = 9 if params.mode == "spherical" else 6
    Js = np.zeros((n, 2, n_shared))
    Js[:, 0, 0] = d * xn                   # fx
    Js[:, 1, 1] = d * yn                   # fy
    Js[:, 0, 2] = 1.0                      # cx
    Js[:, 1, 3] = 1.0                      # cy
    Js[:, 0, 4] = K.fx * xn * rho2         # k1
    Js[:, 1, 4] = K.fy * yn * rho2
    Js[:, 0, 5] = K.fx * xn * rho2 * rho2  # k2
    Js[:, 1, 5] = K.fy * yn * rho2 * rho2

    # left-composed rotation increment: in spherical mode the whole camera
    # point rotates (cam = R (model - v)); in free mode only R @ model does
    rotating = cam if params.mode == "spherical" else cam - t
    rot_cols = -(AB @ _batch_skew(rotating))  # (n, 2, 3)

    if params.mode == "spherical":
        offset_cols = np.column_stack([-R[:, 0], -R[:, 1], R[:, 2]])  # d cam / d (x, y, r)
        Js[:, :, 6:9] = AB @ offset_cols
        Jp = rot_cols
    else:
        Jp = np.concatenate([rot_cols, AB], axis=2)  # rotation then translation

    return res, Js.reshape(2 * n, n_shared), Jp.reshape(2 * n, Jp.shape[2])


def _pose_slice(params: ParameterVector, view: int) -> slice:
    if params.mode == "spherical":
        return slice(9 + 3 * view, 12 + 3 * view)
    return slice(6 + 6 * view, 12 + 6 * view)


def _shared_slice(params: ParameterVector) -> slice:
    return slice(0, 9 if params.mode == "spherical" else 6)


def residuals(params: ParameterVector, views) -> np.ndarray:
    """Stacked per-point residual components, shape (total points, 2)."""
    pairs = check_views(views, min_views=1)
    out = []
    for view, (image, model) in enumerate(pairs):
        out.append(project(params, view, model) - image)
    return np.vstack(out)


def jacobian(params: ParameterVector, views) -> np.ndarray:
    """Dense Jacobian of all residuals w.r.t. the local parameter increments.

    Row order matches ``residuals`` flattened (du then dv per point);
    columns are [fx, fy, cx, cy, k1, k2] + ([x, y, r] | nothing) + per-view
    pose blocks. Off-view pose columns are structurally zero.
    """
    pairs = check_views(views, min_views=1)
    rows = 2 * sum(len(img) for img, _ in pairs)
    J = np.zeros((rows, params.n_params))
    shared = _shared_slice(params)
    row = 0
    for view, (image, model) in enumerate(pairs):
        _, Js, Jp = _view_residual_jacobian(params, view, image, model)
        J[row:row + len(Js), shared] = Js
        J[row:row + len(Js), _pose_slice(params, view)] = Jp
        row += len(Js)
    return J


def apply_step(params: ParameterVector, delta: np.ndarray) -> ParameterVector:
    """Retraction: move the state along the local increment coordinates.

    Scalar blocks are additive; each view's rotation increment is composed
    on the left of the world-to-camera rotation, then re-wrapped to an
    axis-angle of magnitude < pi.
    """
    delta = np.asarray(delta, dtype=float)
    K = params.intrinsics
    intr = Intrinsics(K.fx + delta[0], K.fy + delta[1], K.cx + delta[2], K.cy + delta[3])
    dist = Distortion(params.distortion.k1 + delta[4], params.distortion.k2 + delta[5])

    new_rvecs = np.empty_like(params.rvecs)
    if params.mode == "spherical":
        offset = SphericalOffset(
            params.offset.x + delta[6], params.offset.y + delta[7], params.offset.r + delta[8]
        )
        for i in range(params.n_views):
            inc = rotation_from_axis_angle(delta[_pose_slice(params, i)])
            # R_cam = R_ep^T gains inc on the left, so R_ep gains inc^T on the right
            R_ep = rotation_from_axis_angle(params.rvecs[i]) @ inc.T
            new_rvecs[i] = axis_angle_from_rotation(R_ep)
        return replace(params, intrinsics=intr, distortion=dist, offset=offset, rvecs=new_rvecs)

    new_t = params.translations.copy()
    for i in range(params.n_views):
        block = delta[_pose_slice(params, i)]
        R = rotation_from_axis_angle(block[:3]) @ rotation_from_axis_angle(params.rvecs[i])
        new_rvecs[i] = axis_angle_from_rotation(R)
        new_t[i] += block[3:]
    return replace(params, rvecs=new_rvecs, translations=new_t, intrinsics=intr, distortion=dist)


def _assemble_normal_equations(params: ParameterVector, pairs, delta: float | None):
    """Weighted JtJ, Jt r and robust cost, accumulated view-block by view-block."""
    n = params.n_params
    shared = _shared_slice(params)
    H = np.zeros((n, n))
    g = np.zeros(n)
    cost = 0.0
    for view, (image, model) in enumerate(pairs):
        res, Js, Jp = _view_residual_jacobian(params, view, image, model)
        norms = np.hypot(res[0::2], res[1::2])
        cost += _robust_cost(norms, delta)
        w = np.repeat(np.sqrt(_robust_weights(norms, delta)), 2)
        rw = res * w
        Jsw = Js * w[:, None]
        Jpw = Jp * w[:, None]
        ps = _pose_slice(params, view)
        H[shared, shared] += Jsw.T @ Jsw
        H[shared, ps] += Jsw.T @ Jpw
        H[ps, shared] += Jpw.T @ Jsw
        H[ps, ps] += Jpw.T @ Jpw
        g[shared] += Jsw.T @ rw
        g[ps] += Jpw.T @ rw
    return H, g, cost


def _evaluate_cost(params: ParameterVector, pairs, delta: float | None) -> float:
    total = 0.0
    for view, (image, model) in enumerate(pairs):
        pix = project(params, view, model)
        total += _robust_cost(np.linalg.norm(pix - image, axis=1), delta)
    return total


def _check_initial_depths(params: ParameterVector, pairs) -> None:
    for view, (_, model) in enumerate(pairs):
        R, t = params.camera_pose(view)
        z = model @ R[2, :] + t[2]
        if np.all(z <= MIN_DEPTH):
            raise DivergenceError(f"view {view} lost positive depth for all points")


def optimize(
    init: ParameterVector, views, options: OptimizeOptions = OptimizeOptions()
) -> tuple[ParameterVector, CalibrationReport]:
    """Levenberg-Marquardt refinement of a calibration state.

    Damping starts at ``damping_scale`` times the mean diagonal of JtJ and
    moves multiplicatively: /10 on an accepted step, x10 on a rejected one.
    Iteration stops at ``max_iterations``, when the relative cost decrease
    falls below ``ftol``, or when the step or gradient become negligible.

    Returns:
        The refined parameters and a CalibrationReport whose error
        statistics are recomputed from the final state by an independent
        projection pass.

    Raises:
        NonConvergenceError: damping exhausted its range; the exception
            carries the best parameters and report found so far.
        DivergenceError: a view starts with every point behind the camera.
        InsufficientDataError: fewer residuals than parameters, or < 2 views.
    """
    pairs = check_views(views, min_views=2)
    n_residuals = 2 * sum(len(img) for img, _ in pairs)
    if n_residuals < init.n_params:
        raise InsufficientDataError(
            f"{n_residuals} residuals cannot determine {init.n_params} parameters"
        )
    _check_initial_depths(init, pairs)

    params = init
    delta = options.huber_delta
    H, g, cost = _assemble_normal_equations(params, pairs, delta)
    trace = [cost]
    mu = options.damping_scale * float(np.mean(np.diag(H)))
    mu = min(max(mu, options.damping_min), options.damping_max)
    termination = "max_iterations"
    iterations = 0

    for iterations in range(1, options.max_iterations + 1):
        if float(np.max(np.abs(g))) < options.gtol:
            termination = "gradient"
            break
        step_floor = options.xtol * (params._reference_scale() + options.xtol)
        while True:
            try:
                step = np.linalg.solve(H + mu * np.eye(len(g)), -g)
                solvable = bool(np.all(np.isfinite(step)))
            except np.linalg.LinAlgError:
                solvable = False
            if solvable and float(np.linalg.norm(step)) <= step_floor:
                termination = "xtol"
                break
            new_cost = None
            if solvable:
                candidate = apply_step(params, step)
                try:
                    new_cost = _evaluate_cost(candidate, pairs, delta)
                except BehindCameraError:
                    new_cost = None
            if new_cost is not None and new_cost <= cost:
                rel_drop = (cost - new_cost) / max(cost, np.finfo(float).tiny)
                params = candidate
                cost = new_cost
                trace.append(cost)
                mu = max(mu / 10.0, options.damping_min)
                if rel_drop < options.ftol:
                    termination = "ftol"
                break
            mu *= 10.0
            if mu > options.damping_max:
                report = _build_report(params, pairs, trace, iterations, mu,
                                       False, "damping_exhausted", options)
                raise NonConvergenceError(
                    "no acceptable step found at maximum damping",
                    parameters=params, report=report,
                )
        if termination != "max_iterations":
            break
        H, g, cost = _assemble_normal_equations(params, pairs, delta)

    return params, _build_report(params, pairs, trace, iterations, mu, True, termination, options)


def _build_report(params, pairs, trace, iterations, mu, converged, termination,
                  options) -> CalibrationReport:
    rows = []
    norms = []
    for view, (image, model) in enumerate(pairs):
        res = project(params, view, model) - image
        n = np.linalg.norm(res, axis=1)
        norms.append(n)
        rows.append(np.column_stack([
            np.full(len(n), view), np.arange(len(n)), res[:, 0], res[:, 1],
        ]))
    norms = np.concatenate(norms)

    rotations = [rotation_from_axis_angle(rv) for rv in params.rvecs]
    translations = [params.camera_pose(i)[1] for i in range(params.n_views)]

    return CalibrationReport(
        mode=params.mode,
        intrinsics=params.intrinsics,
        distortion=params.distortion,
        offset=params.offset if params.mode == "spherical" else None,
        rotations=rotations,
        translations=translations,
        residuals=np.vstack(rows),
        rms_error=float(np.sqrt(np.mean(norms * norms))),
        mean_error=float(np.mean(norms)),
        max_error=float(np.max(norms)),
        iterations=iterations,
        final_damping=float(mu),
        converged=converged,
        termination=termination,
        cost_trace=[float(c) for c in trace],
        huber_delta=options.huber_delta,
    )
