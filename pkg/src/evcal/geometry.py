"""Rotation utilities: axis-angle, quaternions, SVD orthogonalization."""

import numpy as np


def skew(v: np.ndarray) -> np.ndarray:
    """Cross-product matrix [v]_x such that skew(v) @ w == cross(v, w)."""
    v = np.asarray(v, dtype=float)
    return np.array([
        [0.0, -v[2], v[1]],
        [v[2], 0.0, -v[0]],
        [-v[1], v[0], 0.0],
    ])


def rotation_from_axis_angle(rvec: np.ndarray) -> np.ndarray:
    """Rodrigues formula: axis-angle 3-vector to rotation matrix."""
    rvec = np.asarray(rvec, dtype=float)
    theta = float(np.linalg.norm(rvec))
    if theta < 1e-12:
        # second-order series keeps derivatives smooth near identity
        K = skew(rvec)
        return np.eye(3) + K + 0.5 * (K @ K)
    K = skew(rvec / theta)
    return np.eye(3) + np.sin(theta) * K + (1.0 - np.cos(theta)) * (K @ K)


def axis_angle_from_rotation(R: np.ndarray) -> np.ndarray:
    """Inverse Rodrigues; returned vector has magnitude in [0, pi]."""
    R = np.asarray(R, dtype=float)
    cos_theta = np.clip((np.trace(R) - 1.0) * 0.5, -1.0, 1.0)
    theta = float(np.arccos(cos_theta))
    if theta < 1e-12:
        return np.zeros(3)
    axis = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    sin_theta = np.sin(theta)
    if sin_theta > 1e-6:
        return axis * (theta / (2.0 * sin_theta))
    # theta near pi: axis from the diagonal of (R + I) / 2
    A = 0.5 * (R + np.eye(3))
    axis = np.sqrt(np.clip(np.diag(A), 0.0, None))
    # fix signs using the largest component
    k = int(np.argmax(axis))
    if axis[k] > 0:
        signs = np.sign(A[k, :])
        signs[signs == 0] = 1.0
        axis = axis * signs * np.sign(axis[k])
    n = np.linalg.norm(axis)
    if n == 0:
        return np.zeros(3)
    return axis / n * theta


def nearest_rotation(M: np.ndarray) -> np.ndarray:
    """Project an arbitrary 3x3 matrix onto SO(3) via SVD (det forced to +1)."""
    U, _, Vt = np.linalg.svd(np.asarray(M, dtype=float))
    R = U @ Vt
    if np.linalg.det(R) < 0:
        U = U.copy()
        U[:, -1] *= -1.0
        R = U @ Vt
    return R


def geodesic_angle(Ra: np.ndarray, Rb: np.ndarray) -> float:
    """Rotation angle (radians) between two rotations."""
    cos_theta = np.clip((np.trace(Ra.T @ Rb) - 1.0) * 0.5, -1.0, 1.0)
    return float(np.arccos(cos_theta))


def quaternion_from_rotation(R: np.ndarray) -> np.ndarray:
    """Unit quaternion (w, x, y, z) with w >= 0."""
    R = np.asarray(R, dtype=float)
    t = np.trace(R)
    if t > 0:
        s = np.sqrt(t + 1.0) * 2.0
        q = np.array([
            0.25 * s,
            (R[2, 1] - R[1, 2]) / s,
            (R[0, 2] - R[2, 0]) / s,
            (R[1, 0] - R[0, 1]) / s,
        ])
    else:
        i = int(np.argmax(np.diag(R)))
        j, k = (i + 1) % 3, (i + 2) % 3
        s = np.sqrt(max(1.0 + R[i, i] - R[j, j] - R[k, k], 0.0)) * 2.0
        q = np.empty(4)
        q[0] = (R[k, j] - R[j, k]) / s
        q[1 + i] = 0.25 * s
        q[1 + j] = (R[j, i] + R[i, j]) / s
        q[1 + k] = (R[k, i] + R[i, k]) / s
    if q[0] < 0:
        q = -q
    return q / np.linalg.norm(q)


def is_rotation(R: np.ndarray, tol: float = 1e-10) -> bool:
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3):
        return False
    return (np.linalg.norm(R.T @ R - np.eye(3)) < tol) and np.linalg.det(R) > 0
