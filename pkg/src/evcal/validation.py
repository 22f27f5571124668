"""Input validation helpers shared by the estimators and module functions."""

import numpy as np

from .exceptions import InsufficientViewsError


def as_float_array(a, name: str = "array") -> np.ndarray:
    out = np.asarray(a, dtype=float)
    if not np.all(np.isfinite(out)):
        raise ValueError(f"{name} contains non-finite values")
    return out


def check_image_points(a, name: str = "image points") -> np.ndarray:
    """Validate and return (N, 2) pixel coordinates."""
    out = np.atleast_2d(as_float_array(a, name))
    if out.ndim != 2 or out.shape[1] != 2:
        raise ValueError(f"{name} must have shape (N, 2), got {out.shape}")
    return out


def check_model_points(a, name: str = "model points") -> np.ndarray:
    """Validate target-plane points; accepts (N, 2) or (N, 3) with Z == 0."""
    out = np.atleast_2d(as_float_array(a, name))
    if out.ndim != 2 or out.shape[1] not in (2, 3):
        raise ValueError(f"{name} must have shape (N, 2) or (N, 3), got {out.shape}")
    if out.shape[1] == 3:
        if np.any(out[:, 2] != 0.0):
            raise ValueError(f"{name} must lie on the Z=0 plane")
    else:
        out = np.column_stack([out, np.zeros(len(out))])
    return out


def unpack_view(view) -> tuple[np.ndarray, np.ndarray]:
    """Normalize one view to an (image (N,2), model (N,3)) pair.

    Accepts either a (image_points, model_points) tuple of array-likes or a
    sequence of Correspondence objects.
    """
    if hasattr(view, "__len__") and len(view) and hasattr(view[0], "image"):
        image = np.array([[c.image.u, c.image.v] for c in view], dtype=float)
        model = np.array([c.model for c in view], dtype=float)
    else:
        image, model = view
    image = check_image_points(image)
    model = check_model_points(model)
    if len(image) != len(model):
        raise ValueError(
            f"image/model point counts differ: {len(image)} vs {len(model)}"
        )
    return image, model


def check_views(views, min_views: int = 2) -> list[tuple[np.ndarray, np.ndarray]]:
    """Normalize a per-view correspondence collection; enforce the view minimum."""
    pairs = [unpack_view(v) for v in views]
    if len(pairs) < min_views:
        if min_views == 2:
            msg = f"calibration requires a minimum of two images; got {len(pairs)} view(s)"
        else:
            msg = f"need at least {min_views} view(s), got {len(pairs)}"
        raise InsufficientViewsError(msg)
    return pairs
