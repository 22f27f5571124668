"""evcal: event-camera calibration from flickering collimator targets."""

from .camera import Distortion, Intrinsics
from .events import AccumFrame, Event, EventStream, accumulate, read_events, write_events
from .features import (
    Correspondence,
    DetectionConfig,
    MarkerPoint,
    TargetGeometry,
    detect_markers,
    order_grid,
)
from .homography import apply_homography, estimate_homography
from .linear_init import (
    AbsoluteConic,
    InitResult,
    SphericalExtrinsics,
    SphericalOffset,
    intrinsics_from_conic,
    linear_initialize,
    rotation_for_view,
    solve_absolute_conic,
    spherical_homography,
    spherical_offset_from_views,
)

__version__ = "0.1.0"

__all__ = [
    "AbsoluteConic",
    "AccumFrame",
    "Correspondence",
    "DetectionConfig",
    "Distortion",
    "Event",
    "EventStream",
    "InitResult",
    "Intrinsics",
    "MarkerPoint",
    "SphericalExtrinsics",
    "SphericalOffset",
    "TargetGeometry",
    "accumulate",
    "apply_homography",
    "detect_markers",
    "estimate_homography",
    "intrinsics_from_conic",
    "linear_initialize",
    "order_grid",
    "read_events",
    "rotation_for_view",
    "solve_absolute_conic",
    "spherical_homography",
    "spherical_offset_from_views",
    "write_events",
]
