"""Marker detection in accumulated frames and assignment to the target grid.

Detection is deliberately simple: flicker-generated blobs sit on a
near-zero background, so a global threshold (Otsu over the nonzero pixels
by default) followed by 8-connected labeling and an intensity-weighted
centroid is both fast and subpixel-accurate.
"""

import csv
import io
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .events import AccumFrame
from .exceptions import AmbiguousGridError, CorrespondenceError

_EIGHT_CONNECTED = np.ones((3, 3), dtype=int)


@dataclass(frozen=True)
class MarkerPoint:
    """Detected blob: subpixel centroid, total intensity, pixel count."""

    u: float
    v: float
    mass: float
    area: int


@dataclass(frozen=True)
class TargetGeometry:
    """Regular rows x cols marker grid on the Z=0 target plane."""

    rows: int = 7
    cols: int = 7
    spacing: float = 1.0

    def __post_init__(self):
        if self.rows < 2 or self.cols < 2:
            raise ValueError("target grid needs at least 2 rows and 2 columns")
        if self.spacing <= 0:
            raise ValueError("marker spacing must be positive")

    @property
    def n_markers(self) -> int:
        return self.rows * self.cols

    def model_points(self) -> np.ndarray:
        """(rows*cols, 3) points in row-major order, Z identically 0."""
        jj, ii = np.meshgrid(np.arange(self.cols), np.arange(self.rows))
        pts = np.column_stack([
            jj.ravel() * self.spacing,
            ii.ravel() * self.spacing,
            np.zeros(self.n_markers),
        ])
        return pts


@dataclass(frozen=True)
class Correspondence:
    """One matched 2D observation / 3D model point pair within a view."""

    image: MarkerPoint
    model: np.ndarray
    view: int
    model_index: int


@dataclass(frozen=True)
class DetectionConfig:
    threshold: float | None = None  # None selects Otsu over nonzero pixels
    min_area: int = 5
    max_area_fraction: float = 0.01
    include_skirt: bool = True


def otsu_threshold(values: np.ndarray, bins: int = 256) -> float:
    """Otsu's threshold over a 1D sample of intensities."""
    values = np.asarray(values, dtype=float).ravel()
    lo, hi = float(values.min()), float(values.max())
    if hi <= lo:
        return lo - 0.5  # single level: everything is foreground
    hist, edges = np.histogram(values, bins=bins, range=(lo, hi))
    centers = 0.5 * (edges[:-1] + edges[1:])
    prob = hist / hist.sum()
    omega = np.cumsum(prob)
    mu = np.cumsum(prob * centers)
    mu_total = mu[-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        between = (mu_total * omega - mu) ** 2 / (omega * (1.0 - omega))
    between[~np.isfinite(between)] = -1.0
    return float(centers[int(np.argmax(between))])


def detect_markers(frame: AccumFrame, config: DetectionConfig = DetectionConfig()) -> list[MarkerPoint]:
    """Detect marker blobs and return their subpixel centroids.

    Blobs are connected components (8-connectivity) above a global
    threshold; components outside [min_area, max_area] pixels are dropped.
    With ``include_skirt`` the centroid also integrates nonzero pixels
    8-adjacent to a component, recovering intensity the threshold cut off a
    blob's fringe; area still refers to the thresholded component.

    Returns markers ordered by scanline of their first pixel. An empty list
    (no blob passed the filters) is a valid result.
    """
    values = np.asarray(frame.values, dtype=float)
    nonzero = values > 0
    if not nonzero.any():
        return []
    thr = config.threshold if config.threshold is not None else otsu_threshold(values[nonzero])
    mask = values > thr
    labels, n_labels = ndimage.label(mask, structure=_EIGHT_CONNECTED)
    if n_labels == 0:
        return []

    if config.include_skirt:
        grown = ndimage.maximum_filter(labels, size=3)
        support = np.where((labels == 0) & nonzero, grown, labels)
    else:
        support = labels

    index = np.arange(1, n_labels + 1)
    areas = ndimage.sum_labels(np.ones_like(values), labels, index)
    masses = ndimage.sum_labels(values, support, index)
    centroids = ndimage.center_of_mass(values, support, index)

    max_area = config.max_area_fraction * values.size
    markers = []
    for k in range(n_labels):
        area = int(areas[k])
        if area < config.min_area or area > max_area:
            continue
        cy, cx = centroids[k]
        markers.append(MarkerPoint(u=float(cx), v=float(cy), mass=float(masses[k]), area=area))
    return markers


def _dominant_grid_angle(positions: np.ndarray) -> float:
    """Grid axis direction in (-45, 45] degrees from nearest-neighbour votes.

    Displacements to each marker's nearest neighbour all lie along the two
    grid axes; folding their angles modulo 90 degrees and averaging on the
    circle gives the axis family, from which the row direction is the
    candidate closest to the image x axis.
    """
    d2 = np.sum((positions[:, None, :] - positions[None, :, :]) ** 2, axis=2)
    np.fill_diagonal(d2, np.inf)
    nearest = np.argmin(d2, axis=1)
    delta = positions[nearest] - positions
    angles = np.arctan2(delta[:, 1], delta[:, 0])
    # axial data with period pi/2: average unit vectors of 4*angle
    mean_vec = np.mean(np.exp(4j * angles))
    theta = float(np.angle(mean_vec)) / 4.0
    # fold into (-pi/4, pi/4]
    while theta <= -np.pi / 4:
        theta += np.pi / 2
    while theta > np.pi / 4:
        theta -= np.pi / 2
    return theta


def order_grid(markers: list[MarkerPoint], geometry: TargetGeometry, view: int = 0) -> list[Correspondence]:
    """Assign detected markers to grid model points in row-major order.

    The in-plane grid orientation is estimated from nearest-neighbour
    directions, the markers are de-rotated, rows are split at the largest
    gaps in the cross-row coordinate, and each row is sorted along the row
    axis. In-plane rotations of 45 degrees or more are ambiguous and are
    rejected rather than guessed.

    Raises:
        CorrespondenceError: marker count does not equal rows * cols.
        AmbiguousGridError: row clustering does not produce equal row sizes.
    """
    expected = geometry.n_markers
    if len(markers) != expected:
        raise CorrespondenceError(
            f"expected {expected} markers ({geometry.rows}x{geometry.cols}), "
            f"got {len(markers)} (deficit {expected - len(markers)})"
        )
    positions = np.array([[m.u, m.v] for m in markers])
    theta = _dominant_grid_angle(positions)
    c, s = np.cos(-theta), np.sin(-theta)
    rot = positions @ np.array([[c, -s], [s, c]]).T

    order = np.argsort(rot[:, 1], kind="stable")
    ys = rot[order, 1]
    gaps = np.diff(ys)
    if geometry.rows > 1:
        # the rows-1 widest gaps separate the rows
        split_at = np.sort(np.argsort(gaps, kind="stable")[-(geometry.rows - 1):])
        boundaries = np.concatenate([[0], split_at + 1, [expected]])
    else:
        boundaries = np.array([0, expected])
    sizes = np.diff(boundaries)
    if np.any(sizes != geometry.cols):
        raise AmbiguousGridError(
            f"row clustering produced row sizes {sizes.tolist()}, expected "
            f"{geometry.cols} per row; the view may be rotated >= 45 degrees"
        )

    model = geometry.model_points()
    out: list[Correspondence] = []
    for row in range(geometry.rows):
        row_idx = order[boundaries[row]:boundaries[row + 1]]
        row_idx = row_idx[np.argsort(rot[row_idx, 0], kind="stable")]
        for col, src in enumerate(row_idx):
            k = row * geometry.cols + col
            out.append(Correspondence(
                image=markers[int(src)], model=model[k].copy(), view=view, model_index=k,
            ))
    return out


def markers_to_csv(markers_per_view: dict[int, list[MarkerPoint]], path) -> None:
    """Write detected markers as ``view,u,v,mass,area`` rows."""
    with io.open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["view", "u", "v", "mass", "area"])
        for view in sorted(markers_per_view):
            for m in markers_per_view[view]:
                writer.writerow([view, repr(m.u), repr(m.v), repr(m.mass), m.area])


def correspondences_to_csv(correspondences: list[Correspondence], path) -> None:
    """Write matched pairs as ``view,model_ix,u,v,X,Y`` rows."""
    with io.open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["view", "model_ix", "u", "v", "X", "Y"])
        for c in correspondences:
            writer.writerow([
                c.view, c.model_index,
                repr(c.image.u), repr(c.image.v),
                repr(float(c.model[0])), repr(float(c.model[1])),
            ])


def read_correspondences_csv(path) -> list[list[Correspondence]]:
    """Read ``view,model_ix,u,v,X,Y`` rows back into per-view lists."""
    by_view: dict[int, list[Correspondence]] = {}
    with io.open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return []
        rows = [header] if header and header[0].lstrip("-").isdigit() else []
        rows.extend(reader)
    for fields in rows:
        if not fields:
            continue
        view, model_ix = int(fields[0]), int(fields[1])
        u, v, X, Y = (float(f) for f in fields[2:6])
        marker = MarkerPoint(u=u, v=v, mass=1.0, area=1)
        by_view.setdefault(view, []).append(
            Correspondence(image=marker, model=np.array([X, Y, 0.0]), view=view, model_index=model_ix)
        )
    return [by_view[k] for k in sorted(by_view)]
