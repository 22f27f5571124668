"""Event-stream file formats and accumulation into fixed-window frames.

Two on-disk formats are supported:

* CSV: rows ``t_us,x,y,p`` with p in {1, -1}; one optional header line;
  UTF-8, LF line endings.
* binary: packed little-endian records of (u64 t_us, u16 x, u16 y, i8 p),
  13 bytes each, no header. Files whose size is not a multiple of 13 are
  rejected.
"""

import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, NamedTuple

import numpy as np

from .exceptions import EventParseError, EventValidationError

DEFAULT_WINDOW_US = 33_000

BINARY_DTYPE = np.dtype([("t", "<u8"), ("x", "<u2"), ("y", "<u2"), ("p", "<i1")])
assert BINARY_DTYPE.itemsize == 13


class Event(NamedTuple):
    """Single polarity spike: timestamp (microseconds), pixel, polarity +/-1."""

    t: int
    x: int
    y: int
    p: int


@dataclass
class EventStream:
    """Column-oriented event sequence, sorted by timestamp (non-decreasing)."""

    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    p: np.ndarray
    sensor_width: int
    sensor_height: int

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=np.int64)
        self.x = np.asarray(self.x, dtype=np.int64)
        self.y = np.asarray(self.y, dtype=np.int64)
        self.p = np.asarray(self.p, dtype=np.int64)
        n = len(self.t)
        if not (len(self.x) == len(self.y) == len(self.p) == n):
            raise ValueError("event columns have mismatched lengths")
        if n == 0:
            return
        if np.any((self.p != 1) & (self.p != -1)):
            raise EventValidationError("polarity must be +1 or -1")
        if np.any(self.t < 0):
            raise EventValidationError("timestamps must be non-negative")
        if np.any((self.x < 0) | (self.x >= self.sensor_width)):
            raise EventValidationError(f"x out of sensor bounds [0, {self.sensor_width})")
        if np.any((self.y < 0) | (self.y >= self.sensor_height)):
            raise EventValidationError(f"y out of sensor bounds [0, {self.sensor_height})")
        if np.any(np.diff(self.t) < 0):
            raise EventValidationError("events are not sorted by timestamp")

    def __len__(self) -> int:
        return len(self.t)

    def __iter__(self) -> Iterator[Event]:
        for i in range(len(self.t)):
            yield Event(int(self.t[i]), int(self.x[i]), int(self.y[i]), int(self.p[i]))

    @classmethod
    def empty(cls, sensor_width: int, sensor_height: int) -> "EventStream":
        z = np.zeros(0, dtype=np.int64)
        return cls(z, z.copy(), z.copy(), z.copy(), sensor_width, sensor_height)

    @classmethod
    def from_arrays(cls, t, x, y, p, sensor_width, sensor_height) -> "EventStream":
        """Build a stream, sorting by timestamp if needed (stable)."""
        t = np.asarray(t, dtype=np.int64)
        order = None
        if len(t) and np.any(np.diff(t) < 0):
            order = np.argsort(t, kind="stable")
        if order is not None:
            t = t[order]
            x = np.asarray(x, dtype=np.int64)[order]
            y = np.asarray(y, dtype=np.int64)[order]
            p = np.asarray(p, dtype=np.int64)[order]
        return cls(t, x, y, p, sensor_width, sensor_height)


@dataclass
class AccumFrame:
    """Per-pixel accumulation counts over one time window [t_start, t_end)."""

    values: np.ndarray
    t_start: int
    t_end: int

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.ndim != 2:
            raise ValueError("frame values must be a 2D grid")
        if np.any(self.values < 0):
            raise ValueError("frame values must be non-negative")

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


def _infer_sensor_size(x: np.ndarray, y: np.ndarray) -> tuple[int, int]:
    if len(x) == 0:
        return 1, 1
    return int(x.max()) + 1, int(y.max()) + 1


def read_events(path, format: str = "csv", sensor_size: tuple[int, int] | None = None) -> EventStream:
    """Read an event file into a time-sorted stream.

    Args:
        path: input file.
        format: "csv" or "binary" (see module docstring for the layouts).
        sensor_size: (width, height); inferred from the data when omitted.

    Raises:
        EventParseError: structural problems, reported with the offending
            line (CSV) or a size mismatch (binary).
        EventValidationError: parsed values outside their domain.
    """
    path = Path(path)
    if format == "csv":
        t, x, y, p = _parse_csv(path)
    elif format == "binary":
        t, x, y, p = _parse_binary(path)
    else:
        raise ValueError(f"unknown event format {format!r}")
    if sensor_size is None:
        sensor_size = _infer_sensor_size(x, y)
    return EventStream.from_arrays(t, x, y, p, sensor_size[0], sensor_size[1])


def _looks_numeric(fields: list[str]) -> bool:
    try:
        for f in fields:
            int(f)
    except ValueError:
        return False
    return True


def _parse_csv(path: Path) -> tuple[np.ndarray, ...]:
    t, x, y, p = [], [], [], []
    with io.open(path, "r", encoding="utf-8", newline="") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            fields = line.split(",")
            if lineno == 1 and not _looks_numeric(fields):
                continue  # optional header line
            if len(fields) != 4:
                raise EventParseError(f"expected 4 fields, got {len(fields)}", line=lineno)
            try:
                rec = [int(f) for f in fields]
            except ValueError:
                raise EventParseError(f"non-integer field in {line!r}", line=lineno) from None
            if rec[3] not in (1, -1):
                raise EventValidationError(f"polarity must be +1 or -1, got {rec[3]}", line=lineno)
            if rec[0] < 0 or rec[1] < 0 or rec[2] < 0:
                raise EventValidationError(f"negative value in {line!r}", line=lineno)
            t.append(rec[0])
            x.append(rec[1])
            y.append(rec[2])
            p.append(rec[3])
    return (
        np.asarray(t, dtype=np.int64),
        np.asarray(x, dtype=np.int64),
        np.asarray(y, dtype=np.int64),
        np.asarray(p, dtype=np.int64),
    )


def _parse_binary(path: Path) -> tuple[np.ndarray, ...]:
    data = Path(path).read_bytes()
    if len(data) % BINARY_DTYPE.itemsize != 0:
        raise EventParseError(
            f"file size {len(data)} is not a multiple of {BINARY_DTYPE.itemsize} bytes"
        )
    rec = np.frombuffer(data, dtype=BINARY_DTYPE)
    p = rec["p"].astype(np.int64)
    if np.any((p != 1) & (p != -1)):
        bad = int(np.argmax((p != 1) & (p != -1)))
        raise EventValidationError(f"record {bad}: polarity must be +1 or -1")
    return (
        rec["t"].astype(np.int64),
        rec["x"].astype(np.int64),
        rec["y"].astype(np.int64),
        p,
    )


def write_events(stream: EventStream, path, format: str = "csv") -> None:
    """Write a stream in one of the supported formats."""
    path = Path(path)
    if format == "csv":
        with io.open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("t_us,x,y,p\n")
            for i in range(len(stream)):
                fh.write(f"{stream.t[i]},{stream.x[i]},{stream.y[i]},{stream.p[i]}\n")
    elif format == "binary":
        rec = np.empty(len(stream), dtype=BINARY_DTYPE)
        rec["t"] = stream.t.astype(np.uint64)
        rec["x"] = stream.x.astype(np.uint16)
        rec["y"] = stream.y.astype(np.uint16)
        rec["p"] = stream.p.astype(np.int8)
        path.write_bytes(rec.tobytes())
    else:
        raise ValueError(f"unknown event format {format!r}")


def accumulate(stream: EventStream, window_us: int = DEFAULT_WINDOW_US, mode: str = "count") -> list[AccumFrame]:
    """Partition the stream into fixed windows and accumulate per pixel.

    Windows are half-open [start, start + window_us) anchored at the first
    event's timestamp; an event exactly on a boundary belongs to the later
    window. Windows with no events still produce (all-zero) frames.

    Args:
        stream: time-sorted events.
        window_us: window length in microseconds (> 0).
        mode: "count" sums event counts per pixel; "polarity_balance" sums
            signed polarities per pixel and stores the absolute value.

    Returns:
        One AccumFrame per window, in time order; empty list for an empty
        stream.
    """
    if window_us <= 0:
        raise ValueError(f"window_us must be positive, got {window_us}")
    if mode not in ("count", "polarity_balance"):
        raise ValueError(f"unknown accumulation mode {mode!r}")
    if len(stream) == 0:
        return []

    t0 = int(stream.t[0])
    win = (stream.t - t0) // window_us
    n_windows = int(win[-1]) + 1
    acc = np.zeros((n_windows, stream.sensor_height, stream.sensor_width), dtype=np.int64)
    weights = np.ones(len(stream), dtype=np.int64) if mode == "count" else stream.p
    np.add.at(acc, (win, stream.y, stream.x), weights)
    if mode == "polarity_balance":
        acc = np.abs(acc)

    return [
        AccumFrame(acc[k], t_start=t0 + k * window_us, t_end=t0 + (k + 1) * window_us)
        for k in range(n_windows)
    ]


def write_frame_pgm(frame: AccumFrame, path) -> None:
    """Export as 8-bit binary PGM; counts are rescaled to [0, 255] here only."""
    values = np.asarray(frame.values, dtype=float)
    peak = values.max()
    img = np.zeros_like(values, dtype=np.uint8) if peak <= 0 else \
        np.round(values * (255.0 / peak)).astype(np.uint8)
    with io.open(path, "wb") as fh:
        fh.write(f"P5\n{frame.width} {frame.height}\n255\n".encode("ascii"))
        fh.write(img.tobytes())


def write_frame_csv(frame: AccumFrame, path) -> None:
    """Lossless CSV export of the raw count grid (row per scanline)."""
    header = f"t_start={frame.t_start} t_end={frame.t_end}"
    np.savetxt(path, frame.values, fmt="%.17g", delimiter=",", header=header)


def read_frame_csv(path) -> AccumFrame:
    t_start = t_end = 0
    with io.open(path, "r", encoding="utf-8") as fh:
        first = fh.readline()
        if first.startswith("#"):
            for token in first[1:].split():
                key, _, val = token.partition("=")
                if key == "t_start":
                    t_start = int(val)
                elif key == "t_end":
                    t_end = int(val)
    values = np.loadtxt(path, delimiter=",", ndmin=2)
    return AccumFrame(values, t_start=t_start, t_end=t_end)
