"""Calibration report: recovered parameters, residuals, convergence trace."""

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .camera import Distortion, Intrinsics
from .exceptions import EvaluationError
from .geometry import quaternion_from_rotation
from .linear_init import SphericalOffset

_TABLE_FIELDS = ["fx", "fy", "cx", "cy", "k1", "k2", "reprojection_error"]


@dataclass
class CalibrationReport:
    mode: str
    intrinsics: Intrinsics
    distortion: Distortion
    offset: SphericalOffset | None
    rotations: list[np.ndarray]
    translations: list[np.ndarray]
    residuals: np.ndarray  # columns: view, point, du, dv
    rms_error: float
    mean_error: float
    max_error: float
    iterations: int
    final_damping: float
    converged: bool
    termination: str
    cost_trace: list[float]
    huber_delta: float | None
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "parameters": {
                "fx": self.intrinsics.fx,
                "fy": self.intrinsics.fy,
                "cx": self.intrinsics.cx,
                "cy": self.intrinsics.cy,
                "k1": self.distortion.k1,
                "k2": self.distortion.k2,
            },
            "offset": None if self.offset is None else {
                "x": self.offset.x, "y": self.offset.y, "r": self.offset.r,
            },
            "poses": [
                {
                    "rotation_matrix": R.tolist(),
                    "quaternion": quaternion_from_rotation(R).tolist(),
                    "translation": t.tolist(),
                }
                for R, t in zip(self.rotations, self.translations)
            ],
            "errors": {
                "rms": self.rms_error,
                "mean": self.mean_error,
                "max": self.max_error,
            },
            "optimization": {
                "iterations": self.iterations,
                "final_damping": self.final_damping,
                "converged": self.converged,
                "termination": self.termination,
                "cost_trace": self.cost_trace,
                "huber_delta": self.huber_delta,
            },
            "residuals": self.residuals.tolist(),
            "config": self.config,
        }

    def save_json(self, path) -> None:
        with io.open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def save_residuals_csv(self, path) -> None:
        """Residual scatter as ``view,point,du,dv`` rows."""
        with io.open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["view", "point", "du", "dv"])
            for row in self.residuals:
                writer.writerow([int(row[0]), int(row[1]), repr(float(row[2])), repr(float(row[3]))])

    @classmethod
    def from_dict(cls, data: dict) -> "CalibrationReport":
        try:
            params = data["parameters"]
            intr = Intrinsics(params["fx"], params["fy"], params["cx"], params["cy"])
            dist = Distortion(params["k1"], params["k2"])
            off = data.get("offset")
            offset = None if off is None else SphericalOffset(off["x"], off["y"], off["r"])
            poses = data.get("poses", [])
            rotations = [np.asarray(p["rotation_matrix"], dtype=float) for p in poses]
            translations = [np.asarray(p["translation"], dtype=float) for p in poses]
            errors = data["errors"]
            opt = data.get("optimization", {})
            return cls(
                mode=data["mode"],
                intrinsics=intr,
                distortion=dist,
                offset=offset,
                rotations=rotations,
                translations=translations,
                residuals=np.asarray(data.get("residuals", np.zeros((0, 4))), dtype=float).reshape(-1, 4),
                rms_error=float(errors["rms"]),
                mean_error=float(errors["mean"]),
                max_error=float(errors.get("max", np.nan)),
                iterations=int(opt.get("iterations", 0)),
                final_damping=float(opt.get("final_damping", np.nan)),
                converged=bool(opt.get("converged", True)),
                termination=str(opt.get("termination", "")),
                cost_trace=list(opt.get("cost_trace", [])),
                huber_delta=opt.get("huber_delta"),
                config=data.get("config", {}),
            )
        except (KeyError, TypeError) as exc:
            raise EvaluationError(f"report is missing required field: {exc}") from exc

    @classmethod
    def load_json(cls, path) -> "CalibrationReport":
        with io.open(path, "r", encoding="utf-8") as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise EvaluationError(f"cannot parse report {path}: {exc}") from exc
        return cls.from_dict(data)


def _table_values(source) -> dict[str, float]:
    """Extract the comparison fields from a report or a ground-truth dict."""
    if isinstance(source, CalibrationReport):
        return {
            "fx": source.intrinsics.fx,
            "fy": source.intrinsics.fy,
            "cx": source.intrinsics.cx,
            "cy": source.intrinsics.cy,
            "k1": source.distortion.k1,
            "k2": source.distortion.k2,
            "reprojection_error": source.mean_error,
        }
    values = {}
    params = source.get("parameters", source)
    for key in _TABLE_FIELDS:
        if key == "reprojection_error":
            errors = source.get("errors", {})
            values[key] = float(errors.get("mean", params.get(key, np.nan)))
            continue
        if key not in params:
            raise EvaluationError(f"parameter set mismatch: {key!r} missing")
        values[key] = float(params[key])
    return values


def comparison_table(entries: list[tuple[str, object]], ground_truth: dict | None = None) -> str:
    """Format a parameter comparison table, one column per method.

    Rows follow the conventional order fx, fy, cx, cy, k1, k2, reprojection
    error. When a ground truth is supplied, absolute and relative deltas per
    method are appended.
    """
    if not entries:
        raise EvaluationError("no reports to compare")
    columns = [(name, _table_values(rep)) for name, rep in entries]
    gt_values = None if ground_truth is None else _table_values(ground_truth)

    names = [name for name, _ in columns]
    width = max(18, *(len(n) + 2 for n in names))
    lines = []
    header = f"{'parameter':<22}" + "".join(f"{n:>{width}}" for n in names)
    if gt_values is not None:
        header += f"{'ground truth':>{width}}"
    lines.append(header)
    lines.append("-" * len(header))
    for key in _TABLE_FIELDS:
        row = f"{key:<22}" + "".join(f"{vals[key]:>{width}.6f}" for _, vals in columns)
        if gt_values is not None:
            row += f"{gt_values[key]:>{width}.6f}"
        lines.append(row)
    if gt_values is not None:
        lines.append("")
        for key in _TABLE_FIELDS[:-1]:
            ref = gt_values[key]
            abs_row = f"{'d_' + key:<22}"
            rel_row = f"{'d_' + key + '_rel':<22}"
            for _, vals in columns:
                delta = vals[key] - ref
                abs_row += f"{delta:>{width}.6g}"
                rel = delta / ref if ref != 0 else np.inf if delta else 0.0
                rel_row += f"{rel:>{width}.6g}"
            lines.append(abs_row)
            lines.append(rel_row)
    return "\n".join(lines) + "\n"
