"""On-disk formats: raw volume file sets, truth/corrections/report JSON,
trace logs, and enface image export.

A volume is a directory of three files: meta.json (dims and geometry),
data.raw (little-endian float32, k fastest), validity.raw (one byte per
voxel).  Everything written here is byte-deterministic for fixed inputs;
no file carries a timestamp.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .correction import EnfaceImage
from .errors import (
    HeaderMismatchError,
    IoFailureError,
    MissingFileError,
    SizeMismatchError,
    ValidationError,
)
from .metrics import EvaluationReport
from .optimizer import OptimizationTrace, OptimizerConfig
from .phantom import PhantomSpec, PhantomTruth, truth_foreground_ascans
from .spline import CorrectionField, KnotLayout
from .volume import RasterVolume, ScanDirection, new_raster_volume

META_NAME = "meta.json"
DATA_NAME = "data.raw"
VALIDITY_NAME = "validity.raw"
DTYPE_TAG = "f32le"
LAYOUT_TAG = "ijk-k-fastest"


def _dump_json(obj, path: Path) -> None:
    try:
        path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise IoFailureError(f"cannot write {path}: {exc}") from exc


def _load_json(path: Path):
    if not path.is_file():
        raise MissingFileError(f"missing file: {path}")
    try:
        return json.loads(path.read_text())
    except OSError as exc:
        raise IoFailureError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise HeaderMismatchError(f"{path} is not valid JSON: {exc}") from exc


def write_volume(volume: RasterVolume, path: str | os.PathLike) -> None:
    """Emit the three-file set under ``path`` (created if needed)."""
    root = Path(path)
    try:
        root.mkdir(parents=True, exist_ok=True)
        meta = {
            "dims": [volume.n_bscans, volume.n_ascans, volume.n_depth],
            "direction": volume.direction.value,
            "transverse_spacing_mm": volume.transverse_spacing_mm,
            "axial_spacing_um": volume.axial_spacing_um,
            "dtype": DTYPE_TAG,
            "layout": LAYOUT_TAG,
        }
        _dump_json(meta, root / META_NAME)
        (root / DATA_NAME).write_bytes(
            np.ascontiguousarray(volume.data, dtype="<f4").tobytes()
        )
        (root / VALIDITY_NAME).write_bytes(
            np.ascontiguousarray(volume.validity, dtype=np.uint8).tobytes()
        )
    except OSError as exc:
        raise IoFailureError(f"cannot write volume to {root}: {exc}") from exc


def read_volume(path: str | os.PathLike) -> RasterVolume:
    root = Path(path)
    meta = _load_json(root / META_NAME)
    for key in ("dims", "direction", "transverse_spacing_mm", "axial_spacing_um",
                "dtype", "layout"):
        if key not in meta:
            raise HeaderMismatchError(f"{root / META_NAME}: missing key {key!r}")
    if meta["dtype"] != DTYPE_TAG:
        raise HeaderMismatchError(f"{root}: unsupported dtype {meta['dtype']!r}")
    if meta["layout"] != LAYOUT_TAG:
        raise HeaderMismatchError(f"{root}: unsupported layout {meta['layout']!r}")
    try:
        direction = ScanDirection(meta["direction"])
    except ValueError:
        raise HeaderMismatchError(
            f"{root}: unknown direction {meta['direction']!r}"
        ) from None
    dims = meta["dims"]
    if (
        not isinstance(dims, list)
        or len(dims) != 3
        or any(not isinstance(d, int) or d < 1 for d in dims)
    ):
        raise HeaderMismatchError(f"{root}: dims must be three positive integers")
    n_voxels = dims[0] * dims[1] * dims[2]

    data_path = root / DATA_NAME
    valid_path = root / VALIDITY_NAME
    for p in (data_path, valid_path):
        if not p.is_file():
            raise MissingFileError(f"missing file: {p}")
    try:
        raw = data_path.read_bytes()
        rawv = valid_path.read_bytes()
    except OSError as exc:
        raise IoFailureError(f"cannot read volume at {root}: {exc}") from exc
    if len(raw) != 4 * n_voxels:
        raise SizeMismatchError(
            f"{data_path}: expected {4 * n_voxels} bytes, found {len(raw)}"
        )
    if len(rawv) != n_voxels:
        raise SizeMismatchError(
            f"{valid_path}: expected {n_voxels} bytes, found {len(rawv)}"
        )
    data = np.frombuffer(raw, dtype="<f4").astype(np.float32).reshape(dims)
    validity = np.frombuffer(rawv, dtype=np.uint8).copy().reshape(dims)
    return new_raster_volume(
        data=data,
        direction=direction,
        transverse_spacing_mm=float(meta["transverse_spacing_mm"]),
        axial_spacing_um=float(meta["axial_spacing_um"]),
        validity=validity,
    )


def write_truth(truth: PhantomTruth, path: str | os.PathLike) -> None:
    spec = asdict(truth.spec)
    spec["grid"] = list(spec["grid"])
    if spec["dark_disk"] is not None:
        (cx, cy), r = truth.spec.dark_disk
        spec["dark_disk"] = [[cx, cy], r]
    doc = {
        "spec": spec,
        "log_illumination": {
            d.value: truth.log_illumination[d].tolist() for d in truth.log_illumination
        },
        "foreground_ascans": {
            d.value: truth_foreground_ascans(truth, d).tolist()
            for d in truth.log_illumination
        },
    }
    _dump_json(doc, Path(path))


def read_truth(path: str | os.PathLike) -> tuple[dict, dict[ScanDirection, np.ndarray], dict[ScanDirection, np.ndarray]]:
    """(spec dict, log-illumination curves, per-A-scan foreground), both
    keyed by scan direction."""
    doc = _load_json(Path(path))
    for key in ("spec", "log_illumination", "foreground_ascans"):
        if key not in doc:
            raise HeaderMismatchError(f"{path}: missing key {key!r}")
    curves = {
        ScanDirection(k): np.asarray(v, dtype=np.float64)
        for k, v in doc["log_illumination"].items()
    }
    fg = {
        ScanDirection(k): np.asarray(v, dtype=np.uint8)
        for k, v in doc["foreground_ascans"].items()
    }
    return doc["spec"], curves, fg


def write_corrections(
    fields: Sequence[CorrectionField],
    directions: Sequence[ScanDirection],
    path: str | os.PathLike,
) -> None:
    doc = {
        "volumes": [
            {
                "direction": d.value,
                "n_ascans": f.layout.n_ascans,
                "density_per_mm": f.layout.density_per_mm,
                "knot_positions": f.layout.knot_positions.tolist(),
                "values": f.values.tolist(),
            }
            for f, d in zip(fields, directions)
        ]
    }
    _dump_json(doc, Path(path))


def read_corrections(path: str | os.PathLike) -> tuple[list[CorrectionField], list[ScanDirection]]:
    doc = _load_json(Path(path))
    if "volumes" not in doc or not isinstance(doc["volumes"], list):
        raise HeaderMismatchError(f"{path}: missing 'volumes' list")
    fields, directions = [], []
    for entry in doc["volumes"]:
        layout = KnotLayout(
            knot_positions=np.asarray(entry["knot_positions"], dtype=np.float64),
            density_per_mm=float(entry["density_per_mm"]),
            n_ascans=int(entry["n_ascans"]),
        )
        fields.append(
            CorrectionField(layout, np.asarray(entry["values"], dtype=np.float64))
        )
        directions.append(ScanDirection(entry["direction"]))
    return fields, directions


def write_trace(
    trace: OptimizationTrace, config: OptimizerConfig, path: str | os.PathLike
) -> None:
    lines = []
    last = len(trace.records) - 1
    for idx, rec in enumerate(trace.records):
        if idx % config.log_every and idx != last:
            continue
        lines.append(
            f"iter={rec.iteration} total={rec.total!r} data={rec.data!r} "
            f"reg={rec.regularizer!r} grad_norm={rec.gradient_norm!r} "
            f"step_norm={rec.step_norm!r} constraint={rec.constraint!r}"
        )
    lines.append(f"termination={trace.termination_reason.value} iterations={last}")
    try:
        Path(path).write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise IoFailureError(f"cannot write {path}: {exc}") from exc


def write_summary(
    trace: OptimizationTrace,
    config: OptimizerConfig,
    extra: Mapping[str, object],
    path: str | os.PathLike,
) -> None:
    final = trace.records[-1]
    doc = {
        "termination_reason": trace.termination_reason.value,
        "iterations": final.iteration,
        "final_total": final.total,
        "final_data": final.data,
        "final_regularizer": final.regularizer,
        "final_gradient_norm": final.gradient_norm,
        "final_constraint": final.constraint,
        "config": asdict(config),
    }
    doc.update(extra)
    _dump_json(doc, Path(path))


def write_report(report: EvaluationReport, path: str | os.PathLike) -> None:
    _dump_json(asdict(report), Path(path))


def write_enface_pgm(image: EnfaceImage, path: str | os.PathLike) -> None:
    """Binary P5, 16-bit big-endian, scaled so the image max maps to 65535."""
    pixels = np.asarray(image.pixels, dtype=np.float64)
    if pixels.ndim != 2:
        raise ValidationError("enface pixels must be 2D")
    peak = pixels.max() if pixels.size else 0.0
    if peak > 0:
        scaled = np.rint(pixels / peak * 65535.0)
    else:
        scaled = np.zeros_like(pixels)
    samples = scaled.astype(">u2")
    header = f"P5\n{pixels.shape[1]} {pixels.shape[0]}\n65535\n".encode("ascii")
    try:
        Path(path).write_bytes(header + samples.tobytes())
    except OSError as exc:
        raise IoFailureError(f"cannot write {path}: {exc}") from exc


def write_enface_csv(image: EnfaceImage, path: str | os.PathLike) -> None:
    rows = [
        ",".join("%.10g" % v for v in row) for row in np.asarray(image.pixels)
    ]
    try:
        Path(path).write_text("\n".join(rows) + "\n")
    except OSError as exc:
        raise IoFailureError(f"cannot write {path}: {exc}") from exc
