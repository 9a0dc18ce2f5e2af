"""Bit-exact persistence: prediction manifests, raw probability tensors,
score/report CSVs, and the plain-text simulation config.

All formats are little-endian and platform-independent. Writers emit a
temp file in the destination directory and atomically rename it.

Manifest (JSON)::

    {
      "version": 1,
      "class_space": {"seg_classes": [...], "det_class_indices": [...],
                      "epsilon": 1e-06},
      "samples": [
        {
          "sample_id": "...", "height": H, "width": W,
          "detections": [{"box": [x0, y0, x1, y1], "confidence": c,
                          "dist": [...]}],
          "seg": {"tensor": "relative/path.mtpr"}
                 | {"argmax_rle": [[counts per class]...],
                    "mean_confidences": [...]},
          "truth": {"boxes": [{"box": [...], "class_index": k}],
                    "label_map": {"tensor": "..."}
                               | {"class_rles": [[...], ...]}},
          "image_ref": "optional"
        }
      ]
    }

The inline seg variant is lossy: pixels of argmax class ``c`` are rebuilt
as ``mean_confidences[c]`` on channel ``c`` with the remainder spread
uniformly. Tensor references are exact.

Tensor file (.mtpr): 20-byte header -- magic ``MTPR``, format version
(u16), height, width, channels (u32 each), element code (u16, 1 = IEEE-754
float32) -- followed by ``channels`` planes, each height x width row-major.
"""
from __future__ import annotations

import csv
import io
import json
import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .boxmask import ResegmenterSpec, ScoringConfig
from .domain import (
    Box,
    ClassDistribution,
    ClassSpace,
    DetectionBox,
    GroundTruth,
    ProbabilityMap,
    SampleRecord,
    validate_sample,
)
from .maskops import BinaryMask, Rle, rle_decode, rle_encode
from .metrics import MetricReport
from .simulator import CorruptionParams, CycleReport, SimProtocol

__all__ = [
    "MANIFEST_VERSION",
    "FormatError",
    "MissingFileError",
    "MalformedFileError",
    "VersionMismatchError",
    "InvariantViolationError",
    "TensorFormatError",
    "BadMagicError",
    "TruncatedPayloadError",
    "UnsupportedElementCodeError",
    "ConfigError",
    "write_tensor",
    "read_tensor",
    "load_manifest",
    "save_manifest",
    "ScoreRow",
    "write_scores_csv",
    "read_scores_csv",
    "write_cycle_reports_csv",
    "write_eval_report_csv",
    "write_tau_sweep_csv",
    "SimConfig",
    "parse_sim_config",
]

MANIFEST_VERSION = 1


class FormatError(Exception):
    """Base for every persistence error (CLI exit code 2)."""


class MissingFileError(FormatError):
    pass


class MalformedFileError(FormatError):
    pass


class VersionMismatchError(FormatError):
    pass


class InvariantViolationError(FormatError):
    pass


class TensorFormatError(FormatError):
    pass


class BadMagicError(TensorFormatError):
    pass


class TruncatedPayloadError(TensorFormatError):
    pass


class UnsupportedElementCodeError(TensorFormatError):
    pass


class ConfigError(FormatError):
    pass


def _atomic_write_bytes(path: Path, payload: bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _atomic_write_text(path: Path, text: str) -> None:
    _atomic_write_bytes(path, text.encode("utf-8"))


# ---------------------------------------------------------------------------
# tensor files

_MAGIC = b"MTPR"
_TENSOR_VERSION = 1
_ELEMENT_F32 = 1
_HEADER = struct.Struct("<4sHIIIH")


def write_tensor(pmap: ProbabilityMap, path: str | os.PathLike) -> None:
    header = _HEADER.pack(
        _MAGIC, _TENSOR_VERSION, pmap.height, pmap.width, pmap.channels, _ELEMENT_F32
    )
    payload = pmap.data.astype("<f4", copy=False).tobytes()
    _atomic_write_bytes(Path(path), header + payload)


def read_tensor(path: str | os.PathLike) -> ProbabilityMap:
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(f"tensor file not found: {path}")
    blob = path.read_bytes()
    if len(blob) < _HEADER.size:
        raise TruncatedPayloadError(
            f"{path}: header needs {_HEADER.size} bytes, file has {len(blob)}"
        )
    magic, version, height, width, channels, element = _HEADER.unpack_from(blob)
    if magic != _MAGIC:
        raise BadMagicError(f"{path}: bad magic {magic!r}, expected {_MAGIC!r}")
    if version != _TENSOR_VERSION:
        raise TensorFormatError(f"{path}: unsupported tensor format version {version}")
    if element != _ELEMENT_F32:
        raise UnsupportedElementCodeError(f"{path}: unsupported element code {element}")
    if min(height, width, channels) == 0:
        raise TensorFormatError(f"{path}: zero dimension in header")
    expected = height * width * channels * 4
    actual = len(blob) - _HEADER.size
    if actual != expected:
        raise TruncatedPayloadError(
            f"{path}: payload holds {actual} bytes, expected {expected} "
            f"({height}x{width}x{channels} float32)"
        )
    data = np.frombuffer(blob, dtype="<f4", offset=_HEADER.size).reshape(
        channels, height, width
    )
    return ProbabilityMap(height=height, width=width, channels=channels, data=data.copy())


# ---------------------------------------------------------------------------
# manifest

def _field(obj, key, ctx, kind=None):
    if not isinstance(obj, dict) or key not in obj:
        raise MalformedFileError(f"{ctx}: missing field {key!r}")
    value = obj[key]
    if kind is not None and not isinstance(value, kind):
        raise MalformedFileError(f"{ctx}: field {key!r} has unexpected type")
    return value


def _parse_box(raw, ctx) -> Box:
    if not isinstance(raw, list) or len(raw) != 4:
        raise MalformedFileError(f"{ctx}: box must be [x_min, y_min, x_max, y_max]")
    try:
        return Box(*(float(v) for v in raw))
    except (TypeError, ValueError) as exc:
        raise InvariantViolationError(f"{ctx}: {exc}") from exc


def _decode_class_masks(rles, height, width, n_classes, ctx) -> np.ndarray:
    """Per-class RLE list -> int32 label map; the masks must partition."""
    if not isinstance(rles, list) or len(rles) != n_classes:
        raise MalformedFileError(f"{ctx}: expected {n_classes} per-class RLE lists")
    labels = np.full((height, width), -1, dtype=np.int32)
    coverage = np.zeros((height, width), dtype=np.int32)
    for cls, counts in enumerate(rles):
        if not isinstance(counts, list):
            raise MalformedFileError(f"{ctx}: class {cls} RLE must be a list of counts")
        try:
            mask = rle_decode(Rle(height, width, tuple(int(c) for c in counts)))
        except (TypeError, ValueError) as exc:
            raise InvariantViolationError(f"{ctx}: class {cls} RLE: {exc}") from exc
        labels[mask.bits] = cls
        coverage += mask.bits
    if np.any(coverage != 1):
        raise InvariantViolationError(f"{ctx}: class masks do not partition the image")
    return labels


def _seg_from_inline(seg_obj, height, width, space: ClassSpace, ctx) -> ProbabilityMap:
    n = space.n_seg
    labels = _decode_class_masks(_field(seg_obj, "argmax_rle", ctx), height, width, n, ctx)
    confs = _field(seg_obj, "mean_confidences", ctx, list)
    if len(confs) != n:
        raise MalformedFileError(f"{ctx}: mean_confidences must have {n} entries")
    confs = [float(c) for c in confs]
    floor = 1.0 / n
    for cls, c in enumerate(confs):
        if not floor < c <= 1.0:
            raise InvariantViolationError(
                f"{ctx}: mean confidence for class {cls} must lie in (1/{n}, 1]"
            )
    data = np.empty((n, height, width), dtype=np.float32)
    for cls in range(n):
        region = labels == cls
        rest = (1.0 - confs[cls]) / (n - 1)
        for k in range(n):
            data[k][region] = confs[cls] if k == cls else rest
    return ProbabilityMap(height=height, width=width, channels=n, data=data)


def _load_sample(raw, space: ClassSpace, base_dir: Path) -> SampleRecord:
    sid = _field(raw, "sample_id", "sample", str)
    ctx = f"sample {sid!r}"
    height = int(_field(raw, "height", ctx, int))
    width = int(_field(raw, "width", ctx, int))

    detections = []
    for i, det in enumerate(_field(raw, "detections", ctx, list)):
        dctx = f"{ctx}: detection {i}"
        box = _parse_box(_field(det, "box", dctx), dctx)
        dist_raw = _field(det, "dist", dctx, list)
        try:
            detections.append(
                DetectionBox(
                    box=box,
                    confidence=float(_field(det, "confidence", dctx)),
                    dist=ClassDistribution(np.asarray(dist_raw, dtype=np.float64)),
                )
            )
        except (TypeError, ValueError) as exc:
            raise InvariantViolationError(f"{dctx}: {exc}") from exc

    seg_obj = _field(raw, "seg", ctx, dict)
    if "tensor" in seg_obj:
        seg = read_tensor(base_dir / str(seg_obj["tensor"]))
    elif "argmax_rle" in seg_obj:
        seg = _seg_from_inline(seg_obj, height, width, space, ctx)
    else:
        raise MalformedFileError(f"{ctx}: seg needs 'tensor' or 'argmax_rle'")

    truth = None
    if raw.get("truth") is not None:
        traw = raw["truth"]
        boxes = []
        for i, tb in enumerate(_field(traw, "boxes", ctx, list)):
            tctx = f"{ctx}: truth box {i}"
            boxes.append(
                (_parse_box(_field(tb, "box", tctx), tctx), int(_field(tb, "class_index", tctx)))
            )
        lm_obj = _field(traw, "label_map", ctx, dict)
        if "tensor" in lm_obj:
            tensor = read_tensor(base_dir / str(lm_obj["tensor"]))
            if tensor.channels != 1:
                raise InvariantViolationError(f"{ctx}: label map tensor must have 1 channel")
            plane = tensor.data[0]
            rounded = np.rint(plane)
            if not np.array_equal(plane, rounded):
                raise InvariantViolationError(f"{ctx}: label map tensor holds non-integers")
            labels = rounded.astype(np.int32)
        elif "class_rles" in lm_obj:
            labels = _decode_class_masks(
                lm_obj["class_rles"], height, width, space.n_seg, ctx
            )
        else:
            raise MalformedFileError(f"{ctx}: label_map needs 'tensor' or 'class_rles'")
        truth = GroundTruth(boxes=boxes, label_map=labels)

    record = SampleRecord(
        sample_id=sid,
        height=height,
        width=width,
        detections=detections,
        seg=seg,
        truth=truth,
        image_ref=raw.get("image_ref"),
    )
    issues = validate_sample(record, space)
    if issues:
        raise InvariantViolationError("; ".join(issues))
    return record


def load_manifest(path: str | os.PathLike) -> tuple[ClassSpace, list[SampleRecord]]:
    """Load and fully validate a manifest; see the module docstring for the
    schema and the error taxonomy."""
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(f"manifest not found: {path}")
    try:
        doc = json.loads(path.read_text("utf-8"))
    except json.JSONDecodeError as exc:
        raise MalformedFileError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise MalformedFileError(f"{path}: top level must be an object")
    version = _field(doc, "version", "manifest", int)
    if version != MANIFEST_VERSION:
        raise VersionMismatchError(
            f"{path}: manifest version {version}, this build supports {MANIFEST_VERSION}"
        )
    cs = _field(doc, "class_space", "manifest", dict)
    try:
        space = ClassSpace(
            seg_classes=tuple(str(c) for c in _field(cs, "seg_classes", "class_space", list)),
            det_class_indices=tuple(int(i) for i in _field(cs, "det_class_indices", "class_space", list)),
            epsilon=float(cs.get("epsilon", 1e-6)),
        )
    except (TypeError, ValueError) as exc:
        raise InvariantViolationError(f"class_space: {exc}") from exc
    samples = [
        _load_sample(raw, space, path.parent)
        for raw in _field(doc, "samples", "manifest", list)
    ]
    return space, samples


def save_manifest(
    space: ClassSpace, records: Sequence[SampleRecord], path: str | os.PathLike
) -> None:
    """Write a manifest; probability maps go to exact tensor side files,
    ground-truth label maps are stored as per-class RLEs."""
    path = Path(path)
    sample_docs = []
    for idx, rec in enumerate(records):
        tensor_name = f"{path.stem}.seg{idx:05d}.mtpr"
        write_tensor(rec.seg, path.parent / tensor_name)
        doc = {
            "sample_id": rec.sample_id,
            "height": rec.height,
            "width": rec.width,
            "detections": [
                {
                    "box": [det.box.x_min, det.box.y_min, det.box.x_max, det.box.y_max],
                    "confidence": det.confidence,
                    "dist": det.dist.probs.tolist(),
                }
                for det in rec.detections
            ],
            "seg": {"tensor": tensor_name},
        }
        if rec.truth is not None:
            class_rles = []
            for cls in range(space.n_seg):
                mask = BinaryMask.from_array(rec.truth.label_map == cls)
                class_rles.append(list(rle_encode(mask).counts))
            doc["truth"] = {
                "boxes": [
                    {
                        "box": [box.x_min, box.y_min, box.x_max, box.y_max],
                        "class_index": cls,
                    }
                    for box, cls in rec.truth.boxes
                ],
                "label_map": {"class_rles": class_rles},
            }
        if rec.image_ref is not None:
            doc["image_ref"] = rec.image_ref
        sample_docs.append(doc)
    manifest = {
        "version": MANIFEST_VERSION,
        "class_space": {
            "seg_classes": list(space.seg_classes),
            "det_class_indices": list(space.det_class_indices),
            "epsilon": space.epsilon,
        },
        "samples": sample_docs,
    }
    _atomic_write_text(path, json.dumps(manifest, indent=2) + "\n")


# ---------------------------------------------------------------------------
# CSV formats


def _fmt(x: float) -> str:
    """Shortest exact decimal form; byte-stable across platforms."""
    return repr(float(x))


@dataclass(frozen=True)
class ScoreRow:
    sample_id: str
    s_seg: float
    max_s_box: float
    combined: float
    n_detections: int


def write_scores_csv(rows: Sequence[ScoreRow], path: str | os.PathLike) -> None:
    """Emit score rows in ascending sample_id order regardless of input
    order (keeps output independent of scoring parallelism)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["sample_id", "s_seg", "max_s_box", "combined", "n_detections"])
    for row in sorted(rows, key=lambda r: r.sample_id):
        writer.writerow(
            [row.sample_id, _fmt(row.s_seg), _fmt(row.max_s_box), _fmt(row.combined), row.n_detections]
        )
    _atomic_write_text(Path(path), buf.getvalue())


def read_scores_csv(path: str | os.PathLike) -> list[ScoreRow]:
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(f"scores file not found: {path}")
    with path.open(newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise MalformedFileError(f"{path}: empty scores file") from None
        if header != ["sample_id", "s_seg", "max_s_box", "combined", "n_detections"]:
            raise MalformedFileError(f"{path}: unexpected scores header {header}")
        rows = []
        for line_no, parts in enumerate(reader, start=2):
            if len(parts) != 5:
                raise MalformedFileError(f"{path}:{line_no}: expected 5 columns")
            try:
                rows.append(
                    ScoreRow(parts[0], float(parts[1]), float(parts[2]), float(parts[3]), int(parts[4]))
                )
            except ValueError as exc:
                raise MalformedFileError(f"{path}:{line_no}: {exc}") from exc
    return rows


def write_cycle_reports_csv(reports: Sequence[CycleReport], path: str | os.PathLike) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["cycle", "labeled_fraction", "strategy", "map", "miou", "mdsq"])
    for rep in reports:
        writer.writerow(
            [
                rep.cycle,
                _fmt(rep.labeled_fraction),
                rep.strategy,
                _fmt(rep.metrics.map),
                _fmt(rep.metrics.miou),
                _fmt(rep.metrics.mdsq),
            ]
        )
    _atomic_write_text(Path(path), buf.getvalue())


def write_eval_report_csv(report: MetricReport, path: str | os.PathLike) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["map", "miou", "mdsq", "map_fully", "miou_fully"])
    writer.writerow(
        [
            _fmt(report.map),
            _fmt(report.miou),
            _fmt(report.mdsq),
            _fmt(report.map_fully),
            _fmt(report.miou_fully),
        ]
    )
    _atomic_write_text(Path(path), buf.getvalue())


def write_tau_sweep_csv(
    rows: Sequence[tuple[float, float, int]], path: str | os.PathLike
) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["tau", "boxmask_miou", "n_boxes"])
    for tau, miou, n_boxes in rows:
        writer.writerow([_fmt(tau), _fmt(miou), n_boxes])
    _atomic_write_text(Path(path), buf.getvalue())


# ---------------------------------------------------------------------------
# simulation config


@dataclass(frozen=True)
class SimConfig:
    """Everything a simulation run needs besides strategy and seed."""

    n_samples: int
    dims: tuple[int, int]
    max_objects: int
    protocol: SimProtocol
    params: CorruptionParams
    scoring: ScoringConfig


_SIM_DEFAULTS = {
    "n_samples": "200",
    "dims": "64x64",
    "max_objects": "4",
    "init_fraction": "0.4",
    "budget_fraction": "0.10",
    "cycles": "6",
    "val_fraction": "0.2",
    "box_jitter": "0.3",
    "class_confusion": "0.4",
    "mask_erosion_dilation": "0.6",
    "drop_rate": "0.25",
    "spurious_rate": "0.25",
    "tau": "0.3",
    "epsilon": "1e-6",
    "margin": "0.1",
}


def parse_sim_config(path: str | os.PathLike) -> SimConfig:
    """Parse the plain-text ``key = value`` simulation config.

    Unknown keys and out-of-range values are rejected; every key has a
    default (see the README for the full list).
    """
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(f"config file not found: {path}")
    values = dict(_SIM_DEFAULTS)
    for line_no, raw_line in enumerate(path.read_text("utf-8").splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise MalformedFileError(f"{path}:{line_no}: expected 'key = value'")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in values:
            raise ConfigError(f"{path}:{line_no}: unknown key {key!r}")
        if not value:
            raise MalformedFileError(f"{path}:{line_no}: empty value for {key!r}")
        values[key] = value

    def _int(key):
        try:
            return int(values[key])
        except ValueError:
            raise ConfigError(f"{path}: {key} must be an integer, got {values[key]!r}") from None

    def _float(key):
        try:
            return float(values[key])
        except ValueError:
            raise ConfigError(f"{path}: {key} must be a number, got {values[key]!r}") from None

    raw_dims = values["dims"].lower().replace(" ", "")
    if "x" not in raw_dims:
        raise ConfigError(f"{path}: dims must look like '64x64', got {values['dims']!r}")
    h_str, _, w_str = raw_dims.partition("x")
    try:
        dims = (int(h_str), int(w_str))
    except ValueError:
        raise ConfigError(f"{path}: dims must look like '64x64', got {values['dims']!r}") from None

    try:
        protocol = SimProtocol(
            init_fraction=_float("init_fraction"),
            budget_fraction=_float("budget_fraction"),
            cycles=_int("cycles"),
            val_fraction=_float("val_fraction"),
        )
        params = CorruptionParams(
            box_jitter=_float("box_jitter"),
            class_confusion=_float("class_confusion"),
            mask_erosion_dilation=_float("mask_erosion_dilation"),
            drop_rate=_float("drop_rate"),
            spurious_rate=_float("spurious_rate"),
        )
        scoring = ScoringConfig(
            tau=_float("tau"),
            epsilon=_float("epsilon"),
            margin_fraction=_float("margin"),
            resegmenter=ResegmenterSpec.identity(),
        )
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    n_samples = _int("n_samples")
    if n_samples <= 0:
        raise ConfigError(f"{path}: n_samples must be positive")
    return SimConfig(
        n_samples=n_samples,
        dims=dims,
        max_objects=_int("max_objects"),
        protocol=protocol,
        params=params,
        scoring=scoring,
    )
