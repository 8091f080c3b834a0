"""Canonical keypoint models, annotation records, depth labels and file formats.

File formats (all UTF-8 text):

* template  -- one JSON object per file::

    {"format": "hybridkp.template/1", "kind": "cad_model" | "category_template",
     "category": str, "model_id": str | null,
     "keypoints": [{"id": str, "xyz": [x, y, z]}, ...]}

* annotation -- newline-delimited JSON, one :class:`AnnotationRecord` per line
  (angles in radians, see :meth:`AnnotationRecord.to_dict`).

* maps -- a ``#`` header line ``hybridkp.maps/1 H=<h> W=<w> C=5
  channels=star,canview_x,canview_y,canview_z,depth layout=HWC`` followed by
  H lines of W*C floats, row-major with the channel index fastest.

Floats are written with 17 significant digits so reads reproduce them exactly.
"""
from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .codec import CHANNELS, HybridMaps
from .errors import DegenerateConfigurationError
from .geometry import CameraModel, Viewpoint, recover_scale, rotation_from_viewpoint
from .metrics import CategoryTemplate, build_template

TEMPLATE_FORMAT = "hybridkp.template/1"
MAPS_FORMAT = "hybridkp.maps/1"


@dataclass(frozen=True)
class CadModelKeypoints:
    model_id: str
    category: str
    ids: tuple
    points: np.ndarray = field(repr=False)  # (K, 3)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "ids", tuple(self.ids))
        if len(pts) < 1:
            raise ValueError("a CAD model needs at least one keypoint")
        if len(self.ids) != len(pts):
            raise ValueError("one point per keypoint id required")

    def as_dict(self) -> dict:
        return dict(zip(self.ids, self.points))

    def __eq__(self, other):
        if not isinstance(other, CadModelKeypoints):
            return NotImplemented
        return (
            (self.model_id, self.category, self.ids) == (other.model_id, other.category, other.ids)
            and np.array_equal(self.points, other.points)
        )


def normalize_canonical(model: CadModelKeypoints) -> CadModelKeypoints:
    """Center the bounding box at the origin and scale its largest side to 1."""
    lo = model.points.min(axis=0)
    hi = model.points.max(axis=0)
    extent = (hi - lo).max()
    if not extent > 0:
        raise DegenerateConfigurationError(f"keypoints of model {model.model_id!r} coincide", rank=0)
    pts = (model.points - 0.5 * (lo + hi)) / extent
    return CadModelKeypoints(model.model_id, model.category, model.ids, pts)


def template_from_models(models: Iterable[CadModelKeypoints]) -> CategoryTemplate:
    models = list(models)
    if not models:
        raise ValueError("no models")
    return build_template(models[0].category, [m.as_dict() for m in models])


@dataclass
class AnnotationRecord:
    image_id: str
    category: str
    bbox: tuple  # (h, w) in pixels
    keypoints_2d: list  # (id, u, v, visible)
    viewpoint: Viewpoint
    cad_model_id: str
    camera: CameraModel
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    image_size: Optional[tuple] = None  # (H, W)

    def __post_init__(self):
        self.translation = np.asarray(self.translation, dtype=np.float64)
        self.bbox = tuple(float(x) for x in self.bbox)
        self.keypoints_2d = [(str(i), float(u), float(v), bool(vis)) for i, u, v, vis in self.keypoints_2d]
        if self.image_size is not None:
            self.image_size = tuple(int(x) for x in self.image_size)
            h, w = self.image_size
            for kp_id, u, v, vis in self.keypoints_2d:
                if vis and not (0 <= u < w and 0 <= v < h):
                    raise ValueError(f"visible keypoint {kp_id!r} at ({u}, {v}) outside {w}x{h} image")

    @property
    def rotation(self) -> np.ndarray:
        return rotation_from_viewpoint(self.viewpoint)

    def visible(self) -> list:
        """(id, u, v) of visible keypoints."""
        return [(i, u, v) for i, u, v, vis in self.keypoints_2d if vis]

    def to_dict(self) -> dict:
        cam = self.camera
        return {
            "image_id": self.image_id,
            "category": self.category,
            "bbox": list(self.bbox),
            "image_size": None if self.image_size is None else list(self.image_size),
            "keypoints_2d": [{"id": i, "u": u, "v": v, "visible": vis} for i, u, v, vis in self.keypoints_2d],
            "viewpoint": {
                "azimuth": self.viewpoint.azimuth,
                "elevation": self.viewpoint.elevation,
                "in_plane": self.viewpoint.in_plane,
            },
            "cad_model_id": self.cad_model_id,
            "camera": {
                "kind": cam.kind,
                "cx": cam.cx,
                "cy": cam.cy,
                "intrinsics": None if cam.intrinsics is None else cam.intrinsics.tolist(),
            },
            "translation": self.translation.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AnnotationRecord":
        cam = d["camera"]
        k = cam.get("intrinsics")
        camera = CameraModel(cam["kind"], float(cam["cx"]), float(cam["cy"]), None if k is None else np.array(k))
        vp = d["viewpoint"]
        return cls(
            image_id=d["image_id"],
            category=d["category"],
            bbox=tuple(d["bbox"]),
            keypoints_2d=[(k["id"], k["u"], k["v"], k["visible"]) for k in d["keypoints_2d"]],
            viewpoint=Viewpoint(vp["azimuth"], vp["elevation"], vp["in_plane"]),
            cad_model_id=d["cad_model_id"],
            camera=camera,
            translation=np.array(d.get("translation", [0.0, 0.0, 0.0])),
            image_size=None if d.get("image_size") is None else tuple(d["image_size"]),
        )

    def __eq__(self, other):
        if not isinstance(other, AnnotationRecord):
            return NotImplemented
        return json.dumps(self.to_dict(), sort_keys=True) == json.dumps(other.to_dict(), sort_keys=True)


@dataclass(frozen=True)
class DepthLabels:
    ids: tuple
    depths: np.ndarray  # d_i, pixels
    scale: float  # s, metric units per pixel
    metric: np.ndarray  # rotated + translated canonical points (x, y, z)

    def pairs(self) -> list:
        return list(zip(self.ids, self.depths.tolist()))


def depth_labels(rec: AnnotationRecord, cad: CadModelKeypoints) -> DepthLabels:
    """Depth labels with the scale and metric points they came from.

    ``cad`` must already be in the canonical frame.  Only visible keypoints
    take part in scale recovery and get a label.
    """
    lookup = cad.as_dict()
    vis = [(i, u, v) for i, u, v in rec.visible() if i in lookup]
    if len(vis) < 2:
        raise DegenerateConfigurationError(
            f"record {rec.image_id!r} has {len(vis)} visible keypoints matching the CAD model", rank=len(vis)
        )
    ids = tuple(i for i, _, _ in vis)
    canon = np.array([lookup[i] for i in ids])
    metric = canon @ rec.rotation.T + rec.translation
    uv = np.array([[u, v] for _, u, v in vis])
    s = recover_scale(metric, uv)
    if not s > 0:
        raise DegenerateConfigurationError("metric keypoints coincide; scale is zero", rank=0)
    return DepthLabels(ids, metric[:, 2] / s, s, metric)


def derive_depth_labels(rec: AnnotationRecord, cad: CadModelKeypoints) -> list:
    """[(id, d)] for the record's visible keypoints; d = z / s."""
    return depth_labels(rec, cad).pairs()


# --------------------------------------------------------------------------
# I/O


def _atomic_write(path, text: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_template(obj, path):
    if isinstance(obj, CadModelKeypoints):
        kind, model_id, ids, pts = "cad_model", obj.model_id, obj.ids, obj.points
    elif isinstance(obj, CategoryTemplate):
        kind, model_id, ids, pts = "category_template", None, obj.ids, obj.means
    else:
        raise TypeError(f"cannot write {type(obj).__name__} as a template")
    payload = {
        "format": TEMPLATE_FORMAT,
        "kind": kind,
        "category": obj.category,
        "model_id": model_id,
        "keypoints": [{"id": i, "xyz": p.tolist()} for i, p in zip(ids, pts)],
    }
    _atomic_write(path, json.dumps(payload, indent=1) + "\n")


def read_template(path):
    """Return a :class:`CadModelKeypoints` or :class:`CategoryTemplate`."""
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if payload.get("format") != TEMPLATE_FORMAT:
        raise ValueError(f"{path}: not a {TEMPLATE_FORMAT} file")
    ids = [k["id"] for k in payload["keypoints"]]
    pts = np.array([k["xyz"] for k in payload["keypoints"]], dtype=np.float64).reshape(-1, 3)
    if payload["kind"] == "cad_model":
        return CadModelKeypoints(payload["model_id"], payload["category"], ids, pts)
    if payload["kind"] == "category_template":
        return CategoryTemplate(payload["category"], ids, pts)
    raise ValueError(f"{path}: unknown template kind {payload['kind']!r}")


def write_annotations(records: Iterable[AnnotationRecord], path):
    lines = [json.dumps(r.to_dict(), sort_keys=True) for r in records]
    _atomic_write(path, "".join(line + "\n" for line in lines))


def read_annotations(path) -> list[AnnotationRecord]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                out.append(AnnotationRecord.from_dict(json.loads(line)))
            except (KeyError, ValueError, TypeError) as exc:
                raise ValueError(f"{path}:{n}: bad annotation record: {exc}") from exc
    return out


def maps_to_text(maps: HybridMaps) -> str:
    h, w = maps.height, maps.width
    hwc = np.moveaxis(maps.stack(), 0, -1).reshape(h, w * len(CHANNELS))
    header = f"# {MAPS_FORMAT} H={h} W={w} C={len(CHANNELS)} channels={','.join(CHANNELS)} layout=HWC\n"
    body = "\n".join(" ".join(f"{x:.17g}" for x in row) for row in hwc)
    return header + body + "\n"


def write_maps(maps: HybridMaps, path):
    _atomic_write(path, maps_to_text(maps))


def read_maps(path) -> HybridMaps:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline()
        if not header.startswith("#") or MAPS_FORMAT not in header:
            raise ValueError(f"{path}: missing {MAPS_FORMAT} header")
        fields = dict(tok.split("=", 1) for tok in header[1:].split() if "=" in tok)
        h, w, c = int(fields["H"]), int(fields["W"]), int(fields["C"])
        if c != len(CHANNELS) or fields.get("layout", "HWC") != "HWC":
            raise ValueError(f"{path}: unsupported channel layout")
        data = np.loadtxt(fh, dtype=np.float64, ndmin=2)
    if data.shape != (h, w * c):
        raise ValueError(f"{path}: expected {h} rows of {w * c} values, got {data.shape}")
    return HybridMaps.from_stack(np.moveaxis(data.reshape(h, w, c), -1, 0))
