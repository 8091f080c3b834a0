"""Synthetic experiment driver.

Stands in for a trained network: each instance samples a viewpoint, projects
a CAD keypoint set with a weak-perspective camera, renders ground-truth maps
and a corrupted copy (i.i.d. Gaussian noise on the StarMap grid, on the
canonical features and on the depths), then decodes, aligns and scores.

Modes substitute one decoded component by its ground truth (``gt_star``,
``gt_canview``, ``gt_depth``) or replace depth alignment with the
weak-perspective PnP baseline (``pnp``).  Every instance draws the same random
numbers whatever the mode, so runs with equal seeds are matched.
"""
from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .alignment import estimate_viewpoint
from .codec import DetectedKeypoint, HybridMaps, encode_maps, extract_peaks
from .dataset import (
    AnnotationRecord,
    CadModelKeypoints,
    _atomic_write,
    depth_labels,
    read_annotations,
    read_maps,
    read_template,
    write_annotations,
    write_maps,
    write_template,
)
from .errors import ConvergenceError, DegenerateConfigurationError, HybridKPError, InsufficientKeypointsError
from .geometry import CameraModel, Viewpoint, geodesic_distance, project_weak_perspective, rotation_from_viewpoint
from .library import CATEGORIES, cad_models, category_template
from .metrics import (
    CategoryTemplate,
    EvalRecord,
    assign_oracle_ids,
    classify_keypoints,
    pck,
    scores_from_errors,
)

MODES = ("full", "gt_star", "gt_canview", "gt_depth", "pnp")
READOUTS = ("grid", "continuous")
NOISE_NOTE = "synthetic i.i.d. Gaussian noise (not a learned network's error distribution)"


class HarnessError(HybridKPError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    categories: tuple = CATEGORIES
    instances_per_category: int = 100
    height: int = 64
    width: int = 64
    sigma: float = 1.0
    star_noise: float = 0.0
    canview_noise: float = 0.0  # canonical units
    depth_noise: float = 0.0  # canonical units, converted to pixels per instance
    azimuth_range: tuple = (0.0, 2 * math.pi)
    elevation_range: tuple = (-math.pi / 9, math.pi / 3)
    in_plane_range: tuple = (-math.pi / 18, math.pi / 18)
    seed: int = 0
    mode: str = "full"
    readout: str = "grid"
    alpha: float = 0.1
    # pixels per canonical unit, as a fraction of min(H, W)
    scale_range: tuple = (0.4, 0.55)
    depth_offset_range: tuple = (4.0, 10.0)
    max_resamples: int = 10

    def __post_init__(self):
        object.__setattr__(self, "categories", tuple(self.categories))
        for name in ("azimuth_range", "elevation_range", "in_plane_range", "scale_range", "depth_offset_range"):
            object.__setattr__(self, name, tuple(float(x) for x in getattr(self, name)))
        if self.instances_per_category < 0:
            raise ValueError("instances_per_category must be non-negative")
        if self.height < 1 or self.width < 1:
            raise ValueError("map resolution must be positive")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if min(self.star_noise, self.canview_noise, self.depth_noise) < 0:
            raise ValueError("noise levels must be non-negative")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.readout not in READOUTS:
            raise ValueError(f"readout must be one of {READOUTS}, got {self.readout!r}")
        unknown = [c for c in self.categories if c not in CATEGORIES]
        if unknown:
            raise ValueError(f"unknown categories {unknown}; choose from {', '.join(CATEGORIES)}")

    def replace(self, **changes) -> "ExperimentConfig":
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d.update(changes)
        return ExperimentConfig(**d)

    _ANGLES = ("azimuth_range", "elevation_range", "in_plane_range")

    def to_dict(self) -> dict:
        """JSON-ready dict; angle ranges in degrees."""
        d = asdict(self)
        for name in self._ANGLES:
            d[name + "_deg"] = [math.degrees(x) for x in d.pop(name)]
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        for name in cls._ANGLES:
            if name + "_deg" in d:
                d[name] = tuple(math.radians(x) for x in d.pop(name + "_deg"))
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown config keys: {sorted(extra)}")
        return cls(**d)


@dataclass
class Instance:
    record: AnnotationRecord
    model: CadModelKeypoints
    clean: HybridMaps
    noisy: HybridMaps
    ids: tuple  # visible keypoint ids
    uv: np.ndarray  # (K, 2) exact projections of the visible keypoints
    canview: np.ndarray  # (K, 3) ground truth
    depth: np.ndarray  # (K,) ground truth
    canview_noisy: np.ndarray
    depth_noisy: np.ndarray
    pixel_scale: float  # pixels per canonical unit


def instance_rng(seed: int, category: str, index: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), CATEGORIES.index(category), int(index)])


def generate_instance(category: str, cfg: ExperimentConfig, rng: np.random.Generator, image_id: str = "") -> Instance:
    """Sample a viewpoint, project, label depths and render clean + noisy maps."""
    models = cad_models(category)
    model = models[int(rng.integers(len(models)))]
    H, W = cfg.height, cfg.width
    cam = CameraModel.weak(W / 2.0, H / 2.0)
    for _ in range(cfg.max_resamples):
        vp = Viewpoint(
            rng.uniform(*cfg.azimuth_range),
            rng.uniform(*cfg.elevation_range),
            rng.uniform(*cfg.in_plane_range),
        )
        z0 = rng.uniform(*cfg.depth_offset_range)
        pixel_scale = rng.uniform(*cfg.scale_range) * min(H, W)
        t = np.array([0.0, 0.0, z0])
        metric = model.points @ rotation_from_viewpoint(vp).T + t
        uvd = project_weak_perspective(metric, 1.0 / pixel_scale, cam)
        inside = (uvd[:, 0] >= 0) & (uvd[:, 0] < W) & (uvd[:, 1] >= 0) & (uvd[:, 1] < H)
        if inside.any():
            break
    else:
        raise HarnessError(f"{category}: no keypoint inside the {W}x{H} grid after {cfg.max_resamples} draws")

    span = np.ptp(uvd[inside, :2], axis=0) if inside.sum() > 1 else np.zeros(2)
    record = AnnotationRecord(
        image_id=image_id,
        category=category,
        bbox=(max(float(span[1]), 1.0), max(float(span[0]), 1.0)),
        keypoints_2d=[(i, u, v, vis) for i, (u, v), vis in zip(model.ids, uvd[:, :2], inside)],
        viewpoint=vp,
        cad_model_id=model.model_id,
        camera=cam,
        translation=t,
        image_size=(H, W),
    )
    K = int(inside.sum())
    lookup = model.as_dict()
    if K >= 2 and np.ptp(uvd[inside, :2], axis=0).max() > 0:
        labels = depth_labels(record, model)
        ids, depth = labels.ids, labels.depths
    else:
        ids = tuple(i for i, vis in zip(model.ids, inside) if vis)
        depth = uvd[inside, 2]
    canview = np.array([lookup[i] for i in ids]).reshape(-1, 3)
    uv = uvd[inside, :2]

    # fixed draw order regardless of noise levels and mode
    canview_noisy = canview + cfg.canview_noise * rng.standard_normal((K, 3))
    depth_noisy = depth + cfg.depth_noise * pixel_scale * rng.standard_normal(K)
    star_noise = cfg.star_noise * rng.standard_normal((H, W))

    clean = encode_maps([(u, v, c, d) for (u, v), c, d in zip(uv, canview, depth)], H, W, cfg.sigma)
    noisy = encode_maps([(u, v, c, d) for (u, v), c, d in zip(uv, canview_noisy, depth_noisy)], H, W, cfg.sigma)
    noisy.star = np.clip(noisy.star + star_noise, 0.0, 1.0)
    return Instance(record, model, clean, noisy, ids, uv, canview, depth, canview_noisy, depth_noisy, pixel_scale)


def decode_instance(inst: Instance, mode: str, readout: str) -> list[DetectedKeypoint]:
    """Detections after swapping in the ground-truth components the mode asks for."""
    if readout == "continuous":
        cv = inst.canview if mode == "gt_canview" else inst.canview_noisy
        dd = inst.depth if mode == "gt_depth" else inst.depth_noisy
        return [DetectedKeypoint(float(u), float(v), 1.0, c.copy(), float(d)) for (u, v), c, d in zip(inst.uv, cv, dd)]
    maps = HybridMaps(
        inst.clean.star if mode == "gt_star" else inst.noisy.star,
        inst.clean.canview if mode == "gt_canview" else inst.noisy.canview,
        inst.clean.depth if mode == "gt_depth" else inst.noisy.depth,
    )
    return extract_peaks(maps)


def score_detections(
    record: AnnotationRecord,
    dets: Sequence[DetectedKeypoint],
    template: CategoryTemplate,
    use_depth: bool = True,
    alpha: float = 0.1,
) -> dict:
    """One report row: viewpoint error, PCK under both id protocols, id accuracy."""
    gt_R = record.rotation
    status = "ok"
    try:
        R_img_to_canon, _ = estimate_viewpoint(dets, record.camera, use_depth=use_depth)
        pred_R = R_img_to_canon.T
    except ConvergenceError as exc:
        pred_R = exc.transform.R.T
        status = "maxiter"
    except (InsufficientKeypointsError, DegenerateConfigurationError):
        pred_R = None
        status = "failed"
    err = math.pi if pred_R is None else geodesic_distance(pred_R, gt_R)

    visible = record.visible()
    learned = classify_keypoints(dets, template)
    oracle = assign_oracle_ids(dets, visible) if visible else [(d, None) for d in dets]
    cls_correct = sum(a[1] == b[1] for a, b in zip(learned, oracle))

    pck_correct = pck_oracle_correct = 0
    if visible:
        rec = EvalRecord(pred_R, gt_R, [(i, d.u, d.v, d.w) for d, i in learned], visible, record.bbox)
        pck_correct = sum(pck(rec, alpha)[0])
        rec.predictions = [(i, d.u, d.v, d.w) for d, i in oracle]
        pck_oracle_correct = sum(pck(rec, alpha)[0])

    az, el, ip = record.viewpoint.as_degrees()
    return {
        "image_id": record.image_id,
        "category": record.category,
        "azimuth_deg": az,
        "elevation_deg": el,
        "in_plane_deg": ip,
        "n_visible": len(visible),
        "n_detected": len(dets),
        "status": status,
        "rot_err_rad": float(err),
        "rot_err_deg": math.degrees(err),
        "pck_correct": int(pck_correct),
        "pck_oracle_correct": int(pck_oracle_correct),
        "pck_total": len(visible),
        "cls_correct": int(cls_correct),
        "cls_total": len(dets),
    }


ROW_FIELDS = (
    "image_id",
    "category",
    "azimuth_deg",
    "elevation_deg",
    "in_plane_deg",
    "n_visible",
    "n_detected",
    "status",
    "rot_err_rad",
    "rot_err_deg",
    "pck_correct",
    "pck_oracle_correct",
    "pck_total",
    "cls_correct",
    "cls_total",
)
SUMMARY_FIELDS = ("category", "n", "med_err_deg", "acc_pi_6", "acc_pi_18", "pck", "pck_oracle", "cls_acc", "failures")


def run_instance(cfg: ExperimentConfig, category: str, index: int) -> dict:
    rng = instance_rng(cfg.seed, category, index)
    inst = generate_instance(category, cfg, rng, image_id=f"{category}_{index:05d}")
    dets = decode_instance(inst, cfg.mode, cfg.readout)
    return score_detections(inst.record, dets, category_template(category), cfg.mode != "pnp", cfg.alpha)


def _run_chunk(args):
    cfg, category = args
    return [run_instance(cfg, category, i) for i in range(cfg.instances_per_category)]


def _ratio(num, den, scale=1.0):
    return scale * num / den if den else float("nan")


def aggregate(rows: Sequence[dict], categories: Optional[Sequence[str]] = None) -> list[dict]:
    """Per-category summary rows followed by a ``mean`` row (mean over categories)."""
    if categories is None:
        categories = list(dict.fromkeys(r["category"] for r in rows))
    out = []
    for cat in categories:
        sub = [r for r in rows if r["category"] == cat]
        if not sub:
            continue
        sc = scores_from_errors([r["rot_err_rad"] for r in sub])
        out.append(
            {
                "category": cat,
                "n": len(sub),
                "med_err_deg": sc.med_err_deg,
                "acc_pi_6": sc.acc_pi_6,
                "acc_pi_18": sc.acc_pi_18,
                "pck": _ratio(sum(r["pck_correct"] for r in sub), sum(r["pck_total"] for r in sub), 100.0),
                "pck_oracle": _ratio(
                    sum(r["pck_oracle_correct"] for r in sub), sum(r["pck_total"] for r in sub), 100.0
                ),
                "cls_acc": _ratio(sum(r["cls_correct"] for r in sub), sum(r["cls_total"] for r in sub)),
                "failures": sum(r["status"] == "failed" for r in sub),
            }
        )
    if out:
        mean = {"category": "mean", "n": sum(s["n"] for s in out), "failures": sum(s["failures"] for s in out)}
        for key in ("med_err_deg", "acc_pi_6", "acc_pi_18", "pck", "pck_oracle", "cls_acc"):
            mean[key] = float(np.mean([s[key] for s in out]))
        out.append(mean)
    return out


@dataclass
class RunReport:
    config: dict
    rows: list = field(default_factory=list)
    summary: list = field(default_factory=list)

    def mean(self) -> dict:
        return self.summary[-1] if self.summary else {}

    def by_category(self) -> dict:
        return {s["category"]: s for s in self.summary}


def run_experiment(cfg: ExperimentConfig, workers: int = 1) -> RunReport:
    """generate -> decode -> classify / oracle -> align -> score, for every instance."""
    jobs = [(cfg, cat) for cat in cfg.categories]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_run_chunk, jobs))
    else:
        chunks = [_run_chunk(j) for j in jobs]
    rows = [r for chunk in chunks for r in chunk]
    return RunReport(cfg.to_dict(), rows, aggregate(rows, cfg.categories))


def run_ablation(cfg: ExperimentConfig, modes: Sequence[str] = MODES, workers: int = 1) -> dict:
    return {m: run_experiment(cfg.replace(mode=m), workers=workers) for m in modes}


# --------------------------------------------------------------------------
# Reports


def _fmt(value) -> str:
    if isinstance(value, bool):
        return str(value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _csv_text(columns, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(row[c]) for c in columns])
    return buf.getvalue()


_INT_FIELDS = {"n_visible", "n_detected", "pck_correct", "pck_oracle_correct", "pck_total", "cls_correct", "cls_total", "n", "failures"}
_STR_FIELDS = {"image_id", "category", "status", "mode"}


def _parse(name, text):
    if name in _STR_FIELDS:
        return text
    if name in _INT_FIELDS:
        return int(text)
    return float(text)


def parse_csv(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return [{k: _parse(k, v) for k, v in row.items()} for row in csv.DictReader(fh)]


def format_table(summary: Sequence[dict], title: str = "") -> str:
    """Plain-text table: MedErr first, then Acc columns, then keypoint metrics."""
    header = ["category", "MedErr", "Acc_pi/6", "Acc_pi/18", "PCK", "PCK_oracle", "ClsAcc", "N", "fail"]
    lines = [title] if title else []
    lines.append(f"{header[0]:<12s}" + "".join(f"{h:>11s}" for h in header[1:]))
    for s in summary:
        lines.append(
            f"{s['category']:<12s}{s['med_err_deg']:>11.2f}{s['acc_pi_6']:>11.4f}{s['acc_pi_18']:>11.4f}"
            f"{s['pck']:>11.1f}{s['pck_oracle']:>11.1f}{s['cls_acc']:>11.4f}{s['n']:>11d}{s['failures']:>11d}"
        )
    return "\n".join(lines) + "\n"


def emit_report(report: RunReport, out_dir, formats: Sequence[str] = ("csv", "table")) -> list[Path]:
    """Write ``rows.csv`` + ``summary.csv`` (csv) and/or ``summary.txt`` (table)."""
    out = Path(out_dir)
    written = []
    for fmt in formats:
        if fmt == "csv":
            for name, columns, rows in (
                ("rows.csv", ROW_FIELDS, report.rows),
                ("summary.csv", SUMMARY_FIELDS, report.summary),
            ):
                _atomic_write(out / name, _csv_text(columns, rows))
                written.append(out / name)
        elif fmt in ("table", "text-table", "text"):
            cfg = json.dumps(report.config, sort_keys=True)
            text = f"# config: {cfg}\n# noise: {NOISE_NOTE}\n" + format_table(report.summary)
            _atomic_write(out / "summary.txt", text)
            written.append(out / "summary.txt")
        else:
            raise ValueError(f"unknown report format {fmt!r}")
    return written


def emit_ablation(reports: dict, out_dir) -> list[Path]:
    """One line per mode with its mean scores (``ablation.csv``, ``ablation.txt``)."""
    out = Path(out_dir)
    rows = []
    for mode, rep in reports.items():
        row = dict(rep.mean()) if rep.summary else {k: float("nan") for k in SUMMARY_FIELDS}
        if not rep.summary:
            row.update(n=0, failures=0)
        row["category"] = mode
        rows.append(row)
    _atomic_write(out / "ablation.csv", _csv_text(("mode",) + SUMMARY_FIELDS[1:], [{"mode": r["category"], **r} for r in rows]))
    _atomic_write(out / "ablation.txt", f"# noise: {NOISE_NOTE}\n" + format_table(rows).replace("category", "mode    ", 1))
    return [out / "ablation.csv", out / "ablation.txt"]


# --------------------------------------------------------------------------
# On-disk datasets: what ``generate`` writes and ``score`` reads

ANNOTATIONS_FILE = "annotations.jsonl"


def write_dataset(cfg: ExperimentConfig, out_dir) -> Path:
    """Generate instances and write templates, annotations and decoded-input maps.

    ``maps/<image_id>.txt`` holds the maps a network would have produced, with
    the configured mode's ground-truth substitutions already applied.
    """
    out = Path(out_dir)
    records = []
    for cat in cfg.categories:
        write_template(category_template(cat), out / "templates" / f"{cat}.json")
        for model in cad_models(cat):
            write_template(model, out / "cad" / f"{model.model_id}.json")
        for i in range(cfg.instances_per_category):
            inst = generate_instance(cat, cfg, instance_rng(cfg.seed, cat, i), image_id=f"{cat}_{i:05d}")
            maps = HybridMaps(
                inst.clean.star if cfg.mode == "gt_star" else inst.noisy.star,
                inst.clean.canview if cfg.mode == "gt_canview" else inst.noisy.canview,
                inst.clean.depth if cfg.mode == "gt_depth" else inst.noisy.depth,
            )
            write_maps(maps, out / "maps" / f"{inst.record.image_id}.txt")
            records.append(inst.record)
    write_annotations(records, out / ANNOTATIONS_FILE)
    _atomic_write(out / "config.json", json.dumps(cfg.to_dict(), indent=1, sort_keys=True) + "\n")
    return out


def score_dataset(data_dir, use_depth: bool = True, alpha: float = 0.1, subpixel: bool = False) -> RunReport:
    """Decode every record's maps from ``data_dir`` and score them."""
    data = Path(data_dir)
    records = read_annotations(data / ANNOTATIONS_FILE)
    templates: dict = {}
    rows = []
    for rec in records:
        if rec.category not in templates:
            templates[rec.category] = read_template(data / "templates" / f"{rec.category}.json")
        maps = read_maps(data / "maps" / f"{rec.image_id}.txt")
        rows.append(score_detections(rec, extract_peaks(maps, subpixel=subpixel), templates[rec.category], use_depth, alpha))
    config = {"data_dir": str(data), "use_depth": use_depth, "alpha": alpha, "subpixel": subpixel}
    return RunReport(config, rows, aggregate(rows))
