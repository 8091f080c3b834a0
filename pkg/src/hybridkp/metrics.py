"""Keypoint identity assignment and evaluation metrics (PCK, MedErr, Acc)."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .geometry import geodesic_distances

DEFAULT_ALPHA = 0.1
VIEW_THRESHOLDS = (math.pi / 6, math.pi / 18)


@dataclass(frozen=True)
class CategoryTemplate:
    category: str
    ids: tuple
    means: np.ndarray = field(repr=False)  # (K, 3)

    def __post_init__(self):
        means = np.asarray(self.means, dtype=np.float64).reshape(-1, 3)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "ids", tuple(self.ids))
        if len(set(self.ids)) != len(self.ids):
            raise ValueError(f"duplicate keypoint ids in template {self.category!r}")
        if len(self.ids) != len(means):
            raise ValueError("one mean point per id required")

    def __len__(self):
        return len(self.ids)

    def point(self, kp_id) -> np.ndarray:
        return self.means[self.ids.index(kp_id)]

    def min_separation(self) -> float:
        """Smallest distance between two template means."""
        diff = self.means[:, None, :] - self.means[None, :, :]
        dist = np.linalg.norm(diff, axis=-1)
        dist[np.diag_indices(len(dist))] = np.inf
        return float(dist.min())


def build_template(category: str, models: Sequence[dict]) -> CategoryTemplate:
    """Per-id mean over CAD models.

    Each model maps keypoint id -> canonical xyz; an id missing from (or mapped
    to ``None`` in) a model counts as absent there.  Ids keep first-seen order.
    """
    order: list = []
    sums: dict = {}
    counts: dict = {}
    for model in models:
        for kp_id, xyz in model.items():
            if kp_id not in sums:
                order.append(kp_id)
                sums[kp_id] = np.zeros(3)
                counts[kp_id] = 0
            if xyz is None:
                continue
            sums[kp_id] = sums[kp_id] + np.asarray(xyz, dtype=np.float64)
            counts[kp_id] += 1
    missing = [k for k in order if counts[k] == 0]
    if missing:
        raise ValueError(f"keypoint ids present in no model: {missing}")
    if not order:
        raise ValueError("no keypoints given")
    return CategoryTemplate(category, order, np.array([sums[k] / counts[k] for k in order]))


def _nearest(points, refs):
    # argmin keeps the first index on ties, i.e. template / annotation order
    d2 = ((points[:, None, :] - refs[None, :, :]) ** 2).sum(axis=-1)
    return d2.argmin(axis=1)


def classify_keypoints(dets, template: CategoryTemplate) -> list[tuple]:
    """Label each detection with the id of the nearest template mean (canonical space)."""
    if len(template) == 0:
        raise ValueError("empty template")
    if len(dets) == 0:
        return []
    feats = np.array([d.canview for d in dets], dtype=np.float64)
    idx = _nearest(feats, template.means)
    return [(det, template.ids[i]) for det, i in zip(dets, idx)]


def assign_oracle_ids(dets, gt_keypoints_2d: Sequence[tuple]) -> list[tuple]:
    """Label each detection with the id of the closest annotation in the image.

    ``gt_keypoints_2d`` holds ``(id, u, v)`` triples.
    """
    if len(gt_keypoints_2d) == 0:
        raise ValueError("no ground-truth keypoints")
    if len(dets) == 0:
        return []
    ids = [g[0] for g in gt_keypoints_2d]
    refs = np.array([[g[1], g[2]] for g in gt_keypoints_2d], dtype=np.float64)
    uv = np.array([[d.u, d.v] for d in dets], dtype=np.float64)
    idx = _nearest(uv, refs)
    return [(det, ids[i]) for det, i in zip(dets, idx)]


@dataclass
class EvalRecord:
    """Prediction vs ground truth for one object instance.

    ``predictions`` are ``(id, u, v, confidence)``; ``ground_truth`` are
    ``(id, u, v)`` for the annotated (visible) keypoints.
    """

    pred_R: Optional[np.ndarray]
    gt_R: np.ndarray
    predictions: list
    ground_truth: list
    bbox: tuple  # (h, w)

    def __post_init__(self):
        h, w = self.bbox
        if not (h > 0 and w > 0):
            raise ValueError(f"bbox must be positive, got {self.bbox}")


def resolve_duplicates(predictions) -> dict:
    """id -> (u, v) keeping the most confident prediction per id (first on ties)."""
    best: dict = {}
    for kp_id, u, v, conf in predictions:
        if kp_id not in best or conf > best[kp_id][2]:
            best[kp_id] = (u, v, conf)
    return {k: (u, v) for k, (u, v, _) in best.items()}


def pck(record: EvalRecord, alpha: float = DEFAULT_ALPHA) -> tuple[list[bool], float]:
    """Per-annotation correctness and percentage.

    Correct iff the chosen prediction for that id is strictly closer than
    alpha * max(h, w).  Annotations with no prediction count as wrong.
    """
    if not record.ground_truth:
        return [], float("nan")
    chosen = resolve_duplicates(record.predictions)
    thresh = alpha * max(record.bbox)
    flags = []
    for kp_id, u, v in record.ground_truth:
        hit = chosen.get(kp_id)
        flags.append(hit is not None and math.hypot(hit[0] - u, hit[1] - v) < thresh)
    return flags, 100.0 * sum(flags) / len(flags)


def median(values) -> float:
    """Median; the even case averages the two middle values."""
    vals = np.sort(np.asarray(values, dtype=np.float64))
    if len(vals) == 0:
        raise ValueError("median of empty sequence")
    mid = len(vals) // 2
    if len(vals) % 2:
        return float(vals[mid])
    return float(0.5 * (vals[mid - 1] + vals[mid]))


@dataclass(frozen=True)
class ViewpointScores:
    med_err_deg: float
    acc_pi_6: float
    acc_pi_18: float
    count: int


def scores_from_errors(errors_rad) -> ViewpointScores:
    err = np.asarray(errors_rad, dtype=np.float64)
    if len(err) == 0:
        raise ValueError("no records to score")
    return ViewpointScores(
        med_err_deg=math.degrees(median(err)),
        acc_pi_6=float(np.mean(err < VIEW_THRESHOLDS[0])),
        acc_pi_18=float(np.mean(err < VIEW_THRESHOLDS[1])),
        count=len(err),
    )


def rotation_errors(records: Sequence[EvalRecord]) -> np.ndarray:
    """Geodesic error per record; a missing prediction scores pi."""
    errs = np.full(len(records), math.pi)
    have = [i for i, r in enumerate(records) if r.pred_R is not None]
    if have:
        pred = np.array([records[i].pred_R for i in have])
        gt = np.array([records[i].gt_R for i in have])
        errs[have] = geodesic_distances(pred, gt)
    return errs


def viewpoint_scores(records: Sequence[EvalRecord]) -> ViewpointScores:
    """MedErr (degrees), Acc at pi/6 and at pi/18."""
    if len(records) == 0:
        raise ValueError("no records to score")
    return scores_from_errors(rotation_errors(records))
