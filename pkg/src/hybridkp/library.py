"""Built-in synthetic categories.

Twelve hand-made keypoint layouts with 4 to 12 keypoints.  ``chair`` and
``diningtable`` share four legs at identical canonical positions so that
cross-category keypoint structure is present in the data.  Each category has a
few CAD variants (the base layout plus small seeded jitter); the category
template is their per-id mean.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np

from .dataset import CadModelKeypoints, normalize_canonical, template_from_models
from .metrics import CategoryTemplate

N_VARIANTS = 3
VARIANT_JITTER = 0.015


def _mirror(name, x, y, z):
    return [(f"left_{name}", (-x, y, z)), (f"right_{name}", (x, y, z))]


def _legs(x, y, z):
    pts = []
    for side, sx in (("left", -1), ("right", 1)):
        for end, sz in (("front", 1), ("back", -1)):
            pts.append((f"{end}_{side}_leg", (sx * x, y, sz * z)))
    return pts


# x to the right, y up, z towards the viewer of the front view.
_LAYOUTS = {
    "aeroplane": [
        ("nose", (0.0, 0.0, 1.0)),
        ("tail", (0.0, 0.1, -0.9)),
        *_mirror("wing_tip", 1.0, 0.0, 0.0),
        *_mirror("elevator", 0.35, 0.1, -0.85),
        ("rudder_top", (0.0, 0.45, -0.95)),
        ("belly", (0.0, -0.2, 0.3)),
    ],
    "bicycle": [
        ("front_hub", (0.0, 0.35, 0.55)),
        ("rear_hub", (0.0, 0.35, -0.55)),
        ("front_contact", (0.0, 0.0, 0.55)),
        ("rear_contact", (0.0, 0.0, -0.55)),
        ("seat", (0.0, 0.95, -0.25)),
        *_mirror("handle", 0.25, 1.0, 0.4),
        *_mirror("pedal", 0.12, 0.25, 0.0),
    ],
    "boat": [
        ("bow", (0.0, 0.2, 1.0)),
        *_mirror("stern", 0.35, 0.25, -0.9),
        ("keel", (0.0, -0.2, 0.0)),
        ("mast_top", (0.0, 1.0, 0.1)),
        *_mirror("gunwale", 0.4, 0.25, 0.1),
    ],
    "bottle": [
        ("cap", (0.0, 1.0, 0.0)),
        ("base_front", (0.0, 0.0, 0.2)),
        *_mirror("base", 0.18, 0.0, -0.1),
    ],
    "bus": [
        *[
            (f"{end}_{lvl}_{side}", (sx * 0.175, y, sz * 0.5))
            for end, sz in (("front", 1), ("back", -1))
            for lvl, y in (("top", 0.45), ("bottom", 0.05))
            for side, sx in (("left", -1), ("right", 1))
        ],
        *[
            (f"{end}_{side}_wheel", (sx * 0.18, 0.0, sz * 0.32))
            for end, sz in (("front", 1), ("back", -1))
            for side, sx in (("left", -1), ("right", 1))
        ],
    ],
    "car": [
        *[
            (f"{end}_{side}_wheel", (sx * 0.2, 0.0, sz * 0.3))
            for end, sz in (("front", 1), ("back", -1))
            for side, sx in (("left", -1), ("right", 1))
        ],
        *_mirror("headlight", 0.15, 0.15, 0.5),
        *_mirror("taillight", 0.15, 0.15, -0.5),
        *[
            (f"{end}_{side}_roof", (sx * 0.15, 0.4, sz * 0.15))
            for end, sz in (("front", 1), ("back", -1))
            for side, sx in (("left", -1), ("right", 1))
        ],
    ],
    "chair": [
        *_legs(0.3, -0.5, 0.3),
        *[
            (f"seat_{end}_{side}", (sx * 0.3, 0.0, sz * 0.3))
            for end, sz in (("front", 1), ("back", -1))
            for side, sx in (("left", -1), ("right", 1))
        ],
        *_mirror("back_top", 0.3, 0.5, -0.3),
    ],
    "diningtable": [
        *_legs(0.3, -0.5, 0.3),
        *[
            (f"top_{end}_{side}", (sx * 0.5, 0.5, sz * 0.3))
            for end, sz in (("front", 1), ("back", -1))
            for side, sx in (("left", -1), ("right", 1))
        ],
    ],
    "motorbike": [
        ("front_hub", (0.0, 0.3, 0.6)),
        ("rear_hub", (0.0, 0.3, -0.6)),
        ("front_contact", (0.0, 0.0, 0.6)),
        ("rear_contact", (0.0, 0.0, -0.6)),
        *_mirror("handle", 0.3, 0.8, 0.4),
        ("seat_front", (0.0, 0.65, 0.0)),
        ("seat_back", (0.0, 0.65, -0.35)),
    ],
    "sofa": [
        *[
            (f"base_{end}_{side}", (sx * 0.5, 0.0, sz * 0.25))
            for end, sz in (("front", 1), ("back", -1))
            for side, sx in (("left", -1), ("right", 1))
        ],
        *_mirror("seat_front", 0.42, 0.22, 0.25),
        *_mirror("back_top", 0.5, 0.55, -0.25),
        *_mirror("armrest", 0.5, 0.35, 0.15),
    ],
    "train": [
        *_mirror("front_top", 0.15, 0.45, 0.4),
        *_mirror("front_bottom", 0.15, 0.05, 0.5),
        *_mirror("rear_top", 0.15, 0.45, -0.5),
        *_mirror("rear_bottom", 0.15, 0.05, -0.5),
    ],
    "tvmonitor": [
        *_mirror("screen_top", 0.5, 0.7, 0.05),
        *_mirror("screen_bottom", 0.5, 0.1, 0.05),
        *_mirror("back_top", 0.3, 0.6, -0.15),
        *_mirror("back_bottom", 0.3, 0.2, -0.15),
    ],
}

CATEGORIES = tuple(_LAYOUTS)


def base_model(category: str) -> CadModelKeypoints:
    layout = _LAYOUTS[category]
    ids = [kp for kp, _ in layout]
    pts = np.array([xyz for _, xyz in layout], dtype=np.float64)
    return normalize_canonical(CadModelKeypoints(f"{category}_base", category, ids, pts))


@lru_cache(maxsize=None)
def cad_models(category: str) -> tuple:
    """Base layout plus ``N_VARIANTS - 1`` jittered, renormalized variants."""
    base = base_model(category)
    models = [CadModelKeypoints(f"{category}_00", category, base.ids, base.points)]
    rng = np.random.default_rng([CATEGORIES.index(category), 7919])
    for k in range(1, N_VARIANTS):
        pts = base.points + rng.normal(0.0, VARIANT_JITTER, base.points.shape)
        models.append(normalize_canonical(CadModelKeypoints(f"{category}_{k:02d}", category, base.ids, pts)))
    return tuple(models)


@lru_cache(maxsize=None)
def category_template(category: str) -> CategoryTemplate:
    if category not in _LAYOUTS:
        raise KeyError(f"unknown category {category!r}; choose from {', '.join(CATEGORIES)}")
    return template_from_models(cad_models(category))


def cad_model(category: str, model_id: str) -> CadModelKeypoints:
    for m in cad_models(category):
        if m.model_id == model_id:
            return m
    raise KeyError(f"no CAD model {model_id!r} in {category!r}")
