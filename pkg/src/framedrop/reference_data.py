"""Reference KITTI tracking measurements for frame-dropped perception systems.

Baseline rows use pure periodic dropping; extension rows add the camera event
trigger. Effective processing targets are fractions, HOTA/MOTA/MOTP percent,
system draw is the median power in watts and yield watts per HOTA point.
Baseline effective targets equal the configured n/m exactly.
"""

BASELINE_TARGETS = (1.0, 1 / 2, 1 / 3, 1 / 5, 1 / 10)
TARGET_LABELS = ("100", "50", "33", "20", "10")
TRACKERS = ("castrack", "deepfusionmot")
MODELS = ("pointpillars", "pv-rcnn", "second")

# (tracker, model) -> per-target columns in BASELINE_TARGETS order
BASELINE = {
    ("castrack", "pointpillars"): {
        "mota": (81.2, 76.2, 53.0, 40.0, 30.9), "motp": (87.8, 86.5, 85.5, 83.7, 81.4),
        "hota": (74.9, 70.2, 61.4, 53.1, 42.8), "draw": (396, 375, 313, 256, 221),
        "yield": (None, 4.4, 6.2, 6.4, 5.5),
    },
    ("castrack", "pv-rcnn"): {
        "mota": (83.7, 77.7, 56.6, 42.2, 32.0), "motp": (88.6, 87.6, 86.5, 84.7, 82.2),
        "hota": (78.0, 72.9, 63.2, 56.7, 46.0), "draw": (461, 384, 335, 295, 256),
        "yield": (None, 15.0, 8.5, 7.8, 6.4),
    },
    ("castrack", "second"): {
        "mota": (83.0, 76.7, 54.1, 37.2, 29.0), "motp": (87.4, 86.5, 85.4, 83.7, 81.0),
        "hota": (77.0, 72.0, 62.6, 55.4, 44.5), "draw": (494, 418, 349, 297, 241),
        "yield": (None, 15.3, 10.1, 9.1, 7.8),
    },
    ("deepfusionmot", "pointpillars"): {
        "mota": (76.5, 75.6, 64.7, 44.7, 5.4), "motp": (78.2, 77.8, 77.1, 76.2, 76.1),
        "hota": (66.0, 64.6, 58.9, 50.9, 37.4), "draw": (399, 381, 315, 259, 225),
        "yield": (None, 13.1, 11.8, 9.3, 6.1),
    },
    ("deepfusionmot", "pv-rcnn"): {
        "mota": (74.2, 71.7, 62.2, 43.4, 4.5), "motp": (78.9, 78.5, 77.8, 76.6, 76.2),
        "hota": (66.5, 65.0, 59.5, 52.1, 39.4), "draw": (464, 385, 338, 295, 261),
        "yield": (None, 52.7, 18.0, 11.8, 7.5),
    },
    ("deepfusionmot", "second"): {
        "mota": (70.8, 67.4, 58.1, 36.4, 0.0), "motp": (78.2, 77.7, 77.0, 75.9, 75.5),
        "hota": (64.6, 63.2, 58.4, 50.7, 37.9), "draw": (477, 417, 349, 297, 247),
        "yield": (None, 43.5, 20.4, 12.9, 8.6),
    },
}

# columns for the 50/33/20/10 baselines with the event trigger enabled
EXTENSION = {
    ("castrack", "pointpillars"): {
        "eff_target": (0.55, 0.41, 0.30, 0.22), "hota": (70.4, 62.5, 57.7, 52.0),
        "draw": (378, 319, 266, 230), "yield": (7.3, 4.1, 6.2, 7.6),
    },
    ("castrack", "pv-rcnn"): {
        "eff_target": (0.55, 0.40, 0.30, 0.23), "hota": (73.0, 64.2, 59.7, 54.5),
        "draw": (388, 346, 306, 270), "yield": (8.1, 14.3, 8.3, 8.5),
    },
    ("castrack", "second"): {
        "eff_target": (0.54, 0.39, 0.29, 0.21), "hota": (72.2, 63.9, 59.3, 52.3),
        "draw": (423, 354, 302, 260), "yield": (9.5, 14.9, 10.7, 10.8),
    },
    ("deepfusionmot", "pointpillars"): {
        "eff_target": (0.54, 0.39, 0.27, 0.19), "hota": (64.8, 60.9, 58.1, 51.4),
        "draw": (379, 316, 264, 228), "yield": (11.7, 16.9, 16.5, 17.1),
    },
    ("deepfusionmot", "pv-rcnn"): {
        "eff_target": (0.55, 0.39, 0.28, 0.20), "hota": (65.2, 61.1, 58.9, 52.7),
        "draw": (389, 342, 300, 266), "yield": (14.4, 59.2, 22.8, 21.6),
    },
    ("deepfusionmot", "second"): {
        "eff_target": (0.53, 0.38, 0.27, 0.18), "hota": (63.6, 60.0, 57.0, 51.2),
        "draw": (421, 355, 305, 261), "yield": (16.1, 52.7, 26.5, 22.4),
    },
}


def baseline_draw_points(tracker: str, model: str) -> list[tuple[float, float]]:
    """(effective target, watts) pairs of a baseline row."""
    return list(zip(BASELINE_TARGETS, map(float, BASELINE[(tracker, model)]["draw"])))
