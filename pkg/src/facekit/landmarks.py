"""Constants for the standard 68-point facial landmark layout.

Index ranges follow the common 68-point annotation scheme: indices run
left-to-right in image space, so the "left" eye is the one on the image's
left side regardless of the subject's anatomical left/right.
"""

from __future__ import annotations

NUM_LANDMARKS = 68

# Half-open [start, stop) index ranges per semantic region.
LANDMARK_REGIONS: dict[str, tuple[int, int]] = {
    "contour": (0, 17),
    "brow": (17, 27),
    "nose": (27, 36),
    "eyes": (36, 48),
    "mouth": (48, 68),
}

# Report column order used by the evaluation table.
REGION_ORDER = ("eyes", "nose", "brow", "mouth", "contour")

LEFT_EYE_LANDMARKS = tuple(range(36, 42))   # image-left eye ring
RIGHT_EYE_LANDMARKS = tuple(range(42, 48))  # image-right eye ring

# Segmentation mask palette.
MASK_BACKGROUND = 0
MASK_SKIN = 1
MASK_LEFT_EYE = 2
MASK_RIGHT_EYE = 3
MASK_OTHER_FACE = 4

#: Default landmark-index -> mask-class mapping used for eye snapping.
DEFAULT_EYE_CLASSES: dict[int, int] = {
    **{i: MASK_LEFT_EYE for i in LEFT_EYE_LANDMARKS},
    **{i: MASK_RIGHT_EYE for i in RIGHT_EYE_LANDMARKS},
}


def region_of(index: int) -> str:
    """Region name owning a landmark index in the standard layout."""
    for name, (lo, hi) in LANDMARK_REGIONS.items():
        if lo <= index < hi:
            return name
    raise IndexError(f"landmark index {index} outside the 68-point layout")
