"""Projection texture mapping and background diffusion.

The fitted pose projects every vertex into the source image; normalized
image coordinates become per-vertex UVs. Because silhouette-adjacent texels
of the raw image hold background colors, the background is flood-filled from
the face outward before the image is used as a texture.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .camera import Camera, Pose, project
from .errors import EmptyFaceMask, ParseError
from .mesh import TriMesh, save_obj
from .refine import SegmentationMask

__all__ = [
    "RasterImage",
    "load_image",
    "save_image",
    "compute_tex_coords",
    "diffuse_background",
    "export_textured_obj",
]


@dataclass(frozen=True)
class RasterImage:
    """8-bit RGB raster, row-major (H, W, 3)."""

    pixels: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.pixels)
        if a.ndim != 3 or a.shape[2] != 3:
            raise ValueError(f"pixels must be (H, W, 3), got {a.shape}")
        if a.dtype != np.uint8:
            if a.size and (a.min() < 0 or a.max() > 255):
                raise ValueError("pixel values out of uint8 range")
            a = a.astype(np.uint8)
        a = np.ascontiguousarray(a)
        a.flags.writeable = False
        object.__setattr__(self, "pixels", a)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


def load_image(path: str | Path) -> RasterImage:
    """Read a PNG or PPM image as RGB."""
    path = Path(path)
    try:
        with Image.open(path) as im:
            arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
    except Exception as exc:
        raise ParseError(f"unreadable image: {exc}", path=str(path)) from exc
    return RasterImage(arr)


def save_image(image: RasterImage, path: str | Path) -> None:
    """Write PNG or PPM depending on the file suffix."""
    path = Path(path)
    pil = Image.fromarray(image.pixels, mode="RGB")
    if path.suffix.lower() in (".ppm", ".pnm"):
        pil.save(path, format="PPM")
    else:
        pil.save(path)


def compute_tex_coords(
    mesh: TriMesh,
    pose: Pose,
    cam: Camera,
    *,
    return_clamp_count: bool = False,
):
    """Per-vertex UVs from the projected pixel positions.

    u = x_px / width and v = 1 - y_px / height, clamped to [0, 1]. Pass
    ``return_clamp_count`` to also get how many coordinates were clamped
    (vertices projecting outside the image).
    """
    px = project(mesh.vertices, pose, cam)
    uv = np.column_stack([px[:, 0] / cam.image_width, 1.0 - px[:, 1] / cam.image_height])
    clamped = np.clip(uv, 0.0, 1.0)
    count = int(np.count_nonzero(uv != clamped))
    out = mesh.with_tex_coords(clamped)
    if return_clamp_count:
        return out, count
    return out


def diffuse_background(image: RasterImage, mask: SegmentationMask) -> RasterImage:
    """Flood face colors outward over the background.

    Background pixels are visited in multi-source breadth-first order, seeded
    by every background pixel 4-adjacent to a face pixel (seeds enqueued in
    row-major order; discovered neighbors enqueued up, left, right, down).
    Each visited pixel takes the rounded average of its already-colored
    4-neighbors: face pixels and background pixels visited before it. Face
    pixels are never modified; background pixels unreachable from the face
    keep their original color. Deterministic, and idempotent when re-run on
    its own output with the same mask.

    Raises
    ------
    EmptyFaceMask
        The mask contains no face pixel.
    """
    labels = mask.labels
    if labels.shape != image.pixels.shape[:2]:
        raise ValueError(
            f"mask {labels.shape} does not match image {image.pixels.shape[:2]}"
        )
    face = mask.face_pixels()
    if not face.any():
        raise EmptyFaceMask("mask has no face pixels")
    H, W = labels.shape
    out = image.pixels.astype(np.float64)
    colored = face.copy()

    near_face = np.zeros_like(face)
    near_face[:-1] |= face[1:]
    near_face[1:] |= face[:-1]
    near_face[:, :-1] |= face[:, 1:]
    near_face[:, 1:] |= face[:, :-1]
    seeds = np.argwhere(~face & near_face)  # row-major

    queue: deque[tuple[int, int]] = deque(map(tuple, seeds))
    enqueued = np.zeros_like(face)
    enqueued[seeds[:, 0], seeds[:, 1]] = True

    while queue:
        r, c = queue.popleft()
        acc = np.zeros(3)
        n = 0
        for rr, cc in ((r - 1, c), (r, c - 1), (r, c + 1), (r + 1, c)):
            if 0 <= rr < H and 0 <= cc < W and colored[rr, cc]:
                acc += out[rr, cc]
                n += 1
        # Seeds always have a colored face neighbor; later pixels have their
        # BFS parent, so n >= 1 here.
        out[r, c] = np.floor(acc / n + 0.5)
        colored[r, c] = True
        for rr, cc in ((r - 1, c), (r, c - 1), (r, c + 1), (r + 1, c)):
            if 0 <= rr < H and 0 <= cc < W and not face[rr, cc] and not enqueued[rr, cc]:
                enqueued[rr, cc] = True
                queue.append((rr, cc))
    return RasterImage(out.astype(np.uint8))


def export_textured_obj(
    mesh: TriMesh,
    texture: RasterImage,
    obj_path: str | Path,
    *,
    material_name: str = "face",
) -> None:
    """Write mesh + material + texture as sibling OBJ/MTL/PNG files."""
    if mesh.tex_coords is None:
        raise ValueError("mesh has no tex_coords; run compute_tex_coords first")
    obj_path = Path(obj_path)
    mtl_path = obj_path.with_suffix(".mtl")
    png_path = obj_path.with_suffix(".png")
    save_image(texture, png_path)
    mtl_path.write_text(
        "\n".join(
            [
                f"newmtl {material_name}",
                "Ka 1.0 1.0 1.0",
                "Kd 1.0 1.0 1.0",
                "Ks 0.0 0.0 0.0",
                f"map_Kd {png_path.name}",
            ]
        )
        + "\n",
        encoding="utf-8",
    )
    save_obj(mesh, obj_path, mtl_filename=mtl_path.name, material_name=material_name)
