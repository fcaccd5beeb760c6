"""Software rasterizer, spherical-harmonic shading and error metrics.

The rasterizer is orthographic with a z-buffer: camera-space z is the depth
(larger z is nearer; ties go to the lower face index), normals and texture
coordinates are interpolated barycentrically at pixel centers, and back
faces (camera-space normal z <= 0) are culled. Shading is Lambertian under a
real spherical-harmonic lighting environment.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import landmarks as lmk
from .camera import Camera, Pose, project, to_camera_space
from .errors import (
    EmptyRegion,
    LengthMismatch,
    MissingTexCoords,
    NonUnitNormal,
)
from .fitting import LandmarkSet
from .mesh import TriMesh, vertex_normals
from .morphable import MorphableModel, landmark_positions
from .refine import SegmentationMask
from .texture import RasterImage

__all__ = [
    "SHLighting",
    "sh_basis",
    "shade",
    "RenderOutput",
    "rasterize",
    "photometric_error",
    "landmark_error_report",
    "format_report",
]

# Real spherical harmonics, graphics normalization (no Condon-Shortley sign).
_C0 = 0.5 * np.sqrt(1.0 / np.pi)            # 0.282095
_C1 = np.sqrt(3.0 / (4.0 * np.pi))          # 0.488603
_C2A = 0.5 * np.sqrt(15.0 / np.pi)          # 1.092548 (xy, yz, xz)
_C2B = 0.25 * np.sqrt(5.0 / np.pi)          # 0.315392 (3z^2 - 1)
_C2C = 0.25 * np.sqrt(15.0 / np.pi)         # 0.546274 (x^2 - y^2)

MAX_BANDS = 3


def sh_basis(normal: np.ndarray, bands: int = MAX_BANDS) -> np.ndarray:
    """Real SH basis values at unit direction(s).

    Ordering is (l, m) = (0,0), (1,-1), (1,0), (1,1), (2,-2), (2,-1), (2,0),
    (2,1), (2,2); the three band-1 entries are proportional to (y, z, x).
    Accepts a single (3,) direction or an (N, 3) batch.

    Raises
    ------
    NonUnitNormal
        Any direction's length differs from 1 by more than 1e-6.
    """
    if not 1 <= bands <= MAX_BANDS:
        raise ValueError(f"bands must be in [1, {MAX_BANDS}]")
    n = np.asarray(normal, dtype=np.float64)
    single = n.ndim == 1
    n = n.reshape(-1, 3)
    lengths = np.linalg.norm(n, axis=1)
    if np.any(np.abs(lengths - 1.0) > 1e-6):
        worst = float(lengths[np.argmax(np.abs(lengths - 1.0))])
        raise NonUnitNormal(f"direction length {worst} (must be 1 within 1e-6)")
    x, y, z = n[:, 0], n[:, 1], n[:, 2]
    cols = [np.full(len(n), _C0)]
    if bands >= 2:
        cols += [_C1 * y, _C1 * z, _C1 * x]
    if bands >= 3:
        cols += [_C2A * x * y, _C2A * y * z, _C2B * (3.0 * z * z - 1.0),
                 _C2A * x * z, _C2C * (x * x - y * y)]
    out = np.column_stack(cols)
    return out[0] if single else out


@dataclass(frozen=True)
class SHLighting:
    """SH lighting coefficients: one row per color channel, or a single row
    applied to all channels (monochrome mode). Columns follow sh_basis order;
    directions are camera-space."""

    coefficients: np.ndarray  # (1 or 3, bands^2)
    bands: int = MAX_BANDS

    def __post_init__(self):
        c = np.ascontiguousarray(np.asarray(self.coefficients, dtype=np.float64))
        if c.ndim == 1:
            c = c.reshape(1, -1)
        if c.shape[0] not in (1, 3):
            raise ValueError("coefficients must have 1 or 3 channel rows")
        if not 1 <= self.bands <= MAX_BANDS or c.shape[1] != self.bands**2:
            raise ValueError(
                f"coefficient columns {c.shape[1]} do not match bands^2 = {self.bands**2}"
            )
        c.flags.writeable = False
        object.__setattr__(self, "coefficients", c)

    @classmethod
    def neutral(cls, bands: int = MAX_BANDS) -> "SHLighting":
        """Constant-band light that reproduces albedo exactly."""
        c = np.zeros(bands**2)
        c[0] = 1.0 / _C0
        return cls(c, bands)


def shade(
    albedo: np.ndarray,
    normal: np.ndarray,
    lighting: SHLighting,
    *,
    clamp: bool = True,
) -> np.ndarray:
    """Lambertian SH shading: albedo * sum_k coeff_k * basis_k(normal).

    Accepts single (3,) albedo/normal or (N, 3) batches; output is clamped
    to [0, 1] unless ``clamp`` is disabled (the pre-clamp value is linear in
    both albedo and lighting coefficients).
    """
    a = np.asarray(albedo, dtype=np.float64)
    single = a.ndim == 1
    a = a.reshape(-1, 3)
    basis = np.atleast_2d(sh_basis(normal, lighting.bands))
    if len(basis) != len(a):
        raise LengthMismatch(f"{len(a)} albedos vs {len(basis)} normals")
    irradiance = basis @ lighting.coefficients.T  # (N, 1 or 3)
    out = a * irradiance
    if clamp:
        out = np.clip(out, 0.0, 1.0)
    return out[0] if single else out


@dataclass(frozen=True)
class RenderOutput:
    """Rasterization buffers.

    ``color`` is (H, W, 3) uint8; ``coverage`` marks pixels any face won;
    ``depth`` holds camera-space z where covered (larger is nearer) and -inf
    elsewhere; ``face_index`` holds the winning face id or -1.
    """

    color: np.ndarray
    coverage: np.ndarray
    depth: np.ndarray
    face_index: np.ndarray

    @property
    def image(self) -> RasterImage:
        return RasterImage(self.color)


def _sample_nearest(texture: RasterImage, uv: np.ndarray) -> np.ndarray:
    tx = np.clip(np.floor(uv[:, 0] * texture.width), 0, texture.width - 1).astype(np.int64)
    ty = np.clip(np.floor((1.0 - uv[:, 1]) * texture.height), 0, texture.height - 1).astype(
        np.int64
    )
    return texture.pixels[ty, tx].astype(np.float64) / 255.0


def rasterize(
    mesh: TriMesh,
    pose: Pose,
    cam: Camera,
    lighting: SHLighting | None = None,
    texture: RasterImage | None = None,
    *,
    background: tuple[int, int, int] = (0, 0, 0),
) -> RenderOutput:
    """Render the mesh under the pose.

    Albedo comes from ``texture`` sampled at interpolated UVs (nearest
    texel) when given, else from interpolated vertex colors, else a constant
    0.8 gray. ``lighting`` defaults to the neutral light. Deterministic for
    identical inputs.

    Raises
    ------
    MissingTexCoords
        ``texture`` given but the mesh has no tex_coords.
    """
    if texture is not None and mesh.tex_coords is None:
        raise MissingTexCoords("texture provided but mesh has no tex_coords")
    if lighting is None:
        lighting = SHLighting.neutral()
    H, W = cam.image_height, cam.image_width

    color = np.empty((H, W, 3), dtype=np.uint8)
    color[:] = np.asarray(background, dtype=np.uint8)
    depth = np.full((H, W), -np.inf)
    face_index = np.full((H, W), -1, dtype=np.int64)

    cam_pts = to_camera_space(mesh.vertices, pose)
    px = cam.pix(cam_pts[:, :2])
    normals_cam = vertex_normals(mesh) @ pose.rotation.T

    f = mesh.faces
    if len(f) == 0:
        return RenderOutput(color, np.zeros((H, W), dtype=bool), depth, face_index)

    # Back-face cull on camera-space face normals (camera looks along -z).
    e1 = cam_pts[f[:, 1]] - cam_pts[f[:, 0]]
    e2 = cam_pts[f[:, 2]] - cam_pts[f[:, 0]]
    facing = (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]) > 0.0

    tri_px = px[f]  # (F, 3, 2)
    mins = np.maximum(np.floor(tri_px.min(axis=1) - 0.5).astype(np.int64), 0)
    maxs = np.minimum(np.ceil(tri_px.max(axis=1) + 0.5).astype(np.int64), [W - 1, H - 1])

    for j in np.nonzero(facing)[0]:
        x0, y0 = mins[j]
        x1, y1 = maxs[j]
        if x0 > x1 or y0 > y1:
            continue
        a, b, c = tri_px[j]
        area2 = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        if area2 == 0.0:
            continue
        xs = np.arange(x0, x1 + 1) + 0.5
        ys = np.arange(y0, y1 + 1) + 0.5
        gx, gy = np.meshgrid(xs, ys)
        w0 = ((b[0] - gx) * (c[1] - gy) - (b[1] - gy) * (c[0] - gx)) / area2
        w1 = ((c[0] - gx) * (a[1] - gy) - (c[1] - gy) * (a[0] - gx)) / area2
        w2 = 1.0 - w0 - w1
        inside = (w0 >= -1e-9) & (w1 >= -1e-9) & (w2 >= -1e-9)
        if not inside.any():
            continue
        vids = f[j]
        # interpolate in delta form: exact when all three vertices agree,
        # so constant attributes survive weight rounding untouched
        z0, z1, z2 = cam_pts[vids, 2]
        z = z0 + w1 * (z1 - z0) + w2 * (z2 - z0)
        rr, cc = np.nonzero(inside)
        rows = rr + y0
        cols = cc + x0
        zs = z[rr, cc]
        wins = zs > depth[rows, cols]  # strict: ties keep the lower face index
        if not wins.any():
            continue
        rows, cols = rows[wins], cols[wins]
        u1 = w1[rr, cc][wins][:, None]
        u2 = w2[rr, cc][wins][:, None]

        def lerp(attr):
            return attr[0] + u1 * (attr[1] - attr[0]) + u2 * (attr[2] - attr[0])

        n = lerp(normals_cam[vids])
        lens = np.linalg.norm(n, axis=1)
        lens[lens < 1e-20] = 1.0
        n /= lens[:, None]

        if texture is not None:
            albedo = _sample_nearest(texture, lerp(mesh.tex_coords[vids]))
        elif mesh.colors is not None:
            albedo = lerp(mesh.colors[vids])
        else:
            albedo = np.full((len(rows), 3), 0.8)

        shaded = shade(albedo, n, lighting)
        depth[rows, cols] = zs[wins]
        face_index[rows, cols] = j
        color[rows, cols] = np.floor(shaded * 255.0 + 0.5).astype(np.uint8)

    coverage = face_index >= 0
    return RenderOutput(color, coverage, depth, face_index)


def photometric_error(
    render: RenderOutput,
    image: RasterImage,
    mask: SegmentationMask,
    metric: str = "manhattan",
) -> float:
    """Mean per-pixel color error over covered, face-labeled pixels.

    Colors are compared in [0, 1]; the per-pixel value is the mean absolute
    channel difference ("manhattan") or the mean squared channel difference
    ("squared").

    Raises
    ------
    EmptyRegion
        Coverage and the face mask do not overlap.
    """
    if metric not in ("manhattan", "squared"):
        raise ValueError(f"unknown metric {metric!r}")
    if image.pixels.shape != render.color.shape:
        raise LengthMismatch("render and image sizes differ")
    if mask.labels.shape != image.pixels.shape[:2]:
        raise LengthMismatch("mask size differs from image")
    region = render.coverage & mask.face_pixels()
    if not region.any():
        raise EmptyRegion("no covered face pixels to compare")
    a = render.color[region].astype(np.float64) / 255.0
    b = image.pixels[region].astype(np.float64) / 255.0
    if metric == "manhattan":
        return float(np.abs(a - b).mean())
    return float(((a - b) ** 2).mean())


def landmark_error_report(
    shape: TriMesh,
    model: MorphableModel,
    pose: Pose,
    cam: Camera,
    landmarks: LandmarkSet,
) -> dict[str, float]:
    """Weighted squared pixel error split over the standard 68-point regions.

    Works on any mesh with the model's topology (coarse or refined).
    Region values are un-normalized sums, so ``total`` equals the weighted
    mean landmark error times N.
    """
    if len(landmarks) != lmk.NUM_LANDMARKS or len(model.landmark_indices) != lmk.NUM_LANDMARKS:
        raise LengthMismatch("region report requires the standard 68-landmark layout")
    proj = project(landmark_positions(shape, model), pose, cam)
    terms = landmarks.weights * np.sum((proj - landmarks.points) ** 2, axis=1)
    report = {
        name: float(terms[lo:hi].sum()) for name, (lo, hi) in lmk.LANDMARK_REGIONS.items()
    }
    report["total"] = float(terms.sum())
    return report


def format_report(report: dict[str, float]) -> str:
    """One 'name value' line per region in table column order, then total."""
    lines = [f"{name} {repr(report[name])}" for name in lmk.REGION_ORDER]
    lines.append(f"total {repr(report['total'])}")
    return "\n".join(lines) + "\n"
