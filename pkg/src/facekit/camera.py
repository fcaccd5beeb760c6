"""Orthographic camera model and pose estimation.

World points map to the image as ``pix(drop_z(s * R @ p + t))``. The pixel
mapping puts the origin at the image's top-left with y growing downward;
projection units keep y up, so ``pix`` is the only place the vertical flip
happens.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateConfiguration, TooFewPoints

__all__ = ["Pose", "Camera", "project", "to_camera_space", "estimate_pose"]

_ORTHO_TOL = 1e-9


@dataclass(frozen=True)
class Pose:
    """Rigid pose with isotropic scale: p -> s * R @ p + t.

    ``rotation`` must be orthonormal with det +1 (checked to 1e-9);
    ``scale`` must be positive. ``translation[2]`` rides along into camera
    space but never affects the projected position.
    """

    rotation: np.ndarray
    translation: np.ndarray
    scale: float = 1.0

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if not np.allclose(R @ R.T, np.eye(3), atol=_ORTHO_TOL):
            raise ValueError("rotation is not orthonormal")
        if abs(np.linalg.det(R) - 1.0) > 1e-6:
            raise ValueError("rotation must have determinant +1")
        if not self.scale > 0:
            raise ValueError("scale must be positive")
        R = R.copy()
        t = t.copy()
        R.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)
        object.__setattr__(self, "scale", float(self.scale))

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3), 1.0)


@dataclass(frozen=True)
class Camera:
    """Orthographic camera: image size, pixel density and stand-off distance.

    ``d_cam`` only situates the camera plane along z for depth reporting;
    orthographic projection itself ignores it.
    """

    image_width: int
    image_height: int
    pixels_per_unit: float
    d_cam: float = 10.0

    def __post_init__(self):
        if self.image_width <= 0 or self.image_height <= 0:
            raise ValueError("image dimensions must be positive")
        if not self.pixels_per_unit > 0:
            raise ValueError("pixels_per_unit must be positive")

    def pix(self, xy: np.ndarray) -> np.ndarray:
        """Projection units -> pixels (origin top-left, y down)."""
        xy = np.asarray(xy, dtype=np.float64)
        out = np.empty_like(xy)
        out[..., 0] = self.image_width / 2.0 + xy[..., 0] * self.pixels_per_unit
        out[..., 1] = self.image_height / 2.0 - xy[..., 1] * self.pixels_per_unit
        return out

    def unpix(self, px: np.ndarray) -> np.ndarray:
        """Pixels -> projection units; exact inverse of :meth:`pix`."""
        px = np.asarray(px, dtype=np.float64)
        out = np.empty_like(px)
        out[..., 0] = (px[..., 0] - self.image_width / 2.0) / self.pixels_per_unit
        out[..., 1] = (self.image_height / 2.0 - px[..., 1]) / self.pixels_per_unit
        return out


def to_camera_space(points: np.ndarray, pose: Pose) -> np.ndarray:
    """Apply s * R @ p + t. Accepts (3,) or (N, 3)."""
    p = np.asarray(points, dtype=np.float64)
    return pose.scale * (p @ pose.rotation.T) + pose.translation


def project(points: np.ndarray, pose: Pose, cam: Camera) -> np.ndarray:
    """World points -> pixel positions. Accepts (3,) or (N, 3)."""
    return cam.pix(to_camera_space(points, pose)[..., :2])


def _weighted_scaled_procrustes(
    p: np.ndarray, y: np.ndarray, w: np.ndarray, *, freeze_scale: bool
) -> tuple[np.ndarray, float]:
    """Rotation and scale minimizing sum w |y - s R p|^2 for centered p, y."""
    C = (y * w[:, None]).T @ p  # 3x3 cross-covariance
    U, _, Vt = np.linalg.svd(C)
    d = np.sign(np.linalg.det(U @ Vt))
    if d == 0:
        d = 1.0
    D = np.diag([1.0, 1.0, d])
    R = U @ D @ Vt
    if freeze_scale:
        return R, 1.0
    denom = float(np.sum(w[:, None] * p * p))
    if denom <= 0:
        raise DegenerateConfiguration("points have no spatial extent")
    s = float(np.sum(w[:, None] * (p @ R.T) * y)) / denom
    if s <= 0:
        raise DegenerateConfiguration("non-positive scale estimate")
    return R, s


def estimate_pose(
    points3d: np.ndarray,
    points2d: np.ndarray,
    weights: np.ndarray | None = None,
    cam: Camera | None = None,
    *,
    freeze_scale: bool = False,
    init: Pose | None = None,
    max_iters: int = 200,
    tol: float = 1e-14,
) -> Pose:
    """Weighted orthographic Procrustes pose from 2D-3D correspondences.

    The 2D points are pixels when ``cam`` is given (and are un-mapped through
    the camera first), otherwise projection units. The unobserved depth
    component of each 2D point is filled in from the current pose estimate
    (zero on the first pass) and the resulting 3D-3D problem is solved in
    closed form by SVD with the det(R) = +1 sign correction; the two steps
    alternate to a fixed point, which makes the recovered projections exact
    on noiseless data. ``init`` warm-starts the depth fill-in, which
    guarantees the result never fits worse than the initial pose.

    Raises
    ------
    TooFewPoints
        Fewer than 3 correspondences.
    DegenerateConfiguration
        Collinear or coincident 3D points (no stable rotation exists).
    """
    p = np.asarray(points3d, dtype=np.float64).reshape(-1, 3)
    q = np.asarray(points2d, dtype=np.float64).reshape(-1, 2)
    if len(p) != len(q):
        raise TooFewPoints(f"{len(p)} 3D points vs {len(q)} 2D points")
    if len(p) < 3:
        raise TooFewPoints(f"need at least 3 correspondences, got {len(p)}")
    if weights is None:
        w = np.ones(len(p))
    else:
        w = np.asarray(weights, dtype=np.float64).reshape(-1)
        if len(w) != len(p):
            raise TooFewPoints("weights length mismatch")
        if np.any(w < 0) or w.sum() <= 0:
            raise ValueError("weights must be non-negative with positive sum")
    u = cam.unpix(q) if cam is not None else q.copy()

    wsum = w.sum()
    p_bar = (w @ p) / wsum
    u_bar = (w @ u) / wsum
    pc = p - p_bar
    uc = u - u_bar

    # Degeneracy: the centered 3D points must span at least a plane... a line
    # already breaks the rotation, so demand rank >= 2.
    sv = np.linalg.svd(pc * np.sqrt(w)[:, None], compute_uv=False)
    if sv[1] <= max(1e-12 * sv[0], 1e-300):
        raise DegenerateConfiguration("3D points are collinear or coincident")

    if init is not None:
        R = init.rotation
        s = 1.0 if freeze_scale else init.scale
        z = s * (pc @ R.T)[:, 2]
    else:
        R = np.eye(3)
        s = 1.0
        z = np.zeros(len(p))

    for _ in range(max_iters):
        y = np.column_stack([uc, z])
        R_new, s_new = _weighted_scaled_procrustes(pc, y, w, freeze_scale=freeze_scale)
        z = s_new * (pc @ R_new.T)[:, 2]
        delta = np.abs(R_new - R).max() + abs(s_new - s)
        R, s = R_new, s_new
        if delta < tol:
            break

    t_xy = u_bar - s * (R @ p_bar)[:2]
    return Pose(R, np.array([t_xy[0], t_xy[1], 0.0]), s)
