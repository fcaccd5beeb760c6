"""Landmark-anchored Laplacian surface refinement.

The coarse mesh is deformed so its landmark vertices meet the annotated
pixels while every vertex keeps its uniform-weight Laplacian coordinate:

    min_v  sum_i |L(v_i) - L_i'|^2  +  lambda * sum_k |v_k - p_k|^2

solved per coordinate as one sparse SPD normal-equation system with a direct
factorization. Anchor targets are built by moving each landmark vertex to its
annotated pixel ray at the vertex's own camera-space depth.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np
from PIL import Image
from scipy import sparse
from scipy.sparse.linalg import splu

from . import landmarks as lmk
from .camera import Camera, Pose, to_camera_space
from .errors import IsolatedVertex, LengthMismatch, ParseError, SingularSystem
from .fitting import LandmarkSet
from .mesh import AdjacencyMap, TriMesh, build_adjacency, laplacian_coords
from .morphable import MorphableModel, landmark_positions

__all__ = [
    "SegmentationMask",
    "AnchorSet",
    "load_mask",
    "save_mask",
    "snap_eye_landmarks",
    "build_anchors",
    "laplacian_deform",
]

_MAX_CLASS = 4


@dataclass(frozen=True)
class SegmentationMask:
    """Per-pixel class labels (uint8, (H, W)).

    Palette: 0 background, 1 skin, 2 image-left eye, 3 image-right eye,
    4 other face. Binarized (label != 0) it doubles as the face-region
    confidence map for photometric evaluation.
    """

    labels: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.labels)
        if a.ndim != 2:
            raise ValueError(f"labels must be 2D, got shape {a.shape}")
        if a.dtype != np.uint8:
            if a.size and (a.min() < 0 or a.max() > 255):
                raise ValueError("labels out of uint8 range")
            a = a.astype(np.uint8)
        if a.size and a.max() > _MAX_CLASS:
            raise ValueError(f"label {int(a.max())} outside palette 0..{_MAX_CLASS}")
        a = np.ascontiguousarray(a)
        a.flags.writeable = False
        object.__setattr__(self, "labels", a)

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    def face_pixels(self) -> np.ndarray:
        """Boolean (H, W): any non-background class."""
        return self.labels != lmk.MASK_BACKGROUND


def load_mask(path: str | Path) -> SegmentationMask:
    """Read an 8-bit single-channel PNG or PGM label image."""
    path = Path(path)
    try:
        with Image.open(path) as im:
            if im.mode not in ("L", "P"):
                raise ParseError(f"mask must be 8-bit single-channel, got mode {im.mode}",
                                 path=str(path))
            arr = np.asarray(im.convert("L") if im.mode == "P" else im, dtype=np.uint8)
    except ParseError:
        raise
    except Exception as exc:
        raise ParseError(f"unreadable mask image: {exc}", path=str(path)) from exc
    return SegmentationMask(arr)


def save_mask(mask: SegmentationMask, path: str | Path) -> None:
    Image.fromarray(mask.labels, mode="L").save(Path(path))


@dataclass(frozen=True)
class AnchorSet:
    """Vertex indices with 3D target positions for the deformation solve.

    ``lam`` is the anchor stiffness the deformation uses unless overridden.
    """

    indices: np.ndarray    # (K,) int64, distinct
    positions: np.ndarray  # (K, 3) float64
    lam: float = 10.0

    def __post_init__(self):
        idx = np.ascontiguousarray(np.asarray(self.indices, dtype=np.int64).reshape(-1))
        pos = np.ascontiguousarray(np.asarray(self.positions, dtype=np.float64).reshape(-1, 3))
        if len(idx) != len(pos):
            raise LengthMismatch(f"{len(idx)} indices vs {len(pos)} positions")
        if len(np.unique(idx)) != len(idx):
            raise ValueError("anchor indices must be distinct")
        if not (float(self.lam) > 0.0):
            raise ValueError("lambda must be positive")
        idx.flags.writeable = False
        pos.flags.writeable = False
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "lam", float(self.lam))

    def __len__(self) -> int:
        return len(self.indices)


def _boundary_pixels(labels: np.ndarray, cls: int) -> np.ndarray:
    """Row-major (r, c) array of class pixels 4-adjacent to any other label."""
    inside = labels == cls
    differs = np.zeros_like(inside)
    differs[:-1] |= inside[:-1] & (labels[:-1] != labels[1:])
    differs[1:] |= inside[1:] & (labels[1:] != labels[:-1])
    differs[:, :-1] |= inside[:, :-1] & (labels[:, :-1] != labels[:, 1:])
    differs[:, 1:] |= inside[:, 1:] & (labels[:, 1:] != labels[:, :-1])
    return np.argwhere(differs)  # argwhere scans row-major


def snap_eye_landmarks(
    landmarks: LandmarkSet,
    mask: SegmentationMask,
    eye_landmark_classes: Mapping[int, int] | None = None,
) -> LandmarkSet:
    """Move each eye landmark to the nearest boundary pixel center of its eye
    class (Euclidean; ties resolved in row-major pixel order).

    ``eye_landmark_classes`` maps landmark index -> mask class; defaults to
    the standard 68-layout eye rings. Landmarks whose class has no boundary
    pixels, and all non-eye landmarks, pass through unchanged.
    """
    if eye_landmark_classes is None:
        eye_landmark_classes = lmk.DEFAULT_EYE_CLASSES
    pts = np.array(landmarks.points)
    boundaries: dict[int, np.ndarray] = {}
    for idx, cls in eye_landmark_classes.items():
        if idx < 0 or idx >= len(pts):
            raise LengthMismatch(f"eye landmark index {idx} outside the landmark set")
        if cls not in boundaries:
            boundaries[cls] = _boundary_pixels(mask.labels, cls)
        rc = boundaries[cls]
        if len(rc) == 0:
            continue
        centers = np.column_stack([rc[:, 1] + 0.5, rc[:, 0] + 0.5])  # (x, y) pixel centers
        d2 = np.sum((centers - pts[idx]) ** 2, axis=1)
        pts[idx] = centers[int(np.argmin(d2))]  # argmin keeps first = row-major winner
    return landmarks.with_points(pts)


def build_anchors(
    landmarks: LandmarkSet,
    shape: TriMesh,
    model: MorphableModel,
    pose: Pose,
    cam: Camera,
    lam: float = 10.0,
) -> AnchorSet:
    """Anchor each landmark vertex to its annotated pixel at unchanged depth.

    The annotated pixel fixes the camera-space x/y; the vertex's own
    camera-space z is kept, and the point is pulled back to model space by
    inverting the pose. ``lam`` is recorded on the result as the default
    stiffness for the deformation solve.
    """
    idx = model.landmark_indices
    if len(idx) != len(landmarks):
        raise LengthMismatch(f"{len(idx)} landmark vertices vs {len(landmarks)} annotations")
    cam_pts = to_camera_space(landmark_positions(shape, model), pose)
    units = cam.unpix(landmarks.points)
    target_cam = np.column_stack([units[:, 0], units[:, 1], cam_pts[:, 2]])
    model_pts = (target_cam - pose.translation) @ pose.rotation / pose.scale
    return AnchorSet(idx, model_pts, lam)


def _uniform_laplacian(adjacency: AdjacencyMap) -> sparse.csr_matrix:
    V = len(adjacency)
    deg = adjacency.degrees
    if np.any(deg == 0):
        raise IsolatedVertex(int(np.argmin(deg)))
    row = np.repeat(np.arange(V, dtype=np.int64), deg)
    data = np.concatenate([np.full(V, 1.0), -1.0 / deg[row]])
    rows = np.concatenate([np.arange(V, dtype=np.int64), row])
    cols = np.concatenate([np.arange(V, dtype=np.int64), adjacency.flat])
    return sparse.csr_matrix((data, (rows, cols)), shape=(V, V))


def laplacian_deform(
    mesh: TriMesh,
    anchors: AnchorSet,
    lam: float | None = None,
    target_laplacian: np.ndarray | None = None,
) -> TriMesh:
    """Deform ``mesh`` to meet the anchors while preserving its Laplacian
    coordinates (or ``target_laplacian`` when given).

    Solves the normal equations (L^T L + lambda S^T S) v = L^T b + lambda S^T p
    once per coordinate with a shared sparse LU factorization. With anchors at
    their current positions the input mesh is returned unchanged up to solver
    precision; larger ``lam`` pulls anchors harder at the cost of smoothness.
    ``lam=None`` uses the stiffness recorded on the anchor set.

    Raises
    ------
    SingularSystem
        No anchors (the objective has a free translation), or factorization
        failure.
    IsolatedVertex
        Some vertex has no neighbors, so its Laplacian is undefined.
    """
    if len(anchors) == 0:
        raise SingularSystem("at least one anchor is required")
    if lam is None:
        lam = anchors.lam
    if lam <= 0:
        raise ValueError("lambda must be positive")
    if anchors.indices.max() >= mesh.num_vertices:
        raise LengthMismatch("anchor index out of range")
    adjacency = build_adjacency(mesh)
    L = _uniform_laplacian(adjacency)
    b = laplacian_coords(mesh, adjacency) if target_laplacian is None else np.asarray(
        target_laplacian, dtype=np.float64
    )
    if b.shape != (mesh.num_vertices, 3):
        raise LengthMismatch(f"target laplacian must be (V, 3), got {b.shape}")

    V = mesh.num_vertices
    diag = np.zeros(V)
    diag[anchors.indices] = lam
    A = (L.T @ L + sparse.diags(diag)).tocsc()
    rhs = L.T @ b
    rhs[anchors.indices] += lam * anchors.positions
    try:
        lu = splu(A)
    except RuntimeError as exc:
        raise SingularSystem(f"sparse factorization failed: {exc}") from exc
    out = np.column_stack([lu.solve(rhs[:, c]) for c in range(3)])
    return mesh.with_vertices(out)
