"""Blendshape rig generation via deformation transfer.

Each expression template is related to its neutral by per-triangle
deformation gradients; transferring an expression onto a new neutral face
means finding vertex positions whose gradients match the template's, in the
least-squares sense, over all triangles. Every triangle is augmented with a
phantom fourth vertex along its scaled normal so the gradient captures
rotation and scale off the surface as well.
"""

from __future__ import annotations

import base64
import json
import os
import struct
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from .errors import (
    DegenerateRegion,
    DegenerateTriangle,
    LengthMismatch,
    ParseError,
    SingularSystem,
    TopologyMismatch,
)
from .mesh import TriMesh, vertex_normals

__all__ = [
    "triangle_frame",
    "deformation_gradients",
    "ExpressionTemplateSet",
    "BlendshapeRig",
    "EyeballSphere",
    "transfer_expression",
    "build_rig",
    "evaluate_rig",
    "fit_eyeball",
    "make_standard_templates",
    "STANDARD_EXPRESSION_NAMES",
    "save_rig",
    "load_rig",
    "export_rig_json",
    "load_beta_sequence",
    "save_beta_sequence",
    "fnv1a32",
]

RIG_MAGIC = b"CFR1"
RIG_VERSION = 1

_DEGENERACY_TOL = 1e-12


def _frames(vertices: np.ndarray, faces: np.ndarray) -> np.ndarray:
    """(F, 3, 3) triangle frames with columns (v2-v1, v3-v1, v4-v1).

    v4 = v1 + cross(e2, e3) / sqrt(|cross|), so the frame stays well-scaled
    under uniform scaling of the triangle.

    Raises
    ------
    DegenerateTriangle
        Some face's edge cross product has norm <= 1e-12 times its edge
        scale (zero-area or zero-length edges).
    """
    v1 = vertices[faces[:, 0]]
    e2 = vertices[faces[:, 1]] - v1
    e3 = vertices[faces[:, 2]] - v1
    cross = np.cross(e2, e3)
    cnorm = np.linalg.norm(cross, axis=1)
    scale = np.linalg.norm(e2, axis=1) * np.linalg.norm(e3, axis=1)
    bad = cnorm <= np.maximum(_DEGENERACY_TOL * scale, 1e-300)
    if np.any(bad):
        raise DegenerateTriangle(int(np.argmax(bad)))
    e4 = cross / np.sqrt(cnorm)[:, None]
    return np.stack([e2, e3, e4], axis=2)


def triangle_frame(v1: np.ndarray, v2: np.ndarray, v3: np.ndarray) -> np.ndarray:
    """Frame of a single triangle; see :func:`deformation_gradients`."""
    verts = np.array([v1, v2, v3], dtype=np.float64)
    return _frames(verts, np.array([[0, 1, 2]]))[0]


def deformation_gradients(
    source_neutral: TriMesh, deformed: TriMesh | np.ndarray
) -> np.ndarray:
    """(F, 3, 3) per-face gradients mapping neutral frames onto deformed ones:
    Q_j = frame(deformed_j) @ inv(frame(neutral_j)).

    ``deformed`` may be a mesh sharing the neutral's topology or a bare
    (V, 3) vertex array.
    """
    if isinstance(deformed, TriMesh):
        _check_same_topology(source_neutral, deformed)
        dv = deformed.vertices
    else:
        dv = np.asarray(deformed, dtype=np.float64).reshape(-1, 3)
        if dv.shape != (source_neutral.num_vertices, 3):
            raise LengthMismatch(
                f"deformed vertices {dv.shape} vs neutral ({source_neutral.num_vertices}, 3)"
            )
    src = _frames(source_neutral.vertices, source_neutral.faces)
    dst = _frames(dv, source_neutral.faces)
    return dst @ np.linalg.inv(src)


@dataclass(frozen=True)
class ExpressionTemplateSet:
    """Neutral template plus m expression shapes over one shared topology."""

    neutral: TriMesh
    names: tuple[str, ...]
    shapes: np.ndarray  # (m, V, 3)

    def __post_init__(self):
        names = tuple(str(n) for n in self.names)
        if len(set(names)) != len(names) or any(not n for n in names):
            raise ValueError("expression names must be distinct and non-empty")
        s = np.ascontiguousarray(np.asarray(self.shapes, dtype=np.float64))
        if s.ndim != 3 or s.shape[1:] != (self.neutral.num_vertices, 3):
            raise TopologyMismatch(
                f"shapes must be (m, {self.neutral.num_vertices}, 3), got {s.shape}"
            )
        if s.shape[0] != len(names):
            raise LengthMismatch(f"{s.shape[0]} shapes vs {len(names)} names")
        s.flags.writeable = False
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "shapes", s)

    def __len__(self) -> int:
        return len(self.names)


@dataclass(frozen=True)
class BlendshapeRig:
    """Neutral mesh plus named per-vertex expression deltas.

    Evaluation is affine: vertices(beta) = neutral + sum_i beta_i * delta_i.
    """

    neutral: TriMesh
    names: tuple[str, ...]
    deltas: np.ndarray  # (m, V, 3)

    def __post_init__(self):
        names = tuple(str(n) for n in self.names)
        if len(set(names)) != len(names) or any(not n for n in names):
            raise ValueError("expression names must be distinct and non-empty")
        d = np.ascontiguousarray(np.asarray(self.deltas, dtype=np.float64))
        if d.ndim != 3 or d.shape[1:] != (self.neutral.num_vertices, 3):
            raise TopologyMismatch(
                f"deltas must be (m, {self.neutral.num_vertices}, 3), got {d.shape}"
            )
        if d.shape[0] != len(names):
            raise LengthMismatch(f"{d.shape[0]} deltas vs {len(names)} names")
        d.flags.writeable = False
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "deltas", d)
        # Hot-path caches, built lazily on first evaluate.
        object.__setattr__(self, "_flat", None)
        object.__setattr__(self, "_neutral_flat", None)

    def __len__(self) -> int:
        return len(self.names)


def evaluate_rig(rig: BlendshapeRig, beta: np.ndarray, out: np.ndarray | None = None) -> TriMesh:
    """Blend the rig: neutral + deltas weighted by ``beta``.

    The delta matrix and flattened neutral are cached on the rig after the
    first call; passing a (V, 3) ``out`` array makes the hot path
    allocation-free. Single evaluation thread per rig.

    Raises
    ------
    LengthMismatch
        ``beta`` length differs from the expression count.
    """
    b = np.asarray(beta, dtype=np.float64).reshape(-1)
    if len(b) != len(rig.names):
        raise LengthMismatch(f"beta has {len(b)} entries for {len(rig.names)} expressions")
    if b.size and (b.min() < 0.0 or b.max() > 1.0):
        warnings.warn("blend weights outside [0, 1]; extrapolating", RuntimeWarning, stacklevel=2)
    if rig._flat is None:
        object.__setattr__(rig, "_flat", rig.deltas.reshape(len(rig.names), -1).copy())
        object.__setattr__(rig, "_neutral_flat", rig.neutral.vertices.reshape(-1).copy())
    if out is None:
        out = np.empty((rig.neutral.num_vertices, 3))
    flat_out = out.reshape(-1)
    np.dot(b, rig._flat, out=flat_out)
    flat_out += rig._neutral_flat
    return TriMesh(out, rig.neutral.faces)


# --- deformation transfer ----------------------------------------------------


class _TransferSolver:
    """Shared factorization for transferring many expressions onto one target.

    Unknowns are the target's vertices plus one phantom vertex per face; the
    gradient-matching term is translation-invariant, so vertex 0 is pinned
    during the solve and each result is shifted afterward to satisfy the
    documented pin: the vertex with the smallest source displacement (ties:
    lowest index) moves by exactly its source displacement.
    """

    def __init__(self, target_neutral: TriMesh, *, area_weighted: bool = False):
        self.target = target_neutral
        V, F = target_neutral.num_vertices, target_neutral.num_faces
        Minv = np.linalg.inv(_frames(target_neutral.vertices, target_neutral.faces))
        faces = target_neutral.faces

        weights = np.ones(F)
        if area_weighted:
            v = target_neutral.vertices
            areas = 0.5 * np.linalg.norm(
                np.cross(v[faces[:, 1]] - v[faces[:, 0]], v[faces[:, 2]] - v[faces[:, 0]]),
                axis=1,
            )
            weights = np.sqrt(areas)
        self._row_weights = np.repeat(weights, 3)

        # Row 3j+c matches gradient entry (:, c) of face j; columns are
        # vertices then phantoms.
        rows = np.repeat(np.arange(3 * F, dtype=np.int64), 4)
        cols = np.empty((F, 3, 4), dtype=np.int64)
        cols[:, :, 0] = faces[:, 1][:, None]
        cols[:, :, 1] = faces[:, 2][:, None]
        cols[:, :, 2] = (V + np.arange(F))[:, None]
        cols[:, :, 3] = faces[:, 0][:, None]
        vals = np.empty((F, 3, 4))
        vals[:, :, 0] = Minv[:, 0, :]
        vals[:, :, 1] = Minv[:, 1, :]
        vals[:, :, 2] = Minv[:, 2, :]
        vals[:, :, 3] = -Minv.sum(axis=1)
        vals *= self._row_weights.reshape(F, 3)[:, :, None]
        A = sparse.coo_matrix(
            (vals.reshape(-1), (rows, cols.reshape(-1))), shape=(3 * F, V + F)
        ).tocsc()
        self._pin_col = A[:, 0]
        self._A_rest = A[:, 1:]
        try:
            self._lu = splu((self._A_rest.T @ self._A_rest).tocsc())
        except RuntimeError as exc:
            raise SingularSystem(f"transfer system factorization failed: {exc}") from exc
        self._V = V
        self._F = F

    def solve(self, gradients: np.ndarray, template: ExpressionTemplateSet, expr: int) -> np.ndarray:
        """Target vertices matching ``gradients`` with the documented pin."""
        V = self._V
        b = gradients.transpose(0, 2, 1).reshape(-1, 3) * self._row_weights[:, None]
        # Temporarily pin vertex 0 at its neutral position.
        v0 = self.target.vertices[0]
        rhs = self._A_rest.T @ (b - self._pin_col.toarray() * v0[None, :])
        sol = np.column_stack([self._lu.solve(rhs[:, c]) for c in range(3)])
        verts = np.empty((V, 3))
        verts[0] = v0
        verts[1:] = sol[: V - 1]

        # Shift along the translation null space to satisfy the pin rule.
        disp = template.shapes[expr] - template.neutral.vertices
        k = int(np.argmin(np.linalg.norm(disp, axis=1)))  # argmin: first = lowest index
        pinned_target = self.target.vertices[k] + disp[k]
        verts += pinned_target - verts[k]
        return verts


def _check_same_topology(a: TriMesh, b: TriMesh) -> None:
    if a.num_vertices != b.num_vertices or not np.array_equal(a.faces, b.faces):
        raise TopologyMismatch("meshes do not share vertex count and face list")


def transfer_expression(
    templates: ExpressionTemplateSet,
    expression: int | str,
    target_neutral: TriMesh,
    *,
    area_weighted: bool = False,
) -> TriMesh:
    """Transfer one template expression onto ``target_neutral``.

    Minimizes the summed squared Frobenius distance between the target's
    per-face deformation gradients and the template's, over target vertex
    positions (faces weighted uniformly, or by area when ``area_weighted``).
    The translation null space is fixed by pinning the vertex with the
    smallest template displacement (ties: lowest index) to its neutral
    position moved by exactly that displacement.
    """
    if isinstance(expression, str):
        if expression not in templates.names:
            raise KeyError(f"no expression named {expression!r}")
        expr = templates.names.index(expression)
    else:
        expr = int(expression)
    if not 0 <= expr < len(templates):
        raise IndexError(f"expression index {expr} out of range")
    _check_same_topology(templates.neutral, target_neutral)
    solver = _TransferSolver(target_neutral, area_weighted=area_weighted)
    grads = deformation_gradients(templates.neutral, templates.shapes[expr])
    return target_neutral.with_vertices(solver.solve(grads, templates, expr))


def build_rig(
    templates: ExpressionTemplateSet,
    target_neutral: TriMesh,
    *,
    area_weighted: bool = False,
    threads: int | None = None,
) -> BlendshapeRig:
    """Transfer every template expression onto the target neutral.

    One sparse factorization is shared across all expressions. Gradient
    assembly may run on a small thread pool bounded by ``threads`` (or the
    FACEKIT_THREADS environment variable); results are ordered and
    deterministic either way.
    """
    _check_same_topology(templates.neutral, target_neutral)
    solver = _TransferSolver(target_neutral, area_weighted=area_weighted)

    if threads is None:
        threads = int(os.environ.get("FACEKIT_THREADS", "1") or "1")
    threads = max(1, min(threads, len(templates) or 1))

    def grad(i: int) -> np.ndarray:
        return deformation_gradients(templates.neutral, templates.shapes[i])

    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            gradients = list(pool.map(grad, range(len(templates))))
    else:
        gradients = [grad(i) for i in range(len(templates))]

    deltas = np.empty((len(templates), target_neutral.num_vertices, 3))
    for i, g in enumerate(gradients):
        deltas[i] = solver.solve(g, templates, i) - target_neutral.vertices
    return BlendshapeRig(target_neutral, templates.names, deltas)


# --- eyeballs -----------------------------------------------------------------


@dataclass(frozen=True)
class EyeballSphere:
    """Sphere fitted to an eye region, inset into the head."""

    center: np.ndarray  # (3,)
    radius: float
    inset: float
    region: np.ndarray  # vertex indices the fit used

    def __post_init__(self):
        c = np.ascontiguousarray(np.asarray(self.center, dtype=np.float64).reshape(3))
        r = np.ascontiguousarray(np.asarray(self.region, dtype=np.int64).reshape(-1))
        c.flags.writeable = False
        r.flags.writeable = False
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "region", r)
        object.__setattr__(self, "radius", float(self.radius))
        object.__setattr__(self, "inset", float(self.inset))


def fit_eyeball(mesh: TriMesh, region: np.ndarray, inset: float = 0.0) -> EyeballSphere:
    """Algebraic least-squares sphere through the region's vertices, with the
    center pushed ``inset`` along the inward average normal.

    Solves the linear system [2p | 1] (c, r^2 - |c|^2) = |p|^2; the fit is
    exact when the points lie on a sphere.

    Raises
    ------
    DegenerateRegion
        Fewer than 4 vertices, or a (near-)coplanar region where the sphere
        is not determined.
    """
    idx = np.asarray(region, dtype=np.int64).reshape(-1)
    if len(idx) < 4:
        raise DegenerateRegion(f"need at least 4 vertices, got {len(idx)}")
    if len(idx) and (idx.min() < 0 or idx.max() >= mesh.num_vertices):
        raise LengthMismatch("region index out of range")
    p = mesh.vertices[idx]
    A = np.column_stack([2.0 * p, np.ones(len(p))])
    b = np.sum(p * p, axis=1)
    sv = np.linalg.svd(p - p.mean(axis=0), compute_uv=False)
    if sv[-1] <= 1e-9 * max(sv[0], 1e-300):
        raise DegenerateRegion("region is coplanar; sphere is undetermined")
    x, *_ = np.linalg.lstsq(A, b, rcond=None)
    center = x[:3]
    r2 = x[3] + center @ center
    if r2 <= 0:
        raise DegenerateRegion("non-positive squared radius")
    if inset != 0.0:
        with np.errstate(invalid="ignore"):
            outward = vertex_normals(mesh)[idx].mean(axis=0)
        norm = np.linalg.norm(outward)
        if norm < 1e-12:
            raise DegenerateRegion("region normals cancel; inset direction undefined")
        center = center - inset * (outward / norm)
    return EyeballSphere(center, float(np.sqrt(r2)), inset, idx)


# --- standard template set ----------------------------------------------------

STANDARD_EXPRESSION_NAMES: tuple[str, ...] = (
    "browDownLeft", "browDownRight", "browInnerUp", "browOuterUpLeft", "browOuterUpRight",
    "cheekPuffLeft", "cheekPuffRight", "cheekSquintLeft", "cheekSquintRight",
    "eyeBlinkLeft", "eyeBlinkRight", "eyeLookDownLeft", "eyeLookDownRight",
    "eyeLookUpLeft", "eyeLookUpRight", "eyeSquintLeft", "eyeSquintRight",
    "eyeWideLeft", "eyeWideRight",
    "jawForward", "jawLeft", "jawOpen", "jawRight",
    "mouthClose", "mouthDimpleLeft", "mouthDimpleRight", "mouthFrownLeft", "mouthFrownRight",
    "mouthFunnel", "mouthLeft", "mouthLowerDownLeft", "mouthLowerDownRight",
    "mouthPressLeft", "mouthPressRight", "mouthPucker", "mouthRight",
    "mouthRollLower", "mouthRollUpper", "mouthShrugLower", "mouthShrugUpper",
    "mouthSmileLeft", "mouthSmileRight", "mouthStretchLeft", "mouthStretchRight",
    "mouthUpperUpLeft", "mouthUpperUpRight",
)


def _bump(verts: np.ndarray, center: np.ndarray, sigma: float, direction: np.ndarray,
          magnitude: float) -> np.ndarray:
    w = np.exp(-np.sum((verts - center) ** 2, axis=1) / sigma**2)
    return magnitude * w[:, None] * direction


def make_standard_templates(
    neutral: TriMesh, landmark_indices: np.ndarray
) -> ExpressionTemplateSet:
    """Procedural stand-in expression set over the standard 68-landmark layout.

    Each expression is a smooth region-localized displacement (Gaussian bumps
    anchored at landmark-derived feature points), so deltas decay quickly away
    from their region. Deterministic in the inputs.
    """
    li = np.asarray(landmark_indices, dtype=np.int64).reshape(-1)
    if len(li) != 68:
        raise LengthMismatch("standard templates require the 68-landmark layout")
    v = np.asarray(neutral.vertices)
    pts = v[li]

    eye_l = pts[36:42].mean(axis=0)
    eye_r = pts[42:48].mean(axis=0)
    brow_l = pts[17:22].mean(axis=0)
    brow_r = pts[22:27].mean(axis=0)
    mouth = pts[48:68].mean(axis=0)
    mouth_l = pts[48]
    mouth_r = pts[54]
    jaw = pts[8]
    cheek_l = (eye_l + mouth_l) / 2.0
    cheek_r = (eye_r + mouth_r) / 2.0
    upper_lip = pts[51]
    lower_lip = pts[57]

    scale = float(np.linalg.norm(pts[16] - pts[0]))  # face width
    s_small = 0.10 * scale
    s_mid = 0.16 * scale
    s_big = 0.24 * scale
    mag = 0.045 * scale

    up = np.array([0.0, 1.0, 0.0])
    down = -up
    left = np.array([-1.0, 0.0, 0.0])
    right = -left
    fwd = np.array([0.0, 0.0, 1.0])

    recipes: dict[str, list[tuple[np.ndarray, float, np.ndarray, float]]] = {
        "browDownLeft": [(brow_l, s_small, down, mag)],
        "browDownRight": [(brow_r, s_small, down, mag)],
        "browInnerUp": [((brow_l + brow_r) / 2, s_small, up, mag)],
        "browOuterUpLeft": [(pts[17], s_small, up, mag)],
        "browOuterUpRight": [(pts[26], s_small, up, mag)],
        "cheekPuffLeft": [(cheek_l, s_mid, fwd, mag)],
        "cheekPuffRight": [(cheek_r, s_mid, fwd, mag)],
        "cheekSquintLeft": [(cheek_l, s_small, up, 0.7 * mag)],
        "cheekSquintRight": [(cheek_r, s_small, up, 0.7 * mag)],
        "eyeBlinkLeft": [(eye_l, s_small, down, 0.8 * mag)],
        "eyeBlinkRight": [(eye_r, s_small, down, 0.8 * mag)],
        "eyeLookDownLeft": [(eye_l, s_small, down, 0.5 * mag)],
        "eyeLookDownRight": [(eye_r, s_small, down, 0.5 * mag)],
        "eyeLookUpLeft": [(eye_l, s_small, up, 0.5 * mag)],
        "eyeLookUpRight": [(eye_r, s_small, up, 0.5 * mag)],
        "eyeSquintLeft": [(eye_l, s_small, up, 0.4 * mag), (cheek_l, s_small, up, 0.4 * mag)],
        "eyeSquintRight": [(eye_r, s_small, up, 0.4 * mag), (cheek_r, s_small, up, 0.4 * mag)],
        "eyeWideLeft": [(eye_l, s_small, up, 0.6 * mag), (brow_l, s_small, up, 0.4 * mag)],
        "eyeWideRight": [(eye_r, s_small, up, 0.6 * mag), (brow_r, s_small, up, 0.4 * mag)],
        "jawForward": [(jaw, s_big, fwd, mag)],
        "jawLeft": [(jaw, s_big, left, mag)],
        "jawOpen": [(jaw, s_big, down, 1.6 * mag), (lower_lip, s_mid, down, mag)],
        "jawRight": [(jaw, s_big, right, mag)],
        "mouthClose": [(upper_lip, s_small, down, 0.4 * mag), (lower_lip, s_small, up, 0.4 * mag)],
        "mouthDimpleLeft": [(mouth_l, s_small, left, 0.5 * mag)],
        "mouthDimpleRight": [(mouth_r, s_small, right, 0.5 * mag)],
        "mouthFrownLeft": [(mouth_l, s_small, down, mag)],
        "mouthFrownRight": [(mouth_r, s_small, down, mag)],
        "mouthFunnel": [(mouth, s_mid, fwd, mag)],
        "mouthLeft": [(mouth, s_mid, left, mag)],
        "mouthLowerDownLeft": [(pts[58], s_small, down, 0.8 * mag)],
        "mouthLowerDownRight": [(pts[56], s_small, down, 0.8 * mag)],
        "mouthPressLeft": [(mouth_l, s_small, fwd, -0.5 * mag)],
        "mouthPressRight": [(mouth_r, s_small, fwd, -0.5 * mag)],
        "mouthPucker": [(mouth, s_small, fwd, 1.2 * mag)],
        "mouthRight": [(mouth, s_mid, right, mag)],
        "mouthRollLower": [(lower_lip, s_small, fwd, -0.7 * mag)],
        "mouthRollUpper": [(upper_lip, s_small, fwd, -0.7 * mag)],
        "mouthShrugLower": [(lower_lip, s_small, up, 0.7 * mag)],
        "mouthShrugUpper": [(upper_lip, s_small, up, 0.7 * mag)],
        "mouthSmileLeft": [(mouth_l, s_small, (left + up) / np.sqrt(2), mag)],
        "mouthSmileRight": [(mouth_r, s_small, (right + up) / np.sqrt(2), mag)],
        "mouthStretchLeft": [(mouth_l, s_mid, (left + down) / np.sqrt(2), mag)],
        "mouthStretchRight": [(mouth_r, s_mid, (right + down) / np.sqrt(2), mag)],
        "mouthUpperUpLeft": [(pts[50], s_small, up, 0.8 * mag)],
        "mouthUpperUpRight": [(pts[52], s_small, up, 0.8 * mag)],
    }
    shapes = np.empty((len(STANDARD_EXPRESSION_NAMES), len(v), 3))
    for i, name in enumerate(STANDARD_EXPRESSION_NAMES):
        disp = np.zeros_like(v)
        for center, sigma, direction, magnitude in recipes[name]:
            disp += _bump(v, center, sigma, direction, magnitude)
        shapes[i] = v + disp
    return ExpressionTemplateSet(neutral, STANDARD_EXPRESSION_NAMES, shapes)


# --- rig container -------------------------------------------------------------
#
# CFR1, little-endian:
#   magic "CFR1", u32 version (= 1), u32 V, u32 F, u32 m
#   f32[3V] neutral vertices
#   u32[3F] faces
#   m times: u16 name byte length, UTF-8 name, f32[3V] deltas
#   u32 eyeball count, then per eyeball:
#     f32 center[3], f32 radius, f32 inset, u32 region size, u32[region] indices

_RIG_HEADER = struct.Struct("<4sIIII")


def save_rig(
    rig: BlendshapeRig,
    path: str | Path,
    eyeballs: tuple[EyeballSphere, ...] = (),
) -> None:
    V, F = rig.neutral.num_vertices, rig.neutral.num_faces
    with open(path, "wb") as fh:
        fh.write(_RIG_HEADER.pack(RIG_MAGIC, RIG_VERSION, V, F, len(rig.names)))
        fh.write(rig.neutral.vertices.astype("<f4").tobytes())
        fh.write(rig.neutral.faces.astype("<u4").tobytes())
        for name, delta in zip(rig.names, rig.deltas):
            raw = name.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(delta.astype("<f4").tobytes())
        fh.write(struct.pack("<I", len(eyeballs)))
        for eye in eyeballs:
            fh.write(np.asarray(eye.center, dtype="<f4").tobytes())
            fh.write(struct.pack("<ff", eye.radius, eye.inset))
            fh.write(struct.pack("<I", len(eye.region)))
            fh.write(eye.region.astype("<u4").tobytes())


def _read_exact(fh, count: int, path: str) -> bytes:
    data = fh.read(count)
    if len(data) != count:
        raise ParseError("truncated rig file", path=path)
    return data


def load_rig(path: str | Path) -> tuple[BlendshapeRig, tuple[EyeballSphere, ...]]:
    path = Path(path)
    with open(path, "rb") as fh:
        magic, version, V, F, m = _RIG_HEADER.unpack(_read_exact(fh, _RIG_HEADER.size, str(path)))
        if magic != RIG_MAGIC:
            raise ParseError(f"bad magic {magic!r}", path=str(path))
        if version != RIG_VERSION:
            raise ParseError(f"unsupported rig version {version}", path=str(path))
        neutral = np.frombuffer(_read_exact(fh, 12 * V, str(path)), dtype="<f4").astype(
            np.float64
        ).reshape(V, 3)
        faces = np.frombuffer(_read_exact(fh, 12 * F, str(path)), dtype="<u4").astype(
            np.int64
        ).reshape(F, 3)
        names = []
        deltas = np.empty((m, V, 3))
        for i in range(m):
            (nlen,) = struct.unpack("<H", _read_exact(fh, 2, str(path)))
            names.append(_read_exact(fh, nlen, str(path)).decode("utf-8"))
            deltas[i] = np.frombuffer(
                _read_exact(fh, 12 * V, str(path)), dtype="<f4"
            ).astype(np.float64).reshape(V, 3)
        (eye_count,) = struct.unpack("<I", _read_exact(fh, 4, str(path)))
        eyes = []
        for _ in range(eye_count):
            center = np.frombuffer(_read_exact(fh, 12, str(path)), dtype="<f4").astype(np.float64)
            radius, inset = struct.unpack("<ff", _read_exact(fh, 8, str(path)))
            (rsize,) = struct.unpack("<I", _read_exact(fh, 4, str(path)))
            region = np.frombuffer(_read_exact(fh, 4 * rsize, str(path)), dtype="<u4").astype(
                np.int64
            )
            eyes.append(EyeballSphere(center, radius, inset, region))
        if fh.read(1):
            raise ParseError("trailing bytes after rig payload", path=str(path))
    mesh = TriMesh(neutral, faces)
    return BlendshapeRig(mesh, tuple(names), deltas), tuple(eyes)


def fnv1a32(data: bytes) -> int:
    """32-bit FNV-1a hash."""
    h = 0x811C9DC5
    for byte in data:
        h ^= byte
        h = (h * 0x01000193) & 0xFFFFFFFF
    return h


def _b64(a: np.ndarray) -> str:
    return base64.b64encode(a.tobytes()).decode("ascii")


def export_rig_json(
    rig: BlendshapeRig,
    path: str | Path | None = None,
    eyeballs: tuple[EyeballSphere, ...] = (),
    texture_name: str | None = None,
) -> str:
    """Viewer-facing JSON mirror of the binary rig.

    Arrays are base64 of little-endian float32/uint32 data. Each expression
    carries an FNV-1a 32-bit checksum of the float32 buffer obtained by
    adding its delta to the neutral in float32, so a client can verify its
    blending bit-for-bit.
    """
    neutral32 = np.ascontiguousarray(rig.neutral.vertices.reshape(-1), dtype="<f4")
    faces32 = np.ascontiguousarray(rig.neutral.faces.reshape(-1), dtype="<u4")
    expressions = []
    for name, delta in zip(rig.names, rig.deltas):
        delta32 = np.ascontiguousarray(delta.reshape(-1), dtype="<f4")
        blended = neutral32 + delta32  # float32 arithmetic, single rounding
        expressions.append(
            {
                "name": name,
                "deltas": _b64(delta32),
                "checksum": f"{fnv1a32(blended.tobytes()):08x}",
            }
        )
    doc = {
        "magic": "CFR1",
        "version": RIG_VERSION,
        "vertex_count": rig.neutral.num_vertices,
        "face_count": rig.neutral.num_faces,
        "names": list(rig.names),
        "neutral": _b64(neutral32),
        "neutral_checksum": f"{fnv1a32(neutral32.tobytes()):08x}",
        "faces": _b64(faces32),
        "expressions": expressions,
        "eyeballs": [
            {
                "center": [float(c) for c in eye.center],
                "radius": eye.radius,
                "inset": eye.inset,
                "region": [int(i) for i in eye.region],
            }
            for eye in eyeballs
        ],
    }
    if texture_name is not None:
        doc["texture"] = texture_name
    text = json.dumps(doc, indent=1)
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def load_beta_sequence(path: str | Path, expression_count: int) -> np.ndarray:
    """Read an animation as one line of blend weights per frame; '#' comments
    and blank lines are skipped. Returns (T, m)."""
    path = Path(path)
    frames = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            parts = body.split()
            if len(parts) != expression_count:
                raise ParseError(
                    f"frame has {len(parts)} weights, rig has {expression_count}",
                    line=lineno,
                    path=str(path),
                )
            try:
                frames.append([float(p) for p in parts])
            except ValueError as exc:
                raise ParseError(str(exc), line=lineno, path=str(path)) from exc
    if not frames:
        raise ParseError("no frames in sequence", path=str(path))
    return np.asarray(frames, dtype=np.float64)


def save_beta_sequence(betas: np.ndarray, path: str | Path) -> None:
    b = np.asarray(betas, dtype=np.float64)
    lines = [" ".join(repr(float(x)) for x in row) for row in np.atleast_2d(b)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
