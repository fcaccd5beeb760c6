"""Linear morphable face model: storage, synthesis and a synthetic generator.

A model is a mean shape and mean per-vertex texture plus three linear bases
(identity, expression, texture) over a shared triangulation, with a list of
landmark vertex indices. Flat vectors interleave coordinates per vertex
(x0, y0, z0, x1, ...), matching ``reshape(V, 3)``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import landmarks as lm
from .errors import DimensionMismatch, NumericalError, ParseError, TopologyMismatch
from .mesh import ICOSPHERE_VERTEX_COUNTS, TriMesh, icosphere

__all__ = [
    "MorphableModel",
    "Coefficients",
    "synthesize_shape",
    "synthesize_texture",
    "check_topology",
    "landmark_positions",
    "make_synthetic_model",
    "synthetic_eye_regions",
    "save_model",
    "load_model",
]

MODEL_MAGIC = b"CFM1"
MODEL_VERSION = 1


@dataclass(frozen=True)
class MorphableModel:
    """Linear model: shape = mean_shape + basis_id @ a_id + basis_exp @ a_exp,
    texture = mean_texture + basis_tex @ a_tex (clamped to [0, 1])."""

    mean_shape: np.ndarray     # (3V,)
    mean_texture: np.ndarray   # (3V,)
    basis_id: np.ndarray       # (3V, d_id)
    basis_exp: np.ndarray      # (3V, d_exp)
    basis_tex: np.ndarray      # (3V, d_tex)
    faces: np.ndarray          # (F, 3)
    landmark_indices: np.ndarray  # (N,)

    def __post_init__(self):
        ms = np.asarray(self.mean_shape, dtype=np.float64).reshape(-1)
        if ms.size % 3:
            raise DimensionMismatch("mean_shape length must be a multiple of 3")
        V = ms.size // 3
        mt = np.asarray(self.mean_texture, dtype=np.float64).reshape(-1)
        if mt.size != 3 * V:
            raise DimensionMismatch("mean_texture length disagrees with mean_shape")
        arrays = {"mean_shape": ms, "mean_texture": mt}
        for name in ("basis_id", "basis_exp", "basis_tex"):
            b = np.asarray(getattr(self, name), dtype=np.float64)
            if b.ndim != 2 or b.shape[0] != 3 * V:
                raise DimensionMismatch(f"{name} must have 3V = {3 * V} rows, got {b.shape}")
            arrays[name] = b
        f = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if f.size and (f.min() < 0 or f.max() >= V):
            raise TopologyMismatch("face index out of range")
        li = np.asarray(self.landmark_indices, dtype=np.int64).reshape(-1)
        if li.size and (li.min() < 0 or li.max() >= V):
            raise TopologyMismatch("landmark index out of range")
        if len(np.unique(li)) != len(li):
            raise TopologyMismatch("landmark indices must be distinct")
        for name, a in {**arrays, "faces": f, "landmark_indices": li}.items():
            a = np.ascontiguousarray(a)
            a.flags.writeable = False
            object.__setattr__(self, name, a)

    @property
    def num_vertices(self) -> int:
        return self.mean_shape.size // 3

    @property
    def num_faces(self) -> int:
        return len(self.faces)

    @property
    def dims(self) -> tuple[int, int, int]:
        return (self.basis_id.shape[1], self.basis_exp.shape[1], self.basis_tex.shape[1])

    def mean_mesh(self) -> TriMesh:
        return TriMesh(self.mean_shape.reshape(-1, 3), self.faces)


@dataclass(frozen=True)
class Coefficients:
    """Coefficient blocks for one reconstructed face."""

    alpha_id: np.ndarray
    alpha_exp: np.ndarray
    alpha_tex: np.ndarray

    def __post_init__(self):
        for name in ("alpha_id", "alpha_exp", "alpha_tex"):
            a = np.ascontiguousarray(np.asarray(getattr(self, name), dtype=np.float64).reshape(-1))
            a.flags.writeable = False
            object.__setattr__(self, name, a)

    @classmethod
    def zeros(cls, model: MorphableModel) -> "Coefficients":
        d_id, d_exp, d_tex = model.dims
        return cls(np.zeros(d_id), np.zeros(d_exp), np.zeros(d_tex))


def _check_dims(model: MorphableModel, coeff: Coefficients) -> None:
    d_id, d_exp, d_tex = model.dims
    got = (coeff.alpha_id.size, coeff.alpha_exp.size, coeff.alpha_tex.size)
    if got != (d_id, d_exp, d_tex):
        raise DimensionMismatch(f"coefficient dims {got} do not match model dims {(d_id, d_exp, d_tex)}")


def synthesize_shape(model: MorphableModel, coeff: Coefficients) -> TriMesh:
    """Mesh at the given coefficients; topology is the model's."""
    _check_dims(model, coeff)
    flat = model.mean_shape + model.basis_id @ coeff.alpha_id + model.basis_exp @ coeff.alpha_exp
    return TriMesh(flat.reshape(-1, 3), model.faces)


def synthesize_texture(
    model: MorphableModel, coeff: Coefficients, *, return_clamp_count: bool = False
):
    """Per-vertex RGB (V, 3) in [0, 1].

    Values are clamped at the synthesis output; pass ``return_clamp_count``
    to also get the number of clamped channel values as a diagnostic.
    """
    _check_dims(model, coeff)
    flat = model.mean_texture + model.basis_tex @ coeff.alpha_tex
    clamped = np.clip(flat, 0.0, 1.0)
    count = int(np.count_nonzero(flat != clamped))
    rgb = clamped.reshape(-1, 3)
    if return_clamp_count:
        return rgb, count
    return rgb


def check_topology(shape: TriMesh, model: MorphableModel) -> None:
    """Raise TopologyMismatch unless ``shape`` shares the model's vertex count
    and face list."""
    if shape.num_vertices != model.num_vertices or not np.array_equal(shape.faces, model.faces):
        raise TopologyMismatch("shape topology differs from the model's")


def landmark_positions(shape: TriMesh, model: MorphableModel) -> np.ndarray:
    """3D positions (N, 3) of the model's landmark vertices on ``shape``.

    ``shape`` may be any mesh with the model's topology (synthesized, refined,
    or loaded from file).
    """
    check_topology(shape, model)
    return shape.vertices[model.landmark_indices]


# --- binary container -------------------------------------------------------
#
# Little-endian layout:
#   magic   4 bytes  "CFM1"
#   u32     version (= 1)
#   u32 x6  V, F, d_id, d_exp, d_tex, N
#   f32[3V]        mean_shape
#   f32[3V]        mean_texture
#   f32[3V * d_id] basis_id, column-major (each basis column contiguous)
#   f32[3V * d_exp] basis_exp, column-major
#   f32[3V * d_tex] basis_tex, column-major
#   u32[3F]        faces
#   u32[N]         landmark_indices

_HEADER = struct.Struct("<4sIIIIIII")


def save_model(model: MorphableModel, path: str | Path) -> None:
    V, F = model.num_vertices, model.num_faces
    d_id, d_exp, d_tex = model.dims
    N = len(model.landmark_indices)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MODEL_MAGIC, MODEL_VERSION, V, F, d_id, d_exp, d_tex, N))
        for arr in (model.mean_shape, model.mean_texture):
            fh.write(arr.astype("<f4").tobytes())
        for basis in (model.basis_id, model.basis_exp, model.basis_tex):
            fh.write(np.asfortranarray(basis, dtype="<f4").tobytes(order="F"))
        fh.write(model.faces.astype("<u4").tobytes())
        fh.write(model.landmark_indices.astype("<u4").tobytes())


def _read_exact(fh, count: int, path: str) -> bytes:
    data = fh.read(count)
    if len(data) != count:
        raise ParseError("truncated model file", path=path)
    return data


def load_model(path: str | Path) -> MorphableModel:
    path = Path(path)
    with open(path, "rb") as fh:
        header = _read_exact(fh, _HEADER.size, str(path))
        magic, version, V, F, d_id, d_exp, d_tex, N = _HEADER.unpack(header)
        if magic != MODEL_MAGIC:
            raise ParseError(f"bad magic {magic!r}", path=str(path))
        if version != MODEL_VERSION:
            raise ParseError(f"unsupported model version {version}", path=str(path))

        def f32(n: int) -> np.ndarray:
            return np.frombuffer(_read_exact(fh, 4 * n, str(path)), dtype="<f4").astype(np.float64)

        mean_shape = f32(3 * V)
        mean_texture = f32(3 * V)
        basis_id = f32(3 * V * d_id).reshape((3 * V, d_id), order="F")
        basis_exp = f32(3 * V * d_exp).reshape((3 * V, d_exp), order="F")
        basis_tex = f32(3 * V * d_tex).reshape((3 * V, d_tex), order="F")
        faces = np.frombuffer(_read_exact(fh, 4 * 3 * F, str(path)), dtype="<u4").astype(
            np.int64
        ).reshape(F, 3)
        landmark_indices = np.frombuffer(_read_exact(fh, 4 * N, str(path)), dtype="<u4").astype(
            np.int64
        )
        if fh.read(1):
            raise ParseError("trailing bytes after model payload", path=str(path))
    return MorphableModel(
        mean_shape, mean_texture, basis_id, basis_exp, basis_tex, faces, landmark_indices
    )


# --- synthetic model generator ----------------------------------------------

# Canonical 68-point layout in a normalized face box, x right / y up.
def _canonical_layout() -> np.ndarray:
    pts = np.zeros((68, 2))
    theta = np.pi + np.arange(17) * (np.pi / 16.0)
    pts[0:17, 0] = 0.92 * np.cos(theta)
    pts[0:17, 1] = 0.95 * np.sin(theta) + 0.10
    j = np.arange(5)
    pts[17:22, 0] = -0.62 + 0.105 * j
    pts[17:22, 1] = 0.42 + 0.08 * np.sin(np.pi * j / 4.0)
    pts[22:27, 0] = 0.20 + 0.105 * j
    pts[22:27, 1] = 0.42 + 0.08 * np.sin(np.pi * (4 - j) / 4.0)
    pts[27:31, 0] = 0.0
    pts[27:31, 1] = 0.32 - 0.12 * np.arange(4)
    pts[31:36, 0] = -0.16 + 0.08 * j
    pts[31:36, 1] = -0.12 - 0.05 * (1.0 - np.abs(j - 2) / 2.0)
    eye_angles = np.deg2rad([180.0, 125.0, 55.0, 0.0, -55.0, -125.0])
    pts[36:42, 0] = -0.36 + 0.14 * np.cos(eye_angles)
    pts[36:42, 1] = 0.26 + 0.075 * np.sin(eye_angles)
    pts[42:48, 0] = 0.36 + 0.14 * np.cos(eye_angles)
    pts[42:48, 1] = 0.26 + 0.075 * np.sin(eye_angles)
    outer = np.deg2rad(180.0 - 30.0 * np.arange(12))
    pts[48:60, 0] = 0.30 * np.cos(outer)
    pts[48:60, 1] = -0.47 + 0.13 * np.sin(outer)
    inner = np.deg2rad(180.0 - 45.0 * np.arange(8))
    pts[60:68, 0] = 0.19 * np.cos(inner)
    pts[60:68, 1] = -0.47 + 0.055 * np.sin(inner)
    return pts


_LON_SCALE = 0.95  # radians per layout unit
_LAT_SCALE = 0.80


def _layout_to_direction(xy: np.ndarray) -> np.ndarray:
    """Map layout points onto unit directions on the front hemisphere (+z)."""
    lon = xy[..., 0] * _LON_SCALE
    lat = xy[..., 1] * _LAT_SCALE
    return np.stack(
        [np.sin(lon) * np.cos(lat), np.sin(lat), np.cos(lon) * np.cos(lat)], axis=-1
    )


_EYE_DIR_L = _layout_to_direction(np.array([-0.36, 0.26]))
_EYE_DIR_R = _layout_to_direction(np.array([0.36, 0.26]))
_MOUTH_DIR = _layout_to_direction(np.array([0.0, -0.47]))
_NOSE_DIR = _layout_to_direction(np.array([0.0, -0.02]))
_HEAD_AXES = np.array([0.80, 0.98, 0.84])


def _angular_falloff(dirs: np.ndarray, center: np.ndarray, width: float) -> np.ndarray:
    ang = np.arccos(np.clip(dirs @ center, -1.0, 1.0))
    return np.exp(-((ang / width) ** 2))


def _similarity_fields(points: np.ndarray) -> np.ndarray:
    """(3V, 7) linearized similarity motions at ``points``: translations,
    infinitesimal rotations about the centroid, uniform scaling."""
    centered = points - points.mean(axis=0)
    V = len(points)
    modes = np.zeros((3 * V, 7))
    for a in range(3):
        modes[a::3, a] = 1.0
        modes[:, 3 + a] = np.cross(np.eye(3)[a], centered).reshape(-1)
    modes[:, 6] = centered.reshape(-1)
    return modes


def _rigid_deflator(points: np.ndarray, landmark_indices: np.ndarray):
    """Correction operator removing similarity-motion content from a
    displacement field at the landmark vertices.

    Statistical shape bases built from aligned scans carry no rigid motion;
    the synthetic bases earn the same property where it matters for fitting:
    restricted to the landmark rows, every column is made orthogonal to the
    linearized similarity motions of the mean head. Without this, pose changes
    are mimicked by coefficient changes and the pose/coefficient alternation
    loses its identifiability.
    """
    modes = _similarity_fields(points)
    rows = (3 * landmark_indices[:, None] + np.arange(3)[None, :]).reshape(-1)
    correct = modes @ np.linalg.pinv(modes[rows])  # (3V, 3L) oblique projector part
    return rows, correct


def _smooth_fields(
    rng: np.random.Generator,
    dirs: np.ndarray,
    count: int,
    deflate=None,
) -> np.ndarray:
    """(3V, count) matrix of smooth low-frequency vector fields on the sphere,
    column norms decaying as 1/k. ``deflate`` is the operator from
    ``_rigid_deflator``, applied to every column before normalization."""
    V = len(dirs)
    cols = np.empty((3 * V, count))
    for k in range(count):
        for _ in range(32):
            field = np.zeros((V, 3))
            for _ in range(3):
                d = rng.normal(size=3)
                d /= np.linalg.norm(d)
                freq = rng.uniform(0.5, 2.5)
                phase = rng.uniform(0.0, 2.0 * np.pi)
                amp = rng.normal(size=3)
                field += np.sin(freq * (dirs @ d) + phase)[:, None] * amp
            flat = field.reshape(-1)
            if deflate is not None:
                rows, correct = deflate
                flat = flat - correct @ flat[rows]
            norm = np.linalg.norm(flat)
            if norm > 1e-8:
                break
        else:
            raise NumericalError("random field generation degenerated")
        cols[:, k] = flat / norm / (k + 1)
    return cols


def _pick_landmark_vertices(dirs: np.ndarray) -> np.ndarray:
    """Nearest distinct front-hemisphere vertex per canonical layout point."""
    targets = _layout_to_direction(_canonical_layout())
    front = np.where(dirs[:, 2] > 0.0)[0]
    chosen: list[int] = []
    used = set()
    for t in targets:
        order = np.argsort(-(dirs[front] @ t), kind="stable")
        for cand in front[order]:
            if int(cand) not in used:
                used.add(int(cand))
                chosen.append(int(cand))
                break
        else:
            raise ValueError("front hemisphere too small for 68 distinct landmarks")
    return np.asarray(chosen, dtype=np.int64)


def make_synthetic_model(
    seed: int,
    num_vertices: int = 2562,
    d_id: int = 80,
    d_exp: int = 64,
    d_tex: int = 9,
) -> MorphableModel:
    """Deterministic synthetic head model for tests and demos.

    ``num_vertices`` is a lower bound: the generator picks the smallest
    icosphere resolution with at least that many vertices (minimum 162 so the
    68 landmarks always have distinct front-hemisphere vertices). The mean
    shape is an ellipsoid head with eye-socket and nose relief; bases are
    smooth random low-frequency fields with column norms decaying as 1/k.
    Identical seeds give bit-identical models.
    """
    if num_vertices < 12:
        raise ValueError("num_vertices must be at least 12")
    if min(d_id, d_exp, d_tex) < 1:
        raise DimensionMismatch("basis dims must be positive")
    level = 2
    for lv, count in enumerate(ICOSPHERE_VERTEX_COUNTS):
        if count >= max(num_vertices, 162):
            level = lv
            break
    else:
        raise ValueError(f"num_vertices {num_vertices} exceeds supported resolutions")
    level = max(level, 2)

    sphere = icosphere(level)
    dirs = np.asarray(sphere.vertices)
    rng = np.random.default_rng(seed)

    radius = np.ones(len(dirs))
    radius -= 0.06 * _angular_falloff(dirs, _EYE_DIR_L, 0.20)
    radius -= 0.06 * _angular_falloff(dirs, _EYE_DIR_R, 0.20)
    radius += 0.07 * _angular_falloff(dirs, _NOSE_DIR, 0.18)
    radius += 0.02 * _angular_falloff(dirs, _MOUTH_DIR, 0.25)
    mean_shape = (dirs * radius[:, None] * _HEAD_AXES).reshape(-1)

    skin = np.array([0.87, 0.72, 0.60])
    eye_col = np.array([0.30, 0.30, 0.42])
    mouth_col = np.array([0.72, 0.35, 0.33])
    tex = np.tile(skin, (len(dirs), 1))
    for center, col, width in (
        (_EYE_DIR_L, eye_col, 0.13),
        (_EYE_DIR_R, eye_col, 0.13),
        (_MOUTH_DIR, mouth_col, 0.17),
    ):
        w = _angular_falloff(dirs, center, width)[:, None]
        tex = tex * (1.0 - w) + col * w
    mean_texture = tex.reshape(-1)

    landmark_indices = _pick_landmark_vertices(dirs)
    deflate = _rigid_deflator(mean_shape.reshape(-1, 3), landmark_indices)
    basis_id = 0.35 * _smooth_fields(rng, dirs, d_id, deflate=deflate)
    basis_exp = 0.25 * _smooth_fields(rng, dirs, d_exp, deflate=deflate)
    basis_tex = 0.18 * _smooth_fields(rng, dirs, d_tex)
    return MorphableModel(
        mean_shape, mean_texture, basis_id, basis_exp, basis_tex, sphere.faces, landmark_indices
    )


def synthetic_eye_regions(model: MorphableModel, margin: float = 1.6) -> tuple[np.ndarray, np.ndarray]:
    """Vertex index sets around each eye, derived from the eye landmark rings.

    A vertex belongs to an eye region when its mean-shape position lies within
    ``margin`` times the ring radius of the ring centroid. Returns
    (image-left, image-right) index arrays.
    """
    shape = model.mean_shape.reshape(-1, 3)
    centers = []
    dists = []
    for ring in (lm.LEFT_EYE_LANDMARKS, lm.RIGHT_EYE_LANDMARKS):
        ring_pts = shape[model.landmark_indices[list(ring)]]
        center = ring_pts.mean(axis=0)
        radius = np.linalg.norm(ring_pts - center, axis=1).max()
        centers.append(center)
        dists.append(np.linalg.norm(shape - center, axis=1) / (margin * radius))
    # a vertex near both eyes (coarse meshes) goes to the closer one only,
    # so the two sphere fits never share support
    left = np.where((dists[0] <= 1.0) & (dists[0] <= dists[1]))[0]
    right = np.where((dists[1] <= 1.0) & (dists[1] < dists[0]))[0]
    return left, right
