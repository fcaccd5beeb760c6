"""Triangle mesh container, adjacency, differential coordinates and OBJ I/O.

Meshes are immutable after construction: the wrapped numpy arrays are marked
read-only so accidental in-place edits fail loudly. All faces are triangles
and all indices are 0-based in memory; the 1-based convention exists only at
the OBJ text boundary.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import IsolatedVertex, NonTriangleFace, ParseError

__all__ = [
    "TriMesh",
    "AdjacencyMap",
    "build_adjacency",
    "laplacian_coords",
    "vertex_normals",
    "load_obj",
    "save_obj",
    "icosphere",
]


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class TriMesh:
    """Immutable triangle mesh.

    Parameters
    ----------
    vertices : (V, 3) float64
        Vertex positions.
    faces : (F, 3) int
        Triangle corner indices, 0-based, each in ``[0, V)`` and distinct
        within a face.
    colors : (V, 3) float64, optional
        Per-vertex RGB in ``[0, 1]``.
    tex_coords : (V, 2) float64, optional
        Per-vertex UV in ``[0, 1]``.
    """

    vertices: np.ndarray
    faces: np.ndarray
    colors: np.ndarray | None = None
    tex_coords: np.ndarray | None = None

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        f = np.asarray(self.faces, dtype=np.int64)
        if f.size == 0:
            f = f.reshape(0, 3)
        if f.ndim != 2 or f.shape[1] != 3:
            raise NonTriangleFace(f"faces must be (F, 3), got {f.shape}")
        if f.size:
            if f.min() < 0 or f.max() >= len(v):
                raise ValueError("face index out of range")
            if (
                np.any(f[:, 0] == f[:, 1])
                or np.any(f[:, 1] == f[:, 2])
                or np.any(f[:, 0] == f[:, 2])
            ):
                raise ValueError("face references the same vertex twice")
        object.__setattr__(self, "vertices", _readonly(v))
        object.__setattr__(self, "faces", _readonly(f))
        for name, width in (("colors", 3), ("tex_coords", 2)):
            a = getattr(self, name)
            if a is None:
                continue
            a = np.asarray(a, dtype=np.float64)
            if a.shape != (len(v), width):
                raise ValueError(f"{name} must be (V, {width}), got {a.shape}")
            object.__setattr__(self, name, _readonly(a))

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_faces(self) -> int:
        return len(self.faces)

    def with_vertices(self, vertices: np.ndarray) -> "TriMesh":
        """Copy of this mesh with replaced vertex positions."""
        return TriMesh(vertices, self.faces, self.colors, self.tex_coords)

    def with_colors(self, colors: np.ndarray | None) -> "TriMesh":
        return TriMesh(self.vertices, self.faces, colors, self.tex_coords)

    def with_tex_coords(self, tex_coords: np.ndarray | None) -> "TriMesh":
        return TriMesh(self.vertices, self.faces, self.colors, tex_coords)


@dataclass(frozen=True)
class AdjacencyMap:
    """Per-vertex neighbor lists in CSR layout, neighbors sorted ascending."""

    offsets: np.ndarray  # (V+1,) int64
    flat: np.ndarray     # (total,) int64

    def __len__(self) -> int:
        return len(self.offsets) - 1

    def neighbors(self, i: int) -> np.ndarray:
        return self.flat[self.offsets[i]: self.offsets[i + 1]]

    def __getitem__(self, i: int) -> np.ndarray:
        return self.neighbors(i)

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.offsets)


def build_adjacency(mesh: TriMesh) -> AdjacencyMap:
    """Undirected vertex adjacency from shared face edges.

    Symmetric and deduplicated; an empty mesh yields an empty map. Vertices
    referenced by no face get empty neighbor lists.
    """
    V = mesh.num_vertices
    f = mesh.faces
    if len(f) == 0:
        return AdjacencyMap(np.zeros(V + 1, dtype=np.int64), np.zeros(0, dtype=np.int64))
    e = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
    e = np.concatenate([e, e[:, ::-1]])
    e = np.unique(e, axis=0)  # lexsorted -> per-vertex neighbor runs come out ascending
    counts = np.bincount(e[:, 0], minlength=V)
    offsets = np.zeros(V + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    return AdjacencyMap(offsets, e[:, 1].astype(np.int64))


def laplacian_coords(mesh: TriMesh, adjacency: AdjacencyMap | None = None) -> np.ndarray:
    """Uniform-weight Laplacian coordinates: each vertex minus its neighbor mean.

    Raises
    ------
    IsolatedVertex
        If any vertex has no neighbors.
    """
    if adjacency is None:
        adjacency = build_adjacency(mesh)
    deg = adjacency.degrees
    if np.any(deg == 0):
        raise IsolatedVertex(int(np.argmin(deg)))
    sums = np.add.reduceat(mesh.vertices[adjacency.flat], adjacency.offsets[:-1], axis=0)
    return mesh.vertices - sums / deg[:, None]


def vertex_normals(mesh: TriMesh) -> np.ndarray:
    """Area-weighted vertex normals, unit length.

    Summing raw face cross products weights each face by twice its area.
    Exactly-degenerate faces contribute nothing; a vertex left with no usable
    direction gets ``(0, 0, 1)`` and a warning is emitted.
    """
    v, f = mesh.vertices, mesh.faces
    accum = np.zeros_like(v)
    if len(f):
        cross = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
        cross[np.linalg.norm(cross, axis=1) < 1e-30] = 0.0
        for c in range(3):
            np.add.at(accum, f[:, c], cross)
    norms = np.linalg.norm(accum, axis=1)
    bad = norms < 1e-20
    if np.any(bad):
        warnings.warn(
            f"{int(bad.sum())} vertex(es) without a usable normal; assigned (0, 0, 1)",
            RuntimeWarning,
            stacklevel=2,
        )
        accum[bad] = (0.0, 0.0, 1.0)
        norms[bad] = 1.0
    return accum / norms[:, None]


# --- OBJ subset -------------------------------------------------------------
#
# Supported: 'v x y z [r g b]', 'vt u v', 'f a b c' with refs 'i', 'i/t',
# 'i/t/n', 'i//n' (positive 1-based indices). UVs are per-vertex: an 'f'
# referencing texture index t assigns vt[t] to the vertex. Anything else is
# skipped and counted.


def _format_float(x: float) -> str:
    return repr(float(x))


def load_obj(path: str | Path, *, return_stats: bool = False):
    """Read a mesh from the OBJ subset.

    Returns the mesh, or ``(mesh, skipped_directive_count)`` when
    ``return_stats`` is set. Raises :class:`ParseError` with the line number
    on malformed input and :class:`NonTriangleFace` on polygons.
    """
    path = Path(path)
    verts: list[tuple[float, float, float]] = []
    colors: list[tuple[float, float, float]] = []
    raw_uvs: list[tuple[float, float]] = []
    faces: list[tuple[int, int, int]] = []
    uv_of_vertex: dict[int, int] = {}
    skipped = 0

    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            parts = stripped.split()
            tag = parts[0]
            try:
                if tag == "v":
                    if len(parts) not in (4, 7):
                        raise ParseError(
                            "vertex line needs 3 or 6 floats", line=lineno, path=str(path)
                        )
                    xyz = tuple(float(s) for s in parts[1:4])
                    verts.append(xyz)
                    if len(parts) == 7:
                        colors.append(tuple(float(s) for s in parts[4:7]))
                    elif colors:
                        raise ParseError(
                            "mixed colored and uncolored vertices", line=lineno, path=str(path)
                        )
                elif tag == "vt":
                    if len(parts) < 3:
                        raise ParseError("vt line needs 2 floats", line=lineno, path=str(path))
                    raw_uvs.append((float(parts[1]), float(parts[2])))
                elif tag == "f":
                    refs = parts[1:]
                    if len(refs) != 3:
                        raise NonTriangleFace(
                            f"{path}:{lineno}: face with {len(refs)} corners (triangles only)"
                        )
                    corner_ids = []
                    for ref in refs:
                        fields = ref.split("/")
                        vi = int(fields[0])
                        if vi <= 0:
                            raise ParseError(
                                "only positive 1-based indices supported",
                                line=lineno,
                                path=str(path),
                            )
                        vi -= 1
                        if vi >= len(verts):
                            raise ParseError(
                                f"vertex index {vi + 1} out of range", line=lineno, path=str(path)
                            )
                        if len(fields) > 1 and fields[1]:
                            ti = int(fields[1]) - 1
                            if ti < 0 or ti >= len(raw_uvs):
                                raise ParseError(
                                    f"texture index {ti + 1} out of range",
                                    line=lineno,
                                    path=str(path),
                                )
                            uv_of_vertex[vi] = ti
                        corner_ids.append(vi)
                    faces.append(tuple(corner_ids))
                else:
                    skipped += 1
            except (ParseError, NonTriangleFace):
                raise
            except ValueError as exc:
                raise ParseError(str(exc), line=lineno, path=str(path)) from exc

    if colors and len(colors) != len(verts):
        raise ParseError("mixed colored and uncolored vertices", path=str(path))

    tex = None
    if uv_of_vertex:
        tex = np.zeros((len(verts), 2), dtype=np.float64)
        for vi, ti in uv_of_vertex.items():
            tex[vi] = raw_uvs[ti]
    mesh = TriMesh(
        np.asarray(verts, dtype=np.float64).reshape(-1, 3),
        np.asarray(faces, dtype=np.int64).reshape(-1, 3),
        np.asarray(colors, dtype=np.float64) if colors else None,
        tex,
    )
    if return_stats:
        return mesh, skipped
    return mesh


def save_obj(
    mesh: TriMesh,
    path: str | Path,
    *,
    mtl_filename: str | None = None,
    material_name: str = "face",
) -> None:
    """Write the OBJ subset. Floats use shortest round-trip formatting so a
    load/save cycle reproduces coordinates bit-exactly.
    """
    path = Path(path)
    lines: list[str] = []
    if mtl_filename is not None:
        lines.append(f"mtllib {mtl_filename}")
        lines.append(f"usemtl {material_name}")
    has_colors = mesh.colors is not None
    has_uv = mesh.tex_coords is not None
    for i in range(mesh.num_vertices):
        x, y, z = (_format_float(c) for c in mesh.vertices[i])
        if has_colors:
            r, g, b = (_format_float(c) for c in mesh.colors[i])
            lines.append(f"v {x} {y} {z} {r} {g} {b}")
        else:
            lines.append(f"v {x} {y} {z}")
    if has_uv:
        for u, w in mesh.tex_coords:
            lines.append(f"vt {_format_float(u)} {_format_float(w)}")
    for a, b, c in mesh.faces + 1:
        if has_uv:
            lines.append(f"f {a}/{a} {b}/{b} {c}/{c}")
        else:
            lines.append(f"f {a} {b} {c}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


# --- primitives -------------------------------------------------------------

_ICO_T = (1.0 + 5.0**0.5) / 2.0
_ICO_VERTS = np.array(
    [
        [-1, _ICO_T, 0], [1, _ICO_T, 0], [-1, -_ICO_T, 0], [1, -_ICO_T, 0],
        [0, -1, _ICO_T], [0, 1, _ICO_T], [0, -1, -_ICO_T], [0, 1, -_ICO_T],
        [_ICO_T, 0, -1], [_ICO_T, 0, 1], [-_ICO_T, 0, -1], [-_ICO_T, 0, 1],
    ],
    dtype=np.float64,
)
_ICO_FACES = np.array(
    [
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ],
    dtype=np.int64,
)

ICOSPHERE_VERTEX_COUNTS = (12, 42, 162, 642, 2562, 10242, 40962)


def icosphere(level: int) -> TriMesh:
    """Unit sphere from `level` loop subdivisions of an icosahedron.

    Vertex counts per level: 12, 42, 162, 642, 2562, 10242, 40962.
    Deterministic: identical output for identical level.
    """
    if level < 0 or level >= len(ICOSPHERE_VERTEX_COUNTS):
        raise ValueError(f"level must be in [0, {len(ICOSPHERE_VERTEX_COUNTS) - 1}]")
    verts = [v / np.linalg.norm(v) for v in _ICO_VERTS]
    faces = _ICO_FACES
    for _ in range(level):
        midpoint: dict[tuple[int, int], int] = {}

        def mid(a: int, b: int) -> int:
            key = (a, b) if a < b else (b, a)
            idx = midpoint.get(key)
            if idx is None:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                idx = len(verts) - 1
                midpoint[key] = idx
            return idx

        out = np.empty((len(faces) * 4, 3), dtype=np.int64)
        for j, (a, b, c) in enumerate(faces):
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            out[4 * j: 4 * j + 4] = [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        faces = out
    return TriMesh(np.asarray(verts), faces)
