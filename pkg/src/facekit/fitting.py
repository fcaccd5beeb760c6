"""Coarse landmark fitting: alternating pose / coefficient optimization.

The landmark data term is the weighted mean squared pixel error; coefficient
blocks are regularized by squared norms. For a fixed pose the projection is
affine in the coefficients, so the coefficient step is a single ridge solve
and the alternation decreases the total objective monotonically.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .camera import Camera, Pose, estimate_pose, project
from .errors import DimensionMismatch, LengthMismatch, ParseError
from .mesh import TriMesh
from .morphable import Coefficients, MorphableModel, landmark_positions

__all__ = [
    "LandmarkSet",
    "FitConfig",
    "FitResult",
    "landmark_error",
    "regularization_energy",
    "fit",
    "template_refine",
    "load_landmarks",
    "save_landmarks",
    "save_fit_result",
    "load_fit_result",
]


@dataclass(frozen=True)
class LandmarkSet:
    """2D pixel landmarks with per-point positive weights."""

    points: np.ndarray   # (N, 2) float64
    weights: np.ndarray | None = None

    def __post_init__(self):
        p = np.ascontiguousarray(np.asarray(self.points, dtype=np.float64).reshape(-1, 2))
        w = self.weights
        if w is None:
            w = np.ones(len(p))
        w = np.ascontiguousarray(np.asarray(w, dtype=np.float64).reshape(-1))
        if len(w) != len(p):
            raise LengthMismatch(f"{len(p)} points vs {len(w)} weights")
        if np.any(w <= 0):
            raise ValueError("landmark weights must be positive")
        p.flags.writeable = False
        w.flags.writeable = False
        object.__setattr__(self, "points", p)
        object.__setattr__(self, "weights", w)

    def __len__(self) -> int:
        return len(self.points)

    def with_points(self, points: np.ndarray) -> "LandmarkSet":
        return LandmarkSet(points, self.weights)


@dataclass(frozen=True)
class FitConfig:
    """Solver knobs; defaults mirror the reference configuration."""

    w_id: float = 1.2
    w_exp: float = 1.0
    w_tex: float = 1.2e-3
    max_outer_iters: int = 20
    convergence_tol: float = 1e-6
    freeze_scale: bool = False
    ridge_floor: float = 1e-9


@dataclass(frozen=True)
class FitResult:
    """Outcome of a fitting run.

    ``landmark_error`` is the weighted mean squared pixel error alone;
    ``history`` tracks the full objective (data term plus regularization,
    including the solver's ridge floor) once per outer iteration and is
    non-increasing after the first entry.
    """

    coefficients: Coefficients
    pose: Pose
    landmark_error: float
    history: tuple[float, ...]
    converged: bool


def _weighted_pixel_error(pts3d: np.ndarray, pose, cam, landmarks: LandmarkSet) -> float:
    proj = project(pts3d, pose, cam)
    d2 = np.sum((proj - landmarks.points) ** 2, axis=1)
    return float(np.mean(landmarks.weights * d2))


def landmark_error(
    shape: TriMesh,
    model: MorphableModel,
    pose: Pose,
    cam: Camera,
    landmarks: LandmarkSet,
) -> float:
    """Weighted mean squared pixel distance between the shape's projected
    landmark vertices and the annotated positions."""
    if len(landmarks) != len(model.landmark_indices):
        raise LengthMismatch(
            f"{len(landmarks)} landmarks vs model's {len(model.landmark_indices)}"
        )
    return _weighted_pixel_error(landmark_positions(shape, model), pose, cam, landmarks)


def regularization_energy(coeff: Coefficients, config: FitConfig = FitConfig()) -> float:
    """w_id |a_id|^2 + w_exp |a_exp|^2 + w_tex |a_tex|^2."""
    return float(
        config.w_id * coeff.alpha_id @ coeff.alpha_id
        + config.w_exp * coeff.alpha_exp @ coeff.alpha_exp
        + config.w_tex * coeff.alpha_tex @ coeff.alpha_tex
    )


_BLOCKS = ("id", "exp")


def _landmark_basis_rows(model: MorphableModel, basis: np.ndarray) -> np.ndarray:
    """(N, 3, d) slices of a basis at the landmark vertices."""
    idx = (3 * model.landmark_indices[:, None] + np.arange(3)[None, :]).reshape(-1)
    return basis[idx].reshape(len(model.landmark_indices), 3, basis.shape[1])


def _coeff_landmarks(model: MorphableModel, coeff: Coefficients) -> np.ndarray:
    """Landmark vertex positions straight from coefficients, skipping the
    full-mesh synthesis (the solver only ever needs these rows)."""
    pts = model.mean_shape.reshape(-1, 3)[model.landmark_indices].copy()
    pts += _landmark_basis_rows(model, model.basis_id) @ coeff.alpha_id
    pts += _landmark_basis_rows(model, model.basis_exp) @ coeff.alpha_exp
    return pts


def _solve_coefficients(
    model: MorphableModel,
    landmarks: LandmarkSet,
    cam: Camera,
    pose: Pose,
    coeff: Coefficients,
    subset: tuple[str, ...],
    block_weights: dict[str, float],
    ridge_floor: float,
) -> Coefficients:
    """Exact ridge solve of the landmark term over the selected blocks."""
    N = len(landmarks)
    # Pixel mapping of a camera-space point is affine: offset + D @ (xy).
    D = np.array([[cam.pixels_per_unit, 0.0], [0.0, -cam.pixels_per_unit]])
    P2 = pose.rotation[:2, :]  # rows of R feeding the projection
    sDP = pose.scale * (D @ P2)  # (2, 3)

    mean_pts = model.mean_shape.reshape(-1, 3)[model.landmark_indices]
    frozen = dict(id=coeff.alpha_id, exp=coeff.alpha_exp)
    bases = dict(id=model.basis_id, exp=model.basis_exp)

    base3 = mean_pts.copy()
    blocks: list[tuple[str, np.ndarray]] = []
    for name in _BLOCKS:
        rows = _landmark_basis_rows(model, bases[name])  # (N, 3, d)
        if name in subset:
            blocks.append((name, rows))
        else:
            base3 += rows @ frozen[name]
    if not blocks:
        return coeff

    offset = cam.pix(np.zeros(2)) + pose.translation[:2] @ D.T
    base_px = offset + base3 @ sDP.T  # (N, 2)
    r = landmarks.points - base_px

    G = np.concatenate(
        [np.einsum("ct,ntd->ncd", sDP, rows) for _, rows in blocks], axis=2
    )  # (N, 2, d_total)
    w = landmarks.weights
    Gw = G * w[:, None, None]
    H = np.einsum("ncd,nce->de", Gw, G) / N
    g = np.einsum("ncd,nc->d", Gw, r) / N
    reg = np.concatenate(
        [
            np.full(rows.shape[2], block_weights.get(name, 0.0) + ridge_floor)
            for name, rows in blocks
        ]
    )
    alpha = np.linalg.solve(H + np.diag(reg), g)

    out = {name: frozen[name] for name in _BLOCKS}
    pos = 0
    for name, rows in blocks:
        d = rows.shape[2]
        out[name] = alpha[pos: pos + d]
        pos += d
    return Coefficients(out["id"], out["exp"], coeff.alpha_tex)


def _objective(
    model: MorphableModel,
    landmarks: LandmarkSet,
    cam: Camera,
    pose: Pose,
    coeff: Coefficients,
    block_weights: dict[str, float],
    ridge_floor: float,
) -> float:
    data = _weighted_pixel_error(_coeff_landmarks(model, coeff), pose, cam, landmarks)
    reg = (block_weights.get("id", 0.0) + ridge_floor) * float(coeff.alpha_id @ coeff.alpha_id)
    reg += (block_weights.get("exp", 0.0) + ridge_floor) * float(coeff.alpha_exp @ coeff.alpha_exp)
    return data + reg


def fit(
    model: MorphableModel,
    landmarks: LandmarkSet,
    cam: Camera,
    config: FitConfig = FitConfig(),
    subset: tuple[str, ...] = ("id", "exp"),
) -> FitResult:
    """Alternating coarse fit from the mean shape.

    Each outer iteration solves the coefficient ridge problem exactly at the
    current pose, then re-estimates the pose warm-started from the previous
    one; both half-steps are exact minimizers of the total objective over
    their variables, so the recorded history never increases.
    """
    for name in subset:
        if name not in _BLOCKS:
            raise DimensionMismatch(f"unknown coefficient block {name!r}")
    if len(landmarks) != len(model.landmark_indices):
        raise LengthMismatch(
            f"{len(landmarks)} landmarks vs model's {len(model.landmark_indices)}"
        )
    block_weights = {"id": config.w_id, "exp": config.w_exp}

    coeff = Coefficients.zeros(model)
    pose = estimate_pose(
        _coeff_landmarks(model, coeff),
        landmarks.points,
        landmarks.weights,
        cam,
        freeze_scale=config.freeze_scale,
    )
    history = [_objective(model, landmarks, cam, pose, coeff, block_weights, config.ridge_floor)]
    converged = False
    for _ in range(config.max_outer_iters):
        coeff = _solve_coefficients(
            model, landmarks, cam, pose, coeff, subset, block_weights, config.ridge_floor
        )
        pose = estimate_pose(
            _coeff_landmarks(model, coeff),
            landmarks.points,
            landmarks.weights,
            cam,
            freeze_scale=config.freeze_scale,
            init=pose,
        )
        obj = _objective(model, landmarks, cam, pose, coeff, block_weights, config.ridge_floor)
        history.append(obj)
        if abs(history[-2] - obj) <= config.convergence_tol * max(1.0, abs(history[-2])):
            converged = True
            break
    return FitResult(
        coefficients=coeff,
        pose=pose,
        landmark_error=_weighted_pixel_error(_coeff_landmarks(model, coeff), pose, cam, landmarks),
        history=tuple(history),
        converged=converged,
    )


def template_refine(
    model: MorphableModel,
    landmarks: LandmarkSet,
    cam: Camera,
    pose: Pose,
    coeff: Coefficients,
    subset: tuple[str, ...] = ("id", "exp"),
    ridge_floor: float = 1e-9,
) -> FitResult:
    """Re-solve the selected coefficient blocks at a frozen pose with the
    block regularizers off (only the numerical ridge floor remains).

    One exact linear solve; the before/after objectives form the history.
    """
    for name in subset:
        if name not in _BLOCKS:
            raise DimensionMismatch(f"unknown coefficient block {name!r}")
    no_reg: dict[str, float] = {}
    before = _objective(model, landmarks, cam, pose, coeff, no_reg, ridge_floor)
    refined = _solve_coefficients(
        model, landmarks, cam, pose, coeff, subset, no_reg, ridge_floor
    )
    after = _objective(model, landmarks, cam, pose, refined, no_reg, ridge_floor)
    return FitResult(
        coefficients=refined,
        pose=pose,
        landmark_error=_weighted_pixel_error(_coeff_landmarks(model, refined), pose, cam, landmarks),
        history=(before, after),
        converged=True,
    )


# --- text formats ------------------------------------------------------------


def _fmt(x: float) -> str:
    return repr(float(x))


def load_landmarks(path: str | Path) -> LandmarkSet:
    """Read 'idx x y [weight]' lines; '#' starts a comment. Indices must cover
    0..N-1 exactly once."""
    path = Path(path)
    entries: dict[int, tuple[float, float, float]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            parts = body.split()
            if len(parts) not in (3, 4):
                raise ParseError("expected 'idx x y [weight]'", line=lineno, path=str(path))
            try:
                idx = int(parts[0])
                x, y = float(parts[1]), float(parts[2])
                w = float(parts[3]) if len(parts) == 4 else 1.0
            except ValueError as exc:
                raise ParseError(str(exc), line=lineno, path=str(path)) from exc
            if idx < 0:
                raise ParseError(f"negative landmark index {idx}", line=lineno, path=str(path))
            if idx in entries:
                raise ParseError(f"duplicate landmark index {idx}", line=lineno, path=str(path))
            entries[idx] = (x, y, w)
    if not entries:
        raise ParseError("no landmarks in file", path=str(path))
    n = max(entries) + 1
    if len(entries) != n:
        missing = sorted(set(range(n)) - set(entries))[:5]
        raise ParseError(f"landmark indices not contiguous; missing {missing}", path=str(path))
    pts = np.array([entries[i][:2] for i in range(n)])
    w = np.array([entries[i][2] for i in range(n)])
    return LandmarkSet(pts, w)


def save_landmarks(landmarks: LandmarkSet, path: str | Path) -> None:
    lines = []
    write_weights = bool(np.any(landmarks.weights != 1.0))
    for i, (x, y) in enumerate(landmarks.points):
        line = f"{i} {_fmt(x)} {_fmt(y)}"
        if write_weights:
            line += f" {_fmt(landmarks.weights[i])}"
        lines.append(line)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def save_fit_result(result: FitResult, path: str | Path) -> None:
    """Plain-text key/value dump; floats keep full round-trip precision."""
    c = result.coefficients
    lines = [
        f"converged {int(result.converged)}",
        f"landmark_error {_fmt(result.landmark_error)}",
        f"scale {_fmt(result.pose.scale)}",
        "rotation " + " ".join(_fmt(v) for v in result.pose.rotation.reshape(-1)),
        "translation " + " ".join(_fmt(v) for v in result.pose.translation),
        "alpha_id " + " ".join(_fmt(v) for v in c.alpha_id),
        "alpha_exp " + " ".join(_fmt(v) for v in c.alpha_exp),
        "alpha_tex " + " ".join(_fmt(v) for v in c.alpha_tex),
        "history " + " ".join(_fmt(v) for v in result.history),
    ]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_fit_result(path: str | Path) -> FitResult:
    path = Path(path)
    fields: dict[str, list[str]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            parts = body.split()
            fields[parts[0]] = parts[1:]
    required = {"converged", "landmark_error", "scale", "rotation", "translation",
                "alpha_id", "alpha_exp", "alpha_tex", "history"}
    missing = required - fields.keys()
    if missing:
        raise ParseError(f"missing fields {sorted(missing)}", path=str(path))
    try:
        pose = Pose(
            np.array([float(v) for v in fields["rotation"]]).reshape(3, 3),
            np.array([float(v) for v in fields["translation"]]),
            float(fields["scale"][0]),
        )
        coeff = Coefficients(
            np.array([float(v) for v in fields["alpha_id"]], dtype=np.float64),
            np.array([float(v) for v in fields["alpha_exp"]], dtype=np.float64),
            np.array([float(v) for v in fields["alpha_tex"]], dtype=np.float64),
        )
        return FitResult(
            coefficients=coeff,
            pose=pose,
            landmark_error=float(fields["landmark_error"][0]),
            history=tuple(float(v) for v in fields["history"]),
            converged=bool(int(fields["converged"][0])),
        )
    except (ValueError, IndexError) as exc:
        raise ParseError(str(exc), path=str(path)) from exc
