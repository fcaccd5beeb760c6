"""Laplacian deformation, anchor construction, eye landmark snapping, masks."""

import numpy as np
import pytest

from facekit import (
    AnchorSet,
    Coefficients,
    LandmarkSet,
    LengthMismatch,
    SegmentationMask,
    SingularSystem,
    TopologyMismatch,
    build_anchors,
    default_camera,
    icosphere,
    landmark_positions,
    laplacian_coords,
    laplacian_deform,
    load_mask,
    save_mask,
    snap_eye_landmarks,
    synthesize_shape,
)
from facekit.camera import Pose, project, to_camera_space


def anchor_residual(deformed, anchors):
    return np.linalg.norm(deformed.vertices[anchors.indices] - anchors.positions, axis=1)


# --- laplacian_deform ---


def test_anchors_at_rest_change_nothing(rng):
    mesh = icosphere(2)  # 162 vertices
    idx = rng.choice(len(mesh.vertices), 20, replace=False)
    anchors = AnchorSet(idx, mesh.vertices[idx])
    out = laplacian_deform(mesh, anchors)
    assert np.abs(out.vertices - mesh.vertices).max() < 1e-8
    assert out.faces is mesh.faces or np.array_equal(out.faces, mesh.faces)


def test_translated_anchors_translate_whole_mesh(rng):
    # translation is in the null space of L, so only the anchor term moves it
    mesh = icosphere(2)
    idx = rng.choice(len(mesh.vertices), 25, replace=False)
    shift = np.array([0.3, -0.1, 0.2])
    anchors = AnchorSet(idx, mesh.vertices[idx] + shift)
    out = laplacian_deform(mesh, anchors)
    assert np.abs(out.vertices - (mesh.vertices + shift)).max() < 1e-6


def test_stiff_anchors_pin_target_softly_elsewhere():
    mesh = icosphere(3)
    n = len(mesh.vertices)
    d = np.array([0.0, 0.0, 0.25])
    positions = mesh.vertices.copy()
    positions[0] += d
    anchors = AnchorSet(np.arange(n), positions)
    out = laplacian_deform(mesh, anchors, lam=1e6)
    moved = out.vertices - mesh.vertices
    # the displaced anchor lands essentially on target
    assert np.linalg.norm(moved[0] - d) <= 1e-3 * np.linalg.norm(d)
    # the opposite hemisphere barely notices
    far = mesh.vertices[:, 2] < -0.5
    assert np.linalg.norm(moved[far], axis=1).max() < 0.05 * np.linalg.norm(d)


def test_stiffness_sweep_tightens_anchors():
    mesh = icosphere(2)
    n = len(mesh.vertices)
    positions = mesh.vertices.copy()
    positions[3] += (0.1, 0.2, -0.1)
    anchors = AnchorSet(np.arange(n), positions)
    residuals = []
    for lam in (1.0, 1e2, 1e4, 1e6):
        out = laplacian_deform(mesh, anchors, lam=lam)
        residuals.append(anchor_residual(out, anchors).max())
    assert all(b < a for a, b in zip(residuals, residuals[1:]))


def test_target_laplacian_override():
    # with huge stiffness on every vertex the shape is fully determined by the
    # anchors; the differential term then only has to agree, so feed it the
    # coords of the target and check the solve reproduces the target exactly
    mesh = icosphere(2)
    n = len(mesh.vertices)
    target = mesh.vertices * 1.5
    tgt_mesh = mesh.with_vertices(target)
    anchors = AnchorSet(np.arange(n), target)
    out = laplacian_deform(mesh, anchors, lam=1e8, target_laplacian=laplacian_coords(tgt_mesh))
    assert np.abs(out.vertices - target).max() < 1e-6


def test_anchor_set_carries_stiffness():
    mesh = icosphere(2)
    positions = mesh.vertices.copy()
    positions[0] += (0.0, 0.0, 0.3)
    soft = AnchorSet(np.arange(len(positions)), positions, lam=1.0)
    stiff = AnchorSet(np.arange(len(positions)), positions, lam=1e6)
    r_soft = anchor_residual(laplacian_deform(mesh, soft), soft).max()
    r_stiff = anchor_residual(laplacian_deform(mesh, stiff), stiff).max()
    assert r_stiff < r_soft
    # explicit override wins over the recorded stiffness
    r_override = anchor_residual(laplacian_deform(mesh, soft, lam=1e6), soft).max()
    assert r_override == pytest.approx(r_stiff, rel=1e-9)


def test_no_anchors_is_singular():
    mesh = icosphere(1)
    anchors = AnchorSet(np.zeros(0, dtype=np.int64), np.zeros((0, 3)))
    with pytest.raises(SingularSystem):
        laplacian_deform(mesh, anchors)


def test_anchor_validation():
    with pytest.raises(ValueError):
        AnchorSet(np.array([1, 1]), np.zeros((2, 3)))  # duplicate index
    with pytest.raises(LengthMismatch):
        AnchorSet(np.array([0, 1]), np.zeros((3, 3)))
    with pytest.raises(ValueError):
        AnchorSet(np.array([0]), np.zeros((1, 3)), lam=0.0)
    with pytest.raises(ValueError):
        AnchorSet(np.array([0]), np.zeros((1, 3)), lam=-2.0)
    mesh = icosphere(1)
    ok = AnchorSet(np.array([0]), np.zeros((1, 3)))
    with pytest.raises(ValueError):
        laplacian_deform(mesh, ok, lam=0.0)


# --- build_anchors ---


def test_anchors_from_own_projection_are_current_vertices(tiny_model, cam96, rng):
    coeff = Coefficients(
        rng.normal(0, 0.4, tiny_model.dims[0]),
        rng.normal(0, 0.3, tiny_model.dims[1]),
        np.zeros(tiny_model.dims[2]),
    )
    shape = synthesize_shape(tiny_model, coeff)
    pose = Pose.identity()
    pix = project(landmark_positions(shape, tiny_model), pose, cam96)
    anchors = build_anchors(LandmarkSet(pix), shape, tiny_model, pose, cam96)
    assert np.array_equal(anchors.indices, tiny_model.landmark_indices)
    expect = shape.vertices[tiny_model.landmark_indices]
    assert np.abs(anchors.positions - expect).max() < 1e-12
    assert anchors.lam == 10.0


def test_anchor_pixel_shift_maps_to_model_units(tiny_model, cam96):
    shape = tiny_model.mean_mesh()
    pose = Pose.identity()
    pix = project(landmark_positions(shape, tiny_model), pose, cam96)
    shifted = pix.copy()
    shifted[:, 0] += 7.0   # pixels right
    shifted[:, 1] += 3.0   # pixels down
    anchors = build_anchors(LandmarkSet(shifted), shape, tiny_model, pose, cam96)
    base = shape.vertices[tiny_model.landmark_indices]
    delta = anchors.positions - base
    ppu = cam96.pixels_per_unit
    assert np.abs(delta[:, 0] - 7.0 / ppu).max() < 1e-12
    assert np.abs(delta[:, 1] + 3.0 / ppu).max() < 1e-12  # pixel y grows downward
    assert np.abs(delta[:, 2]).max() < 1e-12              # depth untouched


def test_anchor_targets_reproject_onto_input_pixels(tiny_model, cam96, rng):
    coeff = Coefficients(
        rng.normal(0, 0.3, tiny_model.dims[0]),
        rng.normal(0, 0.3, tiny_model.dims[1]),
        np.zeros(tiny_model.dims[2]),
    )
    shape = synthesize_shape(tiny_model, coeff)
    c, s = np.cos(0.3), np.sin(0.3)
    rot = np.array([[c, -s, 0], [s, c, 0], [0, 0, 1.0]]) @ np.array(
        [[1, 0, 0], [0, np.cos(-0.2), -np.sin(-0.2)], [0, np.sin(-0.2), np.cos(-0.2)]]
    )
    pose = Pose(rot, np.array([0.04, -0.02, 0.0]), 1.1)
    pix = project(landmark_positions(shape, tiny_model), pose, cam96)
    q = pix + rng.normal(0, 2.0, pix.shape)
    anchors = build_anchors(LandmarkSet(q), shape, tiny_model, pose, cam96)
    back = project(anchors.positions, pose, cam96)
    assert np.abs(back - q).max() < 1e-9
    # anchor depth stays the landmark's current camera-space depth
    z_now = to_camera_space(landmark_positions(shape, tiny_model), pose)[:, 2]
    z_anchor = to_camera_space(anchors.positions, pose)[:, 2]
    assert np.abs(z_anchor - z_now).max() < 1e-12


def test_build_anchors_rejects_foreign_shape(tiny_model, small_model, cam96):
    pix = np.zeros((68, 2))
    with pytest.raises(TopologyMismatch):
        build_anchors(
            LandmarkSet(pix), small_model.mean_mesh(), tiny_model, Pose.identity(), cam96
        )


def test_build_anchors_stamps_lam(tiny_model, cam96):
    shape = tiny_model.mean_mesh()
    pose = Pose.identity()
    pix = project(landmark_positions(shape, tiny_model), pose, cam96)
    anchors = build_anchors(LandmarkSet(pix), shape, tiny_model, pose, cam96, lam=42.0)
    assert anchors.lam == 42.0


# --- eye landmark snapping ---


def snap_oracle(points, labels, classes):
    """Per-landmark scan over every pixel: nearest boundary center, ties row-major."""
    out = points.copy()
    h, w = labels.shape
    for idx, cls in classes.items():
        best = None
        best_d = np.inf
        for r in range(h):
            for c in range(w):
                if labels[r, c] != cls:
                    continue
                neigh = []
                if r > 0:
                    neigh.append(labels[r - 1, c])
                if r < h - 1:
                    neigh.append(labels[r + 1, c])
                if c > 0:
                    neigh.append(labels[r, c - 1])
                if c < w - 1:
                    neigh.append(labels[r, c + 1])
                if not any(n != cls for n in neigh):
                    continue
                center = (c + 0.5, r + 0.5)
                d = (center[0] - points[idx, 0]) ** 2 + (center[1] - points[idx, 1]) ** 2
                if d < best_d:  # strict: first (row-major) wins ties
                    best_d = d
                    best = center
        if best is not None:
            out[idx] = best
    return out


def random_eye_mask(rng, h=24, w=24):
    labels = np.ones((h, w), dtype=np.uint8)  # all skin
    for cls, cx in ((2, 7), (3, 17)):
        rr, cc = np.mgrid[0:h, 0:w]
        blob = (rr - 12) ** 2 + (cc - cx) ** 2 <= rng.integers(4, 20)
        labels[blob] = cls
    return labels


def test_snapping_matches_brute_force(rng):
    labels = random_eye_mask(rng)
    pts = rng.uniform(0, 24, (68, 2))
    lms = LandmarkSet(pts)
    got = snap_eye_landmarks(lms, SegmentationMask(labels))
    from facekit.landmarks import DEFAULT_EYE_CLASSES

    expect = snap_oracle(pts, labels, DEFAULT_EYE_CLASSES)
    assert np.array_equal(got.points, expect)
    # non-eye landmarks untouched
    eye_idx = set(DEFAULT_EYE_CLASSES)
    rest = [i for i in range(68) if i not in eye_idx]
    assert np.array_equal(got.points[rest], pts[rest])
    # weights carried through
    assert np.array_equal(got.weights, lms.weights)


def test_snap_landmark_already_on_boundary(rng):
    labels = random_eye_mask(rng)
    pts = np.full((68, 2), 1.0)
    rc = np.argwhere(labels == 2)
    # put landmark 36 exactly on a boundary pixel center of its class
    from facekit.refine import _boundary_pixels

    b = _boundary_pixels(labels, 2)[0]
    pts[36] = (b[1] + 0.5, b[0] + 0.5)
    got = snap_eye_landmarks(LandmarkSet(pts), SegmentationMask(labels))
    assert tuple(got.points[36]) == (b[1] + 0.5, b[0] + 0.5)


def test_snap_missing_class_passes_through():
    labels = np.ones((8, 8), dtype=np.uint8)  # no eye pixels at all
    pts = np.arange(136, dtype=np.float64).reshape(68, 2)
    got = snap_eye_landmarks(LandmarkSet(pts), SegmentationMask(labels))
    assert np.array_equal(got.points, pts)


def test_snap_disk_rim():
    # class-2 disk of radius ~10 inside skin: center snaps to the rim
    labels = np.ones((40, 40), dtype=np.uint8)
    rr, cc = np.mgrid[0:40, 0:40]
    labels[(rr - 20) ** 2 + (cc - 20) ** 2 <= 100] = 2
    pts = np.zeros((68, 2))
    pts[36] = (20.5, 20.5)  # dead center
    got = snap_eye_landmarks(LandmarkSet(pts), SegmentationMask(labels))
    d = np.linalg.norm(got.points[36] - (20.5, 20.5))
    assert 9.0 <= d <= 10.5


def test_snap_custom_classes(rng):
    labels = random_eye_mask(rng)
    pts = rng.uniform(0, 24, (5, 2))
    got = snap_eye_landmarks(LandmarkSet(pts), SegmentationMask(labels), {1: 2})
    expect = snap_oracle(pts, labels, {1: 2})
    assert np.array_equal(got.points, expect)
    with pytest.raises(LengthMismatch):
        snap_eye_landmarks(LandmarkSet(pts), SegmentationMask(labels), {9: 2})


# --- masks ---


def test_mask_round_trip(tmp_path, rng):
    labels = rng.integers(0, 5, (17, 23)).astype(np.uint8)
    mask = SegmentationMask(labels)
    save_mask(mask, tmp_path / "m.png")
    back = load_mask(tmp_path / "m.png")
    assert np.array_equal(back.labels, labels)


def test_mask_validation():
    with pytest.raises(ValueError):
        SegmentationMask(np.zeros(5, dtype=np.uint8))  # 1D
    with pytest.raises(ValueError):
        SegmentationMask(np.full((4, 4), 9, dtype=np.uint8))  # outside palette
    m = SegmentationMask(np.array([[0, 1], [2, 3]], dtype=np.uint8))
    assert m.face_pixels().tolist() == [[False, True], [True, True]]
