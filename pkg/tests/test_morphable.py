"""Linear face model: synthesis, landmark lookup, generator, file format."""

import numpy as np
import pytest

from facekit import (
    Coefficients,
    DimensionMismatch,
    ParseError,
    TopologyMismatch,
    TriMesh,
    landmark_positions,
    load_model,
    make_synthetic_model,
    save_model,
    synthesize_shape,
    synthesize_texture,
    synthetic_eye_regions,
)


def random_coeff(model, rng, scale=0.5):
    d_id, d_exp, d_tex = model.dims
    return Coefficients(
        rng.normal(0, scale, d_id), rng.normal(0, scale, d_exp), rng.normal(0, scale, d_tex)
    )


def synthesis_oracle(model, coeff):
    """Per-vertex loop over basis columns."""
    flat = model.mean_shape.copy()
    for k in range(model.dims[0]):
        flat += model.basis_id[:, k] * coeff.alpha_id[k]
    for k in range(model.dims[1]):
        flat += model.basis_exp[:, k] * coeff.alpha_exp[k]
    return flat.reshape(-1, 3)


# --- synthesis ---


def test_zero_coefficients_give_mean_shape(tiny_model):
    c = Coefficients.zeros(tiny_model)
    mesh = synthesize_shape(tiny_model, c)
    assert np.array_equal(mesh.vertices.reshape(-1), tiny_model.mean_shape)
    assert np.array_equal(mesh.faces, tiny_model.faces)


def test_unit_coefficient_extracts_basis_column(tiny_model):
    d_id = tiny_model.dims[0]
    for k in (0, d_id - 1):
        e = np.zeros(d_id)
        e[k] = 1.0
        c = Coefficients(e, np.zeros(tiny_model.dims[1]), np.zeros(tiny_model.dims[2]))
        mesh = synthesize_shape(tiny_model, c)
        expect = tiny_model.mean_shape + tiny_model.basis_id[:, k]
        assert np.abs(mesh.vertices.reshape(-1) - expect).max() < 1e-15


def test_synthesis_matches_loop_oracle(tiny_model, rng):
    c = random_coeff(tiny_model, rng)
    mesh = synthesize_shape(tiny_model, c)
    assert np.abs(mesh.vertices - synthesis_oracle(tiny_model, c)).max() < 1e-12


def test_synthesis_is_affine(tiny_model, rng):
    c1 = random_coeff(tiny_model, rng)
    c2 = random_coeff(tiny_model, rng)
    c12 = Coefficients(
        c1.alpha_id + c2.alpha_id, c1.alpha_exp + c2.alpha_exp, c1.alpha_tex + c2.alpha_tex
    )
    v1 = synthesize_shape(tiny_model, c1).vertices
    v2 = synthesize_shape(tiny_model, c2).vertices
    v12 = synthesize_shape(tiny_model, c12).vertices
    mean = tiny_model.mean_shape.reshape(-1, 3)
    assert np.abs(v1 + v2 - mean - v12).max() < 1e-12


def test_synthesis_rejects_wrong_dims(tiny_model):
    with pytest.raises(DimensionMismatch):
        synthesize_shape(tiny_model, Coefficients(np.zeros(1), np.zeros(1), np.zeros(1)))


def test_texture_zero_coeff_is_mean(tiny_model):
    rgb = synthesize_texture(tiny_model, Coefficients.zeros(tiny_model))
    assert np.array_equal(rgb.reshape(-1), tiny_model.mean_texture)


def test_texture_unit_coeff_clamped(tiny_model):
    d_tex = tiny_model.dims[2]
    e = np.zeros(d_tex)
    e[0] = 1.0
    c = Coefficients(np.zeros(tiny_model.dims[0]), np.zeros(tiny_model.dims[1]), e)
    rgb = synthesize_texture(tiny_model, c)
    expect = np.clip(tiny_model.mean_texture + tiny_model.basis_tex[:, 0], 0.0, 1.0)
    assert np.abs(rgb.reshape(-1) - expect).max() < 1e-15
    assert rgb.min() >= 0.0 and rgb.max() <= 1.0


def test_texture_oracle_pre_clamp_and_clamp_count(tiny_model, rng):
    c = random_coeff(tiny_model, rng, scale=3.0)  # large enough to clamp
    rgb, count = synthesize_texture(tiny_model, c, return_clamp_count=True)
    raw = tiny_model.mean_texture + tiny_model.basis_tex @ c.alpha_tex
    assert count == int(np.count_nonzero((raw < 0) | (raw > 1)))
    inside = (raw >= 0) & (raw <= 1)
    assert np.abs(rgb.reshape(-1)[inside] - raw[inside]).max() < 1e-15


# --- landmark lookup ---


def test_landmark_positions_is_direct_lookup(tiny_model):
    mesh = tiny_model.mean_mesh()
    pts = landmark_positions(mesh, tiny_model)
    assert np.array_equal(pts, mesh.vertices[tiny_model.landmark_indices])


def test_landmark_positions_follows_synthesis(tiny_model, rng):
    c = random_coeff(tiny_model, rng)
    mesh = synthesize_shape(tiny_model, c)
    assert np.array_equal(landmark_positions(mesh, tiny_model), mesh.vertices[tiny_model.landmark_indices])


def test_landmark_positions_rejects_foreign_topology(tiny_model, small_model):
    with pytest.raises(TopologyMismatch):
        landmark_positions(small_model.mean_mesh(), tiny_model)


def test_landmark_indices_distinct_and_front(tiny_model):
    idx = tiny_model.landmark_indices
    assert len(idx) == 68
    assert len(np.unique(idx)) == 68
    # landmarks live on the camera-facing half of the head
    assert (tiny_model.mean_shape.reshape(-1, 3)[idx][:, 2] > 0).all()


# --- synthetic generator ---


def test_generator_deterministic():
    a = make_synthetic_model(42, 162, 6, 5, 4)
    b = make_synthetic_model(42, 162, 6, 5, 4)
    for name in ("mean_shape", "mean_texture", "basis_id", "basis_exp", "basis_tex",
                 "faces", "landmark_indices"):
        assert np.array_equal(getattr(a, name), getattr(b, name))


def test_generator_seeds_differ():
    a = make_synthetic_model(1, 162, 6, 5, 4)
    b = make_synthetic_model(2, 162, 6, 5, 4)
    assert not np.array_equal(a.basis_id, b.basis_id)


def test_basis_column_norms_non_increasing(tiny_model):
    for basis in (tiny_model.basis_id, tiny_model.basis_exp, tiny_model.basis_tex):
        norms = np.linalg.norm(basis, axis=0)
        assert (np.diff(norms) <= 1e-12).all()


def test_bounded_coefficients_stay_near_mean(tiny_model, rng):
    mean = tiny_model.mean_shape.reshape(-1, 3)
    lo, hi = mean.min(axis=0), mean.max(axis=0)
    size = hi - lo
    center = (hi + lo) / 2
    d_id, d_exp, _ = tiny_model.dims
    for _ in range(1000):
        a_id = np.clip(rng.normal(0, 1.0, d_id), -3, 3)
        a_exp = np.clip(rng.normal(0, 1.0, d_exp), -3, 3)
        c = Coefficients(a_id, a_exp, np.zeros(tiny_model.dims[2]))
        v = synthesize_shape(tiny_model, c).vertices
        assert (v >= center - size).all() and (v <= center + size).all()


def test_vertex_count_is_a_minimum():
    m = make_synthetic_model(0, 200, 4, 4, 4)
    assert m.num_vertices == 642  # next icosphere size up from 200
    with pytest.raises(ValueError):
        make_synthetic_model(0, 11, 4, 4, 4)


def test_shape_basis_landmark_rows_free_of_rigid_motion(tiny_model):
    # Restricted to landmark rows, shape basis columns must be orthogonal to
    # the mean head's linearized similarity motions; otherwise pose and
    # coefficients trade off and the alternating fit cannot pin either.
    mean = tiny_model.mean_shape.reshape(-1, 3)
    centered = mean - mean.mean(axis=0)
    V = len(mean)
    modes = np.zeros((3 * V, 7))
    for a in range(3):
        modes[a::3, a] = 1.0
        modes[:, 3 + a] = np.cross(np.eye(3)[a], centered).reshape(-1)
    modes[:, 6] = centered.reshape(-1)
    rows = (3 * tiny_model.landmark_indices[:, None] + np.arange(3)).reshape(-1)
    for basis in (tiny_model.basis_id, tiny_model.basis_exp):
        overlap = modes[rows].T @ basis[rows]
        scale = np.linalg.norm(basis[rows], axis=0).max()
        assert np.abs(overlap).max() < 1e-9 * max(scale, 1.0) * np.abs(modes[rows]).max()


def test_eye_regions_disjoint_and_cover_eye_landmarks(tiny_model):
    left, right = synthetic_eye_regions(tiny_model)
    assert len(left) >= 4 and len(right) >= 4
    assert not set(left.tolist()) & set(right.tolist())
    assert set(tiny_model.landmark_indices[36:42].tolist()) <= set(left.tolist())
    assert set(tiny_model.landmark_indices[42:48].tolist()) <= set(right.tolist())


# --- container format ---


def test_model_file_round_trip(tmp_path, tiny_model):
    path = tmp_path / "m.cfm"
    save_model(tiny_model, path)
    back = load_model(path)
    # f32 storage: float64 values that came from f32 survive bit-exact
    save_model(back, tmp_path / "m2.cfm")
    assert (tmp_path / "m.cfm").read_bytes() == (tmp_path / "m2.cfm").read_bytes()
    assert np.abs(back.mean_shape - tiny_model.mean_shape).max() < 1e-6
    assert np.array_equal(back.faces, tiny_model.faces)
    assert np.array_equal(back.landmark_indices, tiny_model.landmark_indices)


def test_model_file_bad_magic(tmp_path, tiny_model):
    path = tmp_path / "m.cfm"
    save_model(tiny_model, path)
    data = bytearray(path.read_bytes())
    data[:4] = b"NOPE"
    path.write_bytes(data)
    with pytest.raises(ParseError):
        load_model(path)


def test_model_file_truncated(tmp_path, tiny_model):
    path = tmp_path / "m.cfm"
    save_model(tiny_model, path)
    path.write_bytes(path.read_bytes()[:-10])
    with pytest.raises(ParseError):
        load_model(path)


def test_model_file_trailing_bytes(tmp_path, tiny_model):
    path = tmp_path / "m.cfm"
    save_model(tiny_model, path)
    path.write_bytes(path.read_bytes() + b"\x00")
    with pytest.raises(ParseError):
        load_model(path)


def test_model_file_version_rejected(tmp_path, tiny_model):
    path = tmp_path / "m.cfm"
    save_model(tiny_model, path)
    data = bytearray(path.read_bytes())
    data[4:8] = (99).to_bytes(4, "little")
    path.write_bytes(data)
    with pytest.raises(ParseError):
        load_model(path)
