"""Deformation transfer, blendshape evaluation, eyeball fitting, rig formats."""

import base64
import json

import numpy as np
import pytest

from facekit import (
    BlendshapeRig,
    DegenerateRegion,
    DegenerateTriangle,
    ExpressionTemplateSet,
    LengthMismatch,
    STANDARD_EXPRESSION_NAMES,
    TopologyMismatch,
    TriMesh,
    build_rig,
    deformation_gradients,
    evaluate_rig,
    export_rig_json,
    fit_eyeball,
    fnv1a32,
    icosphere,
    load_beta_sequence,
    load_rig,
    make_standard_templates,
    save_beta_sequence,
    save_rig,
    transfer_expression,
    triangle_frame,
)
from facekit.errors import ParseError


def rot(axis, angle):
    c, s = np.cos(angle), np.sin(angle)
    i, j = [(1, 2), (2, 0), (0, 1)][axis]
    R = np.eye(3)
    R[i, i] = R[j, j] = c
    R[i, j] = -s
    R[j, i] = s
    return R


def bumpy_sphere(level=1, seed=0, amplitude=0.08):
    """Non-symmetric closed test surface (sphere with a deterministic ripple)."""
    base = icosphere(level)
    rng = np.random.default_rng(seed)
    r = 1.0 + amplitude * rng.standard_normal(len(base.vertices))
    return base.with_vertices(base.vertices * r[:, None])


@pytest.fixture(scope="module")
def sphere_templates():
    neutral = icosphere(2)
    rng = np.random.default_rng(12)
    m = 4
    shapes = np.empty((m, len(neutral.vertices), 3))
    for i in range(m):
        bump = 0.12 * rng.standard_normal(len(neutral.vertices))
        shapes[i] = neutral.vertices * (1.0 + bump[:, None])
    names = tuple(f"pose{i}" for i in range(m))
    return ExpressionTemplateSet(neutral, names, shapes)


# --- triangle frames and gradients ---


def test_unit_right_triangle_frame_is_identity():
    F = triangle_frame(np.zeros(3), np.array([1.0, 0, 0]), np.array([0, 1.0, 0]))
    assert np.abs(F - np.eye(3)).max() < 1e-12


def test_frame_normal_column_length(rng):
    # the synthetic fourth vertex sits at sqrt(|e2 x e3|) above the plane,
    # so the third column has length (2*area)^)0.5( -- i.e. sqrt(2A)
    for _ in range(10):
        v = rng.normal(size=(3, 3))
        F = triangle_frame(*v)
        area = 0.5 * np.linalg.norm(np.cross(v[1] - v[0], v[2] - v[0]))
        assert np.linalg.norm(F[:, 2]) == pytest.approx(np.sqrt(2 * area), rel=1e-9)
        # first two columns are the in-plane edges
        assert np.allclose(F[:, 0], v[1] - v[0])
        assert np.allclose(F[:, 1], v[2] - v[0])


def test_degenerate_triangle_rejected():
    with pytest.raises(DegenerateTriangle):
        triangle_frame(np.zeros(3), np.ones(3), 2 * np.ones(3))


def test_gradients_identity_when_undeformed(sphere_templates):
    neutral = sphere_templates.neutral
    G = deformation_gradients(neutral, neutral)
    assert G.shape == (len(neutral.faces), 3, 3)
    assert np.abs(G - np.eye(3)).max() < 1e-9


def test_gradients_uniform_scale(sphere_templates):
    neutral = sphere_templates.neutral
    G = deformation_gradients(neutral, neutral.vertices * 2.0)
    # in-plane doubles; the synthetic normal leg scales with sqrt(area) too,
    # so the whole gradient is the similarity transform
    assert np.abs(G - 2.0 * np.eye(3)).max() < 1e-9


def test_gradients_pure_rotation(sphere_templates):
    neutral = sphere_templates.neutral
    R = rot(1, 0.7) @ rot(0, -0.3)
    G = deformation_gradients(neutral, neutral.vertices @ R.T)
    assert np.abs(G - R).max() < 1e-9


def test_gradients_accept_mesh_and_reject_foreign(sphere_templates):
    neutral = sphere_templates.neutral
    moved = neutral.with_vertices(neutral.vertices * 1.1)
    G1 = deformation_gradients(neutral, moved)
    G2 = deformation_gradients(neutral, moved.vertices)
    assert np.array_equal(G1, G2)
    with pytest.raises(TopologyMismatch):
        deformation_gradients(neutral, icosphere(1))
    with pytest.raises(LengthMismatch):
        deformation_gradients(neutral, moved.vertices[:-1])


def test_gradient_reconstructs_deformed_edges(rng):
    mesh = bumpy_sphere(1, seed=3)
    deformed = mesh.vertices + 0.05 * rng.standard_normal(mesh.vertices.shape)
    G = deformation_gradients(mesh, deformed)
    for j in (0, 7, len(mesh.faces) - 1):
        i1, i2, i3 = mesh.faces[j]
        src = triangle_frame(mesh.vertices[i1], mesh.vertices[i2], mesh.vertices[i3])
        dst = triangle_frame(deformed[i1], deformed[i2], deformed[i3])
        assert np.abs(G[j] @ src - dst).max() < 1e-10


# --- expression transfer ---


def test_transfer_onto_own_neutral_returns_template(sphere_templates):
    for i, name in enumerate(sphere_templates.names):
        out = transfer_expression(sphere_templates, i, sphere_templates.neutral)
        assert np.abs(out.vertices - sphere_templates.shapes[i]).max() < 1e-6
        by_name = transfer_expression(sphere_templates, name, sphere_templates.neutral)
        assert np.array_equal(out.vertices, by_name.vertices)


def test_transfer_null_expression_returns_target(sphere_templates):
    neutral = sphere_templates.neutral
    shapes = np.repeat(neutral.vertices[None], 2, axis=0)
    still = ExpressionTemplateSet(neutral, ("a", "b"), shapes)
    target = bumpy_sphere(2, seed=9)
    out = transfer_expression(still, "a", target)
    assert np.abs(out.vertices - target.vertices).max() < 1e-6


def test_transfer_translation_invariance(sphere_templates):
    target = bumpy_sphere(2, seed=4)
    a = transfer_expression(sphere_templates, 0, target)
    shifted = target.with_vertices(target.vertices + (5.0, -2.0, 1.0))
    b = transfer_expression(sphere_templates, 0, shifted)
    assert np.abs((b.vertices - (5.0, -2.0, 1.0)) - a.vertices).max() < 1e-6


def test_transfer_pins_least_displaced_vertex(sphere_templates):
    # the free translation is resolved by pinning the vertex whose template
    # displacement is smallest: it lands exactly at target + displacement
    target = bumpy_sphere(2, seed=5)
    disp = sphere_templates.shapes[1] - sphere_templates.neutral.vertices
    k = int(np.argmin(np.linalg.norm(disp, axis=1)))
    out = transfer_expression(sphere_templates, 1, target)
    assert np.abs(out.vertices[k] - (target.vertices[k] + disp[k])).max() < 1e-12


def test_transfer_respects_untouched_region(sphere_templates):
    # localized template edit: vertices far from it barely move
    neutral = sphere_templates.neutral
    v = neutral.vertices.copy()
    cap = v[:, 2] > 0.8
    v[cap] *= 1.3
    templates = ExpressionTemplateSet(neutral, ("cap",), v[None])
    target = bumpy_sphere(2, seed=6, amplitude=0.05)
    out = transfer_expression(templates, "cap", target)
    moved = np.linalg.norm(out.vertices - target.vertices, axis=1)
    far = neutral.vertices[:, 2] < -0.5
    assert moved[far].max() < 0.05 * moved.max()


def test_transfer_expression_name_errors(sphere_templates):
    with pytest.raises(KeyError):
        transfer_expression(sphere_templates, "no_such", sphere_templates.neutral)
    with pytest.raises(IndexError):
        transfer_expression(sphere_templates, 99, sphere_templates.neutral)


def test_template_set_validation():
    neutral = icosphere(1)
    v = neutral.vertices
    with pytest.raises(ValueError):
        ExpressionTemplateSet(neutral, ("a", "a"), np.repeat(v[None], 2, axis=0))
    with pytest.raises(ValueError):
        ExpressionTemplateSet(neutral, ("",), v[None])
    with pytest.raises(LengthMismatch):
        ExpressionTemplateSet(neutral, ("a", "b"), v[None])


# --- rig building and evaluation ---


def test_build_rig_onto_own_neutral_keeps_template_deltas(sphere_templates):
    rig = build_rig(sphere_templates, sphere_templates.neutral)
    assert rig.names == sphere_templates.names
    expect = sphere_templates.shapes - sphere_templates.neutral.vertices
    assert np.abs(rig.deltas - expect).max() < 1e-6


def test_build_rig_matches_per_expression_transfer(sphere_templates):
    target = bumpy_sphere(2, seed=7)
    rig = build_rig(sphere_templates, target)
    for i in range(len(rig.names)):
        single = transfer_expression(sphere_templates, i, target)
        assert np.abs(rig.deltas[i] - (single.vertices - target.vertices)).max() < 1e-9


def test_build_rig_thread_count_does_not_change_result(sphere_templates):
    target = bumpy_sphere(2, seed=8)
    r1 = build_rig(sphere_templates, target, threads=1)
    r2 = build_rig(sphere_templates, target, threads=3)
    assert np.array_equal(r1.deltas, r2.deltas)


def test_area_weighted_flag_changes_solution_not_contract(sphere_templates):
    target = bumpy_sphere(2, seed=10)
    plain = build_rig(sphere_templates, target)
    weighted = build_rig(sphere_templates, target, area_weighted=True)
    assert plain.deltas.shape == weighted.deltas.shape
    # onto its own neutral both reproduce the templates
    own = build_rig(sphere_templates, sphere_templates.neutral, area_weighted=True)
    expect = sphere_templates.shapes - sphere_templates.neutral.vertices
    assert np.abs(own.deltas - expect).max() < 1e-6


def test_single_expression_rig(sphere_templates):
    one = ExpressionTemplateSet(
        sphere_templates.neutral, ("solo",), sphere_templates.shapes[:1]
    )
    rig = build_rig(one, sphere_templates.neutral)
    assert rig.deltas.shape[0] == 1


def test_evaluate_neutral_and_units(sphere_templates):
    rig = build_rig(sphere_templates, sphere_templates.neutral)
    m = len(rig.names)
    out = evaluate_rig(rig, np.zeros(m))
    assert np.array_equal(out.vertices, rig.neutral.vertices)
    for i in range(m):
        e = np.zeros(m)
        e[i] = 1.0
        out = evaluate_rig(rig, e)
        assert np.abs(out.vertices - (rig.neutral.vertices + rig.deltas[i])).max() < 1e-12


def test_evaluate_is_affine(sphere_templates, rng):
    import warnings

    rig = build_rig(sphere_templates, sphere_templates.neutral)
    m = len(rig.names)
    for _ in range(20):
        b1 = rng.uniform(0, 1, m)
        b2 = rng.uniform(0, 1, m)
        v1 = evaluate_rig(rig, b1).vertices
        v2 = evaluate_rig(rig, b2).vertices
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)  # b1+b2 may exceed 1
            v12 = evaluate_rig(rig, b1 + b2).vertices
        assert np.abs(v1 + v2 - rig.neutral.vertices - v12).max() < 1e-12


def test_evaluate_validates_and_warns(sphere_templates):
    rig = build_rig(sphere_templates, sphere_templates.neutral)
    m = len(rig.names)
    with pytest.raises(LengthMismatch):
        evaluate_rig(rig, np.zeros(m + 1))
    with pytest.warns(RuntimeWarning):
        evaluate_rig(rig, np.full(m, 1.5))
    with pytest.warns(RuntimeWarning):
        evaluate_rig(rig, np.full(m, -0.1))


def test_evaluate_reuses_out_buffer(sphere_templates):
    rig = build_rig(sphere_templates, sphere_templates.neutral)
    m = len(rig.names)
    buf = np.empty_like(rig.neutral.vertices)
    out = evaluate_rig(rig, np.full(m, 0.5), out=buf)
    assert np.shares_memory(out.vertices, buf)
    again = evaluate_rig(rig, np.zeros(m), out=buf)
    assert np.shares_memory(again.vertices, buf)
    assert np.array_equal(buf, rig.neutral.vertices)


def test_standard_template_names(tiny_model):
    assert len(STANDARD_EXPRESSION_NAMES) == 46
    assert len(set(STANDARD_EXPRESSION_NAMES)) == 46
    templates = make_standard_templates(tiny_model.mean_mesh(), tiny_model.landmark_indices)
    assert templates.names == STANDARD_EXPRESSION_NAMES
    assert templates.shapes.shape == (46, tiny_model.num_vertices, 3)
    # every template actually moves something
    motion = np.abs(templates.shapes - templates.neutral.vertices).max(axis=(1, 2))
    assert (motion > 0).all()


# --- eyeball fitting ---


def eyeball_mesh(center, radius):
    ball = icosphere(2)
    return ball.with_vertices(center + radius * ball.vertices)


def test_fit_eyeball_recovers_exact_sphere():
    center = np.array([0.3, -0.2, 0.9])
    mesh = eyeball_mesh(center, 0.27)
    eye = fit_eyeball(mesh, np.arange(mesh.num_vertices))
    assert np.abs(eye.center - center).max() < 1e-9
    assert eye.radius == pytest.approx(0.27, abs=1e-9)
    assert eye.inset == 0.0


def test_fit_eyeball_inset_moves_inward_only():
    center = np.array([0.0, 0.0, 1.0])
    mesh = eyeball_mesh(center, 0.25)
    cap = np.where(mesh.vertices[:, 2] > center[2] + 0.1)[0]  # front cap
    plain = fit_eyeball(mesh, cap)
    inset = fit_eyeball(mesh, cap, inset=0.1)
    assert inset.radius == pytest.approx(plain.radius, abs=1e-12)
    shift = inset.center - plain.center
    assert np.linalg.norm(shift) == pytest.approx(0.1, abs=1e-9)
    # cap opens toward +z, so inward is -z
    assert shift[2] < 0


def test_fit_eyeball_rejects_degenerate():
    flat = np.zeros((10, 3))
    flat[:, :2] = np.random.default_rng(0).normal(size=(10, 2))
    mesh = TriMesh(flat, np.array([[0, 1, 2]]))
    with pytest.raises(DegenerateRegion):
        fit_eyeball(mesh, np.arange(10))  # coplanar
    with pytest.raises(DegenerateRegion):
        fit_eyeball(mesh, np.arange(3))  # too few


# --- binary rig container ---


def test_rig_round_trip(tmp_path, sphere_templates):
    rig = build_rig(sphere_templates, sphere_templates.neutral)
    eye = fit_eyeball(
        rig.neutral, np.where(rig.neutral.vertices[:, 2] > 0.9)[0], inset=0.05
    )
    path = tmp_path / "r.cfr"
    save_rig(rig, path, eyeballs=(eye,))
    back, eyes = load_rig(path)
    assert back.names == rig.names
    assert np.array_equal(back.neutral.faces, rig.neutral.faces)
    # payload is f32; saving again must be byte-identical
    save_rig(back, tmp_path / "r2.cfr", eyeballs=eyes)
    assert path.read_bytes() == (tmp_path / "r2.cfr").read_bytes()
    assert np.abs(back.neutral.vertices - rig.neutral.vertices).max() < 1e-6
    assert np.abs(back.deltas - rig.deltas).max() < 1e-6
    assert len(eyes) == 1
    assert np.abs(eyes[0].center - eye.center).max() < 1e-6
    assert eyes[0].radius == pytest.approx(eye.radius, abs=1e-6)
    assert np.array_equal(eyes[0].region, eye.region)


def test_rig_file_errors(tmp_path, sphere_templates):
    rig = build_rig(sphere_templates, sphere_templates.neutral)
    path = tmp_path / "r.cfr"
    save_rig(rig, path)
    data = bytearray(path.read_bytes())
    bad = tmp_path / "bad.cfr"

    bad.write_bytes(b"XXXX" + bytes(data[4:]))
    with pytest.raises(ParseError):
        load_rig(bad)

    corrupt = bytearray(data)
    corrupt[4:8] = (7).to_bytes(4, "little")
    bad.write_bytes(bytes(corrupt))
    with pytest.raises(ParseError):
        load_rig(bad)

    bad.write_bytes(bytes(data[:-6]))
    with pytest.raises(ParseError):
        load_rig(bad)

    bad.write_bytes(bytes(data) + b"\x01")
    with pytest.raises(ParseError):
        load_rig(bad)


# --- JSON export ---


def test_fnv1a32_known_vectors():
    assert fnv1a32(b"") == 0x811C9DC5
    assert fnv1a32(b"a") == 0xE40C292C
    assert fnv1a32(b"foobar") == 0xBF9CF968


def test_rig_json_schema(tmp_path, sphere_templates):
    rig = build_rig(sphere_templates, sphere_templates.neutral)
    eye = fit_eyeball(rig.neutral, np.where(rig.neutral.vertices[:, 2] > 0.9)[0])
    text = export_rig_json(rig, eyeballs=(eye,), texture_name="skin.png")
    doc = json.loads(text)

    assert doc["magic"] == "CFR1"
    assert doc["version"] == 1
    assert doc["vertex_count"] == len(rig.neutral.vertices)
    assert doc["face_count"] == len(rig.neutral.faces)
    assert doc["names"] == list(rig.names)
    assert doc["texture"] == "skin.png"

    neutral = np.frombuffer(base64.b64decode(doc["neutral"]), dtype="<f4")
    assert len(neutral) == 3 * doc["vertex_count"]
    assert np.abs(neutral.reshape(-1, 3) - rig.neutral.vertices).max() < 1e-6
    faces = np.frombuffer(base64.b64decode(doc["faces"]), dtype="<u4")
    assert np.array_equal(faces.reshape(-1, 3), rig.neutral.faces)

    # each checksum hashes the blended f32 buffer (neutral + delta in f32),
    # as an 8-digit lowercase hex string
    n32 = np.ascontiguousarray(rig.neutral.vertices.reshape(-1), dtype="<f4")
    for i, entry in enumerate(doc["expressions"]):
        assert entry["name"] == rig.names[i]
        d32 = np.frombuffer(base64.b64decode(entry["deltas"]), dtype="<f4")
        assert np.abs(d32.reshape(-1, 3) - rig.deltas[i]).max() < 1e-6
        blended = n32 + d32
        assert entry["checksum"] == f"{fnv1a32(blended.tobytes()):08x}"
    assert doc["neutral_checksum"] == f"{fnv1a32(n32.tobytes()):08x}"

    assert len(doc["eyeballs"]) == 1
    ball = doc["eyeballs"][0]
    assert len(ball["center"]) == 3
    assert ball["radius"] > 0

    # path form writes the same text
    out = tmp_path / "rig.json"
    export_rig_json(rig, out, eyeballs=(eye,), texture_name="skin.png")
    assert out.read_text() == text


def test_rig_json_no_texture_key_optional(sphere_templates):
    rig = build_rig(sphere_templates, sphere_templates.neutral)
    doc = json.loads(export_rig_json(rig))
    assert "texture" not in doc or doc["texture"] is None
    assert doc["eyeballs"] == []


# --- beta sequences ---


def test_beta_sequence_round_trip(tmp_path, rng):
    betas = rng.uniform(0, 1, (12, 46))
    path = tmp_path / "anim.txt"
    save_beta_sequence(betas, path)
    back = load_beta_sequence(path, 46)
    assert np.array_equal(back, betas)


def test_beta_sequence_errors(tmp_path):
    path = tmp_path / "anim.txt"
    path.write_text("0.1 0.2 0.3\n")
    with pytest.raises(ParseError):
        load_beta_sequence(path, 4)  # wrong count
    path.write_text("0.1 oops\n")
    with pytest.raises(ParseError):
        load_beta_sequence(path, 2)
