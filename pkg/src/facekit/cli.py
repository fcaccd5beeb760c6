"""Command line interface.

Subcommands cover the full pipeline: synthetic data generation, coarse
fitting, Laplacian refinement, texture extraction, rig generation, rendering,
evaluation and animation. Every stage reads and writes files, so pipelines
can be composed from separate invocations; numeric text formats keep full
float precision, which makes staged runs reproduce in-process results
bit-for-bit. Exit codes: 0 success, 1 unexpected failure, 2 missing input,
3 invalid input, 4 numerical failure. FACEKIT_THREADS caps internal thread
pools.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import landmarks as lmk
from .camera import Camera, Pose
from .errors import NumericalError, ValidationError
from .fitting import (
    FitConfig,
    FitResult,
    LandmarkSet,
    fit,
    landmark_error,
    load_fit_result,
    load_landmarks,
    save_fit_result,
    save_landmarks,
)
from .mesh import TriMesh, load_obj, save_obj
from .morphable import (
    Coefficients,
    load_model,
    make_synthetic_model,
    save_model,
    synthesize_shape,
    synthesize_texture,
    synthetic_eye_regions,
)
from .refine import SegmentationMask, build_anchors, laplacian_deform, load_mask, save_mask, snap_eye_landmarks
from .render import (
    SHLighting,
    format_report,
    landmark_error_report,
    photometric_error,
    rasterize,
)
from .rigging import (
    build_rig,
    evaluate_rig,
    export_rig_json,
    fit_eyeball,
    load_beta_sequence,
    load_rig,
    make_standard_templates,
    save_rig,
)
from .texture import compute_tex_coords, diffuse_background, export_textured_obj, load_image, save_image
from .camera import project

PPU_FRACTION = 0.35  # canonical pixels-per-unit: fraction of the short image side


def default_camera(width: int, height: int) -> Camera:
    return Camera(width, height, PPU_FRACTION * min(width, height))


def _camera_from_args(args) -> Camera:
    if getattr(args, "image", None):
        img = load_image(args.image)
        return default_camera(img.width, img.height)
    if getattr(args, "mask", None):
        mask = load_mask(args.mask)
        return default_camera(mask.width, mask.height)
    if getattr(args, "width", None) and getattr(args, "height", None):
        return default_camera(args.width, args.height)
    raise ValidationError("camera needs --image, --mask, or --width and --height")


def _random_pose(rng: np.random.Generator) -> Pose:
    angles = rng.uniform(-0.25, 0.25, size=3)
    cx, sx = np.cos(angles[0]), np.sin(angles[0])
    cy, sy = np.cos(angles[1]), np.sin(angles[1])
    cz, sz = np.cos(angles[2]), np.sin(angles[2])
    Rx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
    Ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    Rz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
    t = np.array([rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05), 0.0])
    return Pose(Rz @ Ry @ Rx, t, float(rng.uniform(0.9, 1.1)))


def cmd_gen_synthetic(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    model = make_synthetic_model(args.seed, args.verts, args.d_id, args.d_exp, args.d_tex)
    # quantize through the container first: the scene must be consistent with
    # the f32 model a consumer will load, not with the f64 one in memory
    save_model(model, out / "model.cfm")
    model = load_model(out / "model.cfm")
    rng = np.random.default_rng(args.seed + 1)
    coeff = Coefficients(
        rng.normal(0.0, 0.6, model.dims[0]),
        rng.normal(0.0, 0.4, model.dims[1]),
        rng.normal(0.0, 0.4, model.dims[2]),
    )
    pose = _random_pose(rng)
    cam = default_camera(args.size, args.size)

    shape = synthesize_shape(model, coeff)
    colors = synthesize_texture(model, coeff)
    mesh = shape.with_colors(colors)

    # Background: deterministic vertical gradient, clearly non-skin.
    bg = np.zeros((args.size, args.size, 3), dtype=np.uint8)
    ramp = np.linspace(30, 90, args.size).astype(np.uint8)
    bg[:, :, 0] = 20
    bg[:, :, 1] = ramp[:, None]
    bg[:, :, 2] = 110
    render = rasterize(mesh, pose, cam)
    pixels = np.where(render.coverage[:, :, None], render.color, bg)

    labels = np.zeros((args.size, args.size), dtype=np.uint8)
    labels[render.coverage] = lmk.MASK_SKIN
    left_region, right_region = synthetic_eye_regions(model)
    eye_face_class = np.zeros(model.num_faces, dtype=np.uint8)
    for region, ring in ((left_region, lmk.LEFT_EYE_LANDMARKS), (right_region, lmk.RIGHT_EYE_LANDMARKS)):
        in_region = np.zeros(model.num_vertices, dtype=bool)
        in_region[region] = True
        face_in = in_region[model.faces].all(axis=1)
        ring_px = project(shape.vertices[model.landmark_indices[list(ring)]], pose, cam)
        other = lmk.RIGHT_EYE_LANDMARKS if ring is lmk.LEFT_EYE_LANDMARKS else lmk.LEFT_EYE_LANDMARKS
        other_px = project(shape.vertices[model.landmark_indices[list(other)]], pose, cam)
        cls = lmk.MASK_LEFT_EYE if ring_px[:, 0].mean() < other_px[:, 0].mean() else lmk.MASK_RIGHT_EYE
        eye_face_class[face_in] = cls
    covered = render.face_index >= 0
    face_cls = eye_face_class[render.face_index[covered]]
    ys, xs = np.nonzero(covered)
    sel = face_cls > 0
    labels[ys[sel], xs[sel]] = face_cls[sel]

    lm_px = project(shape.vertices[model.landmark_indices], pose, cam)
    landmarks = LandmarkSet(lm_px)

    from .texture import RasterImage

    save_image(RasterImage(pixels), out / "image.png")
    save_mask(SegmentationMask(labels), out / "mask.png")
    save_landmarks(landmarks, out / "landmarks.txt")
    truth = FitResult(
        coefficients=coeff,
        pose=pose,
        landmark_error=0.0,
        history=(0.0,),
        converged=True,
    )
    save_fit_result(truth, out / "truth.txt")
    print(f"wrote model, image, mask, landmarks, truth to {out}")
    return 0


def cmd_fit(args) -> int:
    model = load_model(args.model)
    landmarks = load_landmarks(args.landmarks)
    cam = _camera_from_args(args)
    config = FitConfig(
        w_id=args.wid,
        w_exp=args.wexp,
        w_tex=args.wtex,
        max_outer_iters=args.max_iters,
        convergence_tol=args.tol,
        freeze_scale=args.freeze_scale,
    )
    result = fit(model, landmarks, cam, config)
    save_fit_result(result, args.out)
    if args.report:
        shape = synthesize_shape(model, result.coefficients)
        report = landmark_error_report(shape, model, result.pose, cam, landmarks)
        Path(args.report).write_text(format_report(report), encoding="utf-8")
    print(
        f"fit: landmark_error={result.landmark_error:.6g} px^2 "
        f"iters={len(result.history) - 1} converged={result.converged}"
    )
    return 0


def cmd_refine(args) -> int:
    model = load_model(args.model)
    result = load_fit_result(args.fit)
    landmarks = load_landmarks(args.landmarks)
    cam = _camera_from_args(args)
    if args.mask:
        landmarks = snap_eye_landmarks(landmarks, load_mask(args.mask))
    coarse = synthesize_shape(model, result.coefficients)
    anchors = build_anchors(landmarks, coarse, model, result.pose, cam, args.lam)
    refined = laplacian_deform(coarse, anchors)
    save_obj(refined, args.out)
    err = landmark_error(coarse, model, result.pose, cam, landmarks)
    proj = project(refined.vertices[model.landmark_indices], result.pose, cam)
    res = float(np.mean(landmarks.weights * np.sum((proj - landmarks.points) ** 2, axis=1)))
    print(f"refine: coarse landmark_error={err:.6g} -> refined {res:.6g} px^2")
    return 0


def cmd_texture(args) -> int:
    mesh = load_obj(args.mesh)
    result = load_fit_result(args.fit)
    image = load_image(args.image)
    mask = load_mask(args.mask)
    cam = default_camera(image.width, image.height)
    diffused = diffuse_background(image, mask)
    textured, clamped = compute_tex_coords(mesh, result.pose, cam, return_clamp_count=True)
    export_textured_obj(textured, diffused, args.out)
    print(f"texture: wrote {args.out} ({clamped} clamped uv coordinates)")
    return 0


def cmd_rig(args) -> int:
    model = load_model(args.model)
    target = load_obj(args.mesh) if args.mesh else model.mean_mesh()
    templates = make_standard_templates(model.mean_mesh(), model.landmark_indices)
    rig = build_rig(templates, target, area_weighted=args.area_weighted, threads=args.threads)
    eyeballs = ()
    if args.eyeballs:
        left, right = synthetic_eye_regions(model)
        eyeballs = tuple(
            fit_eyeball(target, region, args.eye_inset) for region in (left, right)
        )
    save_rig(rig, args.out, eyeballs)
    json_path = args.json or str(Path(args.out).with_suffix(".json"))
    export_rig_json(rig, json_path, eyeballs, texture_name=args.texture)
    print(f"rig: {len(rig.names)} expressions over {rig.neutral.num_vertices} vertices -> "
          f"{args.out}, {json_path}")
    return 0


def _parse_lighting(spec: str | None) -> SHLighting | None:
    if not spec:
        return None
    vals = np.array([float(v) for v in spec.replace(",", " ").split()])
    bands = int(round(np.sqrt(len(vals))))
    if bands * bands != len(vals):
        raise ValidationError("--light needs a square count of coefficients (1, 4 or 9)")
    return SHLighting(vals, bands)


def cmd_render(args) -> int:
    mesh = load_obj(args.mesh)
    cam = _camera_from_args(args)
    pose = load_fit_result(args.fit).pose if args.fit else Pose.identity()
    texture = load_image(args.texture) if args.texture else None
    lighting = _parse_lighting(args.light)
    render = rasterize(mesh, pose, cam, lighting, texture)
    save_image(render.image, args.out)
    print(f"render: {int(render.coverage.sum())} covered pixels -> {args.out}")
    return 0


def cmd_eval(args) -> int:
    model = load_model(args.model)
    result = load_fit_result(args.fit)
    landmarks = load_landmarks(args.landmarks)
    image = load_image(args.image)
    mask = load_mask(args.mask)
    cam = default_camera(image.width, image.height)
    if args.mesh:
        mesh = load_obj(args.mesh)
    else:
        mesh = synthesize_shape(model, result.coefficients)
    report = landmark_error_report(mesh, model, result.pose, cam, landmarks)
    lines = format_report(report)
    if args.mesh:
        texture = load_image(args.texture) if args.texture else None
        render = rasterize(mesh, result.pose, cam, texture=texture)
        photo = photometric_error(render, image, mask, metric=args.metric)
        lines += f"photometric {photo!r}\n"
    Path(args.out).write_text(lines, encoding="utf-8")
    sys.stdout.write(lines)
    return 0


def cmd_animate(args) -> int:
    rig, _ = load_rig(args.rig)
    betas = load_beta_sequence(args.betas, len(rig.names))
    out = Path(args.out)
    if args.frame is not None or args.time is not None:
        if args.time is not None:
            t = float(np.clip(args.time, 0.0, len(betas) - 1))
            lo = int(np.floor(t))
            hi = min(lo + 1, len(betas) - 1)
            frac = t - lo
            beta = (1.0 - frac) * betas[lo] + frac * betas[hi]
        else:
            if not 0 <= args.frame < len(betas):
                raise ValidationError(
                    f"--frame {args.frame} outside sequence of {len(betas)} frames"
                )
            beta = betas[args.frame]
        save_obj(evaluate_rig(rig, beta), out)
        print(f"animate: wrote {out}")
        return 0
    out.mkdir(parents=True, exist_ok=True)
    for i, beta in enumerate(betas):
        save_obj(evaluate_rig(rig, beta), out / f"frame_{i:04d}.obj")
    print(f"animate: wrote {len(betas)} frames to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="facekit", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-synthetic", help="generate a synthetic model + annotated image")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True, help="output directory")
    g.add_argument("--verts", type=int, default=2562, help="minimum vertex count")
    g.add_argument("--d-id", type=int, default=80, dest="d_id")
    g.add_argument("--d-exp", type=int, default=64, dest="d_exp")
    g.add_argument("--d-tex", type=int, default=9, dest="d_tex")
    g.add_argument("--size", type=int, default=256, help="image width and height")
    g.set_defaults(func=cmd_gen_synthetic)

    f = sub.add_parser("fit", help="coarse landmark fit")
    f.add_argument("--model", required=True)
    f.add_argument("--landmarks", required=True)
    f.add_argument("--image", help="source image (camera size reference)")
    f.add_argument("--width", type=int)
    f.add_argument("--height", type=int)
    f.add_argument("--wid", type=float, default=FitConfig.w_id)
    f.add_argument("--wexp", type=float, default=FitConfig.w_exp)
    f.add_argument("--wtex", type=float, default=FitConfig.w_tex)
    f.add_argument("--max-iters", type=int, default=FitConfig.max_outer_iters)
    f.add_argument("--tol", type=float, default=FitConfig.convergence_tol)
    f.add_argument("--freeze-scale", action="store_true")
    f.add_argument("--out", required=True, help="fit result file")
    f.add_argument("--report", help="optional landmark region report file")
    f.set_defaults(func=cmd_fit)

    r = sub.add_parser("refine", help="Laplacian refinement of the coarse fit")
    r.add_argument("--model", required=True)
    r.add_argument("--fit", required=True)
    r.add_argument("--landmarks", required=True)
    r.add_argument("--mask", help="segmentation mask (enables eye snapping)")
    r.add_argument("--image", help="source image (camera size reference)")
    r.add_argument("--width", type=int)
    r.add_argument("--height", type=int)
    r.add_argument("--lambda", type=float, default=10.0, dest="lam")
    r.add_argument("--out", required=True, help="refined OBJ")
    r.set_defaults(func=cmd_refine)

    t = sub.add_parser("texture", help="extract a diffused projection texture")
    t.add_argument("--mesh", required=True, help="refined OBJ")
    t.add_argument("--fit", required=True)
    t.add_argument("--image", required=True)
    t.add_argument("--mask", required=True)
    t.add_argument("--out", required=True, help="textured OBJ (MTL/PNG written alongside)")
    t.set_defaults(func=cmd_texture)

    rg = sub.add_parser("rig", help="build a blendshape rig by deformation transfer")
    rg.add_argument("--model", required=True)
    rg.add_argument("--mesh", help="target neutral OBJ (default: model mean)")
    rg.add_argument("--out", required=True, help="binary rig file")
    rg.add_argument("--json", help="JSON rig path (default: alongside --out)")
    rg.add_argument("--texture", help="texture filename recorded in the JSON")
    rg.add_argument("--eyeballs", action="store_true", help="fit eyeball spheres")
    rg.add_argument("--eye-inset", type=float, default=0.02, dest="eye_inset")
    rg.add_argument("--area-weighted", action="store_true", dest="area_weighted")
    rg.add_argument("--threads", type=int, default=None)
    rg.set_defaults(func=cmd_rig)

    rn = sub.add_parser("render", help="rasterize a mesh")
    rn.add_argument("--mesh", required=True)
    rn.add_argument("--texture")
    rn.add_argument("--fit", help="fit result providing the pose (default identity)")
    rn.add_argument("--image", help="camera size reference image")
    rn.add_argument("--width", type=int)
    rn.add_argument("--height", type=int)
    rn.add_argument("--light", help="SH coefficients, comma separated (1, 4 or 9 values)")
    rn.add_argument("--out", required=True)
    rn.set_defaults(func=cmd_render)

    ev = sub.add_parser("eval", help="landmark and photometric error report")
    ev.add_argument("--model", required=True)
    ev.add_argument("--fit", required=True)
    ev.add_argument("--landmarks", required=True)
    ev.add_argument("--image", required=True)
    ev.add_argument("--mask", required=True)
    ev.add_argument("--mesh", help="textured OBJ for the photometric term")
    ev.add_argument("--texture", help="texture image for --mesh")
    ev.add_argument("--metric", choices=("manhattan", "squared"), default="manhattan")
    ev.add_argument("--out", required=True)
    ev.set_defaults(func=cmd_eval)

    an = sub.add_parser("animate", help="evaluate a rig over a weight sequence")
    an.add_argument("--rig", required=True)
    an.add_argument("--betas", required=True, help="one line of weights per frame")
    an.add_argument("--frame", type=int, help="write a single frame")
    an.add_argument("--time", type=float, help="fractional frame (linear interpolation)")
    an.add_argument("--out", required=True, help="output directory, or OBJ for single frame")
    an.set_defaults(func=cmd_animate)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: missing input: {exc}", file=sys.stderr)
        return 2
    except (ValidationError, ValueError) as exc:
        print(f"error: invalid input: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return 4
    except Exception as exc:  # pragma: no cover - safety net
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
