"""Single-image face reconstruction and blendshape rigging toolkit.

The pipeline runs in stages, each usable on its own:

1. ``morphable`` / ``fitting``: linear statistical face model and a coarse
   landmark fit alternating pose and coefficient solves.
2. ``refine``: segmentation-guided landmark snapping and Laplacian surface
   deformation that pulls the coarse mesh onto the annotations.
3. ``texture`` / ``render``: projection texturing with background diffusion,
   plus a small orthographic rasterizer with spherical harmonic shading.
4. ``rigging``: deformation transfer of a template expression set onto the
   reconstructed neutral, producing a portable blendshape rig.
"""

from .camera import Camera, Pose, estimate_pose, project, to_camera_space
from .cli import default_camera
from .errors import (
    DegenerateConfiguration,
    DegenerateRegion,
    DegenerateTriangle,
    DimensionMismatch,
    EmptyFaceMask,
    EmptyRegion,
    FacekitError,
    IsolatedVertex,
    LengthMismatch,
    MissingTexCoords,
    NonTriangleFace,
    NonUnitNormal,
    NumericalError,
    ParseError,
    SingularSystem,
    TooFewPoints,
    TopologyMismatch,
    ValidationError,
)
from .fitting import (
    FitConfig,
    FitResult,
    LandmarkSet,
    fit,
    landmark_error,
    load_fit_result,
    load_landmarks,
    regularization_energy,
    save_fit_result,
    save_landmarks,
    template_refine,
)
from .landmarks import (
    LANDMARK_REGIONS,
    MASK_BACKGROUND,
    MASK_LEFT_EYE,
    MASK_OTHER_FACE,
    MASK_RIGHT_EYE,
    MASK_SKIN,
    NUM_LANDMARKS,
    region_of,
)
from .mesh import (
    AdjacencyMap,
    TriMesh,
    build_adjacency,
    icosphere,
    laplacian_coords,
    load_obj,
    save_obj,
    vertex_normals,
)
from .morphable import (
    Coefficients,
    MorphableModel,
    check_topology,
    landmark_positions,
    load_model,
    make_synthetic_model,
    save_model,
    synthesize_shape,
    synthesize_texture,
    synthetic_eye_regions,
)
from .refine import (
    AnchorSet,
    SegmentationMask,
    build_anchors,
    laplacian_deform,
    load_mask,
    save_mask,
    snap_eye_landmarks,
)
from .render import (
    RenderOutput,
    SHLighting,
    format_report,
    landmark_error_report,
    photometric_error,
    rasterize,
    sh_basis,
    shade,
)
from .rigging import (
    BlendshapeRig,
    ExpressionTemplateSet,
    EyeballSphere,
    STANDARD_EXPRESSION_NAMES,
    build_rig,
    deformation_gradients,
    evaluate_rig,
    export_rig_json,
    fit_eyeball,
    fnv1a32,
    load_beta_sequence,
    load_rig,
    make_standard_templates,
    save_beta_sequence,
    save_rig,
    transfer_expression,
    triangle_frame,
)
from .texture import (
    RasterImage,
    compute_tex_coords,
    diffuse_background,
    export_textured_obj,
    load_image,
    save_image,
)

__version__ = "0.1.0"

__all__ = [
    "AdjacencyMap",
    "AnchorSet",
    "BlendshapeRig",
    "Camera",
    "Coefficients",
    "DegenerateConfiguration",
    "DegenerateRegion",
    "DegenerateTriangle",
    "DimensionMismatch",
    "EmptyFaceMask",
    "EmptyRegion",
    "ExpressionTemplateSet",
    "EyeballSphere",
    "FacekitError",
    "FitConfig",
    "FitResult",
    "IsolatedVertex",
    "LANDMARK_REGIONS",
    "LandmarkSet",
    "LengthMismatch",
    "MASK_BACKGROUND",
    "MASK_LEFT_EYE",
    "MASK_OTHER_FACE",
    "MASK_RIGHT_EYE",
    "MASK_SKIN",
    "MissingTexCoords",
    "MorphableModel",
    "NUM_LANDMARKS",
    "NonTriangleFace",
    "NonUnitNormal",
    "NumericalError",
    "ParseError",
    "Pose",
    "RasterImage",
    "RenderOutput",
    "SHLighting",
    "STANDARD_EXPRESSION_NAMES",
    "SegmentationMask",
    "SingularSystem",
    "TooFewPoints",
    "TopologyMismatch",
    "TriMesh",
    "ValidationError",
    "build_adjacency",
    "build_anchors",
    "build_rig",
    "check_topology",
    "compute_tex_coords",
    "default_camera",
    "deformation_gradients",
    "diffuse_background",
    "estimate_pose",
    "evaluate_rig",
    "export_rig_json",
    "export_textured_obj",
    "fit",
    "fit_eyeball",
    "fnv1a32",
    "format_report",
    "icosphere",
    "landmark_error",
    "landmark_error_report",
    "landmark_positions",
    "laplacian_coords",
    "laplacian_deform",
    "load_beta_sequence",
    "load_fit_result",
    "load_image",
    "load_landmarks",
    "load_mask",
    "load_model",
    "load_obj",
    "load_rig",
    "make_standard_templates",
    "make_synthetic_model",
    "photometric_error",
    "project",
    "rasterize",
    "region_of",
    "regularization_energy",
    "save_beta_sequence",
    "save_fit_result",
    "save_image",
    "save_landmarks",
    "save_mask",
    "save_model",
    "save_obj",
    "save_rig",
    "sh_basis",
    "shade",
    "snap_eye_landmarks",
    "synthesize_shape",
    "synthesize_texture",
    "synthetic_eye_regions",
    "template_refine",
    "to_camera_space",
    "transfer_expression",
    "triangle_frame",
    "vertex_normals",
]
