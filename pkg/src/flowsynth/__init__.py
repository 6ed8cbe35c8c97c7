"""flowsynth: optical-flow dataset synthesis from single unpaired images.

Turn any directory of images into pairs of frames with exact, dense
ground-truth optical flow by warping, displacing, and occluding groups of
superpixels, plus the evaluation utilities (EPE, F1-all, photometric
audit) to validate the result.
"""

__version__ = "0.1.0"

from .augment import AugmentConfig, augment, color_jitter, crop, erase, flip, scale
from .errors import (
    DegenerateGeometryError,
    DegenerateLayerError,
    EmptyCorpusError,
    EmptyEvaluationError,
    FlowEncodeError,
    FlowFormatError,
    FlowSynthError,
    InvalidDimensionError,
    InvalidParameterError,
)
from .flowio import (
    ImageCorpus,
    colorize_flow,
    ingest_images,
    read_flo,
    read_kitti_png,
    read_manifest,
    write_flo,
    write_kitti_png,
    write_sample,
)
from .imaging import (
    alpha_composite,
    bilinear_sample,
    make_identity_grid,
    sample_mask,
)
from .metrics import EvalReport, PhotometricAudit, epe, evaluate_pairs, f1_all, photometric_audit
from .pipeline import RunConfig, run_bench, run_generation
from .segmentation import (
    RegionAdjacency,
    SegmentationMap,
    SegmentationStack,
    build_adjacency,
    cached_segment_stack,
    grow_region,
    pick_occluder,
    segment_stack,
    slic_segment,
)
from .synthesis import (
    BackgroundSpec,
    LayerSpec,
    SceneSample,
    SynthesisConfig,
    composite_scene,
    draw_scene_params,
    generate_sample,
    inpaint_with_auxiliary,
    realize_scene,
    synthesize_background,
    synthesize_foreground,
)
from .tps import (
    ControlGrid,
    TpsWarp,
    displacement_field,
    evaluate_warp,
    fit_tps,
    identity_warp,
    sample_control_grid,
)
