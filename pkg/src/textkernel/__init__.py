"""Context-enhanced text-kernel segmentation and contour-guided expansion."""

__version__ = "0.1.0"

from .expand import (
    Detection,
    DetectionResult,
    PostConfig,
    boundary_guided_expand,
    fixed_offset_expand,
    pixel_aggregation_expand,
)
from .geometry import (
    LabeledMask,
    Polygon,
    connected_components,
    extract_contour,
    mask_iou,
    offset_polygon,
    rasterize,
)
from .labels import LabelBundle, Scene, build_labels, distance_label, kernel_label, region_label
from .numerics import (
    BatchNormParams,
    ConvParams,
    LossWeights,
    combined_loss,
    conv_forward,
    dice_loss,
    distance_ratio_loss,
    enhancement_loss,
    matmul,
    ohem_select,
    sigmoid,
    softmax_over_k,
    total_loss,
)
from .scenes import SceneConfig, gen_scene

__all__ = [name for name in dir() if not name.startswith("_")]
