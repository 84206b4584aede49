"""Geometry, warping and loss primitives for optical flow on 360-degree video.

Flow convention (Middlebury): ``u`` is horizontal and positive to the
right, ``v`` is vertical and positive downward, both in pixels of the
raster they belong to.
"""

from .augment import (
    CorrectionProfile,
    SphericalAugmenter,
    augment_flow,
    augment_image,
    augment_triple,
    correct_flow,
    correction_profile,
)
from .metrics import MetricReport, epe, latitude_band_report, wrapped_epe
from .raster import (
    EdgePolicy,
    bilinear_sample,
    flow_to_color,
    read_flo,
    read_image,
    resize_nearest,
    write_flo,
    write_image,
)
from .sphconv import (
    KernelTransformer,
    ProjectionMatrixSet,
    RowGroupPlan,
    apply_projection,
    conv2d,
    fit_transform,
    interleaved_conv,
    layer_l2_loss,
    rowgroup_loss,
    rowgroup_partition,
)
from .sphere import (
    SphereRotation,
    equirect_map,
    forward_map,
    project_omega,
    rotate_equirect,
    rotation_flow,
    synthetic_texture,
)
from .warp360 import (
    backward_warp,
    brightness_error,
    flow_to_degrees,
    motion_mask,
    occlusion_masks,
    photometric_loss,
    wrap_target_grid,
)

__version__ = "0.1.0"
