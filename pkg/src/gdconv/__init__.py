"""Space-time deformable convolution for video frame interpolation.

An output frame is synthesized as a weighted, modulated sum over freely
placed space-time sampling points; each point blends bilinear reads of the
source frames through a pluggable temporal interpolation kernel. Exact
analytic gradients are provided for every adaptive parameter field and for
the source frames, together with constructors that reduce the operator to
fixed-grid convolution, per-frame adaptive offsets, or optical-flow
warping.
"""

from .conv import (
    Freedom,
    GDConvParams,
    GradBundle,
    freedom_frozen_fields,
    gdconv_backward,
    gdconv_forward,
    load_params,
    make_adacof,
    make_conventional,
    make_flow,
    make_freedom,
    params_init,
    params_new,
    save_params,
)
from .core import (
    Field,
    Frame,
    FrameStack,
    constant_field,
    field_from_array,
    frame_from_array,
    frame_from_bytes,
    frame_to_bytes,
    read_field,
    read_png,
    read_ppm,
    stack_new,
    substack,
    write_field,
    write_png,
    write_ppm,
)
from .interp import (
    InterpKind,
    SupportSet,
    interp_eval,
    interp_partials,
    parse_kind,
    support_set,
)
from .metrics import SsimCfg, interpolation_error, psnr, ssim
from .sampler import SamplePos, bilinear_partials, bilinear_sample

__version__ = "0.1.0"

__all__ = [
    "Field",
    "Frame",
    "FrameStack",
    "Freedom",
    "GDConvParams",
    "GradBundle",
    "InterpKind",
    "SamplePos",
    "SsimCfg",
    "SupportSet",
    "bilinear_partials",
    "bilinear_sample",
    "constant_field",
    "field_from_array",
    "frame_from_array",
    "frame_from_bytes",
    "frame_to_bytes",
    "freedom_frozen_fields",
    "gdconv_backward",
    "gdconv_forward",
    "interp_eval",
    "interp_partials",
    "interpolation_error",
    "load_params",
    "make_adacof",
    "make_conventional",
    "make_flow",
    "make_freedom",
    "params_init",
    "params_new",
    "parse_kind",
    "psnr",
    "read_field",
    "read_png",
    "read_ppm",
    "save_params",
    "ssim",
    "stack_new",
    "substack",
    "support_set",
    "write_field",
    "write_png",
    "write_ppm",
]
