"""Small numpy autodiff: tensors, the layers the policy needs, ADAM, gradient checking."""
from . import tensor as F
from .gradcheck import GradCheckReport, grad_check, rel_error
from .layers import BatchNorm, Conv2d, LayerNorm, Linear, Module, orthogonal
from .optim import AdamState, adam_step, clip_by_global_norm, global_norm
from .tensor import ShapeError, Tensor, as_tensor, conv_output_size, record_kinks

__all__ = [
    "F", "GradCheckReport", "grad_check", "rel_error", "BatchNorm", "Conv2d", "LayerNorm", "Linear", "Module",
    "orthogonal", "AdamState", "adam_step", "clip_by_global_norm", "global_norm", "ShapeError", "Tensor",
    "as_tensor", "conv_output_size", "record_kinks",
]
