"""Lightweight multi-scale fusion network for image deblurring.

A small numpy-only stack: a rank-4 autodiff core, the network blocks built
on it, synthetic blur data, an Adam trainer, and image quality metrics.
"""

from .tensor import (
    Tensor, Tape, backward,
    conv2d, pixel_shuffle, pixel_unshuffle,
    softmax, matmul, matrix_transpose, reshape, concat, narrow,
    add, hadamard, relu, leaky_relu, sigmoid, scale,
    reduce_sum, mse_loss,
)
from .gradcheck import GradcheckReport, gradcheck
from .blocks import (
    Module, ModuleList, ConvLayer, ResBlock, DownBlock, UpsampleBlock, Srb, Rfdb,
)
from .attention import Alfm, Acfm, DEFAULT_ATTENTION_BUDGET
from .model import ModelConfig, LmfnModel, build_ablation
from .blur import BlurSpec, make_blur_kernel, synthesize_pair, spec_for_sample, synthetic_sharp_patch
from .optim import Adam, lr_schedule, BASE_LR, DECAY_EVERY
from .checkpoint import save_checkpoint, load_checkpoint, restore_model, FORMAT_VERSION
from .train import train, TrainResult
from .metrics import psnr, ssim, load_png, save_png, report, PSNR_CAP

__version__ = "0.1.0"

__all__ = [
    "Tensor", "Tape", "backward",
    "conv2d", "pixel_shuffle", "pixel_unshuffle",
    "softmax", "matmul", "matrix_transpose", "reshape", "concat", "narrow",
    "add", "hadamard", "relu", "leaky_relu", "sigmoid", "scale",
    "reduce_sum", "mse_loss",
    "GradcheckReport", "gradcheck",
    "Module", "ModuleList", "ConvLayer", "ResBlock", "DownBlock",
    "UpsampleBlock", "Srb", "Rfdb",
    "Alfm", "Acfm", "DEFAULT_ATTENTION_BUDGET",
    "ModelConfig", "LmfnModel", "build_ablation",
    "BlurSpec", "make_blur_kernel", "synthesize_pair", "spec_for_sample",
    "synthetic_sharp_patch",
    "Adam", "lr_schedule", "BASE_LR", "DECAY_EVERY",
    "save_checkpoint", "load_checkpoint", "restore_model", "FORMAT_VERSION",
    "train", "TrainResult",
    "psnr", "ssim", "load_png", "save_png", "report", "PSNR_CAP",
    "__version__",
]
