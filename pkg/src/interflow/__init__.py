"""Frame interpolation toolkit: direct intermediate-flow estimation,
privileged-distillation training and a synthetic evaluation harness."""

__version__ = "0.1.0"

from .config import NetConfig, IFBlockConfig, IFNetConfig, RefineConfig, desk_config, large_config
from .ifnet import IFNet, IFBlock, FlowMaskState
from .refine import RefineNet, ContextExtractor, fuse, reconstruct
from .pipeline import (Model, InterpOptions, build_model, load_model, interpolate,
                       interpolate_multi, interpolate_representation,
                       panoramic_synthesize, scale_2r, tta_interpolate,
                       to_numpy, to_tensor)
from .train import TrainConfig, TrainResult, train, evaluate, lr_schedule
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint, export_inference
from .data import MotionSpec, Sample, SyntheticDataset, augment, gen_synthetic_sample
from .metrics import psnr, ssim, interpolation_error
from .viz import flow_to_color

__all__ = [name for name in dir() if not name.startswith("_")]
