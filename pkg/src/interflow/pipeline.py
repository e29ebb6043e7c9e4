"""User-facing interpolation paths.

Every function here is stateless over a loaded :class:`Model`; concurrent
calls are safe. Inputs are float tensors shaped (B, 3, H, W) in [0, 1];
``to_tensor`` / ``to_numpy`` convert from and to (H, W, C) arrays.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np
import torch

from .checkpoint import Checkpoint, load_checkpoint
from .config import NetConfig
from .errors import CheckpointError, ConfigurationError, ContractViolation, DimensionError
from .ifnet import IFNet, FlowMaskState, crop_to, pad_to_multiple
from .ops import backward_warp
from .refine import RefineNet, fuse, reconstruct


@dataclass
class Model:
    ifnet: IFNet
    refine: RefineNet
    config: NetConfig
    mode: str = "mid"  # "mid" or "arbitrary", from the training run

    def eval_(self) -> "Model":
        self.ifnet.eval()
        self.refine.eval()
        return self

    def param_arrays(self) -> dict[str, np.ndarray]:
        out = {}
        for prefix, mod in (("ifnet", self.ifnet), ("refine", self.refine)):
            for name, p in mod.state_dict().items():
                out[f"{prefix}.{name}"] = p.detach().cpu().numpy()
        return out


@dataclass
class InterpOptions:
    tta: bool = False
    scale_2r: bool = False
    refine: bool = True


@dataclass
class InterpResult:
    image: torch.Tensor
    fused: torch.Tensor
    delta: torch.Tensor | None
    state: FlowMaskState
    warped0: torch.Tensor
    warped1: torch.Tensor


def build_model(config: NetConfig, mode: str = "mid") -> Model:
    return Model(IFNet(config.ifnet), RefineNet(config.refine), config, mode)


def load_model(source) -> Model:
    """Build a model from a checkpoint path or an in-memory checkpoint."""
    ckpt = source if isinstance(source, Checkpoint) else load_checkpoint(source)
    model = build_model(ckpt.config, ckpt.extra.get("mode", "mid"))
    for prefix, mod in (("ifnet", model.ifnet), ("refine", model.refine)):
        want = mod.state_dict()
        state = {}
        for name, ref in want.items():
            full = f"{prefix}.{name}"
            if full not in ckpt.params:
                raise CheckpointError(f"checkpoint missing parameter {full}")
            arr = ckpt.params[full]
            if tuple(arr.shape) != tuple(ref.shape):
                raise CheckpointError(
                    f"parameter {full} has shape {arr.shape}, model expects {tuple(ref.shape)}")
            state[name] = torch.from_numpy(arr)
        mod.load_state_dict(state)
    return model.eval_()


def to_tensor(image: np.ndarray) -> torch.Tensor:
    if image.ndim == 2:
        image = image[..., None]
    chw = np.ascontiguousarray(image.transpose(2, 0, 1), dtype=np.float32)
    return torch.from_numpy(chw).unsqueeze(0)


def to_numpy(image: torch.Tensor) -> np.ndarray:
    return image.detach().squeeze(0).permute(1, 2, 0).cpu().numpy()


def _check_encoding(enc, like: torch.Tensor):
    if isinstance(enc, torch.Tensor) and enc.dim() == 4:
        if enc.shape[2:] != like.shape[2:] or enc.shape[1] != 1:
            raise DimensionError(
                f"temporal map {tuple(enc.shape)} does not fit frames {tuple(like.shape)}")
        if enc.min() < 0 or enc.max() > 1:
            raise ContractViolation("temporal map values must lie in [0, 1]")
    else:
        t = float(enc)
        if not 0.0 <= t <= 1.0:
            raise ContractViolation(f"timestep {t} outside [0, 1]")


def _scale_of(opts: InterpOptions) -> int | None:
    return 2 if opts.scale_2r else None


def interpolate_detailed(model: Model, i0: torch.Tensor, i1: torch.Tensor, enc,
                         opts: InterpOptions | None = None) -> InterpResult:
    """One synthesis pass, returning the intermediate quantities as well."""
    opts = opts or InterpOptions()
    _check_encoding(enc, i0)
    if i0.shape != i1.shape:
        raise DimensionError(f"frame shapes differ: {tuple(i0.shape)} vs {tuple(i1.shape)}")
    h, w = i0.shape[2], i0.shape[3]
    scale = _scale_of(opts)

    i0p, i1p = pad_to_multiple(i0), pad_to_multiple(i1)
    encp = pad_to_multiple(enc) if isinstance(enc, torch.Tensor) and enc.dim() == 4 else enc
    state = model.ifnet(i0p, i1p, encp, internal_scale=scale)
    warped0 = backward_warp(i0p, state.flow[:, 0:2])
    warped1 = backward_warp(i1p, state.flow[:, 2:4])
    mask = state.mask
    fused = fuse(warped0, warped1, mask)
    delta = None
    if opts.refine:
        delta = model.refine(i0p, i1p, warped0, warped1, state.flow, mask,
                             internal_scale=scale)
        out = reconstruct(fused, delta)
        delta = crop_to(delta, h, w)
    else:
        out = fused

    cropped_state = FlowMaskState(
        crop_to(state.flow, h, w), crop_to(state.mask_logits, h, w),
        [(crop_to(f, h, w), crop_to(m, h, w)) for f, m in state.history])
    return InterpResult(crop_to(out, h, w), crop_to(fused, h, w), delta,
                        cropped_state, crop_to(warped0, h, w), crop_to(warped1, h, w))


def interpolate(model: Model, i0: torch.Tensor, i1: torch.Tensor, enc,
                opts: InterpOptions | None = None) -> torch.Tensor:
    """Synthesize the frame at the requested timestep(s)."""
    opts = opts or InterpOptions()
    if opts.tta:
        return tta_interpolate(model, i0, i1, enc, opts)
    return interpolate_detailed(model, i0, i1, enc, opts).image


def tta_interpolate(model: Model, i0: torch.Tensor, i1: torch.Tensor, enc,
                    opts: InterpOptions | None = None) -> torch.Tensor:
    """Average the plain result with the de-flipped result of flipped inputs."""
    opts = replace(opts or InterpOptions(), tta=False)

    def flip(x):
        return torch.flip(x, dims=(2, 3))

    base = interpolate_detailed(model, i0, i1, enc, opts).image
    enc2 = flip(enc) if isinstance(enc, torch.Tensor) and enc.dim() == 4 else enc
    second = interpolate_detailed(model, flip(i0), flip(i1), enc2, opts).image
    return 0.5 * (base + flip(second))


def interpolate_multi(model: Model, i0: torch.Tensor, i1: torch.Tensor, factor: int,
                      mode: str = "recursive", opts: InterpOptions | None = None) -> list[torch.Tensor]:
    """Produce ``factor - 1`` evenly spaced frames between the inputs.

    Recursive mode bisects with t=0.5 calls; direct mode evaluates the model
    once per grid point t = i/factor, which needs an arbitrary-timestep
    checkpoint to be meaningful.
    """
    if factor < 2 or factor & (factor - 1):
        raise ConfigurationError(f"factor must be a power of two >= 2, got {factor}")
    if mode == "recursive":
        frames = [i0, i1]
        levels = factor.bit_length() - 1
        for _ in range(levels):
            nxt = [frames[0]]
            for a, b in zip(frames, frames[1:]):
                nxt.append(interpolate(model, a, b, 0.5, opts))
                nxt.append(b)
            frames = nxt
        return frames[1:-1]
    if mode == "direct":
        if model.mode != "arbitrary":
            warnings.warn("direct multi-frame mode on a mid-timestep checkpoint; "
                          "quality degrades away from t=0.5")
        return [interpolate(model, i0, i1, i / factor, opts) for i in range(1, factor)]
    raise ConfigurationError(f"unknown multi-frame mode {mode!r}")


def scale_2r(config: NetConfig) -> NetConfig:
    """Double the internal working resolution of both networks.

    The first downsampling step of each network is effectively removed and a
    compensating downsample applied before the outputs, so parameter shapes
    and external sizes are untouched.
    """
    cfg = NetConfig.from_dict(config.to_dict())
    cfg.ifnet.internal_scale = config.ifnet.internal_scale * 2
    cfg.refine.internal_scale = config.refine.internal_scale * 2
    return cfg


def panoramic_synthesize(model: Model, i0: torch.Tensor, i1: torch.Tensor,
                         t_map: torch.Tensor, opts: InterpOptions | None = None) -> torch.Tensor:
    """Synthesize with a per-pixel timestep map (e.g. a column gradient)."""
    if not (isinstance(t_map, torch.Tensor) and t_map.dim() == 4):
        raise DimensionError("t_map must be a (B, 1, H, W) tensor")
    if model.mode != "arbitrary":
        warnings.warn("per-pixel timestep maps work best with an arbitrary-timestep checkpoint")
    return interpolate(model, i0, i1, t_map, opts)


def interpolate_representation(model: Model, i0: torch.Tensor, i1: torch.Tensor,
                               r0: torch.Tensor, r1: torch.Tensor, enc,
                               opts: InterpOptions | None = None) -> torch.Tensor:
    """Blend any aligned per-frame representation (depth, segmentation, ...)
    with flows and mask estimated from the RGB pair. No refinement residual
    is applied; the output is the raw fused field."""
    opts = replace(opts or InterpOptions(), refine=False)
    if r0.shape != r1.shape:
        raise DimensionError(f"representation shapes differ: {tuple(r0.shape)} vs {tuple(r1.shape)}")
    if r0.shape[2:] != i0.shape[2:] or r0.shape[0] != i0.shape[0]:
        raise DimensionError(
            f"representation {tuple(r0.shape)} not aligned with frames {tuple(i0.shape)}")
    res = interpolate_detailed(model, i0, i1, enc, opts)
    h, w = r0.shape[2], r0.shape[3]
    r0p, r1p = pad_to_multiple(r0), pad_to_multiple(r1)
    flow = pad_to_multiple(res.state.flow)
    mask = pad_to_multiple(res.state.mask_logits).sigmoid()
    out = fuse(backward_warp(r0p, flow[:, 0:2]), backward_warp(r1p, flow[:, 2:4]), mask)
    return crop_to(out, h, w)
