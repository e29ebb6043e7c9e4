"""Coarse-to-fine estimation of the two backward flows and the fusion mask.

The network is a stack of residual refinement blocks. Starting from zero
flow and zero mask logits, each block warps the input frames with the
current flow, looks at the result together with the temporal encoding, and
emits a flow / mask-logit residual computed at a reduced working resolution.
The fusion mask lives in logit space internally so that arbitrary residual
updates keep sigmoid(mask) inside [0, 1].

Flow tensors are (B, 4, H, W): channels 0..1 displace toward the earlier
frame, channels 2..3 toward the later one.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
import torch.nn.functional as F
from torch import nn

from .config import IFBlockConfig, IFNetConfig
from .errors import ConfigurationError, DimensionError, NumericalError, UsageError
from .ops import backward_warp, resize_to

PAD_MULTIPLE = 16  # spatial sizes are padded up to this before processing


@dataclass
class FlowMaskState:
    """Iterated flow/mask estimate plus the per-block prediction history."""

    flow: torch.Tensor         # (B, 4, H, W)
    mask_logits: torch.Tensor  # (B, 1, H, W)
    history: list[tuple[torch.Tensor, torch.Tensor]] = field(default_factory=list)

    @property
    def mask(self) -> torch.Tensor:
        return torch.sigmoid(self.mask_logits)

    def history_flows(self) -> list[torch.Tensor]:
        return [flow for flow, _ in self.history]


def pad_to_multiple(x: torch.Tensor, multiple: int = PAD_MULTIPLE) -> torch.Tensor:
    h, w = x.shape[2], x.shape[3]
    ph = (-h) % multiple
    pw = (-w) % multiple
    if ph == 0 and pw == 0:
        return x
    return F.pad(x, (0, pw, 0, ph), mode="replicate")


def crop_to(x: torch.Tensor, h: int, w: int) -> torch.Tensor:
    if x.shape[2] == h and x.shape[3] == w:
        return x
    return x[:, :, :h, :w]


class IFBlock(nn.Module):
    """One residual refinement unit working at 1/K of the input resolution."""

    def __init__(self, cfg: IFBlockConfig, in_channels: int = 18):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        if cfg.privileged:
            in_channels += 3
        self.in_channels = in_channels
        layers = [nn.Conv2d(in_channels, cfg.width, 3, 1, 1), nn.PReLU(cfg.width)]
        for _ in range(cfg.conv_depth):
            layers += [nn.Conv2d(cfg.width, cfg.width, 3, 1, 1), nn.PReLU(cfg.width)]
        self.stack = nn.Sequential(*layers)
        for m in self.stack:
            if isinstance(m, nn.Conv2d):
                # keep activation variance roughly constant through the stack
                nn.init.kaiming_normal_(m.weight, a=0.25, nonlinearity="leaky_relu")
                nn.init.zeros_(m.bias)
        # 4 flow-residual channels + 1 mask-logit channel, zero-initialized so a
        # fresh block is an exact no-op
        self.head = nn.ConvTranspose2d(cfg.width, 5, 4, 2, 1)
        nn.init.zeros_(self.head.weight)
        nn.init.zeros_(self.head.bias)

    def forward(self, flow, mask_logits, i0, i1, t_map, gt=None, k_scale: float = 1.0,
                warped=None):
        """Return (flow residual, mask-logit residual) at the input resolution.

        ``k_scale`` divides the configured working-resolution factor; 2 means
        the block processes features at twice its normal resolution. When the
        caller already warped the frames with this state's flow it can pass
        them as ``warped`` to skip the duplicate work.
        """
        if self.cfg.privileged and gt is None:
            raise ConfigurationError("privileged block requires the target frame")
        if not self.cfg.privileged and gt is not None:
            raise ConfigurationError("target frame passed to a non-privileged block")

        h, w = i0.shape[2], i0.shape[3]
        if warped is None:
            # one batched gather covers both warp directions
            both = backward_warp(torch.cat([i0, i1], dim=0),
                                 torch.cat([flow[:, 0:2], flow[:, 2:4]], dim=0))
            warped0, warped1 = both.chunk(2, dim=0)
        else:
            warped0, warped1 = warped
        parts = [i0, i1, warped0, warped1, flow, torch.sigmoid(mask_logits), t_map]
        if gt is not None:
            parts.append(gt)
        x = torch.cat(parts, dim=1)

        k = self.cfg.resolution / k_scale
        if k > 1:
            # antialiased reduction: plain 2-tap subsampling would alias the
            # finer texture bands the matching features rely on
            x = F.interpolate(x, size=(int(round(h / k)), int(round(w / k))),
                              mode="bilinear", align_corners=False, antialias=True)
        elif k < 1:
            x = resize_to(x, (int(round(h / k)), int(round(w / k))))
        x = self.stack(x.contiguous(memory_format=torch.channels_last))
        out = self.head(x)
        out = resize_to(out.contiguous(), (h, w))
        return out[:, 0:4] * k, out[:, 4:5]


@dataclass
class TeacherResult:
    flow: torch.Tensor
    mask_logits: torch.Tensor
    image: torch.Tensor

    @property
    def mask(self) -> torch.Tensor:
        return torch.sigmoid(self.mask_logits)


class IFNet(nn.Module):
    """Stacked refinement blocks plus an optional privileged teacher block."""

    def __init__(self, cfg: IFNetConfig):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        self.blocks = nn.ModuleList([IFBlock(b) for b in cfg.blocks])
        self.teacher = IFBlock(cfg.teacher) if cfg.teacher is not None else None

    @property
    def has_teacher(self) -> bool:
        return self.teacher is not None

    def _check_inputs(self, i0, i1):
        if i0.shape != i1.shape:
            raise DimensionError(f"frame shapes differ: {tuple(i0.shape)} vs {tuple(i1.shape)}")
        if not (torch.isfinite(i0).all() and torch.isfinite(i1).all()):
            raise NumericalError("non-finite values in input frames")

    def _t_map(self, t, like: torch.Tensor) -> torch.Tensor:
        if isinstance(t, torch.Tensor) and t.dim() == 4:
            if t.shape[2:] != like.shape[2:]:
                raise DimensionError(
                    f"temporal map {tuple(t.shape)} does not match frames {tuple(like.shape)}")
            return t.to(like.dtype).expand(like.shape[0], 1, *like.shape[2:])
        return like.new_full((like.shape[0], 1, like.shape[2], like.shape[3]), float(t))

    def forward(self, i0: torch.Tensor, i1: torch.Tensor, t,
                internal_scale: int | None = None) -> FlowMaskState:
        """Estimate flows and mask for frames of any size (padded internally)."""
        self._check_inputs(i0, i1)
        h, w = i0.shape[2], i0.shape[3]
        t_map = self._t_map(t, i0)
        i0p, i1p, tp = pad_to_multiple(i0), pad_to_multiple(i1), pad_to_multiple(t_map)

        state = self._run_blocks(i0p, i1p, tp, internal_scale)
        flow = crop_to(state.flow, h, w)
        mask = crop_to(state.mask_logits, h, w)
        history = [(crop_to(f, h, w), crop_to(m, h, w)) for f, m in state.history]
        return FlowMaskState(flow, mask, history)

    def _run_blocks(self, i0p, i1p, tp, internal_scale: int | None = None) -> FlowMaskState:
        scale = internal_scale or self.cfg.internal_scale
        b, _, hp, wp = i0p.shape
        flow = i0p.new_zeros((b, 4, hp, wp))
        mask = i0p.new_zeros((b, 1, hp, wp))
        history = []
        for i, block in enumerate(self.blocks):
            # warping with the initial all-zero flow is the identity by contract
            warped = (i0p, i1p) if i == 0 else None
            fr, mr = block(flow, mask, i0p, i1p, tp, k_scale=scale, warped=warped)
            flow = flow + fr
            mask = mask + mr
            history.append((flow, mask))
        return FlowMaskState(flow, mask, history)

    def teacher_forward(self, state: FlowMaskState, i0, i1, t, gt,
                        internal_scale: int | None = None, warped=None) -> TeacherResult:
        """Refine a student estimate with access to the target frame.

        Training only; models restored from an inference checkpoint have no
        teacher block and refuse this call. ``warped`` may carry the frames
        already warped with the student flow (padding must not apply).
        """
        if self.teacher is None:
            raise UsageError("no teacher block present (inference checkpoint?)")
        if gt.shape != i0.shape:
            raise DimensionError(f"target frame {tuple(gt.shape)} does not match inputs {tuple(i0.shape)}")
        h, w = i0.shape[2], i0.shape[3]
        t_map = self._t_map(t, i0)
        i0p, i1p, tp, gtp = (pad_to_multiple(x) for x in (i0, i1, t_map, gt))
        if warped is not None and i0p.shape == i0.shape:
            warped_p = warped
        else:
            warped_p = None
        flowp = pad_to_multiple(state.flow)
        maskp = pad_to_multiple(state.mask_logits)

        fr, mr = self.teacher(flowp, maskp, i0p, i1p, tp, gt=gtp,
                              k_scale=internal_scale or self.cfg.internal_scale,
                              warped=warped_p)
        flow_tea = crop_to(flowp + fr, h, w)
        mask_tea = crop_to(maskp + mr, h, w)

        both = backward_warp(torch.cat([i0, i1], dim=0),
                             torch.cat([flow_tea[:, 0:2], flow_tea[:, 2:4]], dim=0))
        w0, w1 = both.chunk(2, dim=0)
        m = torch.sigmoid(mask_tea)
        image = m * w0 + (1 - m) * w1
        return TeacherResult(flow_tea, mask_tea, image)
