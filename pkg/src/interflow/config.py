"""Architecture configuration containers and their (de)serialization."""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

from .errors import ConfigurationError


@dataclass
class IFBlockConfig:
    """One refinement block.

    ``resolution`` is the factor K: the block's conv stack runs on input
    downsampled to 1/K. ``privileged`` blocks additionally consume the target
    frame and exist only during training.
    """

    resolution: int
    width: int
    conv_depth: int
    privileged: bool = False

    def validate(self):
        if self.resolution < 1:
            raise ConfigurationError(f"resolution must be >= 1, got {self.resolution}")
        if self.width < 8:
            raise ConfigurationError(f"width must be >= 8, got {self.width}")
        if self.conv_depth < 2:
            raise ConfigurationError(f"conv_depth must be >= 2, got {self.conv_depth}")


@dataclass
class IFNetConfig:
    blocks: list[IFBlockConfig]
    teacher: IFBlockConfig | None = None
    internal_scale: int = 1  # 2 doubles every block's working resolution

    def validate(self):
        if not self.blocks:
            raise ConfigurationError("at least one flow block required")
        for b in self.blocks:
            b.validate()
            if b.privileged:
                raise ConfigurationError("student blocks cannot be privileged")
        res = [b.resolution for b in self.blocks]
        if any(a < b for a, b in zip(res, res[1:])):
            raise ConfigurationError(f"block resolutions must be non-increasing, got {res}")
        if res[-1] != 1:
            raise ConfigurationError(f"final block must run at full resolution, got K={res[-1]}")
        if self.teacher is not None:
            self.teacher.validate()
            if not self.teacher.privileged:
                raise ConfigurationError("teacher block must be privileged")


@dataclass
class RefineConfig:
    context_width: int = 8   # first context level; doubles per level
    encoder_width: int = 16  # first encoder level; doubles per level
    internal_scale: int = 1


@dataclass
class NetConfig:
    ifnet: IFNetConfig = field(default_factory=lambda: desk_config().ifnet)
    refine: RefineConfig = field(default_factory=RefineConfig)

    def validate(self):
        self.ifnet.validate()

    def to_dict(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_dict(d: dict) -> "NetConfig":
        ifd = d["ifnet"]
        blocks = [IFBlockConfig(**b) for b in ifd["blocks"]]
        teacher = IFBlockConfig(**ifd["teacher"]) if ifd.get("teacher") else None
        ifnet = IFNetConfig(blocks=blocks, teacher=teacher,
                            internal_scale=ifd.get("internal_scale", 1))
        refine = RefineConfig(**d["refine"])
        return NetConfig(ifnet=ifnet, refine=refine)


def desk_config() -> NetConfig:
    """Small model sized so a full synthetic training run finishes in minutes
    on a single CPU core. Block width shrinks as working resolution grows;
    the full-resolution blocks are deliberately thin because the coarse
    blocks carry most of the motion estimate."""
    return NetConfig(
        ifnet=IFNetConfig(
            blocks=[
                IFBlockConfig(resolution=4, width=32, conv_depth=3),
                IFBlockConfig(resolution=2, width=16, conv_depth=2),
                IFBlockConfig(resolution=1, width=8, conv_depth=2),
            ],
            teacher=IFBlockConfig(resolution=1, width=8, conv_depth=2, privileged=True),
        ),
        refine=RefineConfig(context_width=4, encoder_width=8),
    )


def large_config() -> NetConfig:
    """Wider stack for GPU-class hardware; same topology."""
    return NetConfig(
        ifnet=IFNetConfig(
            blocks=[
                IFBlockConfig(resolution=4, width=96, conv_depth=6),
                IFBlockConfig(resolution=2, width=64, conv_depth=6),
                IFBlockConfig(resolution=1, width=48, conv_depth=6),
            ],
            teacher=IFBlockConfig(resolution=1, width=48, conv_depth=6, privileged=True),
        ),
        refine=RefineConfig(context_width=32, encoder_width=32),
    )
