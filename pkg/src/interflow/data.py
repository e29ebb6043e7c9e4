"""Synthetic training scenes, augmentation rules and frame I/O.

Scenes are procedurally textured sprites (discs and squares) translating,
and optionally spinning, over a static textured background. Because the
transform of every sprite is analytic, each sample carries the exact
backward flows from the target instant to both endpoint frames together
with an eroded interior mask, which is what lets flow accuracy be scored
against ground truth that real video datasets cannot provide.

Images are float32 (H, W, C) arrays in [0, 1]. Flow metadata is (H, W, 2)
with channel 0 horizontal.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

from .errors import DimensionError, FrameIOError

RAW_MAGIC = b"RIFL"


# ---------------------------------------------------------------------------
# scene model


@dataclass
class Texture:
    """Band-limited plaid: base color plus a few low-frequency cosines."""

    base: np.ndarray    # (3,)
    amp: np.ndarray     # (K, 3)
    freq: np.ndarray    # (K, 2) cycles/pixel, (fu, fv)
    phase: np.ndarray   # (K,)

    def sample(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        arg = 2 * np.pi * (self.freq[:, 0, None, None] * u[None]
                           + self.freq[:, 1, None, None] * v[None]) + self.phase[:, None, None]
        waves = np.cos(arg)  # (K, H, W)
        out = self.base[None, None, :] + np.einsum("khw,kc->hwc", waves, self.amp)
        return np.clip(out, 0.0, 1.0)

    def mirrored_u(self) -> "Texture":
        f = self.freq.copy()
        f[:, 0] = -f[:, 0]
        return replace(self, freq=f)

    def mirrored_v(self) -> "Texture":
        f = self.freq.copy()
        f[:, 1] = -f[:, 1]
        return replace(self, freq=f)


@dataclass
class Sprite:
    kind: str               # "disc" or "square"
    center: np.ndarray      # (2,) position at time 0, (x, y)
    velocity: np.ndarray    # (2,) pixels per unit time
    radius: float           # half-extent
    spin: float = 0.0       # radians per unit time
    texture: Texture | None = None
    color: np.ndarray | None = None  # flat color when untextured

    def center_at(self, tau: float) -> np.ndarray:
        return self.center + tau * self.velocity


@dataclass
class Scene:
    size: int
    background: np.ndarray  # (H, W, 3)
    sprites: list[Sprite]


@dataclass
class MotionSpec:
    """Knobs for random scene generation."""

    size: int = 64
    min_sprites: int = 1
    max_sprites: int = 2
    max_speed: float = 8.0
    min_radius: float = 7.0
    max_radius: float = 14.0
    rotation: bool = False
    max_spin: float = 0.5
    textured_sprites: bool = True


@dataclass
class SampleMeta:
    flow_to_0: np.ndarray   # (H, W, 2)
    flow_to_1: np.ndarray   # (H, W, 2)
    interior: np.ndarray    # (H, W) bool, eroded visible sprite area at time t
    scene: Scene


@dataclass
class Sample:
    i0: np.ndarray
    i1: np.ndarray
    it: np.ndarray
    t: float
    meta: SampleMeta | None = None


# ---------------------------------------------------------------------------
# generation


# Frequency bank shared by every generated texture: scenes differ in phases,
# orientations within a band and amplitudes, but share spectral statistics, so
# features learned on one scene transfer to the next. Several waves per band
# at spread orientations give local patches two-dimensional structure;
# single-orientation gratings would make motion normal to the stripes
# unobservable (the aperture problem).
_FREQ_BANDS = (0.035, 0.07, 0.13)
_WAVES = 8


def _random_texture(rng: np.random.Generator, waves: int = _WAVES) -> Texture:
    base_angle = rng.uniform(0, 2 * np.pi)
    angles = base_angle + np.arange(waves) * (np.pi / waves) + rng.uniform(-0.2, 0.2, size=waves)
    radii = np.array([_FREQ_BANDS[i % len(_FREQ_BANDS)] for i in range(waves)])
    radii = radii * rng.uniform(0.85, 1.15, size=waves)
    freq = np.stack([radii * np.cos(angles), radii * np.sin(angles)], axis=1)
    return Texture(
        base=rng.uniform(0.35, 0.65, size=3),
        amp=rng.uniform(-0.16, 0.16, size=(waves, 3)),
        freq=freq,
        phase=rng.uniform(0, 2 * np.pi, size=waves),
    )


def _grid(size: int):
    ys, xs = np.mgrid[0:size, 0:size].astype(np.float64)
    return xs, ys


def _sprite_geometry(sprite: Sprite, xs, ys, tau: float):
    """Local coords and signed interior distance of a sprite at time tau."""
    c = sprite.center_at(tau)
    theta = sprite.spin * tau
    dx = xs - c[0]
    dy = ys - c[1]
    cos_t, sin_t = np.cos(theta), np.sin(theta)
    u = cos_t * dx + sin_t * dy
    v = -sin_t * dx + cos_t * dy
    if sprite.kind == "disc":
        d = sprite.radius - np.sqrt(u * u + v * v)
    else:
        d = sprite.radius - np.maximum(np.abs(u), np.abs(v))
    return u, v, d


def render_scene(scene: Scene, tau: float) -> np.ndarray:
    """Draw the scene at time tau with a one-pixel antialiasing ramp."""
    xs, ys = _grid(scene.size)
    img = scene.background.astype(np.float64).copy()
    for sp in scene.sprites:
        u, v, d = _sprite_geometry(sp, xs, ys, tau)
        cov = np.clip(d + 0.5, 0.0, 1.0)[..., None]
        color = sp.texture.sample(u, v) if sp.texture is not None else \
            np.broadcast_to(sp.color, img.shape)
        img = cov * color + (1.0 - cov) * img
    return np.clip(img, 0.0, 1.0).astype(np.float32)


def scene_flows(scene: Scene, t: float, interior_margin: float = 1.5):
    """Exact backward flows at the time-t pixel grid, plus the interior mask.

    Background is static (zero flow). For sprite pixels the flow follows the
    rigid transform of the topmost sprite covering the pixel; the interior
    mask keeps a margin away from sprite edges and from any occluder above.
    """
    xs, ys = _grid(scene.size)
    f0 = np.zeros((scene.size, scene.size, 2))
    f1 = np.zeros((scene.size, scene.size, 2))
    interior = np.zeros((scene.size, scene.size), dtype=bool)
    for sp in scene.sprites:
        u, v, d = _sprite_geometry(sp, xs, ys, t)
        own = d > 0.0
        # local coords are rigid, so the same content point at times 0 and 1
        # sits at center(tau) + R(spin * tau) @ (u, v)
        for tau, f in ((0.0, f0), (1.0, f1)):
            c = sp.center_at(tau)
            theta = sp.spin * tau
            qx = c[0] + np.cos(theta) * u - np.sin(theta) * v
            qy = c[1] + np.sin(theta) * u + np.cos(theta) * v
            f[own, 0] = (qx - xs)[own]
            f[own, 1] = (qy - ys)[own]
        interior[d + 0.5 > 0.0] = False  # occluded by this (later-drawn) sprite
        interior[d >= 0.5 + interior_margin] = True
    return f0.astype(np.float32), f1.astype(np.float32), interior


def flip_scene_horizontal(scene: Scene) -> Scene:
    """Mirror a scene about the vertical axis; used to cross-check augment()."""
    w = scene.size
    sprites = []
    for sp in scene.sprites:
        sprites.append(replace(
            sp,
            center=np.array([w - 1 - sp.center[0], sp.center[1]]),
            velocity=np.array([-sp.velocity[0], sp.velocity[1]]),
            spin=-sp.spin,
            texture=sp.texture.mirrored_u() if sp.texture is not None else None,
        ))
    return Scene(scene.size, scene.background[:, ::-1].copy(), sprites)


def generate_scene(rng: np.random.Generator, spec: MotionSpec) -> Scene:
    size = spec.size
    bg_tex = _random_texture(rng, waves=4)
    xs, ys = _grid(size)
    background = bg_tex.sample(xs, ys).astype(np.float32)

    n = int(rng.integers(spec.min_sprites, spec.max_sprites + 1))
    sprites: list[Sprite] = []
    for _ in range(n):
        radius = rng.uniform(spec.min_radius, spec.max_radius)
        margin = radius + 1.0
        if 2 * margin >= size - 2:
            continue
        placed = None
        for _attempt in range(20):
            center = rng.uniform(margin, size - 1 - margin, size=2)
            # square-root shaping biases speeds low, which gives training a
            # natural small-to-large motion curriculum while keeping the
            # stated maximum reachable
            raw = rng.uniform(-1.0, 1.0, size=2)
            velocity = np.sign(raw) * np.abs(raw) ** 1.5 * spec.max_speed
            # keep the sprite fully on canvas over the whole unit interval by
            # clipping the velocity instead of rejecting the sample
            lo = margin - center
            hi = (size - 1 - margin) - center
            velocity = np.clip(velocity, lo, hi)
            ok = True
            for other in sprites:
                for tau in (0.0, 0.5, 1.0):
                    gap = np.linalg.norm(center + tau * velocity - other.center_at(tau))
                    if gap < radius + other.radius + 2.0:
                        ok = False
            if ok:
                placed = (center, velocity)
                break
        if placed is None:
            continue
        center, velocity = placed
        spin = rng.uniform(-spec.max_spin, spec.max_spin) if spec.rotation else 0.0
        kind = "disc" if rng.random() < 0.5 else "square"
        if spec.textured_sprites:
            sprite = Sprite(kind, center, velocity, radius, spin, texture=_random_texture(rng))
        else:
            bg_mean = background.mean(axis=(0, 1))
            color = rng.uniform(0, 1, size=3)
            while np.abs(color - bg_mean).max() < 0.25:
                color = rng.uniform(0, 1, size=3)
            sprite = Sprite(kind, center, velocity, radius, spin, color=color)
        sprites.append(sprite)
    return Scene(size, background, sprites)


def gen_synthetic_sample(seed, spec: MotionSpec, t: float = 0.5) -> Sample:
    """Render one (i0, it, i1) triplet with exact flow metadata.

    ``seed`` may be an int or a tuple of ints; the same seed always yields a
    bit-identical sample.
    """
    rng = np.random.default_rng(seed)
    scene = generate_scene(rng, spec)
    i0 = render_scene(scene, 0.0)
    it = render_scene(scene, t)
    i1 = render_scene(scene, 1.0)
    f0, f1, interior = scene_flows(scene, t)
    return Sample(i0, i1, it, t, SampleMeta(f0, f1, interior, scene))


# ---------------------------------------------------------------------------
# augmentation and timestep sampling


def _flip_images_h(s: Sample) -> Sample:
    def fi(a):
        return a[:, ::-1].copy()

    meta = None
    if s.meta is not None:
        f0 = fi(s.meta.flow_to_0)
        f1 = fi(s.meta.flow_to_1)
        f0[..., 0] *= -1
        f1[..., 0] *= -1
        meta = SampleMeta(f0, f1, fi(s.meta.interior), s.meta.scene)
    return Sample(fi(s.i0), fi(s.i1), fi(s.it), s.t, meta)


def _flip_images_v(s: Sample) -> Sample:
    def fi(a):
        return a[::-1].copy()

    meta = None
    if s.meta is not None:
        f0 = fi(s.meta.flow_to_0)
        f1 = fi(s.meta.flow_to_1)
        f0[..., 1] *= -1
        f1[..., 1] *= -1
        meta = SampleMeta(f0, f1, fi(s.meta.interior), s.meta.scene)
    return Sample(fi(s.i0), fi(s.i1), fi(s.it), s.t, meta)


def _rot90(s: Sample) -> Sample:
    def ri(a):
        return np.rot90(a).copy()

    meta = None
    if s.meta is not None:
        def rf(f):
            g = np.rot90(f).copy()
            u = g[..., 0].copy()
            g[..., 0] = g[..., 1]
            g[..., 1] = -u
            return g

        meta = SampleMeta(rf(s.meta.flow_to_0), rf(s.meta.flow_to_1),
                          np.rot90(s.meta.interior).copy(), s.meta.scene)
    return Sample(ri(s.i0), ri(s.i1), ri(s.it), s.t, meta)


def _reverse_time(s: Sample) -> Sample:
    meta = None
    if s.meta is not None:
        meta = SampleMeta(s.meta.flow_to_1, s.meta.flow_to_0, s.meta.interior, s.meta.scene)
    return Sample(s.i1, s.i0, s.it, 1.0 - s.t, meta)


def augment(sample: Sample, rng: np.random.Generator) -> Sample:
    """Random flips, quarter rotation and temporal reversal.

    Each transform is an independent coin flip. Rotation only applies to
    square frames; non-square inputs skip it (the coin is still drawn so the
    random stream does not depend on frame shape).
    """
    s = sample
    if rng.random() < 0.5:
        s = _flip_images_h(s)
    if rng.random() < 0.5:
        s = _flip_images_v(s)
    rotate = rng.random() < 0.5
    if rotate and s.i0.shape[0] == s.i0.shape[1]:
        s = _rot90(s)
    if rng.random() < 0.5:
        s = _reverse_time(s)
    return s


def sample_septuplet_timestep(rng: np.random.Generator):
    """Pick 3 ordered indices out of a 7-frame sequence and the implied t."""
    n0, n1, n2 = np.sort(rng.choice(7, size=3, replace=False))
    t = (n1 - n0) / (n2 - n0)
    return int(n0), int(n1), int(n2), float(t)


# ---------------------------------------------------------------------------
# datasets


_SPLIT_CODES = {"train": 0, "val": 1}


class SyntheticDataset:
    """Deterministic lazy collection of generated samples.

    Sample i is derived from (base seed, split, i) alone, so any worker or
    access order reproduces the identical dataset. Generated samples are
    cached in memory.
    """

    def __init__(self, count: int, spec: MotionSpec, seed: int, split: str = "train",
                 mode: str = "mid", cache: bool = True):
        if split not in _SPLIT_CODES:
            raise ValueError(f"unknown split {split!r}")
        if mode not in ("mid", "arbitrary"):
            raise ValueError(f"unknown mode {mode!r}")
        self.count = count
        self.spec = spec
        self.seed = seed
        self.split = split
        self.mode = mode
        self._cache: dict[int, Sample] = {} if cache else None

    def __len__(self) -> int:
        return self.count

    def sample(self, idx: int) -> Sample:
        if not 0 <= idx < self.count:
            raise IndexError(idx)
        if self._cache is not None and idx in self._cache:
            return self._cache[idx]
        code = _SPLIT_CODES[self.split]
        if self.mode == "mid":
            t = 0.5
        else:
            _, _, _, t = sample_septuplet_timestep(
                np.random.default_rng((self.seed, code, idx, 1)))
        s = gen_synthetic_sample((self.seed, code, idx, 0), self.spec, t)
        if self._cache is not None:
            self._cache[idx] = s
        return s


# ---------------------------------------------------------------------------
# frame files


_FRAME_RE = re.compile(r"^frame_(\d{6})\.(png|ppm|rifl)$")


def save_image(path, image: np.ndarray) -> None:
    """Write one image; format chosen by extension (.png/.ppm 8-bit, .rifl raw f32)."""
    path = Path(path)
    if image.ndim == 2:
        image = image[..., None]
    if path.suffix == ".rifl":
        write_raw(path, image)
        return
    arr = np.clip(image, 0.0, 1.0)
    quant = np.round(arr * 255.0).astype(np.uint8)
    if quant.shape[2] == 1:
        quant = quant[..., 0]
    PILImage.fromarray(quant).save(path)


def load_image(path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise FrameIOError(f"no such frame file: {path}")
    if path.suffix == ".rifl":
        return read_raw(path)
    try:
        with PILImage.open(path) as im:
            arr = np.asarray(im.convert("RGB"), dtype=np.float32)
    except OSError as e:
        raise FrameIOError(f"cannot decode {path}: {e}") from e
    return arr / 255.0


def write_raw(path, image: np.ndarray) -> None:
    """Raw planar container: magic, u32 H W C, then C little-endian f32 planes."""
    if image.ndim != 3:
        raise DimensionError(f"expected HxWxC array, got shape {image.shape}")
    h, w, c = image.shape
    planes = np.ascontiguousarray(image.transpose(2, 0, 1).astype("<f4"))
    with open(path, "wb") as f:
        f.write(RAW_MAGIC)
        f.write(np.array([h, w, c], dtype="<u4").tobytes())
        f.write(planes.tobytes())


def read_raw(path) -> np.ndarray:
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != RAW_MAGIC:
        raise FrameIOError(f"{path}: bad magic {blob[:4]!r}")
    h, w, c = np.frombuffer(blob, dtype="<u4", count=3, offset=4)
    expect = 16 + 4 * h * w * c
    if len(blob) != expect:
        raise FrameIOError(f"{path}: expected {expect} bytes, found {len(blob)}")
    planes = np.frombuffer(blob, dtype="<f4", offset=16).reshape(c, h, w)
    return np.ascontiguousarray(planes.transpose(1, 2, 0))


def save_frames(directory, frames, fmt: str = "png") -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, frame in enumerate(frames):
        p = directory / f"frame_{i:06d}.{fmt}"
        save_image(p, frame)
        paths.append(p)
    return paths


def load_frames(directory) -> list[np.ndarray]:
    """Read a numbered frame directory in index order.

    Frame indices must be contiguous; a gap is reported with the missing
    index rather than silently skipped.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise FrameIOError(f"not a directory: {directory}")
    found = {}
    for p in directory.iterdir():
        m = _FRAME_RE.match(p.name)
        if m:
            found[int(m.group(1))] = p
    if not found:
        raise FrameIOError(f"no frame_NNNNNN files in {directory}")
    indices = sorted(found)
    lo = indices[0]
    for offset, idx in enumerate(indices):
        if idx != lo + offset:
            raise FrameIOError(f"frame numbering gap in {directory}: missing index {lo + offset}")
    return [load_image(found[i]) for i in indices]
