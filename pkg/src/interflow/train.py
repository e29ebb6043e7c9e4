"""Optimization loop: model + teacher + refinement + losses + schedule.

Determinism contract: with a fixed seed on a fixed platform, two runs
produce bit-identical checkpoints. Everything random is derived statelessly
from (seed, purpose, step/index) so that a resumed run continues exactly
where the interrupted one left off. The loop aborts on a non-finite loss
rather than clipping it silently, reporting the batch seed that triggered
it.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
import torch

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint, strip_for_inference
from .config import NetConfig, desk_config, large_config
from .data import MotionSpec, Sample, SyntheticDataset, augment
from .errors import ConfigurationError, NumericalError
from .losses import LossReport, total_loss, lap_loss, l1_loss
from .metrics import psnr
from .ops import backward_warp
from .pipeline import Model, build_model, interpolate_detailed
from .refine import fuse, reconstruct


@dataclass
class TrainConfig:
    steps: int = 5000
    batch_size: int = 8
    patch_size: int = 64
    lr_max: float = 1e-4
    lr_min: float = 1e-5
    weight_decay: float = 1e-4
    lambda_d: float = 0.01
    mode: str = "mid"              # "mid" fixes t=0.5; "arbitrary" samples septuplet timesteps
    seed: int = 0
    distill: bool = True           # off: same loop minus teacher and distillation terms
    rec_loss: str = "lap"          # "lap" or "l1"
    arch: str = "desk"             # "desk" or "large"
    train_samples: int = 2000
    val_samples: int = 200
    val_interval: int = 1000
    max_speed: float = 8.0
    deterministic: bool = True     # pin to one thread so runs are bit-reproducible

    def validate(self):
        if self.steps < 1:
            raise ConfigurationError("steps must be >= 1")
        if self.batch_size < 1:
            raise ConfigurationError("batch size must be >= 1")
        if not (self.lr_max >= self.lr_min > 0):
            raise ConfigurationError("need lr_max >= lr_min > 0")
        if self.mode not in ("mid", "arbitrary"):
            raise ConfigurationError(f"unknown mode {self.mode!r}")
        if self.rec_loss not in ("lap", "l1"):
            raise ConfigurationError(f"unknown rec_loss {self.rec_loss!r}")

    def motion_spec(self) -> MotionSpec:
        return MotionSpec(size=self.patch_size, max_speed=self.max_speed)

    def net_config(self) -> NetConfig:
        cfg = large_config() if self.arch == "large" else desk_config()
        if not self.distill:
            cfg.ifnet.teacher = None
        return cfg


def lr_schedule(step: int, total: int, lr_max: float, lr_min: float) -> float:
    """Cosine decay from lr_max at step 0 to lr_min at step == total."""
    if total <= 0:
        raise ConfigurationError("schedule length must be positive")
    return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + math.cos(math.pi * step / total))


@dataclass
class TrainState:
    model: Model
    optimizer: torch.optim.AdamW
    cfg: TrainConfig
    step: int = 0


@dataclass
class TrainResult:
    checkpoint: Path            # inference checkpoint at the final step
    best_checkpoint: Path       # inference checkpoint at the best validation PSNR
    train_checkpoint: Path      # full state (teacher + optimizer), resumable
    log_path: Path
    baseline_psnr: float
    final_psnr: float
    best_psnr: float
    final_epe: float
    duration_s: float
    loss_history: list[float] = field(default_factory=list)


def _to_chw(img: np.ndarray) -> torch.Tensor:
    return torch.from_numpy(np.ascontiguousarray(img.transpose(2, 0, 1), dtype=np.float32))


def make_batch(samples: list[Sample]):
    i0 = torch.stack([_to_chw(s.i0) for s in samples])
    i1 = torch.stack([_to_chw(s.i1) for s in samples])
    gt = torch.stack([_to_chw(s.it) for s in samples])
    t = torch.tensor([s.t for s in samples], dtype=torch.float32)
    return i0, i1, gt, t


def forward_losses(state: TrainState, batch) -> tuple[torch.Tensor, LossReport]:
    """Student + teacher forward passes and the combined objective."""
    cfg = state.cfg
    i0, i1, gt, t = batch
    t_map = t.view(-1, 1, 1, 1).expand(-1, 1, i0.shape[2], i0.shape[3])

    ifnet = state.model.ifnet
    flow_state = ifnet(i0, i1, t_map)
    both = backward_warp(torch.cat([i0, i1], dim=0),
                         torch.cat([flow_state.flow[:, 0:2], flow_state.flow[:, 2:4]], dim=0))
    warped0, warped1 = both.chunk(2, dim=0)
    mask = flow_state.mask
    fused = fuse(warped0, warped1, mask)
    delta = state.model.refine(i0, i1, warped0, warped1, flow_state.flow, mask)
    student = reconstruct(fused, delta)

    rec = lap_loss if cfg.rec_loss == "lap" else l1_loss
    if cfg.distill:
        teacher = ifnet.teacher_forward(flow_state, i0, i1, t_map, gt,
                                        warped=(warped0, warped1))
        report = total_loss(student, teacher.image, gt, flow_state.history_flows(),
                            teacher.flow, lambda_d=cfg.lambda_d, rec_loss=cfg.rec_loss)
    else:
        l_rec = rec(student, gt)
        zero = l_rec.detach() * 0
        report = LossReport(l_rec, zero, zero, l_rec, cfg.lambda_d)
    return report.l_total, report


def train_step(state: TrainState, batch, batch_seed=None) -> LossReport:
    cfg = state.cfg
    loss, report = forward_losses(state, batch)
    if not torch.isfinite(loss):
        raise NumericalError(
            f"non-finite loss at step {state.step}"
            + (f" (batch seed {batch_seed})" if batch_seed is not None else "")
            + f": {report.floats()}")
    lr = lr_schedule(state.step, cfg.steps, cfg.lr_max, cfg.lr_min)
    for group in state.optimizer.param_groups:
        group["lr"] = lr
    state.optimizer.zero_grad(set_to_none=True)
    loss.backward()
    state.optimizer.step()
    state.step += 1
    return report


def _batch_for_step(cfg: TrainConfig, ds: SyntheticDataset, step: int):
    """Deterministic batch: indices and augmentation coins keyed by (seed, step)."""
    seed = (cfg.seed, 2, step)
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, len(ds), size=cfg.batch_size)
    samples = [augment(ds.sample(int(i)), rng) for i in idx]
    return make_batch(samples), seed


def evaluate(model: Model, ds: SyntheticDataset, max_samples: int | None = None,
             chunk: int = 25) -> dict:
    """Mean validation PSNR plus flow endpoint error on sprite interiors."""
    n = len(ds) if max_samples is None else min(max_samples, len(ds))
    psnrs = []
    epes = []
    with torch.no_grad():
        for start in range(0, n, chunk):
            samples = [ds.sample(i) for i in range(start, min(start + chunk, n))]
            i0, i1, gt, t = make_batch(samples)
            t_map = t.view(-1, 1, 1, 1).expand(-1, 1, i0.shape[2], i0.shape[3])
            res = interpolate_detailed(model, i0, i1, t_map)
            for j, s in enumerate(samples):
                pred = res.image[j].permute(1, 2, 0).numpy()
                psnrs.append(psnr(pred, s.it))
                if s.meta is not None and s.meta.interior.any():
                    flow = res.state.flow[j].numpy()
                    gt0 = s.meta.flow_to_0.transpose(2, 0, 1)
                    gt1 = s.meta.flow_to_1.transpose(2, 0, 1)
                    e0 = np.sqrt(((flow[0:2] - gt0) ** 2).sum(0))
                    e1 = np.sqrt(((flow[2:4] - gt1) ** 2).sum(0))
                    m = s.meta.interior
                    epes.append(float((e0[m].mean() + e1[m].mean()) / 2))
    return {
        "psnr": float(np.mean(psnrs)),
        "epe": float(np.mean(epes)) if epes else float("nan"),
        "samples": n,
    }


def baseline_psnr(ds: SyntheticDataset, max_samples: int | None = None) -> float:
    """PSNR of plain frame averaging, the no-motion reference point."""
    n = len(ds) if max_samples is None else min(max_samples, len(ds))
    vals = [psnr((ds.sample(i).i0 + ds.sample(i).i1) / 2.0, ds.sample(i).it)
            for i in range(n)]
    return float(np.mean(vals))


def _checkpoint_params(state: TrainState) -> dict[str, np.ndarray]:
    params = state.model.param_arrays()
    named = _named_parameters(state.model)
    for name, p in named:
        opt_state = state.optimizer.state.get(p)
        if opt_state:
            params[f"opt.{name}.exp_avg"] = opt_state["exp_avg"].detach().numpy()
            params[f"opt.{name}.exp_avg_sq"] = opt_state["exp_avg_sq"].detach().numpy()
    return params


def _named_parameters(model: Model):
    out = []
    for prefix, mod in (("ifnet", model.ifnet), ("refine", model.refine)):
        for name, p in mod.named_parameters():
            out.append((f"{prefix}.{name}", p))
    return out


def _opt_step_count(state: TrainState) -> int:
    for s in state.optimizer.state.values():
        if "step" in s:
            return int(s["step"])
    return 0


def save_train_checkpoint(state: TrainState, path) -> None:
    save_checkpoint(path, _checkpoint_params(state), state.model.config,
                    step=state.step, seed=state.cfg.seed,
                    extra={"mode": state.cfg.mode, "opt_step": _opt_step_count(state),
                           "train_config": asdict(state.cfg)})


def _save_inference(state: TrainState, path) -> None:
    full = Checkpoint(_checkpoint_params(state), state.model.config,
                      state.step, state.cfg.seed, {"mode": state.cfg.mode})
    slim = strip_for_inference(full)
    save_checkpoint(path, slim.params, slim.config, slim.step, slim.seed, slim.extra)


def init_state(cfg: TrainConfig, net: NetConfig | None = None) -> TrainState:
    cfg.validate()
    if cfg.deterministic:
        torch.set_num_threads(1)
    torch.set_flush_denormal(True)
    torch.manual_seed(cfg.seed)
    model = build_model(net or cfg.net_config(), cfg.mode)
    model.ifnet.train()
    model.refine.train()
    params = [p for _, p in _named_parameters(model)]
    opt = torch.optim.AdamW(params, lr=cfg.lr_max, betas=(0.9, 0.999), eps=1e-8,
                            weight_decay=cfg.weight_decay, foreach=True)
    return TrainState(model, opt, cfg)


def resume_state(cfg: TrainConfig, path) -> TrainState:
    """Rebuild a training state saved by save_train_checkpoint."""
    ckpt = load_checkpoint(path)
    state = init_state(cfg, net=ckpt.config)
    named = dict(_named_parameters(state.model))
    with torch.no_grad():
        for name, p in named.items():
            p.copy_(torch.from_numpy(ckpt.params[name]))
    opt_step = ckpt.extra.get("opt_step", 0)
    for name, p in named.items():
        ea = ckpt.params.get(f"opt.{name}.exp_avg")
        eas = ckpt.params.get(f"opt.{name}.exp_avg_sq")
        if ea is not None and eas is not None:
            state.optimizer.state[p] = {
                "step": torch.tensor(float(opt_step)),
                "exp_avg": torch.from_numpy(ea.copy()),
                "exp_avg_sq": torch.from_numpy(eas.copy()),
            }
    state.step = ckpt.step
    return state


def train(cfg: TrainConfig, out_dir, net: NetConfig | None = None,
          resume: str | None = None, quiet: bool = False) -> TrainResult:
    """Full run: schedule, augmentation, validation tracking, checkpoints."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    state = resume_state(cfg, resume) if resume else init_state(cfg, net)
    cfg = state.cfg

    spec = cfg.motion_spec()
    train_ds = SyntheticDataset(cfg.train_samples, spec, cfg.seed, "train", cfg.mode)
    val_ds = SyntheticDataset(cfg.val_samples, spec, cfg.seed, "val", cfg.mode)

    log_path = out_dir / "train_log.jsonl"
    log = open(log_path, "a")
    base = baseline_psnr(val_ds)
    best = (-math.inf, None)
    final_eval = None
    last_val_step = -1
    losses = []
    t0 = time.perf_counter()

    def log_record(rec: dict):
        log.write(json.dumps(rec) + "\n")

    def run_validation():
        nonlocal best, final_eval, last_val_step
        state.model.ifnet.eval()
        state.model.refine.eval()
        ev = evaluate(state.model, val_ds)
        state.model.ifnet.train()
        state.model.refine.train()
        final_eval = ev
        last_val_step = state.step
        if ev["psnr"] > best[0]:
            _save_inference(state, out_dir / "ckpt_best.rifc")
            best = (ev["psnr"], state.step)
        if not quiet:
            print(f"step {state.step}: val_psnr={ev['psnr']:.3f} dB val_epe={ev['epe']:.3f} px "
                  f"(baseline {base:.3f} dB)")
        return ev

    try:
        while state.step < cfg.steps:
            batch, seed = _batch_for_step(cfg, train_ds, state.step)
            lr = lr_schedule(state.step, cfg.steps, cfg.lr_max, cfg.lr_min)
            report = train_step(state, batch, batch_seed=seed)
            losses.append(float(report.l_total.detach()))
            rec = {"step": state.step, "lr": lr, **report.floats(), "val_psnr": None}
            if state.step % cfg.val_interval == 0 or state.step == cfg.steps:
                rec["val_psnr"] = run_validation()["psnr"]
            log_record(rec)
            if not quiet and state.step % 200 == 0:
                print(f"step {state.step}/{cfg.steps} l_total={float(report.l_total):.4f}")
        if last_val_step != state.step:
            run_validation()
    finally:
        log.close()

    save_train_checkpoint(state, out_dir / "ckpt_train.rifc")
    _save_inference(state, out_dir / "ckpt_final.rifc")
    if best[1] is None:
        _save_inference(state, out_dir / "ckpt_best.rifc")
        best = (final_eval["psnr"], state.step)

    return TrainResult(
        checkpoint=out_dir / "ckpt_final.rifc",
        best_checkpoint=out_dir / "ckpt_best.rifc",
        train_checkpoint=out_dir / "ckpt_train.rifc",
        log_path=log_path,
        baseline_psnr=base,
        final_psnr=final_eval["psnr"],
        best_psnr=best[0],
        final_epe=final_eval["epe"],
        duration_s=time.perf_counter() - t0,
        loss_history=losses,
    )
