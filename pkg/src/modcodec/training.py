"""Rate-distortion training: loss, optimizer step, schedule, loop."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autograd as ag
from .autograd import AdamState, Tensor
from .data import PatchDataset
from .entropy import add_uniform_noise, rate_bits
from .errors import ConfigError, DataError, NumericError
from .metrics import MSSSIM_WEIGHTS, K1, K2, _gaussian_window, msssim_levels
from .network import CodecModel, load_checkpoint, save_checkpoint

log = logging.getLogger(__name__)

REFERENCE_LAMBDAS_LOW = (0.0018, 0.0035, 0.0067, 0.0130)
REFERENCE_LAMBDAS_HIGH = (0.0250, 0.0483, 0.0932, 0.1800)
METRICS_FIELDS = ("step", "epoch", "lr", "loss", "bpp", "mse", "psnr")


@dataclass
class RdLossConfig:
    lmbda: float = 0.0130
    metric: str = "mse"
    pixel_scale: float = 255.0

    def __post_init__(self):
        if not self.lmbda > 0:
            raise ConfigError(f"lambda must be positive, got {self.lmbda}")
        if self.metric not in ("mse", "msssim"):
            raise ConfigError(f"distortion metric must be mse or msssim, got {self.metric!r}")


@dataclass
class TrainConfig:
    batch_size: int = 8
    epochs: int = 100
    lr: float = 1e-4
    lr_drop_epoch: int = 64
    lr_drop_factor: float = 0.5
    clip: float = 1.0
    crop: int = 64
    seed: int = 0
    max_steps: int = 0
    checkpoint_interval: int = 0

    def __post_init__(self):
        for name in ("batch_size", "epochs", "crop"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.lr < 0 or self.clip <= 0 or self.lr_drop_factor <= 0:
            raise ConfigError("lr must be >= 0, clip and lr_drop_factor > 0")
        if self.max_steps < 0 or self.checkpoint_interval < 0:
            raise ConfigError("max_steps and checkpoint_interval must be >= 0")


@dataclass
class TrainState:
    adam: AdamState
    step: int = 0
    history: list[dict] = field(default_factory=list)

    @classmethod
    def fresh(cls, model: CodecModel, lr: float) -> TrainState:
        return cls(AdamState.for_params(model.parameters(), lr))


# ---------------------------------------------------------------------------
# Differentiable MS-SSIM (for the msssim distortion mode)


def _blur(x: Tensor, kernel: Tensor) -> Tensor:
    B, C, H, W = x.shape
    flat = ag.reshape(x, (B * C, 1, H, W))
    out = ag.conv2d(flat, kernel)
    return ag.reshape(out, (B, C, out.shape[2], out.shape[3]))


def msssim_tensor(a: Tensor, b: Tensor, data_range: float = 1.0) -> Tensor:
    """Same quantity as ``metrics.msssim`` but recorded for differentiation."""
    g = _gaussian_window()
    dtype = a.dtype
    kernel = ag.Tensor(np.outer(g, g)[None, None].astype(dtype))
    pool = ag.Tensor(np.full((1, 1, 2, 2), 0.25, dtype=dtype))
    c1 = (K1 * data_range) ** 2
    c2 = (K2 * data_range) ** 2
    levels = msssim_levels(a.shape[2], a.shape[3])
    weights = np.array(MSSSIM_WEIGHTS[:levels])
    weights = weights / weights.sum()
    x, y = a, b
    score = None
    for level in range(levels):
        mu_x, mu_y = _blur(x, kernel), _blur(y, kernel)
        mxx, myy, mxy = mu_x * mu_x, mu_y * mu_y, mu_x * mu_y
        sxx = _blur(x * x, kernel) - mxx
        syy = _blur(y * y, kernel) - myy
        sxy = _blur(x * y, kernel) - mxy
        cs = (sxy * 2.0 + c2) / (sxx + syy + c2)
        if level == levels - 1:
            cs = cs * ((mxy * 2.0 + c1) / (mxx + myy + c1))
        term = ag.clamp_min(cs.mean(axis=(2, 3)), 1e-8)
        term = ag.pow_scalar(term, float(weights[level]))
        score = term if score is None else score * term
        if level < levels - 1:
            B, C, H, W = x.shape
            h, w = H // 2 * 2, W // 2 * 2
            x = ag.reshape(ag.conv2d(ag.reshape(ag.crop2d(x, h, w), (B * C, 1, h, w)), pool, stride=2),
                           (B, C, h // 2, w // 2))
            y = ag.reshape(ag.conv2d(ag.reshape(ag.crop2d(y, h, w), (B * C, 1, h, w)), pool, stride=2),
                           (B, C, h // 2, w // 2))
    return score.mean()


# ---------------------------------------------------------------------------
# Loss and step


def rd_loss(x, x_hat, y_noisy, prior, cfg: RdLossConfig) -> tuple[Tensor, float, float]:
    """Return (loss, bpp, distortion); distortion is MSE on [0, 1] or MS-SSIM.

    mse:    loss = lambda * 255^2 * MSE + bpp
    msssim: loss = lambda * (1 - MS-SSIM) + bpp
    """
    x, x_hat = ag.as_tensor(x), ag.as_tensor(x_hat)
    if x.shape != x_hat.shape:
        raise ConfigError(f"x {x.shape} and x_hat {x_hat.shape} differ in shape")
    B, _, H, W = x.shape
    bpp = rate_bits(y_noisy, prior) * (1.0 / (B * H * W))
    if cfg.metric == "mse":
        diff = x_hat - x
        mse = (diff * diff).mean()
        loss = mse * (cfg.lmbda * cfg.pixel_scale ** 2) + bpp
        return loss, bpp.item(), mse.item()
    ms = msssim_tensor(x_hat, x, data_range=1.0)
    loss = (1.0 - ms) * cfg.lmbda + bpp
    return loss, bpp.item(), ms.item()


def lr_schedule(epoch: int, cfg: TrainConfig) -> float:
    if not 0 <= epoch < cfg.epochs:
        raise ConfigError(f"epoch {epoch} outside [0, {cfg.epochs})")
    return cfg.lr if epoch < cfg.lr_drop_epoch else cfg.lr * cfg.lr_drop_factor


def train_step(model: CodecModel, batch, state: TrainState, cfg: TrainConfig,
               loss_cfg: RdLossConfig, lr: float | None = None) -> dict:
    """analysis -> noise -> likelihood -> synthesis -> loss -> clip -> Adam."""
    if batch.shape[2] % model.config.downsampling or batch.shape[3] % model.config.downsampling:
        raise ConfigError(f"batch extents {batch.shape[2:]} not aligned to {model.config.downsampling}")
    params = model.parameters()
    for p in params:
        p.zero_grad()
    x = ag.Tensor(np.asarray(batch, dtype=model.dtype))
    y = model.analysis_apply(x)
    y_noisy = add_uniform_noise(y, np.random.default_rng([cfg.seed, state.step, 2]))
    x_hat = model.synthesis_apply(y_noisy)
    try:
        loss, bpp, distortion = rd_loss(x, x_hat, y_noisy, model.prior, loss_cfg)
    except NumericError as exc:
        raise NumericError(f"step {state.step}: {exc}") from exc
    if not math.isfinite(loss.item()):
        raise NumericError(f"step {state.step}: non-finite loss")
    ag.backward(loss)
    grads, norm = ag.clip_global_norm([p.grad for p in params], cfg.clip)
    ag.adam_step(params, grads, state.adam, cfg.lr if lr is None else lr)
    model.project()
    state.step += 1
    with ag.no_grad():
        mse = float(np.mean((x_hat.data.astype(np.float64) - x.data) ** 2))
    return {
        "loss": loss.item(),
        "bpp": bpp,
        "mse": mse,
        "psnr": 10.0 * math.log10(1.0 / mse) if mse > 0 else math.inf,
        "distortion": distortion,
        "grad_norm": norm,
    }


# ---------------------------------------------------------------------------
# Checkpoint state


def optimizer_tensors(model: CodecModel, state: TrainState) -> dict[str, np.ndarray]:
    extra = {"train.step": np.array(float(state.step))}
    for (name, _), m, v in zip(model.named_parameters(), state.adam.m, state.adam.v):
        extra[f"adam.m.{name}"] = m
        extra[f"adam.v.{name}"] = v
    return extra


def restore_state(model: CodecModel, tensors: dict[str, np.ndarray], lr: float) -> TrainState:
    state = TrainState.fresh(model, lr)
    if "train.step" not in tensors:
        return state
    state.step = int(tensors["train.step"].reshape(-1)[0])
    state.adam.step = state.step
    for i, (name, p) in enumerate(model.named_parameters()):
        try:
            state.adam.m[i] = np.array(tensors[f"adam.m.{name}"].reshape(p.shape))
            state.adam.v[i] = np.array(tensors[f"adam.v.{name}"].reshape(p.shape))
        except KeyError as exc:
            raise DataError(f"checkpoint lacks optimizer state for {name}") from exc
    return state


def _fmt(v: float) -> str:
    return repr(float(v))


def train_loop(cfg: TrainConfig, dataset: PatchDataset, model: CodecModel, loss_cfg: RdLossConfig,
               out_dir=None, state: TrainState | None = None) -> TrainState:
    """Run epochs until ``cfg.epochs`` (or ``cfg.max_steps``) is reached.

    With ``out_dir`` set, writes ``metrics.csv`` (appending when resuming),
    ``checkpoint_<step>.ckpt`` every ``checkpoint_interval`` steps, and
    ``final.ckpt``.
    """
    if len(dataset) == 0:
        raise ConfigError("dataset is empty")
    if cfg.crop % model.config.downsampling:
        raise ConfigError(f"crop {cfg.crop} not divisible by {model.config.downsampling}")
    state = state or TrainState.fresh(model, cfg.lr)
    per_epoch = dataset.steps_per_epoch(cfg.batch_size)
    total = per_epoch * cfg.epochs
    if cfg.max_steps:
        total = min(total, cfg.max_steps)

    writer = fh = None
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        csv_path = out / "metrics.csv"
        resuming = state.step > 0 and csv_path.exists()
        fh = open(csv_path, "a" if resuming else "w", newline="")
        writer = csv.writer(fh, lineterminator="\n")
        if not resuming:
            writer.writerow(METRICS_FIELDS)
    try:
        while state.step < total:
            epoch, offset = divmod(state.step, per_epoch)
            lr = lr_schedule(epoch, cfg)
            for i, batch in enumerate(dataset.epoch_batches(epoch, cfg.batch_size)):
                if i < offset:
                    continue
                if state.step >= total:
                    break
                step = state.step
                scalars = train_step(model, batch, state, cfg, loss_cfg, lr)
                row = {"step": step, "epoch": epoch, "lr": lr, **scalars}
                state.history.append(row)
                if writer:
                    writer.writerow([step, epoch] + [_fmt(row[k]) for k in METRICS_FIELDS[2:]])
                if step % 100 == 0:
                    log.info("step %d epoch %d loss %.4f bpp %.4f psnr %.2f", step, epoch,
                             scalars["loss"], scalars["bpp"], scalars["psnr"])
                if out is not None and cfg.checkpoint_interval and state.step % cfg.checkpoint_interval == 0:
                    save_checkpoint(out / f"checkpoint_{state.step:06d}.ckpt", model,
                                    optimizer_tensors(model, state))
    finally:
        if fh:
            fh.close()
    if out is not None:
        save_checkpoint(out / "final.ckpt", model, optimizer_tensors(model, state))
    return state


def resume(path, lr: float) -> tuple[CodecModel, TrainState]:
    model, tensors, _ = load_checkpoint(path)
    return model, restore_state(model, tensors, lr)
