"""Training loop: random paired crops, Adam, cosine-annealed learning rate.

Runs are resumable: a checkpoint carries parameters, Adam moments, the step
counter, the sampler RNG state and the loss history, so stopping at step k and
resuming reproduces the uninterrupted run bit for bit.
"""
from __future__ import annotations

import csv
import dataclasses
import logging
import math
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt_io
from .cube import read_cube
from .haze import load_manifest
from .network import HDMba, loss_fn
from .tensor import Tensor, deterministic_mode

log = logging.getLogger(__name__)


class NonFiniteLossError(FloatingPointError):
    def __init__(self, iteration: int, value: float):
        self.iteration = iteration
        self.value = value
        super().__init__(f"non-finite loss {value} at iteration {iteration}")


@dataclass(frozen=True)
class TrainConfig:
    lr0: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch: int = 4
    iterations: int = 10_000
    crop_train: int = 64
    crop_test: int = 128
    theta1: float = 1.0
    theta2: float = 0.1
    seed: int = 0
    lr_min: float = 0.0
    checkpoint_every: int = 0      # 0: final checkpoint only
    clip_grad_norm: float | None = None

    def __post_init__(self):
        if self.lr0 < 0 or self.lr_min < 0 or self.eps <= 0:
            raise ValueError("learning rates must be >= 0 and eps > 0")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("Adam betas must lie in [0, 1)")
        if self.batch < 1 or self.iterations < 1 or self.crop_train < 1 or self.crop_test < 1:
            raise ValueError("batch, iterations and crop sizes must be >= 1")
        if self.checkpoint_every < 0:
            raise ValueError("checkpoint_every must be >= 0")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)


# ---------------------------------------------------------------------------------------
# optimizer and schedule


@dataclass
class OptimState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, named_params) -> "OptimState":
        m = {n: np.zeros_like(p.data) for n, p in named_params}
        v = {n: np.zeros_like(p.data) for n, p in named_params}
        return cls(m, v, 0)


def adam_step(named_params, state: OptimState, lr: float, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> None:
    """Bias-corrected Adam update applied in place to every trainable parameter."""
    state.t += 1
    t = state.t
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for name, p in named_params:
        if not p.trainable:
            continue
        if p.grad is None:
            raise ValueError(f"adam_step: parameter {name} has no gradient")
        g = p.grad
        m = state.m[name]
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        update = (m / c1) / (np.sqrt(v / c2) + eps)
        p.data -= (lr * update).astype(p.dtype)


def cosine_lr(t: int, total: int, lr0: float, lr_min: float = 0.0) -> float:
    """lr_min + (lr0 - lr_min)(1 + cos(pi t / total)) / 2, clamped to lr_min past the end."""
    if t >= total:
        return lr_min
    t = max(t, 0)
    return lr_min + 0.5 * (lr0 - lr_min) * (1.0 + math.cos(math.pi * t / total))


def clip_grad_norm(params, max_norm: float) -> float:
    total = math.sqrt(sum(float(np.sum(p.grad.astype(np.float64) ** 2)) for p in params if p.grad is not None))
    if total > max_norm > 0:
        scale = max_norm / (total + 1e-12)
        for p in params:
            if p.grad is not None:
                p.grad = (p.grad * scale).astype(p.grad.dtype)
    return total


# ---------------------------------------------------------------------------------------
# data


@dataclass
class Pair:
    hazy: np.ndarray    # (H, W, B)
    clean: np.ndarray
    wavelengths_nm: np.ndarray | None = None
    entry: dict | None = None


@dataclass
class Batch:
    hazy: np.ndarray    # (N, c, c, B)
    clean: np.ndarray
    origins: list[tuple[int, int, int]]   # (pair index, y, x)


def load_pairs(manifest, split: str | None = "train") -> list[Pair]:
    root, entries = load_manifest(manifest)
    pairs = []
    clean_cache: dict[str, np.ndarray] = {}
    for e in entries:
        if split is not None and e["split"] != split:
            continue
        if e["clean_path"] not in clean_cache:
            clean_cache[e["clean_path"]] = read_cube(root / e["clean_path"]).data
        hazy = read_cube(root / e["hazy_path"])
        pairs.append(Pair(hazy.data, clean_cache[e["clean_path"]], hazy.wavelengths_nm, e))
    return pairs


def sample_batch(pairs: list[Pair], crop: int, batch: int, rng: np.random.Generator) -> Batch:
    """Uniform pair and crop-origin sampling; hazy and clean crops share the origin."""
    if not pairs:
        raise ValueError("sample_batch: no training pairs")
    hazy, clean, origins = [], [], []
    for _ in range(batch):
        i = int(rng.integers(len(pairs)))
        p = pairs[i]
        h, w = p.hazy.shape[:2]
        if crop > h or crop > w:
            raise ValueError(f"crop {crop} larger than image {h}x{w}")
        y = int(rng.integers(h - crop + 1))
        x = int(rng.integers(w - crop + 1))
        hazy.append(p.hazy[y:y + crop, x:x + crop])
        clean.append(p.clean[y:y + crop, x:x + crop])
        origins.append((i, y, x))
    return Batch(np.stack(hazy), np.stack(clean), origins)


# ---------------------------------------------------------------------------------------
# loop


@dataclass
class TrainResult:
    history: list[tuple[int, float, float]]      # (iteration, lr, loss)
    checkpoint: ckpt_io.Checkpoint
    state: OptimState

    @property
    def losses(self) -> np.ndarray:
        return np.array([row[2] for row in self.history])


def make_checkpoint(model: HDMba, cfg: TrainConfig, state: OptimState, rng: np.random.Generator,
                    history) -> ckpt_io.Checkpoint:
    extra = {}
    for name in state.m:
        extra[f"optim.m.{name}"] = state.m[name]
        extra[f"optim.v.{name}"] = state.v[name]
    train_state = {
        "step": state.t,
        "rng": rng.bit_generator.state,
        "history": [[int(i), float(lr), float(l)] for i, lr, l in history],
        "deterministic": deterministic_mode(),
    }
    return ckpt_io.from_model(model, cfg.to_dict(), train_state, extra)


def restore(model: HDMba, ck: ckpt_io.Checkpoint) -> tuple[OptimState, np.random.Generator, list]:
    model.load_state_dict(ck.params())
    names = [n for n, _ in model.named_parameters()]
    if ck.train_state is None:
        raise ValueError("checkpoint carries no training state to resume from")
    state = OptimState({n: ck.tensors[f"optim.m.{n}"].copy() for n in names},
                       {n: ck.tensors[f"optim.v.{n}"].copy() for n in names},
                       int(ck.train_state["step"]))
    if not ck.train_state.get("deterministic", True):
        log.warning("resuming a run saved outside deterministic mode; bitwise replay not guaranteed")
    rng = np.random.default_rng()
    rng.bit_generator.state = ck.train_state["rng"]
    history = [(int(i), float(lr), float(l)) for i, lr, l in ck.train_state["history"]]
    return state, rng, history


def write_loss_csv(path, history) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["iteration", "lr", "loss"])
        for i, lr, l in history:
            wr.writerow([i, repr(lr), repr(l)])


def train(model: HDMba, pairs: list[Pair], cfg: TrainConfig, run_dir: str | os.PathLike | None = None,
          resume: ckpt_io.Checkpoint | None = None, stop_at: int | None = None,
          crop: int | None = None) -> TrainResult:
    """Run optimizer steps until ``stop_at`` (default ``cfg.iterations``).

    The learning-rate schedule always spans ``cfg.iterations`` so a run cut
    short with ``stop_at`` and resumed later follows the same trajectory.
    """
    crop = cfg.crop_train if crop is None else crop
    named = [(n, p) for n, p in model.named_parameters() if p.trainable]
    if resume is not None:
        state, rng, history = restore(model, resume)
    else:
        state, rng, history = OptimState.zeros_like(named), np.random.default_rng(cfg.seed), []
    stop = cfg.iterations if stop_at is None else min(stop_at, cfg.iterations)
    run_path = Path(run_dir) if run_dir is not None else None
    if run_path is not None:
        run_path.mkdir(parents=True, exist_ok=True)

    for it in range(state.t, stop):
        lr = cosine_lr(it, cfg.iterations, cfg.lr0, cfg.lr_min)
        batch = sample_batch(pairs, crop, cfg.batch, rng)
        model.zero_grad()
        y = model(Tensor(batch.hazy.astype(model.dtype, copy=False)))
        loss = loss_fn(y, batch.clean, cfg.theta1, cfg.theta2)
        value = loss.item()
        if not math.isfinite(value):
            raise NonFiniteLossError(it, value)
        loss.backward()
        if cfg.clip_grad_norm:
            clip_grad_norm([p for _, p in named], cfg.clip_grad_norm)
        adam_step(named, state, lr, cfg.beta1, cfg.beta2, cfg.eps)
        history.append((it, lr, value))
        if it % 50 == 0:
            log.info("iter %d lr %.3g loss %.6g", it, lr, value)
        if run_path is not None and cfg.checkpoint_every and (it + 1) % cfg.checkpoint_every == 0:
            ckpt_io.save(run_path / f"checkpoint_{it + 1:06d}.ckpt",
                         make_checkpoint(model, cfg, state, rng, history))

    final = make_checkpoint(model, cfg, state, rng, history)
    if run_path is not None:
        ckpt_io.save(run_path / "final.ckpt", final)
        write_loss_csv(run_path / "loss.csv", history)
    return TrainResult(history, final, state)


def smoothed(values, window: int = 50) -> np.ndarray:
    """Means over consecutive non-overlapping windows (last partial window kept)."""
    values = np.asarray(values, dtype=float)
    return np.array([values[i:i + window].mean() for i in range(0, len(values), window)])
