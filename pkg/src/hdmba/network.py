"""HDMba dehazing network.

head conv -> I residual blocks (K Mamba layers + conv, block skip) -> add shallow
features -> two tail convs -> add hazy input. The last tail conv starts at zero,
so a freshly built model is exactly the identity map.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from . import nn
from . import tensor as T
from .ssm import SsmConfig
from .tensor import Tensor
from .wssm import WSSM

ABLATION_FLAGS = ("use_ssm", "use_dconv", "use_gate", "use_mlp")

# rows of the DML ablation table, in order
ABLATION_ROWS = {
    "mlp-only": dict(use_ssm=False, use_dconv=False, use_gate=False, use_mlp=True),
    "ssm": dict(use_ssm=True, use_dconv=False, use_gate=False, use_mlp=False),
    "ssm+dconv": dict(use_ssm=True, use_dconv=True, use_gate=False, use_mlp=False),
    "ssm+dconv+gate": dict(use_ssm=True, use_dconv=True, use_gate=True, use_mlp=False),
    "full": dict(use_ssm=True, use_dconv=True, use_gate=True, use_mlp=True),
}


@dataclass(frozen=True)
class ModelConfig:
    bands: int
    channels: int = 64
    rdm_count: int = 4
    dml_per_rdm: int = 4
    window: int = 8
    d_state: int = 16
    expansion: int = 2
    dt_rank: int | None = None
    conv_kernel: int = 4
    bidirectional: bool = False
    mlp_ratio: int = 2
    use_ssm: bool = True
    use_dconv: bool = True
    use_gate: bool = True
    use_mlp: bool = True
    tail_fusion: str = "add"
    theta1: float = 1.0
    theta2: float = 0.1
    dtype: str = "float32"
    seed: int = 0

    def __post_init__(self):
        for name in ("bands", "channels", "rdm_count", "dml_per_rdm", "window", "d_state",
                     "expansion", "conv_kernel", "mlp_ratio"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.dt_rank is not None and self.dt_rank < 1:
            raise ValueError("dt_rank must be >= 1")
        if self.theta1 < 0 or self.theta2 < 0:
            raise ValueError("loss weights must be non-negative")
        if self.tail_fusion not in ("add", "concat"):
            raise ValueError(f"tail_fusion must be 'add' or 'concat', got {self.tail_fusion!r}")
        if self.dtype not in ("float32", "float64"):
            raise ValueError(f"unsupported dtype {self.dtype!r}")

    @property
    def ssm(self) -> SsmConfig:
        return SsmConfig(d_state=self.d_state, expansion=self.expansion, dt_rank=self.dt_rank,
                         conv_kernel=self.conv_kernel, bidirectional=self.bidirectional)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)

    def replace(self, **changes) -> "ModelConfig":
        return dataclasses.replace(self, **changes)


class MLP(nn.Module):
    def __init__(self, dim: int, ratio: int, *, rng, dtype=None):
        super().__init__()
        self.fc1 = nn.Linear(dim, ratio * dim, rng=rng, dtype=dtype)
        self.fc2 = nn.Linear(ratio * dim, dim, rng=rng, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        return self.fc2(T.gelu(self.fc1(x)))


class DML(nn.Module):
    """F' = WSSM(LN(F)) + F;  out = MLP(LN(F')) + F'."""

    def __init__(self, cfg: ModelConfig, *, rng, dtype=None):
        super().__init__()
        c = cfg.channels
        self.norm1 = nn.LayerNorm(c, eps=1e-6, dtype=dtype)
        self.wssm = WSSM(c, cfg.window, cfg.ssm, rng=rng, dtype=dtype,
                         use_ssm=cfg.use_ssm, use_dconv=cfg.use_dconv, use_gate=cfg.use_gate)
        self.use_mlp = cfg.use_mlp
        if cfg.use_mlp:
            self.norm2 = nn.LayerNorm(c, eps=1e-6, dtype=dtype)
            self.mlp = MLP(c, cfg.mlp_ratio, rng=rng, dtype=dtype)

    def forward(self, f: Tensor) -> Tensor:
        f = self.wssm(self.norm1(f)) + f
        if self.use_mlp:
            f = self.mlp(self.norm2(f)) + f
        return f


class RDM(nn.Module):
    """K DMLs, a 3×3 conv, and a skip from the block input."""

    def __init__(self, cfg: ModelConfig, *, rng, dtype=None):
        super().__init__()
        self.dml = nn.ModuleList(DML(cfg, rng=rng, dtype=dtype) for _ in range(cfg.dml_per_rdm))
        self.conv = nn.Conv2d(cfg.channels, cfg.channels, 3, rng=rng, dtype=dtype)

    def forward(self, f_in: Tensor) -> Tensor:
        f = f_in
        for layer in self.dml:
            f = layer(f)
        return self.conv(f) + f_in


class HDMba(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.config = cfg
        dtype = np.dtype(cfg.dtype)
        rng = np.random.default_rng(cfg.seed)
        c, b = cfg.channels, cfg.bands
        self.head = nn.Conv2d(b, c, 3, rng=rng, dtype=dtype)
        self.rdm = nn.ModuleList(RDM(cfg, rng=rng, dtype=dtype) for _ in range(cfg.rdm_count))
        tail_in = 2 * c if cfg.tail_fusion == "concat" else c
        self.tail1 = nn.Conv2d(tail_in, c, 3, rng=rng, dtype=dtype)
        self.tail2 = nn.Conv2d(c, b, 3, rng=rng, dtype=dtype, zero_init=True)

    @property
    def dtype(self) -> np.dtype:
        return np.dtype(self.config.dtype)

    def features(self, x: Tensor) -> tuple[Tensor, Tensor]:
        """Shallow features F0 and deep features F_I."""
        f0 = self.head(x)
        f = f0
        for block in self.rdm:
            f = block(f)
        return f0, f

    def forward(self, x) -> Tensor:
        x = x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=self.dtype))
        single = x.ndim == 3
        if single:
            x = x.reshape(1, *x.shape)
        if x.ndim != 4 or x.shape[-1] != self.config.bands:
            raise T.ShapeError("hdmba_forward", x.shape, (self.config.bands,))
        f0, f = self.features(x)
        fused = f + f0 if self.config.tail_fusion == "add" else T.concat([f, f0], axis=-1)
        y = self.tail2(self.tail1(fused)) + x
        return y.reshape(*y.shape[1:]) if single else y


def build_model(cfg: ModelConfig) -> HDMba:
    return HDMba(cfg)


def dehaze(model: HDMba, cube: np.ndarray) -> np.ndarray:
    """Inference on one (H, W, B) array; returns an array of the model dtype."""
    with T.no_grad():
        y = model(Tensor(np.asarray(cube, dtype=model.dtype)))
    return y.data


def loss_fn(y: Tensor, target, theta1: float = 1.0, theta2: float = 0.1) -> Tensor:
    """theta1 * MSE + theta2 * mean absolute error against the clean reference."""
    target = target if isinstance(target, Tensor) else Tensor(np.asarray(target, dtype=y.dtype))
    if y.shape != target.shape:
        raise T.ShapeError("loss", y.shape, target.shape)
    r = y - target
    return theta1 * T.square(r).mean() + theta2 * T.absolute(r).mean()


def parameter_count(model: nn.Module) -> int:
    return int(sum(p.size for p in model.parameters() if p.trainable))


def parameter_report(model: nn.Module) -> dict[str, int]:
    """Trainable scalar counts grouped by top-level block (head, rdm.i, tail1, tail2)."""
    groups: dict[str, int] = {}
    for name, p in model.named_parameters():
        if not p.trainable:
            continue
        parts = name.split(".")
        key = ".".join(parts[:2]) if parts[0] == "rdm" else parts[0]
        groups[key] = groups.get(key, 0) + p.size
    return groups


def full_config(bands: int = 305, channels: int | None = None, **overrides) -> ModelConfig:
    """I=4, K=4, M=8 configuration; channels default to :data:`FULL_CHANNELS`."""
    return ModelConfig(bands=bands, channels=channels or FULL_CHANNELS, rdm_count=4,
                       dml_per_rdm=4, window=8, **overrides)


def calibrate_channels(target: float = 4.60e6, bands: int = 305, lo: int = 8, hi: int = 512,
                       **overrides) -> tuple[int, int]:
    """Smallest-error channel width for a target parameter count.

    Counts are strictly increasing in the width, so a bisection over built
    models finds the bracketing pair; returns (channels, count).
    """
    def count(c: int) -> int:
        cfg = ModelConfig(bands=bands, channels=c, rdm_count=4, dml_per_rdm=4, window=8, **overrides)
        return parameter_count(HDMba(cfg))

    while hi - lo > 1:
        mid = (lo + hi) // 2
        if count(mid) < target:
            lo = mid
        else:
            hi = mid
    c_lo, c_hi = count(lo), count(hi)
    return (lo, c_lo) if abs(c_lo - target) <= abs(c_hi - target) else (hi, c_hi)


# Result of calibrate_channels() for the default SSM settings, 305 bands.
FULL_CHANNELS = 131
