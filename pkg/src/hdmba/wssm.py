"""Window selective scan: tile the feature map, scan each tile, untile.

Feature maps are channels-last, (N, H, W, C) or a single (H, W, C) image.
Windows are taken row-major over the window grid and tokens row-major inside
each window; sides not divisible by the window size are reflect-padded and the
padding is cropped again on reverse.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from . import tensor as T
from .ssm import SelectiveSSM, SsmConfig
from .tensor import Parameter, Tensor


@dataclass
class WindowBatch:
    windows: Tensor            # (N * gh * gw, m*m, C)
    grid: tuple[int, int]      # (gh, gw) windows per column / row
    m: int
    size: tuple[int, int]      # (H, W) before padding
    batch: int | None          # None when the input had no batch axis

    @property
    def count(self) -> int:
        return self.grid[0] * self.grid[1]


def window_partition(z: Tensor, m: int) -> WindowBatch:
    if m < 1:
        raise ValueError(f"window size must be >= 1, got {m}")
    batched = z.ndim == 4
    if not batched:
        if z.ndim != 3:
            raise T.ShapeError("window_partition", z.shape)
        z = z.reshape(1, *z.shape)
    n, h, w, c = z.shape
    ph, pw = (-h) % m, (-w) % m
    if ph or pw:
        z = T.pad(z, ((0, 0), (0, ph), (0, pw), (0, 0)), mode="reflect")
    gh, gw = (h + ph) // m, (w + pw) // m
    tiles = z.reshape(n, gh, m, gw, m, c).transpose(0, 1, 3, 2, 4, 5)
    windows = tiles.reshape(n * gh * gw, m * m, c)
    return WindowBatch(windows, (gh, gw), m, (h, w), n if batched else None)


def window_reverse(batch: WindowBatch, windows: Tensor | None = None) -> Tensor:
    """Inverse of :func:`window_partition`; ``windows`` overrides ``batch.windows``."""
    wins = batch.windows if windows is None else windows
    gh, gw = batch.grid
    m = batch.m
    n = 1 if batch.batch is None else batch.batch
    h, w = batch.size
    if wins.ndim != 3 or wins.shape[0] != n * gh * gw or wins.shape[1] != m * m \
            or gh * m < h or gw * m < w:
        raise T.ShapeError("window_reverse", wins.shape, (n * gh * gw, m * m), (h, w))
    c = wins.shape[2]
    z = wins.reshape(n, gh, gw, m, m, c).transpose(0, 1, 3, 2, 4, 5).reshape(n, gh * m, gw * m, c)
    if gh * m != h or gw * m != w:
        z = z[:, :h, :w, :]
    if batch.batch is None:
        z = z.reshape(h, w, c)
    return z


class MambaBlock(nn.Module):
    """Gated selective-scan block applied to (batch, L, C) token sequences.

    main = SSM(silu(dconv(in_main(rmsnorm(z)))))
    gate = silu(in_gate(rmsnorm(z)))
    out  = out_proj(main * gate)

    Ablation flags drop the SSM (identity), the depth-wise conv, or the gate
    branch; dropped pieces own no parameters.
    """

    def __init__(self, dim: int, cfg: SsmConfig, *, rng: np.random.Generator, dtype=None,
                 use_ssm: bool = True, use_dconv: bool = True, use_gate: bool = True):
        super().__init__()
        dtype = dtype or T.get_default_dtype()
        if cfg.expansion < 1:
            raise ValueError("expansion must be >= 1")
        self.dim = dim
        self.d_inner = cfg.expansion * dim
        self.use_ssm, self.use_dconv, self.use_gate = use_ssm, use_dconv, use_gate
        self.norm = nn.RMSNorm(dim, eps=1e-6, dtype=dtype)
        width = 2 * self.d_inner if use_gate else self.d_inner
        self.in_proj = nn.Linear(dim, width, bias=False, rng=rng, dtype=dtype)
        if use_dconv:
            k = cfg.conv_kernel
            self.conv_weight = Parameter(nn.uniform_fan_in(rng, (k, self.d_inner), k, dtype))
            self.conv_bias = Parameter(np.zeros(self.d_inner, dtype=dtype))
        if use_ssm:
            self.ssm = SelectiveSSM(self.d_inner, cfg, rng=rng, dtype=dtype)
        self.out_proj = nn.Linear(self.d_inner, dim, bias=False, rng=rng, dtype=dtype)

    def branches(self, z: Tensor) -> tuple[Tensor, Tensor | None]:
        if z.ndim != 3 or z.shape[-1] != self.dim:
            raise T.ShapeError("mamba_block", z.shape, (self.dim,))
        if z.shape[1] == 0:
            raise ValueError("mamba_block: empty sequence")
        x = self.in_proj(self.norm(z))
        if self.use_gate:
            main, gate = x[..., :self.d_inner], x[..., self.d_inner:]
        else:
            main, gate = x, None
        if self.use_dconv:
            main = T.depthwise_conv1d(main, self.conv_weight, self.conv_bias)
        main = T.silu(main)
        if self.use_ssm:
            main = self.ssm(main)
        if gate is not None:
            gate = T.silu(gate)
        return main, gate

    def forward(self, z: Tensor) -> Tensor:
        main, gate = self.branches(z)
        mixed = main * gate if gate is not None else main
        return self.out_proj(mixed)


class WSSM(nn.Module):
    """Partition into m×m windows, run a shared :class:`MambaBlock` on each, reverse."""

    def __init__(self, dim: int, window: int, cfg: SsmConfig, *, rng: np.random.Generator,
                 dtype=None, **flags):
        super().__init__()
        self.window = window
        self.mamba = MambaBlock(dim, cfg, rng=rng, dtype=dtype, **flags)

    def forward(self, z: Tensor) -> Tensor:
        batch = window_partition(z, self.window)
        return window_reverse(batch, self.mamba(batch.windows))


def wssm_forward(z: Tensor, block: MambaBlock, window: int) -> Tensor:
    batch = window_partition(z, window)
    return window_reverse(batch, block(batch.windows))
