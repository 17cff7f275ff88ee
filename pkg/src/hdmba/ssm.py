"""Selective state-space scan.

Continuous parameters (A, D) are per inner channel; the step size delta and
the input/output maps B, C are projected from each token, so the recurrence

    h_t = exp(delta_t * A) * h_{t-1} + (delta_t * B_t) * u_t
    y_t = <C_t, h_t> + D * u_t

depends on content. The scan is a single pass over the sequence (linear in L),
vectorized over windows, channels and state.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import nn
from . import tensor as T
from .tensor import Parameter, Tensor


@dataclass(frozen=True)
class SsmConfig:
    d_state: int = 16
    expansion: int = 2
    dt_rank: int | None = None  # None -> ceil(d_inner / 16)
    dt_min: float = 1e-3
    dt_max: float = 1e-1
    conv_kernel: int = 4
    bidirectional: bool = False

    def resolved_dt_rank(self, d_inner: int) -> int:
        return self.dt_rank if self.dt_rank is not None else math.ceil(d_inner / 16)


def discretize(A: np.ndarray, B: np.ndarray, delta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Zero-order hold for A, Euler step for B.

    A: (D, N); B: (..., L, N); delta: (..., L, D).
    Returns Abar = exp(delta * A) and Bbar = delta * B, both (..., L, D, N).
    """
    A = np.asarray(A)
    B = np.asarray(B)
    delta = np.asarray(delta)
    if np.any(delta <= 0):   # NaN passes through to the non-finite loss check
        raise ValueError("discretize: delta must be strictly positive (check the softplus upstream)")
    if A.ndim != 2 or delta.shape[-1] != A.shape[0] or B.shape[-1] != A.shape[1] \
            or B.shape[:-1] != delta.shape[:-1]:
        raise T.ShapeError("discretize", A.shape, B.shape, delta.shape)
    Abar = np.exp(delta[..., None] * A)
    Bbar = delta[..., None] * B[..., None, :]
    return Abar, Bbar


def _run_recurrence(Abar: np.ndarray, Bu: np.ndarray, reverse: bool) -> np.ndarray:
    """h_t = Abar_t * h_{prev} + Bu_t over axis 1 of (batch, L, D, N) arrays."""
    length = Abar.shape[1]
    hs = np.empty_like(Bu)
    h = np.zeros_like(Bu[:, 0])
    steps = range(length - 1, -1, -1) if reverse else range(length)
    for t in steps:
        h = Abar[:, t] * h + Bu[:, t]
        hs[:, t] = h
    return hs


def selective_scan(u: Tensor, delta: Tensor, A: Tensor, B: Tensor, C: Tensor, D: Tensor,
                   reverse: bool = False) -> Tensor:
    """Differentiable selective scan.

    u, delta: (batch, L, D_inner); A: (D_inner, N); B, C: (batch, L, N);
    D: (D_inner,). ``reverse`` scans from the last token to the first.
    The hidden state starts at zero for every sequence in the batch.
    """
    if u.ndim != 3 or delta.shape != u.shape:
        raise T.ShapeError("selective_scan", u.shape, delta.shape)
    nb, length, d_inner = u.shape
    if length == 0:
        raise ValueError("selective_scan: empty sequence")
    n = A.shape[1]
    if A.shape != (d_inner, n) or B.shape != (nb, length, n) or C.shape != (nb, length, n) \
            or D.shape != (d_inner,):
        raise T.ShapeError("selective_scan", u.shape, A.shape, B.shape, C.shape, D.shape)

    ud, dd, Ad, Bd, Cd, Dd = u.data, delta.data, A.data, B.data, C.data, D.data
    Abar, Bbar = discretize(Ad, Bd, dd)
    Bu = Bbar * ud[..., None]
    hs = _run_recurrence(Abar, Bu, reverse)
    y = np.einsum("bldn,bln->bld", hs, Cd) + ud * Dd

    def backward(gy):
        gD = (gy * ud).sum(axis=(0, 1))
        gC = np.einsum("bld,bldn->bln", gy, hs)
        # adjoint recurrence runs opposite to the forward scan
        gh_direct = gy[..., None] * Cd[:, :, None, :]
        G = np.empty_like(hs)
        carry = np.zeros_like(hs[:, 0])
        steps = range(length) if reverse else range(length - 1, -1, -1)
        for t in steps:
            carry = gh_direct[:, t] + carry
            G[:, t] = carry
            carry = carry * Abar[:, t]
        h_prev = np.zeros_like(hs)
        if reverse:
            h_prev[:, :-1] = hs[:, 1:]
        else:
            h_prev[:, 1:] = hs[:, :-1]
        g_abar = G * h_prev * Abar          # d/d(delta*A) of exp
        g_delta = np.einsum("bldn,dn->bld", g_abar, Ad)
        GB = np.einsum("bldn,bln->bld", G, Bd)
        g_delta += GB * ud
        gA = np.einsum("bldn,bld->dn", g_abar, dd)
        gB = np.einsum("bldn,bld->bln", G, dd * ud)
        gu = gy * Dd + GB * dd
        return gu, g_delta, gA, gB, gC, gD

    return Tensor._make(y, (u, delta, A, B, C, D), backward, "selective_scan")


class SelectiveSSM(nn.Module):
    """Input-dependent SSM over (batch, L, d_inner) token sequences.

    A is stored as ``A_log`` with A = -exp(A_log), so A < 0 always. Initial
    values: A columns -1..-N per channel, D = 1, and the dt_proj bias set so
    softplus(bias) is log-uniform in [dt_min, dt_max].
    """

    def __init__(self, d_inner: int, cfg: SsmConfig, *, rng: np.random.Generator, dtype=None):
        super().__init__()
        dtype = dtype or T.get_default_dtype()
        self.d_inner = d_inner
        self.d_state = cfg.d_state
        self.dt_rank = cfg.resolved_dt_rank(d_inner)
        self.bidirectional = cfg.bidirectional

        self.x_proj = nn.Linear(d_inner, self.dt_rank + 2 * cfg.d_state, bias=False, rng=rng, dtype=dtype)
        self.dt_proj = nn.Linear(self.dt_rank, d_inner, bias=True, rng=rng, dtype=dtype)
        bound = self.dt_rank ** -0.5
        self.dt_proj.weight.data = rng.uniform(-bound, bound, (self.dt_rank, d_inner)).astype(dtype)
        dt = np.exp(rng.uniform(math.log(cfg.dt_min), math.log(cfg.dt_max), d_inner))
        dt = np.maximum(dt, 1e-4)
        self.dt_proj.bias.data = (dt + np.log(-np.expm1(-dt))).astype(dtype)  # softplus^-1
        a_init = np.tile(np.arange(1, cfg.d_state + 1, dtype=np.float64), (d_inner, 1))
        self.A_log = Parameter(np.log(a_init).astype(dtype))
        self.D = Parameter(np.ones(d_inner, dtype=dtype))

    def A(self) -> Tensor:
        return -T.exp(self.A_log)

    def project(self, u: Tensor) -> tuple[Tensor, Tensor, Tensor]:
        """Token-dependent (delta, B, C)."""
        proj = self.x_proj(u)
        r, n = self.dt_rank, self.d_state
        dt_seed = proj[..., :r]
        B = proj[..., r:r + n]
        C = proj[..., r + n:]
        delta = T.softplus(self.dt_proj(dt_seed))
        return delta, B, C

    def forward(self, u: Tensor) -> Tensor:
        delta, B, C = self.project(u)
        A = self.A()
        y = selective_scan(u, delta, A, B, C, self.D)
        if self.bidirectional:
            y = y + selective_scan(u, delta, A, B, C, self.D, reverse=True)
        return y
