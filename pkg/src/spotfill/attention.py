"""Attention variants over point features.

Three mechanisms share the same scaled-dot-product core:

* vanilla_attention   -- all-pairs multi-head self-attention over N rows
* local_augment_attention -- each row queries only its S grouped neighbors
* Pdma                -- grouped multi-head attention with per-group widths
                         base_dim * scale and optional dense concatenation of
                         all previous group outputs

Channels split evenly across heads; the softmax normalizer is the per-head
key width d_s. No masking, dropout, or positional encoding anywhere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import (
    LinearLayer,
    ShapeError,
    Tensor,
    concat,
    matmul,
    mul,
    relu,
    reshape,
    softmax,
    transpose,
)


@dataclass
class AttentionWeights:
    """Bias-free q/k/v projections plus the head geometry."""

    w_q: LinearLayer
    w_k: LinearLayer
    w_v: LinearLayer
    heads: int
    d_s: float  # per-head key dimension, the softmax normalizer

    @classmethod
    def create(cls, rng: np.random.Generator, query_dim: int, kv_dim: int,
               channels: int, heads: int) -> "AttentionWeights":
        if channels % heads != 0:
            raise ShapeError(f"channels {channels} not divisible by heads {heads}")
        return cls(
            w_q=LinearLayer(rng, query_dim, channels, bias=False),
            w_k=LinearLayer(rng, kv_dim, channels, bias=False),
            w_v=LinearLayer(rng, kv_dim, channels, bias=False),
            heads=heads,
            d_s=float(channels // heads),
        )

    def named_parameters(self, prefix: str):
        yield from self.w_q.named_parameters(f"{prefix}.q")
        yield from self.w_k.named_parameters(f"{prefix}.k")
        yield from self.w_v.named_parameters(f"{prefix}.v")


def _split_heads(x: Tensor, heads: int) -> Tensor:
    """[N, C] -> [heads, N, C/heads]"""
    n, c = x.data.shape
    return transpose(reshape(x, (n, heads, c // heads)), (1, 0, 2))


def _merge_heads(x: Tensor) -> Tensor:
    """[heads, N, d] -> [N, heads*d]"""
    h, n, d = x.data.shape
    return reshape(transpose(x, (1, 0, 2)), (n, h * d))


def _swap_last(x: Tensor) -> Tensor:
    axes = tuple(range(x.data.ndim - 2)) + (x.data.ndim - 1, x.data.ndim - 2)
    return transpose(x, axes)


def attention_matrix(q: Tensor, k: Tensor, d_s: float) -> Tensor:
    """softmax(q kT / sqrt(d_s)) along the last axis."""
    scores = mul(matmul(q, _swap_last(k)), 1.0 / np.sqrt(d_s))
    return softmax(scores, axis=-1)


def vanilla_attention(f: Tensor, w: AttentionWeights,
                      return_weights: bool = False):
    """All-pairs self-attention: rows attend to every row.

    Per head: A = softmax(Q KT / sqrt(d_s)), output = A V; heads are
    channel-concatenated. Input [N, C_F] -> output [N, C].
    """
    q = _split_heads(w.w_q(f), w.heads)   # [H, N, d]
    k = _split_heads(w.w_k(f), w.heads)
    v = _split_heads(w.w_v(f), w.heads)
    a = attention_matrix(q, k, w.d_s)     # [H, N, N]
    out = _merge_heads(matmul(a, v))
    if return_weights:
        return out, a
    return out


def local_augment_attention(query_feats: Tensor, grouped_feats: Tensor,
                            w: AttentionWeights, return_weights: bool = False):
    """Neighborhood cross-attention: row i attends only to its S grouped rows.

    query_feats [N, C_q] makes one query per row; grouped_feats [N, S, C_g]
    supplies keys and values. Output [N, C].
    """
    if grouped_feats.data.ndim != 3:
        raise ShapeError(f"grouped features must be [N,S,C], got {grouped_feats.data.shape}")
    n, s, _ = grouped_feats.data.shape
    if s == 0:
        raise ShapeError("local attention needs at least one neighbor per row")
    if query_feats.data.shape[0] != n:
        raise ShapeError(
            f"query rows {query_feats.data.shape[0]} != grouped rows {n}")
    h = w.heads
    q = w.w_q(query_feats)                 # [N, C]
    k = w.w_k(grouped_feats)               # [N, S, C]
    v = w.w_v(grouped_feats)
    c = q.data.shape[-1]
    d = c // h
    q4 = transpose(reshape(q, (n, 1, h, d)), (0, 2, 1, 3))   # [N, H, 1, d]
    k4 = transpose(reshape(k, (n, s, h, d)), (0, 2, 1, 3))   # [N, H, S, d]
    v4 = transpose(reshape(v, (n, s, h, d)), (0, 2, 1, 3))
    a = attention_matrix(q4, k4, w.d_s)                      # [N, H, 1, S]
    out = matmul(a, v4)                                      # [N, H, 1, d]
    out = reshape(transpose(out, (0, 2, 1, 3)), (n, c))
    if return_weights:
        return out, a
    return out


@dataclass
class PdmaGroupConfig:
    """Group geometry: group n projects to base_dim * scale_factors[n] channels."""

    base_dim: int
    scale_factors: tuple[int, ...]
    heads_per_group: int

    def validate(self) -> None:
        if not self.scale_factors:
            raise ShapeError("pdma needs at least one group")
        if any(sc <= 0 for sc in self.scale_factors):
            raise ShapeError(f"scale factors must be positive, got {self.scale_factors}")

    def group_width(self, n: int) -> int:
        return self.base_dim * self.scale_factors[n]


class Pdma:
    """Dense multi-scale grouped attention.

    Group n runs heads_per_group vanilla-attention heads, each of width
    base_dim*sc_n, concatenates them and projects linearly back to
    base_dim*sc_n. With dense=True group n consumes the concatenation of the
    raw input and every previous group's output; otherwise only the previous
    group's output. All group outputs are concatenated and one MLP layer maps
    them to out_dim.
    """

    def __init__(self, rng: np.random.Generator, in_dim: int, out_dim: int,
                 cfg: PdmaGroupConfig, dense: bool = True):
        cfg.validate()
        self.cfg = cfg
        self.dense = dense
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.attn: list[AttentionWeights] = []
        self.merge: list[LinearLayer] = []
        feed = in_dim          # width of the input group n consumes
        seen = in_dim          # running dense concat width
        for n, sc in enumerate(cfg.scale_factors):
            width = cfg.base_dim * sc
            src = seen if dense else feed
            self.attn.append(AttentionWeights.create(
                rng, src, src, width * cfg.heads_per_group, cfg.heads_per_group))
            self.merge.append(LinearLayer(rng, width * cfg.heads_per_group, width))
            feed = width
            seen += width
        total = sum(cfg.base_dim * sc for sc in cfg.scale_factors)
        self.out = LinearLayer(rng, total, out_dim)

    @property
    def group_widths(self) -> tuple[int, ...]:
        return tuple(self.cfg.base_dim * sc for sc in self.cfg.scale_factors)

    def __call__(self, f0: Tensor) -> Tensor:
        if f0.data.shape[-1] != self.in_dim:
            raise ShapeError(f"pdma expects input width {self.in_dim}, got {f0.data.shape}")
        outputs: list[Tensor] = []
        prev = f0
        history = [f0]
        for n in range(len(self.cfg.scale_factors)):
            if self.dense:
                feed = history[0] if len(history) == 1 else concat(history, axis=-1)
            else:
                feed = prev
            try:
                att = vanilla_attention(feed, self.attn[n])
            except ShapeError as exc:
                raise ShapeError(f"pdma group {n}: {exc}") from exc
            fn = self.merge[n](att)
            outputs.append(fn)
            history.append(fn)
            prev = fn
        return relu(self.out(concat(outputs, axis=-1)))

    def named_parameters(self, prefix: str):
        for n, (aw, mg) in enumerate(zip(self.attn, self.merge)):
            yield from aw.named_parameters(f"{prefix}.g{n}.attn")
            yield from mg.named_parameters(f"{prefix}.g{n}.merge")
        yield from self.out.named_parameters(f"{prefix}.out")
