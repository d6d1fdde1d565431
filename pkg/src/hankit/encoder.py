"""Stacked attention encoder over a user's context items.

One layer scores every input row against a query with scaled dot products,
renews the query from the attention-weighted sum through a width-preserving
FNN (ReLU, then layer norm), and refreshes the keys row-wise through a
second FNN of the same shape. Stacking layers sharpens which rows the final
query attends to; the per-layer weight vectors double as the explanation
signal. Two independent instances encode the tweet branch and the concept
mapping branch.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import (
    Binding,
    DimensionError,
    Param,
    Tensor,
    dropout,
    layer_norm,
    linear,
    matvec,
    relu,
    scale,
    softmax_masked,
    vecmat,
)

LN_EPS = 1e-5
TWEET_BRANCH = "tweet"
MCM_BRANCH = "mcm"


@dataclass
class HanLayerParams:
    """Weights of one encoder layer: two d-to-d FNNs and their layer norms."""

    w_query: Param
    b_query: Param
    w_key: Param
    b_key: Param
    ln_query_gain: Param
    ln_query_bias: Param
    ln_key_gain: Param
    ln_key_bias: Param

    @property
    def width(self) -> int:
        return self.w_query.data.shape[0]

    def params(self) -> list[Param]:
        return [
            self.w_query,
            self.b_query,
            self.w_key,
            self.b_key,
            self.ln_query_gain,
            self.ln_query_bias,
            self.ln_key_gain,
            self.ln_key_bias,
        ]


@dataclass
class HanEncoderState:
    """A layer stack plus the trainable seed query v0."""

    layers: list[HanLayerParams]
    v0: Param
    d: int

    @property
    def num_layers(self) -> int:
        return len(self.layers)

    def params(self) -> list[Param]:
        out = [self.v0]
        for layer in self.layers:
            out.extend(layer.params())
        return out


@dataclass
class AttentionTrace:
    """Per-layer attention weights for one branch; masked slots hold exact 0."""

    branch: str
    mask: np.ndarray
    weights: list[np.ndarray]


def layer_param_count(d: int) -> int:
    """Trainable parameters in one encoder layer: 2(d^2 + d) + 4d."""
    return 2 * (d * d + d) + 4 * d


def init_encoder(
    num_layers: int,
    d: int,
    seed: int | np.random.SeedSequence,
    prefix: str = TWEET_BRANCH,
) -> HanEncoderState:
    """Seeded init: FNN weights uniform Glorot, biases 0, LN gain 1, v0 uniform(-0.1, 0.1)."""
    if num_layers < 1:
        raise ValueError(f"need at least one layer, got {num_layers}")
    if d < 1:
        raise ValueError(f"need positive width, got {d}")
    rng = np.random.default_rng(seed)
    bound = np.sqrt(6.0 / (2 * d))
    layers = []
    for i in range(num_layers):
        base = f"{prefix}.layer{i}"
        layers.append(
            HanLayerParams(
                w_query=Param(f"{base}.w_query", rng.uniform(-bound, bound, (d, d))),
                b_query=Param(f"{base}.b_query", np.zeros(d)),
                w_key=Param(f"{base}.w_key", rng.uniform(-bound, bound, (d, d))),
                b_key=Param(f"{base}.b_key", np.zeros(d)),
                ln_query_gain=Param(f"{base}.ln_query_gain", np.ones(d)),
                ln_query_bias=Param(f"{base}.ln_query_bias", np.zeros(d)),
                ln_key_gain=Param(f"{base}.ln_key_gain", np.ones(d)),
                ln_key_bias=Param(f"{base}.ln_key_bias", np.zeros(d)),
            )
        )
    v0 = Param(f"{prefix}.v0", rng.uniform(-0.1, 0.1, d))
    return HanEncoderState(layers=layers, v0=v0, d=d)


def attention_weights(q: Tensor, k: Tensor, mask) -> Tensor:
    """softmax(q . K^T / sqrt(d)) with masked rows forced to exact zero weight."""
    if q.ndim != 1 or k.ndim != 2:
        raise DimensionError(f"attention expects a query vector and key matrix, got {q.shape}, {k.shape}")
    if k.shape[1] != q.shape[0]:
        raise DimensionError(f"query width {q.shape[0]} does not match keys {k.shape}")
    scores = scale(matvec(k, q), 1.0 / np.sqrt(q.shape[0]))
    return softmax_masked(scores, mask)


def han_layer_forward(
    q: Tensor,
    k: Tensor,
    mask: np.ndarray,
    layer: HanLayerParams,
    binding: Binding,
    *,
    training: bool = False,
    dropout_rate: float = 0.2,
    rng: np.random.Generator | None = None,
) -> tuple[Tensor, Tensor, Tensor]:
    """One layer: attention, query renewal, row-wise key refresh.

    Returns (new query, refreshed keys, attention weights). Dropout touches
    only the outgoing query and key activations, and only in training mode.
    """
    w = attention_weights(q, k, mask)
    ctx = vecmat(w, k)
    q2 = layer_norm(
        relu(linear(ctx, binding[layer.w_query], binding[layer.b_query])),
        binding[layer.ln_query_gain],
        binding[layer.ln_query_bias],
        LN_EPS,
    )
    k2 = layer_norm(
        relu(linear(k, binding[layer.w_key], binding[layer.b_key])),
        binding[layer.ln_key_gain],
        binding[layer.ln_key_bias],
        LN_EPS,
    )
    if training and dropout_rate > 0.0:
        q2 = dropout(q2, dropout_rate, rng, training=True)
        k2 = dropout(k2, dropout_rate, rng, training=True)
    return q2, k2, w


def encode(
    k0,
    mask,
    state: HanEncoderState,
    binding: Binding,
    *,
    branch: str = TWEET_BRANCH,
    training: bool = False,
    dropout_rate: float = 0.2,
    rng: np.random.Generator | None = None,
) -> tuple[Tensor, AttentionTrace]:
    """Run the layer stack from the trainable seed query.

    ``k0`` is the (count, d) embedding matrix (a plain array or a Tensor);
    ``mask`` marks the real rows. Returns the final query vector and the
    trace of per-layer attention weights.
    """
    k = k0 if isinstance(k0, Tensor) else Tensor(k0)
    m = np.asarray(mask, dtype=bool)
    if k.ndim != 2 or k.shape[1] != state.d:
        raise DimensionError(f"expected a (count, {state.d}) key matrix, got {k.shape}")
    if m.shape != (k.shape[0],):
        raise DimensionError(f"mask shape {m.shape} does not match {k.shape[0]} rows")
    q = binding[state.v0]
    weights: list[np.ndarray] = []
    for layer in state.layers:
        q, k, w = han_layer_forward(
            q, k, m, layer, binding, training=training, dropout_rate=dropout_rate, rng=rng
        )
        weights.append(w.data.copy())
    return q, AttentionTrace(branch=branch, mask=m.copy(), weights=weights)
