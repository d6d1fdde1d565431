"""Shared fixtures: fixture file paths and straight-line reference
implementations used as independent oracles for the tensor-built forward
passes."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def lexicon_path() -> Path:
    return FIXTURES / "lexicon.tsv"


@pytest.fixture(scope="session")
def taxonomy_path() -> Path:
    return FIXTURES / "taxonomy.tsv"


def ref_layer_norm(x: np.ndarray, gain: np.ndarray, bias: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps) * gain + bias


def ref_softmax_masked(logits: np.ndarray, mask: np.ndarray) -> np.ndarray:
    z = logits[mask]
    e = np.exp(z - z.max())
    out = np.zeros_like(logits)
    out[mask] = e / e.sum()
    return out


def ref_encode(k0: np.ndarray, mask: np.ndarray, layer_arrays, v0: np.ndarray, eps: float = 1e-5):
    """Plain-numpy re-statement of the layer stack; no Tensor machinery."""
    q, keys = v0, k0
    per_layer = []
    for wq, bq, wk, bk, gq, oq, gk, ok in layer_arrays:
        w = ref_softmax_masked((keys @ q) / np.sqrt(len(q)), mask)
        q = ref_layer_norm(np.maximum(w @ keys @ wq + bq, 0.0), gq, oq, eps)
        keys = ref_layer_norm(np.maximum(keys @ wk + bk, 0.0), gk, ok, eps)
        per_layer.append(w)
    return q, per_layer


def layer_arrays(layer):
    """Unpack a HanLayerParams into the tuple ref_encode expects."""
    return (
        layer.w_query.data,
        layer.b_query.data,
        layer.w_key.data,
        layer.b_key.data,
        layer.ln_query_gain.data,
        layer.ln_query_bias.data,
        layer.ln_key_gain.data,
        layer.ln_key_bias.data,
    )


def ref_head(x: np.ndarray, clf) -> np.ndarray:
    h = np.maximum(x @ clf.w1.data + clf.b1.data, 0.0)
    h = np.maximum(h @ clf.w2.data + clf.b2.data, 0.0)
    logits = h @ clf.w3.data + clf.b3.data
    e = np.exp(logits - logits.max())
    return e / e.sum()


def ref_predict(model, tweet_emb: np.ndarray, mcm_emb: np.ndarray | None) -> np.ndarray:
    """Whole-user forward pass, straight numpy, mirroring the model contract."""
    v_t, _ = ref_encode(
        tweet_emb,
        np.ones(tweet_emb.shape[0], dtype=bool),
        [layer_arrays(l) for l in model.tweet_encoder.layers],
        model.tweet_encoder.v0.data,
    )
    if model.ablate_mcm:
        return ref_head(v_t, model.clf)
    if mcm_emb is None or mcm_emb.shape[0] == 0:
        mcm_emb = model.null_mcm.data.reshape(1, -1)
    v_c, _ = ref_encode(
        mcm_emb,
        np.ones(mcm_emb.shape[0], dtype=bool),
        [layer_arrays(l) for l in model.mcm_encoder.layers],
        model.mcm_encoder.v0.data,
    )
    return ref_head(np.concatenate([v_t, v_c]), model.clf)
