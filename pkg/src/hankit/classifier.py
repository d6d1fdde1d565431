"""Branch fusion and prediction head, plus the assembled two-branch model.

The head concatenates the tweet and mapping summaries, passes them through
two width-preserving ReLU FNNs and a final projection to two logits, and
normalizes with softmax. The assembled model owns both branch encoders, the
head, and a trainable placeholder row used when a user has no mappings.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass

import numpy as np

from .encoder import (
    MCM_BRANCH,
    AttentionTrace,
    HanEncoderState,
    encode,
    init_encoder,
)
from .errors import EmptyUserError, HankitError
from .tensor import (
    Binding,
    DimensionError,
    Param,
    Tensor,
    as_row,
    concat,
    linear,
    relu,
    softmax_masked,
)
from .tensor import cross_entropy as _cross_entropy

MODEL_FORMAT = "hankit-model"
MODEL_VERSION = 1


class ModelFormatError(HankitError):
    """A model file failed validation."""


@dataclass
class ClassifierParams:
    """Three affine layers; widths w -> w -> w -> 2 where w is the fused width."""

    w1: Param
    b1: Param
    w2: Param
    b2: Param
    w3: Param
    b3: Param

    @property
    def in_width(self) -> int:
        return self.w1.data.shape[0]

    def params(self) -> list[Param]:
        return [self.w1, self.b1, self.w2, self.b2, self.w3, self.b3]


@dataclass
class Prediction:
    probs: np.ndarray
    label: int
    loss: float | None = None


def init_classifier(in_width: int, seed: int | np.random.SeedSequence) -> ClassifierParams:
    if in_width < 1:
        raise ValueError(f"need positive input width, got {in_width}")
    rng = np.random.default_rng(seed)

    def glorot(fan_in: int, fan_out: int) -> np.ndarray:
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-bound, bound, (fan_in, fan_out))

    w = in_width
    return ClassifierParams(
        w1=Param("clf.w1", glorot(w, w)),
        b1=Param("clf.b1", np.zeros(w)),
        w2=Param("clf.w2", glorot(w, w)),
        b2=Param("clf.b2", np.zeros(w)),
        w3=Param("clf.w3", glorot(w, 2)),
        b3=Param("clf.b3", np.zeros(2)),
    )


def forward(v_t: Tensor, v_c: Tensor | None, clf: ClassifierParams, binding: Binding) -> Tensor:
    """probs = softmax(FNN3(ReLU(FNN2(ReLU(FNN1(v_t (+) v_c))))))."""
    x = v_t if v_c is None else concat(v_t, v_c)
    if x.shape[0] != clf.in_width:
        raise DimensionError(f"fused width {x.shape[0]} does not match head width {clf.in_width}")
    h = relu(linear(x, binding[clf.w1], binding[clf.b1]))
    h = relu(linear(h, binding[clf.w2], binding[clf.b2]))
    logits = linear(h, binding[clf.w3], binding[clf.b3])
    return softmax_masked(logits, np.ones(2, dtype=bool))


def cross_entropy(probs: Tensor, y: int) -> Tensor:
    """Binary cross entropy -ln(probs[y]) with the probability clamped at 1e-12."""
    if y not in (0, 1):
        raise ValueError(f"label must be 0 or 1, got {y!r}")
    return _cross_entropy(probs, y)


@dataclass
class HanModel:
    """Both branch encoders, the fusion head, and the no-mapping placeholder."""

    d: int
    num_layers: int
    cap: int
    ablate_mcm: bool
    tweet_encoder: HanEncoderState
    mcm_encoder: HanEncoderState | None
    clf: ClassifierParams
    null_mcm: Param | None

    def parameters(self) -> list[Param]:
        out = list(self.tweet_encoder.params())
        if self.mcm_encoder is not None:
            out.extend(self.mcm_encoder.params())
        if self.null_mcm is not None:
            out.append(self.null_mcm)
        out.extend(self.clf.params())
        return out


def init_model(
    d: int,
    num_layers: int = 2,
    seed: int = 0,
    cap: int = 200,
    ablate_mcm: bool = False,
) -> HanModel:
    """Seeded init of the whole model; the same seed reproduces it bit for bit."""
    if cap < 1:
        raise ValueError(f"cap must be positive, got {cap}")
    seq_tweet, seq_mcm, seq_clf, seq_null = np.random.SeedSequence(seed).spawn(4)
    tweet_encoder = init_encoder(num_layers, d, seq_tweet, prefix="tweet")
    if ablate_mcm:
        mcm_encoder = None
        null_mcm = None
        in_width = d
    else:
        mcm_encoder = init_encoder(num_layers, d, seq_mcm, prefix="mcm")
        null_mcm = Param("null_mcm", np.random.default_rng(seq_null).uniform(-0.1, 0.1, d))
        in_width = 2 * d
    return HanModel(
        d=d,
        num_layers=num_layers,
        cap=cap,
        ablate_mcm=ablate_mcm,
        tweet_encoder=tweet_encoder,
        mcm_encoder=mcm_encoder,
        clf=init_classifier(in_width, seq_clf),
        null_mcm=null_mcm,
    )


def forward_user(
    model: HanModel,
    binding: Binding,
    tweet_emb,
    tweet_mask,
    mcm_emb,
    mcm_mask,
    *,
    training: bool = False,
    dropout_rate: float = 0.2,
    rng: np.random.Generator | None = None,
) -> tuple[Tensor, AttentionTrace, AttentionTrace | None]:
    """Both branch encoders plus the fusion head for one user.

    A user with zero unmasked mappings runs the MCM branch on the trainable
    placeholder row instead, so the head always sees both summaries (unless
    the branch is ablated away entirely).
    """
    t_mask = np.asarray(tweet_mask, dtype=bool)
    if not t_mask.any():
        raise EmptyUserError("user has no unmasked tweets")
    v_t, trace_t = encode(
        tweet_emb, t_mask, model.tweet_encoder, binding,
        branch="tweet", training=training, dropout_rate=dropout_rate, rng=rng,
    )
    if model.ablate_mcm:
        v_c, trace_c = None, None
    else:
        c_mask = np.asarray(mcm_mask, dtype=bool) if mcm_mask is not None else np.zeros(0, dtype=bool)
        if c_mask.any():
            k0, m = Tensor(mcm_emb), c_mask
        else:
            k0, m = as_row(binding[model.null_mcm]), np.ones(1, dtype=bool)
        v_c, trace_c = encode(
            k0, m, model.mcm_encoder, binding,
            branch=MCM_BRANCH, training=training, dropout_rate=dropout_rate, rng=rng,
        )
    probs = forward(v_t, v_c, model.clf, binding)
    return probs, trace_t, trace_c


def predict_user(
    model: HanModel,
    tweet_emb,
    tweet_mask=None,
    mcm_emb=None,
    mcm_mask=None,
    label: int | None = None,
) -> tuple[Prediction, AttentionTrace, AttentionTrace | None]:
    """Inference-mode prediction with attention traces. Deterministic: no dropout.

    Masks default to all-true; a missing mcm_emb means zero mappings. A tied
    softmax resolves to label 0.
    """
    tweet_emb = np.asarray(tweet_emb, dtype=np.float64)
    if tweet_mask is None:
        tweet_mask = np.ones(tweet_emb.shape[0], dtype=bool)
    if mcm_emb is None:
        mcm_emb = np.zeros((0, model.d))
    mcm_emb = np.asarray(mcm_emb, dtype=np.float64)
    if mcm_mask is None:
        mcm_mask = np.ones(mcm_emb.shape[0], dtype=bool)
    binding = Binding(model.parameters())
    probs_t, trace_t, trace_c = forward_user(
        model, binding, tweet_emb, tweet_mask, mcm_emb, mcm_mask, training=False
    )
    probs = probs_t.data.copy()
    predicted = 1 if probs[1] > probs[0] else 0
    loss = float(cross_entropy(probs_t, label).data) if label is not None else None
    return Prediction(probs=probs, label=predicted, loss=loss), trace_t, trace_c


def predict_record(model: HanModel, record) -> tuple[Prediction, AttentionTrace, AttentionTrace | None]:
    """Predict one dataset record, truncating both branches at the model cap."""
    return predict_user(
        model,
        record.tweet_emb[: model.cap],
        None,
        record.mcm_emb[: model.cap],
        None,
        label=record.label,
    )


def save_model(model: HanModel, path) -> None:
    """Write the model as deterministic JSON (params as base64 float64 LE)."""
    params = [
        {
            "name": p.name,
            "shape": list(p.data.shape),
            "data": base64.b64encode(np.ascontiguousarray(p.data, dtype="<f8").tobytes()).decode("ascii"),
        }
        for p in model.parameters()
    ]
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "d": model.d,
        "layers": model.num_layers,
        "cap": model.cap,
        "ablate_mcm": model.ablate_mcm,
        "params": params,
    }
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(doc, separators=(",", ":")) + "\n")


def load_model(path) -> HanModel:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ModelFormatError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != MODEL_FORMAT:
        raise ModelFormatError(f"{path}: missing or wrong format marker")
    if doc.get("version") != MODEL_VERSION:
        raise ModelFormatError(f"{path}: unsupported version {doc.get('version')!r}")
    try:
        model = init_model(
            int(doc["d"]),
            num_layers=int(doc["layers"]),
            cap=int(doc["cap"]),
            ablate_mcm=bool(doc["ablate_mcm"]),
        )
        stored = {entry["name"]: entry for entry in doc["params"]}
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"{path}: malformed model document: {exc}") from exc
    params = model.parameters()
    if set(stored) != {p.name for p in params}:
        raise ModelFormatError(f"{path}: parameter names do not match the declared architecture")
    for p in params:
        entry = stored[p.name]
        raw = base64.b64decode(entry["data"])
        arr = np.frombuffer(raw, dtype="<f8").astype(np.float64)
        if list(p.data.shape) != list(entry["shape"]) or arr.size != p.data.size:
            raise ModelFormatError(f"{path}: shape mismatch for parameter {p.name!r}")
        p.data[...] = arr.reshape(p.data.shape)
    return model
