"""Explainable attention classifier over per-tweet and concept-mapping embeddings."""

from .classifier import (
    ClassifierParams,
    HanModel,
    Prediction,
    cross_entropy,
    forward,
    forward_user,
    init_classifier,
    init_model,
    load_model,
    predict_record,
    predict_user,
    save_model,
)
from .data import (
    Dataset,
    PaddedBatch,
    UserRecord,
    imdl_transform,
    load_dataset,
    load_users_text,
    pad_truncate,
    preprocess_tweet,
    save_dataset,
    save_users_text,
    split,
    synth_generate,
)
from .encoder import (
    AttentionTrace,
    HanEncoderState,
    HanLayerParams,
    attention_weights,
    encode,
    han_layer_forward,
    init_encoder,
    layer_param_count,
)
from .errors import EmptyUserError, HankitError
from .explain import ExplanationReport, RankedItem, attention_trace, build_report, emit_report, top_k
from .mcm import (
    ConceptMapping,
    Lexicon,
    MetaphorLabel,
    Taxonomy,
    Token,
    build_mapping,
    conceptualize,
    extract_user_mcms,
    identify_metaphors,
    knee_point,
    paraphrase,
)
from .tensor import Binding, Param, Tape, Tensor, finite_diff_check
from .training import (
    AdamState,
    HistoryRow,
    Metrics,
    TrainConfig,
    adam_step,
    count_params,
    evaluate,
    param_audit,
    train,
    write_history,
)

__version__ = "0.1.0"
