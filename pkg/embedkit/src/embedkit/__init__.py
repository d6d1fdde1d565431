"""Sentence-embedding exporter feeding the attention classifier's dataset format."""

from .exporter import (
    DEFAULT_MODEL,
    ExportError,
    ExportJob,
    ExportReport,
    embed_texts,
    export,
    load_encoder,
)

__version__ = "0.1.0"
