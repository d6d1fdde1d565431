"""Shared fixtures: a tiny local random-weight encoder (tests never reach
the model hub) and a balanced ten-user text fixture exercising duplicate
texts, an over-length text, and a user with no mappings."""

from __future__ import annotations

import os

os.environ.setdefault("HF_HUB_OFFLINE", "1")
os.environ.setdefault("TRANSFORMERS_OFFLINE", "1")
os.environ.setdefault("HF_HUB_DISABLE_PROGRESS_BARS", "1")
os.environ.setdefault("TOKENIZERS_PARALLELISM", "false")

import pytest
import torch
from transformers import BertConfig, BertModel, BertTokenizer

from hankit import save_users_text

WORDS = [
    "i", "feel", "like", "a", "burden", "today", "happy", "sad", "the",
    "sky", "is", "dark", "inside", "my", "head", "level", "importance",
    "interiority", "feeling", "ill", "_", "health", "night", "bad",
    "having", "'", "m", "it", "rains", "all", "week", "##s", "##ing",
]

LONG_TEXT = " ".join(["sky"] * 100)

USERS = [
    {
        "user_id": "user0",
        "label": 0,
        "tweets": ["the sky is dark", "i feel happy today"],
        "mcms": ["LEVEL IS IMPORTANCE"],
    },
    {
        "user_id": "user1",
        "label": 1,
        "tweets": ["i feel like a burden today", "it rains all week"],
        "mcms": ["IMPORTANCE IS INTERIORITY", "FEELING IS ILL_HEALTH"],
    },
    {
        "user_id": "user2",
        "label": 0,
        "tweets": ["i 'm having a happy week", "the sky today"],
        "mcms": ["LEVEL IS IMPORTANCE"],
    },
    {
        "user_id": "user3",
        "label": 1,
        "tweets": [LONG_TEXT, "i 'm having a bad night"],
        "mcms": ["FEELING IS ILL_HEALTH"],
    },
    {
        "user_id": "user4",
        "label": 0,
        "tweets": ["it rains inside my head", "happy today"],
        "mcms": [],
    },
    {
        "user_id": "user5",
        "label": 1,
        "tweets": ["i feel sad all week", "the sky is dark"],
        "mcms": ["IMPORTANCE IS INTERIORITY"],
    },
    {
        "user_id": "user6",
        "label": 0,
        "tweets": ["the week is happy", "a happy night"],
        "mcms": ["LEVEL IS IMPORTANCE"],
    },
    {
        "user_id": "user7",
        "label": 1,
        "tweets": ["my head feels ill", "a dark night inside"],
        "mcms": ["FEELING IS ILL_HEALTH", "IMPORTANCE IS INTERIORITY"],
    },
    {
        "user_id": "user8",
        "label": 0,
        "tweets": ["today the sky rains", "i feel like the sky"],
        "mcms": ["LEVEL IS IMPORTANCE"],
    },
    {
        "user_id": "user9",
        "label": 1,
        "tweets": ["a burden is a burden", "bad week inside my head"],
        "mcms": ["FEELING IS ILL_HEALTH"],
    },
]


@pytest.fixture(scope="session")
def encoder_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("encoder") / "tiny-bert"
    out.mkdir()
    vocab = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]", *WORDS]
    (out / "vocab.txt").write_text("\n".join(vocab) + "\n", encoding="utf-8")
    config = BertConfig(
        vocab_size=len(vocab),
        hidden_size=768,
        num_hidden_layers=2,
        num_attention_heads=4,
        intermediate_size=256,
        max_position_embeddings=64,
    )
    torch.manual_seed(0)
    BertModel(config).save_pretrained(out)
    tokenizer = BertTokenizer(vocab=str(out / "vocab.txt"), do_lower_case=True, model_max_length=64)
    tokenizer.save_pretrained(out)
    return out


@pytest.fixture(scope="session")
def users_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("users") / "users.jsonl"
    save_users_text(USERS, path)
    return path


@pytest.fixture(scope="session")
def exported(encoder_dir, users_path, tmp_path_factory):
    from embedkit import ExportJob, export

    path = tmp_path_factory.mktemp("exported") / "data.jsonl"
    report = export(ExportJob(str(users_path), str(path), model=str(encoder_dir), batch_size=8))
    return path, report
