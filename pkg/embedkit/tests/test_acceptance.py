"""Acceptance: the exported dataset round-trips into the classifier package
and the full training pipeline runs on it. One printed verdict line."""

from __future__ import annotations

import time

from conftest import USERS
from embedkit.cli import run
from hankit import TrainConfig, evaluate, load_dataset, split, train


def _report(capsys, ok: bool, line: str) -> None:
    with capsys.disabled():
        print(f"[{'PASS' if ok else 'FAIL'}] {line}", flush=True)
    assert ok, line


def test_exporter_round_trip(encoder_dir, users_path, tmp_path, capsys):
    start = time.monotonic()
    out = tmp_path / "exported.jsonl"
    code = run(
        ["export", "--in", str(users_path), "--out", str(out), "--model", str(encoder_dir), "--batch", "8"]
    )
    capsys.readouterr()
    assert code == 0

    dataset = load_dataset(out)
    schema_ok = (
        dataset.d == 768
        and len(dataset.users) == len(USERS)
        and all(
            u.tweet_emb.shape == (len(u.tweets), 768) and u.mcm_emb.shape == (len(u.mcms), 768)
            for u in dataset.users
        )
    )

    train_set, val_set, test_set = split(dataset, seed=0)
    config = TrainConfig(
        d=768,
        layers=2,
        batch_size=4,
        learning_rate=1e-4,
        weight_decay=1e-5,
        dropout=0.2,
        epochs=1,
        seed=0,
        cap=8,
    )
    model, history = train(train_set, val_set, config)
    metrics = evaluate(model, test_set)
    elapsed = time.monotonic() - start

    ok = schema_ok and len(history) > 0 and 0.0 <= metrics.accuracy <= 1.0
    _report(
        capsys,
        ok,
        f"exporter round-trip: 10-user fixture -> d=768 dataset loads, splits "
        f"{len(train_set.users)}/{len(val_set.users)}/{len(test_set.users)}, trains "
        f"({len(history)} steps) and evaluates in {elapsed:.1f}s",
    )
