"""CLI behavior: the export subcommand, summaries, warnings, and exit codes."""

from __future__ import annotations

from embedkit.cli import run
from hankit import load_dataset


def test_export_command(encoder_dir, users_path, tmp_path, capsys):
    out = tmp_path / "data.jsonl"
    code = run(
        ["export", "--in", str(users_path), "--out", str(out), "--model", str(encoder_dir), "--batch", "8"]
    )
    captured = capsys.readouterr()
    assert code == 0
    assert "embedded" in captured.out and "d=768" in captured.out
    assert "truncated" in captured.err
    assert load_dataset(out).d == 768


def test_missing_input_exits_one(encoder_dir, tmp_path, capsys):
    missing = tmp_path / "absent.jsonl"
    code = run(
        ["export", "--in", str(missing), "--out", str(tmp_path / "o.jsonl"), "--model", str(encoder_dir)]
    )
    captured = capsys.readouterr()
    assert code == 1
    assert "error:" in captured.err and "absent.jsonl" in captured.err


def test_bad_encoder_exits_one(users_path, tmp_path, capsys):
    code = run(
        ["export", "--in", str(users_path), "--out", str(tmp_path / "o.jsonl"), "--model", str(tmp_path / "nope")]
    )
    captured = capsys.readouterr()
    assert code == 1
    assert "error: cannot load encoder" in captured.err


def test_help_exits_zero(capsys):
    assert run(["export", "--help"]) == 0
    captured = capsys.readouterr()
    assert "--model" in captured.out and "bert-base-uncased" in captured.out


def test_usage_error_exits_two(capsys):
    assert run(["export", "--in", "x"]) == 2
    captured = capsys.readouterr()
    assert "--out" in captured.err


def test_no_command_exits_two(capsys):
    assert run([]) == 2
    capsys.readouterr()
